"""coalbm: Monte Carlo for coalescing Brownian motion on the line and circle.

Simulates systems of coalescing Brownian particles, extracts genealogy
branch lengths and the site frequency spectrum, and ships the exact
closed forms and statistical machinery used to validate the engine.
"""

from .rng import RngStream, replicate_streams
from .kernels import (
    StepWindow,
    gaussian_increment,
    bridge_crossing_prob,
    refine_crossing_time,
    pair_hit_survival,
    pair_hit_cdf,
)
from .engine import (
    LINE,
    CIRCLE,
    StopRule,
    SystemState,
    MergeEvent,
    EventLog,
    init_system,
    init_custom,
    step,
    run_until,
    coalescence_time,
    pair_times,
    subsystem,
    run_subsystem,
)
from .genealogy import (
    BranchLengthTable,
    SfsVector,
    branch_length_formula,
    branch_length_scan,
    truncated_branch_length,
    build_table,
    total_length,
    interior_total,
    sfs_sample,
    tree_polylines,
)
from .oracles import (
    ConeSpec,
    expected_two_sided_exit,
    expected_external_branch,
    expected_interior_branch,
    cone_exit_exponent,
    phi_transform,
)
from .harness import (
    McSummary,
    TailFit,
    summarize,
    run_replicates,
    ks_distance,
    ks_2sample,
    tail_fit,
    convergence_test,
    coupling_discrepancy,
)
from .config import SimConfig, parse_config, dump_config, config_hash

__version__ = "0.1.0"
