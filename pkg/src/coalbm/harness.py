"""Replicate orchestration and the statistics used to judge runs.

Replicates are embarrassingly parallel: replicate r always uses stream
id r, results are merged in stream-id order, so the outcome is
identical for any worker count.  Heavy-tailed quantities (edge branch
lengths have infinite mean) are summarized by medians and exceedance
fractions, not means; means carry a normal-approximation confidence
interval and an explicit dropped-replicate count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .engine import (CIRCLE, LINE, StopRule, init_system, run_subsystem,
                     run_until, subsystem)
from .genealogy import branch_length_formula
from .rng import RngStream

__all__ = [
    "McSummary",
    "TailFit",
    "summarize",
    "median_summary",
    "run_replicates",
    "ks_distance",
    "ks_2sample",
    "ks_2sample_critical",
    "tail_fit",
    "convergence_test",
    "binomial_ci_half",
    "CouplingResult",
    "coupling_discrepancy",
]


@dataclass(frozen=True)
class McSummary:
    """Replicate-mean summary with a 95% normal-approximation interval."""

    count: int
    mean: float
    variance: float
    ci_half: float
    dropped: int = 0

    def covers(self, target: float) -> bool:
        return abs(self.mean - target) <= self.ci_half


def summarize(samples, dropped: int = 0) -> McSummary:
    """Mean, sample variance and 95% CI half-width of a sample vector."""
    x = np.asarray(samples, dtype=float)
    x = x[np.isfinite(x)]
    r = x.size
    if r < 2:
        raise ValueError("need at least 2 finite samples")
    v = float(x.var(ddof=1))
    return McSummary(count=r, mean=float(x.mean()), variance=v,
                     ci_half=1.96 * math.sqrt(v / r), dropped=dropped)


def median_summary(samples) -> tuple[float, float]:
    """Median and a distribution-free 95% half-width from order statistics.

    Valid for heavy-tailed samples where the normal-approximation CI of
    the mean is meaningless.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    x = x[np.isfinite(x)]
    r = x.size
    if r < 16:
        raise ValueError("need at least 16 finite samples")
    med = float(np.median(x))
    half = 0.98 * math.sqrt(r)
    lo = max(int(math.floor(r / 2 - half)), 0)
    hi = min(int(math.ceil(r / 2 + half)), r - 1)
    return med, 0.5 * float(x[hi] - x[lo])


# -- replicate orchestration --------------------------------------------------


def _chunk_worker(args):
    fn, seed, ids = args
    return [(r, fn(seed, r)) for r in ids]


def run_replicates(task, master_seed: int, count: int, workers: int = 1):
    """Run ``task(master_seed, stream_id)`` for stream ids 0..count-1.

    Results come back in stream-id order regardless of scheduling, so
    any worker count produces the identical record list.  ``task`` must
    be picklable (a module-level function) when workers > 1.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    if workers == 1:
        return [task(master_seed, r) for r in range(count)]
    per = max(1, math.ceil(count / (workers * 8)))
    chunks = [(task, master_seed, list(range(lo, min(lo + per, count))))
              for lo in range(0, count, per)]
    out: dict[int, object] = {}
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for pairs in pool.map(_chunk_worker, chunks):
            for r, rec in pairs:
                out[r] = rec
    return [out[r] for r in range(count)]


def default_workers() -> int:
    return max(1, os.cpu_count() or 1)


# -- goodness of fit -----------------------------------------------------------


def ks_distance(samples, cdf, censor_at: float | None = None) -> float:
    """One-sample Kolmogorov-Smirnov distance against a callable CDF.

    Censored samples (inf, or values beyond ``censor_at``) stay in the
    denominator; the supremum is taken over the observed range, which
    is the right comparison when the tail beyond the horizon is
    unobservable.
    """
    x = np.asarray(samples, dtype=float)
    n = x.size
    if n < 1:
        raise ValueError("need at least one sample")
    fin = np.sort(x[np.isfinite(x)])
    if censor_at is not None:
        fin = fin[fin <= censor_at]
    if fin.size == 0:
        raise ValueError("no finite samples to compare")
    f = np.asarray([cdf(t) for t in fin], dtype=float)
    i = np.arange(1, fin.size + 1)
    return float(max(np.max(np.abs(i / n - f)), np.max(np.abs((i - 1) / n - f))))


def ks_2sample(a, b) -> float:
    """Two-sample KS distance (sup norm between empirical CDFs)."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if a.size < 1 or b.size < 1:
        raise ValueError("both samples must be nonempty")
    allv = np.concatenate([a, b])
    ca = np.searchsorted(a, allv, side="right") / a.size
    cb = np.searchsorted(b, allv, side="right") / b.size
    return float(np.max(np.abs(ca - cb)))


def ks_2sample_critical(na: int, nb: int, alpha: float) -> float:
    """Critical value of the two-sample KS distance at level alpha."""
    c = math.sqrt(-0.5 * math.log(alpha / 2.0))
    return c * math.sqrt((na + nb) / (na * nb))


# -- tail exponents -------------------------------------------------------------


@dataclass(frozen=True)
class TailFit:
    """Least-squares slope of log-survival against log-t."""

    exponent: float
    stderr: float
    t_lo: float
    t_hi: float
    count: int


def _tail_slope(x_sorted: np.ndarray, n_total: int, window) -> tuple[float, float, float, int]:
    q_lo, q_hi = window
    lo = int(math.floor(q_lo * n_total))
    hi = int(math.ceil(q_hi * n_total))
    sel = x_sorted[lo:hi]
    if sel.size < 8:
        raise ValueError("fit window too small")
    if not np.all(np.isfinite(sel)):
        raise ValueError("censored samples inside the fit window; "
                         "raise the horizon or lower q_hi")
    if sel[0] <= 0 or sel[-1] <= sel[0]:
        raise ValueError("degenerate sample for a tail fit")
    surv = 1.0 - (np.arange(lo, hi) + 1) / n_total
    keep = surv > 0
    slope = np.polyfit(np.log(sel[keep]), np.log(surv[keep]), 1)[0]
    return -float(slope), float(sel[0]), float(sel[-1]), int(keep.sum())


def tail_fit(samples, window: tuple[float, float] = (0.9, 0.999),
             min_samples: int = 1000, splits: int = 8) -> TailFit:
    """Fit the tail exponent of a positive sample over a quantile window.

    The empirical survival function is evaluated at the order statistics
    between the two quantiles and regressed in log-log coordinates; the
    exponent is the negative slope.  The standard error comes from
    refitting disjoint subsamples (a plain regression error would be far
    too optimistic: neighbouring survival points are strongly
    dependent).  Censored samples (inf) count in the denominator and
    must lie beyond the window.
    """
    q_lo, q_hi = window
    if not (0.5 <= q_lo < q_hi < 1.0):
        raise ValueError(f"need 0.5 <= q_lo < q_hi < 1, got {window}")
    x = np.asarray(samples, dtype=float)
    n = x.size
    if n < min_samples:
        raise ValueError(f"need at least {min_samples} samples, got {n}")
    exponent, t_lo, t_hi, count = _tail_slope(np.sort(x), n, window)
    parts = []
    for k in range(splits):
        sub = x[k::splits]
        parts.append(_tail_slope(np.sort(sub), sub.size, window)[0])
    se = float(np.std(parts, ddof=1)) / math.sqrt(splits)
    return TailFit(exponent=exponent, stderr=se, t_lo=t_lo, t_hi=t_hi,
                   count=count)


# -- convergence in probability --------------------------------------------------


def binomial_ci_half(p_hat: float, n: int) -> float:
    return 1.96 * math.sqrt(max(p_hat * (1.0 - p_hat), 1e-12) / n)


def convergence_test(samples_by_n: dict[int, np.ndarray], eps: float):
    """Exceedance fractions P(|X - 1| > eps) per n, with binomial CIs.

    The inputs are samples of n*L_{n,m}; convergence in probability
    means these fractions fall to zero along the n grid.
    """
    if not (eps > 0):
        raise ValueError("eps must be positive")
    out = {}
    for n, samples in sorted(samples_by_n.items()):
        x = np.asarray(samples, dtype=float)
        if x.size == 0:
            raise ValueError(f"empty sample for n={n}")
        frac = float(np.mean(np.abs(x - 1.0) > eps))
        out[n] = (frac, binomial_ci_half(frac, x.size))
    return out


def monotone_decreasing_within_ci(fractions: dict[int, tuple[float, float]]) -> bool:
    """No consecutive increase beyond joint CI noise, and a net decrease."""
    ns = sorted(fractions)
    for a, b in zip(ns, ns[1:]):
        fa, ha = fractions[a]
        fb, hb = fractions[b]
        if fb - fa > math.hypot(ha, hb):
            return False
    return fractions[ns[-1]][0] < fractions[ns[0]][0]


# -- common-random-number coupling ------------------------------------------------


@dataclass(frozen=True)
class CouplingResult:
    """Disagreement frequency between coupled runs, with binomial CI."""

    n: int
    center: int
    m: int
    epsilon: float
    comparison: str
    count: int
    disagreements: int
    undetermined: int

    @property
    def frequency(self) -> float:
        return self.disagreements / self.count

    @property
    def ci_half(self) -> float:
        return binomial_ci_half(self.frequency, self.count)


def _coupled_lengths(n, center, epsilon, m, topology, dt, t_max, seed, r):
    """Branch length at the center from a full run and a subsystem run."""
    stream_full = RngStream(seed, r)
    stream_sub = RngStream(seed, r)
    stop = StopRule.entry_resolved(center, m)
    state = init_system(n, topology)
    log_full = run_until(state, dt, stream_full, stop, t_max,
                         adaptive=False, keyed=True)
    idx = subsystem(n, center, epsilon, topology)
    log_sub = run_subsystem(n, idx, topology, dt, stream_sub, stop, t_max,
                            adaptive=False, keyed=True)
    return (branch_length_formula(log_full, center, m),
            branch_length_formula(log_sub, center, m))


def coupling_discrepancy(n: int, center: int, epsilon: float, m: int,
                         count: int, master_seed: int,
                         topology: str = LINE, dt_scale: float = 1e-3,
                         t_max: float | None = None,
                         workers: int = 1) -> CouplingResult:
    """How often the neighbourhood subsystem disagrees with the full system.

    Both runs share per-particle increments and per-gap decisions
    (common random numbers) on an identical fixed grid, so any
    difference in the center's branch length is structural: an outside
    particle reached the tracked neighbourhood.  Replicates where either
    run left the length undetermined by t_max are dropped and counted.
    """
    if topology == CIRCLE:
        guard = n ** (1.0 / 3.0 + epsilon)
        if not (guard < center < n - guard):
            raise ValueError(f"center {center} too close to the seam for a "
                             f"circle comparison at n={n}")
    dt = dt_scale / (n * n)
    if t_max is None:
        t_max = 64.0 / (n * n)
    tol = 2.0 * dt  # refinement resolution
    args = (n, center, epsilon, m, topology, dt, t_max)

    def task(seed, r):
        return _coupled_lengths(*args, seed, r)

    records = [task(master_seed, r) for r in range(count)] if workers == 1 \
        else run_replicates(_CoupledTask(args), master_seed, count, workers)
    disagree = 0
    undet = 0
    for (vf, cf), (vs, cs) in records:
        if cf or cs:
            undet += 1
        elif abs(vf - vs) > tol:
            disagree += 1
    return CouplingResult(n=n, center=center, m=m, epsilon=epsilon,
                          comparison=f"full-vs-subsystem/{topology}",
                          count=count - undet, disagreements=disagree,
                          undetermined=undet)


class _CoupledTask:
    """Picklable wrapper so coupling replicates can run in worker processes."""

    def __init__(self, args):
        self.args = args

    def __call__(self, seed, r):
        return _coupled_lengths(*self.args, seed, r)


def line_circle_discrepancy(n: int, center: int, epsilon: float, m: int,
                            count: int, master_seed: int,
                            dt_scale: float = 1e-3,
                            t_max: float | None = None) -> CouplingResult:
    """Subsystem branch length on the line versus on the circle.

    The same particle set, the same increments: for interior centers the
    neighbourhood does not feel the curvature, so the lengths agree
    unless a wrap event interferes.
    """
    guard = n ** (1.0 / 3.0 + epsilon)
    if not (guard < center < n - guard):
        raise ValueError(f"center {center} too close to the seam at n={n}")
    dt = dt_scale / (n * n)
    if t_max is None:
        t_max = 64.0 / (n * n)
    tol = 2.0 * dt
    stop = StopRule.entry_resolved(center, m)
    idx = subsystem(n, center, epsilon, LINE)
    disagree = undet = 0
    for r in range(count):
        log_l = run_subsystem(n, idx, LINE, dt, RngStream(master_seed, r),
                              stop, t_max, adaptive=False, keyed=True)
        log_c = run_subsystem(n, idx, CIRCLE, dt, RngStream(master_seed, r),
                              stop, t_max, adaptive=False, keyed=True)
        vl, cl = branch_length_formula(log_l, center, m)
        vc, cc = branch_length_formula(log_c, center, m)
        if cl or cc:
            undet += 1
        elif abs(vl - vc) > tol:
            disagree += 1
    return CouplingResult(n=n, center=center, m=m, epsilon=epsilon,
                          comparison="line-vs-circle/subsystem",
                          count=count - undet, disagreements=disagree,
                          undetermined=undet)
