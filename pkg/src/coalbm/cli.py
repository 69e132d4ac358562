"""Command-line frontend.

Subcommands: simulate, validate, sweep, pairtime, tripletime, tree.
Flags override values from an optional ``--config`` file.  Output files
embed the hash of the producing config; rerunning an identical config
produces byte-identical files.  The default output directory comes from
the COALBM_OUT environment variable, falling back to the working
directory.

Exit codes: 0 success, 1 validation failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from .config import SimConfig, config_hash, dump_config, parse_config
from .engine import StopRule, init_system, run_until
from .genealogy import build_table, sfs_sample, total_length, tree_polylines
from .harness import (convergence_test, ks_distance, run_replicates,
                      summarize, tail_fit)
from .kernels import pair_hit_survival
from .rng import RngStream
from .samplers import pair_meeting_samples, triple_meeting_samples
from .serialize import sfs_to_csv, table_to_csv
from .validate import run_suite

_FLOATFMT = repr


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coalbm",
                                description="Coalescing Brownian motion Monte Carlo")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", type=Path, help="key=value config file")
        sp.add_argument("--n", type=int)
        sp.add_argument("--topology", choices=("line", "circle"))
        sp.add_argument("--m-max", type=int, dest="m_max")
        sp.add_argument("--dt", type=float, help="absolute step size")
        sp.add_argument("--dt-scaled", type=float, dest="dt_scale",
                        help="step = value / n^2")
        sp.add_argument("--t-max", type=float, dest="t_max")
        sp.add_argument("--nu", type=float)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--replicates", type=int)
        sp.add_argument("--workers", type=int)
        sp.add_argument("--epsilon", type=float)
        sp.add_argument("--out", type=Path, help="output directory")

    sim = sub.add_parser("simulate", help="engine replicates, tables, SFS")
    common(sim)

    val = sub.add_parser("validate", help="run the validation suite")
    val.add_argument("--level", choices=("quick", "full"), default="quick")
    val.add_argument("--only", nargs="*", help="criterion name substrings")
    val.add_argument("--out", type=Path)

    sw = sub.add_parser("sweep", help="law-of-large-numbers n sweep")
    common(sw)
    sw.add_argument("--grid", type=int, nargs="+", default=[50, 100, 200, 400])
    sw.add_argument("--eps", type=float, default=0.3)

    pt = sub.add_parser("pairtime", help="pair meeting times vs exact law")
    common(pt)
    pt.add_argument("--d", type=float, default=0.1, help="initial separation")

    tt = sub.add_parser("tripletime", help="triple meeting times and tail fit")
    common(tt)
    tt.add_argument("--m", type=int, default=1, help="second spacing in units of 1/n")

    tr = sub.add_parser("tree", help="genealogy polylines for drawing")
    common(tr)

    return p


def _config_from_args(args) -> SimConfig:
    cfg = SimConfig()
    if getattr(args, "config", None):
        cfg = parse_config(Path(args.config).read_text())
    over = {}
    for key in ("n", "topology", "m_max", "t_max", "nu", "seed",
                "replicates", "workers", "epsilon"):
        v = getattr(args, key, None)
        if v is not None:
            over[key] = v
    if getattr(args, "dt", None) is not None:
        over["dt"] = args.dt
        over["dt_scaled"] = False
    if getattr(args, "dt_scale", None) is not None:
        over["dt"] = args.dt_scale
        over["dt_scaled"] = True
    return cfg.override(**over)


def _out_dir(args, cfg: SimConfig) -> Path:
    if getattr(args, "out", None):
        d = Path(args.out)
    elif cfg.out_dir:
        d = Path(cfg.out_dir)
    else:
        d = Path(os.environ.get("COALBM_OUT", "."))
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write(path: Path, text: str) -> None:
    path.write_text(text)
    print(f"wrote {path}")


def _echo_header(cfg: SimConfig) -> str:
    h = config_hash(cfg)
    return f"# config_hash={h}\n" + "".join(
        f"# {line}\n" for line in dump_config(cfg).splitlines())


def cmd_simulate(args) -> int:
    cfg = _config_from_args(args)
    out = _out_dir(args, cfg)
    h = config_hash(cfg)
    records = run_replicates(_SimulateTask(cfg), cfg.seed, cfg.replicates,
                             workers=cfg.workers)
    table_rows = []
    sfs_rows = []
    totals = {m: [] for m in range(1, cfg.m_max + 1)}
    censored_runs = 0
    for censored, trows, srows, tvals in records:
        censored_runs += censored
        table_rows.extend(trows)
        sfs_rows.extend(srows)
        for m, v in tvals:
            totals[m].append(v)

    cols = ["replicate", "i"]
    for m in range(1, cfg.m_max + 1):
        cols += [f"L_m{m}", f"censored_m{m}"]
    _write(out / f"branch_lengths_{h}.csv",
           _echo_header(cfg) + ",".join(cols) + "\n" + "\n".join(table_rows) + "\n")
    _write(out / f"sfs_{h}.csv",
           _echo_header(cfg) + "replicate,m,count,censored\n" +
           "\n".join(sfs_rows) + "\n")
    lines = [f"replicates={cfg.replicates}", f"censored_runs={censored_runs}"]
    for m in range(1, cfg.m_max + 1):
        x = np.array(totals[m])
        if x.size:
            lines.append(f"median_nL_m{m}={_FLOATFMT(float(np.median(x)))}")
            lines.append(f"kept_m{m}={x.size}")
    _write(out / f"summary_{h}.txt", _echo_header(cfg) + "\n".join(lines) + "\n")
    return 0


def cmd_validate(args) -> int:
    lines = []
    results = run_suite(args.level, names=args.only,
                        report=lambda s: (print(s), lines.append(s)))
    if args.out:
        d = Path(args.out)
        d.mkdir(parents=True, exist_ok=True)
        (d / f"validation_{args.level}.txt").write_text("\n".join(lines) + "\n")
    return 0 if all(r.passed for r in results) else 1


def cmd_sweep(args) -> int:
    cfg = _config_from_args(args)
    out = _out_dir(args, cfg)
    h = config_hash(cfg)
    rows = ["n,fraction_outside,ci_half,median,kept,dropped"]
    samples = {}
    dropped = {}
    for n in args.grid:
        vals = []
        drop = 0
        for r in range(cfg.replicates):
            state = init_system(n, cfg.topology)
            log = run_until(state, cfg.dt / n**2 if cfg.dt_scaled else cfg.dt,
                            RngStream(cfg.seed, r),
                            StopRule.all_blocks_larger_than(1), cfg.t_max,
                            adaptive=cfg.adaptive, growth=cfg.growth)
            table = build_table(log, 1)
            v, c = total_length(table, 1)
            if c or log.censored:
                drop += 1
            else:
                vals.append(n * v)
        samples[n] = np.array(vals)
        dropped[n] = drop
    fracs = convergence_test(samples, args.eps)
    for n in args.grid:
        f, ci = fracs[n]
        rows.append(f"{n},{_FLOATFMT(f)},{_FLOATFMT(ci)},"
                    f"{_FLOATFMT(float(np.median(samples[n])))},"
                    f"{samples[n].size},{dropped[n]}")
    _write(out / f"sweep_{h}.csv", _echo_header(cfg) + "\n".join(rows) + "\n")
    print("\n".join(rows))
    return 0


def cmd_pairtime(args) -> int:
    cfg = _config_from_args(args)
    out = _out_dir(args, cfg)
    h = config_hash(cfg)
    T = pair_meeting_samples(args.d, cfg.replicates, seed=cfg.seed,
                             dt0=1e-6, growth=0.02, t_max=cfg.t_max)
    ks = ks_distance(T, lambda t: 1.0 - pair_hit_survival(args.d, t))
    body = "\n".join(_FLOATFMT(float(t)) for t in T)
    _write(out / f"pairtime_{h}.csv",
           _echo_header(cfg) + f"# d={_FLOATFMT(args.d)}\nmeeting_time\n" + body + "\n")
    print(f"KS distance vs exact survival: {ks:.5f} "
          f"(censored {int(np.isinf(T).sum())} of {cfg.replicates})")
    _write(out / f"pairtime_summary_{h}.txt",
           _echo_header(cfg) + f"ks={_FLOATFMT(ks)}\n")
    return 0


def cmd_tripletime(args) -> int:
    cfg = _config_from_args(args)
    out = _out_dir(args, cfg)
    h = config_hash(cfg)
    n, m = cfg.n, args.m
    T = triple_meeting_samples(0.0, 1.0 / n, (1.0 + m) / n, cfg.replicates,
                               seed=cfg.seed, dt0=1e-7, growth=0.02,
                               t_max=cfg.t_max)
    fit = tail_fit(T) if cfg.replicates >= 10_000 else None
    fin = T[np.isfinite(T)]
    s = summarize(fin)
    body = "\n".join(_FLOATFMT(float(t)) for t in T)
    _write(out / f"tripletime_{h}.csv",
           _echo_header(cfg) + "meeting_time\n" + body + "\n")
    lines = [f"mean={_FLOATFMT(s.mean)}", f"ci_half={_FLOATFMT(s.ci_half)}",
             f"expected={_FLOATFMT(m / n**2)}"]
    if fit:
        lines += [f"tail_exponent={_FLOATFMT(fit.exponent)}",
                  f"tail_stderr={_FLOATFMT(fit.stderr)}"]
    print("; ".join(lines))
    _write(out / f"tripletime_summary_{h}.txt",
           _echo_header(cfg) + "\n".join(lines) + "\n")
    return 0


def cmd_tree(args) -> int:
    cfg = _config_from_args(args)
    out = _out_dir(args, cfg)
    h = config_hash(cfg)
    state = init_system(cfg.n, cfg.topology)
    log = run_until(state, cfg.dt_effective, RngStream(cfg.seed, 0),
                    StopRule.single_block(), cfg.t_max, adaptive=cfg.adaptive,
                    growth=cfg.growth, sample_every=cfg.sample_every or 100)
    lines = [f"# polylines={len(tree_polylines(log))}"]
    for pl in tree_polylines(log):
        lo, hi = pl["block"]
        pts = " ".join(f"{_FLOATFMT(float(p))}:{_FLOATFMT(float(t))}"
                       for t, p in zip(pl["times"], pl["positions"]))
        lines.append(f"block {lo}-{hi} {pts}")
    _write(out / f"tree_{h}.txt", _echo_header(cfg) + "\n".join(lines) + "\n")
    return 0


class _SimulateTask:
    """One simulate replicate; picklable so worker pools can run it."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg

    def __call__(self, seed: int, r: int):
        cfg = self.cfg
        state = init_system(cfg.n, cfg.topology)
        log = run_until(state, cfg.dt_effective, RngStream(seed, r),
                        cfg.stop_rule(), cfg.t_max, adaptive=cfg.adaptive,
                        growth=cfg.growth,
                        tolerance_divisor=cfg.tolerance_divisor,
                        sample_every=cfg.sample_every or None)
        table = build_table(log, cfg.m_max)
        trows = []
        for s, p in enumerate(table.particles):
            row = [str(r), str(int(p))]
            for m in range(1, cfg.m_max + 1):
                row.append(_FLOATFMT(float(table.values[s, m - 1])))
                row.append(str(int(table.censored[s, m - 1])))
            trows.append(",".join(row))
        vector = sfs_sample(table, cfg.nu, RngStream(seed + 1, r))
        srows = []
        tvals = []
        for m in range(1, cfg.m_max + 1):
            srows.append(f"{r},{m},{int(vector.counts[m - 1])},"
                         f"{int(vector.censored[m - 1])}")
            v, c = total_length(table, m)
            if not c:
                tvals.append((m, cfg.n * v))
        return (int(log.censored), trows, srows, tvals)


_COMMANDS = {
    "simulate": cmd_simulate,
    "validate": cmd_validate,
    "sweep": cmd_sweep,
    "pairtime": cmd_pairtime,
    "tripletime": cmd_tripletime,
    "tree": cmd_tree,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
