"""Text serialization for logs, tables, spectra, and summaries.

All formats are line oriented and versioned by their first comment
line.  Floats are written with Python's shortest round-trip repr, so a
parse of a dump reproduces bit-identical values and reruns with the
same config produce byte-identical files.

Event log (one merge per line after the header):

    #coalbm eventlog v1
    n=8
    topology=line
    ...
    events=7
    0.0011482198505,5,5,6,6        # time,left_lo,left_hi,right_lo,right_hi

Branch-length tables and SFS vectors are CSV with a versioned comment
header; summaries are flat key=value text embedding the config echo.
"""

from __future__ import annotations

import io
import math

import numpy as np

from .engine import EventLog, MergeEvent
from .genealogy import BranchLengthTable, SfsVector

__all__ = [
    "dump_eventlog",
    "load_eventlog",
    "table_to_csv",
    "table_from_csv",
    "sfs_to_csv",
    "sfs_from_csv",
    "table_to_text",
    "sfs_to_text",
]

_EVENTLOG_MAGIC = "#coalbm eventlog v1"
_TABLE_MAGIC = "#coalbm branch-lengths v1"
_SFS_MAGIC = "#coalbm sfs v1"


def _fmt(x: float) -> str:
    return repr(float(x))


def dump_eventlog(log: EventLog) -> str:
    out = io.StringIO()
    w = out.write
    w(_EVENTLOG_MAGIC + "\n")
    w(f"n={log.n}\n")
    w(f"topology={log.topology}\n")
    w("particles=" + ",".join(str(int(p)) for p in log.particles) + "\n")
    w(f"dt={_fmt(log.dt)}\n")
    w(f"tolerance_divisor={_fmt(log.tolerance_divisor)}\n")
    w(f"adaptive={int(log.adaptive)}\n")
    w(f"master_seed={log.master_seed}\n")
    w(f"stream_id={log.stream_id}\n")
    w(f"censored={int(log.censored)}\n")
    w(f"final_clock={_fmt(log.final_clock)}\n")
    w(f"events={len(log.events)}\n")
    for ev in log.events:
        w(f"{_fmt(ev.time)},{ev.left_block[0]},{ev.left_block[1]},"
          f"{ev.right_block[0]},{ev.right_block[1]}\n")
    return out.getvalue()


def load_eventlog(text: str) -> EventLog:
    lines = text.splitlines()
    if not lines or lines[0] != _EVENTLOG_MAGIC:
        raise ValueError("not a coalbm event log")
    head = {}
    k = 1
    while "=" in lines[k]:
        key, _, val = lines[k].partition("=")
        head[key] = val
        k += 1
        if key == "events":
            break
    count = int(head["events"])
    events = []
    for row in lines[k:k + count]:
        t, a, b, c, d = row.split(",")
        events.append(MergeEvent(float(t), (int(a), int(b)), (int(c), int(d)),
                                 refined=True))
    return EventLog(
        n=int(head["n"]),
        topology=head["topology"],
        particles=np.array([int(p) for p in head["particles"].split(",")],
                           dtype=np.int64),
        events=events,
        final_clock=float(head["final_clock"]),
        censored=bool(int(head["censored"])),
        dt=float(head["dt"]),
        tolerance_divisor=float(head["tolerance_divisor"]),
        adaptive=bool(int(head["adaptive"])),
        master_seed=int(head["master_seed"]),
        stream_id=int(head["stream_id"]),
    )


def table_to_csv(table: BranchLengthTable, config_hash: str = "") -> str:
    out = io.StringIO()
    out.write(_TABLE_MAGIC + "\n")
    out.write(f"#n={table.n} m_max={table.m_max} topology={table.topology} "
              f"final_clock={_fmt(table.final_clock)} config_hash={config_hash}\n")
    cols = ["i"]
    for m in range(1, table.m_max + 1):
        cols += [f"L_m{m}", f"censored_m{m}"]
    out.write(",".join(cols) + "\n")
    for s, p in enumerate(table.particles):
        row = [str(int(p))]
        for m in range(1, table.m_max + 1):
            row.append(_fmt(table.values[s, m - 1]))
            row.append(str(int(table.censored[s, m - 1])))
        out.write(",".join(row) + "\n")
    return out.getvalue()


def table_from_csv(text: str) -> BranchLengthTable:
    lines = [ln for ln in text.splitlines() if ln]
    if lines[0] != _TABLE_MAGIC:
        raise ValueError("not a coalbm branch-length table")
    meta = dict(item.split("=", 1) for item in lines[1][1:].split())
    m_max = int(meta["m_max"])
    rows = [ln.split(",") for ln in lines[3:]]
    particles = np.array([int(r[0]) for r in rows], dtype=np.int64)
    values = np.array([[float(r[1 + 2 * (m - 1)]) for m in range(1, m_max + 1)]
                       for r in rows])
    flags = np.array([[bool(int(r[2 + 2 * (m - 1)])) for m in range(1, m_max + 1)]
                      for r in rows])
    return BranchLengthTable(
        n=int(meta["n"]), m_max=m_max, topology=meta["topology"],
        particles=particles, values=values, censored=flags,
        final_clock=float(meta["final_clock"]),
    )


def sfs_to_csv(sfs: SfsVector, config_hash: str = "") -> str:
    out = io.StringIO()
    out.write(_SFS_MAGIC + "\n")
    out.write(f"#nu={_fmt(sfs.nu)} config_hash={config_hash}\n")
    out.write("m,count,censored\n")
    for m in range(1, sfs.m_max + 1):
        out.write(f"{m},{int(sfs.counts[m - 1])},{int(sfs.censored[m - 1])}\n")
    return out.getvalue()


def sfs_from_csv(text: str) -> SfsVector:
    lines = [ln for ln in text.splitlines() if ln]
    if lines[0] != _SFS_MAGIC:
        raise ValueError("not a coalbm sfs vector")
    meta = dict(item.split("=", 1) for item in lines[1][1:].split())
    rows = [ln.split(",") for ln in lines[3:]]
    counts = np.array([int(r[1]) for r in rows], dtype=np.int64)
    flags = np.array([bool(int(r[2])) for r in rows])
    return SfsVector(nu=float(meta["nu"]), counts=counts, censored=flags)


def table_to_text(table: BranchLengthTable) -> str:
    """Flat structured-text mirror of the table fields."""
    out = io.StringIO()
    out.write("branch-length-table\n")
    out.write(f"n: {table.n}\nm_max: {table.m_max}\ntopology: {table.topology}\n")
    out.write(f"final_clock: {_fmt(table.final_clock)}\n")
    for s, p in enumerate(table.particles):
        vals = " ".join(
            _fmt(table.values[s, m - 1]) + ("*" if table.censored[s, m - 1] else "")
            for m in range(1, table.m_max + 1))
        out.write(f"i={int(p)}: {vals}\n")
    out.write("(* marks censored lower bounds)\n")
    return out.getvalue()


def sfs_to_text(sfs: SfsVector) -> str:
    out = io.StringIO()
    out.write("site-frequency-spectrum\n")
    out.write(f"nu: {_fmt(sfs.nu)}\n")
    for m in range(1, sfs.m_max + 1):
        star = "*" if sfs.censored[m - 1] else ""
        out.write(f"M[{m}]: {int(sfs.counts[m - 1])}{star}\n")
    return out.getvalue()
