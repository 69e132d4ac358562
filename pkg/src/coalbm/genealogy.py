"""Branch lengths, the mutation overlay, and genealogical tree data.

The length of the part of branch i supporting m leaves is the time for
which {i, ..., i+m-1} is a block of the partition.  It is computed two
independent ways: a closed-form combination of pairwise coalescence
times (`branch_length_formula`) and a direct scan of block lifetimes in
the event log (`branch_length_scan`).  The two agree exactly on every
realization, which is one of the engine's acceptance checks.

Censoring: a length whose defining events were not all observed before
the horizon is returned as a lower bound with a censored flag, never
silently truncated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .engine import CIRCLE, LINE, EventLog
from .rng import RngStream

__all__ = [
    "BranchLength",
    "BranchLengthTable",
    "SfsVector",
    "branch_length_formula",
    "branch_length_scan",
    "truncated_branch_length",
    "build_table",
    "total_length",
    "interior_total",
    "sfs_sample",
    "tree_polylines",
]

BranchLength = tuple[float, bool]  # (length or lower bound, censored)


# -- pairwise coalescence helpers -------------------------------------------


class _TauView:
    """Pairwise coalescence times of a log in slot coordinates."""

    def __init__(self, log: EventLog):
        self.log = log
        self.k = log.particles.size
        self.pt = log.pair_time_array()
        self.cyclic = log.topology == CIRCLE and self.k == log.n
        self.horizon = log.final_clock

    def adjacent(self, s: int) -> float:
        """Coalescence time of slots (s, s+1); wraps only on the full circle."""
        if self.cyclic:
            return float(self.pt[s % self.k])
        if 0 <= s < self.k - 1:
            return float(self.pt[s])
        return math.inf

    def window(self, s: int, m: int) -> float:
        """Coalescence time of slots s and s+m-1 (identity 0 when m == 1)."""
        if m == 1:
            return 0.0
        if self.cyclic:
            idx = np.arange(s, s + m - 1) % self.k
            inner = float(self.pt[idx].max())
            rest = np.setdiff1d(np.arange(self.k), idx)
            outer = float(self.pt[rest].max()) if rest.size else math.inf
            return min(inner, outer)
        if s < 0 or s + m - 1 >= self.k:
            return math.inf
        return float(self.pt[s: s + m - 1].max())


def _formula_terms(view: _TauView, s: int, m: int) -> tuple[float, float]:
    """(inner birth time, flanking death time) for the block at slot s."""
    k = view.k
    inner = view.window(s, m)
    if view.cyclic:
        flank = min(view.adjacent(s - 1), view.adjacent(s + m - 1))
        return inner, flank
    # Linear boundary cases: a missing flank never closes.
    left = view.adjacent(s - 1) if s > 0 else math.inf
    right = view.adjacent(s + m - 1) if s + m - 1 < k - 1 else math.inf
    return inner, min(left, right)


def _positive_part(inner: float, flank: float, horizon: float) -> BranchLength:
    """(flank - inner)^+ with censoring across the observation horizon."""
    if math.isfinite(flank):
        if math.isinf(inner):
            return 0.0, False  # inner > horizon >= flank: provably zero
        return max(flank - inner, 0.0), False
    if math.isinf(inner):
        return 0.0, True  # block never formed; might still, after the horizon
    return max(horizon - inner, 0.0), True  # alive at the horizon: lower bound


def _slot_of(log: EventLog) -> dict[int, int]:
    return {int(p): s for s, p in enumerate(log.particles)}


def branch_length_formula(log: EventLog, i: int, m: int) -> BranchLength:
    """Length of the part of branch i supporting m leaves, from pair times.

    Linear case: zero for i >= n-m+2; at the boundaries the single
    existing flank applies.  Circular case: the same expression with
    indices mod n.  Returns (value, censored).
    """
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    slot = _slot_of(log)
    if i not in slot:
        raise ValueError(f"particle {i} not in this system")
    view = _TauView(log)
    k = view.k
    if m > k:
        raise ValueError(f"m={m} exceeds system size {k}")
    s = slot[i]
    if not view.cyclic and s + m - 1 >= k:
        return 0.0, False  # the only candidate block would stick out
    inner, flank = _formula_terms(view, s, m)
    return _positive_part(inner, flank, view.horizon)


def truncated_branch_length(log: EventLog, i: int, m: int, cutoff: float) -> BranchLength:
    """Branch length with the flanking minimum capped at ``cutoff``.

    The cap tames the heavy tail of the flanking meeting time; with an
    infinite cutoff this reduces to branch_length_formula.
    """
    if not (cutoff >= 0):
        raise ValueError(f"cutoff must be nonnegative, got {cutoff}")
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    slot = _slot_of(log)
    if i not in slot:
        raise ValueError(f"particle {i} not in this system")
    view = _TauView(log)
    s = slot[i]
    if not view.cyclic and s + m - 1 >= view.k:
        return 0.0, False
    inner, flank = _formula_terms(view, s, m)
    if math.isinf(flank):
        # The unobserved flank exceeds the horizon, so the cap binds
        # whenever it is inside the observed window.
        if cutoff <= view.horizon:
            flank = cutoff
    else:
        flank = min(flank, cutoff)
    return _positive_part(inner, flank, view.horizon)


# -- scan: block lifetimes straight from the event log -----------------------


def _replay_lifetimes(log: EventLog):
    """(lifetimes, alive) in slot coordinates.

    ``lifetimes`` maps a slot range (lo, hi) to its (birth, death);
    ``alive`` maps currently alive ranges to their birth time.
    """
    slot = _slot_of(log)
    alive = {(s, s): 0.0 for s in range(log.particles.size)}
    lifetimes: dict[tuple[int, int], tuple[float, float]] = {}
    for ev in log.events:
        lkey = (slot[ev.left_block[0]], slot[ev.left_block[1]])
        rkey = (slot[ev.right_block[0]], slot[ev.right_block[1]])
        t = ev.time
        lifetimes[lkey] = (alive.pop(lkey), t)
        lifetimes[rkey] = (alive.pop(rkey), t)
        alive[(lkey[0], rkey[1])] = t
    return lifetimes, alive


def branch_length_scan(log: EventLog, i: int, m: int) -> BranchLength:
    """Branch length measured as the lifetime of the block {i..i+m-1}.

    Mathematically equal to branch_length_formula on every realization;
    computed independently by replaying the merge history.
    """
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    slot = _slot_of(log)
    if i not in slot:
        raise ValueError(f"particle {i} not in this system")
    k = log.particles.size
    if m > k:
        raise ValueError(f"m={m} exceeds system size {k}")
    cyclic = log.topology == CIRCLE and k == log.n
    s = slot[i]
    if cyclic and m == k:
        # The root block of the circle: it matches min(A) = i only for
        # the smallest particle, and any rotation of its key is the
        # same set.
        if i != int(log.particles.min()):
            return 0.0, False
        lifetimes, alive = _replay_lifetimes(log)
        for akey, birth in alive.items():
            if len(_range_slots(akey, k)) == k:
                return log.final_clock - birth, True
        return 0.0, True
    hi = s + m - 1
    if hi >= k:
        if not cyclic:
            return 0.0, False
        hi -= k  # wrapped range on the full circle
    key = (s, hi)
    lifetimes, alive = _replay_lifetimes(log)
    if key in lifetimes:
        birth, death = lifetimes[key]
        return death - birth, False
    if key in alive:
        return log.final_clock - alive[key], True  # still alive: lower bound
    if _can_still_form(key, alive, k, cyclic):
        return 0.0, True
    return 0.0, False


def _range_slots(key, k):
    lo, hi = key
    return list(range(lo, hi + 1)) if lo <= hi else \
        list(range(lo, k)) + list(range(0, hi + 1))


def _can_still_form(key, alive, k, cyclic) -> bool:
    """Whether the slot range could still become a block after the horizon."""
    want = set(_range_slots(key, k))
    covered = set()
    for akey in alive:
        members = set(_range_slots(akey, k))
        if members & want:
            if not members <= want:
                return False  # some block straddles the range boundary
            covered |= members
    return covered == want


# -- tables, totals, mutation overlay ----------------------------------------


@dataclass
class BranchLengthTable:
    """Branch lengths L[i][m] for one replicate, with censoring flags."""

    n: int
    m_max: int
    topology: str
    particles: np.ndarray
    values: np.ndarray    # shape (k, m_max)
    censored: np.ndarray  # shape (k, m_max), bool
    final_clock: float

    def length(self, i: int, m: int) -> BranchLength:
        s = int(np.nonzero(self.particles == i)[0][0])
        return float(self.values[s, m - 1]), bool(self.censored[s, m - 1])


def build_table(log: EventLog, m_max: int) -> BranchLengthTable:
    """Evaluate the branch-length formula for every (i, m <= m_max)."""
    k = log.particles.size
    if not (1 <= m_max < k):
        raise ValueError(f"need 1 <= m_max < {k}, got {m_max}")
    values = np.zeros((k, m_max))
    flags = np.zeros((k, m_max), dtype=bool)
    view = _TauView(log)
    for s in range(k):
        for m in range(1, m_max + 1):
            if not view.cyclic and s + m - 1 >= k:
                continue
            inner, flank = _formula_terms(view, s, m)
            v, c = _positive_part(inner, flank, view.horizon)
            values[s, m - 1] = v
            flags[s, m - 1] = c
    return BranchLengthTable(
        n=log.n, m_max=m_max, topology=log.topology,
        particles=log.particles.copy(), values=values, censored=flags,
        final_clock=log.final_clock,
    )


def total_length(table: BranchLengthTable, m: int) -> BranchLength:
    """Total length of branches supporting m leaves (sums the table column)."""
    if not (1 <= m <= table.m_max):
        raise ValueError(f"m out of range: {m}")
    col = table.values[:, m - 1]
    return float(col.sum()), bool(table.censored[:, m - 1].any())


def interior_total(table: BranchLengthTable, m: int) -> BranchLength:
    """Sum over interior indices 2..n-m (linear systems only).

    The full total has infinite expectation because of the edge
    branches; the interior sum has mean (n-m)/n**2.
    """
    if table.topology != LINE:
        raise ValueError("interior_total is defined for the linear case")
    if not (1 <= m <= table.m_max):
        raise ValueError(f"m out of range: {m}")
    mask = (table.particles >= 2) & (table.particles <= table.n - m)
    col = table.values[mask, m - 1]
    return float(col.sum()), bool(table.censored[mask, m - 1].any())


@dataclass
class SfsVector:
    """Mutation counts by frequency class for one replicate."""

    nu: float
    counts: np.ndarray    # M[m] at index m-1
    censored: np.ndarray  # bool per class

    @property
    def m_max(self) -> int:
        return self.counts.size


def sfs_sample(table: BranchLengthTable, nu: float, stream: RngStream) -> SfsVector:
    """Poisson mutation overlay: M[m] ~ Poisson(nu * L_{n,m}) given the table.

    Counts for censored classes are drawn from the lower-bound lengths
    and flagged.  Mutations are independent across classes given the
    lengths.
    """
    if nu < 0:
        raise ValueError(f"nu must be nonnegative, got {nu}")
    totals = np.empty(table.m_max)
    flags = np.empty(table.m_max, dtype=bool)
    for m in range(1, table.m_max + 1):
        totals[m - 1], flags[m - 1] = total_length(table, m)
    counts = stream.poisson(nu * totals) if nu > 0 else np.zeros(table.m_max, dtype=np.int64)
    return SfsVector(nu=nu, counts=np.asarray(counts, dtype=np.int64), censored=flags)


# -- drawing data -------------------------------------------------------------


def tree_polylines(log: EventLog):
    """Per-block polylines (time, position) for drawing the genealogy.

    Requires the run to have recorded position samples.  Children share
    their endpoint with the merge point that created the parent block.
    Returns a list of dicts with keys 'block', 'times', 'positions'.
    """
    if log.samples is None:
        raise RuntimeError("position sampling was disabled for this run; "
                           "rerun with sample_every set")
    slot = _slot_of(log)
    k = log.particles.size
    meetings = {t: (rep, pos) for t, rep, pos in (log.meetings or [])}

    # block registry: key -> [birth, death, rep, birth_pos, death_pos]
    init_pos = {int(r): float(p) for r, p in zip(*_initial_state(log))}
    blocks: dict[tuple[int, int], list] = {
        (s, s): [0.0, log.final_clock, int(log.particles[s]),
                 init_pos[int(log.particles[s])], None]
        for s in range(k)
    }
    for ev in log.events:
        lkey = (slot[ev.left_block[0]], slot[ev.left_block[1]])
        rkey = (slot[ev.right_block[0]], slot[ev.right_block[1]])
        rep, pos = meetings.get(ev.time, (None, None))
        for ckey in (lkey, rkey):
            blocks[ckey][1] = ev.time
            blocks[ckey][4] = pos
        nrep = min(blocks[lkey][2], blocks[rkey][2])
        blocks[(lkey[0], rkey[1])] = [ev.time, log.final_clock, nrep, pos, None]

    polylines = []
    for key, (birth, death, rep, bpos, dpos) in blocks.items():
        times = [birth]
        positions = [bpos]
        for t, reps, pos in log.samples:
            if birth < t < death:
                hit = np.nonzero(reps == rep)[0]
                if hit.size:
                    times.append(t)
                    positions.append(float(pos[hit[0]]))
        times.append(death)
        positions.append(dpos if dpos is not None else positions[-1])
        lo, hi = key
        prange = (int(log.particles[lo]), int(log.particles[hi]))
        polylines.append({"block": prange, "times": np.array(times),
                          "positions": np.array(positions, dtype=float)})
    return polylines


def _initial_state(log: EventLog):
    t0, reps, pos = log.samples[0]
    return reps, pos
