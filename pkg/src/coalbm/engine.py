"""Coalescing Brownian motion on the line and circle.

Particles start at i/n (line) or at angle i/n on a circle of unit
circumference, move as independent Brownian motions, and merge forever
on first meeting.  Blocks of the induced interval partition are
contiguous index ranges; each block is carried by the path of its
smallest-index particle (the representative).

Crossing detection is grid-based with an exact Brownian-bridge
correction per gap, followed by bisection refinement of the crossing
time.  Detected merges are applied in refined-time order, and the
adjacency whose driving path changed is re-examined inside the
remainder of the step, so near-simultaneous merges cascade correctly.

Time steps can optionally grow as min_gap**2 once that exceeds the
configured floor.  Per-gap crossing laws are exact at any step size
(the bridge correction conditions on exact endpoint values); only
cross-gap interactions within a single step carry discretization error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kernels import _refine_rel
from .rng import RngStream

__all__ = [
    "LINE",
    "CIRCLE",
    "StopRule",
    "SystemState",
    "MergeEvent",
    "EventLog",
    "EngineNoise",
    "init_system",
    "init_custom",
    "step",
    "run_until",
    "coalescence_time",
    "pair_times",
    "subsystem",
    "run_subsystem",
]

LINE = "line"
CIRCLE = "circle"

# Bridge exponents above this are treated as "cannot cross": e^-40 < 5e-18,
# invisible to a 53-bit uniform over realistic step counts.
_EXP_CUTOFF = 40.0


def _check_topology(topology: str) -> str:
    if topology not in (LINE, CIRCLE):
        raise ValueError(f"topology must be '{LINE}' or '{CIRCLE}', got {topology!r}")
    return topology


@dataclass(frozen=True)
class StopRule:
    """When run_until may stop before the time horizon.

    ``kind`` is one of ``"single_block"``, ``"min_block_size"`` (stop once
    every block has more than ``m`` members) or ``"horizon"`` (run to
    t_max only).  t_max is always enforced as a backstop by run_until.
    """

    kind: str
    m: int = 0
    center: int = 0

    @staticmethod
    def single_block() -> "StopRule":
        return StopRule("single_block")

    @staticmethod
    def all_blocks_larger_than(m: int) -> "StopRule":
        if m < 1:
            raise ValueError("block size threshold must be >= 1")
        return StopRule("min_block_size", m)

    @staticmethod
    def horizon_only() -> "StopRule":
        return StopRule("horizon")

    @staticmethod
    def entry_resolved(center: int, m: int) -> "StopRule":
        """Stop once the branch length of ``center`` for ``m`` leaves is determined.

        That happens as soon as either flanking pair of the candidate
        block has coalesced (the value is then either fixed or provably
        zero).  Cheaper than a global block-size rule when only one
        table entry matters, e.g. in coupling comparisons.
        """
        if m < 1:
            raise ValueError("m must be >= 1")
        return StopRule("entry_resolved", m, center)

    def satisfied(self, state: "SystemState") -> bool:
        if self.kind == "single_block":
            return state.block_count == 1
        if self.kind == "min_block_size":
            return state.block_count == 1 or state.min_block_size() > self.m
        if self.kind == "entry_resolved":
            return state.block_count == 1 or _entry_resolved(state, self.center, self.m)
        return False


@dataclass
class MergeEvent:
    """Two adjacent blocks merged at ``time``.

    Block ranges are inclusive (lo, hi) pairs of original particle
    indices; on the circle a range with lo > hi wraps through n.
    """

    time: float
    left_block: tuple[int, int]
    right_block: tuple[int, int]
    refined: bool

    @property
    def pair(self) -> tuple[int, int]:
        """The adjacent particle pair whose gap closed."""
        return self.left_block[1], self.right_block[0]


class SystemState:
    """Mutable engine state: ordered blocks with representative positions."""

    __slots__ = ("n", "topology", "clock", "step_count",
                 "particles", "pos", "rep", "blo", "bhi", "samples", "meetings")

    def __init__(self, n, topology, particles, positions):
        self.n = int(n)
        self.topology = _check_topology(topology)
        self.clock = 0.0
        self.step_count = 0
        self.particles = np.asarray(particles, dtype=np.int64)
        k = self.particles.size
        if k < 2:
            raise ValueError(f"need at least 2 particles, got {k}")
        self.pos = np.asarray(positions, dtype=float).copy()
        if self.pos.size != k:
            raise ValueError("positions and particles must have equal length")
        if np.any(np.diff(self.pos) <= 0):
            raise ValueError("initial positions must be strictly increasing in slot order")
        self.rep = self.particles.copy()
        self.blo = np.arange(k, dtype=np.int64)
        self.bhi = np.arange(k, dtype=np.int64)
        self.samples = None   # optional [(clock, rep array, pos array)] trace
        self.meetings = None  # optional [(time, surviving rep, position)]

    @property
    def block_count(self) -> int:
        return self.pos.size

    def min_block_size(self) -> int:
        return int(self._block_sizes().min())

    def _block_sizes(self) -> np.ndarray:
        raw = self.bhi - self.blo
        return np.where(raw >= 0, raw, raw + self.particles.size) + 1

    def blocks(self) -> list[tuple[int, int]]:
        """Blocks as (lo, hi) inclusive ranges of original particle indices."""
        return [(int(self.particles[self.blo[j]]), int(self.particles[self.bhi[j]]))
                for j in range(self.block_count)]

    def gaps(self) -> np.ndarray:
        """Adjacent representative gaps; the circle includes the wrap gap."""
        if self.topology == LINE:
            return np.diff(self.pos)
        out = np.empty(self.pos.size, dtype=float)
        out[:-1] = self.pos[1:] - self.pos[:-1]
        out[-1] = self.pos[0] + 1.0 - self.pos[-1]
        return out

    def gap_ids(self) -> np.ndarray:
        """Stable identity of each adjacency: last particle of its left block."""
        ends = self.bhi if self.topology == CIRCLE else self.bhi[:-1]
        return self.particles[ends]

    def enable_sampling(self) -> None:
        self.samples = [(0.0, self.rep.copy(), self.pos.copy())]
        self.meetings = []

    def record_sample(self) -> None:
        if self.samples is not None:
            self.samples.append((self.clock, self.rep.copy(), self.pos.copy()))


@dataclass
class EventLog:
    """Completed run: merge history plus enough context to query it."""

    n: int
    topology: str
    particles: np.ndarray
    events: list[MergeEvent]
    final_clock: float
    censored: bool
    dt: float
    tolerance_divisor: float
    adaptive: bool
    master_seed: int
    stream_id: int
    samples: list | None = None
    meetings: list | None = None
    _pair_times: np.ndarray | None = field(default=None, repr=False)

    def pair_time_array(self) -> np.ndarray:
        """First-coalescence time of each adjacent slot pair (inf if never).

        Entry j is the time at which the particles in slots j and j+1
        (mod k on the circle) first share a block.
        """
        if self._pair_times is None:
            k = self.particles.size
            m = k if self.topology == CIRCLE else k - 1
            times = np.full(m, math.inf)
            slot_of = {int(p): s for s, p in enumerate(self.particles)}
            for ev in self.events:
                times[slot_of[ev.left_block[1]]] = ev.time
            self._pair_times = times
        return self._pair_times


def _entry_resolved(state: SystemState, center: int, m: int) -> bool:
    """Whether either flanking pair of the block {center..center+m-1} merged."""
    slots = state.particles
    hit = np.nonzero(slots == center)[0]
    if not hit.size:
        raise ValueError(f"center {center} not in this system")
    s = int(hit[0])
    k = slots.size
    cyclic = state.topology == CIRCLE and k == state.n
    blo, bhi = state.blo, state.bhi
    normal = blo <= bhi

    def same_block(q1: int, q2: int) -> bool:
        in1 = np.where(normal, (blo <= q1) & (q1 <= bhi), (q1 >= blo) | (q1 <= bhi))
        in2 = np.where(normal, (blo <= q2) & (q2 <= bhi), (q2 >= blo) | (q2 <= bhi))
        return bool(np.any(in1 & in2))

    pairs = []
    if cyclic:
        pairs.append(((s - 1) % k, s))
        pairs.append(((s + m - 1) % k, (s + m) % k))
    else:
        if s > 0:
            pairs.append((s - 1, s))
        if s + m < k:
            pairs.append((s + m - 1, s + m))
        if not pairs:
            return True  # no flank can ever close; the entry is zero forever
    return any(same_block(q1, q2) for q1, q2 in pairs)


def init_system(n: int, topology: str) -> SystemState:
    """Fresh system of n particles at the standard initial positions i/n."""
    _check_topology(topology)
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    particles = np.arange(1, n + 1)
    return SystemState(n, topology, particles, particles / float(n))


def init_custom(n: int, topology: str, particles, positions) -> SystemState:
    """System over an explicit particle subset or custom positions.

    ``particles`` must be listed in spatial (slot) order; on the circle
    this is the cyclic arc order and positions must be lifted so they
    increase along the arc.
    """
    return SystemState(n, topology, particles, positions)


class EngineNoise:
    """Randomness supplier for engine steps.

    ``keyed=False`` (default) draws sequentially from the stream, which
    is fastest.  ``keyed=True`` addresses every draw by (step, particle)
    or (step, gap id), so a run restricted to a subsystem consumes
    exactly the same numbers as the full run under the same stream:
    common random numbers.
    """

    __slots__ = ("stream", "keyed", "n_full")

    def __init__(self, stream: RngStream, keyed: bool = False, n_full: int | None = None):
        if stream is None:
            raise ValueError("an RngStream is required")
        self.stream = stream
        self.keyed = keyed
        self.n_full = n_full
        if keyed and not n_full:
            raise ValueError("keyed noise needs the full system size n_full")

    def step_draws(self, step_index: int, state: SystemState):
        """(normals per block, uniforms per adjacency or None)."""
        if self.keyed:
            normals, uniforms = self.stream.step_block(step_index, self.n_full)
            return normals[state.rep - 1], uniforms[state.gap_ids() - 1]
        return self.stream.generator.standard_normal(state.block_count), None

    def lazy_uniforms(self, count: int) -> np.ndarray:
        return self.stream.generator.random(count)

    def event_gen(self, step_index: int, gap_id: int) -> np.random.Generator:
        if self.keyed:
            return self.stream.event_stream(step_index, gap_id)
        return self.stream.generator


def step(state: SystemState, dt: float, noise: EngineNoise,
         tolerance: float | None = None) -> tuple[SystemState, list[MergeEvent]]:
    """Advance one grid step of length dt; returns (state, merge events).

    The state is modified in place and returned for convenience.
    """
    if state.block_count == 1:
        raise ValueError("system is fully coalesced")
    if not (dt > 0):
        raise ValueError("dt must be positive")
    if tolerance is None:
        tolerance = dt / 1024.0
    circle = state.topology == CIRCLE
    pos = state.pos
    B = pos.size
    z, u = noise.step_draws(state.step_count, state)
    new_pos = pos + math.sqrt(dt) * z

    if circle:
        g0 = np.empty(B)
        g0[:-1] = pos[1:] - pos[:-1]
        g0[-1] = pos[0] + 1.0 - pos[-1]
        g1 = np.empty(B)
        g1[:-1] = new_pos[1:] - new_pos[:-1]
        g1[-1] = new_pos[0] + 1.0 - new_pos[-1]
    else:
        g0 = pos[1:] - pos[:-1]
        g1 = new_pos[1:] - new_pos[:-1]

    # Gap variance rate is 2, so P(bridge touches 0) = exp(-2ab/(2dt)).
    expo = g0 * g1 / dt
    hot = expo < _EXP_CUTOFF
    events: list[MergeEvent] = []
    if hot.any():
        if u is None:
            u = np.ones(expo.size)
            u[hot] = noise.lazy_uniforms(int(hot.sum()))
        # A nonpositive end gap gives expo <= 0, hence p = 1: certain crossing.
        crossed = np.zeros(expo.size, dtype=bool)
        crossed[hot] = u[hot] < np.exp(-np.maximum(expo[hot], 0.0))
        if crossed.any():
            events = _apply_crossings(state, dt, tolerance, noise, new_pos,
                                      g0, g1, np.flatnonzero(crossed))
            state.step_count += 1
            state.clock += dt
            state.record_sample()
            return state, events

    state.pos = new_pos
    state.step_count += 1
    state.clock += dt
    return state, events


def _value_at(known: list, t: float, gen: np.random.Generator) -> float:
    """Path value at t, bridge-sampled from its known (time, value) points."""
    ta = xa = tb = xb = None
    for s, v in known:
        if s == t:
            return v
        if s < t:
            ta, xa = s, v
        elif tb is None:
            tb, xb = s, v
            break
    w = (t - ta) / (tb - ta)
    val = xa + w * (xb - xa) + math.sqrt((t - ta) * (tb - t) / (tb - ta)) \
        * float(gen.standard_normal())
    known.append((t, val))
    known.sort(key=lambda p: p[0])
    return val


def _meeting_position(known_l: list, known_r: list, shift: float, t: float,
                      gen: np.random.Generator) -> float:
    """Common position (in the left path's frame) of a merging pair at t.

    The mean of two independent unit-variance paths is a rate-1/2
    Brownian motion independent of their gap, so the meeting position is
    a bridge sample of the mean process.  ``shift`` lifts the right
    path into the left path's frame (1 for the circle's wrap adjacency).
    """
    xl = dict(known_l)
    xr = dict(known_r)
    common = sorted(set(xl) & set(xr))
    below = [s for s in common if s <= t]
    above = [s for s in common if s > t]
    ta = below[-1]
    if not above:  # endpoint touch: both paths end at the same point
        return 0.5 * (xl[ta] + xr[ta] + shift)
    tb = above[0]
    ma = 0.5 * (xl[ta] + xr[ta] + shift)
    mb = 0.5 * (xl[tb] + xr[tb] + shift)
    w = (t - ta) / (tb - ta)
    var = 0.5 * (t - ta) * (tb - t) / (tb - ta)
    return ma + w * (mb - ma) + math.sqrt(var) * float(gen.standard_normal())


def _apply_crossings(state, dt, tolerance, noise, new_pos, g0, g1, hits):
    """Merge all detected crossings in refined-time order, with cascades."""
    circle = state.topology == CIRCLE
    B = state.pos.size
    step_idx = state.step_count
    particles = state.particles

    # Per-block linked structure for this step.
    left = list(range(-1, B - 1))
    right = list(range(1, B + 1))
    if circle:
        left[0] = B - 1
        right[B - 1] = 0
    else:
        right[B - 1] = -1
    alive = [True] * B
    known = [[(0.0, float(state.pos[j])), (dt, float(new_pos[j]))] for j in range(B)]
    rep = [int(r) for r in state.rep]
    blo = list(map(int, state.blo))
    bhi = list(map(int, state.bhi))
    end_pid = [int(particles[e]) for e in bhi]

    event_gens: dict[int, np.random.Generator] = {}

    def gen_for(pid: int) -> np.random.Generator:
        g = event_gens.get(pid)
        if g is None:
            g = noise.event_gen(step_idx, pid)
            event_gens[pid] = g
        return g

    # (tau, gap id, left idx, right idx, endpoint-touch flag)
    pending: list[tuple[float, int, int, int, bool]] = []
    for j in hits:
        pid = end_pid[j]
        a, b = float(g0[j]), float(g1[j])
        touch = b == 0.0
        tau = dt if touch else _refine_rel(a, b, dt, 2.0, tolerance, gen_for(pid))
        pending.append((tau, pid, int(j), 0 if j + 1 == B else int(j) + 1, touch))
    pending.sort()

    events: list[MergeEvent] = []
    last_t = -math.inf

    while pending:
        tau, pid, li, ri, touch = pending.pop(0)
        if not (alive[li] and alive[ri]) or right[li] != ri:
            continue  # stale: structure changed under this decision

        t_abs = state.clock + tau
        if t_abs <= last_t:  # enforce strictly increasing event times
            t_abs = math.nextafter(last_t, math.inf)
        last_t = t_abs
        events.append(MergeEvent(
            t_abs,
            (int(particles[blo[li]]), int(particles[bhi[li]])),
            (int(particles[blo[ri]]), int(particles[bhi[ri]])),
            refined=not touch,
        ))

        wrap = li > ri  # block indices follow slot order; only the wrap inverts
        shift = 1.0 if wrap else 0.0
        meet = _meeting_position(known[li], known[ri], shift, tau, gen_for(pid))
        surv, gone = (li, ri) if rep[li] <= rep[ri] else (ri, li)
        if surv == ri:
            meet -= shift  # express in the survivor's lift frame
        blo[surv], bhi[surv] = blo[li], bhi[ri]
        rep[surv] = min(rep[li], rep[ri])
        end_pid[surv] = end_pid[ri]
        known[surv].append((tau, meet))
        known[surv].sort(key=lambda p: p[0])
        alive[gone] = False

        ln, rn = left[li], right[ri]
        left[surv], right[surv] = ln, rn
        if ln >= 0:
            right[ln] = surv
        if rn >= 0:
            left[rn] = surv
        if state.meetings is not None:
            state.meetings.append((t_abs, rep[surv], meet))
        if rn == surv or rn < 0:
            continue  # single block left (or line boundary on the dead side)

        # Re-examine the adjacency on the discarded block's outer side; the
        # survivor's outer adjacency kept its driving path and stays valid.
        if gone == ri:
            lft, rgt = surv, rn
        else:
            if ln < 0:
                continue
            lft, rgt = ln, surv
        h = dt - tau
        if h <= 0 or rgt == lft:
            continue
        g = gen_for(end_pid[lft])
        x_l = _value_at(known[lft], tau, g)
        x_r = _value_at(known[rgt], tau, g)
        cshift = 1.0 if lft > rgt else 0.0
        a_new = x_r + cshift - x_l
        b_new = known[rgt][-1][1] + cshift - known[lft][-1][1]
        if a_new <= 0:
            # Sampled neighbour already on the wrong side: merge immediately.
            pending.append((math.nextafter(tau, math.inf), end_pid[lft],
                            lft, rgt, False))
            pending.sort()
            continue
        expo2 = a_new * b_new / h
        if expo2 < _EXP_CUTOFF and float(g.random()) < math.exp(-max(expo2, 0.0)):
            touch2 = b_new == 0.0
            tau2 = dt if touch2 else tau + _refine_rel(
                a_new, b_new, h, 2.0, min(tolerance, 0.5 * h), g)
            pending.append((tau2, end_pid[lft], lft, rgt, touch2))
            pending.sort()

    keep = [j for j in range(B) if alive[j]]
    state.pos = np.array([known[j][-1][1] for j in keep])
    state.rep = np.array([rep[j] for j in keep], dtype=np.int64)
    state.blo = np.array([blo[j] for j in keep], dtype=np.int64)
    state.bhi = np.array([bhi[j] for j in keep], dtype=np.int64)
    return events


def run_until(state: SystemState, dt: float, stream: RngStream, stop: StopRule,
              t_max: float, adaptive: bool = True, growth: float = 0.25,
              tolerance_divisor: float = 1024.0, keyed: bool = False,
              sample_every: int | None = None) -> EventLog:
    """Drive the system until the stop rule or the time horizon.

    ``dt`` is the base (floor) step.  With ``adaptive=True`` the step
    grows as ``growth * min_gap**2`` once that exceeds the floor, which
    makes long horizons affordable.  The censored flag is set when t_max
    fires before the stop rule.
    """
    if not (t_max > 0) or not math.isfinite(t_max):
        raise ValueError("t_max must be positive and finite")
    noise = EngineNoise(stream, keyed=keyed, n_full=state.n)
    if sample_every:
        state.enable_sampling()
    events: list[MergeEvent] = []
    censored = False
    countdown = sample_every or 0
    while True:
        if stop.satisfied(state):
            break
        if state.clock >= t_max:
            censored = True
            break
        if state.block_count == 1:
            break  # horizon rule with nothing left to happen
        dt_k = dt
        if adaptive:
            g = float(state.gaps().min())
            if g > 0:
                dt_k = max(dt, growth * g * g)
        dt_k = min(dt_k, t_max - state.clock)
        _, evs = step(state, dt_k, noise, tolerance=dt_k / tolerance_divisor)
        if evs:
            events.extend(evs)
        if sample_every:
            countdown -= 1
            if countdown <= 0:
                countdown = sample_every
                state.record_sample()
    return EventLog(
        n=state.n, topology=state.topology, particles=state.particles.copy(),
        events=events, final_clock=state.clock, censored=censored, dt=dt,
        tolerance_divisor=tolerance_divisor, adaptive=adaptive,
        master_seed=stream.master_seed, stream_id=stream.stream_id,
        samples=state.samples, meetings=state.meetings,
    )


# -- queries on completed logs -------------------------------------------


def pair_times(log: EventLog) -> np.ndarray:
    """Adjacent-pair coalescence times by slot; inf where unresolved."""
    return log.pair_time_array()


def coalescence_time(log: EventLog, i: int, j: int) -> float:
    """First time particles i and j share a block; 0 if i == j; inf if not reached.

    Blocks are contiguous, so i and j meet exactly when every adjacent
    pair between them has coalesced; on the circle either arc between
    them may close.
    """
    particles = log.particles
    slot_of = {int(p): s for s, p in enumerate(particles)}
    if i not in slot_of or j not in slot_of:
        raise ValueError(f"particle index out of range: {(i, j)}")
    if i == j:
        return 0.0
    si, sj = slot_of[i], slot_of[j]
    if si > sj:
        si, sj = sj, si
    pt = log.pair_time_array()
    inner = float(pt[si:sj].max())
    if log.topology == LINE:
        return inner
    outer_slots = np.r_[np.arange(sj, pt.size), np.arange(0, si)]
    outer = float(pt[outer_slots].max()) if outer_slots.size else math.inf
    return min(inner, outer)


# -- neighbourhood subsystems ---------------------------------------------


def subsystem(n: int, center: int, epsilon: float, topology: str = LINE) -> np.ndarray:
    """Indices within coordinate distance n**(-2/3+epsilon) of the center.

    Returned in spatial order (an arc on the circle may wrap through n).
    A radius reaching the whole system is permitted but degenerate.
    """
    _check_topology(topology)
    if not (epsilon > 0):
        raise ValueError("epsilon must be positive")
    if not (1 <= center <= n):
        raise ValueError(f"center out of range: {center}")
    radius = n ** (-2.0 / 3.0 + epsilon)
    k = int(math.floor(radius * n + 1e-12))
    if topology == LINE:
        return np.arange(max(1, center - k), min(n, center + k) + 1)
    if 2 * k + 1 >= n:
        return np.arange(1, n + 1)
    return (np.arange(center - k, center + k + 1) - 1) % n + 1


def run_subsystem(n: int, indices, topology: str, dt: float, stream: RngStream,
                  stop: StopRule, t_max: float, adaptive: bool = False,
                  growth: float = 0.25, tolerance_divisor: float = 1024.0,
                  keyed: bool = True) -> EventLog:
    """Run the engine restricted to a particle subset.

    With ``keyed=True`` (the default) and a fixed step (adaptive off),
    the subsystem consumes the same per-particle increments as a full
    run under the same stream: common random numbers, so disagreements
    with the full system are structural, not numerical.
    """
    indices = np.asarray(indices, dtype=np.int64)
    state = init_custom(n, topology, indices, _subsystem_positions(n, indices, topology))
    return run_until(state, dt, stream, stop, t_max, adaptive=adaptive,
                     growth=growth, tolerance_divisor=tolerance_divisor,
                     keyed=keyed)


def _subsystem_positions(n, indices, topology):
    """Standard positions i/n, lifted so slot order is increasing."""
    pos = indices / float(n)
    if topology == CIRCLE:
        lifted = pos.copy()
        for s in range(1, lifted.size):
            while lifted[s] <= lifted[s - 1]:
                lifted[s] += 1.0
        if lifted[-1] - lifted[0] >= 1.0:
            raise ValueError("subsystem indices must span less than the full circle")
        return lifted
    if np.any(np.diff(pos) <= 0):
        raise ValueError("line subsystem indices must be increasing")
    return pos
