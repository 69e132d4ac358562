"""Brownian path primitives: increments, bridge crossings, meeting laws.

Everything here is per-gap exact.  A gap between two independent unit
variance Brownian particles is itself a Brownian motion with variance
rate 2; crossing detection over a time step conditions on the gap's
endpoint values, so the step size never biases a single gap's law.
Discretization error in the full system comes only from treating
neighbouring gaps independently within one step.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .rng import RngStream

__all__ = [
    "StepWindow",
    "gaussian_increment",
    "bridge_crossing_prob",
    "refine_crossing_time",
    "pair_hit_survival",
    "pair_hit_cdf",
]


@dataclass(frozen=True)
class StepWindow:
    """One time step of a single gap: endpoint values a (start), b (end)."""

    t0: float
    dt: float
    a: float
    b: float

    def __post_init__(self):
        if not (self.dt > 0) or not math.isfinite(self.dt):
            raise ValueError("dt must be positive and finite")
        if not (math.isfinite(self.a) and math.isfinite(self.b)):
            raise ValueError("gap endpoint values must be finite")


def _as_generator(stream) -> np.random.Generator:
    if isinstance(stream, RngStream):
        return stream.generator
    return stream


def gaussian_increment(stream, variance: float) -> float:
    """Centered normal sample with the given variance.

    Deterministic given the stream state; variance 0 returns exactly 0.
    """
    if not (variance >= 0) or not math.isfinite(variance):
        raise ValueError(f"variance must be finite and nonnegative, got {variance}")
    if variance == 0.0:
        return 0.0
    return math.sqrt(variance) * float(_as_generator(stream).standard_normal())


def bridge_crossing_prob(a: float, b: float, sigma2dt: float) -> float:
    """Probability that a gap's bridge touches 0 inside a step.

    ``a`` and ``b`` are the gap values at the step's ends (both must be
    positive; a nonpositive endpoint means the crossing is certain and
    the caller must not ask).  ``sigma2dt`` is the gap's variance rate
    times the step length.  Returns exp(-2ab/sigma2dt).
    """
    if not (sigma2dt > 0):
        raise ValueError(f"sigma2dt must be positive, got {sigma2dt}")
    if a <= 0 or b <= 0:
        raise ValueError("bridge_crossing_prob requires positive endpoints; "
                         "a sign change means the crossing is certain")
    return math.exp(-2.0 * a * b / sigma2dt)


def refine_crossing_time(window: StepWindow, sigma2_rate: float,
                         tolerance: float, stream) -> float:
    """Locate the first zero of a gap inside a step known to contain one.

    Recursive bisection: sample the bridge midpoint, decide which half
    holds the first crossing, recurse until the interval is shorter than
    ``tolerance``; the left endpoint of the final interval is returned.

    The conditioning is handled exactly through a reflection argument: a
    bridge from ``a > 0`` to ``b > 0`` conditioned to touch zero has the
    same first-zero law as the (surely crossing) bridge from ``a`` to
    ``-b``, so the recursion always works on a window whose right
    endpoint is nonpositive.
    """
    if not (sigma2_rate > 0):
        raise ValueError("sigma2_rate must be positive")
    if not (tolerance > 0):
        raise ValueError("tolerance must be positive")
    a, b, dt = window.a, window.b, window.dt
    if a <= 0:
        raise ValueError("window already crossed at its left endpoint; "
                         "no crossing to refine")
    if b == 0.0:
        return window.t0 + dt
    if tolerance >= dt:
        warnings.warn("refinement tolerance is not smaller than the step; "
                      "returning the midpoint", RuntimeWarning, stacklevel=2)
        return window.t0 + 0.5 * dt
    gen = _as_generator(stream)
    lo = _refine_rel(a, b, dt, sigma2_rate, tolerance, gen)
    return window.t0 + lo


def _refine_rel(a, b, dt, sigma2_rate, tolerance, gen) -> float:
    """First-zero offset in [0, dt) for a crossing gap window."""
    va = a
    vb = b if b < 0.0 else -b  # reflect a conditioned bridge
    lo, hi = 0.0, dt
    while hi - lo > tolerance:
        h = hi - lo
        mid = 0.5 * (lo + hi)
        m = 0.5 * (va + vb) + math.sqrt(0.25 * sigma2_rate * h) * float(gen.standard_normal())
        if m <= 0.0:
            hi, vb = mid, m
        else:
            p_left = math.exp(-2.0 * va * m / (0.5 * sigma2_rate * h))
            if float(gen.random()) < p_left:
                hi, vb = mid, -m
            else:
                lo, va = mid, m
    return lo


def pair_hit_survival(d: float, t: float) -> float:
    """P(two unit-variance particles started d apart have not met by t).

    The relative motion has variance rate 2, so this is
    2*Phi(d / sqrt(2t)) - 1 = erf(d / (2*sqrt(t))).
    """
    if not (d > 0):
        raise ValueError(f"d must be positive, got {d}")
    if not (t > 0):
        raise ValueError(f"t must be positive, got {t}")
    return math.erf(d / (2.0 * math.sqrt(t)))


def pair_hit_cdf(d: float, times) -> np.ndarray:
    """CDF of the pair meeting time at an array of times (vectorized)."""
    times = np.asarray(times, dtype=float)
    out = np.empty(times.shape, dtype=float)
    flat = times.reshape(-1)
    res = out.reshape(-1)
    for k in range(flat.size):
        t = flat[k]
        res[k] = 0.0 if t <= 0 else 1.0 - math.erf(d / (2.0 * math.sqrt(t)))
    return out
