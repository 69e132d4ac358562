"""Exact closed forms used as ground truth when validating the engine.

All functions are pure and deterministic.  Multiplicative constants of
the asymptotic tail bounds are not known in closed form and are not
computed here; only exponents and exact expectations are exposed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "ConeSpec",
    "expected_two_sided_exit",
    "expected_external_branch",
    "expected_interior_branch",
    "cone_exit_exponent",
    "phi_transform",
    "phi_matrix",
]


@dataclass(frozen=True)
class ConeSpec:
    """Planar cone of full opening angle theta around the positive x axis."""

    theta: float

    def __post_init__(self):
        if not (0.0 < self.theta <= 2.0 * math.pi):
            raise ValueError(f"theta must lie in (0, 2*pi], got {self.theta}")


def expected_two_sided_exit(a: float, b: float) -> float:
    """Expected exit time of (-b, a) for standard Brownian motion from 0.

    Equals a*b.
    """
    if not (a > 0 and b > 0):
        raise ValueError(f"a and b must be positive, got {(a, b)}")
    return a * b


def expected_external_branch(x: float, y: float, z: float) -> float:
    """Expected first meeting among three ordered independent particles.

    For unit-variance particles started at x <= y <= z, the expected
    value of the earlier of the two adjacent meeting times is
    (z - y) * (y - x).
    """
    if x > y or y > z:
        raise ValueError(f"need x <= y <= z, got {(x, y, z)}")
    return (z - y) * (y - x)


def expected_interior_branch(n: int, m: int) -> float:
    """Expected branch length supporting m leaves at an interior index.

    Independent of the index and of m; equals 1/n**2.  Requires an
    interior index to exist (n >= m + 2).
    """
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    if n < m + 2:
        raise ValueError(f"no interior index exists for n={n}, m={m}")
    return 1.0 / (n * n)


def cone_exit_exponent(spec: ConeSpec) -> float:
    """Tail exponent of the cone exit time: survival decays like t**-(pi/2Theta)."""
    return math.pi / (2.0 * spec.theta)


def phi_transform(x: float, y: float) -> tuple[float, float]:
    """Whiten the adjacent-gap pair into independent unit-variance coordinates.

    Adjacent gaps have variance rate 2 each and covariance rate -1; the
    image of the positive quadrant under this map is a cone of opening
    angle pi/3, which is where the 3/2 tail exponent comes from.
    """
    return (math.sqrt(2.0 / 3.0) * (x + 0.5 * y), math.sqrt(0.5) * y)


def phi_matrix():
    """The linear map of phi_transform as a 2x2 row-major nested list."""
    s23 = math.sqrt(2.0 / 3.0)
    return [[s23, 0.5 * s23], [0.0, math.sqrt(0.5)]]
