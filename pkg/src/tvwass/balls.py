"""Closed-form quantities for uniform-ball initial data.

For a unit-mass uniform ball of radius r in dimension d, the total
variation is d/r (surface area times height) and the squared Wasserstein
distance between concentric uniform balls of radii r0, r1 is
``(r1-r0)^2 * d/(d+2)`` (the optimal map is the radial dilation).  One
proximal step applied to a ball stays a ball; its radius minimizes

    E(r1) = d/(2(d+2)tau) * (r1-r0)^2 + d/r1,

whose stationarity condition is ``r1^2 (r1 - r0) = (d+2) tau``.
"""

from __future__ import annotations

from dataclasses import dataclass

from scipy.optimize import brentq


@dataclass(frozen=True)
class BallParams:
    r0: float
    tau: float
    d: int = 2

    def __post_init__(self):
        if self.r0 <= 0.0:
            raise ValueError(f"r0 must be positive, got {self.r0}")
        if self.tau < 0.0:
            raise ValueError(f"tau must be nonnegative, got {self.tau}")
        if self.d < 1:
            raise ValueError(f"dimension must be at least 1, got {self.d}")

    @property
    def tv_constant(self):
        """TV of a unit-mass uniform ball of radius r is this constant over r."""
        return float(self.d)


def w2_concentric_balls(r0, r1, d=2):
    """Exact W2^2 between concentric unit-mass uniform balls."""
    if r0 <= 0.0 or r1 <= 0.0:
        raise ValueError("radii must be positive")
    return (r1 - r0) ** 2 * d / (d + 2.0)


def ball_energy(r1, p):
    """Proximal-step energy of the uniform ball of radius ``r1``."""
    if r1 <= 0.0:
        raise ValueError(f"r1 must be positive, got {r1}")
    if p.tau == 0.0:
        return float("inf") if r1 != p.r0 else p.tv_constant / r1
    transport = p.d / (2.0 * (p.d + 2.0) * p.tau) * (r1 - p.r0) ** 2
    return transport + p.tv_constant / r1


def _denergy(r1, p):
    return p.d / ((p.d + 2.0) * p.tau) * (r1 - p.r0) - p.tv_constant / r1 ** 2


def optimal_radius(p):
    """Radius minimizing :func:`ball_energy`, to absolute tolerance 1e-12.

    The stationarity condition reduces to ``r1^2 (r1 - r0) = (d+2) tau``,
    with a unique root above ``r0``.
    """
    if p.tau == 0.0:
        return p.r0
    hi = p.r0 + 1.0
    while _denergy(hi, p) < 0.0:
        hi *= 2.0
    return float(brentq(_denergy, p.r0, hi, args=(p,), xtol=1e-12, rtol=8.9e-16))
