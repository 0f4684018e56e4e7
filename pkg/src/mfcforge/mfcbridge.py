"""Maps between PI/PID gains and first/second order iPD (model-free) gains.

With the filtered difference operator ``D(z) = (z - 1) / (Ts (C z + 1 - C))``
the iPD controllers are rational controllers as well:

    C_iPD1(z) = K1 (z - K2)/(z - 1) * z/(C z + 1 - C)
    C_iPD2(z) = (K2 z^2 + K1 z + K0)/(z (z - 1)) * z^2/(C z + 1 - C)^2

so closing the loop with an iPD on ``G`` is the same as closing it with a PI
(PID) on ``G`` augmented by the filter poles.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Union

import numpy as np

from .lateralplant import DiscreteTF
from .polycore import DomainError, Poly
from .tchebset import Kind, StabilizingSet

log = logging.getLogger(__name__)

__all__ = [
    "FilterConfig",
    "PiGains",
    "PidGains",
    "IpdGains",
    "TransformSingularity",
    "derivative_filter_tf",
    "ipd1_to_pi",
    "pi_to_ipd1",
    "ipd2_to_pid",
    "pid_to_ipd2_semilinear",
    "pid_to_ipd2_nonlinear",
    "pid_to_ipd2",
    "controller_tf",
    "cancel_integrator",
    "map_set",
    "CloudPoint",
]

SINGULAR_RTOL = 1e-12


class TransformSingularity(DomainError):
    """The PID point has no finite iPD image."""


@dataclass(frozen=True)
class FilterConfig:
    C: float
    Ts: float

    def __post_init__(self):
        if not self.Ts > 0:
            raise DomainError("Ts must be positive")
        if self.C < 1:
            raise DomainError("C must be >= 1 for a stable derivative filter")

    @property
    def pole(self) -> float:
        return (self.C - 1.0) / self.C


@dataclass(frozen=True)
class PiGains:
    K1: float
    K2: float


@dataclass(frozen=True)
class PidGains:
    K2: float
    K1: float
    K0: float

    @property
    def K3(self) -> float:
        return self.K2 - self.K0

    @classmethod
    def from_gate(cls, K3: float, K1: float, K2: float) -> "PidGains":
        return cls(K2, K1, K2 - K3)

    def as_array(self) -> np.ndarray:
        return np.array([self.K2, self.K1, self.K0])


@dataclass(frozen=True)
class IpdGains:
    """iPD gains; the integral gain of the general iPID law is fixed at 0."""

    Kp: float
    Kd: float
    alpha: float
    n: int = 2

    def __post_init__(self):
        if self.alpha == 0:
            raise DomainError("alpha must be nonzero")
        if self.n not in (1, 2):
            raise DomainError("ultra-local model order must be 1 or 2")


Gains = Union[PiGains, PidGains, IpdGains]


def derivative_filter_tf(f: FilterConfig) -> DiscreteTF:
    return DiscreteTF(Poly([-1.0, 1.0]), Poly([f.Ts * (1.0 - f.C), f.Ts * f.C]), f.Ts)


def ipd1_to_pi(g: IpdGains, f: FilterConfig) -> PiGains:
    """First-order iPD -> PI.

    ``K1 K2`` is the coefficient of ``z`` in the iPD numerator, so
    ``K2 = (Kp Ts (C-1) + Kd + 1) / (Kp Ts C + Kd + 1)``.
    """
    if g.n != 1:
        raise DomainError("ipd1_to_pi needs a first-order iPD")
    Ts, C = f.Ts, f.C
    lead = g.Kp * Ts * C + g.Kd + 1.0
    if lead == 0:
        raise TransformSingularity("K1 = 0: the PI image is degenerate")
    K1 = lead / (g.alpha * Ts)
    K2 = (g.Kp * Ts * (C - 1.0) + g.Kd + 1.0) / lead
    return PiGains(K1, K2)


def pi_to_ipd1(pi: PiGains, f: FilterConfig, alpha: float) -> IpdGains:
    """PI -> first-order iPD for a caller-chosen ``alpha`` (the free parameter)."""
    if alpha == 0:
        raise DomainError("alpha must be nonzero")
    Kp = alpha * pi.K1 * (1.0 - pi.K2)
    Kd = alpha * f.Ts * pi.K1 * (1.0 - f.C + pi.K2 * f.C) - 1.0
    return IpdGains(Kp, Kd, alpha, 1)


def ipd2_to_pid(g: IpdGains, f: FilterConfig) -> PidGains:
    if g.n != 2:
        raise DomainError("ipd2_to_pid needs a second-order iPD")
    Ts, C = f.Ts, f.C
    s = g.alpha * Ts ** 2
    K2 = (g.Kp * Ts ** 2 * C ** 2 + g.Kd * Ts * C + 1.0) / s
    K1 = (2.0 * g.Kp * Ts ** 2 * C * (1.0 - C) + g.Kd * Ts * (1.0 - 2.0 * C) - 2.0) / s
    K0 = (g.Kp * Ts ** 2 * (C - 1.0) ** 2 + g.Kd * Ts * (C - 1.0) + 1.0) / s
    return PidGains(K2, K1, K0)


def semilinear_matrix(f: FilterConfig) -> np.ndarray:
    Ts, C = f.Ts, f.C
    return np.array([
        [1.0, 1.0, 1.0],
        [2.0 * Ts * (1.0 - C), Ts * (1.0 - 2.0 * C), -2.0 * Ts * C],
        [Ts ** 2 * (C - 1.0) ** 2, Ts ** 2 * (C ** 2 - C), Ts ** 2 * C ** 2],
    ])


def pid_to_ipd2_semilinear(pid: PidGains, f: FilterConfig) -> IpdGains:
    """``[Kp/a, Kd/a, 1/a] = M(Ts, C) [K2, K1, K0]``."""
    M = semilinear_matrix(f)
    v = M @ pid.as_array()
    scale = np.abs(M[2]) @ np.abs(pid.as_array())
    if scale == 0 or abs(v[2]) <= SINGULAR_RTOL * scale:
        raise TransformSingularity("1/alpha vanishes: no finite alpha for this PID point")
    with np.errstate(over="ignore"):
        alpha = 1.0 / v[2]
    if not np.isfinite(alpha):
        raise TransformSingularity("alpha overflows: no finite alpha for this PID point")
    return IpdGains(float(v[0] * alpha), float(v[1] * alpha), float(alpha), 2)


def nonlinear_system(pid: PidGains, f: FilterConfig) -> tuple[np.ndarray, np.ndarray]:
    Ts, C = f.Ts, f.C
    A = np.array([
        [Ts ** 2 * C ** 2, Ts * C, -Ts ** 2 * pid.K2],
        [Ts ** 2 * 2.0 * C * (1.0 - C), Ts * (1.0 - 2.0 * C), -Ts ** 2 * pid.K1],
        [Ts ** 2 * (C - 1.0) ** 2, Ts * (C - 1.0), -Ts ** 2 * pid.K0],
    ])
    return A, np.array([-1.0, 2.0, -1.0])


def pid_to_ipd2_nonlinear(pid: PidGains, f: FilterConfig) -> IpdGains:
    """Solve the 3x3 system linear in ``(Kp, Kd, alpha)``."""
    A, rhs = nonlinear_system(pid, f)
    det = np.linalg.det(A)
    if abs(det) <= SINGULAR_RTOL * np.prod(np.linalg.norm(A, axis=1)):
        raise TransformSingularity("singular transform matrix: no iPD2 image")
    Kp, Kd, alpha = np.linalg.solve(A, rhs)
    if alpha == 0:
        raise TransformSingularity("alpha = 0")
    return IpdGains(float(Kp), float(Kd), float(alpha), 2)


def pid_to_ipd2(pid: PidGains, f: FilterConfig, method: str = "nonlinear") -> IpdGains:
    if method == "nonlinear":
        return pid_to_ipd2_nonlinear(pid, f)
    if method == "semilinear":
        return pid_to_ipd2_semilinear(pid, f)
    raise ValueError(f"unknown method {method!r}")


def cancel_integrator(tf: DiscreteTF, rtol: float = 1e-12) -> DiscreteTF:
    """Drop a common ``(z - 1)`` factor (zero proportional action, e.g. ``Kp = 0``)."""
    num, den = tf.num, tf.den
    if num.degree < 1 or abs(den(1.0)) > rtol * np.abs(den.coeffs).sum():
        return tf
    if abs(num(1.0)) > rtol * np.abs(num.coeffs).sum():
        return tf
    q_num, _ = np.polynomial.polynomial.polydiv(num.coeffs, [-1.0, 1.0])
    q_den, _ = np.polynomial.polynomial.polydiv(den.coeffs, [-1.0, 1.0])
    return DiscreteTF(Poly(q_num), Poly(q_den), tf.Ts)


def controller_tf(gains: Gains, f: FilterConfig, minimal: bool = False) -> DiscreteTF:
    """Controller transfer function ``U(z)/E(z)``.

    With ``minimal=True`` an exact pole/zero pair at ``z = 1`` is cancelled.
    """
    tf = _controller_tf(gains, f)
    return cancel_integrator(tf) if minimal else tf


def _controller_tf(gains: Gains, f: FilterConfig) -> DiscreteTF:
    Ts = f.Ts
    if isinstance(gains, PiGains):
        return DiscreteTF(gains.K1 * Poly([-gains.K2, 1.0]), Poly([-1.0, 1.0]), Ts)
    if isinstance(gains, PidGains):
        return DiscreteTF(Poly([gains.K0, gains.K1, gains.K2]), Poly([0.0, -1.0, 1.0]), Ts)
    filt = Poly([1.0 - f.C, f.C])
    zm1 = Poly([-1.0, 1.0])
    z = Poly([0.0, 1.0])
    g = gains
    if g.n == 1:
        num = z * ((g.Kp * Ts * f.C + g.Kd + 1.0) * z - (g.Kp * Ts * (f.C - 1.0) + g.Kd + 1.0))
        return DiscreteTF(num, g.alpha * Ts * zm1 * filt, Ts)
    num = z * (g.Kp * Ts ** 2 * filt ** 2 + g.Kd * Ts * zm1 * filt + zm1 ** 2)
    return DiscreteTF(num, g.alpha * Ts ** 2 * zm1 * filt ** 2, Ts)


@dataclass(frozen=True)
class CloudPoint:
    pid: PidGains
    ipd: IpdGains


def _grid_points(poly: np.ndarray, grid: int) -> Iterable[np.ndarray]:
    """Interior lattice of a convex polygon.

    The polygon is fan-triangulated and each triangle is cut into ``grid**2``
    sub-triangles; the centroids of the upright ones are returned. Unlike a
    bounding-box grid this also covers long thin regions.
    """
    v0 = poly[0]
    for v1, v2 in zip(poly[1:-1], poly[2:]):
        e1, e2 = v1 - v0, v2 - v0
        for i in range(grid):
            for j in range(grid - i):
                yield v0 + ((i + 1 / 3) * e1 + (j + 1 / 3) * e2) / grid


def map_set(sset: StabilizingSet, f: FilterConfig, grid: int = 30,
            method: str = "nonlinear", slice_stride: int = 1) -> tuple[list[CloudPoint], int]:
    """Sample PID regions (every ``slice_stride``-th slice) on an interior
    lattice and map the samples to iPD2 gains.

    Returns the cloud and the number of singular (skipped) samples.
    """
    if sset.kind is not Kind.PID:
        raise DomainError("map_set needs a PID stabilizing set")
    cloud, skipped = [], 0
    if grid < 1 or slice_stride < 1:
        raise DomainError("grid and slice_stride must be >= 1")
    for sl in sset.slices[::slice_stride]:
        for poly in sl.regions:
            for K1, K2 in _grid_points(poly, grid):
                pid = PidGains.from_gate(sl.gate, float(K1), float(K2))
                try:
                    cloud.append(CloudPoint(pid, pid_to_ipd2(pid, f, method)))
                except TransformSingularity:
                    skipped += 1
    if skipped:
        log.info("map_set: skipped %d singular points", skipped)
    return cloud, skipped
