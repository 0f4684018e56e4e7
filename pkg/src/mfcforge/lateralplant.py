"""Bicycle-model lateral error dynamics, ZOH discretization and TF extraction."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import expm

from .polycore import DomainError, Poly

__all__ = [
    "VehicleParams",
    "StateSpace",
    "DiscreteTF",
    "REFERENCE_VEHICLE",
    "build_lateral_ss",
    "zoh_discretize",
    "ss_to_tf",
    "augment_with_filter_poles",
    "lateral_design_plant",
]


@dataclass(frozen=True)
class VehicleParams:
    """Linear bicycle-model parameters, SI units."""

    m: float  # kg
    vx: float  # m/s
    Iz: float  # kg m^2
    Cf: float  # N/rad
    Cr: float  # N/rad
    lf: float  # m
    lr: float  # m

    def __post_init__(self):
        for name in ("m", "vx", "Iz", "Cf", "Cr", "lf", "lr"):
            v = getattr(self, name)
            if not np.isfinite(v) or v <= 0:
                raise DomainError(f"vehicle parameter {name} must be positive and finite, got {v}")


REFERENCE_VEHICLE = VehicleParams(m=1372.0, vx=9.72, Iz=1990.0, Cf=37022.5, Cr=35900.0, lf=0.98, lr=1.48)


@dataclass(frozen=True)
class StateSpace:
    """``x' = A x + B u + Bw w``, ``y = C x + D u``.

    ``Ts is None`` marks a continuous model. ``Bw`` holds disturbance inputs
    (the desired yaw-rate column for the lateral model) and never enters the
    design transfer function.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    Ts: Optional[float] = None
    Bw: Optional[np.ndarray] = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float).reshape(A.shape[0], -1)
        C = np.asarray(self.C, dtype=float).reshape(-1, A.shape[0])
        D = np.asarray(self.D, dtype=float).reshape(C.shape[0], B.shape[1])
        if A.shape[0] != A.shape[1]:
            raise ValueError("A must be square")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)
        if self.Bw is not None:
            object.__setattr__(self, "Bw", np.asarray(self.Bw, dtype=float).reshape(A.shape[0], -1))
        if self.Ts is not None and not self.Ts > 0:
            raise ValueError("discrete model needs Ts > 0")

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    @property
    def is_discrete(self) -> bool:
        return self.Ts is not None


@dataclass(frozen=True)
class DiscreteTF:
    """``G(z) = num(z) / den(z)`` with monic ``den``."""

    num: Poly
    den: Poly
    Ts: float

    def __post_init__(self):
        num = self.num if isinstance(self.num, Poly) else Poly(self.num)
        den = self.den if isinstance(self.den, Poly) else Poly(self.den)
        if den.is_zero:
            raise DomainError("zero denominator")
        if num.degree > den.degree:
            raise DomainError("improper transfer function")
        lead = den.lead
        object.__setattr__(self, "num", Poly(num.coeffs / lead))
        object.__setattr__(self, "den", Poly(den.coeffs / lead))

    def __call__(self, z):
        return self.num(z) / self.den(z)

    def __mul__(self, other: "DiscreteTF") -> "DiscreteTF":
        if not np.isclose(self.Ts, other.Ts, rtol=1e-12, atol=0):
            raise DomainError("sample times differ")
        return DiscreteTF(self.num * other.num, self.den * other.den, self.Ts)

    def dc_gain(self) -> float:
        return float(self(1.0))


def build_lateral_ss(p: VehicleParams) -> StateSpace:
    """Continuous lateral/heading error model, input steering angle (rad),
    output lateral error (m), disturbance input desired yaw rate (rad/s)."""
    m, vx, Iz, Cf, Cr, lf, lr = p.m, p.vx, p.Iz, p.Cf, p.Cr, p.lf, p.lr
    A = np.array([
        [0.0, 1.0, 0.0, 0.0],
        [0.0, -(2 * Cf + 2 * Cr) / (m * vx), (2 * Cf + 2 * Cr) / m, (-2 * Cf * lf + 2 * Cr * lr) / (m * vx)],
        [0.0, 0.0, 0.0, 1.0],
        [0.0, (2 * Cr * lr - 2 * Cf * lf) / (Iz * vx), (2 * Cf * lf - 2 * Cr * lr) / Iz,
         (-2 * Cf * lf ** 2 - 2 * Cr * lr ** 2) / (Iz * vx)],
    ])
    B = np.array([[0.0], [2 * Cf / m], [0.0], [2 * Cf * lf / Iz]])
    Bw = np.array([[0.0], [-(2 * Cf * lf - 2 * Cr * lr) / (m * vx) - vx], [0.0],
                   [-(2 * Cf * lf ** 2 + 2 * Cr * lr ** 2) / (Iz * vx)]])
    C = np.array([[1.0, 0.0, 0.0, 0.0]])
    return StateSpace(A, B, C, np.zeros((1, 1)), None, Bw)


def zoh_discretize(ss: StateSpace, Ts: float) -> StateSpace:
    """Zero-order-hold discretization through one augmented matrix exponential.

    Disturbance inputs are held over the sample as well.
    """
    if ss.is_discrete:
        raise DomainError("model is already discrete")
    if not Ts > 0:
        raise DomainError("Ts must be positive")
    n = ss.n_states
    Bfull = ss.B if ss.Bw is None else np.hstack([ss.B, ss.Bw])
    m = Bfull.shape[1]
    M = np.zeros((n + m, n + m))
    M[:n, :n] = ss.A
    M[:n, n:] = Bfull
    E = expm(M * Ts)
    Ad = E[:n, :n]
    Bd_all = E[:n, n:]
    nu = ss.B.shape[1]
    Bw = None if ss.Bw is None else Bd_all[:, nu:]
    return StateSpace(Ad, Bd_all[:, :nu], ss.C, ss.D, Ts, Bw)


def _leverrier(A: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Faddeev-Leverrier: characteristic coefficients (descending, monic) and
    the adjugate expansion ``adj(zI - A) = sum_k N_k z^(n-1-k)``."""
    n = A.shape[0]
    coef = [1.0]
    Nk = np.eye(n)
    mats = [Nk]
    for k in range(1, n + 1):
        AN = A @ Nk
        ck = -np.trace(AN) / k
        coef.append(ck)
        Nk = AN + ck * np.eye(n)
        if k < n:
            mats.append(Nk)
    return np.array(coef), mats


def ss_to_tf(ss: StateSpace, input_index: int = 0, output_index: int = 0,
             rtol: float = 1e-12) -> DiscreteTF:
    """Transfer function of one input/output channel of a discrete model."""
    if not ss.is_discrete:
        raise DomainError("ss_to_tf expects a discrete model")
    den_desc, mats = _leverrier(ss.A)
    n = ss.n_states
    b = ss.B[:, input_index]
    c = ss.C[output_index, :]
    d = ss.D[output_index, input_index]
    num_desc = np.zeros(n + 1)
    for k, Nk in enumerate(mats):
        num_desc[k + 1] = c @ Nk @ b
    num_desc = num_desc + d * den_desc
    num = Poly(num_desc[::-1]).trimmed(rtol)
    den = Poly(den_desc[::-1]).trimmed(rtol)
    return DiscreteTF(num, den, ss.Ts)


def augment_with_filter_poles(G: DiscreteTF, C: float, order: int) -> DiscreteTF:
    """``G(z) * z**order / (C z + 1 - C)**order``: the plant seen by the
    equivalent PI (order 1) or PID (order 2) controller."""
    if order not in (1, 2):
        raise DomainError("order must be 1 or 2")
    if C < 1:
        raise DomainError(f"filter constant C={C} < 1 puts the filter pole outside the unit circle")
    filt = Poly([1.0 - C, C])
    return DiscreteTF(G.num * Poly.monomial(order), G.den * filt ** order, G.Ts)


def lateral_design_plant(params: VehicleParams = REFERENCE_VEHICLE, Ts: float = 0.05):
    """Convenience: discrete lateral model and its steering -> lateral-error TF."""
    ssd = zoh_discretize(build_lateral_ss(params), Ts)
    return ssd, ss_to_tf(ssd)
