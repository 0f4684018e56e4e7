"""Time-domain model-free control: ultra-local model, F estimator and iPD law.

Per sample, with ``n`` the ultra-local order::

    e      = r - y
    d1     = D(e),  dn = D^n(e)              (filtered differences, same C)
    y_n    = r_n - dn                        (n-th derivative estimate)
    F_hat  = y_n - alpha * u_prev
    u      = (-F_hat + r_n + Kp e + Kd d1) / alpha

``r_n`` is the analytic n-th derivative of the reference. Estimating the
output derivative through the error keeps the loop identical to the linear
iPD transfer function for any reference whose derivative is known exactly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .lateralplant import StateSpace
from .mfcbridge import FilterConfig, IpdGains
from .polycore import DomainError

__all__ = [
    "SimTrace",
    "FilteredDerivative",
    "UltraLocalState",
    "ReferenceSignal",
    "filtered_derivative_step",
    "f_estimate",
    "ipd_control_step",
    "make_reference",
    "simulate_tracking",
    "DIVERGENCE_LIMIT",
]

DIVERGENCE_LIMIT = 1e6
TRACE_HEADER = ("t", "ref", "y", "e", "u")


@dataclass
class SimTrace:
    t: np.ndarray
    ref: np.ndarray
    y: np.ndarray
    e: np.ndarray
    u: np.ndarray
    Ts: float
    diverged: bool = False
    F_hat: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.t)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_HEADER)
            for row in zip(self.t, self.ref, self.y, self.e, self.u):
                w.writerow([f"{v:.17g}" for v in row])

    @classmethod
    def from_csv(cls, path, Ts: Optional[float] = None) -> "SimTrace":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if tuple(rows[0]) != TRACE_HEADER:
            raise ValueError(f"unexpected trace header {rows[0]}")
        data = np.array(rows[1:], dtype=float).reshape(-1, 5)
        t = data[:, 0]
        if Ts is None:
            Ts = float(t[1] - t[0]) if len(t) > 1 else 1.0
        return cls(t, data[:, 1], data[:, 2], data[:, 3], data[:, 4], Ts)


@dataclass
class FilteredDerivative:
    """``C d_k + (1 - C) d_{k-1} = (x_k - x_{k-1}) / Ts`` with zero initial state."""

    C: float
    Ts: float
    x_prev: float = 0.0
    d_prev: float = 0.0

    def step(self, x: float) -> float:
        d = ((x - self.x_prev) / self.Ts - (1.0 - self.C) * self.d_prev) / self.C
        self.x_prev, self.d_prev = x, d
        return d


def filtered_derivative_step(state: FilteredDerivative, sample: float) -> float:
    return state.step(sample)


@dataclass
class UltraLocalState:
    """Estimator and filter state of an order-``n`` iPD controller."""

    n: int
    f: FilterConfig
    stages: list = field(default_factory=list)
    F_hat: float = 0.0
    u_prev: float = 0.0
    e_deriv: float = 0.0

    def __post_init__(self):
        if self.n not in (1, 2):
            raise DomainError("order must be 1 or 2")
        if not self.stages:
            self.stages = [FilteredDerivative(self.f.C, self.f.Ts) for _ in range(self.n)]

    def differentiate(self, e: float) -> tuple[float, float]:
        """Push ``e`` through the cascade; returns (first, n-th) derivative."""
        d = e
        outs = []
        for st in self.stages:
            d = st.step(d)
            outs.append(d)
        return outs[0], outs[-1]


def f_estimate(state: UltraLocalState, y_deriv_n: float, alpha: float) -> float:
    state.F_hat = y_deriv_n - alpha * state.u_prev
    return state.F_hat


def ipd_control_step(state: UltraLocalState, e: float, gains: IpdGains,
                     yr_deriv_n: float = 0.0, y_deriv_n: Optional[float] = None) -> float:
    """One iPD update. ``y_deriv_n`` overrides the error-based output
    derivative estimate (e.g. to differentiate a measured output directly)."""
    if gains.n != state.n:
        raise DomainError("gain order does not match controller state")
    d1, dn = state.differentiate(e)
    state.e_deriv = d1
    if y_deriv_n is None:
        y_deriv_n = yr_deriv_n - dn
    F_hat = f_estimate(state, y_deriv_n, gains.alpha)
    u = (-F_hat + yr_deriv_n + gains.Kp * e + gains.Kd * d1) / gains.alpha
    state.u_prev = u
    return u


@dataclass(frozen=True)
class ReferenceSignal:
    """Reference samples and their analytic first and second derivatives."""

    kind: str
    values: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    Ts: float

    def deriv(self, n: int) -> np.ndarray:
        return self.d1 if n == 1 else self.d2


def make_reference(kind: str, N: int, Ts: float, amplitude: float = 1.0,
                   start: float = 0.0, tau: float = 0.5,
                   samples: Optional[np.ndarray] = None) -> ReferenceSignal:
    """``step``, ``smoothstep`` (critically damped second-order shaping with
    time constant ``tau``) or ``sampled`` (given samples, derivatives 0)."""
    if not math.isfinite(amplitude):
        raise DomainError("amplitude must be finite")
    t = np.arange(N) * Ts
    if kind == "step":
        v = np.where(t >= start - 1e-12 * Ts, amplitude, 0.0)
        zero = np.zeros(N)
        return ReferenceSignal(kind, v, zero, zero.copy(), Ts)
    if kind in ("smoothstep", "smoothed_step"):
        if not tau > 0:
            raise DomainError("tau must be positive")
        s = np.clip(t - start, 0.0, None) / tau
        on = t >= start
        ex = np.exp(-s)
        v = np.where(on, amplitude * (1.0 - (1.0 + s) * ex), 0.0)
        d1 = np.where(on, amplitude * s * ex / tau, 0.0)
        d2 = np.where(on, amplitude * (1.0 - s) * ex / tau ** 2, 0.0)
        return ReferenceSignal("smoothstep", v, d1, d2, Ts)
    if kind == "sampled":
        v = np.asarray(samples, dtype=float)
        if v.shape != (N,):
            raise DomainError("sampled reference must have N samples")
        zero = np.zeros(N)
        return ReferenceSignal(kind, v, zero, zero.copy(), Ts)
    raise DomainError(f"unknown reference kind {kind!r}")


def simulate_tracking(plant: StateSpace, gains: IpdGains, f: FilterConfig,
                      ref: ReferenceSignal, N: Optional[int] = None,
                      disturbance: Optional[np.ndarray] = None,
                      x0: Optional[np.ndarray] = None,
                      derivative_source: str = "error") -> SimTrace:
    """Closed-loop iPD tracking on a discrete state-space plant.

    ``disturbance`` is a per-sample sequence (or constant) fed through the
    plant's ``Bw`` columns. ``derivative_source="output"`` differentiates the
    measured output instead of ``r - e``.
    """
    if not plant.is_discrete:
        raise DomainError("plant must be discrete")
    if not math.isclose(plant.Ts, f.Ts, rel_tol=1e-12):
        raise DomainError("plant and filter sample times differ")
    if np.any(plant.D != 0):
        raise DomainError("plant must be strictly proper")
    N = len(ref.values) if N is None else N
    A, B, Cm = plant.A, plant.B[:, 0], plant.C[0]
    if disturbance is not None:
        if plant.Bw is None:
            raise DomainError("plant has no disturbance input")
        w = np.broadcast_to(np.asarray(disturbance, dtype=float), (N,))
        Bw = plant.Bw[:, 0]
    x = np.zeros(plant.n_states) if x0 is None else np.array(x0, dtype=float)
    state = UltraLocalState(gains.n, f)
    ydiff = [FilteredDerivative(f.C, f.Ts) for _ in range(gains.n)] if derivative_source == "output" else None
    rn = ref.deriv(gains.n)
    out = np.zeros((5, N))
    Fh = np.zeros(N)
    diverged = False
    for k in range(N):
        y = float(Cm @ x)
        r = float(ref.values[k])
        e = r - y
        yn = None
        if ydiff is not None:
            yn = y
            for st in ydiff:
                yn = st.step(yn)
        u = ipd_control_step(state, e, gains, float(rn[k]), yn)
        out[:, k] = (k * f.Ts, r, y, e, u)
        Fh[k] = state.F_hat
        if not abs(y) <= DIVERGENCE_LIMIT:
            diverged = True
            N = k + 1
            break
        x = A @ x + B * u
        if disturbance is not None:
            x = x + Bw * w[k]
    out = out[:, :N]
    return SimTrace(*out, Ts=f.Ts, diverged=diverged, F_hat=Fh[:N])
