"""Closed-loop checks: stability, step metrics, gain/phase margins, spec filtering."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence, Union

import numpy as np
from scipy.signal import lfilter

from .lateralplant import DiscreteTF, StateSpace, augment_with_filter_poles
from .mfcbridge import FilterConfig, IpdGains, PidGains, PiGains, controller_tf
from .mfcsim import SimTrace
from .polycore import DomainError, Poly, roots

__all__ = [
    "Stability",
    "StepMetrics",
    "Margins",
    "PerformanceSpec",
    "char_poly",
    "classify_stability",
    "is_stable",
    "closed_loop_tf",
    "step_response",
    "simulate_loop",
    "step_metrics",
    "margins",
    "loop_tf",
    "evaluate",
    "filter_subset",
    "default_horizon",
]

STAB_TOL = 1e-9
N_FREQ = 2000


class Stability(str, Enum):
    STABLE = "stable"
    MARGINAL = "marginal"
    UNSTABLE = "unstable"


def char_poly(Ctf: DiscreteTF, G: DiscreteTF) -> Poly:
    if not math.isclose(Ctf.Ts, G.Ts, rel_tol=1e-12):
        raise DomainError("controller and plant sample times differ")
    return (Ctf.den * G.den + Ctf.num * G.num).monic()


def classify_stability(delta: Poly, tol: float = STAB_TOL) -> Stability:
    if delta.degree < 1:
        return Stability.STABLE
    rmax = float(np.max(np.abs(roots(delta))))
    if rmax < 1.0 - tol:
        return Stability.STABLE
    if rmax <= 1.0 + tol:
        return Stability.MARGINAL
    return Stability.UNSTABLE


def is_stable(delta: Poly, tol: float = STAB_TOL) -> bool:
    return classify_stability(delta, tol) is Stability.STABLE


def closed_loop_tf(Ctf: DiscreteTF, G: DiscreteTF) -> DiscreteTF:
    """Reference-to-output ``C G / (1 + C G)``."""
    return DiscreteTF(Ctf.num * G.num, Ctf.den * G.den + Ctf.num * G.num, G.Ts)


def default_horizon(Ts: float, seconds: float = 60.0) -> int:
    return int(math.ceil(seconds / Ts))


def _simulate_tf(T: DiscreteTF, r: np.ndarray) -> np.ndarray:
    a = T.den.coeffs[::-1]
    b = np.zeros_like(a)
    nb = T.num.coeffs[::-1]
    b[len(a) - len(nb):] = nb
    return lfilter(b, a, r)


def step_response(Ctf: DiscreteTF, G: DiscreteTF, N: Optional[int] = None,
                  ref: Optional[np.ndarray] = None) -> SimTrace:
    """Unit-step (or given reference) response of the linear closed loop."""
    N = default_horizon(G.Ts) if N is None else N
    r = np.ones(N) if ref is None else np.asarray(ref, dtype=float)[:N]
    y = _simulate_tf(closed_loop_tf(Ctf, G), r)
    e = r - y
    u = _simulate_tf(Ctf, e)
    diverged = not np.all(np.isfinite(y)) or bool(np.any(np.abs(y) > 1e6))
    return SimTrace(np.arange(N) * G.Ts, r, y, e, u, G.Ts, diverged)


def simulate_loop(Ctf: DiscreteTF, plant: StateSpace, ref: np.ndarray) -> SimTrace:
    """Linear controller (difference equation of ``Ctf``) around a discrete
    state-space plant. Avoids the plant polynomial, whose coefficients blur
    repeated poles."""
    if not plant.is_discrete or not math.isclose(plant.Ts, Ctf.Ts, rel_tol=1e-12):
        raise DomainError("plant must be discrete with the controller's Ts")
    r = np.asarray(ref, dtype=float)
    N = len(r)
    n = Ctf.den.degree
    a = Ctf.den.coeffs[::-1]  # z^-1 ordering, a[0] == 1
    b = np.zeros(n + 1)
    nb = Ctf.num.coeffs[::-1]
    b[n + 1 - len(nb):] = nb
    e_hist = np.zeros(n + 1)
    u_hist = np.zeros(n + 1)
    x = np.zeros(plant.n_states)
    A, B, Cm = plant.A, plant.B[:, 0], plant.C[0]
    out = np.zeros((5, N))
    for k in range(N):
        y = float(Cm @ x)
        e = r[k] - y
        e_hist = np.roll(e_hist, 1)
        e_hist[0] = e
        u_hist = np.roll(u_hist, 1)
        u = float(b @ e_hist - a[1:] @ u_hist[1:])
        u_hist[0] = u
        out[:, k] = (k * plant.Ts, r[k], y, e, u)
        x = A @ x + B * u
    return SimTrace(*out, Ts=plant.Ts)


@dataclass(frozen=True)
class StepMetrics:
    overshoot: float  # percent
    settling_time: float  # s, inf when not settled
    settling_band: float
    final_value: float
    settled: bool

    def as_dict(self) -> dict:
        return {"os_pct": self.overshoot, "st_s": self.settling_time,
                "band": self.settling_band, "final": self.final_value, "settled": self.settled}


def step_metrics(trace: SimTrace, band: float = 0.02, skip: int = 0) -> StepMetrics:
    """Overshoot and settling time of a step-like trace.

    The final value is the mean of the last 5 % of samples. The settling time
    is the (interpolated) instant after which ``|y - final| <= band * final``
    for good; samples before ``skip`` are ignored.
    """
    y = np.asarray(trace.y, dtype=float)
    t = np.asarray(trace.t, dtype=float)
    n = len(y)
    if n < 20 or trace.diverged or not np.all(np.isfinite(y)):
        return StepMetrics(math.inf, math.inf, band, math.nan, False)
    final = float(np.mean(y[-max(1, n // 20):]))
    if not final > 0:
        raise DomainError(f"final value {final:.4g} <= 0: step metrics undefined")
    lim = band * final
    dev = np.abs(y - final)
    tail = dev[-max(1, n // 10):]
    settled = bool(np.all(tail <= lim))
    ys, dv, ts = y[skip:], dev[skip:], t[skip:]
    os_pct = max(0.0, 100.0 * (float(np.max(ys)) - final) / final)
    outside = np.flatnonzero(dv > lim)
    if not settled:
        st = math.inf
    elif outside.size == 0:
        st = float(ts[0])
    else:
        k = outside[-1]
        # linear interpolation of the last exit from the band
        d0, d1 = dv[k] - lim, dv[k + 1] - lim
        st = float(ts[k] + (ts[k + 1] - ts[k]) * d0 / (d0 - d1)) if d0 != d1 else float(ts[k + 1])
    return StepMetrics(os_pct, st, band, final, settled)


@dataclass(frozen=True)
class Margins:
    """Loop margins. ``gain_margin_db`` is the smallest gain increase (dB) that
    destabilizes the loop, ``inf`` when none; ``lower_gain_margin_db`` the
    (negative) decrease for conditionally stable loops."""

    gain_margin_db: float
    phase_margin_deg: float  # nan when |L| never crosses 1
    phase_crossover: float  # rad/s, nan if none
    gain_crossover: float  # rad/s, nan if none
    lower_gain_margin_db: float = -math.inf
    all_gain_margins_db: tuple = ()
    all_phase_margins_deg: tuple = ()

    @property
    def gain_margin(self) -> float:
        return 10.0 ** (self.gain_margin_db / 20.0)

    def as_dict(self) -> dict:
        return {"gm_db": self.gain_margin_db, "pm_deg": self.phase_margin_deg,
                "w_pc": self.phase_crossover, "w_gc": self.gain_crossover,
                "gm_lower_db": self.lower_gain_margin_db}


def _interp_root(x0, x1, f0, f1):
    return x0 + (x1 - x0) * f0 / (f0 - f1)


def margins(L: DiscreteTF, n_freq: int = N_FREQ, w_min: float = 1e-3) -> Margins:
    """Gain and phase margins of the open loop ``L`` from a log frequency grid
    up to the Nyquist frequency."""
    Ts = L.Ts
    w = np.logspace(np.log10(w_min), np.log10(np.pi / Ts), n_freq)
    w[-1] = np.pi / Ts
    z = np.exp(1j * w * Ts)
    H = L(z)
    mag = np.abs(H)
    ph = np.unwrap(np.angle(H))
    # phase crossovers: unwrapped phase through an odd multiple of 180 deg
    gms, wpc = [], []
    m = (ph - np.pi) / (2 * np.pi)
    cell = np.floor(m)
    for i in np.flatnonzero(cell[1:] != cell[:-1]):
        target = 2 * np.pi * max(cell[i], cell[i + 1]) + np.pi
        wc = _interp_root(w[i], w[i + 1], ph[i] - target, ph[i + 1] - target)
        lm = np.interp(wc, w[i:i + 2], np.log(mag[i:i + 2]))
        gms.append(-20.0 * lm / np.log(10.0))
        wpc.append(wc)
    # the Nyquist frequency itself, where L is real
    Hn = H[-1]
    if Hn.real < 0 and abs(Hn.imag) <= 1e-9 * abs(Hn) and not (wpc and np.isclose(wpc[-1], w[-1])):
        gms.append(-20.0 * np.log10(abs(Hn)))
        wpc.append(w[-1])
    # gain crossovers
    pms, wgc = [], []
    lm = np.log(mag)
    for i in np.flatnonzero(np.sign(lm[1:]) != np.sign(lm[:-1])):
        wc = _interp_root(w[i], w[i + 1], lm[i], lm[i + 1])
        phc = np.interp(wc, w[i:i + 2], ph[i:i + 2])
        pm = (np.degrees(phc) + 180.0 + 180.0) % 360.0 - 180.0
        pms.append(float(pm))
        wgc.append(wc)
    up = [(g, wc) for g, wc in zip(gms, wpc) if g > 0]
    lo = [g for g in gms if g <= 0]
    gm, wp = min(up) if up else (math.inf, math.nan)
    if pms:
        j = int(np.argmin(np.abs(pms)))
        pm, wg = pms[j], wgc[j]
    else:
        pm, wg = math.nan, math.nan
    return Margins(float(gm), float(pm), float(wp), float(wg),
                   float(max(lo)) if lo else -math.inf, tuple(gms), tuple(pms))


Gains = Union[PiGains, PidGains, IpdGains]


def loop_tf(gains: Gains, G: DiscreteTF, f: FilterConfig) -> DiscreteTF:
    """Open loop seen from the iPD side: PI/PID gains act on the filter-augmented
    plant, iPD gains on ``G`` itself (the two are the same loop)."""
    if isinstance(gains, PiGains):
        return controller_tf(gains, f, minimal=True) * augment_with_filter_poles(G, f.C, 1)
    if isinstance(gains, PidGains):
        return controller_tf(gains, f, minimal=True) * augment_with_filter_poles(G, f.C, 2)
    return controller_tf(gains, f, minimal=True) * G


@dataclass(frozen=True)
class PerformanceSpec:
    gm_min_db: Optional[float] = None
    pm_min_deg: Optional[float] = None
    os_max_pct: Optional[float] = None
    st_max_s: Optional[float] = None
    band: float = 0.02
    horizon_s: float = 60.0

    def __post_init__(self):
        if all(v is None for v in (self.gm_min_db, self.pm_min_deg, self.os_max_pct, self.st_max_s)):
            raise DomainError("performance spec needs at least one bound")

    @classmethod
    def with_gm_ratio(cls, gm_ratio: Optional[float] = None, **kw) -> "PerformanceSpec":
        gm_db = None if gm_ratio is None else 20.0 * math.log10(gm_ratio)
        return cls(gm_min_db=gm_db, **kw)

    @property
    def needs_freq(self) -> bool:
        return self.gm_min_db is not None or self.pm_min_deg is not None

    @property
    def needs_time(self) -> bool:
        return self.os_max_pct is not None or self.st_max_s is not None


@dataclass
class Evaluation:
    gains: Gains
    stable: bool
    step: Optional[StepMetrics] = None
    margins: Optional[Margins] = None
    passed: bool = False
    failures: list = field(default_factory=list)

    def as_dict(self) -> dict:
        d = {"stable": self.stable, "passed": self.passed, "failures": list(self.failures)}
        if self.step is not None:
            d.update(self.step.as_dict())
        if self.margins is not None:
            d.update(self.margins.as_dict())
        return d


def evaluate(gains: Gains, G: DiscreteTF, f: FilterConfig, spec: PerformanceSpec) -> Evaluation:
    L = loop_tf(gains, G, f)
    delta = (L.den + L.num).monic()
    ev = Evaluation(gains, is_stable(delta))
    if not ev.stable:
        ev.failures.append("unstable")
        return ev
    if spec.needs_freq:
        ev.margins = margins(L)
        if spec.gm_min_db is not None and not ev.margins.gain_margin_db >= spec.gm_min_db:
            ev.failures.append("gm")
        if spec.pm_min_deg is not None and not ev.margins.phase_margin_deg >= spec.pm_min_deg:
            ev.failures.append("pm")
    if spec.needs_time:
        N = default_horizon(G.Ts, spec.horizon_s)
        T = DiscreteTF(L.num, L.den + L.num, G.Ts)
        y = _simulate_tf(T, np.ones(N))
        tr = SimTrace(np.arange(N) * G.Ts, np.ones(N), y, 1.0 - y, np.zeros(N), G.Ts)
        try:
            ev.step = step_metrics(tr, spec.band)
        except DomainError:
            ev.step = StepMetrics(math.inf, math.inf, spec.band, math.nan, False)
        if spec.os_max_pct is not None and not ev.step.overshoot <= spec.os_max_pct:
            ev.failures.append("os")
        if spec.st_max_s is not None and not ev.step.settling_time <= spec.st_max_s:
            ev.failures.append("st")
    ev.passed = not ev.failures
    return ev


def filter_subset(candidates: Sequence[Gains], G: DiscreteTF, f: FilterConfig,
                  spec: PerformanceSpec, return_evaluations: bool = False):
    """Candidates whose closed loop meets every bound of ``spec``, input order kept."""
    evs = [evaluate(g, G, f, spec) for g in candidates]
    kept = [ev.gains for ev in evs if ev.passed]
    return (kept, evs) if return_evaluations else kept
