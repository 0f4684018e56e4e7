"""Complete stabilizing sets of discrete two-term (PI) and three-term (PID) controllers.

Controller templates::

    PI : C(z) = K1 (z - K2) / (z - 1)
    PID: C(z) = (K2 z^2 + K1 z + K0) / (z (z - 1)),   K3 = K2 - K0

For a fixed *gate* value (``K1`` for PI, ``K3`` for PID) the imaginary part
``T(u)`` of the Tchebychev form of ``nu(z) = z^-s delta(z) N(1/z)`` no longer
depends on the remaining gains. Its real zeros in ``(-1, 1)`` together with the
endpoints ``u = -1, +1`` fix a finite number of evaluation points; the sign
patterns (strings) of ``R`` at those points that produce the required phase
change are exactly the stabilizing ones, and each string turns into linear
inequalities in the remaining gains.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from itertools import product
from typing import Optional, Sequence

import numpy as np

from .lateralplant import DiscreteTF
from .polycore import (
    DomainError,
    Poly,
    count_in_unit_disc,
    first_nonzero_derivative_sign,
    odd_zeros_in_open_interval,
    tcheby_form,
)

log = logging.getLogger(__name__)

__all__ = [
    "Kind",
    "PTriple",
    "RTForms",
    "SignatureInfo",
    "StabRegionSlice",
    "StabilizingSet",
    "p_triple",
    "rt_forms",
    "signature",
    "gate_sweep",
    "admissible_strings",
    "region_for_string",
    "clip_halfplane",
    "slice_regions",
    "stabilizing_set",
    "string_sigma",
    "closed_loop_poly",
    "point_in_polygon",
    "distance_to_polygon",
    "polygon_area",
]

MAX_STRING_ZEROS = 20
AREA_EPS = 1e-12
ENDPOINT_ZERO_TOL = 1e-10
DEFAULT_STEPS = 400


class Kind(str, Enum):
    PI = "pi"
    PID = "pid"


_U = Poly([0.0, 1.0])
_U_PLUS_1 = Poly([1.0, 1.0])
_ONE_MINUS_U2 = Poly([1.0, 0.0, -1.0])


@dataclass(frozen=True)
class PTriple:
    P1: Poly
    P2: Poly
    P3: Poly


def p_triple(N: Poly, D: Poly) -> PTriple:
    if N.is_zero or D.is_zero:
        raise DomainError("N and D must be nonzero")
    n, d = tcheby_form(N), tcheby_form(D)
    P1 = d.R * n.R + _ONE_MINUS_U2 * d.T * n.T
    P2 = n.R * d.T - d.R * n.T
    P3 = n.R * n.R + _ONE_MINUS_U2 * n.T * n.T
    return PTriple(P1, P2, P3)


@dataclass(frozen=True)
class RTForms:
    """Parametric real/imaginary parts of ``nu`` on the unit circle.

    ``T(u; g) = g P3 + P1 - (u + 1) P2`` for both kinds. ``R`` is affine in the
    non-gate gains once the gate is fixed; :meth:`R_affine` returns the
    coefficients ``(a, b, c)`` with

        PID: R(t) = a K1 + b K2 + c        (gate K3)
        PI : R(t) =        b K2 + c        (gate K1, a == 0)
    """

    kind: Kind
    P: PTriple
    T0: Poly = field(init=False)
    R0: Poly = field(init=False)

    def __post_init__(self):
        P = self.P
        object.__setattr__(self, "T0", P.P1 - _U_PLUS_1 * P.P2)
        object.__setattr__(self, "R0", -(_U_PLUS_1 * P.P1) - _ONE_MINUS_U2 * P.P2)

    def T(self, gate: float) -> Poly:
        return gate * self.P.P3 + self.T0

    def R(self, gate: float, *gains: float) -> Poly:
        """``R(u)`` for explicit gains: PI ``(K2,)``; PID ``(K1, K2)``."""
        P3 = self.P.P3
        if self.kind is Kind.PI:
            (K2,) = gains
            return self.R0 - gate * (_U + K2) * P3
        K1, K2 = gains
        return self.R0 - ((2 * K2 - gate) * _U - K1) * P3

    def R_affine(self, gate: float, t):
        t = np.asarray(t, dtype=float)
        p3 = self.P.P3(t)
        r0 = self.R0(t)
        if self.kind is Kind.PI:
            return np.zeros_like(t), -gate * p3, r0 - gate * t * p3
        return p3, -2.0 * t * p3, r0 + gate * t * p3


def rt_forms(kind: Kind | str, P: PTriple) -> RTForms:
    return RTForms(Kind(kind), P)


@dataclass(frozen=True)
class SignatureInfo:
    sigma: int
    i_delta: int
    i_Nr: int
    l1: int


def signature(N: Poly, D: Poly, kind: Kind | str) -> SignatureInfo:
    """Signature that ``nu`` must have for ``delta`` to be Schur stable."""
    kind = Kind(kind)
    l1 = N.degree
    n1 = D.degree
    # roots of N at z = 0 go to infinity under reversal and are not counted
    Nr = N.reversed()
    i_Nr = count_in_unit_disc(Nr) if Nr.degree >= 1 else 0
    if kind is Kind.PI:
        i_delta = n1 + 1
        sigma = i_delta + i_Nr - l1
    else:
        i_delta = n1 + 2
        sigma = i_delta + i_Nr - l1 - 1
    return SignatureInfo(sigma, i_delta, i_Nr, l1)


def string_sigma(string: Sequence[int], sign_T: int) -> float:
    """Signature produced by a sign string (may be a half-integer for odd sums)."""
    k = len(string) - 2
    acc = string[0] + (-1) ** (k + 1) * string[-1]
    acc += 2 * sum((-1) ** j * string[j] for j in range(1, k + 1))
    return sign_T * acc / 2


def admissible_strings(k: int, sigma: int, sign_T_at_minus1: int) -> list[tuple[int, ...]]:
    """All ``{-1, +1}^(k+2)`` strings whose signature equals ``sigma``."""
    if k < 0:
        raise DomainError("k must be nonnegative")
    if k > MAX_STRING_ZEROS:
        raise MemoryError(f"k={k} zeros: 2^{k + 2} strings is too many to enumerate")
    if sign_T_at_minus1 not in (-1, 1):
        raise DomainError("sign must be +1 or -1")
    target = 2 * sigma  # compare in integers
    out = []
    for s in product((1, -1), repeat=k + 2):
        acc = s[0] + (-1) ** (k + 1) * s[-1] + 2 * sum((-1) ** j * s[j] for j in range(1, k + 1))
        if sign_T_at_minus1 * acc == target:
            out.append(s)
    return out


# --- geometry ---------------------------------------------------------------

def _box_polygon(box) -> np.ndarray:
    x0, x1, y0, y1 = box
    return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=float)


def polygon_area(poly: np.ndarray) -> float:
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def clip_halfplane(poly: np.ndarray, a: float, b: float, c: float) -> np.ndarray:
    """Clip a convex CCW polygon to ``a x + b y + c >= 0`` (Sutherland-Hodgman)."""
    if len(poly) == 0:
        return poly
    vals = poly @ np.array([a, b]) + c
    if np.all(vals >= 0):
        return poly
    if np.all(vals <= 0):
        return poly[:0]
    out = []
    n = len(poly)
    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        vp, vq = vals[i], vals[(i + 1) % n]
        if vp >= 0:
            out.append(p)
        if (vp >= 0) != (vq >= 0):
            w = vp / (vp - vq)
            out.append(p + w * (q - p))
    return np.array(out) if out else poly[:0]


def point_in_polygon(poly: np.ndarray, pt, tol: float = 0.0) -> bool:
    """Convex CCW polygon membership; ``tol`` > 0 grows the polygon by ``tol``."""
    if len(poly) < 3:
        return False
    e = np.roll(poly, -1, axis=0) - poly
    rel = np.asarray(pt, dtype=float) - poly
    cross = e[:, 0] * rel[:, 1] - e[:, 1] * rel[:, 0]
    lens = np.hypot(e[:, 0], e[:, 1])
    return bool(np.all(cross >= -tol * lens))


def distance_to_polygon(poly: np.ndarray, pt) -> float:
    """Euclidean distance from ``pt`` to a convex polygon (0 inside)."""
    if point_in_polygon(poly, pt):
        return 0.0
    pt = np.asarray(pt, dtype=float)
    best = np.inf
    n = len(poly)
    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        d = q - p
        L2 = float(d @ d)
        w = 0.0 if L2 == 0 else min(1.0, max(0.0, float((pt - p) @ d) / L2))
        best = min(best, float(np.hypot(*(p + w * d - pt))))
    return best


# --- regions ----------------------------------------------------------------

@dataclass
class StabRegionSlice:
    """Stabilizing regions for one gate value.

    PID regions are CCW vertex arrays in the ``(K1, K2)`` plane; PI regions are
    ``(K2_low, K2_high)`` open intervals.
    """

    gate: float
    regions: list
    strings: list = field(default_factory=list)
    zeros: tuple = ()

    def contains(self, kind: Kind, pt, tol: float = 0.0) -> bool:
        if kind is Kind.PI:
            x = float(np.atleast_1d(pt)[-1])
            return any(lo - tol < x < hi + tol for lo, hi in self.regions)
        return any(point_in_polygon(r, pt, tol) for r in self.regions)

    def distance(self, kind: Kind, pt) -> float:
        if not self.regions:
            return np.inf
        if kind is Kind.PI:
            x = float(np.atleast_1d(pt)[-1])
            return min(0.0 if lo < x < hi else min(abs(x - lo), abs(x - hi)) for lo, hi in self.regions)
        return min(distance_to_polygon(r, pt) for r in self.regions)


@dataclass
class StabilizingSet:
    kind: Kind
    slices: list[StabRegionSlice]
    gate_range: tuple[float, float]
    steps: int
    box: tuple[float, float, float, float]
    sigma: int = 0

    @property
    def empty(self) -> bool:
        return not self.slices

    @property
    def gates(self) -> np.ndarray:
        return np.array([s.gate for s in self.slices])

    @property
    def sweep_gates(self) -> np.ndarray:
        return np.linspace(self.gate_range[0], self.gate_range[1], self.steps)

    @property
    def spacing(self) -> float:
        return (self.gate_range[1] - self.gate_range[0]) / (self.steps - 1)

    def nearest_slice(self, gate: float) -> Optional[StabRegionSlice]:
        if not self.slices:
            return None
        return self.slices[int(np.argmin(np.abs(self.gates - gate)))]

    def slice_at(self, gate: float) -> Optional[StabRegionSlice]:
        for s in self.slices:
            if s.gate == gate:
                return s
        return None


def _bounds_for(kind: Kind, box) -> np.ndarray | tuple:
    return _box_polygon(box) if kind is Kind.PID else (box[2], box[3])


def region_for_string(string: Sequence[int], zeros: Sequence[float], forms: RTForms,
                      gate: float, box) -> Optional[np.ndarray | tuple[float, float]]:
    """Feasible region of ``R(t_j) * i_j > 0`` for all evaluation points.

    Returns a polygon (PID) or an interval (PI), or ``None`` when empty.
    """
    ts = np.concatenate([[-1.0], np.asarray(zeros, dtype=float), [1.0]])
    if len(string) != len(ts):
        raise DomainError("string length must equal number of zeros + 2")
    a, b, c = forms.R_affine(gate, ts)
    region = _bounds_for(forms.kind, box)
    for s, aj, bj, cj in zip(string, a, b, c):
        region = _apply_constraint(forms.kind, region, s * aj, s * bj, s * cj)
        if region is None:
            return None
    return region


def _apply_constraint(kind: Kind, region, a: float, b: float, c: float):
    """Intersect with ``a K1 + b K2 + c > 0`` (``a`` ignored for PI)."""
    scale = max(abs(a), abs(b), abs(c), 1e-300)
    if kind is Kind.PI:
        lo, hi = region
        if abs(b) <= 1e-14 * scale:
            return region if c > ENDPOINT_ZERO_TOL * scale else None
        x = -c / b
        if b > 0:
            lo = max(lo, x)
        else:
            hi = min(hi, x)
        return (lo, hi) if hi - lo > AREA_EPS else None
    if abs(a) <= 1e-14 * scale and abs(b) <= 1e-14 * scale:
        return region if c > ENDPOINT_ZERO_TOL * scale else None
    poly = clip_halfplane(region, a, b, c)
    if len(poly) < 3 or polygon_area(poly) < AREA_EPS:
        return None
    return poly


def _sign_right_of_minus1(T: Poly, zeros) -> int:
    # equals sgn T^(p)(-1) for a zero of order p at -1, and agrees with the
    # zero finder when T(-1) is tiny but nonzero
    first = zeros[0] if len(zeros) else 1.0
    v = T(-1.0 + 0.5 * (first + 1.0))
    if v != 0.0:
        return 1 if v > 0 else -1
    return first_nonzero_derivative_sign(T, -1.0)[1]


def slice_regions(forms: RTForms, sigma: int, gate: float, box,
                  zeros: Optional[np.ndarray] = None):
    """All stabilizing regions for one gate value plus the strings used.

    Strings are searched depth first with the partially clipped region carried
    along, so sign prefixes with an empty region are cut early. The final
    strings are a subset of :func:`admissible_strings`.
    """
    T = forms.T(gate)
    if T.is_zero:
        return [], [], ()
    if zeros is None:
        zeros = odd_zeros_in_open_interval(T, -1.0, 1.0)
    k = len(zeros)
    if k < sigma - 1:
        return [], [], tuple(zeros)
    sgn = _sign_right_of_minus1(T, zeros)
    ts = np.concatenate([[-1.0], zeros, [1.0]])
    a, b, c = forms.R_affine(gate, ts)
    # weights of each position in the signature sum
    w = np.array([1] + [2 * (-1) ** j for j in range(1, k + 1)] + [(-1) ** (k + 1)]) * sgn
    remaining = np.concatenate([np.cumsum(np.abs(w)[::-1])[::-1][1:], [0]])
    target = 2 * sigma
    regions, strings = [], []

    def dfs(j, region, acc, prefix):
        for s in (1, -1):
            acc_j = acc + s * w[j]
            if abs(target - acc_j) > remaining[j]:
                continue
            r = _apply_constraint(forms.kind, region, s * a[j], s * b[j], s * c[j])
            if r is None:
                continue
            if j == k + 1:
                if acc_j == target:
                    regions.append(r)
                    strings.append(tuple(prefix + [s]))
            else:
                dfs(j + 1, r, acc_j, prefix + [s])

    dfs(0, _bounds_for(forms.kind, box), 0, [])
    return regions, strings, tuple(float(z) for z in zeros)


def gate_sweep(forms: RTForms, sigma: int, lo: float, hi: float, steps: int = DEFAULT_STEPS):
    """Gate values whose ``T`` has at least ``sigma - 1`` odd zeros in (-1, 1)."""
    if steps < 2 or not lo < hi:
        raise DomainError("sweep needs steps >= 2 and lo < hi")
    out = []
    for g in np.linspace(lo, hi, steps):
        T = forms.T(g)
        if T.is_zero:
            continue
        z = odd_zeros_in_open_interval(T, -1.0, 1.0)
        if len(z) >= sigma - 1:
            out.append((float(g), z))
    return out


def default_box(lo: float, hi: float) -> tuple[float, float, float, float]:
    h = 1000.0 * max(1.0, abs(lo), abs(hi))
    return (-h, h, -h, h)


def _slice_job(args):
    forms, sigma, gate, zeros, box = args
    regions, strings, zs = slice_regions(forms, sigma, gate, box, zeros)
    return StabRegionSlice(gate, regions, strings, zs) if regions else None


def _workers(workers: Optional[int]) -> int:
    cap = os.environ.get("MFCFORGE_THREADS")
    if workers is None:
        workers = int(cap) if cap else 1
    elif cap:
        workers = min(workers, int(cap))
    return max(1, workers)


def stabilizing_set(G: DiscreteTF, kind: Kind | str, lo: float, hi: float,
                    steps: int = DEFAULT_STEPS, box=None,
                    workers: Optional[int] = None) -> StabilizingSet:
    """Stabilizing set of ``kind`` controllers for plant ``G`` over a gate sweep.

    An empty result means no controller of this kind stabilizes ``G`` within
    the sweep.
    """
    kind = Kind(kind)
    box = tuple(box) if box is not None else default_box(lo, hi)
    N, D = G.num, G.den
    sig = signature(N, D, kind)
    forms = rt_forms(kind, p_triple(N, D))
    candidates = gate_sweep(forms, sig.sigma, lo, hi, steps)
    jobs = [(forms, sig.sigma, g, z, box) for g, z in candidates]
    nw = _workers(workers)
    if nw > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=nw) as ex:
            results = list(ex.map(_slice_job, jobs, chunksize=max(1, len(jobs) // (4 * nw))))
    else:
        results = [_slice_job(j) for j in jobs]
    slices = [s for s in results if s is not None]
    log.debug("stabilizing set: %d/%d gate values with regions", len(slices), steps)
    return StabilizingSet(kind, slices, (float(lo), float(hi)), int(steps), box, sig.sigma)


# --- direct closed-loop polynomials (used by checks and the bridge) -----------

def closed_loop_poly(N: Poly, D: Poly, kind: Kind | str, gains: Sequence[float]) -> Poly:
    """``delta(z)`` for explicit gains: PI ``(K1, K2)``, PID ``(K2, K1, K0)``."""
    kind = Kind(kind)
    if kind is Kind.PI:
        K1, K2 = gains
        return Poly([-1.0, 1.0]) * D + K1 * Poly([-K2, 1.0]) * N
    K2, K1, K0 = gains
    return Poly([0.0, -1.0, 1.0]) * D + Poly([K0, K1, K2]) * N
