"""Real polynomials, root location and the unit-circle (Tchebychev) decomposition.

Coefficients are stored in ascending order: ``coeffs[k]`` multiplies ``x**k``.
The same class is used for polynomials in ``z`` and in ``u``.

On the upper half of the unit circle ``z = exp(j*theta)`` we use the variable
``u = -cos(theta)``, so that

    p(exp(j*theta)) = R(u) + j*sqrt(1 - u**2)*T(u)

with ``theta`` running from 0 to pi while ``u`` runs from -1 to +1.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Poly",
    "TchebyForm",
    "DomainError",
    "MarginalRootError",
    "cheb_pair",
    "tcheby_form",
    "tcheby_form_laurent",
    "roots",
    "count_in_unit_disc",
    "odd_zeros_in_open_interval",
    "first_nonzero_derivative_sign",
]

#: relative threshold below which coefficients are treated as zero
TRIM_RTOL = 1e-12


class DomainError(ValueError):
    """Operation called outside its mathematical domain."""


class MarginalRootError(DomainError):
    """A root sits on (or numerically on) the unit circle."""


@dataclass(frozen=True, eq=False)
class Poly:
    """Real polynomial with ascending coefficients.

    Trailing zeros are trimmed on construction; the zero polynomial is stored
    as ``[0.0]`` and has degree -1.
    """

    coeffs: np.ndarray

    def __init__(self, coeffs: Iterable[float] | float):
        c = np.atleast_1d(np.asarray(coeffs, dtype=float)).copy()
        if c.ndim != 1:
            raise ValueError("coefficients must be one-dimensional")
        nz = np.flatnonzero(c)
        c = c[: nz[-1] + 1] if nz.size else np.zeros(1)
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    # construction helpers -------------------------------------------------
    @classmethod
    def from_roots(cls, rts: Sequence[complex], lead: float = 1.0) -> "Poly":
        c = np.array([lead], dtype=complex)
        for r in rts:
            c = np.convolve(c, [-r, 1.0])
        return cls(np.real_if_close(c, tol=1e6).real)

    @classmethod
    def monomial(cls, k: int, a: float = 1.0) -> "Poly":
        c = np.zeros(k + 1)
        c[k] = a
        return cls(c)

    # basic properties -----------------------------------------------------
    @property
    def degree(self) -> int:
        return -1 if self.is_zero else len(self.coeffs) - 1

    @property
    def is_zero(self) -> bool:
        return len(self.coeffs) == 1 and self.coeffs[0] == 0.0

    @property
    def lead(self) -> float:
        return float(self.coeffs[-1])

    def trimmed(self, rtol: float = TRIM_RTOL) -> "Poly":
        """Zero out coefficients smaller than ``rtol * max|coeff|``."""
        scale = np.max(np.abs(self.coeffs))
        if scale == 0.0:
            return self
        c = np.where(np.abs(self.coeffs) < rtol * scale, 0.0, self.coeffs)
        return Poly(c)

    def monic(self) -> "Poly":
        if self.is_zero:
            raise DomainError("zero polynomial cannot be normalized")
        return Poly(self.coeffs / self.lead)

    def reversed(self) -> "Poly":
        """Coefficient reversal, ``z**deg * p(1/z)``."""
        return Poly(self.coeffs[::-1])

    def deriv(self, m: int = 1) -> "Poly":
        return Poly(np.polynomial.polynomial.polyder(self.coeffs, m)) if self.degree >= m else Poly(0.0)

    # arithmetic -----------------------------------------------------------
    def __add__(self, other) -> "Poly":
        other = _as_poly(other)
        n = max(len(self.coeffs), len(other.coeffs))
        return Poly(np.pad(self.coeffs, (0, n - len(self.coeffs)))
                    + np.pad(other.coeffs, (0, n - len(other.coeffs))))

    __radd__ = __add__

    def __neg__(self) -> "Poly":
        return Poly(-self.coeffs)

    def __sub__(self, other) -> "Poly":
        return self + (-_as_poly(other))

    def __rsub__(self, other) -> "Poly":
        return _as_poly(other) - self

    def __mul__(self, other) -> "Poly":
        other = _as_poly(other)
        return Poly(np.convolve(self.coeffs, other.coeffs))

    __rmul__ = __mul__

    def __pow__(self, k: int) -> "Poly":
        out = Poly(1.0)
        for _ in range(k):
            out = out * self
        return out

    def __call__(self, x):
        # Horner; works for scalars and arrays, real or complex
        x = np.asarray(x)
        acc = np.zeros_like(x, dtype=np.result_type(x, float)) + self.coeffs[-1]
        for a in self.coeffs[-2::-1]:
            acc = acc * x + a
        return acc if acc.ndim else acc[()]

    def __eq__(self, other) -> bool:
        if not isinstance(other, (Poly, int, float)):
            return NotImplemented
        other = _as_poly(other)
        return len(self.coeffs) == len(other.coeffs) and bool(np.all(self.coeffs == other.coeffs))

    def __hash__(self) -> int:
        return hash(tuple(self.coeffs))

    def __repr__(self) -> str:
        return f"Poly({[float(c) for c in self.coeffs]})"


def _as_poly(p) -> Poly:
    return p if isinstance(p, Poly) else Poly(p)


@dataclass(frozen=True)
class TchebyForm:
    """``p(e^{j theta}) = R(u) + j sqrt(1-u^2) T(u)`` with ``u = -cos(theta)``."""

    R: Poly
    T: Poly

    def evaluate_theta(self, theta):
        u = -np.cos(theta)
        return self.R(u) + 1j * np.sin(theta) * self.T(u)




def _cheb_step(c: list, s: list) -> tuple[list, list]:
    # c' = -u c - (1 - u^2) s,  s' = c - u s  (exact integer arithmetic)
    n = len(c) + 1
    c2, s2 = [0] * n, [0] * (n - 1)
    for i, a in enumerate(c):
        c2[i + 1] -= a
        s2[i] += a
    for i, b in enumerate(s):
        c2[i] -= b
        c2[i + 2] += b
        s2[i + 1] -= b
    return c2, s2


@lru_cache(maxsize=None)
def _cheb_coeffs(k: int) -> tuple[tuple, tuple]:
    if k == 1:
        return (0, -1), (1,)
    c, s = _cheb_coeffs(k - 1)
    c2, s2 = _cheb_step(list(c), list(s))
    return tuple(c2), tuple(s2)


@lru_cache(maxsize=None)
def _cheb_pair_cached(k: int) -> tuple[Poly, Poly]:
    c, s = _cheb_coeffs(k)
    return Poly(c), Poly(s)


def cheb_pair(k: int) -> tuple[Poly, Poly]:
    """Generalized Tchebychev pair ``(c_k, s_k)``.

    ``cos(k*theta) = c_k(u)`` and ``sin(k*theta) = sin(theta) * s_k(u)`` for
    ``u = -cos(theta)``. Coefficients are exact integers.
    """
    if int(k) != k or k < 1:
        raise DomainError(f"cheb_pair needs k >= 1, got {k}")
    return _cheb_pair_cached(int(k))


def tcheby_form(p: Poly) -> TchebyForm:
    p = _as_poly(p)
    if p.is_zero:
        raise DomainError("Tchebychev form of the zero polynomial is undefined")
    R = Poly(p.coeffs[0])
    T = Poly(0.0)
    for k in range(1, p.degree + 1):
        a = p.coeffs[k]
        if a == 0.0:
            continue
        c, s = cheb_pair(k)
        R = R + a * c
        T = T + a * s
    return TchebyForm(R, T)


def tcheby_form_laurent(coeffs: Sequence[float], lowest_power: int) -> TchebyForm:
    """Tchebychev form of ``sum_k coeffs[k] * z**(k + lowest_power)``.

    Negative powers use ``cos(-k theta) = c_k`` and ``sin(-k theta) = -sin(theta) s_k``.
    """
    R = Poly(0.0)
    T = Poly(0.0)
    for i, a in enumerate(coeffs):
        k = i + lowest_power
        if a == 0.0:
            continue
        if k == 0:
            R = R + a
            continue
        c, s = cheb_pair(abs(k))
        R = R + a * c
        T = T + (a if k > 0 else -a) * s
    return TchebyForm(R, T)


def roots(p: Poly) -> np.ndarray:
    """All complex roots of ``p`` (companion-matrix eigenvalues)."""
    p = _as_poly(p)
    if p.degree < 1:
        raise DomainError("roots() needs a polynomial of degree >= 1")
    c = p.coeffs / p.lead
    n = p.degree
    comp = np.zeros((n, n))
    comp[1:, :-1] = np.eye(n - 1)
    comp[:, -1] = -c[:-1]
    return np.linalg.eigvals(comp)


def count_in_unit_disc(p: Poly, tol: float = 1e-9) -> int:
    """Number of roots strictly inside the unit circle.

    Raises :class:`MarginalRootError` if a root lies within ``tol`` of the circle.
    """
    p = _as_poly(p)
    if p.is_zero:
        raise DomainError("zero polynomial")
    if p.degree == 0:
        return 0
    mags = np.abs(roots(p))
    if np.any(np.abs(mags - 1.0) < tol):
        raise MarginalRootError(f"root on the unit circle (|z| = {mags[np.argmin(np.abs(mags - 1))]:.12g})")
    return int(np.sum(mags < 1.0))


def _bisect(p: Poly, a: float, b: float, fa: float, xtol: float = 1e-12) -> float:
    while b - a > xtol:
        m = 0.5 * (a + b)
        fm = p(m)
        if fm == 0.0:
            return m
        if (fm > 0) == (fa > 0):
            a, fa = m, fm
        else:
            b = m
    return 0.5 * (a + b)


def odd_zeros_in_open_interval(p: Poly, lo: float = -1.0, hi: float = 1.0,
                               merge_tol: float = 1e-9, cluster_tol: float = 1e-5) -> np.ndarray:
    """Real zeros of odd multiplicity of ``p`` inside ``(lo, hi)``, increasing.

    Candidate locations come from the eigenvalue roots. Candidates closer
    than ``cluster_tol * (hi - lo)`` are grouped first, since a multiple root
    comes back from the eigensolver split by about sqrt(eps). Sign probes sit
    between the groups; each bracket with a sign change is refined by
    bisection. Touching zeros (no sign change) are dropped.
    """
    if not lo < hi:
        raise DomainError("need lo < hi")
    p = _as_poly(p)
    if p.degree < 1:
        return np.empty(0)
    scale = np.max(np.abs(p.coeffs))
    r = roots(p)
    span = hi - lo
    cand = np.sort(r.real[(np.abs(r.imag) < 1e-5 * max(1.0, span))
                          & (r.real > lo - 1e-9) & (r.real < hi + 1e-9)])
    groups: list[list[float]] = []
    for x in cand:
        if groups and x - groups[-1][-1] <= cluster_tol * span:
            groups[-1].append(x)
        else:
            groups.append([x])
    zs = [float(np.mean(g)) for g in groups]
    zs = [z for z in zs if lo < z < hi]
    probes = [lo] + [0.5 * (a + b) for a, b in zip(zs, zs[1:])] + [hi]
    out = []
    for a, b in zip(probes, probes[1:]):
        fa, fb = p(a), p(b)
        # interval end values that are (numerically) zero belong to the boundary
        if abs(fa) <= 1e-14 * scale:
            a = a + 1e-10 * span
            fa = p(a)
        if abs(fb) <= 1e-14 * scale:
            b = b - 1e-10 * span
            fb = p(b)
        if fa == 0.0 or fb == 0.0 or (fa > 0) == (fb > 0):
            continue
        out.append(_bisect(p, a, b, fa))
    res = np.array(out)
    res = res[(res > lo) & (res < hi)]
    if res.size > 1:
        keep = np.concatenate([[True], np.diff(res) > merge_tol])
        res = res[keep]
    return res


def first_nonzero_derivative_sign(p: Poly, x: float, tol: float = 1e-9) -> tuple[int, int]:
    """Return ``(m, sign)`` where ``m`` is the order of the first derivative of
    ``p`` that does not vanish at ``x`` (relative ``tol``) and ``sign`` its sign."""
    p = _as_poly(p)
    if p.is_zero:
        raise DomainError("zero polynomial has no nonvanishing derivative")
    q = p
    m = 0
    while True:
        scale = np.max(np.abs(q.coeffs)) * max(1.0, abs(x)) ** max(q.degree, 0)
        v = q(x)
        if abs(v) > tol * scale or q.degree == 0:
            return m, int(np.sign(v))
        q = q.deriv()
        m += 1
