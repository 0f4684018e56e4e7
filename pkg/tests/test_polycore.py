import math
import time

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from mfcforge.polycore import (
    DomainError,
    MarginalRootError,
    Poly,
    cheb_pair,
    count_in_unit_disc,
    odd_zeros_in_open_interval,
    roots,
    tcheby_form,
    tcheby_form_laurent,
)

from oracles import sign_change_zeros

coef = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def test_poly_trims_and_zero_degree():
    assert Poly([1.0, 2.0, 0.0, 0.0]).degree == 1
    assert Poly([0.0]).degree == -1
    assert Poly([]).is_zero


def test_poly_arithmetic():
    p, q = Poly([1, 1]), Poly([-1, 1])
    assert (p * q) == Poly([-1, 0, 1])
    assert (p + q) == Poly([0, 2])
    assert (p - p).is_zero
    assert (p ** 3) == Poly([1, 3, 3, 1])
    assert p(2.0) == 3.0


@pytest.mark.parametrize("k,c,s", [
    (1, [0, -1], [1]),
    (2, [-1, 0, 2], [0, -2]),
    (3, [0, 3, 0, -4], [-1, 0, 4]),
    (4, [1, 0, -8, 0, 8], [0, 4, 0, -8]),
    (5, [0, -5, 0, 20, 0, -16], [1, 0, -12, 0, 16]),
])
def test_cheb_pair_table(k, c, s):
    ck, sk = cheb_pair(k)
    assert ck.coeffs.tolist() == c
    assert sk.coeffs.tolist() == s


@pytest.mark.parametrize("k", [0, -3])
def test_cheb_pair_rejects_nonpositive(k):
    with pytest.raises(DomainError):
        cheb_pair(k)


def test_cheb_pair_integer_coefficients():
    for k in range(1, 13):
        for p in cheb_pair(k):
            assert np.all(p.coeffs == np.round(p.coeffs))


@pytest.mark.parametrize("k", range(1, 13))
def test_unit_modulus_identity(k):
    u = np.linspace(-1, 1, 200)
    c, s = cheb_pair(k)
    assert np.max(np.abs(c(u) ** 2 + (1 - u ** 2) * s(u) ** 2 - 1)) < 1e-10


def test_tcheby_form_examples():
    f = tcheby_form(Poly([0, 0, 1]))
    assert f.R == Poly([-1, 0, 2]) and f.T == Poly([0, -2])
    f = tcheby_form(Poly([1.0]))
    assert f.R == Poly([1.0]) and f.T.is_zero
    with pytest.raises(DomainError):
        tcheby_form(Poly([]))


@settings(max_examples=100, deadline=None)
@given(st.lists(coef, min_size=1, max_size=9), st.floats(0.01, math.pi - 0.01))
def test_tcheby_evaluation_identity(cs, theta):
    p = Poly(cs)
    assume(not p.is_zero)
    f = tcheby_form(p)
    z = np.exp(1j * theta)
    lhs = p(z)
    u = -math.cos(theta)
    rhs = f.R(u) + 1j * math.sin(theta) * f.T(u)
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, np.abs(p.coeffs).sum())


def test_laurent_form_negative_powers():
    # z^-1 on the circle is the conjugate of z: R unchanged, T flips sign
    f = tcheby_form_laurent([1.0], -1)
    theta = 0.7
    val = f.R(-math.cos(theta)) + 1j * math.sin(theta) * f.T(-math.cos(theta))
    assert abs(val - np.exp(-1j * theta)) < 1e-14


def test_roots_examples():
    assert sorted(roots(Poly([-0.25, 0, 1])).real) == pytest.approx([-0.5, 0.5])
    r = roots(Poly([1, 0, 1]))
    assert sorted(r.imag) == pytest.approx([-1, 1])
    with pytest.raises(DomainError):
        roots(Poly([3.0]))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=6, max_size=6), st.floats(0.5, 4))
def test_roots_reconstruct(rts, lead):
    p = Poly.from_roots(rts, lead)
    r = roots(p)
    scale = np.max(np.abs(p.coeffs))
    for z in r:
        assert abs(p(z)) <= 1e-8 * scale * max(1.0, abs(z)) ** p.degree
    back = Poly(np.real(np.polynomial.polynomial.polyfromroots(r)) * p.lead)
    assert np.max(np.abs(back.coeffs - p.coeffs)) <= 1e-7 * scale


def test_count_in_unit_disc_examples():
    assert count_in_unit_disc(Poly([-0.25, 0, 1])) == 2
    assert count_in_unit_disc(Poly([-2, 1])) == 0
    assert count_in_unit_disc(Poly.from_roots([0.5, 2.0])) == 1
    with pytest.raises(MarginalRootError):
        count_in_unit_disc(Poly.from_roots([1.0, 0.3]))


root_mod = st.one_of(st.floats(0.05, 0.95), st.floats(1.05, 3.0))


@settings(max_examples=100, deadline=None)
@given(st.lists(root_mod, min_size=1, max_size=4), st.lists(root_mod, min_size=1, max_size=4),
       st.randoms(use_true_random=False))
def test_count_multiplicative(ra, rb, rnd):
    sgn = lambda xs: [x if rnd.random() < 0.5 else -x for x in xs]
    p, q = Poly.from_roots(sgn(ra)), Poly.from_roots(sgn(rb))
    assert count_in_unit_disc(p * q) == count_in_unit_disc(p) + count_in_unit_disc(q)


def test_odd_zeros_examples():
    p = Poly([0, 1]) * Poly([-0.5, 1]) ** 2
    assert odd_zeros_in_open_interval(p, -1, 1) == pytest.approx([0.0], abs=1e-12)
    assert odd_zeros_in_open_interval(Poly([0, -2]), -1, 1) == pytest.approx([0.0], abs=1e-12)
    assert len(odd_zeros_in_open_interval(Poly([1.0, 0, 1]), -1, 1)) == 0
    with pytest.raises(DomainError):
        odd_zeros_in_open_interval(Poly([0, 1]), 1, -1)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-0.98, 0.98), min_size=1, max_size=4, unique=True),
       st.lists(st.floats(-0.98, 0.98), max_size=2, unique=True),
       st.integers(0, 1))
def test_odd_zeros_vs_sign_scan(simple, doubles, complex_pair):
    simple = sorted(simple)
    assume(all(b - a > 1e-3 for a, b in zip(simple, simple[1:])))
    assume(all(min(abs(d - s) for s in simple) > 1e-3 for d in doubles))
    assume(len(doubles) < 2 or abs(doubles[0] - doubles[1]) > 1e-3)
    rts = list(simple) + [d for d in doubles for _ in range(2)]
    p = Poly.from_roots(rts)
    if complex_pair:
        p = p * Poly([1.3, 0.4, 1.0])
    got = odd_zeros_in_open_interval(p, -1, 1)
    scan = sign_change_zeros(p.coeffs, -1, 1)
    assert len(got) == len(scan) == len(simple)
    assert np.max(np.abs(got - scan)) < 1e-4
    assert np.max(np.abs(got - simple)) < 1e-7


def test_cheb_pair_fast():
    cheb_pair.cache_clear() if hasattr(cheb_pair, "cache_clear") else None
    t0 = time.perf_counter()
    for k in range(1, 6):
        cheb_pair(k)
    assert time.perf_counter() - t0 < 1e-3 * 50  # generous under CI noise
