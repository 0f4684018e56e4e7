import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from mfcforge.lateralplant import (
    REFERENCE_VEHICLE,
    DiscreteTF,
    StateSpace,
    VehicleParams,
    augment_with_filter_poles,
    build_lateral_ss,
    ss_to_tf,
    zoh_discretize,
)
from mfcforge.polycore import DomainError, Poly


def test_lateral_matrix_entries():
    ss = build_lateral_ss(REFERENCE_VEHICLE)
    assert ss.A[1, 1] == pytest.approx(-(2 * 37022.5 + 2 * 35900) / (1372 * 9.72))
    assert ss.A[1, 1] == pytest.approx(-10.935, abs=2e-3)
    assert ss.A[0].tolist() == [0, 1, 0, 0]
    assert ss.A[2].tolist() == [0, 0, 0, 1]
    assert ss.C.tolist() == [[1, 0, 0, 0]]
    assert ss.Bw is not None and ss.Bw.shape == (4, 1)


def test_symmetric_vehicle_decouples():
    p = VehicleParams(1500, 10, 2000, 40000, 40000, 1.2, 1.2)
    assert build_lateral_ss(p).A[3, 1] == 0.0


@pytest.mark.parametrize("field", ["vx", "m", "Cf"])
def test_nonpositive_params_rejected(field):
    kw = dict(REFERENCE_VEHICLE.__dict__)
    kw[field] = 0.0
    with pytest.raises(DomainError):
        VehicleParams(**kw)


def test_zoh_integrators():
    one = np.ones((1, 1))
    d = zoh_discretize(StateSpace(np.zeros((1, 1)), one, one, np.zeros((1, 1))), 0.1)
    assert d.A[0, 0] == 1.0 and d.B[0, 0] == pytest.approx(0.1)
    Ts = 0.2
    dbl = StateSpace(np.array([[0, 1], [0, 0.0]]), np.array([[0], [1.0]]), np.array([[1, 0.0]]),
                     np.zeros((1, 1)))
    G = ss_to_tf(zoh_discretize(dbl, Ts))
    ref = DiscreteTF(Poly([Ts ** 2 / 2, Ts ** 2 / 2]), Poly([1, -2, 1]), Ts)
    assert np.allclose(G.num.coeffs, ref.num.coeffs, atol=1e-14)
    assert np.allclose(G.den.coeffs, ref.den.coeffs, atol=1e-14)


def _random_stable(rng, n):
    Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    lam = -rng.uniform(0.1, 5.0, n)
    return Q @ np.diag(lam) @ Q.T, lam


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 5), st.floats(0.01, 0.5))
def test_zoh_eigenvalue_map(seed, n, Ts):
    rng = np.random.default_rng(seed)
    A, lam = _random_stable(rng, n)
    ss = StateSpace(A, rng.normal(size=(n, 1)), rng.normal(size=(1, n)), np.zeros((1, 1)))
    ev = np.sort(np.linalg.eigvals(zoh_discretize(ss, Ts).A).real)
    assert np.max(np.abs(ev - np.sort(np.exp(lam * Ts)))) < 1e-9


def test_zoh_input_integral_matches_quadrature(rng):
    A, _ = _random_stable(rng, 3)
    B = rng.normal(size=(3, 1))
    Ts = 0.1
    d = zoh_discretize(StateSpace(A, B, np.ones((1, 3)), np.zeros((1, 1))), Ts)
    taus = np.linspace(0, Ts, 2001)
    vals = np.array([expm(A * t) @ B for t in taus])[:, :, 0]
    w = np.full(len(taus), 1.0)
    w[0] = w[-1] = 0.5
    quad = (vals * w[:, None]).sum(axis=0) * (taus[1] - taus[0])
    assert np.allclose(d.B[:, 0], quad, atol=1e-8)


def test_ss_to_tf_first_order():
    ss = StateSpace(np.array([[0.5]]), np.ones((1, 1)), np.ones((1, 1)), np.zeros((1, 1)), 1.0)
    G = ss_to_tf(ss)
    assert G.num == Poly([1.0]) and G.den == Poly([-0.5, 1.0])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 5))
def test_tf_matches_resolvent(seed, n):
    rng = np.random.default_rng(seed)
    ss = StateSpace(rng.normal(size=(n, n)) * 0.5, rng.normal(size=(n, 1)), rng.normal(size=(1, n)),
                    rng.normal(size=(1, 1)), 0.1)
    G = ss_to_tf(ss)
    for z in rng.normal(size=50) * 2 + 1j * rng.normal(size=50) * 2:
        direct = (ss.C @ np.linalg.solve(z * np.eye(n) - ss.A, ss.B) + ss.D)[0, 0]
        assert abs(G(z) - direct) <= 1e-8 * max(1.0, abs(direct))


def test_lateral_tf_shape(lateral):
    _, G = lateral
    assert G.den.degree == 4 and G.num.degree <= 3
    assert G.den.lead == 1.0


def test_disturbance_column_kept_out_of_tf(lateral):
    ssd, G = lateral
    assert ssd.Bw is not None
    z = 0.3 + 0.8j
    direct = (ssd.C @ np.linalg.solve(z * np.eye(4) - ssd.A, ssd.B))[0, 0]
    assert abs(G(z) - direct) < 1e-8 * abs(direct)


def test_augment_examples():
    G = DiscreteTF(Poly([1.0]), Poly([-0.5, 1.0]), 0.05)
    Ga = augment_with_filter_poles(G, 4.0, 2)
    ref = DiscreteTF(Poly([0, 0, 1.0]), Poly([-0.5, 1]) * Poly([-3, 4]) ** 2, 0.05)
    assert np.allclose(Ga.num.coeffs, ref.num.coeffs) and np.allclose(Ga.den.coeffs, ref.den.coeffs)
    assert augment_with_filter_poles(G, 2.5, 1).den.degree == G.den.degree + 1
    G1 = augment_with_filter_poles(G, 1.0, 1)
    for z in (0.3, 2.0 + 1j, -0.7j):
        assert G1(z) == pytest.approx(G(z))
    with pytest.raises(DomainError):
        augment_with_filter_poles(G, 0.5, 1)


def test_improper_tf_rejected():
    with pytest.raises(DomainError):
        DiscreteTF(Poly([1, 1, 1]), Poly([1, 1]), 0.1)
