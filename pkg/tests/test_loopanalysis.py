import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy import signal

from mfcforge.lateralplant import DiscreteTF
from mfcforge.loopanalysis import (
    PerformanceSpec,
    Stability,
    char_poly,
    classify_stability,
    closed_loop_tf,
    evaluate,
    filter_subset,
    is_stable,
    margins,
    step_metrics,
    step_response,
)
from mfcforge.mfcbridge import FilterConfig, IpdGains, PiGains
from mfcforge.mfcsim import SimTrace
from mfcforge.polycore import DomainError, Poly, roots

from oracles import jury_stable
import refdata


def tf(num, den, Ts=0.1):
    return DiscreteTF(Poly(num), Poly(den), Ts)


def trace(y, Ts=0.1):
    y = np.asarray(y, dtype=float)
    n = len(y)
    return SimTrace(np.arange(n) * Ts, np.ones(n), y, 1 - y, np.zeros(n), Ts)


def test_char_poly_examples():
    C = tf([0, 1], [-1, 1])  # PI K1=1, K2=0
    assert char_poly(C, tf([1], [0, 1])) == Poly([0, 0, 1])
    with pytest.raises(DomainError):
        char_poly(C, tf([1], [0, 1], Ts=0.2))
    N, D = Poly([0.4, 1]), Poly([0.1, -0.3, 1])
    K1, K2 = 0.7, 0.2
    ref = (Poly([-1, 1]) * D + K1 * Poly([-K2, 1]) * N).monic()
    got = char_poly(tf((K1 * Poly([-K2, 1])).coeffs, [-1, 1]), DiscreteTF(N, D, 0.1))
    assert np.allclose(got.coeffs, ref.coeffs)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_char_poly_matches_realization(seed):
    rng = np.random.default_rng(seed)
    C = tf(rng.normal(size=2), [rng.normal() * 0.3, 1.0])
    G = tf(rng.normal(size=2), np.r_[rng.normal(size=2) * 0.3, 1.0])
    Ac, Bc, Cc, Dc = signal.tf2ss(C.num.coeffs[::-1], C.den.coeffs[::-1])
    Ag, Bg, Cg, Dg = signal.tf2ss(G.num.coeffs[::-1], G.den.coeffs[::-1])
    assume(abs(Dg[0, 0]) < 1e-12 or abs(1 + Dc[0, 0] * Dg[0, 0]) > 1e-3)
    # u = Cc xc + Dc e, e = -y, y = Cg xg + Dg u (G strictly proper here)
    k = 1.0 / (1 + Dc[0, 0] * Dg[0, 0])
    top = np.hstack([Ag - Bg @ (Dc * k) @ Cg, Bg @ (k * Cc)])
    bot = np.hstack([-Bc @ (k * Cg), Ac - Bc @ (k * Dg) @ Cc])
    ev = np.sort_complex(np.linalg.eigvals(np.vstack([top, bot])))
    r = np.sort_complex(roots(char_poly(C, G)))
    assert np.allclose(ev, r, atol=1e-6)


def test_is_stable_examples():
    assert is_stable(Poly([0, 0, 1]))
    assert not is_stable(Poly([-1.0001, 1]))
    assert classify_stability(Poly([-1.0, 1.0])) is Stability.MARGINAL


def _random_poly(rng):
    n = int(rng.integers(1, 9))
    rts = []
    while len(rts) < n:
        r = rng.uniform(0.2, 1.3)
        if len(rts) <= n - 2 and rng.random() < 0.5:
            z = r * np.exp(1j * rng.uniform(0.05, np.pi - 0.05))
            rts += [z, z.conjugate()]
        else:
            rts.append(r * rng.choice([-1, 1]))
    return Poly(np.real(np.polynomial.polynomial.polyfromroots(rts)) * rng.uniform(0.5, 3))


def test_is_stable_agrees_with_jury(rng):
    done = 0
    while done < 500:
        p = _random_poly(rng)
        if np.min(np.abs(np.abs(roots(p)) - 1)) < 1e-6:
            continue
        assert is_stable(p) == jury_stable(p.coeffs)
        done += 1


def test_step_response_examples():
    one = tf([1], [1])
    tr = step_response(one, one, 50)
    assert np.allclose(tr.y, 0.5)  # C G/(1+C G) = 1/2
    # closed loop 0.5/(z-0.5): open loop 0.5/(z-1)
    tr = step_response(tf([0.5], [1]), tf([1], [-1, 1]), 60)
    k = np.arange(60)
    assert np.allclose(tr.y, np.where(k == 0, 0, 1 - 0.5 ** k), atol=1e-14)


def test_step_response_final_value():
    C = tf([0.1, 0.3], [0.0, 1.0])
    G = tf([0.5], [-0.8, 1.0])
    tr = step_response(C, G, 400)
    assert is_stable(char_poly(C, G))
    assert tr.y[-1] == pytest.approx(closed_loop_tf(C, G).dc_gain(), abs=1e-6)


def test_step_metrics_examples():
    m = step_metrics(trace([0, 0.5, 1.2, 1.1] + [1.0] * 40), band=0.02)
    assert m.overshoot == pytest.approx(20.0) and m.settled
    mono = 1 - 0.8 ** np.arange(200)
    m = step_metrics(trace(mono), 0.02)
    assert m.overshoot == 0.0
    with pytest.raises(DomainError):
        step_metrics(trace(-mono), 0.02)
    unsettled = trace(np.sin(np.arange(200)) + 1.0)
    assert not step_metrics(unsettled, 0.02).settled


@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(0.0, math.pi * 0.9))
def test_settling_time_monotone_in_band(r, th):
    p = r * np.exp(1j * th)
    den = np.real(np.polynomial.polynomial.polyfromroots([p, np.conj(p)]))
    T = DiscreteTF(Poly([np.sum(den)]), Poly(den), 0.1)
    y = signal.lfilter(T.num.coeffs[::-1], T.den.coeffs[::-1], np.ones(600))
    st_vals = [step_metrics(trace(y), b).settling_time for b in (0.01, 0.02, 0.05, 0.1)]
    assert all(a >= b for a, b in zip(st_vals, st_vals[1:]))


def test_margins_constant_loops():
    m = margins(tf([-0.5], [1.0]))
    assert m.gain_margin_db == pytest.approx(6.0206, abs=1e-3)
    assert math.isnan(m.phase_margin_deg)
    m = margins(tf([1.0], [1.0]))
    assert m.gain_margin_db == math.inf


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 0.9), st.floats(-0.9, 0.9), st.floats(-0.9, 0.9), st.floats(0.05, 2.0))
def test_margin_stability_boundary(p1, p2, b, k):
    L = tf(k * Poly([b, 1]).coeffs, Poly.from_roots([p1, p2]).coeffs, 0.05)
    delta = lambda g: L.den + g * L.num
    assume(is_stable(delta(1.0)))
    m = margins(L, n_freq=20000)
    assume(math.isfinite(m.gain_margin_db) and m.gain_margin_db < 60)
    gm = m.gain_margin
    assert is_stable(delta(gm * (1 - 1e-3)))
    assert not is_stable(delta(gm * (1 + 1e-2)))


def test_phase_margin_first_order():
    # L = a/(z-1): unity crossing where |e^{jw}-1| = a
    a = 0.5
    m = margins(tf([a], [-1, 1], 1.0), n_freq=20000)
    w = 2 * math.asin(a / 2)
    expect = 180 + math.degrees(-(math.pi / 2 + w / 2))
    assert m.gain_crossover == pytest.approx(w, rel=1e-4)
    assert m.phase_margin_deg == pytest.approx(expect, abs=0.05)


def test_performance_spec_needs_a_bound():
    with pytest.raises(DomainError):
        PerformanceSpec()
    s = PerformanceSpec.with_gm_ratio(1.5, pm_min_deg=30)
    assert s.gm_min_db == pytest.approx(3.5218, abs=1e-4)


def test_filter_subset_idempotent(lateral):
    _, G = lateral
    f = refdata.FILTER
    spec = PerformanceSpec(os_max_pct=40, st_max_s=15)
    cands = list(refdata.CONTROLLERS.values()) + [IpdGains(0.5, -3.0, 10.0)]
    kept, evs = filter_subset(cands, G, f, spec, return_evaluations=True)
    assert refdata.CONTROLLERS[1] in kept
    assert filter_subset(kept, G, f, spec) == kept
    assert not evs[-1].stable
    none = filter_subset(cands, G, f, PerformanceSpec(os_max_pct=0, st_max_s=0))
    assert none == []


def test_evaluate_pi_route():
    G = tf([1.0], [-0.5, 1.0], 0.1)
    ev = evaluate(PiGains(0.3, 0.2), G, FilterConfig(1.0, 0.1), PerformanceSpec(pm_min_deg=1))
    assert ev.stable and ev.margins is not None
