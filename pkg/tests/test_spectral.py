import cmath
import math
import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings

from conftest import fixture, transducers
from digitflux.core import parse_transducer, structure
from digitflux.dirichlet import projection_derivative_term
from digitflux.empirical import prefix_moments
from digitflux.spectral import (
    AnalysisError,
    LimitLaw,
    analyze,
    component_mean_var,
    dominant_projection,
    hitting_probabilities,
    matrices,
    spectrum,
    steady_state_identity_check,
)

ALL = ["naf", "signflip", "sixperiodic", "sumdigits-q2", "sumdigits-q3", "sumdigits-q4", "sumdigits-q5", "paperfolding"]


def test_sum_of_digits_matrices():
    for q in (2, 3, 4, 5):
        m = matrices(fixture(f"sumdigits-q{q}"))
        assert m.M == [[q]] and m.delta == [Fraction(q * (q - 1), 2)]


def test_signflip_matrices():
    m = matrices(fixture("signflip"))
    assert m.M == [[0, 2], [0, 2]] and m.delta == [0, 0]


@pytest.mark.parametrize("name", ALL)
def test_row_sums_and_symbol_matrices(name):
    m = matrices(fixture(name))
    qd = m.q**m.d
    assert all(sum(row) == qd for row in m.M)
    assert all(sum(row) == 1 for me in m.M_eps for row in me)
    assert [sum(r) for r in m.Delta] == m.delta


def test_sum_of_digits_component_constants():
    t = fixture("sumdigits-q2")
    assert component_mean_var(t, [0]) == (Fraction(1, 2), Fraction(1, 4))
    for q in (3, 4, 5):
        a, b = component_mean_var(fixture(f"sumdigits-q{q}"), [0])
        # digit uniform on {0..q-1}
        assert a == Fraction(q - 1, 2) and b == Fraction(q * q - 1, 12)


def test_paperfolding_constants(paperfolding):
    rep = analyze(paperfolding)
    assert rep.e_T == Fraction(8, 13) and rep.v_T == Fraction(432, 2197)
    assert rep.a == (Fraction(8, 13),) and rep.b == (Fraction(432, 2197),)
    assert rep.second_modulus == pytest.approx(abs(complex(-0.7718445063, 1.1151425080)), abs=1e-9)
    assert rep.xi == pytest.approx(0.5604267891, abs=2e-10)
    top = rep.nondominant[:2]
    assert {round(z.real, 9) for z in top} == {-0.771844506}
    assert rep.classification == LimitLaw.SINGLE_GAUSSIAN


def test_six_periodic_constants():
    t = fixture("sixperiodic")
    rep = analyze(t)
    assert rep.e_T == Fraction(11, 8) and rep.period == 6
    assert rep.classification == LimitLaw.VARIANCE_THETA_LOG_SQUARED
    assert sorted(rep.lam) == [Fraction(1, 2), Fraction(1, 2)]


def test_six_periodic_hitting_probabilities_by_simulation():
    t = fixture("sixperiodic")
    st = structure(t)
    lam = hitting_probabilities(t)
    comps = [set(c) for c in st.components]
    rng = random.Random(5)
    hits = [0, 0]
    trials = 20000
    for _ in range(trials):
        s = t.initial
        while not any(s in c for c in comps):
            s = t.targets[s][rng.randrange(2)]
        hits[0 if s in comps[0] else 1] += 1
    for j in range(2):
        assert hits[j] / trials == pytest.approx(float(lam[j]), abs=0.02)


def test_signflip_is_degenerate():
    rep = analyze(fixture("signflip"))
    assert rep.e_T == 0 and rep.v_T == 0
    assert rep.classification == LimitLaw.DEGENERATE
    assert rep.second_modulus == 0 and math.isinf(rep.xi)
    assert rep.w0 == (0, 1)
    # the non-dominant spectrum is {0}, not empty: the mean still has an O(1/N) term
    assert rep.nondominant == (0j,) and not rep.exact_expansion


def test_single_state_expansion_is_exact():
    for q in (2, 3, 4, 5):
        rep = analyze(fixture(f"sumdigits-q{q}"))
        assert rep.nondominant == () and rep.exact_expansion


def test_naf_constants():
    rep = analyze(fixture("naf"))
    assert rep.e_T == Fraction(1, 3) and rep.v_T == Fraction(2, 27)


@pytest.mark.parametrize("name", ALL)
def test_steady_state_identity(name):
    assert steady_state_identity_check(fixture(name))


def test_paperfolding_w0_against_long_run_distribution(paperfolding):
    m = matrices(paperfolding)
    rep = analyze(paperfolding)
    dist = [Fraction(0)] * m.size
    dist[0] = Fraction(1)
    for _ in range(60):
        dist = [sum(dist[i] * m.M[i][j] for i in range(m.size)) / 2 for j in range(m.size)]
    assert max(abs(float(a - b)) for a, b in zip(dist, rep.w0)) < 1e-8
    numeric = dominant_projection(paperfolding)[0]
    assert np.allclose(numeric, [float(x) for x in rep.w0], atol=1e-12)
    assert sum(rep.w0) == 1 and all(x >= 0 for x in rep.w0)


def test_projection_family_sums_to_long_run_average():
    t = fixture("sixperiodic")
    w = dominant_projection(t)
    assert w.shape[0] == 6
    a = matrices(t).M_float() / 2
    v = np.zeros(a.shape[0])
    v[0] = 1
    for _ in range(600):
        v = v @ a
    # w_hat_0 = sum_l w_l
    assert np.allclose(w.sum(axis=0), v, atol=1e-10)


def test_derivative_identity_for_nonzero_l():
    for name in ("sixperiodic", "naf", "paperfolding"):
        t = fixture(name)
        w = dominant_projection(t)
        p = w.shape[0]
        delta = np.array([float(x) for x in matrices(t).delta])
        for l in range(1, p):
            lhs = w[l] @ delta + t.q * (cmath.exp(2j * math.pi * l / p) - 1) * projection_derivative_term(t, l)
            assert abs(lhs) < 1e-8


def test_tie_with_dominant_eigenvalue_is_an_error():
    # no real transducer produces a tie (non-final blocks are substochastic),
    # so the root finder is stubbed to return the dominant modulus
    text = (
        "transducer v1\nq 2\nd 1\nstates 3\ninitial a\nfinal a 0\nfinal b 0\nfinal c 0\n"
        "trans a 0 -> b 0\ntrans a 1 -> b 0\ntrans b 0 -> a 0\ntrans b 1 -> c 0\n"
        "trans c 0 -> c 0\ntrans c 1 -> c 1\n"
    )
    t = parse_transducer(text)
    sp = spectrum(t)
    assert sp.second_modulus < 2
    with pytest.raises(AnalysisError):
        from digitflux import spectral

        original = spectral._roots
        try:
            spectral._roots = lambda coeffs: [2.0 + 0j] * (len(coeffs) - 1)
            spectral.spectrum(t)
        finally:
            spectral._roots = original


def test_mean_slope_matches_e_t(paperfolding):
    for t in (paperfolding, fixture("naf"), fixture("sumdigits-q3")):
        rep = analyze(t)
        xs = np.arange(8, 21)
        ys = [float(prefix_moments(t, t.q**int(x)).mean) for x in xs]
        slope = np.polyfit(xs, ys, 1)[0]
        assert slope == pytest.approx(float(rep.e_T), abs=1e-3)


def _numeric_mean_var(t, comp):
    """a_j, b_j from numerical derivatives of the Perron root of M(t) on C_j."""
    m = matrices(t)
    idx = [m.position[s] for s in comp]

    def mu(x):
        mat = np.zeros((len(idx), len(idx)), dtype=complex)
        for me, de in zip(m.M_eps, m.Delta_eps):
            for a, i in enumerate(idx):
                for b, j in enumerate(idx):
                    if me[i][j]:
                        mat[a, b] += cmath.exp(1j * x * float(de[i][j]))
        ev = np.linalg.eigvals(mat)
        return ev[np.argmin(abs(ev - m.q**m.d))]

    h = 1e-4
    qd = m.q**m.d
    d1 = (mu(h) - mu(-h)) / (2 * h)
    d2 = (mu(h) - 2 * mu(0) + mu(-h)) / h**2
    a = (d1 / 1j).real / qd
    # b = -(log mu)''(0)
    b = (-d2 / qd - a**2).real
    return a, b


@settings(max_examples=30)
@given(transducers(d=1, max_states=4, q_values=(2, 3)))
def test_component_constants_against_eigenvalue_derivatives(t):
    st = structure(t)
    for comp, period in zip(st.components, st.component_periods):
        if period != 1:
            continue
        a, b = component_mean_var(t, comp)
        na, nb = _numeric_mean_var(t, comp)
        assert float(a) == pytest.approx(na, abs=1e-6)
        assert float(b) == pytest.approx(nb, abs=1e-4)


@settings(max_examples=40)
@given(transducers(d=1, max_states=5, q_values=(2, 3)))
def test_report_invariants(t):
    rep = analyze(t)
    assert sum(rep.lam) == 1 and all(x > 0 for x in rep.lam)
    assert rep.e_T == sum(l * a for l, a in zip(rep.lam, rep.a))
    assert rep.v_T == sum(l * b for l, b in zip(rep.lam, rep.b))
    assert all(b >= 0 for b in rep.b)
    assert rep.second_modulus < t.q
    if not math.isinf(rep.xi):
        assert t.q ** (1 - rep.xi) == pytest.approx(rep.second_modulus, rel=1e-9)
    assert (rep.classification == LimitLaw.VARIANCE_THETA_LOG_SQUARED) == (len(set(rep.a)) > 1)
    assert steady_state_identity_check(t, rep)


@settings(max_examples=20)
@given(transducers(d=2, max_states=3, q_values=(2,)))
def test_two_dimensional_report(t):
    rep = analyze(t)
    assert sum(rep.lam) == 1
    assert rep.second_modulus < 4
    assert steady_state_identity_check(t, rep)


def test_spectrum_against_numpy(paperfolding):
    m = matrices(paperfolding)
    ev = np.linalg.eigvals(m.M_float())
    ev = sorted(ev, key=lambda z: -abs(z))
    assert abs(ev[0] - 2) < 1e-9
    sp = spectrum(paperfolding)
    assert sp.second_modulus == pytest.approx(abs(ev[1]), rel=1e-9)
    assert len(sp.nondominant) == m.size - 1
