import cmath
import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import fixture
from digitflux.acceptance import delange_coefficients
from digitflux.core import Transducer, evaluate
from digitflux.corpus import paperfolding_reference
from digitflux.dirichlet import (
    DirichletEngine,
    PoleError,
    SpecialFunctionContext,
    digamma,
    double_pole_data,
    fourier,
    h_series,
    h_vector_array,
    h_vector_terms,
    hurwitz_zeta,
    residue_k,
    w0_derivative_term,
)
from digitflux.empirical import enumerate_values, prefix_moments
from digitflux.spectral import analyze, dominant_projection, matrices

EULER_GAMMA = 0.57721566490153286


def zero_transducer():
    delta = {(0, (0,)): (1, Fraction(0)), (0, (1,)): (0, Fraction(0)), (1, (0,)): (0, Fraction(0)), (1, (1,)): (1, Fraction(0))}
    return Transducer(2, 1, 2, 0, {0: Fraction(0), 1: Fraction(0)}, delta, ("a", "b"))


# special functions


def test_zeta_two():
    assert abs(complex(hurwitz_zeta(2, 1)) - math.pi**2 / 6) < 1e-12


def test_zeta_at_zero():
    assert abs(complex(hurwitz_zeta(0, Fraction(1, 2)))) < 1e-12
    assert abs(complex(hurwitz_zeta(0, Fraction(1, 3))) - (0.5 - 1 / 3)) < 1e-12


def test_zeta_on_the_critical_vertical_agrees_across_depths():
    z = 1 + 2j * math.pi / math.log(2)
    a = complex(hurwitz_zeta(z, 1, precision=30))
    b = complex(hurwitz_zeta(z, 1, precision=30, direct_terms=400))
    assert abs(a - b) < 1e-12


def test_zeta_pole():
    with pytest.raises(ZeroDivisionError):
        hurwitz_zeta(1, 1)


@settings(max_examples=40)
@given(
    st.floats(-3, 6).filter(lambda x: abs(x - 1) > 0.05),
    st.floats(-40, 40),
    st.fractions(Fraction(1, 50), 1),
)
def test_zeta_against_mpmath(re, im, alpha):
    z = complex(re, im)
    ours = complex(hurwitz_zeta(z, alpha))
    ref = complex(mpmath.zeta(z, mpmath.mpf(alpha.numerator) / alpha.denominator))
    assert abs(ours - ref) <= 1e-10 * max(1.0, abs(ref))


def test_digamma_values():
    assert float(digamma(1)) == pytest.approx(-EULER_GAMMA, abs=1e-12)
    assert float(digamma(Fraction(1, 2))) == pytest.approx(-EULER_GAMMA - 2 * math.log(2), abs=1e-12)
    assert float(digamma(2)) == pytest.approx(float(digamma(1)) + 1, abs=1e-12)


def test_digamma_domain():
    with pytest.raises(ValueError):
        digamma(0)
    with pytest.raises(ValueError):
        digamma(-1.5)


@given(st.fractions(Fraction(1, 100), 50))
def test_digamma_against_mpmath(x):
    ref = float(mpmath.digamma(mpmath.mpf(x.numerator) / x.denominator))
    assert float(digamma(x)) == pytest.approx(ref, abs=1e-12, rel=1e-12)


# b(n)


def test_b_terms_for_binary_digit_sum():
    b = h_vector_terms(fixture("sumdigits-q2"), 8)
    assert [v[0] for v in b[:4]] == [0, 1, 1, 2]


@pytest.mark.parametrize("name", ["naf", "sixperiodic", "paperfolding"])
def test_b_zero_is_final_output(name):
    t = fixture(name)
    mats = matrices(t)
    b0 = h_vector_terms(t, 1)[0]
    assert b0 == [t.final_output[s] for s in mats.states]


def test_b_matches_evaluate(paperfolding):
    b = h_vector_terms(paperfolding, 64)
    assert all(b[n][0] == evaluate(paperfolding, n) for n in range(65))
    arr = h_vector_array(paperfolding, 65)
    assert np.allclose(arr[:, 0], [float(v[0]) for v in b[:65]])


def test_b_rejects_two_dimensions():
    from digitflux.corpus import random_transducer
    import random

    t = random_transducer(random.Random(1), q=2, d=2, states=2)
    with pytest.raises(ValueError):
        h_vector_terms(t, 4)
    with pytest.raises(ValueError):
        fourier(t, 3)


# H(z)


def test_h_of_three_for_digit_sum():
    t = fixture("sumdigits-q2")
    h, err = h_series(t, 3)
    n = np.arange(1, 10**6, dtype=np.int64)
    s = np.zeros_like(n)
    m = n.copy()
    while m.any():
        s += m & 1
        m >>= 1
    direct = float(np.sum(s / n.astype(float) ** 3))
    assert abs(h[0] - direct) < 1e-9
    assert err < 1e-9


def test_h_of_two_for_paperfolding(paperfolding):
    N = 10**6
    vals = enumerate_values(paperfolding, N)
    n = np.arange(1, N, dtype=float)
    direct = float(np.sum(vals[1:] / n**2))
    rep = analyze(paperfolding)
    e_t = float(rep.e_T)
    c0 = fourier(paperfolding, 0).coefficients[0].real
    L = math.log(2)
    # Abel summation with mean e_T log_q x + c0
    tail = (e_t * math.log(N, 2) + c0 + 2 * e_t / L) / N
    h, _ = h_series(paperfolding, 2)
    assert abs(h[0].real - (direct + tail)) < 1e-6


def test_h_of_zero_transducer():
    t = zero_transducer()
    for z in (2, 1.5 + 3j, 0.5 + 1j):
        h, _ = h_series(t, z)
        assert np.allclose(h, 0)


def test_pole_is_reported(paperfolding):
    with pytest.raises(PoleError):
        h_series(paperfolding, 1)
    with pytest.raises(PoleError):
        h_series(paperfolding, 1 + 2j * math.pi / math.log(2))


def test_residue_ring(paperfolding):
    """(1 − q^{1−z}ω^k) w_k·H(z) tends to log q times the residue on shrinking rings."""
    for t, k in ((paperfolding, 1), (fixture("sixperiodic"), 1), (fixture("sixperiodic"), 3)):
        eng = DirichletEngine(t)
        w = dominant_projection(t)
        p = w.shape[0]
        res, _ = residue_k(t, k, engine=eng, w=w)
        pole = 1 + 2j * math.pi * k / (p * eng.logq)
        omega = cmath.exp(2j * math.pi * k / p)
        devs = []
        for r in (1e-2, 1e-3):
            worst = 0.0
            for theta in np.linspace(0, 2 * math.pi, 5, endpoint=False):
                z = pole + r * cmath.exp(1j * theta)
                h, _ = h_series(t, z, engine=eng)
                val = (1 - t.q ** (1 - z) * omega) * complex(w[k % p] @ h) / eng.logq
                worst = max(worst, abs(val - res))
            devs.append(worst)
        assert devs[1] < devs[0] / 5
        assert devs[1] < 1e-2 * max(1.0, abs(res))


# derivative term


def test_w0_derivative_single_state():
    for q in (2, 3, 4, 5):
        assert w0_derivative_term(fixture(f"sumdigits-q{q}")) == 0
    assert w0_derivative_term(zero_transducer()) == 0


def test_w0_derivative_paperfolding(paperfolding):
    assert w0_derivative_term(paperfolding) == Fraction(-479, 338)


def _projection_row_sum(t, x):
    m = matrices(t)
    mat = np.zeros((m.size, m.size), dtype=complex)
    for me, de in zip(m.M_eps, m.Delta_eps):
        mat += np.array([[float(a) * cmath.exp(1j * x * float(b)) for a, b in zip(ra, rb)] for ra, rb in zip(me, de)])
    ev, right = np.linalg.eig(mat)
    evl, left = np.linalg.eig(mat.T)
    i = np.argmin(abs(ev - m.q))
    j = np.argmin(abs(evl - m.q))
    r, l = right[:, i], left[:, j]
    return r[0] * l.sum() / (l @ r)


@pytest.mark.parametrize("name", ["paperfolding", "naf", "sumdigits-q3"])
def test_w0_derivative_against_finite_difference(name):
    t = fixture(name)
    h = 1e-5
    fd = (_projection_row_sum(t, h) - _projection_row_sum(t, -h)) / (2 * h)
    assert (-1j * fd).real == pytest.approx(float(w0_derivative_term(t)), abs=1e-6)
    assert abs((-1j * fd).imag) < 1e-6


# Fourier coefficients


@pytest.mark.parametrize("q", [2, 3, 4, 5])
def test_delange(q):
    res = fourier(fixture(f"sumdigits-q{q}"), 10)
    ref = delange_coefficients(q, 10)
    for k, c in ref.items():
        assert abs(res.coefficients[k] - c) < 1e-9
        assert res.errors[k] < 1e-9


def test_delange_constant_through_double_pole():
    res, h, _ = double_pole_data(fixture("sumdigits-q2"))
    c0 = -0.5 / math.log(2) + res
    assert c0.real == pytest.approx(delange_coefficients(2, 0)[0].real, abs=1e-10)


def test_paperfolding_table(paperfolding):
    res = fourier(paperfolding, 23)
    ref = paperfolding_reference()
    assert max(abs(res.coefficients[k] - v) for k, v in ref.items()) < 1e-6
    assert res.coefficients[0].real == pytest.approx(1.5308151288, abs=1e-8)


@pytest.mark.slow
def test_paperfolding_table_high_precision(paperfolding):
    res = fourier(paperfolding, 23, SpecialFunctionContext(precision=50, depth=2**18))
    ref = paperfolding_reference()
    assert max(abs(res.coefficients[k] - v) for k, v in ref.items()) < 1e-8


def test_zero_transducer_coefficients():
    res = fourier(zero_transducer(), 5)
    assert all(c == 0 for c in res.coefficients.values())
    r, h, _ = double_pole_data(zero_transducer())
    assert r == 0 and h == 0


@pytest.mark.parametrize("name", ["paperfolding", "naf", "sixperiodic", "signflip"])
def test_conjugate_symmetry_and_real_evaluator(name):
    res = fourier(fixture(name), 6)
    for k in range(1, 7):
        assert res.coefficients[-k] == res.coefficients[k].conjugate()
    assert res.coefficients[0].imag == 0
    xs = np.linspace(0, 1, 7)
    assert np.allclose(res(xs), res(xs + res.period), atol=1e-12)
    assert isinstance(res(0.3), float)


def _empirical_dft(t, x0, points, K):
    rep = analyze(t)
    p = rep.period
    xs = x0 + p * np.arange(points) / points
    samples = []
    for x in xs:
        N = int(round(t.q**x))
        xa = math.log(N) / math.log(t.q)
        samples.append((xa, prefix_moments(t, N).psi1(rep.e_T, t.q)))
    xa = np.array([s[0] for s in samples])
    ps = np.array([s[1] for s in samples])
    return {k: complex(np.mean(ps * np.exp(-2j * np.pi * k * xa / p))) for k in range(K + 1)}, ps


@pytest.mark.parametrize("name", ["paperfolding", "naf", "sixperiodic", "sumdigits-q3"])
def test_coefficients_match_empirical_dft(name):
    t = fixture(name)
    res = fourier(t, 8)
    emp, samples = _empirical_dft(t, 24 if t.q == 2 else 16, 512, 8)
    for k in range(9):
        assert abs(res.coefficients[k] - emp[k]) < max(5e-3, res.errors[k])
    # Parseval: the partial sum of |c_k|^2 cannot exceed the mean square
    energy = sum(abs(c) ** 2 for c in res.coefficients.values())
    assert energy <= float(np.mean(samples**2)) + 1e-3


def test_doubling_depth_stays_within_error(paperfolding):
    base = fourier(paperfolding, 12)
    finer = fourier(paperfolding, 12, SpecialFunctionContext(depth=2**17, max_shift=80))
    for k in range(13):
        assert abs(base.coefficients[k] - finer.coefficients[k]) <= base.errors[k]


def test_threads_do_not_change_results(paperfolding):
    a = fourier(paperfolding, 10)
    b = fourier(paperfolding, 10, SpecialFunctionContext(threads=4))
    assert a.coefficients == b.coefficients and a.errors == b.errors
