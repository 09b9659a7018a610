"""Transition matrices, eigen-structure and the asymptotic constants.

Means, variances and hitting probabilities are exact rationals.  The spectral
gap uses exact characteristic polynomials of the SCC blocks with the
dominant factor divided out exactly; only the remaining roots are numeric.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import _exact as ex
from .core import StructureReport, Transducer, scc_data, structure

__all__ = [
    "AnalysisError",
    "LimitLaw",
    "TransitionMatrices",
    "AsymptoticReport",
    "Spectrum",
    "matrices",
    "stationary_vector",
    "component_mean_var",
    "hitting_probabilities",
    "expected_value_constant",
    "dominant_projection",
    "exact_w0",
    "spectrum",
    "analyze",
    "steady_state_identity_check",
]


class AnalysisError(RuntimeError):
    """The numerical or structural analysis could not be completed safely."""


class LimitLaw(str, enum.Enum):
    GAUSSIAN_MIXTURE = "GaussianMixture"
    SINGLE_GAUSSIAN = "SingleGaussian"
    DEGENERATE = "Degenerate"
    VARIANCE_THETA_LOG_SQUARED = "VarianceThetaLogSquared"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class TransitionMatrices:
    """Matrices indexed by accessible states; position 0 is the initial state.

    ``states[i]`` is the transducer state at matrix position i.
    """

    q: int
    d: int
    states: tuple[int, ...]
    M_eps: tuple[ex.Matrix, ...]
    Delta_eps: tuple[ex.Matrix, ...]
    delta_eps: tuple[list[Fraction], ...]
    M: ex.Matrix
    Delta: ex.Matrix
    delta: list[Fraction]
    delta2: list[Fraction]
    finals: list[Fraction]

    @property
    def size(self) -> int:
        return len(self.states)

    @property
    def position(self) -> dict[int, int]:
        return {s: i for i, s in enumerate(self.states)}

    def M_float(self) -> np.ndarray:
        return np.array([[float(x) for x in row] for row in self.M])

    def M_eps_float(self) -> list[np.ndarray]:
        return [np.array([[float(x) for x in row] for row in m]) for m in self.M_eps]

    def delta_eps_float(self) -> list[np.ndarray]:
        return [np.array([float(x) for x in v]) for v in self.delta_eps]


def matrices(t: Transducer) -> TransitionMatrices:
    acc = sorted(scc_data(t)[0], key=lambda s: (s != t.initial, s))
    pos = {s: i for i, s in enumerate(acc)}
    n = len(acc)
    zero = Fraction(0)
    m_eps, d_eps, v_eps = [], [], []
    for i in range(len(t.alphabet)):
        m = [[zero] * n for _ in range(n)]
        dm = [[zero] * n for _ in range(n)]
        for s in acc:
            tgt = pos[t.targets[s][i]]
            m[pos[s]][tgt] += 1
            dm[pos[s]][tgt] += t.outputs[s][i]
        m_eps.append(m)
        d_eps.append(dm)
        v_eps.append([sum(row, zero) for row in dm])
    big_m = [[sum((m[r][c] for m in m_eps), zero) for c in range(n)] for r in range(n)]
    big_d = [[sum((m[r][c] for m in d_eps), zero) for c in range(n)] for r in range(n)]
    delta = [sum(row, zero) for row in big_d]
    delta2 = [sum((o * o for o in t.outputs[s]), zero) for s in acc]
    return TransitionMatrices(
        q=t.q,
        d=t.d,
        states=tuple(acc),
        M_eps=tuple(m_eps),
        Delta_eps=tuple(d_eps),
        delta_eps=tuple(v_eps),
        M=big_m,
        Delta=big_d,
        delta=delta,
        delta2=delta2,
        finals=[t.finals[s] for s in acc],
    )


def _restrict(a: ex.Matrix, idx: Sequence[int]) -> ex.Matrix:
    return [[a[i][j] for j in idx] for i in idx]


def stationary_vector(mats: TransitionMatrices, comp_positions: Sequence[int]) -> list[Fraction]:
    """Left Perron vector u of M restricted to a final component, u·1 = 1."""
    qd = mats.q**mats.d
    mc = _restrict(mats.M, comp_positions)
    n = len(mc)
    # rows of (M_C - q^d I)^T sum to zero, so one of them can be replaced by u·1 = 1
    a = [[mc[j][i] - (qd if i == j else 0) for j in range(n)] for i in range(n)]
    a[-1] = [Fraction(1)] * n
    rhs = [Fraction(0)] * (n - 1) + [Fraction(1)]
    try:
        return ex.solve(a, rhs)
    except ZeroDivisionError as exc:
        raise AnalysisError("dominant eigenvalue of a final component is not simple") from exc


def _component_positions(t: Transducer, mats: TransitionMatrices) -> list[list[int]]:
    _acc, comps, finals, _periods = scc_data(t)
    pos = mats.position
    return [[pos[s] for s in comps[i]] for i in finals]


def component_mean_var(
    t: Transducer, component: Sequence[int], mats: TransitionMatrices | None = None
) -> tuple[Fraction, Fraction]:
    """(a_j, b_j) for the final component given by its transducer states."""
    mats = mats or matrices(t)
    pos = mats.position
    idx = [pos[s] for s in component]
    qd = mats.q**mats.d
    u = stationary_vector(mats, idx)
    dc = [mats.delta[i] for i in idx]
    d2 = [mats.delta2[i] for i in idx]
    mc = _restrict(mats.M, idx)
    big_dc = _restrict(mats.Delta, idx)
    mu1 = ex.dot(u, dc)
    n = len(idx)
    a_mat = [[mc[i][j] - (qd if i == j else 0) for j in range(n)] for i in range(n)]
    rhs = [mu1 - x for x in dc]
    y = ex.solve_consistent(a_mat, rhs)
    shift = ex.dot(u, y)
    y = [x - shift for x in y]
    b = (-mu1 * mu1 + qd * ex.dot(u, d2) + 2 * qd * ex.dot(u, ex.matvec(big_dc, y))) / (qd * qd)
    return mu1 / qd, b


def hitting_probabilities(t: Transducer, mats: TransitionMatrices | None = None) -> tuple[Fraction, ...]:
    """Absorption probabilities of the final components from the initial state."""
    mats = mats or matrices(t)
    comps = _component_positions(t, mats)
    owner = {i: j for j, c in enumerate(comps) for i in c}
    n = mats.size
    transient = [i for i in range(n) if i not in owner]
    if not transient:
        return tuple(Fraction(int(0 in c)) for c in comps)
    qd = mats.q**mats.d
    tpos = {s: k for k, s in enumerate(transient)}
    m = len(transient)
    a = [[Fraction(0)] * m for _ in range(m)]
    rhs = [[Fraction(0)] * len(comps) for _ in range(m)]
    for k, s in enumerate(transient):
        a[k][k] += 1
        for j in range(n):
            w = mats.M[s][j]
            if not w:
                continue
            if j in tpos:
                a[k][tpos[j]] -= w / qd
            else:
                rhs[k][owner[j]] += w / qd
    out = []
    for c in range(len(comps)):
        sol = ex.solve(a, [row[c] for row in rhs])
        out.append(sol[tpos[0]])
    return tuple(out)


def expected_value_constant(t: Transducer) -> Fraction:
    """e_T = Σ λ_j a_j, computed exactly."""
    mats = matrices(t)
    _acc, comps, finals, _ = scc_data(t)
    lam = hitting_probabilities(t, mats)
    return sum(
        (lj * component_mean_var(t, comps[i], mats)[0] for lj, i in zip(lam, finals)),
        Fraction(0),
    )


def exact_w0(t: Transducer, mats: TransitionMatrices | None = None) -> list[Fraction]:
    """w_0 = Σ_j λ_j u_j, with u_j padded by zeros outside C_j."""
    mats = mats or matrices(t)
    comps = _component_positions(t, mats)
    lam = hitting_probabilities(t, mats)
    w = [Fraction(0)] * mats.size
    for lj, c in zip(lam, comps):
        for i, ui in zip(c, stationary_vector(mats, c)):
            w[i] += lj * ui
    return w


def peripheral_projections(
    t: Transducer, tol: float = 1e-15, max_squarings: int = 64, mats: TransitionMatrices | None = None
) -> np.ndarray:
    """Spectral projections P_0..P_{p-1} onto the eigenvalues q^d e^{2πik/p}.

    Π = lim (M/q^d)^{mp} is obtained by repeated squaring of (M/q^d)^p,
    polished by right multiplication, and P_k = p^{-1} Σ_j e^{-2πijk/p} Π (M/q^d)^j.
    Shape (p, S, S), complex.
    """
    mats = mats or matrices(t)
    _acc, _comps, _finals, periods = scc_data(t)
    p = math.lcm(*periods)
    a = mats.M_float() / float(mats.q**mats.d)
    b = np.linalg.matrix_power(a, p)
    proj = b.copy()
    for _ in range(max_squarings):
        nxt = proj @ proj
        # rows are exactly stochastic; without renormalising, rounding drift
        # compounds under squaring and can drive the limit to zero
        nxt /= nxt.sum(axis=1, keepdims=True)
        if np.max(np.abs(nxt - proj)) < tol:
            proj = nxt
            break
        proj = nxt
    else:
        if np.max(np.abs(proj @ proj - proj)) > 1e-12:
            raise AnalysisError("peripheral projection did not converge")
    for _ in range(1000):
        nxt = proj @ b
        nxt /= nxt.sum(axis=1, keepdims=True)
        if np.max(np.abs(nxt - proj)) < tol:
            proj = nxt
            break
        proj = nxt
    hats = [proj]
    for _k in range(1, p):
        hats.append(hats[-1] @ a)
    hats = np.array(hats)
    k = np.arange(p)
    dft = np.exp(-2j * np.pi * np.outer(k, k) / p)
    return np.einsum("kj,jab->kab", dft, hats) / p


def dominant_projection(
    t: Transducer, tol: float = 1e-15, max_squarings: int = 64, mats: TransitionMatrices | None = None
) -> np.ndarray:
    """Rows w_0..w_{p-1}: the initial-state rows of the peripheral projections."""
    return peripheral_projections(t, tol, max_squarings, mats)[:, 0, :]


@dataclass(frozen=True)
class Spectrum:
    """Non-dominant spectrum of M (dominant roots q^d·ω removed exactly)."""

    nondominant: tuple[complex, ...]
    second_modulus: float

    @property
    def exact_expansion(self) -> bool:
        """True when M has only dominant eigenvalues (no error term)."""
        return not self.nondominant


def _charpoly(block: ex.Matrix) -> list[int]:
    from sympy import ZZ
    from sympy.polys.matrices import DomainMatrix

    rows = [[ZZ(int(x)) for x in row] for row in block]
    coeffs = DomainMatrix(rows, (len(rows), len(rows)), ZZ).charpoly()
    return [int(c) for c in coeffs]


def _roots(coeffs: list[int]) -> list[complex]:
    if len(coeffs) <= 1:
        return []
    import mpmath

    try:
        with mpmath.workdps(40):
            rts = mpmath.polyroots(coeffs, maxsteps=400, extraprec=200)
        return [complex(r) for r in rts]
    except mpmath.libmp.NoConvergence:
        return [complex(r) for r in np.roots(np.array(coeffs, dtype=float))]


def spectrum(t: Transducer, mats: TransitionMatrices | None = None) -> Spectrum:
    from sympy import Poly, symbols as sym_symbols

    mats = mats or matrices(t)
    _acc, comps, finals, periods = scc_data(t)
    pos = mats.position
    qd = mats.q**mats.d
    x = sym_symbols("x")
    period_of = dict(zip(finals, periods))
    found: list[complex] = []
    for ci, comp in enumerate(comps):
        block = _restrict(mats.M, [pos[s] for s in comp])
        poly = Poly(_charpoly(block), x)
        if ci in period_of:
            pj = period_of[ci]
            quo, rem = poly.div(Poly(x**pj - qd**pj, x))
            if not rem.is_zero:
                raise AnalysisError("final component lacks its dominant factor")
            poly = quo
        coeffs = [int(c) for c in poly.all_coeffs()]
        zeros = 0
        while len(coeffs) > 1 and coeffs[-1] == 0:
            coeffs.pop()
            zeros += 1
        found.extend([0j] * zeros)
        found.extend(_roots(coeffs))
    second = max((abs(z) for z in found), default=0.0)
    if second >= qd * (1 - 1e-12):
        raise AnalysisError("a non-dominant eigenvalue ties with q^d; components mis-detected")
    found.sort(key=lambda z: (-abs(z), z.real, z.imag))
    return Spectrum(tuple(found), float(second))


@dataclass(frozen=True)
class AsymptoticReport:
    components: tuple[tuple[int, ...], ...]
    a: tuple[Fraction, ...]
    b: tuple[Fraction, ...]
    lam: tuple[Fraction, ...]
    e_T: Fraction
    v_T: Fraction
    xi: float
    second_modulus: float
    classification: LimitLaw
    w0: tuple[Fraction, ...]
    exact_expansion: bool
    period: int
    structure: StructureReport
    states: tuple[int, ...] = field(default=())
    nondominant: tuple[complex, ...] = field(default=())

    @property
    def nondiff_applicable(self) -> bool:
        return self.structure.nondiff_applicable


def analyze(t: Transducer) -> AsymptoticReport:
    from .core import validate

    problems = validate(t)
    if problems:
        raise ValueError("invalid transducer: " + "; ".join(problems))
    st = structure(t)
    mats = matrices(t)
    comps = st.components
    ab = [component_mean_var(t, c, mats) for c in comps]
    a = tuple(x for x, _ in ab)
    b = tuple(y for _, y in ab)
    lam = hitting_probabilities(t, mats)
    e_t = sum((l * x for l, x in zip(lam, a)), Fraction(0))
    v_t = sum((l * y for l, y in zip(lam, b)), Fraction(0))
    sp = spectrum(t, mats)
    qd = t.q**t.d
    xi = math.inf if sp.second_modulus == 0 else t.d - math.log(sp.second_modulus) / math.log(t.q)
    if len(set(a)) > 1:
        law = LimitLaw.VARIANCE_THETA_LOG_SQUARED
    elif all(y == 0 for y in b):
        law = LimitLaw.DEGENERATE
    elif len(comps) == 1 and v_t > 0:
        law = LimitLaw.SINGLE_GAUSSIAN
    else:
        law = LimitLaw.GAUSSIAN_MIXTURE
    assert sp.second_modulus < qd
    return AsymptoticReport(
        components=tuple(comps),
        a=a,
        b=b,
        lam=lam,
        e_T=e_t,
        v_T=v_t,
        xi=xi,
        second_modulus=sp.second_modulus,
        classification=law,
        w0=tuple(exact_w0(t, mats)),
        exact_expansion=sp.exact_expansion,
        period=st.final_period,
        structure=st,
        states=mats.states,
        nondominant=sp.nondominant,
    )


def steady_state_identity_check(t: Transducer, report: AsymptoticReport | None = None, tol: float = 1e-10) -> bool:
    """q^{-d} w_0·δ equals e_T, with w_0 from power iteration."""
    report = report or analyze(t)
    mats = matrices(t)
    w = dominant_projection(t, mats=mats)[0]
    lhs = complex(np.dot(w, np.array([float(x) for x in mats.delta]))) / t.q**t.d
    return abs(lhs - float(report.e_T)) < tol
