"""Fourier coefficients of the periodic fluctuation Ψ₁ (d = 1).

The vector Dirichlet series H(z) = Σ_{n≥1} b(n) n^{-z} of state-wise output
sums satisfies a functional equation

    (I − q^{-z} M) H(z) = RHS(z),

whose right side only involves H at arguments with larger real part and
Hurwitz zeta values.  Residues of w_k^T H at z = 1 + χ_k give the Fourier
coefficients c_k.

Numerics.  The first R values b(n) are summed explicitly.  The remaining
tail U(s) = Σ_{n≥R₀} b(n) n^{-s} (R₀ = R/q) satisfies the same kind of
equation,

    (I − q^{-s} M) U(s) = Σ_{R₀≤n<qR₀} b(n) n^{-s} + q^{-s} Σ_ε δ_ε ζ(s, R₀ + ε/q)
                          + q^{-s} Σ_{m≥1} C(−s, m) q^{-m} Σ_ε ε^m M_ε U(s + m),

and its binomial series converges like (|s|/(q R₀))^m, so a handful of
shifts suffice even for large Im s.  Bulk sums use double precision; the
special functions use mpmath at the context precision.
"""

from __future__ import annotations

import cmath
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import mpmath
import numpy as np

from . import _exact as ex
from .core import Transducer
from .spectral import (
    AnalysisError,
    analyze,
    exact_w0,
    hitting_probabilities,
    matrices,
    dominant_projection,
    peripheral_projections,
    stationary_vector,
)
from .core import scc_data

__all__ = [
    "SpecialFunctionContext",
    "FourierResult",
    "PoleError",
    "hurwitz_zeta",
    "digamma",
    "h_vector_terms",
    "h_vector_array",
    "DirichletEngine",
    "h_series",
    "residue_k",
    "double_pole_data",
    "w0_derivative_term",
    "projection_derivative_term",
    "fourier",
]


class PoleError(ZeroDivisionError):
    """Evaluation requested at (or numerically too close to) a pole."""


@dataclass(frozen=True)
class SpecialFunctionContext:
    """Numerical policy.

    ``precision`` is in decimal digits (special functions); ``depth`` is the
    number R of explicit terms b(0..R-1); ``max_shift`` caps the binomial
    shifts m; ``tol`` is the truncation target for series.
    """

    precision: int = 30
    depth: int = 2**16
    max_shift: int = 40
    tol: float = 1e-17
    threads: int = 1

    @property
    def mp_tol(self) -> mpmath.mpf:
        return mpmath.mpf(10) ** (-self.precision)


# --------------------------------------------------------------------------
# Special functions
# --------------------------------------------------------------------------

_BERNOULLI_CACHE: dict[int, list] = {}


def _bernoulli_even(k_max: int, dps: int) -> list:
    """B_2, B_4, ..., B_{2 k_max} divided by (2k)!, at working precision."""
    key = dps
    cached = _BERNOULLI_CACHE.get(key, [])
    if len(cached) < k_max:
        with mpmath.workdps(dps):
            cached = [mpmath.bernoulli(2 * k) / mpmath.factorial(2 * k) for k in range(1, k_max + 1)]
        _BERNOULLI_CACHE[key] = cached
    return cached[:k_max]


_LOG_CACHE: dict[tuple, list] = {}


def _direct_logs(alpha, count: int, dps: int) -> list:
    """log(n + α) for n < count, cached per (α, dps) and extended on demand."""
    logs = _LOG_CACHE.setdefault((alpha, dps), [])
    if len(logs) < count:
        with mpmath.workdps(dps):
            a = mpmath.mpf(alpha.numerator) / alpha.denominator if isinstance(alpha, Fraction) else mpmath.mpf(alpha)
            logs.extend(mpmath.log(n + a) for n in range(len(logs), count))
    return logs[:count]


def hurwitz_zeta(z, alpha, precision: int = 30, direct_terms: int | None = None) -> mpmath.mpc:
    """ζ(z, α) = Σ_{n≥0} (n + α)^{-z} for α > 0, z ≠ 1.

    Direct summation of the first N terms followed by the Euler–Maclaurin
    correction.  N is chosen so that N + α ≥ |z|/2 + 20, which makes the
    correction terms decay geometrically.
    """
    with mpmath.workdps(precision + 10):
        s = mpmath.mpmathify(z)
        a = mpmath.mpf(alpha) if not isinstance(alpha, Fraction) else mpmath.mpf(alpha.numerator) / alpha.denominator
        if a <= 0:
            raise ValueError("alpha must be positive")
        if abs(s - 1) < mpmath.mpf(10) ** (-precision):
            raise PoleError("Hurwitz zeta has a pole at z = 1")
        if direct_terms is None:
            direct_terms = max(0, int(math.ceil(float(abs(s)) / 2 + 20 - float(a))))
        N = direct_terms
        total = mpmath.mpc(0)
        for log_term in _direct_logs(alpha, N, precision + 10):
            total += mpmath.exp(-s * log_term)
        x = N + a
        total += mpmath.power(x, 1 - s) / (s - 1) + mpmath.power(x, -s) / 2
        tol = mpmath.mpf(10) ** (-(precision + 5)) * max(1, abs(total))
        bern = _bernoulli_even(200, precision + 10)
        rising = s  # s (s+1) ... (s+2k-2)
        xpow = mpmath.power(x, -s - 1)
        x2 = 1 / (x * x)
        prev = None
        for k in range(1, 201):
            term = bern[k - 1] * rising * xpow
            total += term
            if abs(term) < tol:
                break
            if prev is not None and abs(term) > abs(prev) and k > 5:
                raise ArithmeticError("Euler–Maclaurin series started to diverge")
            prev = term
            rising *= (s + 2 * k - 1) * (s + 2 * k)
            xpow *= x2
        return +total


def digamma(x, precision: int = 30) -> mpmath.mpf:
    """ψ(x) for real x > 0: upward recurrence, then the asymptotic series."""
    with mpmath.workdps(precision + 10):
        v = mpmath.mpf(x.numerator) / x.denominator if isinstance(x, Fraction) else mpmath.mpf(x)
        if v <= 0:
            raise ValueError("digamma is implemented for positive arguments")
        shift = mpmath.mpf(0)
        threshold = precision + 10
        while v < threshold:
            shift -= 1 / v
            v += 1
        total = mpmath.log(v) - 1 / (2 * v)
        tol = mpmath.mpf(10) ** (-(precision + 5))
        v2 = 1 / (v * v)
        vp = v2
        with mpmath.workdps(precision + 10):
            for k in range(1, 200):
                term = mpmath.bernoulli(2 * k) / (2 * k) * vp
                total -= term
                if abs(term) < tol:
                    break
                vp *= v2
        return +(total + shift)


# --------------------------------------------------------------------------
# b(n)
# --------------------------------------------------------------------------


def _require_1d(t: Transducer) -> None:
    if t.d != 1:
        raise ValueError("Fourier analysis is implemented for d = 1 only")


def h_vector_terms(t: Transducer, R: int) -> list[list[Fraction]]:
    """Exact b(0), ..., b(R) over accessible states (matrix order of ``matrices``)."""
    _require_1d(t)
    mats = matrices(t)
    states = mats.states
    pos = mats.position
    q = t.q
    b = [[t.finals[s] for s in states]]
    for n in range(1, R + 1):
        m, e = divmod(n, q)
        prev = b[m]
        b.append([t.outputs[s][e] + prev[pos[t.targets[s][e]]] for s in states])
    return b


def h_vector_array(t: Transducer, R: int) -> np.ndarray:
    """Float array of b(0..R-1), shape (R, S), filled level by level."""
    _require_1d(t)
    mats = matrices(t)
    states = mats.states
    pos = mats.position
    q = t.q
    S = len(states)
    tg = np.array([[pos[t.targets[s][e]] for e in range(q)] for s in states], dtype=np.int64)
    out = np.array([[float(t.outputs[s][e]) for e in range(q)] for s in states])
    b = np.empty((R, S))
    b[0] = [float(t.finals[s]) for s in states]
    lo = 1
    while lo < R:
        hi = min(lo * q, R)
        n = np.arange(lo, hi)
        m, e = n // q, n % q
        b[lo:hi] = out[:, e].T + b[m[:, None], tg[:, e].T]
        lo = hi
    return b


# --------------------------------------------------------------------------
# Dirichlet engine
# --------------------------------------------------------------------------


def _binom_neg(s: complex, m: int) -> complex:
    """C(−s, m) = (−1)^m s(s+1)...(s+m−1)/m!."""
    c = 1 + 0j
    for i in range(m):
        c *= -(s + i) / (i + 1)
    return c


class DirichletEngine:
    """Shared data for evaluating H, its tail and residues of one transducer."""

    def __init__(self, t: Transducer, ctx: SpecialFunctionContext | None = None):
        _require_1d(t)
        self.t = t
        self.ctx = ctx or SpecialFunctionContext()
        self.mats = matrices(t)
        q = t.q
        self.q = q
        self.logq = math.log(q)
        R0 = max(64, -(-self.ctx.depth // q))
        self.R0 = R0
        self.R = q * R0
        self.S = self.mats.size
        self.M_eps = np.array(self.mats.M_eps_float())
        self.M = self.M_eps.sum(axis=0)
        self.delta_eps = np.array(self.mats.delta_eps_float())
        self.b = h_vector_array(t, self.R)
        n = np.arange(self.R, dtype=float)
        n[0] = 1.0
        self.logn = np.log(n)
        # bound ||b(n)||_inf <= beta log_q n + gamma
        omax = max((abs(float(o)) for row in t.outputs for o in row), default=0.0)
        fmax = max((abs(float(f)) for f in t.finals), default=0.0)
        self.beta = omax
        self.gamma = omax + fmax
        # scale of explicit sums for rounding estimates
        self.bscale = float(np.abs(self.b[1:]).max(initial=0.0))

    # -- bounds
    def _tail_bound(self, sigma: float) -> float:
        """Upper bound of Σ_{n≥R₀} ||b(n)|| n^{-σ} for σ > 1."""
        R0 = self.R0
        lq = self.logq
        B0 = self.beta * math.log(R0) / lq + self.gamma
        # ∫_{R0-1}^∞ (β log_q x + γ) x^{-σ} dx plus the first term
        x0 = R0 - 1
        integral = x0 ** (1 - sigma) / (sigma - 1) * (
            self.beta * (math.log(x0) / lq + 1 / ((sigma - 1) * lq)) + self.gamma
        )
        return B0 * R0 ** (-sigma) + integral

    def _power_weights(self, s: complex, lo: int, hi: int) -> np.ndarray:
        return np.exp(-s * self.logn[lo:hi])

    # -- tail
    def tail(self, s: complex, memo: dict | None = None, base: complex | None = None) -> tuple[np.ndarray, float]:
        """U(s) and an error bound, for Re s > 1."""
        if s.real <= 1:
            raise ValueError("the tail series needs Re s > 1")
        memo = {} if memo is None else memo
        key = complex(s)
        if key in memo:
            return memo[key]
        q, R0 = self.q, self.R0
        qs = cmath.exp(-s * self.logq)
        rhs = self.b[R0 : q * R0].T @ self._power_weights(s, R0, q * R0)
        for e in range(q):
            z = hurwitz_zeta(s, Fraction(R0 * q + e, q), self.ctx.precision)
            rhs = rhs + qs * complex(z) * self.delta_eps[e]
        err = 0.0
        m = 1
        while True:
            coeff = _binom_neg(s, m) * qs * q ** (-m)
            bound = abs(coeff) * sum(e**m for e in range(1, q)) * self._tail_bound(s.real + m)
            if bound < self.ctx.tol * max(1.0, float(np.abs(rhs).max())) or m > self.ctx.max_shift:
                err += bound
                break
            u, uerr = self.tail(s + m, memo)
            acc = np.zeros(self.S, dtype=complex)
            for e in range(1, q):
                acc += e**m * (self.M_eps[e] @ u)
            rhs = rhs + coeff * acc
            err += abs(coeff) * sum(e**m for e in range(1, q)) * uerr
            m += 1
        A = np.eye(self.S) - qs * self.M
        u = np.linalg.solve(A, rhs)
        cond = np.linalg.norm(np.linalg.inv(A), np.inf)
        rounding = 4e-16 * self.bscale * self.R0 ** (1 - s.real) * 8
        res = (u, cond * (err + rounding))
        memo[key] = res
        return res

    # -- right-hand side of the functional equation for H
    def _explicit(self, z: complex) -> np.ndarray:
        """Σ_{ε=1}^{q-1} b(ε)ε^{-z} + Σ_ε M_ε Σ_{1≤r<R₀} b(r)[(qr+ε)^{-z} − q^{-z} r^{-z}]."""
        q, R0, R = self.q, self.R0, self.R
        w = self._power_weights(z, 0, R)
        w[0] = 0
        first = self.b[1:q].T @ w[1:q]
        n = np.arange(q, R)
        eps = n % q
        shifted = self.b[q:R] - self.delta_eps[eps]
        part = shifted.T @ w[q:R]
        qs = cmath.exp(-z * self.logq)
        part -= qs * (self.M @ (self.b[1:R0].T @ w[1:R0]))
        return first + part

    def _shift_part(self, z: complex, memo: dict) -> tuple[np.ndarray, float]:
        """q^{-z} Σ_{m≥1} C(−z, m) q^{-m} Σ_ε ε^m M_ε U(z + m)."""
        q = self.q
        qs = cmath.exp(-z * self.logq)
        acc = np.zeros(self.S, dtype=complex)
        err = 0.0
        m = 1
        while True:
            coeff = _binom_neg(z, m) * qs * q ** (-m)
            weight = sum(e**m for e in range(1, q))
            bound = abs(coeff) * weight * self._tail_bound(z.real + m)
            if m > 1 and (bound < self.ctx.tol or m > self.ctx.max_shift):
                err += bound
                break
            u, uerr = self.tail(z + m, memo)
            inner = np.zeros(self.S, dtype=complex)
            for e in range(1, q):
                inner += e**m * (self.M_eps[e] @ u)
            acc += coeff * inner
            err += abs(coeff) * weight * uerr
            m += 1
        return acc, err

    def _rounding(self, z: complex) -> float:
        # explicit sums of about R terms of size ||b|| n^{-Re z}
        return 1e-15 * self.bscale * (math.log(self.R) ** 2 if z.real <= 1 else 10.0)

    def rhs(self, z: complex) -> tuple[np.ndarray, float]:
        """RHS(z) and an error estimate; requires Re z > 0 and z ≠ 1."""
        z = complex(z)
        if z.real <= 0:
            raise ValueError("the functional equation needs Re z > 0")
        memo: dict = {}
        out = self._explicit(z)
        qs = cmath.exp(-z * self.logq)
        for e in range(self.q):
            zeta = hurwitz_zeta(z, Fraction(self.q + e, self.q), self.ctx.precision)
            out = out + qs * complex(zeta) * self.delta_eps[e]
        shift, err = self._shift_part(z, memo)
        return out + shift, err + self._rounding(z)

    def regular_rhs_at_one(self) -> tuple[np.ndarray, float]:
        """RHS(z) at z = 1 without the Hurwitz-zeta terms (they carry the pole)."""
        memo: dict = {}
        out = self._explicit(1 + 0j)
        shift, err = self._shift_part(1 + 0j, memo)
        return out + shift, err + self._rounding(1 + 0j)


def _ctx(ctx: SpecialFunctionContext | None) -> SpecialFunctionContext:
    return ctx or SpecialFunctionContext()


def h_series(
    t: Transducer, z: complex, ctx: SpecialFunctionContext | None = None, engine: DirichletEngine | None = None
) -> tuple[np.ndarray, float]:
    """H(z) (vector over accessible states) with an error estimate.

    Valid for Re z > 0 away from the poles 1 + χ_k, where I − q^{-z}M is
    singular; near a pole :class:`PoleError` is raised.
    """
    eng = engine or DirichletEngine(t, _ctx(ctx))
    z = complex(z)
    A = np.eye(eng.S) - cmath.exp(-z * eng.logq) * eng.M
    sv = np.linalg.svd(A, compute_uv=False)
    if sv[-1] < 1e-10:
        raise PoleError(f"z = {z} is numerically a pole of H; use the residue path")
    r, err = eng.rhs(z)
    h = np.linalg.solve(A, r)
    return h, err / sv[-1]


@dataclass(frozen=True)
class FourierResult:
    """Coefficients c_k, |k| <= K, of the p-periodic fluctuation Ψ₁."""

    period: int
    q: int
    coefficients: dict[int, complex]
    errors: dict[int, float]
    e_T: Fraction
    w0_derivative: Fraction
    residue_one: complex
    h: complex
    residues: dict[int, complex] = field(default_factory=dict)

    @property
    def K(self) -> int:
        return max(self.coefficients)

    def __call__(self, x) -> np.ndarray | float:
        """Partial Fourier series Σ c_k e^{2πikx/p} (real part)."""
        xs = np.asarray(x, dtype=float)
        total = np.zeros_like(xs, dtype=complex)
        for k, c in self.coefficients.items():
            total += c * np.exp(2j * np.pi * k * xs / self.period)
        out = total.real
        return float(out) if out.ndim == 0 else out

    def rows(self) -> list[tuple[int, float, float, float]]:
        return [(k, c.real, c.imag, self.errors[k]) for k, c in sorted(self.coefficients.items()) if k >= 0]


def _projections(t: Transducer) -> np.ndarray:
    """Row vectors w_l (l = 0..p-1) in matrix order."""
    return dominant_projection(t)


def residue_k(
    t: Transducer,
    k: int,
    ctx: SpecialFunctionContext | None = None,
    engine: DirichletEngine | None = None,
    w: np.ndarray | None = None,
) -> tuple[complex, float]:
    """Res_{z=1+χ_k} w_k^T H(z) = w_k^T RHS(1+χ_k) / log q, for k ≠ 0."""
    if k == 0:
        raise ValueError("k = 0 is a double pole; use double_pole_data")
    eng = engine or DirichletEngine(t, _ctx(ctx))
    if w is None:
        w = _projections(t)
    p = w.shape[0]
    wk = w[k % p]
    if not np.any(np.abs(wk) > 1e-14):
        return 0j, 0.0
    chi = 2j * math.pi * k / (p * eng.logq)
    r, err = eng.rhs(1 + chi)
    return complex(wk @ r) / eng.logq, float(np.abs(wk).sum()) * err / eng.logq


def double_pole_data(
    t: Transducer,
    ctx: SpecialFunctionContext | None = None,
    engine: DirichletEngine | None = None,
) -> tuple[complex, complex, float]:
    """(Res_{z=1} w_0^T H, h, error): the 1/(z−1) coefficient and the constant h.

    Near z = 1, w_0^T RHS(z) = e_T/(z−1) + h + O(z−1); the Laurent main part of
    w_0^T H is e_T/log q · (z−1)^{-2} + (e_T/2 + h/log q)(z−1)^{-1}.
    """
    eng = engine or DirichletEngine(t, _ctx(ctx))
    c = eng.ctx
    mats = eng.mats
    w0 = np.array([float(x) for x in exact_w0(t, mats)])
    e_t = float(sum((Fraction(x) * y for x, y in zip(exact_w0(t, mats), mats.delta)), Fraction(0)) / t.q)
    reg, err = eng.regular_rhs_at_one()
    h = complex(w0 @ reg) - e_t * eng.logq
    for e in range(t.q):
        psi = float(digamma(Fraction(t.q + e, t.q), c.precision))
        h -= float(w0 @ eng.delta_eps[e]) * psi / t.q
    res = e_t / 2 + h / eng.logq
    return res, h, float(np.abs(w0).sum()) * err / eng.logq


def w0_derivative_term(t: Transducer) -> Fraction:
    """−i w_0'·1 = −e_1^T y with (M − qI) y = (I − P_0) δ and P_0 y = 0 (exact)."""
    _require_1d(t)
    mats = matrices(t)
    n = mats.size
    q = t.q
    _acc, comps, finals, _ = scc_data(t)
    pos = mats.position
    comp_pos = [[pos[s] for s in comps[i]] for i in finals]
    us = []
    for c in comp_pos:
        u = [Fraction(0)] * n
        for i, x in zip(c, stationary_vector(mats, c)):
            u[i] = x
        us.append(u)
    # right eigenvectors h_j: absorption probabilities into C_j from each state
    hs = _absorption_vectors(mats, comp_pos)
    delta = mats.delta
    proj_delta = [sum((hs[j][i] * ex.dot(us[j], delta) for j in range(len(us))), Fraction(0)) for i in range(n)]
    rhs = [d - pd for d, pd in zip(delta, proj_delta)]
    a = [[mats.M[i][j] - (q if i == j else 0) for j in range(n)] for i in range(n)]
    y = ex.solve_consistent(a, rhs)
    coeffs = [ex.dot(u, y) for u in us]
    y = [yi - sum((cj * hs[j][i] for j, cj in enumerate(coeffs)), Fraction(0)) for i, yi in enumerate(y)]
    return -y[0]


def _absorption_vectors(mats, comp_pos: list[list[int]]) -> list[list[Fraction]]:
    n = mats.size
    q = mats.q**mats.d
    owner = {i: j for j, c in enumerate(comp_pos) for i in c}
    transient = [i for i in range(n) if i not in owner]
    tpos = {s: k for k, s in enumerate(transient)}
    out = []
    for j in range(len(comp_pos)):
        vec = [Fraction(int(owner.get(i) == j)) if i in owner else Fraction(0) for i in range(n)]
        if transient:
            m = len(transient)
            a = [[Fraction(0)] * m for _ in range(m)]
            b = [Fraction(0)] * m
            for k, s in enumerate(transient):
                a[k][k] += 1
                for x in range(n):
                    wgt = mats.M[s][x]
                    if not wgt:
                        continue
                    if x in tpos:
                        a[k][tpos[x]] -= wgt / q
                    elif owner[x] == j:
                        b[k] += wgt / q
            sol = ex.solve(a, b)
            for k, s in enumerate(transient):
                vec[s] = sol[k]
        out.append(vec)
    return out


def projection_derivative_term(t: Transducer, l: int) -> complex:
    """i·w_l'·1 by the reduced-resolvent formula, numerically.

    With P = P_l, μ = q e^{2πil/p} and S the reduced resolvent at μ,
    the derivative of the projection is P' = −P M' S − S M' P with M' = iΔ.
    """
    _require_1d(t)
    mats = matrices(t)
    P_all = peripheral_projections(t)
    p = P_all.shape[0]
    P = P_all[l % p]
    mu = t.q * cmath.exp(2j * math.pi * l / p)
    M = mats.M_float()
    D = np.array([[float(x) for x in row] for row in mats.Delta])
    n = mats.size
    S = np.linalg.solve(M - mu * np.eye(n) + P, np.eye(n) - P)
    one = np.ones(n)
    val = P @ (D @ (S @ one)) + S @ (D @ (P @ one))
    return complex(val[0])


def fourier(t: Transducer, K: int, ctx: SpecialFunctionContext | None = None) -> FourierResult:
    """c_k for |k| <= K."""
    _require_1d(t)
    ctx = _ctx(ctx)
    report = analyze(t)
    eng = DirichletEngine(t, ctx)
    w = _projections(t)
    p = report.period
    res1, h, err0 = double_pole_data(t, ctx, eng)
    wd = w0_derivative_term(t)
    e_t = report.e_T
    c0 = -float(e_t) / eng.logq + float(wd) + res1
    coeffs = {0: complex(c0.real, 0.0)}
    errors = {0: err0 + 1e-15 * abs(c0)}
    residues = {0: res1}

    def one(k: int):
        r, err = residue_k(t, k, ctx, eng, w)
        return k, r, err

    ks = list(range(1, K + 1))
    if ctx.threads > 1:
        with ThreadPoolExecutor(ctx.threads) as pool:
            results = list(pool.map(one, ks))
    else:
        results = [one(k) for k in ks]
    for k, r, err in results:
        chi = 2j * math.pi * k / (p * eng.logq)
        ck = r / (1 + chi)
        coeffs[k] = ck
        coeffs[-k] = ck.conjugate()
        e = err / abs(1 + chi) + 1e-15 * abs(ck)
        errors[k] = errors[-k] = e
        residues[k] = r
    return FourierResult(p, t.q, coeffs, errors, e_t, wd, res1, h, residues)
