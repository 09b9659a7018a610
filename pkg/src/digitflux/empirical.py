"""Exact prefix moments, empirical fluctuations and limit-law checks.

Prefix sums over n < N are carried in the ring of 2-jets: a triple
(count, Σ value, Σ value²) per state.  The digits of N are consumed from the
most significant end, so a query costs O(log N) jet-matrix products.
"""

from __future__ import annotations

import functools
import itertools
import math
import weakref
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .core import Transducer, digits, evaluate
from .spectral import AsymptoticReport, LimitLaw

__all__ = [
    "Jet",
    "MomentSummary",
    "PrefixMomentEngine",
    "prefix_moments",
    "enumerate_values",
    "fluctuation_samples",
    "variance_fluctuation",
    "distribution_check",
    "evaluate_many",
    "stratified_sample",
    "DistributionCheck",
]


@dataclass(frozen=True)
class Jet:
    """Truncated series c + s·(it) + t·(it)²/2 of Σ exp(it·value)."""

    c: Fraction
    s: Fraction
    t: Fraction

    def __mul__(self, other: "Jet") -> "Jet":
        return Jet(
            self.c * other.c,
            self.c * other.s + self.s * other.c,
            self.c * other.t + 2 * self.s * other.s + self.t * other.c,
        )

    def __add__(self, other: "Jet") -> "Jet":
        return Jet(self.c + other.c, self.s + other.s, self.t + other.t)

    @staticmethod
    def of(value) -> "Jet":
        v = Fraction(value)
        return Jet(Fraction(1), v, v * v)


@dataclass(frozen=True)
class MomentSummary:
    N: int
    count: int
    first: Fraction
    second: Fraction

    @property
    def mean(self) -> Fraction:
        return self.first / self.count

    @property
    def variance(self) -> Fraction:
        m = self.mean
        return self.second / self.count - m * m

    def psi1(self, e_T: Fraction, q: int) -> float:
        """Empirical Ψ₁: mean minus e_T log_q N."""
        return float(self.mean) - float(e_T) * math.log(self.N) / math.log(q)


def _lcd(values: Iterable[Fraction]) -> int:
    d = 1
    for v in values:
        d = math.lcm(d, Fraction(v).denominator)
    return d


class PrefixMomentEngine:
    """Precomputed per-digit affine maps for one transducer.

    For d = 1 the state is (V, g) with V = G(N)f and g = P(N)f, both vectors
    of jets.  Reading digit ν of N turns N into qN + ν and acts as

        V ← J V + [N' ≠ 0](f − J_0 f) + Σ_{ε<ν} J_ε g,    g ← J_ν g,

    where J_ε is the jet lift of the digit-ε transition matrix.  Outputs are
    scaled to integers so the maps are integer matrices.
    """

    def __init__(self, t: Transducer):
        self.t = t
        self.q, self.d = t.q, t.d
        self.scale = _lcd(
            [o for row in t.outputs for o in row] + list(t.finals)
        )
        self.S = t.state_count
        D = self.scale
        self.out = [[int(o * D) for o in row] for row in t.outputs]
        self.fin = [int(f * D) for f in t.finals]
        self.omax = max([abs(o) for row in self.out for o in row] + [0])
        self.fmax = max([abs(f) for f in self.fin] + [0])
        if self.d == 1:
            self._build_maps_1d()

    # -- jet-matrix helpers over integer triples laid out as [c..., s..., t...]
    def _jet_apply(self, sym: int) -> np.ndarray:
        """Matrix of v ↦ J_sym v on the 3S layout (integer entries)."""
        S = self.S
        m = np.zeros((3 * S, 3 * S), dtype=object)
        for x in range(S):
            y = self.t.targets[x][sym]
            o = self.out[x][sym]
            m[x, y] += 1
            m[S + x, S + y] += 1
            m[S + x, y] += o
            m[2 * S + x, 2 * S + y] += 1
            m[2 * S + x, S + y] += 2 * o
            m[2 * S + x, y] += o * o
        return m

    def _f_vector(self) -> np.ndarray:
        S = self.S
        v = np.zeros(3 * S, dtype=object)
        for x in range(S):
            v[x] = 1
            v[S + x] = self.fin[x]
            v[2 * S + x] = self.fin[x] ** 2
        return v

    def _build_maps_1d(self) -> None:
        q, S = self.q, self.S
        J = [self._jet_apply(e) for e in range(q)]
        Jsum = sum(J[1:], J[0])
        f = self._f_vector()
        const = f - J[0].dot(f)
        n = 6 * S + 1
        self.maps = []
        for nu in range(q):
            L = np.zeros((n, n), dtype=object)
            L[: 3 * S, : 3 * S] = Jsum
            below = np.zeros((3 * S, 3 * S), dtype=object)
            for e in range(nu):
                below = below + J[e]
            L[: 3 * S, 3 * S : 6 * S] = below
            L[3 * S : 6 * S, 3 * S : 6 * S] = J[nu]
            L[: 3 * S, n - 1] = const
            L[n - 1, n - 1] = 1
            self.maps.append(L)
        self.maps64 = [m.astype(np.int64) for m in self.maps]
        self.start = np.concatenate([np.zeros(3 * S, dtype=object), f, np.array([1], dtype=object)])
        self.start64 = self.start.astype(np.int64)
        self.entry_max = max(int(np.max(np.abs(m.astype(object)))) for m in self.maps)

    def _fits_int64(self, N: int) -> bool:
        L = max(1, N.bit_length())
        tmax = L * self.omax + self.fmax
        vmax = N * max(1, tmax) ** 2
        return vmax * self.entry_max * (6 * self.S + 1) < 2**62

    def query(self, N: int) -> MomentSummary:
        if N < 1:
            raise ValueError("N must be at least 1")
        if self.d != 1:
            return self._query_multi(N)
        ds = [e[0] for e in digits(N, self.q, 1)][::-1]
        # int64 while the prefix read so far keeps every entry in range, then
        # exact Python integers for the remaining digits
        v = self.start64.copy()
        prefix = 0
        wide = False
        for nu in ds:
            prefix = prefix * self.q + nu
            if not wide and not self._fits_int64(prefix):
                v = v.astype(object)
                wide = True
            v = (self.maps[nu].dot(v)) if wide else (self.maps64[nu] @ v)
        v = [int(x) for x in v]
        return self._summary(N, N, v[0], v[self.S], v[2 * self.S])

    def _summary(self, N: int, count, c, s, t) -> MomentSummary:
        D = self.scale
        if c != count:
            raise AssertionError("jet count does not match N^d")
        return MomentSummary(N, int(count), Fraction(int(s), D), Fraction(int(t), D * D))

    # -- d >= 2: subset recursion over the axes sitting on the boundary
    def _query_multi(self, N: int) -> MomentSummary:
        q, d, S = self.q, self.d, self.S
        t = self.t
        axes = range(d)
        subsets = [frozenset(c) for r in range(d + 1) for c in itertools.combinations(axes, r)]
        full = frozenset(axes)
        zero = (0, 0, 0)
        f = [(1, self.fin[x], self.fin[x] ** 2) for x in range(S)]
        V = {C: [zero] * S for C in subsets}
        V[full] = list(f)
        alphabet = t.alphabet

        def apply(sym_ids: list[int], vec: list[tuple[int, int, int]]) -> list[tuple[int, int, int]]:
            out = []
            for x in range(S):
                c = s = tt = 0
                for i in sym_ids:
                    y = t.targets[x][i]
                    o = self.out[x][i]
                    cy, sy, ty = vec[y]
                    c += cy
                    s += sy + o * cy
                    tt += ty + 2 * o * sy + o * o * cy
                out.append((c, s, tt))
            return out

        def add(a, b):
            return [(x[0] + y[0], x[1] + y[1], x[2] + y[2]) for x, y in zip(a, b)]

        zero_sym = 0
        cur = 0
        for nu in [e[0] for e in digits(N, q, 1)][::-1]:
            new_cur = q * cur + nu
            newV = {}
            for C in subsets:
                acc = [zero] * S
                rest = [i for i in axes if i not in C]
                for r in range(len(rest) + 1):
                    for Dset in itertools.combinations(rest, r):
                        syms = [
                            k
                            for k, e in enumerate(alphabet)
                            if all(e[i] == nu for i in C)
                            and all(e[i] < nu for i in Dset)
                        ]
                        if syms:
                            acc = add(acc, apply(syms, V[C | frozenset(Dset)]))
                if not C and new_cur != 0:
                    j0f = apply([zero_sym], f)
                    acc = add(acc, [(a[0] - b[0], a[1] - b[1], a[2] - b[2]) for a, b in zip(f, j0f)])
                newV[C] = acc
            V = newV
            cur = new_cur
        c, s, tt = V[frozenset()][t.initial]
        return self._summary(N, N**d, c, s, tt)


_ENGINES: dict[int, tuple[weakref.ref, PrefixMomentEngine]] = {}


def _forget(key: int, _ref=None, _engines=_ENGINES) -> None:
    # default-arg binding keeps the dict reachable during interpreter shutdown
    _engines.pop(key, None)


def _engine(t: Transducer) -> PrefixMomentEngine:
    hit = _ENGINES.get(id(t))
    if hit is not None and hit[0]() is t:
        return hit[1]
    eng = PrefixMomentEngine(t)
    _ENGINES[id(t)] = (weakref.ref(t, functools.partial(_forget, id(t))), eng)
    return eng


def prefix_moments(t: Transducer, N: int) -> MomentSummary:
    """Exact count, Σ T(n) and Σ T(n)² over n in [0, N)^d."""
    return _engine(t).query(N)


def enumerate_values(t: Transducer, N: int) -> np.ndarray:
    """T(n) for all 0 <= n < N (d = 1) as floats, vectorised over n.

    Numbers are processed in blocks of equal digit length so every run in a
    block has the same number of steps.
    """
    if t.d != 1:
        raise ValueError("enumeration is implemented for d = 1")
    q = t.q
    targets = np.array(t.targets, dtype=np.int64)
    outputs = np.array([[float(o) for o in row] for row in t.outputs])
    finals = np.array([float(f) for f in t.finals])
    result = np.empty(N)
    result[0] = finals[t.initial]
    lo, length = 1, 1
    while lo < N:
        hi = min(lo * q, N)
        rest = np.arange(lo, hi, dtype=np.int64)
        state = np.full(hi - lo, t.initial, dtype=np.int64)
        acc = np.zeros(hi - lo)
        for _ in range(length):
            e = rest % q
            acc += outputs[state, e]
            state = targets[state, e]
            rest //= q
        result[lo:hi] = acc + finals[state]
        lo, length = lo * q, length + 1
    return result


def evaluate_many(t: Transducer, ns: np.ndarray) -> np.ndarray:
    """T(n) for an array of non-negative int64 arguments (d = 1), as floats."""
    if t.d != 1:
        raise ValueError("vectorised evaluation is implemented for d = 1")
    q = t.q
    targets = np.array(t.targets, dtype=np.int64)
    outputs = np.array([[float(o) for o in row] for row in t.outputs])
    finals = np.array([float(f) for f in t.finals])
    rest = np.array(ns, dtype=np.int64)
    state = np.full(rest.shape, t.initial, dtype=np.int64)
    acc = np.zeros(rest.shape)
    live = rest > 0
    while live.any():
        e = rest[live] % q
        acc[live] += outputs[state[live], e]
        state[live] = targets[state[live], e]
        rest[live] //= q
        live = rest > 0
    return acc + finals[state]


def stratified_sample(t: Transducer, N: int, size: int, seed: int = 0) -> np.ndarray:
    """T(n) at one uniform point from each of ``size`` equal strata of [0, N)."""
    rng = np.random.default_rng(seed)
    edges = (np.arange(size + 1, dtype=object) * N) // size
    lo = np.array([int(x) for x in edges[:-1]], dtype=np.int64)
    width = np.array([int(b - a) for a, b in zip(edges[:-1], edges[1:])], dtype=np.int64)
    ns = lo + (rng.random(size) * width).astype(np.int64)
    return evaluate_many(t, ns)


ENUMERATION_LIMIT = 2**24


def _values_for_law(t: Transducer, N: int, sample_size: int, seed: int) -> np.ndarray:
    if N <= ENUMERATION_LIMIT:
        return enumerate_values(t, N)
    return stratified_sample(t, N, sample_size, seed)


def _grid(x_grid: Sequence[float] | np.ndarray) -> list[float]:
    return [float(x) for x in x_grid]


def fluctuation_samples(
    t: Transducer, report: AsymptoticReport, x_grid: Sequence[float]
) -> list[tuple[float, float]]:
    """(x, mean(N) − e_T log_q N) with N = round(q^x) and x = log_q N.

    Rows are returned in the order of x mod p (ties by x).
    """
    if t.d != 1:
        raise ValueError("fluctuation samples are implemented for d = 1")
    rows = []
    for x in _grid(x_grid):
        N = int(round(t.q**x))
        if N < 1:
            raise ValueError(f"grid point {x} gives N < 1")
        m = prefix_moments(t, N)
        xa = math.log(N) / math.log(t.q)
        rows.append((xa, m.psi1(report.e_T, t.q)))
    p = report.period
    rows.sort(key=lambda r: (r[0] % p, r[0]))
    return rows


def variance_fluctuation(
    t: Transducer, report: AsymptoticReport, x_grid: Sequence[float]
) -> list[tuple[float, float]]:
    """(x, V(N) − v_T log_q N), the empirical −Ψ₁² + Ψ₂."""
    if report.classification == LimitLaw.VARIANCE_THETA_LOG_SQUARED:
        raise ValueError("variance grows like log^2 N; no periodic variance fluctuation")
    if t.d != 1:
        raise ValueError("variance fluctuation is implemented for d = 1")
    rows = []
    for x in _grid(x_grid):
        N = int(round(t.q**x))
        if N < 1:
            raise ValueError(f"grid point {x} gives N < 1")
        m = prefix_moments(t, N)
        xa = math.log(N) / math.log(t.q)
        rows.append((xa, float(m.variance) - float(report.v_T) * xa))
    rows.sort(key=lambda r: (r[0] % report.period, r[0]))
    return rows


@dataclass(frozen=True)
class DistributionCheck:
    N: int
    quantitative: bool
    ks_distance: float | None
    reference_scale: float
    centered: bool
    support: dict[float, float] | None = None
    reason: str = ""


def _norm_cdf(x: np.ndarray, mean: float, var: float) -> np.ndarray:
    from scipy.special import ndtr

    return ndtr((x - mean) / math.sqrt(var))


def distribution_check(
    t: Transducer,
    report: AsymptoticReport,
    N: int,
    centered: bool | None = None,
    sample_size: int = 2**20,
    seed: int = 0,
) -> DistributionCheck:
    """Kolmogorov distance between T(n)/√(log_q N), n < N, and the predicted law.

    The predicted law is Σ λ_j N(a_j √L, b_j) with L = log_q N.  When all
    a_j agree, ``centered`` (the default then) subtracts the exact mean
    first and compares with Σ λ_j N(0, b_j), which removes the O(1/√L)
    shift caused by the periodic fluctuation of the mean.

    Every n < N is used up to N = 2^24; beyond that a stratified sample of
    ``sample_size`` points (one per stratum, seeded) stands in.
    """
    L = math.log(N) / math.log(t.q)
    scale = 1 / math.sqrt(L)
    if any(b == 0 for b in report.b):
        values = _values_for_law(t, N, sample_size, seed)
        uniq, counts = np.unique(values, return_counts=True)
        support = {float(u): float(c) / len(values) for u, c in zip(uniq, counts)}
        return DistributionCheck(N, False, None, scale, False, support, "some b_j vanish; the law is not Gaussian")
    same_a = len(set(report.a)) == 1
    if centered is None:
        centered = same_a
    if centered and not same_a:
        raise ValueError("centring needs all a_j equal")
    values = _values_for_law(t, N, sample_size, seed)
    if centered:
        values = values - float(prefix_moments(t, N).mean)
    z = np.sort(values / math.sqrt(L))
    uniq, first = np.unique(z, return_index=True)
    upper = np.append(first[1:], len(z)) / len(z)
    lower = first / len(z)
    model = np.zeros_like(uniq)
    for lam, a, b in zip(report.lam, report.a, report.b):
        mean = 0.0 if centered else float(a) * math.sqrt(L)
        model += float(lam) * _norm_cdf(uniq, mean, float(b))
    ks = float(max(np.max(np.abs(upper - model)), np.max(np.abs(lower - model))))
    return DistributionCheck(N, True, ks, scale, centered)
