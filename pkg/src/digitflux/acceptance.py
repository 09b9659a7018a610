"""End-to-end checks on the bundled corpus, shared by ``selftest`` and the test suite."""

from __future__ import annotations

import itertools
import math
import random
import time
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Callable

import numpy as np

from . import corpus
from .core import Transducer, evaluate, find_reset, parse_transducer, replay, structure
from .dirichlet import SpecialFunctionContext, fourier
from .empirical import distribution_check, enumerate_values, fluctuation_samples, prefix_moments
from .recursion_compiler import IllPosedError, RecursionSystem, compile_system, parse_recursion
from .spectral import LimitLaw, analyze

__all__ = ["CriterionResult", "CRITERIA", "run_criteria", "brute_force_recursion"]


@dataclass(frozen=True)
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float
    skipped: bool = False

    def line(self) -> str:
        status = "SKIP" if self.skipped else ("PASS" if self.passed else "FAIL")
        return f"[{status}] {self.number:2d} {self.name}: {self.detail} ({self.seconds:.1f}s)"


class _Corpus:
    """Fixture access restricted to an optional directory."""

    def __init__(self, directory: Path | None):
        self.directory = directory

    def has(self, name: str) -> bool:
        if self.directory is None:
            return True
        return (self.directory / name).is_file()

    def text(self, name: str) -> str:
        if self.directory is None:
            return corpus.fixture_text(name)
        return (self.directory / name).read_text(encoding="utf-8")

    def transducer(self, name: str) -> Transducer:
        text = self.text(name)
        if name.endswith(".rec"):
            return compile_system(parse_recursion(text))[0]
        return parse_transducer(text)

    def names(self) -> list[str]:
        return [n for n in corpus.FIXTURES if self.has(n)]


class _Skip(Exception):
    pass


def _need(c: _Corpus, *names: str) -> None:
    missing = [n for n in names if not c.has(n)]
    if missing:
        raise _Skip("missing " + ", ".join(missing))


def brute_force_recursion(system: RecursionSystem, n: tuple[int, ...], cache: dict) -> Fraction:
    """a(n) by following the rules down to an initial value."""
    Q = system.q**system.kappa
    path = []
    seen = set()
    v = n
    while v not in cache and v not in system.initial_values:
        if v in seen:
            raise ArithmeticError(f"cycle without initial value through {v}")
        seen.add(v)
        k, r, t = system.rules[tuple(x % Q for x in v)]
        w = tuple(system.q**k * (x // Q) + ri for x, ri in zip(v, r))
        if any(x < 0 for x in w):
            raise ArithmeticError(f"a{v} refers to a negative argument")
        path.append((v, t))
        v = w
    val = cache[v] if v in cache else Fraction(system.initial_values[v])
    for u, t in reversed(path):
        val += t
        cache[u] = val
    return val


# --------------------------------------------------------------------------
# The criteria
# --------------------------------------------------------------------------


def c1_paperfolding_constants(c: _Corpus, **_) -> tuple[bool, str]:
    _need(c, "paperfolding.rec")
    start = time.perf_counter()
    rep = analyze(c.transducer("paperfolding.rec"))
    elapsed = time.perf_counter() - start
    target = abs(complex(-0.7718445063, 1.1151425080))
    ok = (
        rep.e_T == Fraction(8, 13)
        and rep.v_T == Fraction(432, 2197)
        and abs(rep.second_modulus - target) < 1e-6
        and elapsed < 10
    )
    return ok, f"e_T={rep.e_T} v_T={rep.v_T} |mu2|={rep.second_modulus:.10f} in {elapsed:.2f}s"


def c2_paperfolding_fourier(c: _Corpus, reference: dict[int, complex] | None = None, **_) -> tuple[bool, str]:
    _need(c, "paperfolding.rec")
    ref = reference if reference is not None else corpus.paperfolding_reference()
    start = time.perf_counter()
    res = fourier(c.transducer("paperfolding.rec"), 23)
    elapsed = time.perf_counter() - start
    worst = max(abs(res.coefficients[k] - v) for k, v in ref.items())
    ok = worst <= 1e-6 and elapsed < 120 and len(ref) == 24
    return ok, f"max |c_k - ref| = {worst:.2e} over {len(ref)} values in {elapsed:.1f}s"


def delange_coefficients(q: int, K: int) -> dict[int, complex]:
    """Closed forms for the q-ary sum of digits (independent of the engine)."""
    import mpmath

    L = math.log(q)
    out = {0: complex((q - 1) / (2 * L) * (math.log(2 * math.pi) - 1) - (q + 1) / 4)}
    for k in range(1, K + 1):
        chi = 2j * math.pi * k / L
        out[k] = -(q - 1) * complex(mpmath.zeta(chi)) / (chi * (1 + chi) * L)
    return out


def c3_sum_of_digits(c: _Corpus, **_) -> tuple[bool, str]:
    names = [f"sumdigits-q{q}.fst" for q in (2, 3, 4, 5)]
    _need(c, *names)
    start = time.perf_counter()
    worst = 0.0
    for q, name in zip((2, 3, 4, 5), names):
        res = fourier(c.transducer(name), 10)
        ref = delange_coefficients(q, 10)
        worst = max(worst, max(abs(res.coefficients[k] - ref[k]) for k in ref))
    elapsed = time.perf_counter() - start
    return worst <= 1e-9 and elapsed < 60, f"max deviation {worst:.2e} in {elapsed:.1f}s"


def c4_six_periodic(c: _Corpus, **_) -> tuple[bool, str]:
    _need(c, "sixperiodic.fst")
    rep = analyze(c.transducer("sixperiodic.fst"))
    return rep.e_T == Fraction(11, 8) and rep.period == 6, f"e_T={rep.e_T} p={rep.period}"


def c5_compiler_oracle(c: _Corpus, seed: int = 2024, **_) -> tuple[bool, str]:
    _need(c, "paperfolding.rec", "illposed.rec")
    rng = random.Random(seed)
    systems = [parse_recursion(c.text("paperfolding.rec"))]
    systems += [random_d1(rng) for _ in range(50)]
    bad = 0
    for s in systems:
        t = compile_system(s)[0]
        cache: dict = {}
        if any(brute_force_recursion(s, (n,), cache) != evaluate(t, n) for n in range(4096)):
            bad += 1
    bad2 = 0
    for _ in range(20):
        s = corpus.random_recursion(rng, q=2, d=2, kappa_max=2)
        t = compile_system(s)[0]
        cache = {}
        if any(brute_force_recursion(s, n, cache) != evaluate(t, n) for n in itertools.product(range(32), repeat=2)):
            bad2 += 1
    try:
        compile_system(parse_recursion(c.text("illposed.rec")))
        fired = False
    except IllPosedError:
        fired = True
    ok = bad == 0 and bad2 == 0 and fired
    return ok, f"d=1 mismatches {bad}/51, d=2 mismatches {bad2}/20, ill-posed detected={fired}"


def random_d1(rng: random.Random) -> RecursionSystem:
    return corpus.random_recursion(rng, q=rng.choice([2, 3]), d=1, kappa_max=3, offset_bound=8, output_bound=4)


def _prefix_fold_ok(t: Transducer, limit: int, checkpoints: list[int]) -> bool:
    if t.d == 1:
        vals = [evaluate(t, n) for n in range(limit)]
        s1 = s2 = Fraction(0)
        want = {}
        for n, v in enumerate(vals, 1):
            s1 += v
            s2 += v * v
            want[n] = (s1, s2)
        for N in checkpoints:
            m = prefix_moments(t, N)
            if m.count != N or (m.first, m.second) != want[N]:
                return False
        return True
    for N in checkpoints:
        vals = [evaluate(t, n) for n in itertools.product(range(N), repeat=t.d)]
        m = prefix_moments(t, N)
        if m.count != N**t.d or m.first != sum(vals) or m.second != sum(v * v for v in vals):
            return False
    return True


def c6_prefix_moments(c: _Corpus, seed: int = 7, **_) -> tuple[bool, str]:
    rng = random.Random(seed)
    failures = 0
    checks = [1, 2, 3, 7, 64, 100, 1000, 1023, 1024, 4095, 4096] + [rng.randint(1, 4096) for _ in range(5)]
    names = [n for n in c.names() if n.endswith(".fst") or n == "paperfolding.rec"]
    for name in names:
        failures += not _prefix_fold_ok(c.transducer(name), 4096, checks)
    for i in range(200):
        d = 2 if i % 5 == 4 else 1
        t = corpus.random_transducer(rng, q=rng.choice([2, 3, 4]), d=d, states=rng.randint(1, 5), rational=i % 3 == 0)
        if d == 1:
            failures += not _prefix_fold_ok(t, 4096, [rng.randint(1, 4096) for _ in range(4)] + [4096])
        else:
            failures += not _prefix_fold_ok(t, 32, [rng.randint(1, 32), 32])
    big = c.transducer("paperfolding.rec") if c.has("paperfolding.rec") else corpus.random_transducer(rng)
    prefix_moments(big, 2**40 - 1)
    start = time.perf_counter()
    reps = 50
    for j in range(reps):
        prefix_moments(big, 2**40 + j)
    per_query = (time.perf_counter() - start) / reps
    ok = failures == 0 and per_query < 1e-3
    return ok, f"{len(names)} fixtures + 200 random, failures {failures}; {per_query * 1e3:.3f} ms per query at N=2^40"


def c7_fluctuation(c: _Corpus, **_) -> tuple[bool, str]:
    _need(c, "paperfolding.rec")
    t = c.transducer("paperfolding.rec")
    rep = analyze(t)
    res = fourier(t, 200)
    rows = fluctuation_samples(t, rep, np.linspace(10, 12, 500))
    xs = np.array([r[0] for r in rows])
    emp = np.array([float(r[1]) for r in rows])
    sup = float(np.max(np.abs(emp - res(xs))))
    return sup <= 0.01, f"sup |empirical - partial series| = {sup:.4f}"


def c8_distribution(c: _Corpus, **_) -> tuple[bool, str]:
    _need(c, "paperfolding.rec", "sumdigits-q2.fst")
    parts = []
    ok = True
    for name in ("paperfolding.rec", "sumdigits-q2.fst"):
        t = c.transducer(name)
        rep = analyze(t)
        ks = [distribution_check(t, rep, 2**e).ks_distance for e in (16, 19, 22)]
        ok &= ks[0] > ks[1] > ks[2] and ks[2] <= 0.2
        parts.append(name.split(".")[0] + " " + "/".join(f"{v:.3f}" for v in ks))
    return ok, "; ".join(parts)


def c9_degenerate(c: _Corpus, **_) -> tuple[bool, str]:
    _need(c, "signflip.fst")
    t = c.transducer("signflip.fst")
    rep = analyze(t)
    chk = distribution_check(t, rep, 2**12)
    ok = rep.e_T == 0 and rep.v_T == 0 and rep.classification == LimitLaw.DEGENERATE and not chk.quantitative
    return ok, f"e_T={rep.e_T} v_T={rep.v_T} {rep.classification.value}, quantitative={chk.quantitative}"


def c10_structure(c: _Corpus, **_) -> tuple[bool, str]:
    _need(c, "paperfolding.rec")
    t = c.transducer("paperfolding.rec")
    st = structure(t)
    acc = sorted(st.accessible)
    word = st.reset_sequence
    found = word is not None and len({replay(t, word, s) for s in acc}) == 1
    given = ((1,), (0,), (0,), (0,), (0,))
    given_ok = len({replay(t, given, s) for s in acc}) == 1
    corpus_ok = True
    for name in c.names():
        if name == "illposed.rec":
            continue
        u = c.transducer(name)
        su = structure(u)
        if (len(su.final_components) > 1 or su.final_period > 1) and find_reset(u) is not None:
            corpus_ok = False
    nd = st.nondiff_applicable
    ok = found and given_ok and corpus_ok and nd
    return ok, f"reset found={found}, (00001) verifies={given_ok}, corpus rule={corpus_ok}, nondiff={nd}"


CRITERIA: list[tuple[int, str, Callable[..., tuple[bool, str]]]] = [
    (1, "paperfolding constants", c1_paperfolding_constants),
    (2, "paperfolding Fourier reference values", c2_paperfolding_fourier),
    (3, "sum-of-digits closed forms", c3_sum_of_digits),
    (4, "six-periodic example", c4_six_periodic),
    (5, "compiler oracle", c5_compiler_oracle),
    (6, "prefix-moment exactness", c6_prefix_moments),
    (7, "fluctuation coherence", c7_fluctuation),
    (8, "distributional convergence", c8_distribution),
    (9, "degenerate guardrails", c9_degenerate),
    (10, "structural suite", c10_structure),
]


def run_criteria(
    only: list[int] | None = None,
    corpus_dir: Path | None = None,
    reference: dict[int, complex] | None = None,
) -> list[CriterionResult]:
    """Run the selected criteria (all by default) and collect one result each."""
    c = _Corpus(corpus_dir)
    out = []
    for number, name, fn in CRITERIA:
        if only and number not in only:
            continue
        start = time.perf_counter()
        try:
            ok, detail = fn(c, reference=reference)
            out.append(CriterionResult(number, name, ok, detail, time.perf_counter() - start))
        except _Skip as skip:
            out.append(CriterionResult(number, name, True, str(skip), time.perf_counter() - start, skipped=True))
        except Exception as exc:  # a crash is a failure, reported with its message
            out.append(CriterionResult(number, name, False, f"error: {exc!r}", time.perf_counter() - start))
    return out
