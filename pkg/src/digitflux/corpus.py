"""Bundled fixtures, reference data and random instance generators."""

from __future__ import annotations

import csv
import io
import itertools
import random
from fractions import Fraction
from importlib import resources
from pathlib import Path

from .core import Transducer, parse_transducer, symbols
from .recursion_compiler import (
    RecursionSystem,
    build_raw,
    compile_system,
    parse_recursion,
    well_posedness,
)

__all__ = [
    "FIXTURES",
    "fixture_text",
    "resolve",
    "load",
    "load_transducer",
    "paperfolding_reference",
    "random_transducer",
    "random_recursion",
]

FIXTURES = (
    "naf.fst",
    "signflip.fst",
    "sixperiodic.fst",
    "sumdigits-q2.fst",
    "sumdigits-q3.fst",
    "sumdigits-q4.fst",
    "sumdigits-q5.fst",
    "paperfolding.rec",
    "illposed.rec",
)


def _bundled(name: str):
    return resources.files("digitflux").joinpath("fixtures").joinpath(name)


def resolve(name: str | Path) -> str:
    """Text of a file path, or of a bundled fixture given by bare name.

    ``fixtures/naf.fst``, ``naf.fst`` and ``naf`` all find the bundled copy
    when no such file exists on disk.
    """
    path = Path(name)
    if path.is_file():
        return path.read_text(encoding="utf-8")
    base = path.name
    candidates = [base] if "." in base else [base + ".fst", base + ".rec"]
    for cand in candidates:
        res = _bundled(cand)
        if res.is_file():
            return res.read_text(encoding="utf-8")
    raise FileNotFoundError(f"no such file or bundled fixture: {name}")


def fixture_text(name: str) -> str:
    return _bundled(name).read_text(encoding="utf-8")


def _is_recursion(text: str) -> bool:
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            return not line.startswith("transducer")
    return False


def load(name: str | Path) -> Transducer | RecursionSystem:
    """Parse a transducer or recursion file (by path or bundled name)."""
    text = resolve(name)
    return parse_recursion(text) if _is_recursion(text) else parse_transducer(text)


def load_transducer(name: str | Path) -> Transducer:
    """Like :func:`load`, compiling recursions on the way."""
    obj = load(name)
    if isinstance(obj, RecursionSystem):
        return compile_system(obj)[0]
    return obj


def paperfolding_reference() -> dict[int, complex]:
    """Reference 10-digit values of c_k, 0 <= k <= 23, for the paperfolding example."""
    rows = csv.DictReader(io.StringIO(fixture_text("paperfolding-fourier.csv")))
    return {int(r["k"]): complex(float(r["re"]), float(r["im"])) for r in rows}


def random_transducer(
    rng: random.Random,
    q: int = 2,
    d: int = 1,
    states: int = 3,
    out_range: int = 3,
    rational: bool = False,
) -> Transducer:
    """A complete random transducer; outputs are small integers (or halves)."""

    def value() -> Fraction:
        v = Fraction(rng.randint(-out_range, out_range))
        return v / 2 if rational and rng.random() < 0.5 else v

    delta = {}
    for s in range(states):
        for sym in symbols(q, d):
            delta[(s, sym)] = (rng.randrange(states), value())
    finals = {s: value() for s in range(states)}
    return Transducer(q, d, states, 0, finals, delta, tuple(f"s{i}" for i in range(states)))


def random_recursion(
    rng: random.Random,
    q: int = 2,
    d: int = 1,
    kappa_max: int = 3,
    offset_bound: int = 8,
    output_bound: int = 4,
    nonnegative: bool | None = None,
    attempts: int = 200,
) -> RecursionSystem:
    """A random well-posed system with one initial value per class.

    Offsets r_λ lie in [−offset_bound, offset_bound] (non-negative when d ≥ 2
    or ``nonnegative``); additive terms in [−output_bound, output_bound].
    Zero-input cycles of nonzero output sum are repaired by zeroing the
    additive terms along them; hopeless candidates are redrawn.
    """
    if nonnegative is None:
        nonnegative = d >= 2
    lo = 0 if nonnegative else -offset_bound
    for _ in range(attempts):
        kappa = rng.randint(1, kappa_max)
        Q = q**kappa
        rules = {}
        for lam in itertools.product(range(Q), repeat=d):
            k = rng.randrange(kappa)
            r = tuple(rng.randint(lo, offset_bound) for _ in range(d))
            t = Fraction(rng.randint(-output_bound, output_bound))
            rules[lam] = (k, r, t)
        system = RecursionSystem(q, d, kappa, rules, {})
        report = well_posedness(build_raw(system), system)
        for _repair in range(4):
            if not report.bad_cycles:
                break
            # zero the additive terms of the rules used along offending cycles
            for cyc, _total in report.bad_cycles:
                for c in cyc:
                    lam = tuple(x % Q for x in c)
                    k, r, _t = rules[lam]
                    rules[lam] = (k, r, Fraction(0))
            system = RecursionSystem(q, d, kappa, rules, {})
            report = well_posedness(build_raw(system), system)
        if report.bad_cycles:
            continue
        inits = {min(cls): Fraction(rng.randint(-output_bound, output_bound)) for cls in report.classes}
        return RecursionSystem(q, d, kappa, rules, inits)
    raise RuntimeError("no well-posed system found; loosen the parameters")
