"""Compile digit recursions a(q^κ n + λ) = a(q^κ_λ n + r_λ) + t_λ into transducers.

The compiler explores carry/level states (l, j).  A state either applies one
rule of the recursion to the digits stored so far (an empty-input *recursion
transition*) or reads one more digit (a *storing transition*).  Recursion
transitions are then eliminated, leaving a deterministic subsequential
transducer whose output sum is the sequence.
"""

from __future__ import annotations

import itertools
import math
import re
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

from .core import ParseError, Transducer, format_rational, parse_rational, symbols

__all__ = [
    "RecursionSystem",
    "CarryState",
    "RawAutomaton",
    "WellPosednessReport",
    "CompileError",
    "IllPosedError",
    "parse_recursion",
    "format_recursion",
    "build_raw",
    "well_posedness",
    "reduce",
    "compile_system",
    "merge_offset_equivalent",
    "evaluate_recursion",
    "lower_carry_bound",
]

Vec = tuple[int, ...]
DEFAULT_STATE_CAP = 100_000


class CompileError(RuntimeError):
    pass


class IllPosedError(CompileError):
    def __init__(self, report: "WellPosednessReport"):
        self.report = report
        super().__init__(report.describe())


@dataclass(frozen=True)
class RecursionSystem:
    """``rules[λ] = (κ_λ, r_λ, t_λ)`` for every λ in [0, q^κ)^d."""

    q: int
    d: int
    kappa: int
    rules: Mapping[Vec, tuple[int, Vec, Fraction]]
    initial_values: Mapping[Vec, Fraction]

    def check(self) -> None:
        Q = self.q**self.kappa
        if self.q < 2 or self.d < 1 or self.kappa < 1:
            raise CompileError("need q >= 2, d >= 1 and kappa >= 1")
        for lam in itertools.product(range(Q), repeat=self.d):
            if lam not in self.rules:
                raise CompileError(f"no rule for residue {_show(lam)} modulo {Q}")
        for lam, (k, r, _t) in self.rules.items():
            if not 0 <= k < self.kappa:
                raise CompileError(f"rule for {_show(lam)}: right exponent {k} must be below {self.kappa}")
            if len(r) != self.d or len(lam) != self.d:
                raise CompileError(f"rule for {_show(lam)} has wrong dimension")
            if self.d >= 2 and any(x < 0 for x in r):
                raise CompileError(f"rule for {_show(lam)}: offsets must be non-negative when d >= 2")

    def A(self, n: Vec) -> Vec | None:
        """The recursion digraph map; ``None`` stands for an undefined image."""
        Q = self.q**self.kappa
        s = tuple(x // Q for x in n)
        lam = tuple(x % Q for x in n)
        k, r, _t = self.rules[lam]
        img = tuple(self.q**k * si + ri for si, ri in zip(s, r))
        return img if all(x >= 0 for x in img) else None

    def label(self, n: Vec) -> Fraction:
        Q = self.q**self.kappa
        return self.rules[tuple(x % Q for x in n)][2]


def _show(v: Vec) -> str:
    return str(v[0]) if len(v) == 1 else "(" + ",".join(map(str, v)) + ")"


# --------------------------------------------------------------------------
# DSL
# --------------------------------------------------------------------------

_CALL = re.compile(r"^\s*([A-Za-z_]\w*)\s*\(([^()]*)\)\s*(.*)$")
_LINEAR = re.compile(r"^\s*(\d*)\s*\*?\s*n\s*(?:([+-])\s*(\d+))?\s*$")


def _power_of(value: int, q: int) -> int | None:
    k = 0
    while value % q == 0 and value > 1:
        value //= q
        k += 1
    return k if value == 1 else None


def _linear(expr: str, lineno: int) -> tuple[int, int]:
    m = _LINEAR.match(expr)
    if not m:
        raise ParseError(f"expected an expression like 4n+1, got {expr.strip()!r}", lineno)
    coeff = int(m.group(1)) if m.group(1) else 1
    off = int(m.group(3) or 0) * (-1 if m.group(2) == "-" else 1)
    return coeff, off


def parse_recursion(text: str) -> RecursionSystem:
    """Parse the recursion DSL.

    Statements are separated by newlines or ``;``.  Headers ``recursion v1``,
    ``q`` and ``d`` are optional; missing ones are inferred.  Rules may use
    different left moduli; they are lifted to the largest one.
    """
    q = d = None
    raw_rules: list[tuple[list[tuple[int, int]], list[tuple[int, int]], Fraction, int]] = []
    inits: list[tuple[Vec, Fraction, int]] = []
    name = None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0]
        for stmt in line.split(";"):
            stmt = stmt.strip()
            if not stmt:
                continue
            parts = stmt.split()
            if parts == ["recursion", "v1"]:
                continue
            if parts[0] in ("q", "d") and len(parts) == 2:
                try:
                    value = int(parts[1])
                except ValueError:
                    raise ParseError(f"'{parts[0]}' takes an integer", lineno) from None
                if parts[0] == "q":
                    q = value
                else:
                    d = value
                continue
            is_init = parts[0] == "init"
            body = stmt[4:] if is_init else stmt
            if "=" not in body:
                raise ParseError(f"cannot parse statement {stmt!r}", lineno)
            lhs, rhs = body.split("=", 1)
            m = _CALL.match(lhs)
            if not m or m.group(3).strip():
                raise ParseError(f"bad left-hand side {lhs.strip()!r}", lineno)
            if name is None:
                name = m.group(1)
            elif m.group(1) != name:
                raise ParseError(f"sequence name {m.group(1)!r} differs from {name!r}", lineno)
            args = m.group(2).split(",")
            if d is None:
                d = len(args)
            if len(args) != d:
                raise ParseError(f"expected {d} arguments", lineno)
            if is_init:
                try:
                    point = tuple(int(a) for a in args)
                    value = parse_rational(rhs)
                except ValueError as exc:
                    raise ParseError(str(exc), lineno) from None
                if any(x < 0 for x in point):
                    raise ParseError("initial values need non-negative arguments", lineno)
                inits.append((point, value, lineno))
                continue
            left = [_linear(a, lineno) for a in args]
            m2 = _CALL.match(rhs)
            if not m2:
                raise ParseError(f"bad right-hand side {rhs.strip()!r}", lineno)
            if m2.group(1) != name:
                raise ParseError(f"sequence name {m2.group(1)!r} differs from {name!r}", lineno)
            right_args = m2.group(2).split(",")
            if len(right_args) != d:
                raise ParseError(f"expected {d} arguments on the right", lineno)
            right = [_linear(a, lineno) for a in right_args]
            tail = m2.group(3).strip()
            if tail:
                tm = re.match(r"^([+-])\s*(\S+)$", tail)
                if not tm:
                    raise ParseError(f"bad additive term {tail!r}", lineno)
                try:
                    t = parse_rational(tm.group(2))
                except ValueError as exc:
                    raise ParseError(str(exc), lineno) from None
                if tm.group(1) == "-":
                    t = -t
            else:
                t = Fraction(0)
            raw_rules.append((left, right, t, lineno))
    if not raw_rules:
        raise ParseError("no rules given")
    moduli = {c for left, right, _t, _l in raw_rules for c, _ in left + right}
    if q is None:
        big = [m for m in moduli if m > 1]
        q = next((b for b in range(2, min(big) + 1) if all(_power_of(m, b) is not None for m in big)), None)
        if q is None:
            raise ParseError("cannot infer a base q from the moduli")
    if q < 2:
        raise ParseError("q must be at least 2")
    lifted: list[tuple[int, Vec, int, Vec, Fraction, int]] = []
    for left, right, t, lineno in raw_rules:
        lmods = {c for c, _ in left}
        rmods = {c for c, _ in right}
        if len(lmods) != 1 or len(rmods) != 1:
            raise ParseError("all components must share one modulus per side", lineno)
        kl = _power_of(lmods.pop(), q)
        kr = _power_of(rmods.pop(), q)
        if kl is None or kr is None:
            raise ParseError(f"moduli must be powers of q={q}", lineno)
        if kl < 1:
            raise ParseError("left modulus must be at least q", lineno)
        lam = tuple(o for _c, o in left)
        if any(not 0 <= x < q**kl for x in lam):
            raise ParseError(f"left offsets must lie in [0, {q**kl})", lineno)
        if kr >= kl:
            raise ParseError(f"right exponent {kr} must be smaller than left exponent {kl}", lineno)
        lifted.append((kl, lam, kr, tuple(o for _c, o in right), t, lineno))
    kappa = max(r[0] for r in lifted)
    rules: dict[Vec, tuple[int, Vec, Fraction]] = {}
    for kl, lam, kr, r, t, lineno in lifted:
        step = kappa - kl
        for mu in itertools.product(range(q**step), repeat=d):
            key = tuple(q**kl * m + x for m, x in zip(mu, lam))
            if key in rules:
                raise ParseError(f"two rules cover residue {_show(key)} modulo {q**kappa}", lineno)
            rules[key] = (kr + step, tuple(q**kr * m + x for m, x in zip(mu, r)), t)
    initial: dict[Vec, Fraction] = {}
    for point, value, lineno in inits:
        if point in initial:
            raise ParseError(f"duplicate initial value at {_show(point)}", lineno)
        initial[point] = value
    system = RecursionSystem(q, d, kappa, rules, initial)
    try:
        system.check()
    except CompileError as exc:
        raise ParseError(str(exc)) from None
    return system


def format_recursion(system: RecursionSystem, name: str = "a") -> str:
    """Render a system in the DSL; ``parse_recursion`` reads it back unchanged."""

    def lin(coeff: int, off: int) -> str:
        head = "n" if coeff == 1 else f"{coeff}n"
        return head if off == 0 else f"{head}{off:+d}"

    Q = system.q**system.kappa
    lines = ["recursion v1", f"q {system.q}", f"d {system.d}"]
    for lam in sorted(system.rules):
        k, r, t = system.rules[lam]
        left = ",".join(lin(Q, x) for x in lam)
        right = ",".join(lin(system.q**k, x) for x in r)
        tail = "" if t == 0 else (" + " if t > 0 else " - ") + format_rational(abs(t))
        lines.append(f"{name}({left}) = {name}({right}){tail}")
    for pt in sorted(system.initial_values):
        lines.append(f"init {name}({','.join(map(str, pt))}) = {format_rational(system.initial_values[pt])}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# Carry/level automaton
# --------------------------------------------------------------------------


@dataclass(frozen=True, order=True)
class CarryState:
    level: int
    carry: Vec
    final: bool

    @property
    def simple_like(self) -> bool:
        return all(x >= 0 for x in self.carry)

    def name(self) -> str:
        return ",".join(map(str, self.carry)) + "@" + str(self.level)


@dataclass
class RawAutomaton:
    """Accessible part of the carry/level automaton.

    ``recursion[i] = (target, t)`` for states with an empty-input transition;
    otherwise ``storing[i]`` lists the target per input symbol (output 0).
    State 0 is the initial state (0, 0)_F.
    """

    system: RecursionSystem
    states: list[CarryState]
    recursion: dict[int, tuple[int, Fraction]] = field(default_factory=dict)
    storing: dict[int, list[int]] = field(default_factory=dict)

    def zero_successor(self, i: int) -> int:
        if i in self.recursion:
            return self.recursion[i][0]
        return self.storing[i][0]


def lower_carry_bound(system: RecursionSystem) -> Fraction:
    """l_min for d = 1: every accessible carry is at least this value."""
    q, kappa = system.q, system.kappa
    best = Fraction(0)
    for k, r, _t in system.rules.values():
        bound = (-1 + Fraction(r[0], q**k)) / (Fraction(1, q**k) - Fraction(1, q**kappa))
        best = min(best, bound)
    return best


def _transition(system: RecursionSystem, state: CarryState):
    """Either ('rec', target, t) or ('store', [targets])."""
    q, kappa, d = system.q, system.kappa, system.d
    l, j = state.carry, state.level
    if j >= kappa:
        Q = q**kappa
        s = tuple(x // Q for x in l)
        lam = tuple(x % Q for x in l)
        k, r, t = system.rules[lam]
        if d == 1:
            ok = q**k * (q ** (j - kappa) + s[0]) + r[0] >= 0
        else:
            ok = all(q**k * si + ri >= 0 for si, ri in zip(s, r))
        if ok:
            target = CarryState(k + j - kappa, tuple(q**k * si + ri for si, ri in zip(s, r)), False)
            return ("rec", target, t)
    targets = [
        CarryState(j + 1, tuple(q**j * e + x for e, x in zip(sym, l)), True) for sym in symbols(q, d)
    ]
    return ("store", targets)


def build_raw(system: RecursionSystem, state_cap: int = DEFAULT_STATE_CAP) -> RawAutomaton:
    system.check()
    start = CarryState(0, (0,) * system.d, True)
    seen = {start}
    queue = deque([start])
    edges: dict[CarryState, tuple] = {}
    while queue:
        st = queue.popleft()
        tr = _transition(system, st)
        edges[st] = tr
        nxt = [tr[1]] if tr[0] == "rec" else tr[1]
        for n in nxt:
            if n not in seen:
                if len(seen) >= state_cap:
                    raise CompileError(f"carry exploration exceeded {state_cap} states")
                seen.add(n)
                queue.append(n)
    order = sorted(seen, key=lambda s: (s != start, s.level, s.carry, not s.final))
    index = {s: i for i, s in enumerate(order)}
    raw = RawAutomaton(system, order)
    for st, tr in edges.items():
        i = index[st]
        if tr[0] == "rec":
            raw.recursion[i] = (index[tr[1]], tr[2])
        else:
            raw.storing[i] = [index[x] for x in tr[1]]
    if system.d == 1:
        lmin = lower_carry_bound(system)
        low = min(s.carry[0] for s in order)
        if low < lmin:
            raise AssertionError(f"carry {low} below the proven bound {lmin}")
    else:
        if any(x < 0 for s in order for x in s.carry):
            raise AssertionError("negative carry for d >= 2")
    return raw


# --------------------------------------------------------------------------
# Well-posedness
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class WellPosednessReport:
    well_posed: bool
    classes: tuple[frozenset[Vec], ...]
    cycles: tuple[tuple[Vec, ...], ...]
    bad_cycles: tuple[tuple[tuple[Vec, ...], Fraction], ...]
    missing: tuple[frozenset[Vec], ...]
    extra: tuple[Vec, ...]

    def describe(self) -> str:
        if self.well_posed:
            return "recursion is well-posed"
        msgs = []
        for cyc, total in self.bad_cycles:
            msgs.append(
                "zero-input cycle through carries "
                + " -> ".join(_show(c) for c in cyc)
                + f" has nonzero output sum {total}"
            )
        for cls in self.missing:
            msgs.append("no initial value for the class {" + ", ".join(_show(c) for c in sorted(cls)) + "}")
        for pt in self.extra:
            msgs.append(f"initial value at {_show(pt)} is not the only representative of a class")
        return "recursion is not well-posed: a unique solution needs every zero-input cycle to have output sum 0 and exactly one initial value per class; " + "; ".join(msgs)


def _zero_cycles(raw: RawAutomaton) -> list[list[int]]:
    succ = raw.zero_successor
    color: dict[int, int] = {}
    cycles = []
    for root in range(len(raw.states)):
        if root in color:
            continue
        path = []
        pos: dict[int, int] = {}
        v = root
        while v not in color:
            color[v] = 1
            pos[v] = len(path)
            path.append(v)
            v = succ(v)
        if color[v] == 1 and v in pos:
            cycles.append(path[pos[v]:])
        for u in path:
            color[u] = 2
    return cycles


def well_posedness(raw: RawAutomaton, system: RecursionSystem | None = None) -> WellPosednessReport:
    system = system or raw.system
    kappa = system.kappa
    classes: list[frozenset[Vec]] = []
    cycle_carriers: list[tuple[Vec, ...]] = []
    bad = []
    for cyc in _zero_cycles(raw):
        sts = [raw.states[i] for i in cyc]
        if not all(s.simple_like and s.level <= kappa for s in sts):
            continue
        total = sum((raw.recursion[i][1] for i in cyc if i in raw.recursion), Fraction(0))
        carriers = []
        for i in cyc:
            if i in raw.recursion:
                carriers.append(raw.states[i].carry)
        carriers = carriers or [sts[0].carry]
        # rotate so the smallest carrier comes first
        k = carriers.index(min(carriers))
        carriers = carriers[k:] + carriers[:k]
        cycle_carriers.append(tuple(carriers))
        classes.append(frozenset(carriers))
        if total != 0:
            bad.append((tuple(carriers), total))
    seen_classes = set(classes)
    carries = sorted({s.carry for s in raw.states if s.simple_like})
    for c in carries:
        if system.A(c) is None:
            cls = frozenset([c])
            if cls not in seen_classes:
                seen_classes.add(cls)
                classes.append(cls)
    classes = sorted(set(classes), key=lambda c: min(c))
    cycle_carriers = sorted(set(cycle_carriers))
    init = set(system.initial_values)
    missing = tuple(c for c in classes if not (c & init))
    covered: set[Vec] = set()
    extra = []
    for c in classes:
        hits = sorted(c & init)
        extra.extend(hits[1:])
        covered.update(hits)
    extra.extend(sorted(init - covered - set(extra)))
    ok = not bad and not missing and not extra
    return WellPosednessReport(ok, tuple(classes), tuple(cycle_carriers), tuple(bad), missing, tuple(sorted(set(extra))))


# --------------------------------------------------------------------------
# Reduction
# --------------------------------------------------------------------------


def _sequence_value(system: RecursionSystem, cache: dict[Vec, Fraction], n: Vec) -> Fraction:
    """a(n) by walking the recursion digraph to an initial value."""
    path: list[Vec] = []
    on_path: set[Vec] = set()
    v = n
    while v not in cache and v not in system.initial_values:
        if v in on_path:
            raise CompileError(f"cycle through {_show(v)} carries no initial value")
        on_path.add(v)
        path.append(v)
        nxt = system.A(v)
        if nxt is None:
            raise CompileError(f"a({_show(v)}) is not determined by the recursion and has no initial value")
        v = nxt
    value = cache[v] if v in cache else Fraction(system.initial_values[v])
    cache[v] = value
    for u in reversed(path):
        value = value + system.label(u)
        cache[u] = value
    return cache[n]


def evaluate_recursion(system: RecursionSystem, n, cache: dict[Vec, Fraction] | None = None) -> Fraction:
    if isinstance(n, int):
        n = (n,)
    return _sequence_value(system, {} if cache is None else cache, tuple(n))


def reduce(raw: RawAutomaton, system: RecursionSystem | None = None) -> Transducer:
    """Eliminate recursion transitions and drop non-final states."""
    system = system or raw.system
    memo: dict[int, list[tuple[int, Fraction]]] = {}

    def resolved(i: int) -> list[tuple[int, Fraction]]:
        chain = []
        while i not in memo and i in raw.recursion:
            chain.append(i)
            i = raw.recursion[i][0]
        if i not in memo:
            memo[i] = [(x, Fraction(0)) for x in raw.storing[i]]
        base = memo[i]
        for k in reversed(chain):
            t = raw.recursion[k][1]
            base = [(x, o + t) for x, o in base]
            memo[k] = base
        return memo[chain[0]] if chain else base

    order = [0]
    index = {0: 0}
    queue = deque([0])
    while queue:
        i = queue.popleft()
        for x, _o in resolved(i):
            if x not in index:
                index[x] = len(order)
                order.append(x)
                queue.append(x)
    alphabet = symbols(system.q, system.d)
    cache: dict[Vec, Fraction] = {}
    finals: dict[int, Fraction] = {}
    delta = {}
    for i in order:
        st = raw.states[i]
        finals[index[i]] = _sequence_value(system, cache, st.carry) if st.simple_like else Fraction(0)
        for sym, (x, o) in zip(alphabet, resolved(i)):
            delta[(index[i], sym)] = (index[x], o)
    labels = tuple(raw.states[i].name() for i in order)
    return Transducer(system.q, system.d, len(order), 0, finals, delta, labels)


def merge_offset_equivalent(t: Transducer) -> Transducer:
    """Merge states whose output functions differ by an additive constant.

    Outputs are first normalised by the potential φ(s) = final output of s,
    which turns the question into Moore refinement with all finals equal.
    Each class keeps its lowest-numbered member; the initial state stays 0.
    """
    n = t.state_count
    phi = t.finals
    alphabet = range(len(t.alphabet))
    norm = [[t.outputs[s][i] + phi[t.targets[s][i]] - phi[s] for i in alphabet] for s in range(n)]
    cls = [0] * n
    count = 1
    while True:
        sigs: dict[tuple, int] = {}
        new = []
        for s in range(n):
            key = (cls[s],) + tuple((cls[t.targets[s][i]], norm[s][i]) for i in alphabet)
            new.append(sigs.setdefault(key, len(sigs)))
        if len(sigs) == count:
            break
        cls, count = new, len(sigs)
    rep: dict[int, int] = {}
    for s in range(n):
        rep.setdefault(cls[s], s)
    reps = sorted(rep.values())
    index = {r: k for k, r in enumerate(reps)}
    delta = {}
    for r in reps:
        for i, sym in enumerate(t.alphabet):
            tgt = t.targets[r][i]
            rr = rep[cls[tgt]]
            delta[(index[r], sym)] = (index[rr], t.outputs[r][i] + phi[tgt] - phi[rr])
    finals = {index[r]: phi[r] for r in reps}
    labels = tuple(t.label(r) for r in reps)
    return Transducer(t.q, t.d, len(reps), index[rep[cls[t.initial]]], finals, delta, labels)


def compile_system(
    system: RecursionSystem, state_cap: int = DEFAULT_STATE_CAP, merge: bool = True
) -> tuple[Transducer, WellPosednessReport]:
    """build_raw + well_posedness + reduce; raises IllPosedError when ill-posed.

    With ``merge`` (default) offset-equivalent states are merged afterwards.
    """
    raw = build_raw(system, state_cap)
    report = well_posedness(raw, system)
    if not report.well_posed:
        raise IllPosedError(report)
    t = reduce(raw, system)
    return (merge_offset_equivalent(t) if merge else t), report
