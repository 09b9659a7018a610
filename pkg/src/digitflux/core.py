"""Transducer data model, digit expansions, evaluation and graph structure.

A transducer reads the q-ary (joint) digit expansion of a non-negative integer
vector, least significant symbol first and without leading zeros.  The value
T(n) is the sum of the transition outputs along the run plus the final output
of the state where the run stops.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Mapping, Sequence

Symbol = tuple[int, ...]

__all__ = [
    "Symbol",
    "Transducer",
    "StructureReport",
    "ParseError",
    "symbols",
    "symbol_index",
    "digits",
    "evaluate",
    "run",
    "validate",
    "structure",
    "scc_data",
    "find_reset",
    "replay",
    "parse_transducer",
    "serialize_transducer",
    "format_rational",
    "parse_rational",
]


class ParseError(ValueError):
    """Malformed text input; ``line`` is 1-based (0 when not line specific)."""

    def __init__(self, message: str, line: int = 0):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


def symbols(q: int, d: int) -> list[Symbol]:
    """All input symbols in index order (first component varies fastest)."""
    return [tuple((i // q**k) % q for k in range(d)) for i in range(q**d)]


def symbol_index(sym: Sequence[int], q: int) -> int:
    return sum(e * q**k for k, e in enumerate(sym))


def _as_vector(n, d: int) -> tuple[int, ...]:
    if isinstance(n, int):
        n = (n,)
    n = tuple(int(x) for x in n)
    if len(n) != d:
        raise ValueError(f"expected a vector of length {d}, got {len(n)}")
    if any(x < 0 for x in n):
        raise ValueError("arguments must be non-negative")
    return n


def digits(n, q: int, d: int | None = None) -> list[Symbol]:
    """Joint q-ary expansion of ``n``, least significant symbol first.

    ``n`` is an int (d=1) or a sequence of d ints.  Zero maps to the empty
    word and the most significant symbol is never the zero symbol.
    """
    if d is None:
        d = 1 if isinstance(n, int) else len(n)
    vec = list(_as_vector(n, d))
    out: list[Symbol] = []
    while any(vec):
        out.append(tuple(x % q for x in vec))
        vec = [x // q for x in vec]
    return out


def format_rational(x: Fraction) -> str:
    return str(Fraction(x))


def parse_rational(token: str) -> Fraction:
    """Parse ``p/q``, an integer or a decimal exactly."""
    try:
        return Fraction(token.strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"not a rational number: {token!r}") from exc


@dataclass(frozen=True)
class Transducer:
    """Deterministic subsequential transducer over the alphabet {0..q-1}^d.

    ``delta`` maps ``(state, symbol)`` to ``(target, output)``.  A well-formed
    transducer is total on that domain; :func:`validate` lists what is wrong
    with one that is not.  ``labels`` are the external state names used by the
    text format, index-aligned with states.
    """

    q: int
    d: int
    state_count: int
    initial: int
    final_output: Mapping[int, Fraction]
    delta: Mapping[tuple[int, Symbol], tuple[int, Fraction]]
    labels: tuple[str, ...] = field(default=())

    @cached_property
    def alphabet(self) -> list[Symbol]:
        return symbols(self.q, self.d)

    @cached_property
    def targets(self) -> list[list[int]]:
        """``targets[s][i]``: successor of state s on the symbol with index i."""
        return [[self.delta[(s, e)][0] for e in self.alphabet] for s in range(self.state_count)]

    @cached_property
    def outputs(self) -> list[list[Fraction]]:
        return [[Fraction(self.delta[(s, e)][1]) for e in self.alphabet] for s in range(self.state_count)]

    @cached_property
    def finals(self) -> list[Fraction]:
        return [Fraction(self.final_output[s]) for s in range(self.state_count)]

    def label(self, s: int) -> str:
        return self.labels[s] if self.labels else str(s)

    def step(self, state: int, sym: Symbol) -> tuple[int, Fraction]:
        return self.delta[(state, tuple(sym))]


def validate(t: Transducer) -> list[str]:
    """Return human-readable violations; an empty list means well formed."""
    problems: list[str] = []
    if t.q < 2:
        problems.append(f"base q={t.q} must be at least 2")
    if t.d < 1:
        problems.append(f"dimension d={t.d} must be at least 1")
    if t.state_count < 1:
        problems.append("a transducer needs at least one state")
    if problems:
        return problems
    if not 0 <= t.initial < t.state_count:
        problems.append(f"initial state {t.initial} out of range")
    if t.labels and len(t.labels) != t.state_count:
        problems.append("label count differs from state count")
    for s in range(t.state_count):
        if s not in t.final_output:
            problems.append(f"state {s} has no final output")
    for s in range(t.state_count):
        for e in symbols(t.q, t.d):
            if (s, e) not in t.delta:
                shown = e[0] if t.d == 1 else e
                problems.append(f"incomplete at ({s},{shown})")
    for (s, e), (target, _out) in t.delta.items():
        if not 0 <= s < t.state_count:
            problems.append(f"transition from unknown state {s}")
        if len(e) != t.d or any(not 0 <= x < t.q for x in e):
            problems.append(f"digit out of range in transition ({s},{e})")
        if not 0 <= target < t.state_count:
            problems.append(f"transition ({s},{e}) leads to unknown state {target}")
    for s in t.final_output:
        if not 0 <= s < t.state_count:
            problems.append(f"final output given for unknown state {s}")
    return problems


def run(t: Transducer, word: Iterable[Sequence[int]]) -> tuple[int, Fraction]:
    """Follow ``word`` (reading order) from the initial state.

    Returns the last state and the sum of transition outputs.  Words whose
    last symbol is the zero symbol are padded expansions and are rejected.
    """
    word = [tuple(e) for e in word]
    if word and not any(word[-1]):
        raise ValueError("input word has a leading zero symbol")
    state, total = t.initial, Fraction(0)
    for e in word:
        state, out = t.delta[(state, e)]
        total += out
    return state, total


def evaluate(t: Transducer, n) -> Fraction:
    """T(n): outputs along the run on the expansion of ``n`` plus final output."""
    vec = _as_vector(n, t.d)
    targets, outputs = t.targets, t.outputs
    q = t.q
    state = t.initial
    total = Fraction(0)
    if t.d == 1:
        m = vec[0]
        while m:
            m, e = divmod(m, q)
            total += outputs[state][e]
            state = targets[state][e]
    else:
        cur = list(vec)
        while any(cur):
            idx = 0
            for k, x in enumerate(cur):
                cur[k], r = divmod(x, q)
                idx += r * q**k
            total += outputs[state][idx]
            state = targets[state][idx]
    return total + t.finals[state]


# --------------------------------------------------------------------------
# Graph structure
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class StructureReport:
    accessible: frozenset[int]
    scc_list: tuple[tuple[int, ...], ...]
    final_components: tuple[int, ...]
    component_periods: tuple[int, ...]
    final_period: int
    finally_connected: bool
    finally_aperiodic: bool
    reset_sequence: tuple[Symbol, ...] | None
    nondiff_applicable: bool

    @property
    def components(self) -> list[tuple[int, ...]]:
        """States of C_1..C_c in the order of ``final_components``."""
        return [self.scc_list[i] for i in self.final_components]


def _accessible(t: Transducer) -> list[int]:
    seen = {t.initial}
    order = [t.initial]
    queue = deque(order)
    while queue:
        s = queue.popleft()
        for nxt in t.targets[s]:
            if nxt not in seen:
                seen.add(nxt)
                order.append(nxt)
                queue.append(nxt)
    return order


def _tarjan(nodes: Sequence[int], succ: Mapping[int, Sequence[int]]) -> list[list[int]]:
    """Iterative Tarjan; components come out in reverse topological order."""
    index: dict[int, int] = {}
    low: dict[int, int] = {}
    on_stack: set[int] = set()
    stack: list[int] = []
    comps: list[list[int]] = []
    counter = 0
    for root in nodes:
        if root in index:
            continue
        work = [(root, iter(succ[root]))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            v, it = work[-1]
            pushed = False
            for w in it:
                if w not in index:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(succ[w])))
                    pushed = True
                    break
                if w in on_stack:
                    low[v] = min(low[v], index[w])
            if pushed:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == v:
                        break
                comps.append(sorted(comp))
    return comps


def _period(comp: Sequence[int], succ: Mapping[int, Sequence[int]]) -> int:
    members = set(comp)
    depth = {comp[0]: 0}
    queue = deque([comp[0]])
    while queue:
        u = queue.popleft()
        for v in succ[u]:
            if v in members and v not in depth:
                depth[v] = depth[u] + 1
                queue.append(v)
    g = 0
    for u in comp:
        for v in succ[u]:
            if v in members:
                g = math.gcd(g, depth[u] + 1 - depth[v])
    return g


def _integer_outputs(t: Transducer, states: Iterable[int]) -> bool:
    for s in states:
        if t.finals[s].denominator != 1:
            return False
        if any(o.denominator != 1 for o in t.outputs[s]):
            return False
    return True


def scc_data(t: Transducer) -> tuple[list[int], list[list[int]], list[int], tuple[int, ...]]:
    """Accessible states, SCCs (sorted by smallest state), final SCC indices, periods."""
    acc = _accessible(t)
    succ = {s: sorted(set(t.targets[s])) for s in acc}
    comps = _tarjan(sorted(acc), succ)
    comps.sort(key=lambda c: c[0])
    where = {s: i for i, c in enumerate(comps) for s in c}
    finals = [i for i, c in enumerate(comps) if all(where[v] == i for u in c for v in succ[u])]
    periods = tuple(_period(comps[i], succ) for i in finals)
    return acc, comps, finals, periods


def structure(t: Transducer) -> StructureReport:
    """Accessible part, SCCs, final components, periods and a reset word."""
    acc, comps, finals, periods = scc_data(t)
    p = math.lcm(*periods)
    reset = find_reset(t)
    nondiff = False
    if t.d == 1 and reset is not None and _integer_outputs(t, acc):
        from .spectral import expected_value_constant

        nondiff = expected_value_constant(t).denominator != 1
    return StructureReport(
        accessible=frozenset(acc),
        scc_list=tuple(tuple(c) for c in comps),
        final_components=tuple(finals),
        component_periods=periods,
        final_period=p,
        finally_connected=len(finals) == 1,
        finally_aperiodic=p == 1,
        reset_sequence=reset,
        nondiff_applicable=nondiff,
    )


def replay(t: Transducer, word: Sequence[Sequence[int]], start: int) -> int:
    state = start
    for e in word:
        state = t.delta[(state, tuple(e))][0]
    return state


def find_reset(t: Transducer) -> tuple[Symbol, ...] | None:
    """A synchronizing word for the accessible states, or ``None``.

    Pairs are merged one at a time along shortest paths in the pair
    automaton, so the word is valid but usually not the shortest one.
    """
    acc = sorted(_accessible(t))
    alphabet = t.alphabet
    targets = t.targets
    if len(acc) == 1:
        return ()
    # Backward BFS in the pair automaton from the diagonal.
    pre: list[dict[int, list[int]]] = []
    for i in range(len(alphabet)):
        table: dict[int, list[int]] = {}
        for s in acc:
            table.setdefault(targets[s][i], []).append(s)
        pre.append(table)
    nxt: dict[tuple[int, int], tuple[int, tuple[int, int]]] = {}
    done = {(s, s) for s in acc}
    queue = deque(done)
    while queue:
        x, y = queue.popleft()
        for i in range(len(alphabet)):
            for a in pre[i].get(x, ()):
                for b in pre[i].get(y, ()):
                    key = (a, b) if a <= b else (b, a)
                    if key not in done:
                        done.add(key)
                        nxt[key] = (i, (x, y))
                        queue.append(key)
    current = set(acc)
    word: list[int] = []
    while len(current) > 1:
        a, b = sorted(current)[:2]
        if (a, b) not in nxt:
            return None
        piece = []
        key = (a, b)
        while key[0] != key[1]:
            i, (x, y) = nxt[key]
            piece.append(i)
            key = (x, y) if x <= y else (y, x)
        word.extend(piece)
        moved = set()
        for s in current:
            for i in piece:
                s = targets[s][i]
            moved.add(s)
        current = moved
    result = tuple(alphabet[i] for i in word)
    ends = {replay(t, result, s) for s in acc}
    if len(ends) != 1:
        raise AssertionError("reset word failed replay")
    return result


# --------------------------------------------------------------------------
# Text format
# --------------------------------------------------------------------------


def parse_transducer(text: str) -> Transducer:
    """Parse the line-oriented ``transducer v1`` format.

    State tokens are arbitrary labels; they are numbered in order of first
    appearance after the initial state, which always gets index 0.
    """
    q = d = count = None
    initial_label = None
    finals: list[tuple[str, Fraction, int]] = []
    trans: list[tuple[str, Symbol, str, Fraction, int]] = []
    header_seen = False
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if not header_seen:
            if parts != ["transducer", "v1"]:
                raise ParseError("expected header 'transducer v1'", lineno)
            header_seen = True
            continue
        key = parts[0]
        try:
            if key in ("q", "d", "states"):
                if len(parts) != 2:
                    raise ParseError(f"'{key}' takes one integer", lineno)
                value = int(parts[1])
                if key == "q":
                    q = value
                elif key == "d":
                    d = value
                else:
                    count = value
            elif key == "initial":
                if len(parts) != 2:
                    raise ParseError("'initial' takes one state", lineno)
                initial_label = parts[1]
            elif key == "final":
                if len(parts) != 3:
                    raise ParseError("'final' takes a state and a rational", lineno)
                finals.append((parts[1], parse_rational(parts[2]), lineno))
            elif key == "trans":
                if len(parts) != 6 or parts[3] != "->":
                    raise ParseError("expected 'trans FROM DIGITS -> TO OUTPUT'", lineno)
                sym = tuple(int(x) for x in parts[2].split(","))
                trans.append((parts[1], sym, parts[4], parse_rational(parts[5]), lineno))
            else:
                raise ParseError(f"unknown keyword {key!r}", lineno)
        except ValueError as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(str(exc), lineno) from exc
    if not header_seen:
        raise ParseError("empty input")
    if q is None or d is None or count is None or initial_label is None:
        raise ParseError("missing one of q, d, states, initial")
    labels = [initial_label]
    index = {initial_label: 0}

    def lookup(name: str, lineno: int) -> int:
        if name not in index:
            if len(labels) >= count:
                raise ParseError(f"more than {count} states (new label {name!r})", lineno)
            index[name] = len(labels)
            labels.append(name)
        return index[name]

    final_output: dict[int, Fraction] = {}
    for name, value, lineno in finals:
        s = lookup(name, lineno)
        if s in final_output:
            raise ParseError(f"duplicate final output for {name!r}", lineno)
        final_output[s] = value
    delta: dict[tuple[int, Symbol], tuple[int, Fraction]] = {}
    for src, sym, dst, out, lineno in trans:
        if len(sym) != d:
            raise ParseError(f"symbol {sym} does not have {d} digits", lineno)
        s, target = lookup(src, lineno), lookup(dst, lineno)
        if (s, sym) in delta:
            raise ParseError(f"second transition for ({src}, {parts_of(sym)}): not deterministic", lineno)
        delta[(s, sym)] = (target, out)
    if len(labels) < count:
        labels.extend(f"_{i}" for i in range(len(labels), count))
    return Transducer(q, d, count, 0, final_output, delta, tuple(labels))


def parts_of(sym: Symbol) -> str:
    return ",".join(str(x) for x in sym)


def serialize_transducer(t: Transducer) -> str:
    lines = ["transducer v1", f"q {t.q}", f"d {t.d}", f"states {t.state_count}"]
    lines.append(f"initial {t.label(t.initial)}")
    order = [t.initial] + [s for s in range(t.state_count) if s != t.initial]
    for s in order:
        if s in t.final_output:
            lines.append(f"final {t.label(s)} {format_rational(t.final_output[s])}")
    for s in order:
        for e in symbols(t.q, t.d):
            if (s, e) in t.delta:
                target, out = t.delta[(s, e)]
                lines.append(f"trans {t.label(s)} {parts_of(e)} -> {t.label(target)} {format_rational(out)}")
    return "\n".join(lines) + "\n"
