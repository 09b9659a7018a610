import itertools
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from digitflux.acceptance import brute_force_recursion
from digitflux.core import ParseError, Transducer, evaluate, structure
from digitflux.corpus import fixture_text, load, random_recursion
from digitflux.recursion_compiler import (
    CompileError,
    IllPosedError,
    RecursionSystem,
    build_raw,
    compile_system,
    format_recursion,
    lower_carry_bound,
    merge_offset_equivalent,
    parse_recursion,
    well_posedness,
)

PAPERFOLDING = fixture_text("paperfolding.rec")


def test_paperfolding_parses_with_kappa_four():
    s = parse_recursion(PAPERFOLDING)
    assert (s.q, s.d, s.kappa) == (2, 1, 4)
    assert len(s.rules) == 16
    # rho(16n+3) = rho(2n+1) + 2
    assert s.rules[(3,)] == (1, (1,), Fraction(2))
    # rho(4n) = rho(2n) lifted to 16n + 4 -> 8n + 2
    assert s.rules[(4,)] == (3, (2,), Fraction(0))
    assert s.initial_values == {(0,): 0, (1,): 2}


def test_sum_of_digits_one_liner():
    s = parse_recursion("a(2n)=a(n)+0; a(2n+1)=a(n)+1; init a(0)=0")
    t, report = compile_system(s)
    assert report.well_posed and report.classes == (frozenset({(0,)}),)
    assert t.state_count == 1
    assert [evaluate(t, n) for n in range(8)] == [0, 1, 1, 2, 1, 2, 2, 3]


def test_headers_are_optional_and_name_is_free():
    s = parse_recursion("f(4n) = f(2n)\nf(4n+2)=f(2n+1)+1\nf(2n+1) = f(n) - 1/2\ninit f(0) = 0")
    assert s.q == 2 and s.kappa == 2
    # a(2n+1) lifted to 4n+1 and 4n+3
    assert s.rules[(1,)] == (1, (0,), Fraction(-1, 2))
    assert s.rules[(3,)] == (1, (1,), Fraction(-1, 2))


def test_declared_base_wins_over_inference():
    text = "recursion v1\nq 4\nd 1\na(4n)=a(n)\na(4n+1)=a(n)+1\na(4n+2)=a(n)+2\na(4n+3)=a(n)+3\ninit a(0)=0"
    t, _ = compile_system(parse_recursion(text))
    assert t.q == 4 and evaluate(t, 27) == 3 + 2 + 1


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("a(2n)=a(2n)+1; a(2n+1)=a(n)", "smaller"),
        ("a(2n)=a(n); init a(0)=0", "no rule"),
        ("a(2n)=a(n); a(2n)=a(n)+1; a(2n+1)=a(n)", "two rules"),
        ("a(2n)=b(n); a(2n+1)=a(n)", "differs"),
        ("a(3n)=a(n); a(2n+1)=a(n)", "base"),
        ("a(2n)=a(n) +; a(2n+1)=a(n)", "additive"),
        ("", "no rules"),
        (
            "recursion v1\nq 2\nd 2\na(2n,2n)=a(n,n-1)\na(2n+1,2n)=a(n,n)\n"
            "a(2n,2n+1)=a(n,n)\na(2n+1,2n+1)=a(n,n)\n",
            "non-negative",
        ),
    ],
)
def test_parse_errors(text, fragment):
    with pytest.raises(ParseError, match=fragment):
        parse_recursion(text)


def test_parse_error_carries_line_number():
    with pytest.raises(ParseError) as exc:
        parse_recursion("recursion v1\nq 2\na(2n)=a(n)\na(2n+1)=a(n) * 3\n")
    assert exc.value.line == 4


def test_format_round_trip():
    s = parse_recursion(PAPERFOLDING)
    assert parse_recursion(format_recursion(s)) == s


def test_ill_posed_fixture():
    s = load("illposed")
    report = well_posedness(build_raw(s), s)
    assert not report.well_posed
    assert report.bad_cycles == ((((0,),), Fraction(1)),)
    with pytest.raises(IllPosedError) as exc:
        compile_system(s)
    assert "nonzero output sum 1" in str(exc.value)


def test_missing_and_extra_initial_values():
    s = parse_recursion("a(2n)=a(n); a(2n+1)=a(n)+1")
    report = well_posedness(build_raw(s), s)
    assert report.missing == (frozenset({(0,)}),) and not report.well_posed
    s2 = parse_recursion("a(2n)=a(n); a(2n+1)=a(n)+1; init a(0)=0; init a(5)=2")
    report2 = well_posedness(build_raw(s2), s2)
    assert report2.extra == ((5,),)


def test_constant_sequence_gives_zero_transducer():
    t, _ = compile_system(parse_recursion("a(2n)=a(n); a(2n+1)=a(n); init a(0)=0"))
    assert all(evaluate(t, n) == 0 for n in range(300))


def test_paperfolding_against_brute_force(paperfolding):
    s = parse_recursion(PAPERFOLDING)
    cache = {}
    assert all(brute_force_recursion(s, (n,), cache) == evaluate(paperfolding, n) for n in range(1 << 16))


def test_paperfolding_known_values(paperfolding):
    # abelian complexity of the paperfolding word starts 2, 3, 4, 3, 4, 5, 4, 3, ...
    assert [int(evaluate(paperfolding, n)) for n in range(1, 9)] == [2, 3, 4, 3, 4, 5, 4, 3]


# The published drawing of the paperfolding transducer (without final outputs).
FIGURE_EDGES = (
    "v0 0 0 v1;v0 1 0 v2;v1 0 0 v3;v1 1 0 v4;v3 0 0 v7;v3 1 0 v8;v7 0 0 v7;v7 1 0 v8;"
    "v2 0 0 v5;v2 1 0 v6;v5 0 0 v11;v5 1 0 v12;v11 0 0 v11;v11 1 2 v2;v15 0 0 v4;v15 1 0 v16;"
    "v4 0 0 v9;v4 1 0 v10;v9 0 1 v11;v9 1 1 v12;v6 0 0 v13;v6 1 0 v14;v13 0 2 v2;v13 1 2 v6;"
    "v16 0 0 v8;v16 1 0 v17;v8 0 0 v9;v8 1 0 v10;v12 0 2 v5;v12 1 2 v2;v10 0 1 v13;v10 1 1 v14;"
    "v14 0 2 v2;v14 1 1 v15;v17 0 0 v8;v17 1 0 v17"
)


def _figure_transducer(system):
    delta = {}
    for item in FIGURE_EDGES.split(";"):
        s, e, o, t = item.split()
        delta[(int(s[1:]), (int(e),))] = (int(t[1:]), Fraction(int(o)))
    cache = {}
    finals = {}
    # final outputs follow from the sequence, also on zero-padded words
    for n in range(1 << 11):
        word = [int(c) for c in reversed(format(n, "b"))] if n else []
        for pad in range(5):
            s, total = 0, Fraction(0)
            for e in word + [0] * pad:
                s, o = delta[(s, (e,))]
                total += o
            want = brute_force_recursion(system, (n,), cache) - total
            assert finals.setdefault(s, want) == want
    assert len(finals) == 18
    return Transducer(2, 1, 18, 0, finals, delta)


def _normalized(t):
    return [
        [t.outputs[s][i] + t.finals[t.targets[s][i]] - t.finals[s] for i in range(len(t.alphabet))]
        for s in range(t.state_count)
    ]


def _bfs_isomorphic(a, b, na, nb):
    mapping = {a.initial: b.initial}
    queue = [a.initial]
    while queue:
        s = queue.pop()
        for i in range(len(a.alphabet)):
            x, y = a.targets[s][i], b.targets[mapping[s]][i]
            if na[s][i] != nb[mapping[s]][i]:
                return False
            if x in mapping:
                if mapping[x] != y:
                    return False
            else:
                mapping[x] = y
                queue.append(x)
    return len(mapping) == a.state_count and len(set(mapping.values())) == a.state_count


def test_figure_transducer_is_isomorphic_after_offset_merging(paperfolding):
    system = parse_recursion(PAPERFOLDING)
    figure = _figure_transducer(system)
    assert all(evaluate(figure, n) == evaluate(paperfolding, n) for n in range(4096))
    merged = merge_offset_equivalent(figure)
    assert merged.state_count == paperfolding.state_count == 9
    assert _bfs_isomorphic(merged, paperfolding, _normalized(merged), _normalized(paperfolding))


def test_offset_merging_preserves_values():
    system = parse_recursion(PAPERFOLDING)
    unmerged, _ = compile_system(system, merge=False)
    merged = merge_offset_equivalent(unmerged)
    assert merged.state_count < unmerged.state_count
    assert all(evaluate(merged, n) == evaluate(unmerged, n) for n in range(4096))


def _digraph_cycles(system, bound):
    """Cycles of n -> A(n) among 0 <= n < bound (d = 1)."""
    cycles = set()
    for start in range(bound):
        seen = []
        v = (start,)
        while v is not None and v not in seen and v[0] < bound:
            seen.append(v)
            v = system.A(v)
        if v is not None and v in seen:
            cycles.add(frozenset(seen[seen.index(v):]))
    return cycles


def _random_systems(count, seed, **kw):
    rng = random.Random(seed)
    return [random_recursion(rng, q=rng.choice([2, 3]), **kw) for _ in range(count)]


@pytest.mark.parametrize("system", _random_systems(12, 11), ids=lambda s: f"q{s.q}k{s.kappa}")
def test_zero_input_cycles_match_recursion_digraph(system):
    raw = build_raw(system)
    report = well_posedness(raw, system)
    assert {frozenset(c) for c in report.cycles} == _digraph_cycles(system, 512)
    # labels along each cycle sum to zero in a well-posed system
    for cyc in report.cycles:
        assert sum(system.label(c) for c in cyc) == 0


@pytest.mark.parametrize("system", _random_systems(12, 12), ids=lambda s: f"q{s.q}k{s.kappa}")
def test_raw_automaton_invariants(system):
    raw = build_raw(system)
    q = system.q
    lmin = lower_carry_bound(system)
    for i, st in enumerate(raw.states):
        assert q**st.level + st.carry[0] >= 0
        assert st.carry[0] >= lmin
        if i in raw.recursion:
            assert raw.states[raw.recursion[i][0]].level < st.level
        else:
            assert all(raw.states[x].level == st.level + 1 for x in raw.storing[i])


def test_classes_are_disjoint():
    for system in _random_systems(20, 13):
        report = well_posedness(build_raw(system), system)
        members = [x for cls in report.classes for x in cls]
        assert len(members) == len(set(members))


@settings(max_examples=40)
@given(st.integers(0, 2**32 - 1))
def test_compiler_oracle_one_dimensional(seed):
    rng = random.Random(seed)
    system = random_recursion(rng, q=rng.choice([2, 3]), kappa_max=3, offset_bound=8, output_bound=4)
    t, report = compile_system(system)
    assert report.well_posed
    cache = {}
    for n in range(4097):
        assert brute_force_recursion(system, (n,), cache) == evaluate(t, n)


@settings(max_examples=10)
@given(st.integers(0, 2**32 - 1))
def test_compiler_oracle_two_dimensional(seed):
    rng = random.Random(seed)
    system = random_recursion(rng, q=2, d=2, kappa_max=2, offset_bound=4)
    t, _ = compile_system(system)
    cache = {}
    for n in itertools.product(range(65), repeat=2):
        assert brute_force_recursion(system, n, cache) == evaluate(t, n)
    assert all(c >= 0 for st_ in build_raw(system).states for c in st_.carry)


def test_two_dimensional_dsl():
    text = (
        "recursion v1\nq 2\nd 2\n"
        "a(2n,2n) = a(n,n)\na(2n+1,2n) = a(n,n) + 1\n"
        "a(2n,2n+1) = a(n,n) + 1\na(2n+1,2n+1) = a(n,n) + 2\ninit a(0,0) = 0\n"
    )
    t, _ = compile_system(parse_recursion(text))
    assert t.d == 2
    assert all(evaluate(t, (x, y)) == bin(x).count("1") + bin(y).count("1") for x in range(20) for y in range(20))


def test_state_cap_is_enforced():
    with pytest.raises(CompileError, match="exceeded"):
        build_raw(parse_recursion(PAPERFOLDING), state_cap=5)


def test_recursion_system_rejects_bad_exponent():
    bad = RecursionSystem(2, 1, 1, {(0,): (1, (0,), Fraction(0)), (1,): (0, (0,), Fraction(0))}, {})
    with pytest.raises(CompileError):
        bad.check()


def test_compiled_paperfolding_structure(paperfolding):
    st_ = structure(paperfolding)
    assert st_.finally_connected and st_.finally_aperiodic
