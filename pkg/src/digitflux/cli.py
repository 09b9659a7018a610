"""``digitflux`` command line.

Exit status: 0 on success, 1 on domain errors (malformed or invalid input,
ill-posed recursions, failed self-test), 2 on usage errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__, corpus
from .core import ParseError, Transducer, format_rational, serialize_transducer, structure, validate
from .dirichlet import SpecialFunctionContext, fourier
from .empirical import distribution_check, fluctuation_samples, prefix_moments, variance_fluctuation
from .recursion_compiler import CompileError, IllPosedError, RecursionSystem, compile_system
from .spectral import AnalysisError, LimitLaw, analyze


class UsageError(Exception):
    pass


class DomainError(Exception):
    pass


def _grid(text: str) -> np.ndarray:
    try:
        lo, hi, step = (float(x) for x in text.split(":"))
    except ValueError:
        raise UsageError(f"--grid expects lo:hi:step, got {text!r}") from None
    if step <= 0 or hi < lo:
        raise UsageError("--grid needs lo <= hi and step > 0")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(count)


def _load(path: str) -> Transducer:
    try:
        obj = corpus.load(path)
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from None
    if isinstance(obj, RecursionSystem):
        return compile_system(obj)[0]
    problems = validate(obj)
    if problems:
        raise DomainError("invalid transducer: " + "; ".join(problems))
    return obj


def _ctx(args) -> SpecialFunctionContext:
    return SpecialFunctionContext(precision=args.precision, depth=args.depth, threads=args.threads)


def _fmt_word(word) -> str:
    if word is None:
        return "none"
    if not word:
        return "(empty)"
    parts = ["".join(map(str, e)) if len(e) == 1 else "(" + ",".join(map(str, e)) + ")" for e in word]
    return " ".join(parts) + "  (first symbol read first)"


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------


def cmd_validate(args, out) -> int:
    try:
        obj = corpus.load(args.file)
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from None
    if isinstance(obj, RecursionSystem):
        t, report = compile_system(obj)
        print(f"recursion ok: q={obj.q} d={obj.d} kappa={obj.kappa}, {len(report.classes)} initial-value classes,"
              f" compiles to {t.state_count} states", file=out)
        return 0
    problems = validate(obj)
    if problems:
        for p in problems:
            print(p, file=out)
        return 1
    print(f"transducer ok: q={obj.q} d={obj.d}, {obj.state_count} states", file=out)
    return 0


def cmd_structure(args, out) -> int:
    t = _load(args.file)
    st = structure(t)
    label = t.label
    print(f"accessible states: {len(st.accessible)} of {t.state_count}", file=out)
    print(f"strongly connected components: {len(st.scc_list)}", file=out)
    for n, i in enumerate(st.final_components, 1):
        comp = " ".join(label(s) for s in st.scc_list[i])
        print(f"final component C{n}: {{{comp}}} period {st.component_periods[n - 1]}", file=out)
    print(f"final period p: {st.final_period}", file=out)
    print(f"finally connected: {st.finally_connected}", file=out)
    print(f"finally aperiodic: {st.finally_aperiodic}", file=out)
    print(f"reset word: {_fmt_word(st.reset_sequence)}", file=out)
    print(f"nowhere-differentiability criterion applies: {st.nondiff_applicable}", file=out)
    return 0


def cmd_compile(args, out) -> int:
    try:
        obj = corpus.load(args.file)
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from None
    if not isinstance(obj, RecursionSystem):
        raise UsageError("compile expects a recursion file")
    t, _report = compile_system(obj, merge=not args.no_merge)
    out.write(serialize_transducer(t))
    return 0


def _report_lines(t: Transducer, rep) -> list[str]:
    lines = [
        f"q={t.q}",
        f"d={t.d}",
        f"states={len(rep.states)}",
        f"final_components={len(rep.components)}",
        f"period={rep.period}",
    ]
    for j, (lam, a, b) in enumerate(zip(rep.lam, rep.a, rep.b), 1):
        lines.append(f"component_{j}=lambda:{format_rational(lam)},a:{format_rational(a)},b:{format_rational(b)}")
    lines += [
        f"e_T={format_rational(rep.e_T)}",
        f"v_T={format_rational(rep.v_T)}",
        f"second_modulus={rep.second_modulus:.10f}",
        f"xi={'inf' if math.isinf(rep.xi) else format(rep.xi, '.10f')}",
        f"exact_expansion={str(rep.exact_expansion).lower()}",
        f"classification={rep.classification.value}",
        f"reset_word={_fmt_word(rep.structure.reset_sequence).split('  ')[0]}",
        f"nondiff_applicable={str(rep.nondiff_applicable).lower()}",
    ]
    return lines


def cmd_analyze(args, out) -> int:
    t = _load(args.file)
    rep = analyze(t)
    print(f"E(T) = {format_rational(rep.e_T)} log_q N + Psi1 + O(N^-xi log N)", file=out)
    if rep.classification == LimitLaw.VARIANCE_THETA_LOG_SQUARED:
        print("V(T) grows like log^2 N (final components with different means)", file=out)
    else:
        print(f"V(T) = {format_rational(rep.v_T)} log_q N - Psi1^2 + Psi2 + O(N^-xi log^2 N)", file=out)
    print(f"limit law: {rep.classification.value}", file=out)
    print("", file=out)
    for line in _report_lines(t, rep):
        print(line, file=out)
    return 0


def cmd_fourier(args, out) -> int:
    t = _load(args.file)
    if t.d != 1:
        raise DomainError("Fourier coefficients are implemented for d = 1 only")
    res = fourier(t, args.terms, _ctx(args))
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["k", "re", "im", "err"])
    for k, re, im, err in res.rows():
        w.writerow([k, f"{re:.15e}", f"{im:.15e}", f"{err:.3e}"])
    if args.series_out:
        xs = _grid(args.grid) if args.grid else np.arange(256) * (res.period / 256)
        with open(args.series_out, "w", encoding="utf-8", newline="") as fh:
            sw = csv.writer(fh, lineterminator="\n")
            sw.writerow(["x", "fourier_partial"])
            for x, v in zip(xs, res(xs)):
                sw.writerow([f"{x:.10f}", f"{v:.15e}"])
    return 0


def cmd_empirical(args, out) -> int:
    t = _load(args.file)
    rep = analyze(t)
    w = csv.writer(out, lineterminator="\n")
    if args.N is not None:
        m = prefix_moments(t, args.N)
        w.writerow(["N", "count", "sum", "sum_of_squares", "mean", "variance"])
        w.writerow([m.N, m.count, format_rational(m.first), format_rational(m.second),
                    format_rational(m.mean), format_rational(m.variance)])
        return 0
    if t.d != 1:
        raise DomainError("the distribution check enumerates d = 1 sequences only")
    top = args.max_exp
    exps = [e for e in range(top - 6, top + 1, 3) if e >= 1]
    rows = []
    for e in exps:
        chk = distribution_check(t, rep, t.q**e)
        if not chk.quantitative:
            print(f"quantitative mode refused at N={chk.N}: {chk.reason}", file=sys.stderr)
            w.writerow(["N", "value", "probability"])
            for v, pr in sorted(chk.support.items()):
                w.writerow([chk.N, f"{v:g}", f"{pr:.10f}"])
            return 0
        rows.append([chk.N, f"{chk.ks_distance:.10f}", f"{chk.reference_scale:.10f}"])
    w.writerow(["N", "ks_distance", "reference_scale"])
    w.writerows(rows)
    return 0


def cmd_fluctuation(args, out) -> int:
    t = _load(args.file)
    rep = analyze(t)
    xs = _grid(args.grid)
    w = csv.writer(out, lineterminator="\n")
    if args.variance:
        w.writerow(["x", "empirical_variance_fluctuation"])
        for x, v in variance_fluctuation(t, rep, xs):
            w.writerow([f"{x:.10f}", f"{v:.15e}"])
        return 0
    rows = fluctuation_samples(t, rep, xs)
    if args.terms:
        res = fourier(t, args.terms, _ctx(args))
        w.writerow(["x", "empirical_psi1", "fourier_partial"])
        for x, v in rows:
            w.writerow([f"{x:.10f}", f"{v:.15e}", f"{res(x):.15e}"])
    else:
        w.writerow(["x", "empirical_psi1"])
        for x, v in rows:
            w.writerow([f"{x:.10f}", f"{v:.15e}"])
    return 0


def cmd_selftest(args, out) -> int:
    from .acceptance import run_criteria

    corpus_dir = Path(args.corpus) if args.corpus else None
    if corpus_dir is not None and not corpus_dir.is_dir():
        raise UsageError(f"no such corpus directory: {corpus_dir}")
    reference = None
    if args.reference:
        with open(args.reference, encoding="utf-8") as fh:
            reference = {int(r["k"]): complex(float(r["re"]), float(r["im"])) for r in csv.DictReader(fh)}
    only = [int(x) for x in args.only.split(",")] if args.only else None
    results = run_criteria(only, corpus_dir, reference)
    for r in results:
        print(r.line(), file=out)
    empty = corpus_dir is not None and not any((corpus_dir / n).is_file() for n in corpus.FIXTURES)
    if empty or (results and all(r.skipped for r in results)):
        print("warning: the corpus contains none of the expected fixtures; nothing was checked", file=out)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} passed", file=out)
    return 1 if failed else 0


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="digitflux",
        description="Transducer-defined digital sequences: compile, analyze, Fourier coefficients, empirical checks.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name: str, help_text: str, file_help: str = "transducer (.fst) or recursion (.rec) file, or a bundled fixture name"):
        p = sub.add_parser(name, help=help_text, description=help_text)
        if name != "selftest":
            p.add_argument("file", help=file_help)
        p.add_argument("--out", help="write the result to this file instead of stdout")
        return p

    def numeric(p):
        p.add_argument("--precision", type=int, default=30, help="decimal digits for special functions (default 30)")
        p.add_argument("--depth", type=int, default=2**16, help="explicit terms R of the Dirichlet series (default 65536)")
        p.add_argument("--threads", type=int, default=1, help="worker threads over k; results do not depend on it")

    add("validate", "check a transducer for completeness, or a recursion for well-posedness")
    add("structure", "components, periods and reset word")
    p = add("compile", "compile a recursion into a transducer (text format)", "recursion file or bundled fixture name")
    p.add_argument("--no-merge", action="store_true", help="skip merging of offset-equivalent states")
    add("analyze", "exact constants of the mean and variance and the limit law")
    p = add("fourier", "Fourier coefficients c_k of the fluctuation Psi1 (d = 1)")
    p.add_argument("--terms", "-K", type=int, default=23, help="largest k (default 23)")
    numeric(p)
    p.add_argument("--grid", help="lo:hi:step grid for --series-out (default: 256 points over one period)")
    p.add_argument("--series-out", help="also write samples x,fourier_partial of the partial series to this CSV")
    p = add("empirical", "exact prefix moments or Kolmogorov distances to the predicted law")
    p.add_argument("--max-exp", type=int, default=16, help="largest exponent e; N runs over q^(e-6), q^(e-3), q^e")
    p.add_argument("--N", type=int, help="print exact prefix moments for n < N instead")
    p = add("fluctuation", "empirical samples of Psi1 over a grid of log_q N")
    p.add_argument("--grid", default="4:16:0.01", help="lo:hi:step in log_q N (default 4:16:0.01)")
    p.add_argument("--terms", "-K", type=int, default=0, help="add the partial Fourier series with this K")
    p.add_argument("--variance", action="store_true", help="emit the variance fluctuation instead")
    numeric(p)
    p = add("selftest", "run the acceptance checks on the bundled corpus")
    p.add_argument("--only", help="comma-separated criterion numbers")
    p.add_argument("--corpus", help="directory with fixture files replacing the bundled ones")
    p.add_argument("--reference", help="CSV k,re,im replacing the bundled paperfolding reference values")
    return parser


COMMANDS = {
    "validate": cmd_validate,
    "structure": cmd_structure,
    "compile": cmd_compile,
    "analyze": cmd_analyze,
    "fourier": cmd_fourier,
    "empirical": cmd_empirical,
    "fluctuation": cmd_fluctuation,
    "selftest": cmd_selftest,
}


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    buf = io.StringIO()
    try:
        status = COMMANDS[args.command](args, buf)
    except UsageError as exc:
        print(f"digitflux: error: {exc}", file=sys.stderr)
        return 2
    except (ParseError, IllPosedError, CompileError, AnalysisError, DomainError, ValueError) as exc:
        print(f"digitflux: {exc}", file=sys.stderr)
        return 1
    text = buf.getvalue()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return status


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
