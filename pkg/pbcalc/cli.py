"""
Command driver: pbcalc {check,anf,run,grad,trace,prims} ...

Results go to stdout, either in the surface notation (--format pretty) or as one JSON record per line
(--format lines). Diagnostics go to stderr. Exit codes: 0 success, 1 parse or type error, 2 fuel
exhaustion, 3 any other failure (including a failed `grad --check`).
"""

import argparse
import sys
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

from pydantic import BaseModel

from pbcalc import __version__
from pbcalc.core.config import settings
from pbcalc.core.logging import get_logger, setup_logging
from pbcalc.models.trace import CheckReport, GradReport, LetBinding, RunReport
from pbcalc.services.anf import a_normalize
from pbcalc.services.engine import PullbackEngine, function_of
from pbcalc.services.oracle import check_gradient
from pbcalc.services.primitives import default_registry
from pbcalc.services.typechecker import TypeChecker
from pbcalc.syntax.parser import SourceProgram, parse, parse_point
from pbcalc.syntax.printer import format_number, format_type
from pbcalc.syntax.terms import App, Pullback, Term
from pbcalc.utils.errors import FuelExhausted, ParseError, PbCalcError, TypeCheckError

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_FUEL = 2
EXIT_FAILED = 3


def _emit_lines(records: Iterable[BaseModel]) -> None:
    for record in records:
        print(record.model_dump_json())


def _load(path: str) -> SourceProgram:
    return parse(Path(path).read_text(encoding="utf-8"))


def _engine(program: SourceProgram, args: argparse.Namespace, check_types: bool = False) -> PullbackEngine:
    return PullbackEngine(env=program.context, fuel=args.fuel, check_types=check_types)


# --- commands -----------------------------------------------------------------------


def cmd_check(args: argparse.Namespace) -> int:
    try:
        program = _load(args.file)
        ty = TypeChecker().infer(program.context, program.term)
    except ParseError as exc:
        report = CheckReport(ok=False, kind="parse", message=exc.message, line=exc.line, column=exc.column)
    except TypeCheckError as exc:
        report = CheckReport(ok=False, kind=exc.kind.value, message=exc.message)
    else:
        report = CheckReport(ok=True, type=format_type(ty))
    if args.format == "lines":
        _emit_lines([report])
    elif report.ok:
        print(report.type)
    else:
        print(f"error: {report.message}", file=sys.stderr)
    return EXIT_OK if report.ok else EXIT_INVALID


def _anf_target(t: Term) -> Term:
    """The body of an (applied) pullback, else the term itself"""
    if isinstance(t, App) and isinstance(t.fn, Pullback):
        t = t.fn
    return t.body if isinstance(t, Pullback) else t


def cmd_anf(args: argparse.Namespace) -> int:
    program = _load(args.file)
    series = a_normalize(_anf_target(program.term)).renumbered()
    if args.format == "lines":
        _emit_lines(LetBinding(name=name, bound=str(bound)) for name, bound in series.bindings)
    else:
        print(series)
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    program = _load(args.file)
    engine = _engine(program, args, check_types=args.check_types)
    try:
        ty: Optional[str] = format_type(engine.checker.infer(program.context, program.term))
    except TypeCheckError:
        ty = None
    value, trace = engine.normalize(program.term)
    report = RunReport(value=str(value), type=ty, steps=len(trace), notes=trace.notes)
    if args.format == "lines":
        _emit_lines([report])
        return EXIT_OK
    print(report.value)
    for note in report.notes:
        print(f"note: {note.note}: {note.term}", file=sys.stderr)
    return EXIT_OK


def cmd_trace(args: argparse.Namespace) -> int:
    program = _load(args.file)
    engine = _engine(program, args)
    value, trace = engine.normalize(program.term)
    entries = [e for e in trace if args.depth is None or e.depth <= args.depth]
    if args.format == "lines":
        _emit_lines(e.record() for e in entries)
        _emit_lines(trace.notes)
        return EXIT_OK
    for entry in entries:
        print(entry)
    for note in trace.notes:
        print(f"note [{note.step}]: {note.note}: {note.term}")
    print(f"value: {value}")
    return EXIT_OK


def _format_row(values: Sequence[float]) -> str:
    return " ".join(format_number(float(v)) for v in values)


def cmd_grad(args: argparse.Namespace) -> int:
    program = _load(args.file)
    f, embedded = function_of(program.term)
    point = parse_point(args.at) if args.at else embedded
    if point is None:
        print("error: no point given; pass --at v1,...,vn", file=sys.stderr)
        return EXIT_INVALID
    engine = _engine(program, args)
    rows: List[int] = [args.row] if args.row else list(range(1, engine.output_size(f, len(point)) + 1))

    if not args.check:
        reports = [GradReport(point=point, row=p, gradient=engine.grad(f, point, p).tolist()) for p in rows]
    else:
        reports = [check_gradient(f, point, p, engine) for p in rows]
    if args.format == "lines":
        _emit_lines(reports)
    else:
        for report in reports:
            line = _format_row(report.gradient)
            if args.check:
                verdict = "ok" if report.ok else "MISMATCH"
                oracle = "-" if report.oracle is None else _format_row(report.oracle)
                line = f"{line}  [{verdict}; oracle {oracle}; fd {_format_row(report.finite_difference or [])}]"
            print(line)
    if args.check and not all(r.ok for r in reports):
        logger.error("gradient check failed", file=args.file)
        return EXIT_FAILED
    return EXIT_OK


def cmd_prims(args: argparse.Namespace) -> int:
    info = default_registry().info()
    if args.format == "lines":
        _emit_lines(info)
    else:
        for prim in info:
            print(f"{prim.name}: R^{prim.n_in} -> R^{prim.n_out}")
    return EXIT_OK


# --- argument parsing -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--fuel", type=int, default=None, help=f"reduction step budget (default {settings.FUEL})")
    common.add_argument("--format", choices=("pretty", "lines"), default="pretty", help="output format")
    common.add_argument("--log-level", default=None, help="structlog level, e.g. DEBUG")

    parser = argparse.ArgumentParser(prog=settings.APP_NAME, description="Interpreter for the pullback calculus")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    check = commands.add_parser("check", parents=[common], help="type check a program")
    check.add_argument("file")
    check.set_defaults(handler=cmd_check)

    anf = commands.add_parser("anf", parents=[common], help="print the A-normal form of a pullback body")
    anf.add_argument("file")
    anf.set_defaults(handler=cmd_anf)

    run = commands.add_parser("run", parents=[common], help="normalize a program")
    run.add_argument("file")
    run.add_argument("--check-types", action="store_true", help="re-infer the type after every top-level step")
    run.set_defaults(handler=cmd_run)

    grad = commands.add_parser("grad", parents=[common], help="Jacobian rows of a first-order function")
    grad.add_argument("file")
    grad.add_argument("--at", default=None, help="point as v1,...,vn")
    grad.add_argument("--row", type=int, default=None, help="1-based row; all rows when omitted")
    grad.add_argument("--check", action="store_true", help="cross-check against the oracle and finite differences")
    grad.set_defaults(handler=cmd_grad)

    trace = commands.add_parser("trace", parents=[common], help="print every reduction step")
    trace.add_argument("file")
    trace.add_argument("--depth", type=int, default=None, help="deepest premise level shown")
    trace.set_defaults(handler=cmd_trace)

    prims = commands.add_parser("prims", parents=[common], help="list the registered primitives")
    prims.set_defaults(handler=cmd_prims)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.log_level or settings.DEBUG:
        setup_logging(level=args.log_level or "DEBUG")
    try:
        return args.handler(args)
    except (ParseError, TypeCheckError) as exc:
        logger.error("invalid program", command=args.command, **exc.to_dict())
        print(f"error: {exc.message}", file=sys.stderr)
        return EXIT_INVALID
    except FuelExhausted as exc:
        logger.error("fuel exhausted", command=args.command, steps=len(exc.tail))
        print(f"error: {exc.message}", file=sys.stderr)
        for record in exc.tail:
            print(f"  {record.model_dump_json()}", file=sys.stderr)
        return EXIT_FUEL
    except PbCalcError as exc:
        logger.error("command failed", command=args.command, **exc.to_dict())
        print(f"error: {exc.message}", file=sys.stderr)
        return EXIT_FAILED
    except OSError as exc:
        logger.error("cannot read program", command=args.command, error=str(exc))
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
