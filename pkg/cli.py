"""
Command-Line Front End

    destab compute    -m sphere(-1) --s-max 2 --deg-max 30 [--show-matrices]
    destab oracle     -m module.mod --s-max 1 --deg-max 24
    destab verify     --suite invariants -p 3
    destab invariants -p 3 --rank 2 --emit dickson

Exit codes: 0 when every check passes, 1 on a failed check, 2 on a usage or
parse error, 3 when a module's degree window is exhausted.
"""

import argparse
import logging
import sys
from typing import List, Optional, Sequence, TextIO

from pydantic import ValidationError

from chain_complex import build_complex, connectivity_check, homology_rows, matrix_dump
from fpla import (
    CapExceededError, DestabError, ModuleParseError, PrimeMismatchError, RankCapError, RelationViolationError,
    WindowExhaustedError, format_matrix_dump,
)
from invariants import dickson, format_bv, format_gamma, gamma_q, gamma_r, mui, psi_coproduct
from module_parser import load_module
from oracle import action_check, oracle_table, set_cache_dir
from run_logger import FailureRecord, HomologyRow, RunLogger
from run_model import CommandType, EmitType, RunConfig, SuiteType
from verification import run_suites

logger = logging.getLogger(__name__)

EXIT_PASS = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
EXIT_WINDOW = 3

_USAGE_ERRORS = (ModuleParseError, PrimeMismatchError, RelationViolationError, RankCapError, CapExceededError)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="destab", description="Destabilization chain complex at odd primes")
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    commands = parser.add_subparsers(dest="command", required=True)

    def common(sub: argparse.ArgumentParser) -> None:
        sub.add_argument("-p", "--prime", type=int, default=3, help="Odd prime (default 3)")
        sub.add_argument("-o", "--out", help="Output file; stdout when omitted")
        sub.add_argument("--failures", dest="failures_path", help="JSON-lines failure file")
        sub.add_argument("--cache-dir", help="Directory for cached free resolutions (default $DESTAB_CACHE_DIR)")

    for name in (CommandType.COMPUTE, CommandType.ORACLE):
        sub = commands.add_parser(name.value, help=f"{name.value} homology dimensions as a TSV table")
        common(sub)
        sub.add_argument("-m", "--module", required=True, help="Module file or built-in such as sphere(-1)")
        sub.add_argument("--s-max", type=int, default=2, help="Highest homological degree")
        sub.add_argument("--deg-min", type=int, help="Lowest internal degree")
        sub.add_argument("--deg-max", type=int, default=20, help="Highest internal degree")
        if name == CommandType.COMPUTE:
            sub.add_argument("--show-matrices", action="store_true", help="Append the differential matrices")
            sub.add_argument("--action-samples", type=int, default=0,
                             help="Homology representatives to test under beta and P^1")

    sub = commands.add_parser(CommandType.VERIFY.value, help="Run verification suites")
    common(sub)
    sub.add_argument("--suite", default=SuiteType.ALL.value, choices=[s.value for s in SuiteType])
    sub.add_argument("--deg-max", type=int, help="Upper bound on every suite's degree window")

    sub = commands.add_parser(CommandType.INVARIANTS.value, help="Print invariant polynomials")
    common(sub)
    sub.add_argument("--rank", type=int, default=1, help="Rank s")
    sub.add_argument("--emit", default=EmitType.DICKSON.value, choices=[e.value for e in EmitType])
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    """RunConfig from parsed arguments; flags a command does not take keep their defaults"""
    values = {key: value for key, value in vars(args).items() if value is not None and key != "verbose"}
    return RunConfig(**values)


def _lines_out(lines: List[str], config: RunConfig, stream: TextIO) -> None:
    text = "\n".join(lines) + "\n"
    if config.out:
        with open(config.out, "w") as f:
            f.write(text)
        logger.info(f"output written to {config.out}")
    else:
        stream.write(text)


def _compute(config: RunConfig, run_log: RunLogger, stream: TextIO) -> None:
    M = load_module(config.module, config.prime, config.deg_max)
    c = build_complex(M, config.s_max, config.deg_max, lo=config.deg_min)
    run_log.add_rows(homology_rows(c))
    if any(row.upper_bound for row in run_log.rows):
        logger.warning(f"H_{config.s_max} rows are upper bounds: D_{config.s_max + 1} was not built")
    run_log.record(connectivity_check(c))
    if config.action_samples:
        run_log.record(action_check(M, config.s_max, config.deg_max, config.action_samples))
    matrices = format_matrix_dump(matrix_dump(c)) if config.show_matrices else None
    run_log.write_table(stream, matrix_lines=matrices)


def _oracle(config: RunConfig, run_log: RunLogger, stream: TextIO) -> None:
    M = load_module(config.module, config.prime, config.deg_max)
    table = oracle_table(M, config.s_max, config.deg_max, lo=config.deg_min)
    run_log.add_rows(HomologyRow(s, d, dim) for s, dims in table.items() for d, dim in dims.items())
    run_log.write_table(stream)


def _verify(config: RunConfig, run_log: RunLogger, stream: TextIO) -> None:
    hi = config.deg_max if "deg_max" in config.model_fields_set else None
    for result in run_suites(config.suite, config.prime, hi):
        run_log.record(result)
    run_log.write_report(stream)


def _tensor_lines(tensor) -> List[str]:
    lines = []
    for (a, b), c in sorted(tensor.items()):
        left, right = format_gamma({a: 1})[0][4:], format_gamma({b: 1})[0][4:]
        lines.append(f"{c} * {left} | {right}")
    return lines


def _invariants(config: RunConfig, stream: TextIO) -> None:
    p, s = config.prime, config.rank
    lines = []
    if config.emit == EmitType.DICKSON:
        for i in range(s + 1):
            lines += [f"# Q_{{{s},{i}}}"] + format_bv(dickson(p, s, i))
    elif config.emit == EmitType.MUI:
        for which in ("L", "e"):
            lines += [f"# {which}_{s}"] + format_bv(mui(p, s, which))
        for which, i in [(w, i) for w in ("M", "R") for i in range(s)]:
            lines += [f"# {which}_{{{s},{i}}}"] + format_bv(mui(p, s, which, i))
    else:
        if s < 2:
            raise RankCapError(f"rank cap: the coproduct needs rank at least 2, got {s}", witness={"s": s})
        for kind, i in [(k, i) for k in "QR" for i in range(s)]:
            g = gamma_q(s, i) if kind == "Q" else gamma_r(s, i)
            lines += [f"# psi_{{{s - 1},1}} {kind}_{{{s},{i}}}"] + _tensor_lines(psi_coproduct(p, s - 1, 1, g))
    _lines_out(lines, config, stream)


def run(config: RunConfig, stream: Optional[TextIO] = None) -> int:
    """
    Execute one CLI run

    Args:
        config: Validated run configuration
        stream: Where tables go when config.out is unset; stdout by default

    Returns:
        Exit code
    """
    stream = stream or sys.stdout
    failures_path = config.failures_path or (None if config.out else "destab.failures.jsonl")
    run_log = RunLogger(config.out, failures_path)
    logger.info(f"destab {config.command.value} at p={config.prime}")
    if config.cache_dir:
        set_cache_dir(config.cache_dir)
    try:
        if config.command == CommandType.COMPUTE:
            _compute(config, run_log, stream)
        elif config.command == CommandType.ORACLE:
            _oracle(config, run_log, stream)
        elif config.command == CommandType.VERIFY:
            _verify(config, run_log, stream)
        else:
            _invariants(config, stream)
    except _USAGE_ERRORS as exc:
        logger.error(f"{exc.reason}: {exc}")
        run_log.write_failures([FailureRecord.from_error(exc, check=config.command.value)])
        return EXIT_USAGE
    except WindowExhaustedError as exc:
        logger.error(f"{exc}; first unreliable degree {exc.first_unreliable}")
        run_log.write_failures([FailureRecord.from_error(exc, check=config.command.value)])
        return EXIT_WINDOW
    except DestabError as exc:
        logger.error(f"{config.command.value} failed: {exc}")
        run_log.write_failures([FailureRecord.from_error(exc, check=config.command.value)])
        return EXIT_FAILED

    run_log.write_failures()
    if not run_log.passed:
        logger.error(f"{len(run_log.failures)} check failures")
        return EXIT_FAILED
    return EXIT_PASS


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        config = config_from_args(args)
    except ValidationError as exc:
        logger.error(f"invalid arguments: {exc}")
        return EXIT_USAGE
    return run(config)


if __name__ == "__main__":
    raise SystemExit(main())
