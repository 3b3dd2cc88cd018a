"""Command-line front end: ``smg-hunt program.pir``."""

from __future__ import annotations

import argparse
import sys
import time
from collections import deque
from typing import Optional, Sequence

from .canon import dump
from .engines import EngineConfig, Verdict, VerdictKind
from .interp import Config, Next, Property, initial_state, step
from .ir import Program
from .parser import ParseError, parse_file
from .portfolio import PortfolioConfig, default_engines, run_portfolio
from .smg import ErrorKind

VERDICT_STRINGS = {
    ErrorKind.INVALID_DEREF: "FALSE(valid-deref)",
    ErrorKind.DOUBLE_FREE: "FALSE(valid-free)",
    ErrorKind.INVALID_FREE: "FALSE(valid-free)",
    ErrorKind.LEAK: "FALSE(valid-memtrack)",
    ErrorKind.REACH_ERROR: "FALSE(unreach-call)",
}


def verdict_string(verdict: Verdict) -> str:
    if verdict.kind is VerdictKind.SAFE:
        return "TRUE"
    if verdict.kind is VerdictKind.BUG:
        return VERDICT_STRINGS[verdict.error]
    return "UNKNOWN"


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit with 1, not argparse's 2
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _engine_arg(text: str) -> str:
    if text in ("portfolio", "verifier", "bfs"):
        return text
    if text.startswith("dfs:"):
        try:
            depth = int(text[4:])
        except ValueError:
            depth = 0
        if depth > 0:
            return text
    raise argparse.ArgumentTypeError(
        f"invalid engine {text!r} (use portfolio, verifier, dfs:<depth> or bfs)")


def _positive(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if value <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="smg-hunt",
                description="Shape analysis of .pir programs with a verifier and hunters.")
    p.add_argument("file", help="input program (.pir)")
    p.add_argument("--property", choices=["memsafety", "reach"], default="memsafety")
    p.add_argument("--engine", type=_engine_arg, default="portfolio",
                   help="portfolio (default), verifier, dfs:<depth> or bfs")
    p.add_argument("--timeout", type=float, default=None, help="wall-clock limit in seconds")
    p.add_argument("--samples", type=_positive, default=3)
    p.add_argument("--bound-const", type=_positive, default=32)
    p.add_argument("--split-max", type=_positive, default=64)
    p.add_argument("--recursion-depth", type=_positive, default=2)
    p.add_argument("--poll-ms", type=_positive, default=100)
    p.add_argument("--dump-smg", metavar="FUNC:BLOCK[:INDEX]",
                   help="print the memory graphs reaching a location (debug, stderr)")
    p.add_argument("--trace", action="store_true", help="print the error trace")
    return p


def _engines(choice: str, interp: Config) -> tuple[EngineConfig, ...]:
    if choice == "portfolio":
        return default_engines(interp)
    if choice == "verifier":
        return (EngineConfig.verifier(interp),)
    if choice == "bfs":
        return (EngineConfig.bfs(interp),)
    return (EngineConfig.dfs(int(choice[4:]), interp),)


def _dump_location(prog: Program, where: str, interp: Config, limit: int = 3,
                   budget: int = 2000) -> list[str]:
    parts = where.split(":")
    if len(parts) not in (2, 3):
        raise ValueError(f"bad location {where!r}, expected FUNC:BLOCK[:INDEX]")
    loc = (parts[0], parts[1], int(parts[2]) if len(parts) == 3 else 0)
    queue = deque([initial_state(prog, interp)])
    seen = {queue[0].key()}
    out: list[str] = []
    while queue and len(out) < limit and budget > 0:
        state = queue.popleft()
        budget -= 1
        if state.loc == loc:
            out.append(dump(state.smg))
        res = step(prog, state, interp)
        if isinstance(res, Next):
            for succ in res.states:
                if succ.key() not in seen:
                    seen.add(succ.key())
                    queue.append(succ)
    return out


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        prog = parse_file(args.file)
    except OSError as exc:
        print(f"smg-hunt: cannot read {args.file}: {exc.strerror or exc}", file=sys.stderr)
        return 1
    except ParseError as exc:
        print(f"smg-hunt: {args.file}: {exc}", file=sys.stderr)
        return 1
    interp = Config(bound=args.bound_const, samples=args.samples, split_max=args.split_max,
                    recursion_depth=args.recursion_depth, property=Property(args.property))
    try:
        if args.dump_smg:
            for i, text in enumerate(_dump_location(prog, args.dump_smg, interp)):
                print(f"--- state {i} at {args.dump_smg}", file=sys.stderr)
                print(text, file=sys.stderr)
        config = PortfolioConfig(_engines(args.engine, interp), args.poll_ms / 1000.0,
                                 args.timeout)
        started = time.monotonic()
        result = run_portfolio(prog, config)
    except ValueError as exc:
        print(f"smg-hunt: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # internal failure
        print("UNKNOWN")
        print(f"smg-hunt: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    verdict = result.verdict
    print(verdict_string(verdict))
    if args.trace and verdict.trace:
        for ts in verdict.trace:
            f, b, i = ts.loc
            print(f"  {f}:{b}:{i}: {ts.text}")
    winner = result.winning_engine or "none"
    print(f"engine: {winner}; reason: {verdict.reason or '-'}; "
          f"elapsed: {time.monotonic() - started:.3f}s", file=sys.stderr)
    for name, report in result.engine_statuses.items():
        detail = report.verdict.reason if report.verdict else report.detail
        print(f"  {name}: {report.status.value}"
              + (f" ({report.verdict.kind.value}: {detail})" if report.verdict else
                 f" ({detail})" if detail else ""), file=sys.stderr)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
