"""Run the verifier and the hunters concurrently and pick the first authorized verdict."""

from __future__ import annotations

import enum
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .engines import EngineConfig, EngineKind, Verdict, VerdictKind, run_engine
from .interp import Config
from .ir import Program

Runner = Callable[[Program, EngineConfig, threading.Event], Verdict]


def default_engines(interp: Config = Config()) -> tuple[EngineConfig, ...]:
    return (EngineConfig.verifier(interp), EngineConfig.dfs(200, interp),
            EngineConfig.dfs(900, interp), EngineConfig.bfs(interp))


@dataclass(frozen=True)
class PortfolioConfig:
    engines: tuple[EngineConfig, ...] = field(default_factory=default_engines)
    poll_interval: float = 0.1
    wall_timeout: Optional[float] = None

    def __post_init__(self):
        if not self.engines:
            raise ValueError("a portfolio needs at least one engine")
        if self.poll_interval <= 0:
            raise ValueError("poll interval must be positive")


class Status(enum.Enum):
    FINISHED = "finished"
    CANCELLED = "cancelled"
    TIMED_OUT = "timed-out"
    CRASHED = "crashed"


@dataclass
class EngineReport:
    name: str
    status: Status
    verdict: Optional[Verdict] = None
    detail: str = ""


@dataclass
class PortfolioResult:
    verdict: Verdict
    winning_engine: Optional[str]
    elapsed: float
    engine_statuses: dict[str, EngineReport]
    cancel_latency: float = 0.0


def authorize(verdict: Verdict, kind: EngineKind) -> bool:
    """May an engine of this kind announce this verdict?"""
    if verdict.kind is VerdictKind.BUG:
        return kind is not EngineKind.VERIFIER
    if verdict.kind is VerdictKind.SAFE:
        if kind is EngineKind.VERIFIER:
            return True
        if kind is EngineKind.BFS:
            return verdict.exhaustive and not verdict.sampled
        return False
    return False


def priority(config: EngineConfig) -> tuple:
    """Hunters by ascending depth, then BFS, then the verifier."""
    if config.kind is EngineKind.DFS:
        return (0, config.depth)
    if config.kind is EngineKind.BFS:
        return (1, 0)
    return (2, 0)


def pick_winner(finished: Sequence[tuple[EngineConfig, Verdict]]) -> Optional[int]:
    """Index of the winning entry among verdicts available at one poll tick.

    Bugs beat safety claims; ties are broken by engine priority, then position.
    """
    best = None
    for i, (config, verdict) in enumerate(finished):
        if not authorize(verdict, config.kind):
            continue
        rank = (0 if verdict.is_bug else 1, priority(config), i)
        if best is None or rank < best[0]:
            best = (rank, i)
    return None if best is None else best[1]


def _names(engines: Sequence[EngineConfig]) -> list[str]:
    names, seen = [], {}
    for ec in engines:
        n = ec.name
        seen[n] = seen.get(n, 0) + 1
        names.append(n if seen[n] == 1 else f"{n}#{seen[n]}")
    return names


def run_portfolio(prog: Program, config: PortfolioConfig = PortfolioConfig(),
                  runner: Runner = run_engine) -> PortfolioResult:
    engines = list(config.engines)
    names = _names(engines)
    cancel = threading.Event()
    slots: list[Optional[tuple[Status, Optional[Verdict], str]]] = [None] * len(engines)
    wake = threading.Event()

    def work(i: int) -> None:
        try:
            verdict = runner(prog, engines[i], cancel)
            slots[i] = (Status.FINISHED, verdict, "")
        except Exception as exc:  # an engine crash counts as Unknown
            slots[i] = (Status.CRASHED, None, f"{type(exc).__name__}: {exc}")
        wake.set()

    start = time.monotonic()
    threads = [threading.Thread(target=work, args=(i,), name=names[i], daemon=True)
               for i in range(len(engines))]
    for t in threads:
        t.start()

    winner: Optional[int] = None
    timed_out = False
    while True:
        wake.wait(config.poll_interval)
        wake.clear()
        snapshot = list(slots)
        done = [(i, s) for i, s in enumerate(snapshot) if s is not None]
        finished = [(engines[i], s[1]) for i, s in done if s[0] is Status.FINISHED]
        idx = pick_winner(finished)
        if idx is not None:
            winner = [i for i, s in done if s[0] is Status.FINISHED][idx]
            break
        if len(done) == len(engines):
            break
        if config.wall_timeout is not None and time.monotonic() - start >= config.wall_timeout:
            timed_out = True
            break

    cancel_at = time.monotonic()
    cancel.set()
    for t in threads:
        t.join()
    cancel_latency = time.monotonic() - cancel_at
    elapsed = time.monotonic() - start

    reports = {}
    for i, name in enumerate(names):
        slot = slots[i]
        if i == winner:
            reports[name] = EngineReport(name, Status.FINISHED, slot[1])
        elif slot is None:
            reports[name] = EngineReport(name, Status.CANCELLED)
        elif slot[0] is Status.CRASHED:
            reports[name] = EngineReport(name, Status.CRASHED, detail=slot[2])
        elif snapshot[i] is None and slot[1].reason == "cancelled":
            status = Status.TIMED_OUT if timed_out else Status.CANCELLED
            reports[name] = EngineReport(name, status, slot[1])
        else:
            reports[name] = EngineReport(name, Status.FINISHED, slot[1])

    if winner is not None:
        verdict = slots[winner][1]
        return PortfolioResult(verdict, names[winner], elapsed, reports, cancel_latency)
    reason = "timeout" if timed_out else "no engine produced an authorized verdict"
    verdict = Verdict(VerdictKind.UNKNOWN, "portfolio", reason=reason,
                      sampled=any(s is not None and s[1] is not None and s[1].sampled
                                  for s in slots))
    return PortfolioResult(verdict, None, elapsed, reports, cancel_latency)


__all__ = [
    "PortfolioConfig", "PortfolioResult", "EngineReport", "Status", "authorize",
    "pick_winner", "priority", "run_portfolio", "default_engines",
]
