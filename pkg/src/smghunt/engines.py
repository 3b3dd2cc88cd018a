"""The verifier and the two kinds of hunters.

The verifier explores with list abstraction, join and entailment coverage at
loop heads and may only claim safety.  Hunters explore without abstraction;
they report bugs, and the BFS hunter may also claim safety after exhausting a
finite state space without any cut or sampling.
"""

from __future__ import annotations

import enum
import heapq
import itertools
import threading
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Optional

from .abstraction import abstract_state
from .cfg import build_cfg, loop_heads, reverse_postorder
from .entail import entails, join
from .interp import (
    Config, Cut, Error, Halted, Infeasible, Next, Property, SymbolicState, TraceStep,
    initial_state, step,
)
from .ir import Program
from .smg import ErrorKind


class VerdictKind(enum.Enum):
    SAFE = "safe"
    BUG = "bug"
    UNKNOWN = "unknown"


class EngineKind(enum.Enum):
    VERIFIER = "verifier"
    DFS = "dfs"
    BFS = "bfs"


@dataclass(frozen=True)
class Verdict:
    kind: VerdictKind
    engine: str
    sampled: bool = False
    error: Optional[ErrorKind] = None
    trace: tuple[TraceStep, ...] = ()
    reason: str = ""
    exhaustive: bool = False
    explored: int = field(default=0, compare=False)

    def __post_init__(self):
        if self.kind is VerdictKind.SAFE and self.sampled:
            raise ValueError("a safe verdict cannot come from a sampled lineage")
        if self.kind is VerdictKind.BUG and (self.error is None or not self.trace):
            raise ValueError("a bug verdict needs an error kind and a trace")

    @property
    def is_safe(self) -> bool:
        return self.kind is VerdictKind.SAFE

    @property
    def is_bug(self) -> bool:
        return self.kind is VerdictKind.BUG


@dataclass(frozen=True)
class EngineConfig:
    kind: EngineKind
    depth: Optional[int] = None
    interp: Config = Config()
    max_states: Optional[int] = None  # exploration budget; None means unbounded

    def __post_init__(self):
        if self.kind is EngineKind.DFS and (self.depth is None or self.depth <= 0):
            raise ValueError("a DFS hunter needs a positive depth")

    @property
    def name(self) -> str:
        if self.kind is EngineKind.DFS:
            return f"dfs({self.depth})"
        return self.kind.value

    @property
    def property(self) -> Property:
        return self.interp.property

    @classmethod
    def verifier(cls, interp: Config = Config(), **kw) -> EngineConfig:
        return cls(EngineKind.VERIFIER, interp=interp, **kw)

    @classmethod
    def dfs(cls, depth: int, interp: Config = Config(), **kw) -> EngineConfig:
        return cls(EngineKind.DFS, depth, interp=interp, **kw)

    @classmethod
    def bfs(cls, interp: Config = Config(), **kw) -> EngineConfig:
        return cls(EngineKind.BFS, interp=interp, **kw)


def _unknown(name: str, reason: str, explored: int = 0, sampled: bool = False) -> Verdict:
    return Verdict(VerdictKind.UNKNOWN, name, sampled=sampled, reason=reason,
                   explored=explored)


def _bug(name: str, err: Error, explored: int) -> Verdict:
    return Verdict(VerdictKind.BUG, name, sampled=err.sampled, error=err.kind,
                   trace=err.trace, reason=err.message, explored=explored)


def _cancelled(cancel: Optional[threading.Event]) -> bool:
    return cancel is not None and cancel.is_set()


# -- verifier ---------------------------------------------------------------------------------

class _Order:
    """Reverse-postorder rank of every (function, block)."""

    def __init__(self, prog: Program):
        self.rank: dict[tuple[str, str], int] = {}
        self.heads: set[tuple[str, str]] = set()
        for fname in sorted(prog.functions):
            cfg = build_cfg(prog.functions[fname])
            for i, label in enumerate(reverse_postorder(cfg)):
                self.rank[(fname, label)] = i
            for label in loop_heads(cfg):
                self.heads.add((fname, label))

    def key(self, state: SymbolicState) -> tuple:
        f, b, i = state.loc
        return (len(state.frames), self.rank.get((f, b), 0), i)

    def is_head(self, state: SymbolicState) -> bool:
        f, b, i = state.loc
        return i == 0 and (f, b) in self.heads


def run_verifier(prog: Program, config: EngineConfig = EngineConfig.verifier(),
                 cancel: Optional[threading.Event] = None) -> Verdict:
    """Abstract fixpoint; Safe only if no error, cut or sampling was ever met."""
    name = config.name
    order = _Order(prog)
    counter = itertools.count()
    queue: list = []
    seen: set = set()
    buckets: dict[tuple, list] = {}
    explored = 0

    def push(state: SymbolicState) -> None:
        heapq.heappush(queue, (order.key(state), next(counter), state))

    def add(state: SymbolicState) -> None:
        if not order.is_head(state):
            key = state.key()
            if key not in seen:
                seen.add(key)
                push(state)
            return
        smg = abstract_state(state.smg)
        bucket = buckets.setdefault((state.loc, state.frames), [])
        if any(entails(smg, old) for old in bucket):
            return
        for i, old in enumerate(bucket):
            joined = join(smg, old)
            if joined is not None:
                bucket[i] = joined
                push(replace(state, smg=joined))
                return
        bucket.append(smg)
        push(replace(state, smg=smg))

    add(initial_state(prog, config.interp))
    while queue:
        if _cancelled(cancel):
            return _unknown(name, "cancelled", explored)
        if config.max_states is not None and explored >= config.max_states:
            return _unknown(name, "budget", explored)
        _, _, state = heapq.heappop(queue)
        explored += 1
        res = step(prog, state, config.interp)
        if isinstance(res, Error):
            return _unknown(name, f"possible {res.kind.value} (not confirmed)", explored,
                            res.sampled)
        if isinstance(res, Cut):
            return _unknown(name, res.reason, explored)
        if isinstance(res, (Halted, Infeasible)):
            continue
        if res.cut is not None:
            return _unknown(name, res.cut, explored)
        for succ in res.states:
            if succ.sampled:
                return _unknown(name, "sampled", explored, True)
            add(succ)
    return Verdict(VerdictKind.SAFE, name, explored=explored)


# -- hunters ---------------------------------------------------------------------------------

def run_dfs_hunter(prog: Program, config: EngineConfig,
                   cancel: Optional[threading.Event] = None) -> Verdict:
    """Depth-bounded concrete search; never claims safety."""
    depth = config.depth
    name = config.name
    stack = [initial_state(prog, config.interp)]
    best: dict[tuple, int] = {}
    cut = False
    explored = 0
    while stack:
        if _cancelled(cancel):
            return _unknown(name, "cancelled", explored)
        if config.max_states is not None and explored >= config.max_states:
            return _unknown(name, "budget", explored)
        state = stack.pop()
        if state.steps >= depth:
            cut = True
            continue
        explored += 1
        res = step(prog, state, config.interp)
        if isinstance(res, Error):
            return _bug(name, res, explored)
        if isinstance(res, Cut):
            cut = True
            continue
        if not isinstance(res, Next):
            continue
        if res.cut is not None:
            cut = True
        for succ in reversed(res.states):
            key = succ.key()
            prev = best.get(key)
            if prev is not None and prev <= succ.steps:
                continue
            best[key] = succ.steps
            stack.append(succ)
    return _unknown(name, "depth" if cut else "hunters cannot claim safety", explored)


def run_bfs_hunter(prog: Program, config: EngineConfig = EngineConfig.bfs(),
                   cancel: Optional[threading.Event] = None) -> Verdict:
    """Breadth-first concrete search; Safe only on a clean exhaustion."""
    name = config.name
    queue = deque([initial_state(prog, config.interp)])
    visited = {queue[0].key()}
    cut: Optional[str] = None
    sampled = False
    explored = 0
    while queue:
        if _cancelled(cancel):
            return _unknown(name, "cancelled", explored)
        if config.max_states is not None and explored >= config.max_states:
            return _unknown(name, "budget", explored)
        state = queue.popleft()
        explored += 1
        res = step(prog, state, config.interp)
        if isinstance(res, Error):
            return _bug(name, res, explored)
        if isinstance(res, Cut):
            cut = cut or res.reason
            continue
        if not isinstance(res, Next):
            continue
        if res.cut is not None:
            cut = cut or res.cut
        for succ in res.states:
            sampled = sampled or succ.sampled
            key = succ.key()
            if key not in visited:
                visited.add(key)
                queue.append(succ)
    if cut is not None:
        return _unknown(name, f"exhausted with cuts ({cut})", explored)
    if sampled:
        return _unknown(name, "exhausted a sampled state space", explored, True)
    return Verdict(VerdictKind.SAFE, name, exhaustive=True, explored=explored)


def run_engine(prog: Program, config: EngineConfig,
               cancel: Optional[threading.Event] = None) -> Verdict:
    if config.kind is EngineKind.VERIFIER:
        return run_verifier(prog, config, cancel)
    if config.kind is EngineKind.DFS:
        return run_dfs_hunter(prog, config, cancel)
    return run_bfs_hunter(prog, config, cancel)


def replay_bug(prog: Program, verdict: Verdict, config: Config = Config()):
    """Replay a bug trace; returns the final step result."""
    from .interp import replay
    return replay(prog, verdict.trace, config)


__all__ = [
    "VerdictKind", "EngineKind", "Verdict", "EngineConfig", "run_verifier",
    "run_dfs_hunter", "run_bfs_hunter", "run_engine", "replay_bug",
]
