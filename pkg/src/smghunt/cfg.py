"""Per-function control-flow graphs over block labels."""

from __future__ import annotations

from dataclasses import dataclass

from .ir import Branch, Function, Goto

ENTRY = "<entry>"


@dataclass(frozen=True)
class CFG:
    entry: str
    succ: dict[str, tuple[str, ...]]
    pred: dict[str, tuple[str, ...]]

    def successors(self, label: str) -> tuple[str, ...]:
        return self.succ[label]

    def predecessors(self, label: str) -> tuple[str, ...]:
        return self.pred[label]


def _targets(block) -> tuple[str, ...]:
    term = block.terminator
    if isinstance(term, Goto):
        return (term.target,)
    if isinstance(term, Branch):
        # a branch with identical targets still has a single successor
        return tuple(dict.fromkeys((term.then, term.orelse)))
    return ()


def build_cfg(fn: Function) -> CFG:
    """Successor/predecessor maps; the virtual ENTRY node precedes the entry block."""
    succ: dict[str, tuple[str, ...]] = {ENTRY: (fn.entry,)}
    for block in fn.blocks:
        succ[block.label] = _targets(block)
    pred: dict[str, list[str]] = {label: [] for label in succ}
    for src, targets in succ.items():
        for dst in targets:
            pred[dst].append(src)
    return CFG(fn.entry, succ, {k: tuple(v) for k, v in pred.items()})


def reverse_postorder(cfg: CFG) -> list[str]:
    seen: set[str] = set()
    order: list[str] = []
    stack = [(cfg.entry, iter(cfg.succ[cfg.entry]))]
    seen.add(cfg.entry)
    while stack:
        node, it = stack[-1]
        for nxt in it:
            if nxt not in seen:
                seen.add(nxt)
                stack.append((nxt, iter(cfg.succ[nxt])))
                break
        else:
            stack.pop()
            order.append(node)
    order.reverse()
    return order


def loop_heads(cfg: CFG) -> frozenset[str]:
    """Targets of back edges found by depth-first search from the entry."""
    heads: set[str] = set()
    on_stack: set[str] = {cfg.entry}
    seen: set[str] = {cfg.entry}
    stack = [(cfg.entry, iter(cfg.succ[cfg.entry]))]
    while stack:
        node, it = stack[-1]
        for nxt in it:
            if nxt in on_stack:
                heads.add(nxt)
            elif nxt not in seen:
                seen.add(nxt)
                on_stack.add(nxt)
                stack.append((nxt, iter(cfg.succ[nxt])))
                break
        else:
            stack.pop()
            on_stack.discard(node)
    return frozenset(heads)
