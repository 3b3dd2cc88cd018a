"""Abstract transformer: one IR instruction over a symbolic state.

``step`` is pure.  Each instruction is executed on a mutable clone of the
state's SMG.  When execution needs a case split (a list segment must be
materialized, a possibly-empty segment is compared, or a size or offset is a
small interval), the executor raises an internal request; the driver performs
the split on the original graph and re-executes the instruction once per
case.  Successor order is deterministic, so a trace of successor indices
replays a path exactly.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Optional, Union

from . import interval as iv
from .abstraction import materialize, split_empty
from .canon import canonical_key
from .interval import INF, NEG_INF, TOP, Interval
from .ir import (
    AddrOf, Alloc, And, Assign, Assume, BinOp, Branch, Call, Clobber, Cmp, Const,
    ErrorMark, Free, Goto, Halt, Load, Negate, Nondet, Not, Null, Program,
    PtrAdd, Return, Store, Var,
)
from .smg import (
    NULL, SMG, ErrorKind, InvalidRead, MemError, Spec, Storage,
    StorageKind, ValKind, Validity, ptr_neq,
)


class Property(enum.Enum):
    MEMSAFETY = "memsafety"
    REACH = "reach"


@dataclass(frozen=True)
class Config:
    bound: int = iv.BOUND_CONST
    samples: int = 3
    split_max: int = 64
    recursion_depth: int = 2
    property: Property = Property.MEMSAFETY


Loc = tuple[str, str, int]  # (function, block, instruction index)


@dataclass(frozen=True)
class Frame:
    func: str
    ret_block: Optional[str] = None
    ret_index: int = 0
    ret_dst: Optional[str] = None


@dataclass(frozen=True)
class TraceStep:
    loc: Loc
    choice: int
    text: str


class _TraceLink:
    __slots__ = ("parent", "step", "length")

    def __init__(self, parent: Optional[_TraceLink], step: TraceStep):
        self.parent = parent
        self.step = step
        self.length = 1 if parent is None else parent.length + 1


def _unwind(link: Optional[_TraceLink]) -> tuple[TraceStep, ...]:
    out = []
    while link is not None:
        out.append(link.step)
        link = link.parent
    out.reverse()
    return tuple(out)


@dataclass(frozen=True)
class SymbolicState:
    smg: SMG
    loc: Loc
    frames: tuple[Frame, ...]
    steps: int = 0
    sampled: bool = False
    pending_error: Optional[MemError] = field(default=None, compare=False)
    _trace: Optional[_TraceLink] = field(default=None, compare=False, repr=False)

    @property
    def trace(self) -> tuple[TraceStep, ...]:
        return _unwind(self._trace)

    def key(self) -> tuple:
        return (self.loc, self.frames, self.sampled, canonical_key(self.smg))


# -- step results ----------------------------------------------------------------------

@dataclass(frozen=True)
class Next:
    states: tuple[SymbolicState, ...]
    cut: Optional[str] = None  # set when some sibling case was abandoned


@dataclass(frozen=True)
class Error:
    kind: ErrorKind
    message: str
    trace: tuple[TraceStep, ...]
    sampled: bool
    maybe: bool = False


@dataclass(frozen=True)
class Halted:
    state: SymbolicState


@dataclass(frozen=True)
class Cut:
    reason: str


@dataclass(frozen=True)
class Infeasible:
    pass


StepResult = Union[Next, Error, Halted, Cut, Infeasible]


# -- internal split requests -------------------------------------------------------------

class _Materialize(Exception):
    def __init__(self, seg: int, end: Spec):
        self.seg, self.end = seg, end


class _SplitEmpty(Exception):
    def __init__(self, seg: int):
        self.seg = seg


class _Guard(Exception):
    """A value (data) or pointer offset must be concretized before use."""

    def __init__(self, vid: int, interval: Interval, is_offset: bool):
        self.vid, self.interval, self.is_offset = vid, interval, is_offset


class _Abandon(Exception):
    def __init__(self, reason: str):
        self.reason = reason


class _Dead(Exception):
    """This case is infeasible; siblings continue."""


class _Stop(Exception):
    """The path ends here: an error, a halt or an infeasible branch."""

    def __init__(self, result):
        self.result = result


# -- program facts ------------------------------------------------------------------------

@lru_cache(maxsize=64)
def _var_tables(prog: Program) -> dict[str, dict[str, int]]:
    tables = {}
    for name, fn in prog.functions.items():
        table = {p: 8 for p in fn.params}
        for loc in fn.locals:
            table[loc.name] = loc.size
        tables[name] = table
    return tables


def _global_sizes(prog: Program) -> dict[str, int]:
    return {g.name: g.size for g in prog.globals}


# -- execution context ----------------------------------------------------------------------

class _Ctx:
    """Mutable view used while executing one instruction on one SMG case."""

    def __init__(self, prog: Program, state: SymbolicState, smg: SMG, config: Config):
        self.prog = prog
        self.state = state
        self.smg = smg
        self.config = config
        self.frames = state.frames
        self.sampled = state.sampled

    @property
    def frame_index(self) -> int:
        return len(self.frames) - 1

    def root_key(self, name: str, frame_index: Optional[int] = None) -> tuple:
        if frame_index is None:
            frame_index = self.frame_index
        func = self.frames[frame_index].func
        if name in _var_tables(self.prog)[func]:
            return ("s", frame_index, name)
        if name in _global_sizes(self.prog):
            return ("g", name)
        raise KeyError(f"unknown variable {name}")

    def var_obj(self, name: str, frame_index: Optional[int] = None) -> int:
        key = self.root_key(name, frame_index)
        oid = self.smg.roots.get(key)
        if oid is None:
            oid = _make_var(self.smg, self.prog, key, self.frames)
        return oid

    def read_var(self, name: str) -> int:
        oid = self.var_obj(name)
        return self.smg.read(oid, Interval(0, 0), 8)

    def write_var(self, name: str, vid: int, frame_index: Optional[int] = None) -> None:
        oid = self.var_obj(name, frame_index)
        self.smg.write(oid, Interval(0, 0), 8, vid)

    def operand(self, op) -> int:
        if isinstance(op, Var):
            return self.read_var(op.name)
        if isinstance(op, Const):
            return self.smg.const(op.value)
        if isinstance(op, Null):
            return NULL
        if isinstance(op, AddrOf):
            return self.smg.addr(self.var_obj(op.name), 0)
        raise TypeError(f"not an operand: {op!r}")

    def interval(self, vid: int) -> Optional[Interval]:
        """Numeric range, or None for non-null pointers."""
        val = self.smg.values[vid]
        if val.kind is ValKind.UNKNOWN:
            return TOP
        return self.smg.interval_of(vid)


def _make_var(smg: SMG, prog: Program, key: tuple, frames) -> int:
    if key[0] == "g":
        size = _global_sizes(prog)[key[1]]
        oid = smg.add_region(Interval(size, size), Storage(StorageKind.STATIC, var=key[1]),
                             zeroed=True)
    else:
        _, index, name = key
        func = frames[index].func
        size = _var_tables(prog)[func][name]
        oid = smg.add_region(Interval(size, size),
                             Storage(StorageKind.STACK, func, name, index))
    smg.roots[key] = oid
    return oid


# -- initial state ---------------------------------------------------------------------------

def initial_state(prog: Program, config: Config = Config()) -> SymbolicState:
    smg = SMG(config.bound)
    frames = (Frame(prog.entry),)
    for g in prog.globals:
        _make_var(smg, prog, ("g", g.name), frames)
    _push_locals(smg, prog, frames)
    fn = prog.functions[prog.entry]
    return SymbolicState(smg.freeze(), (prog.entry, fn.entry, 0), frames)


def _push_locals(smg: SMG, prog: Program, frames) -> None:
    index = len(frames) - 1
    for name in _var_tables(prog)[frames[index].func]:
        _make_var(smg, prog, ("s", index, name), frames)


# -- arithmetic -------------------------------------------------------------------------------

def _arith(ctx: _Ctx, rhs) -> int:
    smg, bound = ctx.smg, ctx.config.bound
    if isinstance(rhs, Negate):
        x = ctx.operand(rhs.operand)
        ix = ctx.interval(x)
        return smg.unknown() if ix is None else smg.data(iv.neg(ix, bound))
    if isinstance(rhs, BinOp):
        a, b = ctx.operand(rhs.left), ctx.operand(rhs.right)
        ia, ib = ctx.interval(a), ctx.interval(b)
        if ia is None or ib is None:
            return smg.unknown()  # no arithmetic on addresses outside ptr_add
        if rhs.op == "+":
            out = iv.add(ia, ib, bound)
        elif rhs.op == "-":
            out = iv.sub(ia, ib, bound)
        elif rhs.op == "*":
            out = iv.mul(ia, ib, bound)
        else:
            out = iv.div_const(ia, ib.value, bound)
        return smg.data(out)
    return ctx.operand(rhs)


# -- memory access helpers ---------------------------------------------------------------------

def _target(ctx: _Ctx, vid: int, what: str):
    """Points-to edge of a dereferenced value, requesting splits as needed."""
    smg = ctx.smg
    if vid != NULL and not smg.is_pointer(vid):
        val = smg.values[vid]
        if val.kind is ValKind.UNKNOWN:
            raise InvalidRead(f"{what} through an uninitialized pointer")
        raise InvalidRead(f"{what} through the integer {val.interval}")
    edge = smg.pt[vid]
    obj = smg.objects[edge.target]
    if obj.is_segment:
        raise _Materialize(edge.target, Spec.LAST if edge.spec is Spec.LAST else Spec.FIRST)
    if not edge.offset.is_singleton and not obj.is_null and obj.validity is Validity.VALID:
        raise _Guard(vid, edge.offset, True)
    return edge


def _access_offset(edge, off: int) -> Interval:
    return Interval(edge.offset.lo + off, edge.offset.hi + off)


# -- instruction execution -----------------------------------------------------------------------

def _exec_instr(ctx: _Ctx, instr) -> Optional[list]:
    """Execute a non-branching instruction in place.

    Returns None to continue at the next instruction, or raises _Stop.
    """
    smg = ctx.smg
    if isinstance(instr, Assign):
        ctx.write_var(instr.dst, _arith(ctx, instr.rhs))
    elif isinstance(instr, Nondet):
        ctx.write_var(instr.dst, smg.data(TOP))
    elif isinstance(instr, Alloc):
        size_vid = ctx.operand(instr.size)
        size = ctx.interval(size_vid)
        if size is None:
            raise InvalidRead("allocation size is a pointer")
        size = size.meet(Interval(0, INF))
        if size is None:
            raise _Dead()  # a negative size is not an allocation
        if not size.is_singleton and (not size.is_finite or size.count() <= ctx.config.split_max):
            raise _Guard(size_vid, size, False)
        oid = smg.add_region(size, zeroed=instr.zeroed)
        ctx.write_var(instr.dst, smg.addr(oid, 0))
    elif isinstance(instr, Free):
        vid = ctx.operand(instr.operand)
        if vid != NULL:
            if not smg.is_pointer(vid):
                from .smg import InvalidFree
                raise InvalidFree("free of a non-pointer value")
            _target(ctx, vid, "free")
        smg.free(vid)
    elif isinstance(instr, Load):
        edge = _target(ctx, ctx.operand(instr.addr), "read")
        vid = smg.read(edge.target, _access_offset(edge, instr.offset), instr.width)
        ctx.write_var(instr.dst, vid)
    elif isinstance(instr, Store):
        src = ctx.operand(instr.src)
        edge = _target(ctx, ctx.operand(instr.addr), "write")
        from .smg import InvalidWrite
        try:
            smg.write(edge.target, _access_offset(edge, instr.offset), instr.width, src)
        except InvalidRead as exc:  # pragma: no cover - write raises InvalidWrite
            raise InvalidWrite(str(exc), exc.maybe)
    elif isinstance(instr, PtrAdd):
        base = ctx.operand(instr.base)
        delta = ctx.interval(ctx.operand(instr.delta))
        if delta is None:
            out = smg.unknown()
        elif base == NULL or smg.is_pointer(base):
            edge = smg.pt[base]
            out = smg.addr(edge.target, iv.add(edge.offset, delta, ctx.config.bound),
                           edge.spec)
        else:
            out = smg.unknown()
        ctx.write_var(instr.dst, out)
    elif isinstance(instr, Clobber):
        _clobber(ctx, instr.var)
    elif isinstance(instr, Assume):
        raise AssertionError("assume is handled by the branch driver")
    else:
        raise TypeError(f"unexpected instruction {instr!r}")
    return None


def _clobber(ctx: _Ctx, name: str) -> None:
    key = ctx.root_key(name)
    if key[0] != "s":
        raise KeyError(f"clobber of non-local {name}")
    oid = ctx.smg.roots.pop(key, None)
    if oid is not None:
        ctx.smg.invalidate(oid, Validity.CLOBBERED)


def exec_clobber(state: SymbolicState, variable: str, prog: Program,
                 config: Config = Config()) -> SymbolicState:
    """End the lifetime of a local; pointers to its storage become dangling.

    Clobbering an already clobbered variable is a no-op.
    """
    smg = state.smg.clone()
    ctx = _Ctx(prog, state, smg, config)
    _clobber(ctx, variable)
    smg.prune()
    return replace(state, smg=smg.freeze())


# -- conditions ----------------------------------------------------------------------------------

_NEGATE = {"==": "!=", "!=": "==", "<": ">=", ">=": "<", ">": "<=", "<=": ">"}
_FLIP = {"==": "==", "!=": "!=", "<": ">", ">": "<", "<=": ">=", ">=": "<="}


def _dnf(cond, positive: bool = True) -> list[list[Cmp]]:
    if isinstance(cond, Cmp):
        return [[cond if positive else Cmp(_NEGATE[cond.op], cond.left, cond.right)]]
    if isinstance(cond, Not):
        return _dnf(cond.operand, not positive)
    left, right = _dnf(cond.left, positive), _dnf(cond.right, positive)
    conj = isinstance(cond, And) == positive
    if conj:
        return [l + r for l in left for r in right]
    return left + right


def _cmp_intervals(op: str, a: Interval, b: Interval):
    """Refined (a, b) under ``a op b``, or None when unsatisfiable."""
    if op == "==":
        m = a.meet(b)
        return None if m is None else (m, m)
    if op == "!=":
        if a.is_singleton and b.is_singleton:
            return None if a.lo == b.lo else (a, b)
        if b.is_singleton:
            return _exclude(a, b.lo), b
        if a.is_singleton:
            return a, _exclude(b, a.lo)
        return a, b
    if op in (">", ">="):
        res = _cmp_intervals(_FLIP[op], b, a)
        return None if res is None else (res[1], res[0])
    strict = 1 if op == "<" else 0
    na = a.meet(Interval(NEG_INF, b.hi - strict))
    nb = b.meet(Interval(a.lo + strict, INF))
    if na is None or nb is None:
        return None
    return na, nb


def _exclude(a: Interval, x) -> Interval:
    if a.lo == x:
        return Interval(a.lo + 1, a.hi) if a.hi > x else a
    if a.hi == x:
        return Interval(a.lo, a.hi - 1)
    return a


def _apply_literal(ctx: _Ctx, lit: Cmp, refined: set) -> bool:
    """Constrain ctx.smg by one comparison; False when it cannot hold."""
    smg = ctx.smg
    a, b = ctx.operand(lit.left), ctx.operand(lit.right)
    pa = a == NULL or smg.is_pointer(a)
    pb = b == NULL or smg.is_pointer(b)
    if pa and pb and not (a == NULL and b == NULL):
        for v in (a, b):
            obj = smg.objects[smg.pt[v].target]
            if obj.is_segment and obj.min_len == 0:
                raise _SplitEmpty(smg.pt[v].target)
        if lit.op not in ("==", "!="):
            return True
        neq = ptr_neq(smg, a, b)
        if neq is None:
            return True
        return neq == (lit.op == "!=")
    ia, ib = ctx.interval(a), ctx.interval(b)
    if ia is None or ib is None:
        # an address against an integer: only a zero could be equal to null,
        # which was handled above; anything else is not decided
        return True
    if a == b:
        return lit.op in ("==", "<=", ">=")
    res = _cmp_intervals(lit.op, ia, ib)
    if res is None:
        return False
    for vid, old, new in ((a, ia, res[0]), (b, ib, res[1])):
        if vid == NULL:
            continue
        val = smg.values[vid]
        if val.kind is ValKind.DATA and (val.interval.is_singleton or new == old):
            continue
        refined.discard(vid)
        refined.add(smg.refine(vid, new))
    return True


def _split_values(ctx: _Ctx, refined: set) -> list[list[tuple[int, int]]]:
    """Concrete assignments for refined values with small finite ranges."""
    plans: list[list[tuple[int, int]]] = [[]]
    for vid in sorted(refined):
        if vid not in ctx.smg.values:
            continue
        val = ctx.smg.values[vid]
        if val.kind is not ValKind.DATA or val.interval.is_singleton:
            continue
        rng = val.interval
        if rng.is_finite and 2 <= rng.count() <= ctx.config.split_max:
            plans = [p + [(vid, k)] for p in plans for k in rng.values()]
    return plans


# -- driver --------------------------------------------------------------------------------------

class _Outcome:
    """Successor states of one instruction plus the first abandoned case."""

    def __init__(self):
        self.states: list[SymbolicState] = []
        self.cut: Optional[str] = None


def _run_cases(prog: Program, state: SymbolicState, config: Config, smg: SMG,
               sampled: bool, body, out: _Outcome, depth: int = 0) -> None:
    """Run ``body`` on a clone of ``smg``, case-splitting on requests."""
    work = smg.clone()
    ctx = _Ctx(prog, state, work, config)
    ctx.sampled = sampled
    try:
        results = body(ctx)
    except _Materialize as req:
        for case in materialize(smg, req.seg, req.end):
            _run_cases(prog, state, config, case, sampled, body, out, depth + 1)
        return
    except _SplitEmpty as req:
        for case in split_empty(smg, req.seg):
            _run_cases(prog, state, config, case, sampled, body, out, depth + 1)
        return
    except _Guard as req:
        for case, case_sampled in _guard_cases(smg, req, config, sampled):
            if case is None:
                out.cut = out.cut or case_sampled
                continue
            _run_cases(prog, state, config, case, case_sampled, body, out, depth + 1)
        return
    except _Abandon as exc:
        out.cut = out.cut or exc.reason
        return
    except _Dead:
        return
    for res in results:
        out.states.append(res)


def _guard_cases(smg: SMG, req: _Guard, config: Config, sampled: bool):
    rng = req.interval
    if rng.is_finite:
        if rng.count() > config.split_max:
            yield None, "split-max"
            return
        values, taint = list(rng.values()), sampled
    elif rng.lo != NEG_INF:
        values, taint = [int(rng.lo) + i for i in range(config.samples)], True
    elif rng.hi != INF:
        values, taint = [int(rng.hi) - i for i in range(config.samples)], True
    else:
        yield None, "unbounded"
        return
    for k in values:
        case = smg.clone()
        if req.is_offset:
            edge = case.pt[req.vid]
            case.retarget(req.vid, edge.target, Interval(k, k), edge.spec)
        else:
            case.refine(req.vid, Interval(k, k))
        yield case.freeze(), taint


def deref_size_guard(state: SymbolicState, size: Interval,
                     config: Config = Config()) -> list[tuple[SymbolicState, Interval]]:
    """Concretize a size interval: split small finite ranges, sample half-infinite ones."""
    if size.is_singleton:
        return [(state, size)]
    if size.is_finite:
        if size.count() > config.split_max:
            return [(state, size)]
        return [(state, Interval(k, k)) for k in size.values()]
    if size.lo != NEG_INF:
        picks = [int(size.lo) + i for i in range(config.samples)]
    elif size.hi != INF:
        picks = [int(size.hi) - i for i in range(config.samples)]
    else:
        return [(state, size)]
    tainted = replace(state, sampled=True)
    return [(tainted, Interval(k, k)) for k in picks]


def _finish(ctx: _Ctx, loc: Loc, frames=None) -> list[SymbolicState]:
    """Package ctx as a successor state after pruning (leaks raise _Stop)."""
    smg = ctx.smg
    leaked = smg.prune()
    if leaked and ctx.config.property is Property.MEMSAFETY:
        raise _LeakFound(len(leaked))
    new = SymbolicState(smg.freeze(), loc, ctx.frames if frames is None else frames,
                        ctx.state.steps + 1, ctx.sampled)
    return [new]


class _LeakFound(Exception):
    def __init__(self, count: int):
        self.count = count


def _next_loc(state: SymbolicState) -> Loc:
    f, b, i = state.loc
    return (f, b, i + 1)


def check_noreturn_exit(state: SymbolicState) -> Optional[Error]:
    """Leak error if any valid heap memory (regions or segments) remains."""
    live = state.smg.valid_heap_objects()
    if not live:
        return None
    return Error(ErrorKind.LEAK, f"{len(live)} heap object(s) not freed at program exit",
                 state.trace, state.sampled)


def _exit_path(ctx: _Ctx) -> list:
    """End the path at a noreturn point."""
    smg = ctx.smg
    dropped = smg.prune()
    halted = SymbolicState(smg.freeze(), ctx.state.loc, ctx.frames,
                           ctx.state.steps + 1, ctx.sampled, _trace=ctx.state._trace)
    if ctx.config.property is Property.MEMSAFETY:
        if dropped or check_noreturn_exit(halted) is not None:
            raise _LeakFound(len(dropped) + len(smg.valid_heap_objects()))
    raise _Stop(Halted(halted))


# -- calls --------------------------------------------------------------------------------------

def _call(ctx: _Ctx, instr: Call) -> list[SymbolicState]:
    prog = ctx.prog
    callee = prog.functions[instr.fn]
    args = [ctx.operand(a) for a in instr.args]
    if callee.noreturn:
        return _exit_path(ctx)
    active = sum(1 for fr in ctx.frames if fr.func == instr.fn)
    if active > ctx.config.recursion_depth:
        raise _Abandon("recursion-depth")
    f, b, i = ctx.state.loc
    frames = ctx.frames + (Frame(instr.fn, b, i + 1, instr.dst),)
    ctx.frames = frames
    _push_locals(ctx.smg, prog, frames)
    for name, vid in zip(callee.params, args):
        ctx.write_var(name, vid)
    return _finish(ctx, (instr.fn, callee.entry, 0), frames)


def _return(ctx: _Ctx, term: Return) -> list[SymbolicState]:
    smg = ctx.smg
    value = ctx.operand(term.value) if term.value is not None else None
    index = ctx.frame_index
    _kill_frame(smg, index)
    if index == 0:
        return _exit_path(ctx)
    top = ctx.frames[-1]
    frames = ctx.frames[:-1]
    ctx.frames = frames
    if top.ret_dst is not None:
        if value is None:
            value = smg.unknown()
        ctx.write_var(top.ret_dst, value)
    caller = frames[-1].func
    return _finish(ctx, (caller, top.ret_block, top.ret_index), frames)


def _kill_frame(smg: SMG, index: int) -> None:
    for key in [k for k in smg.roots if k[0] == "s" and k[1] == index]:
        oid = smg.roots.pop(key)
        smg.invalidate(oid, Validity.SCOPE_DEAD)


def call_and_return(prog: Program, state: SymbolicState, callsite: Call,
                    config: Config = Config()) -> list[SymbolicState]:
    """Push a frame for ``callsite`` on ``state`` (inlining semantics)."""
    res = step(prog, state, config)
    if isinstance(res, Next):
        return list(res.states)
    return []


# -- step ----------------------------------------------------------------------------------------

def _instruction(prog: Program, loc: Loc):
    f, b, i = loc
    block = prog.functions[f].block(b)
    if i < len(block.instrs):
        return block.instrs[i]
    return block.terminator


def branch_condition(state: SymbolicState, cond, prog: Program,
                     config: Config = Config()) -> list[tuple[SymbolicState, bool]]:
    """Successor states for both outcomes of ``cond`` (taken first).

    The returned states keep the original location and step count.
    """
    results = []
    for taken in (True, False):
        out = _Outcome()
        for conj in _dnf(cond, taken):
            _run_cases(prog, state, config, state.smg, state.sampled,
                       _conjunct_body(conj, state.loc), out)
        for s in out.states:
            results.append((replace(s, steps=state.steps), taken))
    return results


def _conjunct_body(conj: list[Cmp], loc: Loc):
    def body(ctx: _Ctx) -> list[SymbolicState]:
        refined: set[int] = set()
        for lit in conj:
            if not _apply_literal(ctx, lit, refined):
                return []
        plans = _split_values(ctx, refined)
        if plans == [[]]:
            return _finish(ctx, loc)
        base = ctx.smg
        base.prune()
        frozen = base.clone().freeze()
        states = []
        for plan in plans:
            case = frozen.clone()
            for vid, k in plan:
                if vid in case.values:
                    case.refine(vid, Interval(k, k))
            sub = _Ctx(ctx.prog, ctx.state, case, ctx.config)
            sub.sampled = ctx.sampled
            sub.frames = ctx.frames
            states.extend(_finish(sub, loc))
        return states
    return body


def step(prog: Program, state: SymbolicState, config: Config = Config()) -> StepResult:
    """Execute the instruction at ``state.loc``."""
    instr = _instruction(prog, state.loc)
    out = _Outcome()
    try:
        if isinstance(instr, (Branch, Assume)):
            _step_branch(prog, state, config, instr, out)
        else:
            _run_cases(prog, state, config, state.smg, state.sampled,
                       _instr_body(instr, state), out)
    except _Stop as stop:
        return _attach(stop.result, state, instr)
    except _LeakFound as leak:
        return _error(state, instr, ErrorKind.LEAK,
                      f"{leak.count} heap object(s) became unreachable", False,
                      out_sampled=state.sampled or _any_sampled(out))
    except MemError as exc:
        if exc.maybe:
            return Cut("maybe-invalid")
        if config.property is Property.REACH:
            return Cut("memory-error")
        return _error(state, instr, exc.kind, str(exc), False, state.sampled)
    if not out.states:
        if out.cut is not None:
            return Cut(out.cut)
        return Infeasible()
    states = tuple(
        replace(s, _trace=_TraceLink(state._trace, TraceStep(state.loc, idx, str(instr))))
        for idx, s in enumerate(out.states))
    return Next(states, out.cut)


def _any_sampled(out: _Outcome) -> bool:
    return any(s.sampled for s in out.states)


def _error(state, instr, kind, message, maybe, out_sampled) -> Error:
    trace = _unwind(state._trace) + (TraceStep(state.loc, -1, str(instr)),)
    return Error(kind, message, trace, out_sampled, maybe)


def _attach(result, state: SymbolicState, instr):
    if isinstance(result, Error):
        return result
    if isinstance(result, Halted):
        link = _TraceLink(state._trace, TraceStep(state.loc, 0, str(instr)))
        return Halted(replace(result.state, _trace=link))
    return result


def _instr_body(instr, state: SymbolicState):
    def body(ctx: _Ctx) -> list[SymbolicState]:
        try:
            if isinstance(instr, Call):
                return _call(ctx, instr)
            if isinstance(instr, Return):
                return _return(ctx, instr)
            if isinstance(instr, Halt):
                return _exit_path(ctx)
            if isinstance(instr, ErrorMark):
                if ctx.config.property is Property.REACH:
                    raise _Stop(_error(state, instr, ErrorKind.REACH_ERROR,
                                       "reach_error() is reachable", False, ctx.sampled))
                return _exit_path(ctx)
            if isinstance(instr, Goto):
                f = state.loc[0]
                return _finish(ctx, (f, instr.target, 0))
            _exec_instr(ctx, instr)
            return _finish(ctx, _next_loc(state))
        except _LeakFound as leak:
            raise _Stop(_error(state, instr, ErrorKind.LEAK,
                               f"{leak.count} heap object(s) leaked", False, ctx.sampled))
        except MemError as exc:
            if exc.maybe:
                raise _Abandon("maybe-invalid")
            if ctx.config.property is Property.REACH:
                raise _Abandon("memory-error")
            raise _Stop(_error(state, instr, exc.kind, str(exc), False, ctx.sampled))
    return body


def _step_branch(prog, state, config, instr, out: _Outcome) -> None:
    if isinstance(instr, Assume):
        conds = [(instr.cond, True, _next_loc(state))]
    else:
        f = state.loc[0]
        conds = [(instr.cond, True, (f, instr.then, 0)),
                 (instr.cond, False, (f, instr.orelse, 0))]
    for cond, positive, target in conds:
        for conj in _dnf(cond, positive):
            _run_cases(prog, state, config, state.smg, state.sampled,
                       _wrap_leaks(_conjunct_body(conj, target), state, instr), out)


def _wrap_leaks(body, state, instr):
    def wrapped(ctx):
        try:
            return body(ctx)
        except _LeakFound as leak:
            raise _Stop(_error(state, instr, ErrorKind.LEAK,
                               f"{leak.count} heap object(s) leaked", False, ctx.sampled))
        except MemError as exc:
            if exc.maybe or ctx.config.property is Property.REACH:
                raise _Abandon("memory-error")
            raise _Stop(_error(state, instr, exc.kind, str(exc), False, ctx.sampled))
    return wrapped


def replay(prog: Program, trace, config: Config = Config()) -> StepResult:
    """Re-run a trace of successor choices from the initial state."""
    state = initial_state(prog, config)
    for i, ts in enumerate(trace):
        if state.loc != ts.loc:
            raise ValueError(f"trace diverged at step {i}: {state.loc} != {ts.loc}")
        res = step(prog, state, config)
        if ts.choice < 0 or i == len(trace) - 1:
            return res
        if isinstance(res, Halted):
            return res
        if not isinstance(res, Next):
            raise ValueError(f"trace diverged at step {i}: {res}")
        state = res.states[ts.choice]
    raise ValueError("trace ended without a final step")


__all__ = [
    "Property", "Config", "Frame", "SymbolicState", "TraceStep", "Next", "Error",
    "Halted", "Cut", "Infeasible", "StepResult", "step", "initial_state",
    "branch_condition", "deref_size_guard", "exec_clobber", "check_noreturn_exit",
    "call_and_return", "replay",
]
