"""Symbolic memory graphs.

An SMG has two kinds of nodes, objects and values, and two kinds of edges:
has-value edges (object field -> value) and points-to edges (pointer value ->
object, offset, end specifier).  Objects are concrete regions or singly /
doubly linked list segments summarising chains of regions.

Program variables are stack objects registered under a root name, so the
whole program memory, including the stack, lives in the graph.  Roots are
``("g", name)`` for globals and ``("s", frame_index, name)`` for locals.

Objects and values share one id counter.  Object 0 is the null object and
value 0 is the null pointer, which doubles as the integer zero.  Pointer
values with a singleton offset are hash-consed per (target, offset, end), so
two value ids with singleton offsets denote equal addresses iff they are the
same id.  Fields that are not covered by any has-value edge are undefined.

``SMG`` methods mutate in place and are only legal on unfrozen clones; the
module-level functions are the pure interface and return fresh graphs.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Iterable, Optional

from .interval import BOUND_CONST, INF, Interval, ZERO, clamp

NULL_OBJ = 0
NULL = 0


class Kind(enum.Enum):
    REGION = "region"
    SLS = "sls"
    DLS = "dls"


class Validity(enum.Enum):
    VALID = "valid"
    FREED = "freed"
    CLOBBERED = "clobbered"
    SCOPE_DEAD = "scope-dead"


class StorageKind(enum.Enum):
    HEAP = "heap"
    STACK = "stack"
    STATIC = "static"
    NULL = "null"


class Spec(enum.Enum):
    WHOLE = "whole"
    FIRST = "first"
    LAST = "last"
    ALL = "all"


class ValKind(enum.Enum):
    PTR = "ptr"
    DATA = "data"
    UNKNOWN = "unknown"


class ErrorKind(enum.Enum):
    INVALID_DEREF = "invalid-deref"
    INVALID_FREE = "invalid-free"
    DOUBLE_FREE = "double-free"
    LEAK = "leak"
    REACH_ERROR = "reach-error"


@dataclass(frozen=True)
class Storage:
    kind: StorageKind
    func: Optional[str] = None
    var: Optional[str] = None
    frame: Optional[int] = None

    def __str__(self):
        if self.kind is StorageKind.STACK:
            return f"stack({self.func}#{self.frame}.{self.var})"
        if self.kind is StorageKind.STATIC:
            return f"static({self.var})"
        return self.kind.value


HEAP = Storage(StorageKind.HEAP)


@dataclass(frozen=True)
class Obj:
    kind: Kind
    size: Interval
    validity: Validity
    storage: Storage
    seq: int
    min_len: int = 0
    next_off: Optional[int] = None
    prev_off: Optional[int] = None

    @property
    def is_segment(self) -> bool:
        return self.kind is not Kind.REGION

    @property
    def is_null(self) -> bool:
        return self.storage.kind is StorageKind.NULL

    @property
    def is_valid(self) -> bool:
        return self.validity is Validity.VALID and not self.is_null

    @property
    def is_valid_heap(self) -> bool:
        return self.is_valid and self.storage.kind is StorageKind.HEAP

    def link_offsets(self) -> tuple[int, ...]:
        if self.kind is Kind.SLS:
            return (self.next_off,)
        if self.kind is Kind.DLS:
            return (self.next_off, self.prev_off)
        return ()


@dataclass(frozen=True)
class Val:
    kind: ValKind
    interval: Interval = Interval(float("-inf"), float("inf"))


@dataclass(frozen=True)
class PtEdge:
    target: int
    offset: Interval
    spec: Spec = Spec.WHOLE


class MemError(Exception):
    """A memory-safety violation found while mutating an SMG.

    ``maybe`` marks violations that hold only for part of an interval (an
    access that may or may not exceed an interval-sized object).
    """

    kind = ErrorKind.INVALID_DEREF

    def __init__(self, message: str, maybe: bool = False):
        super().__init__(message)
        self.maybe = maybe


class InvalidRead(MemError):
    pass


class InvalidWrite(MemError):
    pass


class DoubleFree(MemError):
    kind = ErrorKind.DOUBLE_FREE


class InvalidFree(MemError):
    kind = ErrorKind.INVALID_FREE


FieldKey = tuple[int, int]  # (offset, width)


class SMG:
    __slots__ = ("objects", "values", "fields", "pt", "roots", "next_id",
                 "next_seq", "bound", "_addr", "_consts", "_owned", "_frozen",
                 "_key")

    def __init__(self, bound: int = BOUND_CONST):
        self.bound = bound
        self.objects: dict[int, Obj] = {
            NULL_OBJ: Obj(Kind.REGION, ZERO, Validity.VALID,
                          Storage(StorageKind.NULL), 0)}
        self.values: dict[int, Val] = {NULL: Val(ValKind.PTR, ZERO)}
        self.pt: dict[int, PtEdge] = {NULL: PtEdge(NULL_OBJ, ZERO)}
        self.fields: dict[int, dict[FieldKey, int]] = {}
        self.roots: dict[tuple, int] = {}
        self.next_id = 1
        self.next_seq = 1
        self._addr: dict[tuple, int] = {(NULL_OBJ, 0, Spec.WHOLE): NULL}
        self._consts: dict[int, int] = {0: NULL}
        self._owned: set[int] = set()
        self._frozen = False
        self._key = None

    # -- lifecycle --------------------------------------------------------------

    def clone(self) -> SMG:
        new = SMG.__new__(SMG)
        new.bound = self.bound
        new.objects = dict(self.objects)
        new.values = dict(self.values)
        new.pt = dict(self.pt)
        new.fields = dict(self.fields)
        new.roots = dict(self.roots)
        new.next_id = self.next_id
        new.next_seq = self.next_seq
        new._addr = dict(self._addr)
        new._consts = dict(self._consts)
        new._owned = set()
        new._frozen = False
        new._key = None
        return new

    def freeze(self) -> SMG:
        self._frozen = True
        return self

    def _check_mutable(self):
        if self._frozen:
            raise RuntimeError("attempt to mutate a frozen SMG")

    def _fresh_id(self) -> int:
        i = self.next_id
        self.next_id += 1
        return i

    # -- objects --------------------------------------------------------------------

    def add_object(self, kind: Kind, size: Interval, storage: Storage,
                   validity: Validity = Validity.VALID, min_len: int = 0,
                   next_off: Optional[int] = None,
                   prev_off: Optional[int] = None) -> int:
        self._check_mutable()
        oid = self._fresh_id()
        self.objects[oid] = Obj(kind, size, validity, storage, self.next_seq,
                                min_len, next_off, prev_off)
        self.next_seq += 1
        return oid

    def add_region(self, size: Interval, storage: Storage = HEAP,
                   zeroed: bool = False) -> int:
        if size.lo < 0:
            raise ValueError(f"negative region size {size}")
        oid = self.add_object(Kind.REGION, size, storage)
        if zeroed and size.lo > 0:
            self.set_field(oid, 0, int(size.lo), NULL)
        return oid

    def update_object(self, oid: int, **changes) -> None:
        self._check_mutable()
        self.objects[oid] = replace(self.objects[oid], **changes)

    def remove_object(self, oid: int) -> None:
        self._check_mutable()
        del self.objects[oid]
        self.fields.pop(oid, None)
        self._owned.discard(oid)

    # -- values ---------------------------------------------------------------------

    def const(self, k: int) -> int:
        vid = self._consts.get(k)
        if vid is None:
            self._check_mutable()
            vid = self._fresh_id()
            self.values[vid] = Val(ValKind.DATA, Interval(k, k))
            self._consts[k] = vid
        return vid

    def data(self, interval: Interval) -> int:
        if interval.is_singleton:
            return self.const(interval.value)
        self._check_mutable()
        vid = self._fresh_id()
        self.values[vid] = Val(ValKind.DATA, interval)
        return vid

    def unknown(self) -> int:
        self._check_mutable()
        vid = self._fresh_id()
        self.values[vid] = Val(ValKind.UNKNOWN)
        return vid

    def addr(self, target: int, offset, spec: Spec = Spec.WHOLE) -> int:
        if isinstance(offset, int):
            offset = Interval(offset, offset)
        if offset.is_singleton:
            key = (target, offset.value, spec)
            vid = self._addr.get(key)
            if vid is not None:
                return vid
        self._check_mutable()
        vid = self._fresh_id()
        self.values[vid] = Val(ValKind.PTR)
        self.pt[vid] = PtEdge(target, offset, spec)
        if offset.is_singleton:
            self._addr[key] = vid
        return vid

    def is_pointer(self, vid: int) -> bool:
        return self.values[vid].kind is ValKind.PTR

    def interval_of(self, vid: int) -> Optional[Interval]:
        """Numeric range of a data value; None for non-null pointers."""
        val = self.values[vid]
        if vid == NULL:
            return ZERO
        if val.kind is ValKind.PTR:
            return None
        return val.interval

    def retarget(self, vid: int, target: int, offset: Interval,
                 spec: Spec = Spec.WHOLE) -> None:
        """Repoint an existing pointer value, merging it into any equal value."""
        self._check_mutable()
        old = self.pt[vid]
        if old.offset.is_singleton:
            self._addr.pop((old.target, old.offset.value, old.spec), None)
        if offset.is_singleton:
            existing = self._addr.get((target, offset.value, spec))
            if existing is not None and existing != vid:
                del self.pt[vid]
                self.replace_value(vid, existing)
                return
            self._addr[(target, offset.value, spec)] = vid
        self.pt[vid] = PtEdge(target, offset, spec)

    def replace_value(self, old: int, new: int) -> None:
        """Substitute ``new`` for ``old`` in every field and drop ``old``."""
        self._check_mutable()
        for oid in list(self.fields):
            fmap = self.fields[oid]
            if old in fmap.values():
                mut = self._fields_mut(oid)
                for key, vid in list(mut.items()):
                    if vid == old:
                        mut[key] = new
                if new == NULL:
                    self._normalize_zeros(oid)
        self._drop_value(old)

    def _drop_value(self, vid: int) -> None:
        if vid == NULL:
            return
        val = self.values.pop(vid, None)
        if val is None:
            return
        edge = self.pt.pop(vid, None)
        if edge is not None and edge.offset.is_singleton:
            key = (edge.target, edge.offset.value, edge.spec)
            if self._addr.get(key) == vid:
                del self._addr[key]
        if val.kind is ValKind.DATA and val.interval.is_singleton:
            if self._consts.get(val.interval.value) == vid:
                del self._consts[val.interval.value]

    def refine(self, vid: int, interval: Interval) -> int:
        """Narrow a data value in place; singletons collapse onto constants."""
        self._check_mutable()
        if interval.is_singleton:
            const = self.const(interval.value)
            if const != vid:
                self.replace_value(vid, const)
            return const
        self.values[vid] = Val(ValKind.DATA, interval)
        return vid

    # -- fields -----------------------------------------------------------------------

    def get_fields(self, oid: int) -> dict[FieldKey, int]:
        return self.fields.get(oid, {})

    def _fields_mut(self, oid: int) -> dict[FieldKey, int]:
        self._check_mutable()
        if oid not in self._owned:
            self.fields[oid] = dict(self.fields.get(oid, {}))
            self._owned.add(oid)
        return self.fields[oid]

    def set_fields(self, oid: int, fmap: dict[FieldKey, int]) -> None:
        self._check_mutable()
        self.fields[oid] = dict(fmap)
        self._owned.add(oid)
        self._normalize_zeros(oid)

    def _normalize_zeros(self, oid: int) -> None:
        fmap = self.fields.get(oid)
        if not fmap:
            return
        zeros = sorted(k for k, v in fmap.items() if v == NULL)
        if len(zeros) < 2:
            return
        merged: list[list[int]] = []
        for off, width in zeros:
            if merged and merged[-1][0] + merged[-1][1] == off:
                merged[-1][1] += width
            else:
                merged.append([off, width])
        if len(merged) == len(zeros):
            return
        mut = self._fields_mut(oid)
        for key in zeros:
            del mut[key]
        for off, width in merged:
            mut[(off, width)] = NULL

    def set_field(self, oid: int, off: int, width: int, vid: int) -> None:
        """Write a has-value edge, splitting overlapped edges.

        Remainders of an overlapped zero edge stay zero; remainders of any
        other edge become undefined.
        """
        mut = self._fields_mut(oid)
        end = off + width
        for (o2, w2), v2 in list(mut.items()):
            if o2 < end and off < o2 + w2:
                del mut[(o2, w2)]
                if v2 == NULL:
                    if o2 < off:
                        mut[(o2, off - o2)] = NULL
                    if end < o2 + w2:
                        mut[(end, o2 + w2 - end)] = NULL
        mut[(off, width)] = vid
        if vid == NULL:
            self._normalize_zeros(oid)

    def havoc_range(self, oid: int, lo: int, hi: int) -> None:
        """Forget every field overlapping the byte range [lo, hi)."""
        mut = self._fields_mut(oid)
        for (o2, w2) in list(mut):
            if o2 < hi and lo < o2 + w2:
                del mut[(o2, w2)]

    def field_at(self, oid: int, off: int, width: int) -> Optional[int]:
        """Value stored exactly at (off, width), or NULL inside a zero run."""
        fmap = self.fields.get(oid)
        if not fmap:
            return None
        vid = fmap.get((off, width))
        if vid is not None:
            return vid
        for (o2, w2), v2 in fmap.items():
            if v2 == NULL and o2 <= off and off + width <= o2 + w2:
                return NULL
        return None

    def zero_covered(self, oid: int, off: int, width: int) -> bool:
        return self.field_at(oid, off, width) == NULL

    # -- checked access ---------------------------------------------------------------

    def _check_access(self, oid: int, offset: Interval, width: int,
                      err: type[MemError]) -> None:
        obj = self.objects[oid]
        if obj.is_null:
            raise err("null pointer dereference")
        if obj.is_segment:
            raise ValueError("list segments must be materialized before access")
        if obj.validity is not Validity.VALID:
            raise err(f"access to {obj.validity.value} object")
        size = obj.size
        if offset.hi < 0 or offset.lo + width > size.hi:
            raise err(f"out-of-bounds access at {offset}+{width} of object sized {size}")
        if offset.lo < 0 or offset.hi + width > size.lo:
            raise err(f"possibly out-of-bounds access at {offset}+{width} of object "
                      f"sized {size}", maybe=True)

    def write(self, oid: int, offset: Interval, width: int, vid: int) -> None:
        self._check_access(oid, offset, width, InvalidWrite)
        if offset.is_singleton:
            self.set_field(oid, offset.value, width, vid)
        else:
            self.havoc_range(oid, int(offset.lo), int(offset.hi) + width)

    def read(self, oid: int, offset: Interval, width: int) -> int:
        self._check_access(oid, offset, width, InvalidRead)
        if offset.is_singleton:
            vid = self.field_at(oid, offset.value, width)
            if vid is not None:
                return vid
        return self.unknown()

    def free(self, vid: int) -> None:
        if vid == NULL:
            return
        if not self.is_pointer(vid):
            raise InvalidFree("free of a non-pointer value")
        edge = self.pt[vid]
        obj = self.objects[edge.target]
        if obj.is_segment:
            raise ValueError("list segments must be materialized before free")
        if obj.storage.kind is not StorageKind.HEAP:
            raise InvalidFree(f"free of {obj.storage.kind.value} memory")
        if obj.validity is not Validity.VALID:
            raise DoubleFree("double free")
        if 0 not in edge.offset:
            raise InvalidFree(f"free at offset {edge.offset}, not the start of a block")
        if not edge.offset.is_singleton:
            raise InvalidFree(f"free at possibly nonzero offset {edge.offset}", maybe=True)
        self.invalidate(edge.target, Validity.FREED)

    def invalidate(self, oid: int, validity: Validity) -> None:
        self.update_object(oid, validity=validity)
        if oid in self.fields:
            self.fields[oid] = {}
            self._owned.add(oid)

    # -- reachability -----------------------------------------------------------------

    def reachable(self) -> set[int]:
        seen = {NULL_OBJ}
        todo = list(self.roots.values())
        while todo:
            oid = todo.pop()
            if oid in seen:
                continue
            seen.add(oid)
            for vid in self.get_fields(oid).values():
                edge = self.pt.get(vid)
                if edge is not None and edge.target not in seen:
                    todo.append(edge.target)
        return seen

    def prune(self) -> list[int]:
        """Drop unreachable objects and unreferenced values.

        Returns the dropped objects that were valid heap memory (leaks).
        """
        self._check_mutable()
        live = self.reachable()
        leaked = []
        for oid in [o for o in self.objects if o not in live]:
            if self.objects[oid].is_valid_heap:
                leaked.append(oid)
            self.remove_object(oid)
        used = {NULL}
        for fmap in self.fields.values():
            used.update(fmap.values())
        for vid in [v for v in self.values if v not in used]:
            self._drop_value(vid)
        return leaked

    def valid_heap_objects(self) -> list[int]:
        return [oid for oid, obj in self.objects.items() if obj.is_valid_heap]

    def incoming(self) -> dict[int, list[tuple[int, FieldKey, int]]]:
        """For each object, the (source object, field, value) edges that point at it."""
        result: dict[int, list[tuple[int, FieldKey, int]]] = {}
        for oid, fmap in self.fields.items():
            for key, vid in fmap.items():
                edge = self.pt.get(vid)
                if edge is not None and vid != NULL:
                    result.setdefault(edge.target, []).append((oid, key, vid))
        return result

    def pointers_to(self, oid: int) -> list[int]:
        return [vid for vid, edge in self.pt.items() if edge.target == oid]

    # -- debugging ------------------------------------------------------------------------

    def __repr__(self):
        return f"<SMG {len(self.objects)} objects, {len(self.values)} values>"


# -- pure interface ---------------------------------------------------------------------------

def _mutated(smg: SMG, fn):
    new = smg.clone()
    result = fn(new)
    new.freeze()
    return new, result


def add_region(smg: SMG, size: Interval, storage: Storage = HEAP,
               zeroed: bool = False) -> tuple[SMG, int]:
    return _mutated(smg, lambda s: s.add_region(size, storage, zeroed))


def write_field(smg: SMG, obj: int, offset: Interval, width: int, value: int) -> SMG:
    return _mutated(smg, lambda s: s.write(obj, offset, width, value))[0]


def read_field(smg: SMG, obj: int, offset: Interval, width: int) -> tuple[SMG, int]:
    return _mutated(smg, lambda s: s.read(obj, offset, width))


def free_object(smg: SMG, value: int) -> SMG:
    return _mutated(smg, lambda s: s.free(value))[0]


def prune_unreachable(smg: SMG) -> tuple[SMG, list[int]]:
    return _mutated(smg, lambda s: s.prune())


def clamp_interval(lo, hi, bound: int = BOUND_CONST) -> Interval:
    return clamp(lo, hi, bound)


# -- pointer inequality ------------------------------------------------------------------------

def ptr_neq(smg: SMG, v1: int, v2: int) -> Optional[bool]:
    """Decide whether two pointers denote different addresses.

    True: definitely different; False: definitely equal; None: unknown.
    """
    for v in (v1, v2):
        if smg.values[v].kind is not ValKind.PTR:
            raise TypeError(f"ptr_neq on non-pointer value {v}")
    if v1 == v2:
        edge = smg.pt[v1]
        if edge.offset.is_singleton:
            return False
        return None
    e1, e2 = smg.pt[v1], smg.pt[v2]
    o1, o2 = smg.objects[e1.target], smg.objects[e2.target]
    if e1.target == e2.target:
        if e1.spec == e2.spec and e1.spec is not Spec.ALL:
            if e1.offset.disjoint(e2.offset):
                return True  # same object (same end), different offsets
            if e1.offset.is_singleton and e1.offset == e2.offset:
                return False
            return None
        if (o1.kind is Kind.DLS and o1.min_len >= 2
                and {e1.spec, e2.spec} == {Spec.FIRST, Spec.LAST}):
            return True  # opposite ends of a DLS with at least two nodes
        return None
    if o1.is_null or o2.is_null:
        other = o2 if o1.is_null else o1
        if other.is_segment:
            return True if other.min_len >= 1 else None
        return True  # null vs. a (possibly dead) region
    if o1.is_segment or o2.is_segment:
        return None
    if o1.is_valid and o2.is_valid:
        return True  # two distinct live regions
    if o1.is_valid != o2.is_valid:
        valid, invalid = (o1, o2) if o1.is_valid else (o2, o1)
        if invalid.seq > valid.seq:
            return True  # the dead region was allocated while the live one existed
    return None


def objects_of_kind(smg: SMG, kinds: Iterable[Kind]) -> list[int]:
    kinds = set(kinds)
    return [oid for oid, obj in smg.objects.items() if obj.kind in kinds]


__all__ = [
    "SMG", "Obj", "Val", "PtEdge", "Kind", "Validity", "Storage", "StorageKind",
    "Spec", "ValKind", "ErrorKind", "MemError", "InvalidRead", "InvalidWrite",
    "DoubleFree", "InvalidFree", "NULL", "NULL_OBJ", "HEAP", "add_region",
    "write_field", "read_field", "free_object", "prune_unreachable", "ptr_neq",
    "clamp_interval", "INF",
]
