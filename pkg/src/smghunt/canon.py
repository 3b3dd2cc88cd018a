"""Canonical forms of SMGs: isomorphism test, relabeling and text dumps.

Objects are numbered by a breadth-first walk from the roots in sorted root
order, visiting fields by ascending (offset, width).  Constants are encoded
by their number, pointers by (target, offset, end) and every other value by
the order of its first occurrence, so two garbage-free graphs get the same
key iff they are isomorphic.  Allocation sequence numbers are reduced to
their ranks, which makes the key order-isomorphic rather than equal on them.
"""

from __future__ import annotations

from collections import deque

from .interval import Interval
from .smg import NULL, NULL_OBJ, SMG, Kind, Obj, Storage, ValKind


def _object_order(smg: SMG) -> list[int]:
    order: list[int] = []
    seen = {NULL_OBJ}
    todo = deque(oid for _, oid in sorted(smg.roots.items()))
    while todo:
        oid = todo.popleft()
        if oid in seen:
            continue
        seen.add(oid)
        order.append(oid)
        fmap = smg.get_fields(oid)
        for key in sorted(fmap):
            edge = smg.pt.get(fmap[key])
            if edge is not None and edge.target not in seen:
                todo.append(edge.target)
    return order


def _storage_key(storage: Storage) -> tuple:
    return (storage.kind.value, storage.func, storage.var, storage.frame)


def canonical_key(smg: SMG, with_order: bool = True) -> tuple:
    """Hashable isomorphism-class key of a garbage-free SMG."""
    if with_order and smg._frozen and smg._key is not None:
        return smg._key
    order = _object_order(smg)
    cid = {oid: i + 1 for i, oid in enumerate(order)}
    cid[NULL_OBJ] = 0
    ranks = {oid: r for r, oid in enumerate(sorted(order, key=lambda o: smg.objects[o].seq))}
    vnum: dict[int, int] = {}
    vinfo: list[tuple] = []

    def code(vid: int) -> tuple:
        if vid == NULL:
            return ("c", 0)
        val = smg.values[vid]
        if val.kind is ValKind.PTR:
            edge = smg.pt[vid]
            if edge.offset.is_singleton:
                return ("p", cid[edge.target], edge.offset.key(), edge.spec.value)
            # pointer values with interval offsets are individual values
        elif val.kind is ValKind.DATA and val.interval.is_singleton:
            return ("c", val.interval.value)
        n = vnum.get(vid)
        if n is None:
            n = vnum[vid] = len(vnum)
            if val.kind is ValKind.PTR:
                edge = smg.pt[vid]
                vinfo.append((n, "ptr", cid[edge.target], edge.offset.key(), edge.spec.value))
            else:
                vinfo.append((n, val.kind.value, val.interval.key()))
        return ("v", n)

    objs = []
    for oid in order:
        obj = smg.objects[oid]
        fmap = smg.get_fields(oid)
        fields = tuple((k[0], k[1], code(fmap[k])) for k in sorted(fmap))
        objs.append((obj.kind.value, obj.size.key(), obj.validity.value,
                     _storage_key(obj.storage), ranks[oid] if with_order else None,
                     obj.min_len, obj.next_off, obj.prev_off, fields))
    roots = tuple((name, cid[oid]) for name, oid in sorted(smg.roots.items()))
    key = (roots, tuple(objs), tuple(vinfo))
    if with_order and smg._frozen:
        smg._key = key
    return key


def smg_equal(a: SMG, b: SMG) -> bool:
    return canonical_key(a) == canonical_key(b)


def canonicalize(smg: SMG) -> SMG:
    """Relabel ids deterministically; isomorphic inputs give identical outputs."""
    order = _object_order(smg)
    ranked = sorted(order, key=lambda o: smg.objects[o].seq)
    rank = {oid: r + 1 for r, oid in enumerate(ranked)}
    out = SMG(smg.bound)
    new_id = {NULL_OBJ: NULL_OBJ}
    for i, oid in enumerate(order):
        new_id[oid] = i + 1
    out.next_id = len(order) + 1
    for oid in order:
        obj = smg.objects[oid]
        out.objects[new_id[oid]] = Obj(obj.kind, obj.size, obj.validity, obj.storage,
                                       rank[oid], obj.min_len, obj.next_off, obj.prev_off)
    out.next_seq = len(order) + 1
    vmap: dict[int, int] = {NULL: NULL}

    def value(vid: int) -> int:
        if vid in vmap:
            return vmap[vid]
        val = smg.values[vid]
        if val.kind is ValKind.PTR:
            edge = smg.pt[vid]
            nv = out.addr(new_id[edge.target], edge.offset, edge.spec)
        elif val.kind is ValKind.DATA:
            nv = out.data(val.interval)
        else:
            nv = out.unknown()
        vmap[vid] = nv
        return nv

    for oid in order:
        fmap = smg.get_fields(oid)
        if fmap:
            out.fields[new_id[oid]] = {k: value(fmap[k]) for k in sorted(fmap)}
    out.roots = {name: new_id[oid] for name, oid in sorted(smg.roots.items())}
    return out.freeze()


def _fmt_code(code: tuple) -> str:
    if code[0] == "c":
        return str(code[1])
    if code[0] == "p":
        _, target, off, spec = code
        return f"&o{target}{_fmt_off(off)}" + ("" if spec == "whole" else f"/{spec}")
    return f"v{code[1]}"


def _fmt_off(off: tuple) -> str:
    lo, hi = off
    if lo == hi:
        return f"+{int(lo)}" if lo else ""
    return f"+{Interval(lo, hi)}"


def dump(smg: SMG) -> str:
    """Deterministic line-per-node text form used by golden tests and the CLI."""
    roots, objs, vinfo = canonical_key(smg)
    lines = []
    for name, c in roots:
        lines.append(f"root {':'.join(map(str, name))} -> o{c}")
    for i, (kind, size, validity, storage, rank, min_len, next_off, prev_off,
            fields) in enumerate(objs, start=1):
        desc = f"o{i} {kind}"
        if kind != Kind.REGION.value:
            desc += f"({min_len}+) next={next_off}"
            if prev_off is not None:
                desc += f" prev={prev_off}"
        desc += f" size={Interval(*size)} {validity} {storage[0]}"
        if storage[0] == "stack":
            desc += f"({storage[1]}#{storage[3]}.{storage[2]})"
        elif storage[0] == "static":
            desc += f"({storage[2]})"
        desc += f" seq={rank}"
        lines.append(desc)
        for off, width, code in fields:
            lines.append(f"  o{i}[{off}:{width}] = {_fmt_code(code)}")
    for info in vinfo:
        if info[1] == "ptr":
            n, _, target, off, spec = info
            lines.append(f"value v{n} ptr -> o{target}{_fmt_off(off)}"
                         + ("" if spec == "whole" else f"/{spec}"))
        else:
            n, kind, iv = info
            lines.append(f"value v{n} {kind} {Interval(*iv)}")
    return "\n".join(lines)
