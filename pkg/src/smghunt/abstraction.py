"""List-segment abstraction: candidate search, folding and materialization.

A chain is a sequence of valid heap nodes (regions or segments of the same
shape) linked through a pointer field at a fixed offset, pointing at offset 0
of the next node.  Doubly linked chains also carry a back link.  A chain is
uninterrupted when only its head (and, for doubly linked chains, its tail) is
pointed to from outside the chain.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .interval import Interval
from .smg import (
    HEAP, NULL, NULL_OBJ, SMG, Kind, Spec, ValKind,
)

ABSTRACTION_MIN_LEN = 2
PTR_WIDTH = 8


@dataclass(frozen=True)
class Candidate:
    kind: Kind
    next_off: int
    prev_off: Optional[int]
    chain: tuple[int, ...]

    @property
    def head(self) -> int:
        return self.chain[0]


# -- field views ----------------------------------------------------------------------

def field_view(smg: SMG, oid: int, cuts) -> Optional[dict[tuple[int, int], int]]:
    """Fields of ``oid`` with zero runs split at the given byte offsets.

    Returns None when a cut falls inside a non-zero field.
    """
    view: dict[tuple[int, int], int] = {}
    for (off, width), vid in smg.get_fields(oid).items():
        end = off + width
        inner = sorted(c for c in cuts if off < c < end)
        if inner and vid != NULL:
            return None
        bounds = [off, *inner, end]
        for lo, hi in zip(bounds, bounds[1:]):
            view[(lo, hi - lo)] = vid
    return view


def _link_keys(kind: Kind, next_off: int, prev_off: Optional[int]) -> set:
    keys = {(next_off, PTR_WIDTH)}
    if kind is Kind.DLS:
        keys.add((prev_off, PTR_WIDTH))
    return keys


def _cuts(next_off: int, prev_off: Optional[int]) -> set[int]:
    cuts = {next_off, next_off + PTR_WIDTH}
    if prev_off is not None:
        cuts |= {prev_off, prev_off + PTR_WIDTH}
    return cuts


def data_fields(smg: SMG, oid: int, kind: Kind, next_off: int,
                prev_off: Optional[int]) -> Optional[dict]:
    """Non-link fields of a list node, or None if the links are not clean fields."""
    view = field_view(smg, oid, _cuts(next_off, prev_off))
    if view is None:
        return None
    for key in _link_keys(kind, next_off, prev_off):
        view.pop(key, None)
    return view


def _is_data_like(smg: SMG, vid: int) -> bool:
    return smg.interval_of(vid) is not None or smg.values[vid].kind is ValKind.UNKNOWN


def _templates_compatible(smg: SMG, views: list[dict]) -> bool:
    keys = set(views[0])
    if any(set(v) != keys for v in views[1:]):
        return False
    for view in views:
        for vid in view.values():
            if not _is_data_like(smg, vid):
                return False  # nested or shared structures are not summarized
    return True


def join_template_values(src: SMG, vids: list[int], dst: SMG) -> int:
    """Fresh value in ``dst`` over-approximating every value in ``vids``."""
    intervals = []
    for vid in vids:
        iv = src.interval_of(vid)
        if iv is None or src.values[vid].kind is ValKind.UNKNOWN:
            return dst.unknown()
        intervals.append(iv)
    hull = intervals[0]
    for iv in intervals[1:]:
        hull = hull.hull(iv, dst.bound)
    return dst.data(hull)


# -- links --------------------------------------------------------------------------------

def _node_shape(smg: SMG, oid: int):
    obj = smg.objects[oid]
    if not obj.is_valid_heap or not obj.size.is_singleton:
        return None
    return obj


def _forward(smg: SMG, oid: int, next_off: int) -> Optional[int]:
    """Target of the forward link of a node, if it is a proper link."""
    vid = smg.get_fields(oid).get((next_off, PTR_WIDTH))
    if vid is None or vid == NULL:
        return None
    edge = smg.pt.get(vid)
    if edge is None or edge.offset != Interval(0, 0):
        return None
    target = smg.objects[edge.target]
    if target.kind is Kind.REGION and edge.spec is Spec.WHOLE:
        return edge.target
    if target.is_segment and edge.spec is Spec.FIRST:
        return edge.target
    return None


def _backward(smg: SMG, oid: int, prev_off: int) -> Optional[int]:
    vid = smg.get_fields(oid).get((prev_off, PTR_WIDTH))
    if vid is None or vid == NULL:
        return None
    edge = smg.pt.get(vid)
    if edge is None or edge.offset != Interval(0, 0):
        return None
    target = smg.objects[edge.target]
    if target.kind is Kind.REGION and edge.spec is Spec.WHOLE:
        return edge.target
    if target.kind is Kind.DLS and edge.spec is Spec.LAST:
        return edge.target
    return None


def _shape_matches(smg: SMG, oid: int, kind: Kind, next_off: int,
                   prev_off: Optional[int], size: Interval) -> bool:
    obj = _node_shape(smg, oid)
    if obj is None or obj.size != size:
        return False
    if obj.kind is Kind.REGION:
        return True
    return obj.kind is kind and obj.next_off == next_off and obj.prev_off == prev_off


def _incoming_by_end(smg: SMG, incoming, oid: int):
    """Split incoming edges of a node into (first-end, last-end) lists."""
    first, last = [], []
    obj = smg.objects[oid]
    for src, key, vid in incoming.get(oid, ()):
        spec = smg.pt[vid].spec
        if obj.kind is Kind.DLS and spec is Spec.LAST:
            last.append((src, key, vid))
        else:
            first.append((src, key, vid))
    return first, last


def _chains_for(smg: SMG, incoming, kind: Kind, next_off: int,
                prev_off: Optional[int], size: Interval) -> list[tuple[int, ...]]:
    nodes = sorted(o for o in smg.objects
                   if _shape_matches(smg, o, kind, next_off, prev_off, size))
    node_set = set(nodes)
    edges: dict[int, tuple[int, bool]] = {}  # x -> (y, y must end the chain)
    for x in nodes:
        y = _forward(smg, x, next_off)
        if y is None or y == x or y not in node_set:
            continue
        link = (x, (next_off, PTR_WIDTH))
        if kind is Kind.SLS:
            into_y = incoming.get(y, [])
            if [(s, k) for s, k, _ in into_y] != [link]:
                continue
            edges[x] = (y, False)
        else:
            if _backward(smg, y, prev_off) != x:
                continue
            y_first, _ = _incoming_by_end(smg, incoming, y)
            x_first, x_last = _incoming_by_end(smg, incoming, x)
            back = (y, (prev_off, PTR_WIDTH))
            if smg.objects[x].kind is Kind.DLS:
                if [(s, k) for s, k, _ in x_last] != [back]:
                    continue
            y_obj = smg.objects[y]
            others = [(s, k) for s, k, _ in y_first if (s, k) != link]
            if y_obj.kind is Kind.DLS:
                if others:
                    continue
                edges[x] = (y, False)
            else:
                # a region reached forward may still be pointed to by its own
                # successor's back link; anything else makes it the chain tail
                z = _forward(smg, y, next_off)
                allowed = set()
                if z is not None and z in node_set:
                    allowed.add((z, (prev_off, PTR_WIDTH)))
                external = [e for e in others if e not in allowed]
                edges[x] = (y, bool(external))
    has_pred = {y for y, _ in edges.values()}
    starts = [x for x in nodes if x in edges and x not in has_pred]
    # cycles: start at the smallest unclaimed node
    chains = []
    claimed: set[int] = set()

    def walk(start: int):
        chain = [start]
        seen = {start}
        cur = start
        while cur in edges:
            nxt, terminal = edges[cur]
            if nxt in seen or nxt in claimed:
                break
            chain.append(nxt)
            seen.add(nxt)
            cur = nxt
            if terminal:
                break
        return chain

    for start in starts:
        if start in claimed:
            continue
        chain = walk(start)
        claimed.update(chain)
        chains.append(chain)
    for x in nodes:
        if x in edges and x not in claimed:
            chain = walk(x)
            claimed.update(chain)
            chains.append(chain)
    result = []
    for chain in chains:
        chain = _trim_interrupted(smg, incoming, kind, next_off, prev_off, chain)
        if chain is None:
            continue
        total = sum(1 if smg.objects[o].kind is Kind.REGION else 1 for o in chain)
        if total >= ABSTRACTION_MIN_LEN:
            result.append(tuple(chain))
    return result


def _trim_interrupted(smg, incoming, kind, next_off, prev_off, chain):
    """Enforce the DLS interior back-link rule and template compatibility."""
    if kind is Kind.DLS:
        # an interior region must be pointed to only by its neighbours' links
        for i in range(1, len(chain) - 1):
            x = chain[i]
            if smg.objects[x].kind is not Kind.REGION:
                continue
            allowed = {(chain[i - 1], (next_off, PTR_WIDTH)),
                       (chain[i + 1], (prev_off, PTR_WIDTH))}
            got = {(s, k) for s, k, _ in incoming.get(x, ())}
            if got != allowed:
                return _trim_interrupted(smg, incoming, kind, next_off, prev_off,
                                         chain[:i + 1])
    views = [data_fields(smg, o, kind, next_off, prev_off) for o in chain]
    if any(v is None for v in views):
        return None
    if not _templates_compatible(smg, views):
        return None
    return chain


def _configs(smg: SMG) -> list[tuple[Kind, int, Optional[int], Interval]]:
    configs = set()
    for oid, obj in smg.objects.items():
        if _node_shape(smg, oid) is None:
            continue
        if obj.is_segment:
            configs.add((obj.kind, obj.next_off, obj.prev_off, obj.size))
            continue
        for (off, width), vid in smg.get_fields(oid).items():
            if width != PTR_WIDTH:
                continue
            y = _forward(smg, oid, off)
            if y is None or y == oid or _node_shape(smg, y) is None:
                continue
            if smg.objects[y].size != obj.size:
                continue
            configs.add((Kind.SLS, off, None, obj.size))
            for (poff, pw) in smg.get_fields(y):
                if pw == PTR_WIDTH and poff != off and _backward(smg, y, poff) == oid:
                    configs.add((Kind.DLS, off, poff, obj.size))
    return sorted(configs, key=lambda c: (c[0] is Kind.SLS, c[1], c[2] or 0, c[3].key()))


def find_candidates(smg: SMG) -> list[Candidate]:
    """All maximal uninterrupted chains, longest first; DLS before SLS on ties."""
    incoming = smg.incoming()
    found = []
    for kind, next_off, prev_off, size in _configs(smg):
        for chain in _chains_for(smg, incoming, kind, next_off, prev_off, size):
            found.append(Candidate(kind, next_off, prev_off, chain))
    found.sort(key=lambda c: (-len(c.chain), c.kind is Kind.SLS, c.next_off, c.chain))
    return found


# -- fold -------------------------------------------------------------------------------------

def _min_len(smg: SMG, oid: int) -> int:
    obj = smg.objects[oid]
    return 1 if obj.kind is Kind.REGION else obj.min_len


def fold_inplace(smg: SMG, cand: Candidate) -> int:
    chain = cand.chain
    head, tail = chain[0], chain[-1]
    size = smg.objects[head].size
    total = sum(_min_len(smg, o) for o in chain)
    seg = smg.add_object(cand.kind, size, HEAP, min_len=total,
                         next_off=cand.next_off, prev_off=cand.prev_off)
    views = [data_fields(smg, o, cand.kind, cand.next_off, cand.prev_off) for o in chain]
    fields = {}
    for key in views[0]:
        fields[key] = join_template_values(smg, [v[key] for v in views], smg)
    nkey = (cand.next_off, PTR_WIDTH)
    cont = smg.field_at(tail, *nkey)
    if cont is not None:
        fields[nkey] = cont
    if cand.kind is Kind.DLS:
        pkey = (cand.prev_off, PTR_WIDTH)
        back = smg.field_at(head, *pkey)
        if back is not None:
            fields[pkey] = back
    smg.set_fields(seg, fields)
    members = set(chain)
    for vid, edge in list(smg.pt.items()):
        if edge.target not in members:
            continue
        obj = smg.objects[edge.target]
        if edge.target == head and (obj.kind is Kind.REGION or edge.spec is Spec.FIRST):
            smg.retarget(vid, seg, edge.offset, Spec.FIRST)
        elif (cand.kind is Kind.DLS and edge.target == tail
              and (obj.kind is Kind.REGION or edge.spec is Spec.LAST)):
            smg.retarget(vid, seg, edge.offset, Spec.LAST)
    for oid in chain:
        smg.remove_object(oid)
    leaked = smg.prune()
    assert not leaked, "folding must not lose reachable memory"
    return seg


def fold(smg: SMG, cand: Candidate) -> SMG:
    new = smg.clone()
    fold_inplace(new, cand)
    return new.freeze()


def abstract_state(smg: SMG) -> SMG:
    """Fold candidates until none remain (each fold removes at least one object)."""
    cands = find_candidates(smg)
    if not cands:
        return smg
    new = smg.clone()
    while cands:
        fold_inplace(new, cands[0])
        cands = find_candidates(new)
    return new.freeze()


# -- materialization ---------------------------------------------------------------------------

def _instantiate_templates(smg: SMG, seg: int, region: int) -> None:
    obj = smg.objects[seg]
    view = data_fields(smg, seg, obj.kind, obj.next_off, obj.prev_off) or {}
    fields = {}
    for key, vid in view.items():
        val = smg.values[vid]
        if val.kind is ValKind.UNKNOWN:
            fields[key] = smg.unknown()
        elif vid == NULL or val.interval.is_singleton:
            fields[key] = vid
        else:
            fields[key] = smg.data(val.interval)
    smg.set_fields(region, fields)


def _shift(smg: SMG, vid: Optional[int], delta: Interval) -> int:
    """Pointer ``vid`` moved by ``delta`` bytes (unknown if undefined)."""
    if vid is None:
        return smg.unknown()
    if delta == Interval(0, 0):
        return vid
    edge = smg.pt.get(vid)
    if edge is None:
        return smg.unknown()
    from .interval import add
    return smg.addr(edge.target, add(edge.offset, delta, smg.bound), edge.spec)


def materialize_inplace(smg: SMG, seg: int, end: Spec) -> int:
    """Split one concrete node off ``end`` of a segment; returns the new region."""
    obj = smg.objects[seg]
    if end is Spec.LAST and obj.kind is not Kind.DLS:
        raise ValueError("only doubly linked segments have a last end")
    nkey = (obj.next_off, PTR_WIDTH)
    pkey = (obj.prev_off, PTR_WIDTH) if obj.kind is Kind.DLS else None
    region = smg.add_region(obj.size)
    _instantiate_templates(smg, seg, region)
    for vid, edge in list(smg.pt.items()):
        if edge.target == seg and edge.spec is end:
            smg.retarget(vid, region, edge.offset, Spec.WHOLE)
    smg.update_object(seg, min_len=max(0, obj.min_len - 1))
    if end is Spec.FIRST:
        link = smg.addr(seg, 0, Spec.FIRST)
        smg.set_field(region, *nkey, link)
        if pkey is not None:
            back = smg.field_at(seg, *pkey)
            if back is not None:
                smg.set_field(region, *pkey, back)
            smg.set_field(seg, *pkey, smg.addr(region, 0))
    else:
        link = smg.addr(seg, 0, Spec.LAST)
        smg.set_field(region, *pkey, link)
        cont = smg.field_at(seg, *nkey)
        if cont is not None:
            smg.set_field(region, *nkey, cont)
        smg.set_field(seg, *nkey, smg.addr(region, 0))
    smg.prune()
    return region


def remove_empty_inplace(smg: SMG, seg: int) -> None:
    """Drop a segment assumed empty, redirecting pointers to its neighbours."""
    obj = smg.objects[seg]
    if obj.min_len > 0:
        raise ValueError("segment cannot be empty")
    cont = smg.field_at(seg, obj.next_off, PTR_WIDTH)
    back = (smg.field_at(seg, obj.prev_off, PTR_WIDTH)
            if obj.kind is Kind.DLS else None)
    for vid, edge in list(smg.pt.items()):
        if edge.target != seg or vid not in smg.values:
            continue
        repl = _shift(smg, back if edge.spec is Spec.LAST else cont, edge.offset)
        smg.replace_value(vid, repl)
    smg.remove_object(seg)
    smg.prune()


def materialize(smg: SMG, seg: int, end: Spec = Spec.FIRST) -> list[SMG]:
    """Case split so that the node at ``end`` of a segment becomes concrete."""
    cases = []
    new = smg.clone()
    materialize_inplace(new, seg, end)
    cases.append(new.freeze())
    if smg.objects[seg].min_len == 0:
        empty = smg.clone()
        remove_empty_inplace(empty, seg)
        cases.append(empty.freeze())
    return cases


def split_empty(smg: SMG, seg: int) -> list[SMG]:
    """Case split a possibly-empty segment into non-empty and empty variants."""
    if smg.objects[seg].min_len > 0:
        return [smg]
    nonempty = smg.clone()
    nonempty.update_object(seg, min_len=1)
    empty = smg.clone()
    remove_empty_inplace(empty, seg)
    return [nonempty.freeze(), empty.freeze()]


__all__ = [
    "ABSTRACTION_MIN_LEN", "Candidate", "find_candidates", "fold", "abstract_state",
    "materialize", "split_empty", "field_view", "data_fields", "PTR_WIDTH",
    "NULL_OBJ",
]
