"""Entailment and join of SMGs.

``entails(a, b)`` walks both graphs from their roots in lock step and builds a
mapping from the objects of ``a`` onto the objects of ``b``: regions map to
regions one-to-one, and a segment of ``b`` absorbs a (possibly empty) chain of
nodes of ``a``.  Choices between chain lengths are resolved by backtracking.
The check is sound but incomplete.

``join(a, b)`` builds a common upper bound by a simultaneous traversal and
checks the result with ``entails`` from both sides before returning it.
"""

from __future__ import annotations

from collections import Counter
from typing import Optional

from .abstraction import (
    ABSTRACTION_MIN_LEN, PTR_WIDTH, _backward, _forward, abstract_state, data_fields,
    field_view,
)
from .canon import canonical_key
from .interval import Interval
from .smg import NULL, NULL_OBJ, SMG, Kind, Spec, ValKind


class Incompatible(Exception):
    """The two graphs have diverging shapes and cannot be joined."""


# -- entailment -------------------------------------------------------------------------

class _St:
    __slots__ = ("omap", "bused", "chains", "vmap", "pending")

    def __init__(self):
        self.omap: dict[int, int] = {NULL_OBJ: NULL_OBJ}
        self.bused: dict[int, int] = {NULL_OBJ: NULL_OBJ}
        self.chains: dict[int, tuple[int, ...]] = {}
        self.vmap: dict[int, int] = {}
        self.pending: list[tuple[int, int]] = []

    def copy(self) -> _St:
        new = _St.__new__(_St)
        new.omap = dict(self.omap)
        new.bused = dict(self.bused)
        new.chains = dict(self.chains)
        new.vmap = dict(self.vmap)
        new.pending = list(self.pending)
        return new


def _is_unknown(smg: SMG, vid: int) -> bool:
    return vid != NULL and smg.values[vid].kind is ValKind.UNKNOWN


class _Matcher:
    def __init__(self, a: SMG, b: SMG):
        self.a, self.b = a, b
        self.b_uses = Counter(v for fmap in b.fields.values() for v in fmap.values())

    # values

    def match_value(self, st: _St, va: int, vb: int) -> list[_St]:
        a, b = self.a, self.b
        if vb == NULL:
            return [st] if va == NULL else []
        bval = b.values[vb]
        if bval.kind is ValKind.PTR:
            if va == NULL:
                # null can only stand for a pointer to an empty segment
                if not b.objects[b.pt[vb].target].is_segment:
                    return []
            elif not a.is_pointer(va):
                return []
            if not self._share(st, va, vb):
                return []
            return self.match_ptr(st, va, vb)
        if bval.kind is not ValKind.UNKNOWN:
            ia = a.interval_of(va)
            if ia is None or not ia.issubset(bval.interval):
                return []
            if bval.interval.is_singleton:
                return [st]
        return [st] if self._share(st, va, vb) else []

    @staticmethod
    def _share(st: _St, va: int, vb: int) -> bool:
        prev = st.vmap.get(vb)
        if prev is None:
            st.vmap[vb] = va
            return True
        return prev == va

    def match_ptr(self, st: _St, va: int, vb: int) -> list[_St]:
        a, b = self.a, self.b
        ea, eb = a.pt[va], b.pt[vb]
        tb = b.objects[eb.target]
        ta = a.objects[ea.target]
        if tb.kind is Kind.REGION:
            if ta.kind is not Kind.REGION or not ea.offset.issubset(eb.offset):
                return []
            return self.map_region(st, ea.target, eb.target)
        if eb.spec is Spec.FIRST:
            return self.seg_first(st, va, vb)
        if eb.spec is Spec.LAST:
            return self.seg_last(st, va, vb)
        return []

    # regions

    def map_region(self, st: _St, oa: int, ob: int) -> list[_St]:
        if oa in st.omap:
            return [st] if st.omap[oa] == ob and st.bused.get(ob) == oa else []
        if ob in st.bused:
            return []
        A, B = self.a.objects[oa], self.b.objects[ob]
        if (A.kind is not Kind.REGION or B.kind is not Kind.REGION
                or not A.size.issubset(B.size) or A.validity is not B.validity
                or A.storage != B.storage):
            return []
        st.omap[oa] = ob
        st.bused[ob] = oa
        for (off, width), vb in self.b.get_fields(ob).items():
            if not self._push_field(st, self.a.field_at(oa, off, width), vb):
                return []
        return [st]

    def _push_field(self, st: _St, va: Optional[int], vb: Optional[int]) -> bool:
        if vb is None:
            return True
        if va is None:
            # an undefined field only fits an unconstrained, unshared value
            return _is_unknown(self.b, vb) and self.b_uses[vb] <= 1
        st.pending.append((va, vb))
        return True

    # segments

    def _fits_template(self, x: int, seg: int) -> bool:
        a, b = self.a, self.b
        S = b.objects[seg]
        templates = data_fields(b, seg, S.kind, S.next_off, S.prev_off)
        if templates is None:
            return False
        for (off, width), vt in templates.items():
            av = a.field_at(x, off, width)
            if vt == NULL:
                if av != NULL:
                    return False
            elif b.values[vt].kind is ValKind.UNKNOWN:
                continue
            else:
                if av is None:
                    return False
                ia = a.interval_of(av)
                if ia is None or not ia.issubset(b.values[vt].interval):
                    return False
        return True

    def _node_ok(self, st: _St, x: int, seg: int, chain: list[int]) -> bool:
        A = self.a.objects[x]
        S = self.b.objects[seg]
        if x in st.omap or x in chain or not A.is_valid_heap:
            return False
        if A.kind is Kind.REGION:
            if not A.size.issubset(S.size):
                return False
        elif (A.kind is not S.kind or A.next_off != S.next_off
              or A.prev_off != S.prev_off or A.size != S.size):
            return False
        return self._fits_template(x, seg)

    def chain_options(self, st: _St, start: int, seg: int,
                      end: Spec = Spec.FIRST) -> list[tuple[int, ...]]:
        """Chains of ``a`` that ``seg`` may absorb, starting at its ``end``.

        Longest first; every chain is returned in list order.
        """
        a = self.a
        S = self.b.objects[seg]
        forward = end is Spec.FIRST
        chain: list[int] = []
        options = []
        total = 0
        cur: Optional[int] = start
        while cur is not None and self._node_ok(st, cur, seg, chain):
            if chain and S.kind is Kind.DLS:
                if forward and _backward(a, cur, S.prev_off) != chain[-1]:
                    break
                if not forward and _forward(a, cur, S.next_off) != chain[-1]:
                    break
            chain.append(cur)
            obj = a.objects[cur]
            total += 1 if obj.kind is Kind.REGION else obj.min_len
            if total >= S.min_len:
                options.append(tuple(chain) if forward else tuple(reversed(chain)))
            cur = (_forward(a, cur, S.next_off) if forward
                   else _backward(a, cur, S.prev_off))
        options.reverse()
        return options

    def seg_first(self, st: _St, va: int, vb: int) -> list[_St]:
        a, b = self.a, self.b
        ea, eb = a.pt[va], b.pt[vb]
        seg = eb.target
        S = b.objects[seg]
        if seg in st.chains:
            chain = st.chains[seg]
            if not chain:
                return self._via_empty(st, va, eb, S.next_off)
            return [st] if self._at_end(ea, eb, chain[0], Spec.FIRST) else []
        alts = []
        if self._at_end(ea, eb, ea.target, Spec.FIRST):
            for chain in self.chain_options(st, ea.target, seg):
                new = st.copy()
                if self._assign(new, seg, chain):
                    alts.append(new)
        if S.min_len == 0:
            new = st.copy()
            new.chains[seg] = ()
            alts.extend(self._via_empty(new, va, eb, S.next_off))
        return alts

    def seg_last(self, st: _St, va: int, vb: int) -> list[_St]:
        a, b = self.a, self.b
        ea, eb = a.pt[va], b.pt[vb]
        seg = eb.target
        S = b.objects[seg]
        if seg in st.chains:
            chain = st.chains[seg]
            if not chain:
                return self._via_empty(st, va, eb, S.prev_off)
            return [st] if self._at_end(ea, eb, chain[-1], Spec.LAST) else []
        alts = []
        if self._at_end(ea, eb, ea.target, Spec.LAST):
            for chain in self.chain_options(st, ea.target, seg, Spec.LAST):
                new = st.copy()
                if self._assign(new, seg, chain):
                    alts.append(new)
        if S.min_len == 0:
            new = st.copy()
            new.chains[seg] = ()
            alts.extend(self._via_empty(new, va, eb, S.prev_off))
        return alts

    def _at_end(self, ea, eb, node: int, end: Spec) -> bool:
        if ea.target != node or not ea.offset.issubset(eb.offset):
            return False
        obj = self.a.objects[node]
        if obj.kind is Kind.REGION:
            return ea.spec is Spec.WHOLE
        if obj.kind is Kind.SLS:
            return ea.spec is Spec.FIRST and end is Spec.FIRST
        return ea.spec is end

    def _via_empty(self, st: _St, va: int, eb, link_off: int) -> list[_St]:
        """A pointer to an empty segment equals the segment's neighbour link."""
        if eb.offset != Interval(0, 0):
            return []
        neighbour = self.b.field_at(eb.target, link_off, PTR_WIDTH)
        if neighbour is None:
            return []
        st.pending.append((va, neighbour))
        return [st]

    def _assign(self, st: _St, seg: int, chain: tuple[int, ...]) -> bool:
        a, b = self.a, self.b
        S = b.objects[seg]
        st.chains[seg] = chain
        for x in chain:
            st.omap[x] = seg
        nkey = (S.next_off, PTR_WIDTH)
        if not self._push_field(st, a.field_at(chain[-1], *nkey), b.field_at(seg, *nkey)):
            return False
        if S.kind is Kind.DLS:
            pkey = (S.prev_off, PTR_WIDTH)
            if not self._push_field(st, a.field_at(chain[0], *pkey), b.field_at(seg, *pkey)):
                return False
        return True

    # search

    def solve(self, st: _St) -> bool:
        while True:
            if st.pending:
                va, vb = st.pending.pop()
                alts = self.match_value(st, va, vb)
                if len(alts) == 1 and alts[0] is st:
                    continue
                return any(self.solve(alt) for alt in alts)
            return self.final(st)

    def final(self, st: _St) -> bool:
        a, b = self.a, self.b
        if any(oa not in st.omap for oa in a.objects):
            return False
        for ob, obj in b.objects.items():
            if obj.kind is Kind.REGION:
                if ob not in st.bused:
                    return False
            elif ob not in st.chains:
                return False
        # every "invalid allocated after valid" fact of b must hold in a
        regions = [ob for ob, o in b.objects.items() if o.kind is Kind.REGION and ob != NULL_OBJ]
        for v in regions:
            if not b.objects[v].is_valid:
                continue
            for i in regions:
                if b.objects[i].is_valid or b.objects[i].seq < b.objects[v].seq:
                    continue
                if a.objects[st.bused[i]].seq < a.objects[st.bused[v]].seq:
                    return False
        return True


def entails(a: SMG, b: SMG) -> bool:
    """True only if every concrete heap described by ``a`` is described by ``b``."""
    if a is b:
        return True
    if set(a.roots) != set(b.roots):
        return False
    if canonical_key(a) == canonical_key(b):
        return True
    matcher = _Matcher(a, b)
    st = _St()
    for name in sorted(a.roots):
        if not matcher.map_region(st, a.roots[name], b.roots[name]):
            return False
    return matcher.solve(st)


# -- join --------------------------------------------------------------------------------------

class _Joiner:
    def __init__(self, a: SMG, b: SMG):
        self.a, self.b = a, b
        self.r = SMG(a.bound)
        self.pair: dict[tuple[int, int], int] = {(NULL_OBJ, NULL_OBJ): NULL_OBJ}
        self.amap: dict[int, int] = {NULL_OBJ: NULL_OBJ}
        self.bmap: dict[int, int] = {NULL_OBJ: NULL_OBJ}
        self.origin: dict[int, int] = {}
        self.memo: dict[tuple[int, int], int] = {(NULL, NULL): NULL}
        self.todo: list[tuple[int, int, int]] = []

    def obj(self, oa: int, ob: int) -> int:
        ro = self.pair.get((oa, ob))
        if ro is not None:
            return ro
        if oa in self.amap or ob in self.bmap:
            raise Incompatible("object paired twice")
        A, B = self.a.objects[oa], self.b.objects[ob]
        if A.validity is not B.validity or A.storage != B.storage or A.size != B.size:
            raise Incompatible("objects differ")
        r = self.r
        if A.kind is Kind.REGION and B.kind is Kind.REGION:
            ro = r.add_object(Kind.REGION, A.size, A.storage, A.validity)
        else:
            seg = A if A.is_segment else B
            for o in (A, B):
                if o.is_segment and (o.kind is not seg.kind or o.next_off != seg.next_off
                                     or o.prev_off != seg.prev_off):
                    raise Incompatible("segment kinds differ")
            lens = [1 if o.kind is Kind.REGION else o.min_len for o in (A, B)]
            min_len = min(min(lens), ABSTRACTION_MIN_LEN)
            ro = r.add_object(seg.kind, A.size, A.storage, min_len=min_len,
                              next_off=seg.next_off, prev_off=seg.prev_off)
        self.pair[(oa, ob)] = ro
        self.amap[oa] = ro
        self.bmap[ob] = ro
        self.origin[ro] = oa
        self.todo.append((oa, ob, ro))
        return ro

    def value(self, va: int, vb: int) -> int:
        key = (va, vb)
        if key in self.memo:
            return self.memo[key]
        a, b, r = self.a, self.b, self.r
        pa = va != NULL and a.is_pointer(va)
        pb = vb != NULL and b.is_pointer(vb)
        if pa and pb:
            out = self._pointer(va, vb)
        elif pa or pb:
            raise Incompatible("pointer against data")
        elif _is_unknown(a, va) or _is_unknown(b, vb):
            out = r.unknown()
        else:
            out = r.data(a.interval_of(va).hull(b.interval_of(vb), r.bound))
        self.memo[key] = out
        return out

    def _pointer(self, va: int, vb: int) -> int:
        ea, eb = self.a.pt[va], self.b.pt[vb]
        ro = self.obj(ea.target, eb.target)
        specs = set()
        for smg, e in ((self.a, ea), (self.b, eb)):
            if smg.objects[e.target].is_segment:
                specs.add(e.spec)
        if len(specs) > 1:
            raise Incompatible("pointers to different segment ends")
        spec = specs.pop() if specs else Spec.WHOLE
        if ea.offset == eb.offset:
            offset = ea.offset
        else:
            offset = ea.offset.hull(eb.offset, self.r.bound)
        return self.r.addr(ro, offset, spec)

    def _template(self, va: int, vb: int) -> int:
        a, b, r = self.a, self.b, self.r
        for smg, v in ((a, va), (b, vb)):
            if v != NULL and smg.is_pointer(v):
                raise Incompatible("pointer in a list node payload")
        if _is_unknown(a, va) or _is_unknown(b, vb):
            return r.unknown()
        return r.data(a.interval_of(va).hull(b.interval_of(vb), r.bound))

    def fill(self, oa: int, ob: int, ro: int) -> None:
        a, b, r = self.a, self.b, self.r
        R = r.objects[ro]
        fields = {}
        if R.kind is Kind.REGION:
            cuts = set()
            for smg, o in ((a, oa), (b, ob)):
                for off, width in smg.get_fields(o):
                    cuts.update((off, off + width))
            fa, fb = field_view(a, oa, cuts), field_view(b, ob, cuts)
            if fa is None or fb is None:
                raise Incompatible("field layouts differ")
            for key in sorted(set(fa) & set(fb)):
                fields[key] = self.value(fa[key], fb[key])
        else:
            links = [(R.next_off, PTR_WIDTH)]
            if R.kind is Kind.DLS:
                links.append((R.prev_off, PTR_WIDTH))
            for key in links:
                va, vb = a.field_at(oa, *key), b.field_at(ob, *key)
                if va is not None and vb is not None:
                    fields[key] = self.value(va, vb)
            ta = data_fields(a, oa, R.kind, R.next_off, R.prev_off)
            tb = data_fields(b, ob, R.kind, R.next_off, R.prev_off)
            if ta is None or tb is None:
                raise Incompatible("link fields overlap data")
            for key in sorted(set(ta) & set(tb)):
                fields[key] = self._template(ta[key], tb[key])
        r.set_fields(ro, fields)

    def run(self) -> SMG:
        a, b, r = self.a, self.b, self.r
        if set(a.roots) != set(b.roots):
            raise Incompatible("different variables")
        for name in sorted(a.roots):
            r.roots[name] = self.obj(a.roots[name], b.roots[name])
        while self.todo:
            self.fill(*self.todo.pop())
        order = sorted(self.origin, key=lambda ro: a.objects[self.origin[ro]].seq)
        for rank, ro in enumerate(order, start=1):
            r.update_object(ro, seq=rank)
        r.next_seq = len(order) + 1
        r.prune()
        return r.freeze()


def _pairwise(a: SMG, b: SMG) -> Optional[SMG]:
    try:
        result = _Joiner(a, b).run()
    except Incompatible:
        return None
    if entails(a, result) and entails(b, result):
        return result
    return None


def join(a: SMG, b: SMG) -> Optional[SMG]:
    """Upper bound of two graphs, or None when their shapes are incompatible.

    Concrete chains of different lengths cannot be paired node by node, so a
    failed attempt is retried once on the abstracted inputs.
    """
    if entails(a, b):
        return b
    if entails(b, a):
        return a
    result = _pairwise(a, b)
    if result is not None:
        return result
    fa, fb = abstract_state(a), abstract_state(b)
    if fa is a and fb is b:
        return None
    if entails(fa, fb):
        return fb
    if entails(fb, fa):
        return fa
    return _pairwise(fa, fb)


__all__ = ["entails", "join", "Incompatible"]
