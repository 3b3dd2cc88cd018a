from __future__ import annotations

import pytest

from abs_checks import check_pairs, check_single, small_family
from shapes import DLL, SLL, build_list, concretize
from smghunt.abstraction import (
    ABSTRACTION_MIN_LEN, abstract_state, find_candidates, fold, materialize,
)
from smghunt.entail import entails, join
from smghunt.interval import Interval
from smghunt.smg import NULL, SMG, Kind, Spec, Storage, StorageKind


def root_value(g: SMG, name: str) -> int:
    return g.field_at(g.roots[("s", 0, name)], 0, 8)


def segments(g: SMG):
    return [o for o in g.objects.values() if o.is_segment]


class TestFindCandidates:
    def test_three_chain(self):
        g = build_list(SLL, "RRR")
        cands = find_candidates(g)
        assert len(cands) == 1
        c = cands[0]
        assert c.kind is Kind.SLS and c.next_off == 0 and len(c.chain) == 3
        # the chain follows the next links from the node the root points at
        assert c.head == g.pt[root_value(g, "h")].target

    def test_interrupted_chain(self):
        g = build_list(SLL, "RRR", interior=1)
        middle = g.pt[root_value(g, "x")].target
        for c in find_candidates(g):
            assert middle not in c.chain[1:]
            assert len(c.chain) < 3

    def test_empty_heap(self):
        assert find_candidates(SMG().freeze()) == []

    def test_longest_first(self):
        s = build_list(SLL, "RRRR", interior=2).clone()
        cands = find_candidates(s.freeze())
        lengths = [len(c.chain) for c in cands]
        assert lengths == sorted(lengths, reverse=True)

    def test_short_chain_ignored(self):
        assert find_candidates(build_list(SLL, "R")) == []
        assert ABSTRACTION_MIN_LEN == 2


class TestFold:
    def test_sll(self):
        g = build_list(SLL, "RRR", 1)
        f = fold(g, find_candidates(g)[0])
        (seg,) = segments(f)
        assert seg.kind is Kind.SLS and seg.min_len == 3
        assert f.pt[root_value(f, "h")].spec is Spec.FIRST
        assert entails(g, f)

    def test_dll_ends(self):
        from smghunt.smg import ptr_neq
        g = build_list(DLL, "RR", tail=True)
        f = fold(g, find_candidates(g)[0])
        (seg,) = segments(f)
        assert seg.kind is Kind.DLS and seg.min_len == 2
        h, t = root_value(f, "h"), root_value(f, "t")
        assert {f.pt[h].spec, f.pt[t].spec} == {Spec.FIRST, Spec.LAST}
        assert ptr_neq(f, h, t) is True

    def test_data_hull(self):
        g = build_list(SLL, "RR", [0, 2])
        f = fold(g, find_candidates(g)[0])
        (oid,) = [o for o, obj in f.objects.items() if obj.is_segment]
        data = f.field_at(oid, 8, 8)
        assert f.values[data].interval == Interval(0, 2)

    def test_fold_then_materialize(self):
        g = build_list(SLL, "RR")
        f = fold(g, find_candidates(g)[0])
        frontier = [f]
        for _ in range(ABSTRACTION_MIN_LEN):
            nxt = []
            for x in frontier:
                (oid,) = [o for o, obj in x.objects.items() if obj.is_segment]
                nxt.extend(materialize(x, oid, Spec.FIRST))
            frontier = nxt
        assert any(entails(g, x) for x in frontier)


class TestMaterialize:
    def _seg(self, g):
        return next(o for o, obj in g.objects.items() if obj.is_segment)

    def test_nonempty_segment_has_one_case(self):
        g = build_list(SLL, ["S2"])
        cases = materialize(g, self._seg(g), Spec.FIRST)
        assert len(cases) == 1
        (rest,) = segments(cases[0])
        assert rest.min_len == 1

    def test_possibly_empty_segment_has_two_cases(self):
        g = build_list(SLL, ["S0"])
        region_case, empty_case = materialize(g, self._seg(g), Spec.FIRST)
        assert segments(region_case)[0].min_len == 0
        assert segments(empty_case) == []
        assert root_value(empty_case, "h") == NULL

    def test_dll_from_last(self):
        g = build_list(DLL, ["S1"], tail=True)
        (case,) = materialize(g, self._seg(g), Spec.LAST)
        t = root_value(case, "t")
        assert case.objects[case.pt[t].target].kind is Kind.REGION

    def test_covers_concretizations(self):
        g = build_list(SLL, ["R", "S0"], (0, 1))
        parts = [concretize(c) for c in materialize(g, self._seg(g), Spec.FIRST)]
        assert frozenset().union(*parts) == concretize(g)


class TestEntails:
    def test_reflexive(self):
        for items in ("RRR", ["S1"], ["R", "S2"]):
            g = build_list(SLL, items)
            assert entails(g, g)

    def test_regions_entail_segment(self):
        assert entails(build_list(SLL, "RRR"), build_list(SLL, ["S2"]))

    def test_shorter_does_not_entail_longer(self):
        assert not entails(build_list(SLL, ["S1"]), build_list(SLL, ["S2"]))
        assert entails(build_list(SLL, ["S2"]), build_list(SLL, ["S1"]))

    def test_data_subset(self):
        assert entails(build_list(SLL, "RR", 1), build_list(SLL, "RR", (0, 1)))
        assert not entails(build_list(SLL, "RR", (0, 1)), build_list(SLL, "RR", 1))


class TestJoin:
    def test_idempotent(self):
        g = build_list(SLL, ["R", "S1"])
        assert join(g, g) is g

    def test_two_and_three(self):
        a, b = build_list(SLL, "RR"), build_list(SLL, "RRR")
        j = join(a, b)
        assert j is not None
        (seg,) = segments(j)
        assert seg.kind is Kind.SLS and seg.min_len == 2
        assert entails(a, j) and entails(b, j)

    def test_incompatible_shapes(self):
        a = build_list(SLL, "RR")
        s = SMG()
        oid = s.add_region(Interval(40, 40))
        s.set_field(oid, 0, 8, s.const(3))
        h = s.add_region(Interval(8, 8), Storage(StorageKind.STACK, "main", "h", 0))
        s.set_field(h, 0, 8, s.addr(oid, 0))
        s.roots[("s", 0, "h")] = h
        assert join(a, s.freeze()) is None

    def test_min_len_clamped(self):
        j = join(build_list(SLL, ["S3"], 0), build_list(SLL, ["S4"], 1))
        (seg,) = segments(j)
        assert seg.min_len <= 3


class TestAbstractState:
    def test_five_elements(self):
        g = abstract_state(build_list(SLL, "RRRRR"))
        (seg,) = segments(g)
        assert seg.kind is Kind.SLS and seg.min_len == 5

    def test_fixpoint(self):
        g = abstract_state(build_list(SLL, "RRRRR"))
        assert abstract_state(g) is g

    def test_two_lists(self):
        a = build_list(SLL, "RRR")
        b = build_list(DLL, "RRR")
        s = a.clone()
        # graft b's nodes under a second root
        omap = {}
        for oid, obj in b.objects.items():
            if obj.storage.kind is StorageKind.HEAP:
                omap[oid] = s.add_object(obj.kind, obj.size, obj.storage)
        for oid, new in omap.items():
            fields = {}
            for key, v in b.get_fields(oid).items():
                if v == NULL:
                    fields[key] = NULL
                elif b.is_pointer(v):
                    fields[key] = s.addr(omap[b.pt[v].target], 0)
                else:
                    fields[key] = s.const(b.values[v].interval.value)
            s.set_fields(new, fields)
        head = b.pt[root_value(b, "h")].target
        g2 = s.add_region(Interval(8, 8), Storage(StorageKind.STACK, "main", "g", 0))
        s.set_field(g2, 0, 8, s.addr(omap[head], 0))
        s.roots[("s", 0, "g")] = g2
        out = abstract_state(s.freeze())
        assert sorted(o.kind.value for o in segments(out)) == ["dls", "sls"]


class TestConcretizationInvariants:
    def test_single_graph_operations(self):
        bad, cases = check_single(small_family())
        assert cases > 300
        assert bad == []

    def test_entails_and_join(self):
        bad, cases = check_pairs(small_family(), limit_per_group=400)
        assert cases > 1000
        assert bad == []
