"""Concretization-based checks of the list abstraction, shared by the unit
and acceptance suites.  Each function returns a list of failure descriptions
together with the number of cases it examined."""

from __future__ import annotations

import itertools
from collections import defaultdict

from shapes import concretize, shape_family
from smghunt.abstraction import abstract_state, find_candidates, fold, materialize
from smghunt.canon import canonical_key
from smghunt.entail import entails, join
from smghunt.smg import Kind, Spec


def check_single(family) -> tuple[list[str], int]:
    """fold, abstract_state and materialize on every graph of ``family``."""
    bad: list[str] = []
    cases = 0
    for label, g in family:
        cg = concretize(g)
        for cand in find_candidates(g):
            cases += 1
            f = fold(g, cand)
            if not cg <= concretize(f) or not entails(g, f):
                bad.append(f"fold {label} {cand.chain}")
        cases += 1
        a = abstract_state(g)
        if not cg <= concretize(a) or not entails(g, a):
            bad.append(f"abstract_state {label}")
        nseg = sum(1 for o in g.objects.values() if o.is_segment)
        for oid, obj in g.objects.items():
            if not obj.is_segment:
                continue
            ends = (Spec.FIRST, Spec.LAST) if obj.kind is Kind.DLS else (Spec.FIRST,)
            for end in ends:
                cases += 1
                parts = [concretize(c) for c in materialize(g, oid, end)]
                if len(parts) != (2 if obj.min_len == 0 else 1):
                    bad.append(f"materialize case count {label} {end}")
                union = frozenset().union(*parts)
                # with one segment every concrete heap comes from exactly one case;
                # with several, one heap may arise from different length splits
                disjoint = nseg > 1 or sum(map(len, parts)) == len(union)
                if union != cg or not disjoint:
                    bad.append(f"materialize {label} {end}")
    return bad, cases


def check_pairs(family, limit_per_group=None) -> tuple[list[str], int]:
    """entails soundness and the join upper-bound property on graph pairs.

    Pairs are formed within groups of equal node layout and root set, the only
    pairs on which the two operations can succeed.
    """
    groups = defaultdict(list)
    for label, g in family:
        shape, _, _, tail = label.split(":")
        groups[(shape, tail)].append((label, g, concretize(g)))
    memo: dict = {}
    bad: list[str] = []
    cases = 0
    for members in groups.values():
        pairs = itertools.product(members, members)
        if limit_per_group is not None:
            pairs = itertools.islice(pairs, 0, None,
                                     max(1, len(members) ** 2 // limit_per_group))
        for (la, a, ca), (lb, b, cb) in pairs:
            cases += 1
            if entails(a, b) and not ca <= cb:
                bad.append(f"entails {la} {lb}")
            j = join(a, b)
            if j is None:
                continue
            key = canonical_key(j)
            cj = memo.get(key)
            if cj is None:
                cj = memo[key] = concretize(j)
            if not (ca | cb) <= cj or not (entails(a, j) and entails(b, j)):
                bad.append(f"join {la} {lb}")
    return bad, cases


def small_family():
    return list(shape_family(2))
