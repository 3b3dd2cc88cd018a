"""Acceptance criteria.  Each test records one PASS/FAIL line, printed in the
terminal summary (see conftest.py)."""

from __future__ import annotations

import itertools
import random
import time

import pytest

from abs_checks import check_pairs, check_single
from addr_oracle import may_be_equal, region_graphs
from concrete import KIND_NAMES, Unsupported, concrete_verdict
from conftest import corpus_cases, load_case
from fuzzgen import generate, instruction_count
from mock_engines import MockRunner, Script, make_verdict, random_script
from shapes import shape_family
from smghunt.cli import main as cli_main, verdict_string
from smghunt.engines import EngineConfig, VerdictKind, run_bfs_hunter, run_engine
from smghunt.interp import Config, Next, branch_condition, deref_size_guard, initial_state, step
from smghunt.interval import INF, Interval, clamp
from smghunt.parser import parse_program
from smghunt.portfolio import PortfolioConfig, authorize, default_engines, run_portfolio
from smghunt.smg import SMG, Validity, clamp_interval, ptr_neq

RESULTS: dict[int, str] = {}
FUZZ_PROGRAMS = 1000
HUNTER_BUDGET = 3000


def record(n: int, ok: bool, detail: str) -> None:
    RESULTS[n] = f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}"
    assert ok, RESULTS[n]


def _fuzz(n: int = FUZZ_PROGRAMS):
    for seed in range(n):
        yield seed, parse_program(generate(seed))


# 1 -------------------------------------------------------------------------------------

def test_criterion_1_corpus():
    problems = []
    latencies = []
    results = {}
    start = time.monotonic()
    for case in corpus_cases():
        prog, interp = load_case(case)
        res = run_portfolio(prog, PortfolioConfig(default_engines(interp), wall_timeout=30))
        results[case.name] = res
        latencies.append(res.cancel_latency)
        got = verdict_string(res.verdict)
        if got != case.expect:
            problems.append(f"{case.name}: {got} != {case.expect}")
        if case.winner and res.winning_engine != case.winner:
            problems.append(f"{case.name}: won by {res.winning_engine}, expected {case.winner}")
    elapsed = time.monotonic() - start

    # the named heuristics are what decide the showcase programs
    prog, interp = load_case(next(c for c in corpus_cases() if c.name == "param_array"))
    no_split = run_portfolio(prog, PortfolioConfig(
        default_engines(Config(split_max=1)), wall_timeout=10))
    if no_split.verdict.is_safe:
        problems.append("param_array is proved even without splitting")
    if not results["sampled_offbyone"].verdict.sampled:
        problems.append("off-by-one bug not found on a sampled path")
    prog, interp = load_case(next(c for c in corpus_cases() if c.name == "deep_bug"))
    if run_engine(prog, EngineConfig.dfs(200, interp)).is_bug:
        problems.append("deep bug reachable within depth 200")
    if elapsed >= 60:
        problems.append(f"corpus took {elapsed:.1f}s")
    record(1, not problems,
           f"{len(results)} programs in {elapsed:.1f}s"
           + (f"; {'; '.join(problems)}" if problems else ""))


# 2 -------------------------------------------------------------------------------------

def _engine_set(interp: Config):
    return [EngineConfig.verifier(interp, max_states=HUNTER_BUDGET),
            EngineConfig.dfs(200, interp, max_states=HUNTER_BUDGET),
            EngineConfig.dfs(900, interp, max_states=HUNTER_BUDGET),
            EngineConfig.bfs(interp, max_states=HUNTER_BUDGET)]


def test_criterion_2_no_conflicts():
    programs = [load_case(c) for c in corpus_cases()]
    programs += [(prog, Config()) for _, prog in _fuzz()]
    conflicts = 0
    for prog, interp in programs:
        ver, *hunters = (run_engine(prog, ec) for ec in _engine_set(interp))
        if ver.is_safe and any(h.is_bug for h in hunters):
            conflicts += 1
    record(2, conflicts == 0, f"{conflicts} conflicts over {len(programs)} programs")


# 3 -------------------------------------------------------------------------------------

def test_criterion_3_bfs_matches_concrete_oracle():
    compared = mismatches = skipped = 0
    for seed, prog in _fuzz():
        assert instruction_count(prog) <= 30
        try:
            oracle = concrete_verdict(prog, max_states=10_000)
        except Unsupported:
            skipped += 1
            continue
        if oracle is None:
            skipped += 1
            continue
        compared += 1
        v = run_bfs_hunter(prog, EngineConfig.bfs(max_states=50_000))
        ok = (v.is_bug == oracle.bug and v.is_safe == (not oracle.bug)
              and (not v.is_bug or KIND_NAMES[v.error.value] in oracle.kinds))
        mismatches += not ok
    record(3, mismatches == 0 and compared >= 900,
           f"{compared} programs compared, {mismatches} mismatches, {skipped} skipped")


# 4 -------------------------------------------------------------------------------------

def test_criterion_4_abstraction_by_concretization():
    single_bad, single_cases = check_single(shape_family(4))
    pair_bad, pair_cases = check_pairs(shape_family(2))
    wide_bad, wide_cases = check_pairs(shape_family(3), limit_per_group=2500)
    bad = single_bad + pair_bad + wide_bad
    total = single_cases + pair_cases + wide_cases
    record(4, not bad, f"{total - len(bad)}/{total} cases hold"
           + (f"; first failures: {bad[:3]}" if bad else ""))


# 5 -------------------------------------------------------------------------------------

def test_criterion_5_ptr_neq():
    checked = unsound = 0
    for g, ptrs in region_graphs(3):
        for v1, v2 in itertools.combinations_with_replacement(ptrs, 2):
            if ptr_neq(g, v1, v2) is True:
                checked += 1
                unsound += may_be_equal(g, v1, v2)

    def pair(valid_first: bool):
        s = SMG()
        a, b = s.add_region(Interval(8, 8)), s.add_region(Interval(8, 8))
        valid, invalid = (a, b) if valid_first else (b, a)
        s.invalidate(invalid, Validity.FREED)
        return ptr_neq(s, s.addr(valid, 0), s.addr(invalid, 0))

    fires, silent = pair(True) is True, pair(False) is None
    record(5, unsound == 0 and fires and silent,
           f"{checked} True answers confirmed ({unsound} refuted); "
           f"later-invalid rule fires={fires}, silent when older={silent}")


# 6 -------------------------------------------------------------------------------------

def test_criterion_6_heuristic_constants():
    problems = []
    prog = parse_program("fn main() { b0: n = nondet(); if n >= 0 && n < 10 then b1 else b2\n"
                         "b1: halt\nb2: halt }")
    s = step(prog, initial_state(prog)).states[0]
    taken = [x for x, t in branch_condition(
        s, prog.functions["main"].block("b0").terminator.cond, prog) if t]
    if len(taken) != 10:
        problems.append(f"{len(taken)} split branches")

    sampled = deref_size_guard(s, Interval(1, INF), Config(samples=3))
    if [iv.value for _, iv in sampled] != [1, 2, 3] or not all(x.sampled for x, _ in sampled):
        problems.append("sampling did not give 3 tainted successors")
    alloc = parse_program("fn main() { b: n = nondet(); assume(n >= 1); a = alloc(n); "
                          "free(a); halt }")
    st = initial_state(alloc)
    for _ in range(2):
        st = step(alloc, st).states[0]
    res = step(alloc, st, Config(samples=3))
    if not isinstance(res, Next) or len(res.states) != 3:
        problems.append("alloc with --samples 3 did not give 3 successors")

    # finite bounds survive up to +-32, anything beyond saturates to infinity
    if Config().bound != 32 or clamp(-32, 32) != Interval(-32, 32) \
            or clamp(0, 33) != Interval(0, INF) or clamp(-33, 0).lo != -INF \
            or clamp_interval(0, 40) != Interval(0, INF):
        problems.append("clamp is not +-32 by default")

    # taint: no safe verdict from a sampled lineage, from any engine or the portfolio
    safe_from_sampled = 0
    for case in corpus_cases():
        prog, interp = load_case(case)
        for ec in _engine_set(interp):
            v = run_engine(prog, ec)
            safe_from_sampled += v.is_safe and v.sampled
    prog, interp = load_case(next(c for c in corpus_cases() if c.name == "sampled_safe"))
    res = run_portfolio(prog, PortfolioConfig(default_engines(interp), wall_timeout=10))
    if res.verdict.is_safe:
        problems.append("portfolio proved a program only explored by sampling")
    if safe_from_sampled:
        problems.append(f"{safe_from_sampled} safe verdicts from sampled lineages")
    record(6, not problems, "split=10, samples=3, clamp=+-32, sampled-safe=0"
           if not problems else "; ".join(problems))


# 7 -------------------------------------------------------------------------------------

def test_criterion_7_portfolio():
    rng = random.Random(2024)
    engines = default_engines()
    kinds = {ec.name: ec.kind for ec in engines}
    prog = parse_program("fn main() { b: halt }")
    unauthorized = 0
    schedules = 10_000
    for _ in range(schedules):
        scripts = {ec.name: random_script(rng, ec, 0.002) for ec in engines}
        res = run_portfolio(prog, PortfolioConfig(engines, poll_interval=0.001,
                                                  wall_timeout=0.02), MockRunner(scripts))
        v = res.verdict
        if v.kind is not VerdictKind.UNKNOWN and not authorize(v, kinds[res.winning_engine]):
            unauthorized += 1

    worst = 0.0
    poll = 0.02
    for delay in (0.0, 0.01, 0.05, 0.1):
        scripts = {n: Script(0.0, "hang") for n in kinds}
        scripts["dfs(200)"] = Script(delay, "verdict", make_verdict(VerdictKind.BUG, "dfs(200)"))
        res = run_portfolio(prog, PortfolioConfig(engines, poll_interval=poll),
                            MockRunner(scripts))
        worst = max(worst, res.cancel_latency / poll)
    for case in corpus_cases():
        p, interp = load_case(case)
        res = run_portfolio(p, PortfolioConfig(default_engines(interp), poll_interval=poll,
                                               wall_timeout=30))
        if res.winning_engine is not None:
            worst = max(worst, res.cancel_latency / poll)
    record(7, unauthorized == 0 and worst <= 2.0,
           f"{unauthorized} unauthorized verdicts in {schedules} schedules; "
           f"worst cancellation {worst:.2f}x poll interval")
