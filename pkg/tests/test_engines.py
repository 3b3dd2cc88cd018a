from __future__ import annotations

import threading
import time

import pytest
from hypothesis import given, settings, strategies as st

from conftest import corpus_cases, load_case
from fuzzgen import generate
from smghunt.engines import (
    EngineConfig, EngineKind, Verdict, VerdictKind, replay_bug, run_bfs_hunter,
    run_dfs_hunter, run_engine, run_verifier,
)
from smghunt.interp import Config, Error
from smghunt.parser import parse_program
from smghunt.smg import ErrorKind

BUILDER = """fn main() {
entry:
  h = null
  goto loop
loop:
  c = nondet()
  if c == 0 then done else body
body:
  n = alloc(16)
  store(n, 0, 8, h)
  store(n, 8, 8, 0)
  h = n
  goto loop
done:
  goto fl
fl:
  if h == null then end else fb
fb:
  t = load(h, 0, 8)
  free(h)
  h = t
  goto fl
end:
  return 0
}
"""


def case_named(name):
    return next(c for c in corpus_cases() if c.name == name)


class TestVerdict:
    def test_safe_cannot_be_sampled(self):
        with pytest.raises(ValueError):
            Verdict(VerdictKind.SAFE, "verifier", sampled=True)

    def test_bug_needs_trace(self):
        with pytest.raises(ValueError):
            Verdict(VerdictKind.BUG, "bfs", error=ErrorKind.LEAK)

    def test_dfs_depth_positive(self):
        with pytest.raises(ValueError):
            EngineConfig.dfs(0)
        assert EngineConfig.dfs(200).name == "dfs(200)"


class TestVerifier:
    def test_unbounded_list_is_safe(self):
        v = run_verifier(parse_program(BUILDER))
        assert v.kind is VerdictKind.SAFE

    def test_real_bug_is_unknown(self):
        prog, cfg = load_case(case_named("dfree"))
        v = run_verifier(prog, EngineConfig.verifier(cfg))
        assert v.kind is VerdictKind.UNKNOWN

    def test_sampled_lineage_is_unknown(self):
        prog, cfg = load_case(case_named("sampled_safe"))
        v = run_verifier(prog, EngineConfig.verifier(cfg))
        assert v.kind is VerdictKind.UNKNOWN and v.sampled

    def test_cancel(self):
        ev = threading.Event()
        ev.set()
        v = run_verifier(parse_program(BUILDER), cancel=ev)
        assert v.kind is VerdictKind.UNKNOWN and v.reason == "cancelled"


class TestDFS:
    def test_shallow_double_free(self):
        prog, cfg = load_case(case_named("dfree"))
        v = run_dfs_hunter(prog, EngineConfig.dfs(200, cfg))
        assert v.is_bug and v.error is ErrorKind.DOUBLE_FREE

    def test_deep_bug_needs_depth(self):
        prog, cfg = load_case(case_named("deep_bug"))
        shallow = run_dfs_hunter(prog, EngineConfig.dfs(200, cfg))
        deep = run_dfs_hunter(prog, EngineConfig.dfs(900, cfg))
        assert shallow.kind is VerdictKind.UNKNOWN and shallow.reason == "depth"
        assert deep.is_bug
        assert 200 < len(deep.trace) <= 900

    def test_never_safe(self):
        prog = parse_program("fn main() { b: x = alloc(8); free(x); return 0 }")
        v = run_dfs_hunter(prog, EngineConfig.dfs(200))
        assert v.kind is VerdictKind.UNKNOWN
        assert v.reason == "hunters cannot claim safety"

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10**6))
    def test_monotone_in_depth(self, seed):
        prog = parse_program(generate(seed))
        found = [run_dfs_hunter(prog, EngineConfig.dfs(d)).is_bug
                 for d in (1, 2, 4, 8, 16, 32, 64)]
        first = found.index(True) if True in found else len(found)
        assert all(found[first:])


class TestBFS:
    def test_lock_exhausts(self):
        prog, cfg = load_case(case_named("lock"))
        v = run_bfs_hunter(prog, EngineConfig.bfs(cfg))
        assert v.is_safe and v.exhaustive

    def test_unbounded_runs_until_cancelled(self):
        ev = threading.Event()
        threading.Timer(0.3, ev.set).start()
        t0 = time.monotonic()
        v = run_bfs_hunter(parse_program(BUILDER), cancel=ev)
        assert v.kind is VerdictKind.UNKNOWN and v.reason == "cancelled"
        assert time.monotonic() - t0 < 2.0

    def test_sampled_bug_is_reported(self):
        prog, cfg = load_case(case_named("sampled_offbyone"))
        v = run_bfs_hunter(prog, EngineConfig.bfs(cfg))
        assert v.is_bug and v.sampled

    def test_sampled_exhaustion_is_not_safe(self):
        prog, cfg = load_case(case_named("sampled_safe"))
        v = run_bfs_hunter(prog, EngineConfig.bfs(cfg))
        assert v.kind is VerdictKind.UNKNOWN and v.sampled

    def test_budget(self):
        v = run_bfs_hunter(parse_program(BUILDER), EngineConfig.bfs(max_states=50))
        assert v.kind is VerdictKind.UNKNOWN and v.reason == "budget"


ENGINES = [EngineKind.VERIFIER, EngineKind.DFS, EngineKind.BFS]


def _configs(cfg: Config):
    budget = 3000  # hunters never terminate on unbounded programs
    return [EngineConfig.verifier(cfg, max_states=budget),
            EngineConfig.dfs(200, cfg, max_states=budget),
            EngineConfig.dfs(900, cfg, max_states=budget),
            EngineConfig.bfs(cfg, max_states=budget)]


class TestAuthorityOnCorpus:
    @pytest.mark.parametrize("case", corpus_cases(), ids=lambda c: c.name)
    def test_authority_and_replay(self, case):
        prog, cfg = load_case(case)
        verdicts = [run_engine(prog, ec) for ec in _configs(cfg)]
        ver, d200, d900, bfs = verdicts
        assert not ver.is_bug
        assert not d200.is_safe and not d900.is_safe
        if bfs.is_safe:
            assert bfs.exhaustive and not bfs.sampled
        bugs = [v for v in verdicts if v.is_bug]
        assert not (bugs and ver.is_safe)
        for v in bugs:
            res = replay_bug(prog, v, cfg)
            assert isinstance(res, Error) and res.kind is v.error


class TestFuzzAuthority:
    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 10**6))
    def test_no_conflict_and_replay(self, seed):
        prog = parse_program(generate(seed))
        ver = run_verifier(prog, EngineConfig.verifier(max_states=3000))
        bfs = run_bfs_hunter(prog, EngineConfig.bfs(max_states=3000))
        dfs = run_dfs_hunter(prog, EngineConfig.dfs(200, max_states=3000))
        assert not ver.is_bug and not dfs.is_safe
        assert not (ver.is_safe and (bfs.is_bug or dfs.is_bug))
        for v in (bfs, dfs):
            if v.is_bug:
                res = replay_bug(prog, v)
                assert isinstance(res, Error) and res.kind is v.error
