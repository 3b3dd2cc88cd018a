from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import pytest

TESTS = Path(__file__).parent
CORPUS = TESTS / "corpus"
sys.path.insert(0, str(TESTS))


@dataclass(frozen=True)
class CorpusCase:
    path: Path
    property: str
    expect: str
    winner: Optional[str]
    engine: Optional[str]

    @property
    def name(self) -> str:
        return self.path.stem


def _header(path: Path) -> dict[str, str]:
    meta = {}
    for line in path.read_text().splitlines():
        if not line.startswith("#"):
            break
        key, sep, value = line[1:].partition(":")
        if sep:
            meta[key.strip()] = value.strip()
    return meta


def corpus_cases() -> list[CorpusCase]:
    cases = []
    for path in sorted(CORPUS.glob("*.pir")):
        meta = _header(path)
        cases.append(CorpusCase(path, meta.get("property", "memsafety"), meta["expect"],
                                meta.get("winner"), meta.get("engine")))
    return cases


@pytest.fixture
def corpus():
    return {c.name: c for c in corpus_cases()}


def load_case(case: CorpusCase):
    """Parsed program and interpreter config for a corpus case."""
    from smghunt.interp import Config, Property
    from smghunt.parser import parse_file
    return parse_file(case.path), Config(property=Property(case.property))


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
