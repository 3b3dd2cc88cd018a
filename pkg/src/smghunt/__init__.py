"""Shape analysis of a small pointer IR with symbolic memory graphs.

The package bundles a parser for ``.pir`` programs, the symbolic memory graph
domain, an abstract interpreter, list-segment abstraction, an abstracting
verifier, concrete DFS/BFS hunters and a portfolio that runs them together.
"""

from .engines import EngineConfig, EngineKind, Verdict, VerdictKind
from .interp import Config, Property
from .parser import ParseError, parse_file, parse_program
from .portfolio import PortfolioConfig, PortfolioResult, authorize, run_portfolio

__all__ = [
    "Config", "Property", "EngineConfig", "EngineKind", "Verdict", "VerdictKind",
    "PortfolioConfig", "PortfolioResult", "authorize", "run_portfolio",
    "ParseError", "parse_file", "parse_program",
]
__version__ = "0.1.0"
