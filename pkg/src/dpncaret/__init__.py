"""CARET model checking for dynamic pushdown networks.

Decides whether global configurations of a network of spawning pushdown
processes satisfy single-indexed CARET formulas (one formula per process,
interpreted over call/return-structured infinite words), via a product
into generalized Büchi pushdown systems and a saturation-based membership
engine.  Ships reductions for regular valuations and nested-lock networks
plus an independent bounded-exploration oracle used to cross-validate
every verdict class.
"""

from .buchi import Verdict, check, good_dclics, has_accepting_run, pre_star, repeating_heads
from .formula import Formula, atoms, closure, format_formula, parse_formula
from .model import (
    Dpn,
    LocalConfig,
    dclics_of,
    flowgraph_to_dpn,
    parse_dpn,
    parse_flowgraph,
    print_dpn,
    step,
    stutter_extend,
    validate_dpn,
)
from .oracle import ExploreBounds, OracleAnswer, oracle_check_global, oracle_check_local
from .product import build_product, corresponding_configs, initial_atoms
from .reductions import (
    RegularValuation,
    check_lock_network,
    check_with_valuation,
    ldpn_to_dpn,
    parse_valuation,
    regval_encode,
    validate_nested,
)
from .words import StructuredWord, TraceLetter, eval_structured_word, letter

__all__ = [
    "Dpn",
    "ExploreBounds",
    "Formula",
    "LocalConfig",
    "OracleAnswer",
    "RegularValuation",
    "StructuredWord",
    "TraceLetter",
    "Verdict",
    "atoms",
    "build_product",
    "check",
    "check_lock_network",
    "check_with_valuation",
    "closure",
    "corresponding_configs",
    "dclics_of",
    "eval_structured_word",
    "flowgraph_to_dpn",
    "format_formula",
    "good_dclics",
    "has_accepting_run",
    "initial_atoms",
    "ldpn_to_dpn",
    "letter",
    "oracle_check_global",
    "oracle_check_local",
    "parse_dpn",
    "parse_flowgraph",
    "parse_formula",
    "parse_valuation",
    "pre_star",
    "print_dpn",
    "regval_encode",
    "repeating_heads",
    "step",
    "stutter_extend",
    "validate_dpn",
    "validate_nested",
]
