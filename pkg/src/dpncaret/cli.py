"""Command-line interface.

Subcommands: ``check`` (decide satisfaction), ``oracle`` (bounded
brute-force exploration of the same question), ``inspect`` (closure
listings and product sizes), ``translate`` (regular-valuation encoding,
lock-network reduction, flow-graph ingestion).  Exit codes: 0 sat, 1
unsat, 2 error; the oracle additionally uses 3 for unknown.  Set
DPNCARET_LOG to a logging level name for progress messages.
"""

from __future__ import annotations

import argparse
import logging
import os
import re
import sys
from pathlib import Path

from . import buchi, oracle, reductions, reports
from .formula import FormulaError, closure, format_formula, parse_formula
from .model import (
    Dpn,
    LocalConfig,
    ModelError,
    flowgraph_to_dpn,
    parse_dpn,
    parse_flowgraph,
    print_dpn,
    validate_dpn,
)
from .product import build_product, product_sizes, product_to_text

log = logging.getLogger("dpncaret")


class CliError(Exception):
    pass


def parse_formula_file(text: str, dpn: Dpn) -> dict:
    """Formula file: one bare formula for every process, or per-process
    ``Name: formula;`` entries."""
    body = "\n".join(line.split("#", 1)[0] for line in text.splitlines()).strip()
    names = set(dpn.process_names())
    mapping_like = re.match(r"\s*(\w+)\s*:", body)
    if mapping_like and mapping_like.group(1) in names:
        out = {}
        for chunk in body.split(";"):
            chunk = chunk.strip()
            if not chunk:
                continue
            name, _, expr = chunk.partition(":")
            name = name.strip()
            if name not in names:
                raise CliError(f"formula for unknown process {name!r}")
            out[name] = parse_formula(expr.strip(), dpn.ap)
        missing = names - set(out)
        if missing:
            raise CliError(f"no formula for processes: {', '.join(sorted(missing))}")
        return out
    f = parse_formula(body, dpn.ap)
    return {name: f for name in dpn.process_names()}


def parse_init(text: str, dpn: Dpn) -> list:
    """Initial configurations: ``Proc: control sym sym, Proc: ...``."""
    roots = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        name, _, rest = chunk.partition(":")
        name = name.strip()
        parts = rest.split()
        if not parts:
            raise CliError(f"empty configuration in --init: {chunk!r}")
        control, word = parts[0], tuple(parts[1:])
        if name not in dpn.process_names():
            raise CliError(f"--init names unknown process {name!r}")
        owner = dpn.owner_of_control(control)
        if owner != name:
            raise CliError(f"control {control} belongs to {owner}, not {name}")
        roots.append(LocalConfig(name, control, word))
    return roots


def parse_bounds(text: str) -> oracle.ExploreBounds:
    values = {}
    keys = {
        "steps": "max_steps",
        "stack": "max_depth",
        "instances": "max_instances",
        "interleavings": "max_interleavings",
        "visits": "visit_bound",
        "lassos": "max_lassos",
        "work": "work_budget",
    }
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        key, _, value = part.partition("=")
        if key not in keys:
            raise CliError(f"unknown bound {key!r} (use {', '.join(keys)})")
        values[keys[key]] = int(value)
    return oracle.ExploreBounds(**values)


def _load_model(path: str) -> Dpn:
    dpn = parse_dpn(Path(path).read_text())
    diags = validate_dpn(dpn)
    if diags:
        raise CliError("model validation failed:\n  " + "\n  ".join(diags))
    return dpn


def _write(data: bytes, out: str | None) -> None:
    if out:
        Path(out).write_bytes(data)
    else:
        sys.stdout.buffer.write(data)


def _cmd_check(args) -> int:
    dpn = _load_model(args.model)
    formulas = parse_formula_file(Path(args.formula).read_text(), dpn)
    roots = parse_init(args.init, dpn)
    if dpn.has_locks:
        if args.valuation:
            raise CliError("combine --valuation with lock networks by translating first")
        verdict = reductions.check_lock_network(
            dpn, formulas, roots, stutter=args.stutter
        )
    elif args.valuation:
        valuation = reductions.parse_valuation(Path(args.valuation).read_text(), dpn)
        verdict = reductions.check_with_valuation(
            dpn, valuation, formulas, roots, stutter=args.stutter
        )
    else:
        verdict = buchi.check(dpn, formulas, roots, stutter=args.stutter)
    _write(reports.emit_report(verdict, args.format), args.out)
    return 0 if verdict.is_sat else 1


def _cmd_oracle(args) -> int:
    dpn = _load_model(args.model)
    formulas = parse_formula_file(Path(args.formula).read_text(), dpn)
    roots = parse_init(args.init, dpn)
    bounds = parse_bounds(args.bounds) if args.bounds else oracle.ExploreBounds()
    valuation = None
    if args.valuation:
        valuation = reductions.parse_valuation(Path(args.valuation).read_text(), dpn)
    if args.stutter:
        from .model import stutter_extend

        dpn, roots = stutter_extend(dpn, roots)
    answer = oracle.oracle_check_global(
        dpn, formulas, roots, bounds, valuation=valuation
    )
    _write(reports.emit_report(answer, args.format), args.out)
    return {"sat": 0, "unsat": 1, "unknown": 3}[answer.verdict]


def _cmd_inspect(args) -> int:
    if args.closure:
        f = parse_formula(args.closure)
        cl = closure(f)
        data = {
            "formula": format_formula(f),
            "closure_size": len(cl),
            "closure": [format_formula(m) for m in cl],
        }
        _write(reports.emit_report(data, args.format), args.out)
        return 0
    if not args.model or not args.formula:
        raise CliError("inspect needs either --closure or a model and formula file")
    dpn = _load_model(args.model)
    formulas = parse_formula_file(Path(args.formula).read_text(), dpn)
    gbdpn = build_product(dpn, formulas)
    data = {"processes": {m.name: product_sizes(m) for m in gbdpn.members}}
    if args.emit_product:
        Path(args.emit_product).write_text(product_to_text(gbdpn))
        data["product_written_to"] = args.emit_product
    _write(reports.emit_report(data, args.format), args.out)
    return 0


def _cmd_translate(args) -> int:
    if args.kind == "flowgraph":
        fgs = parse_flowgraph(Path(args.source).read_text())
        dpn = flowgraph_to_dpn(fgs)
        _write(print_dpn(dpn).encode(), args.out)
        return 0
    dpn = _load_model(args.source)
    if args.kind == "locks":
        translated = reductions.ldpn_to_dpn(dpn)
        _write(print_dpn(translated).encode(), args.out)
        return 0
    if not args.valuation:
        raise CliError("translate regval needs --valuation FILE")
    valuation = reductions.parse_valuation(Path(args.valuation).read_text(), dpn)
    encoded = reductions.regval_encode(dpn, valuation)
    _write(print_dpn(encoded.dpn).encode(), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpncaret",
        description="CARET model checking for dynamic pushdown networks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_bounds=False):
        p.add_argument("--format", choices=("json", "text"), default="json")
        p.add_argument("--out", help="write the report to a file instead of stdout")
        if with_bounds:
            p.add_argument(
                "--bounds",
                help="steps=..,stack=..,instances=..,interleavings=.. overrides",
            )

    p = sub.add_parser("check", help="decide satisfaction of a global configuration")
    p.add_argument("model")
    p.add_argument("formula")
    p.add_argument("--init", required=True, help='e.g. "P1: p1 m0, P2: p2 x y"')
    p.add_argument("--stutter", action="store_true",
                   help="let runs that empty their stack stutter forever")
    p.add_argument("--valuation", help="regular-valuation file")
    common(p)
    p.set_defaults(func=_cmd_check)

    p = sub.add_parser("oracle", help="bounded brute-force exploration")
    p.add_argument("model")
    p.add_argument("formula")
    p.add_argument("--init", required=True)
    p.add_argument("--stutter", action="store_true")
    p.add_argument("--valuation")
    common(p, with_bounds=True)
    p.set_defaults(func=_cmd_oracle)

    p = sub.add_parser("inspect", help="closure listings and product sizes")
    p.add_argument("model", nargs="?")
    p.add_argument("formula", nargs="?")
    p.add_argument("--closure", help="list the closure of a formula")
    p.add_argument("--emit-product", help="write the product in model format")
    common(p)
    p.set_defaults(func=_cmd_inspect)

    p = sub.add_parser("translate", help="model-to-model reductions")
    p.add_argument("kind", choices=("regval", "locks", "flowgraph"))
    p.add_argument("source")
    p.add_argument("--valuation")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_translate)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("DPNCARET_LOG")
    if level:
        logging.basicConfig(level=getattr(logging, level.upper(), logging.INFO))
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, FormulaError, ModelError, reductions.ValuationError,
            reductions.LockError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
