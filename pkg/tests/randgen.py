"""Seeded random instances for the agreement and audit suites.

Generated networks keep the stack discipline the product construction
needs (calls push two symbols, returns pop, internal steps rewrite one
symbol) and use single-symbol start and spawn words, the shape program
entry points take.
"""

from __future__ import annotations

import random

from dpncaret.formula import (
    Ap,
    Formula,
    Next,
    Not,
    Or,
    Until,
    closure,
    conj,
    eventually,
    globally,
    neg,
    true_formula,
)
from dpncaret.model import Dpds, Dpn, LocalConfig, Rule, Spawn


def rand_formula(rng: random.Random, ap: list, max_closure: int = 14) -> Formula:
    """Random core formula with closure size at most ``max_closure``."""

    def build(depth: int) -> Formula:
        choices = ["ap", "tag", "not", "or", "next", "until", "f", "g"]
        if depth <= 0:
            choices = ["ap", "tag"]
        kind = rng.choice(choices)
        if kind == "ap" and ap:
            return Ap(rng.choice(ap))
        if kind in ("ap", "tag"):
            return Ap(rng.choice(["call", "ret", "int"]))
        if kind == "not":
            return neg(build(depth - 1))
        if kind == "or":
            return Or(build(depth - 1), build(depth - 1))
        mod = rng.choice(["g", "a", "c"])
        if kind == "next":
            return Next(mod, build(depth - 1))
        if kind == "until":
            return Until(mod, build(depth - 1), build(depth - 1))
        if kind == "f":
            return eventually(mod, build(depth - 1))
        return globally(mod, build(depth - 1))

    while True:
        f = build(rng.randint(1, 3))
        if len(closure(f)) <= max_closure:
            return f


def rand_dpds(
    rng: random.Random,
    name: str,
    index: int,
    *,
    n_controls: int = 2,
    n_symbols: int = 3,
    n_rules: int = 8,
    spawn_into: list = (),
    n_spawn_rules: int = 0,
) -> Dpds:
    controls = tuple(f"{name.lower()}c{k}" for k in range(n_controls))
    symbols = tuple(f"{name.lower()}s{k}" for k in range(n_symbols))
    rules = []
    spawn_slots = set()
    if spawn_into and n_spawn_rules:
        spawn_slots = set(
            rng.sample(range(n_rules), min(n_spawn_rules, n_rules))
        )
    for k in range(n_rules):
        control = rng.choice(controls)
        symbol = rng.choice(symbols)
        target = rng.choice(controls)
        tag = rng.choice(["int", "int", "call", "ret"])
        if tag == "call":
            word = (rng.choice(symbols), rng.choice(symbols))
        elif tag == "ret":
            word = ()
        else:
            word = (rng.choice(symbols),)
        spawn = None
        if k in spawn_slots:
            proc, p_ctl, p_sym = rng.choice(spawn_into)
            spawn = Spawn(proc, p_ctl, (p_sym,))
        rules.append(Rule(control, symbol, tag, target, word, spawn))
    return Dpds(name, controls, symbols, tuple(rules))


def rand_single_process(
    rng: random.Random,
    *,
    ap: list = ("a", "b"),
    n_controls: int = 3,
    n_symbols: int = 4,
    n_rules: int = 10,
) -> tuple:
    """Spawn-free single-process network plus a start configuration."""
    proc = rand_dpds(
        rng,
        "P1",
        1,
        n_controls=rng.randint(1, n_controls),
        n_symbols=rng.randint(1, n_symbols),
        n_rules=rng.randint(1, n_rules),
    )
    labels = {c: frozenset(p for p in ap if rng.random() < 0.5) for c in proc.controls}
    dpn = Dpn((proc,), frozenset(ap), labels)
    start = LocalConfig("P1", rng.choice(proc.controls), (rng.choice(proc.alphabet),))
    return dpn, start


def rand_network(
    rng: random.Random,
    *,
    ap: list = ("a", "b"),
    n_processes: int = 2,
    n_spawn_rules: int = 2,
) -> tuple:
    """Small network with spawns plus a root global configuration."""
    n = rng.randint(1, n_processes)
    specs = []
    for i in range(n):
        name = f"P{i + 1}"
        n_controls = rng.randint(1, 2)
        n_symbols = rng.randint(1, 3)
        specs.append((name, n_controls, n_symbols))
    targets = []
    for name, n_controls, n_symbols in specs:
        targets.append(
            (
                name,
                f"{name.lower()}c{rng.randrange(n_controls)}",
                f"{name.lower()}s{rng.randrange(n_symbols)}",
            )
        )
    processes = []
    for i, (name, n_controls, n_symbols) in enumerate(specs):
        processes.append(
            rand_dpds(
                rng,
                name,
                i + 1,
                n_controls=n_controls,
                n_symbols=n_symbols,
                n_rules=rng.randint(2, 7),
                spawn_into=targets,
                n_spawn_rules=rng.randint(0, n_spawn_rules),
            )
        )
    labels = {}
    for proc in processes:
        for c in proc.controls:
            labels[c] = frozenset(p for p in ap if rng.random() < 0.5)
    dpn = Dpn(tuple(processes), frozenset(ap), labels)
    roots = []
    for _ in range(rng.randint(1, 2)):
        proc = rng.choice(processes)
        roots.append(
            LocalConfig(proc.name, rng.choice(proc.controls), (rng.choice(proc.alphabet),))
        )
    return dpn, roots


def rand_formulas(rng: random.Random, dpn: Dpn, max_closure: int = 14) -> dict:
    ap = sorted(dpn.ap)
    return {
        p.name: rand_formula(rng, ap, max_closure) for p in dpn.processes
    }
