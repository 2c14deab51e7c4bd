"""Büchi emptiness over dynamic pushdown networks.

The pipeline: the generalized acceptance family of each product automaton
is folded into a single set with the usual counter construction, then
membership questions reduce to repeating heads plus backward saturation.
A head (control, top symbol) is repeating when the pushdown can return to
the same head with anything below while passing an accepting control;
configurations with accepting runs are exactly those that can reach some
repeating head, computed as a pre* image represented by a P-automaton.

Spawned instances are handled by a greatest fixpoint over the spawn
targets occurring in rules: a target stays "good" while the member it
starts has an accepting run from it using only rules whose own spawn
targets are still good.  The top-level check then tests every local
configuration of the queried global configuration against the final good
set, trying initial atoms in deterministic order.
"""

from __future__ import annotations

import time
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence

import networkx as nx

from .formula import Formula
from .model import Dpn, LocalConfig, ModelValidationError, stutter_extend, validate_dpn
from .product import (
    Gbdpds,
    Gbdpn,
    ProdControl,
    ProdRule,
    build_product,
    init_annot,
    plain,
    product_sizes,
    sym_pretty,
)


class EngineError(Exception):
    pass


# ---------------------------------------------------------------------------
# Plain Büchi pushdown systems (possibly spawning)
# ---------------------------------------------------------------------------


@dataclass(frozen=True, order=True)
class SpawnTarget:
    process: str
    control: object
    word: tuple

    def pretty(self) -> str:
        ctl = self.control.pretty() if hasattr(self.control, "pretty") else str(self.control)
        syms = " ".join(
            sym_pretty(s) if isinstance(s, tuple) else str(s) for s in self.word
        )
        return f"{self.process}: {ctl} {syms}".rstrip()


@dataclass(frozen=True, order=True)
class PRule:
    control: object
    symbol: object
    target: object
    word: tuple
    spawn: Optional[SpawnTarget] = None


@dataclass
class Bdpds:
    name: str
    controls: frozenset
    alphabet: tuple
    rules: tuple
    accepting: frozenset


@dataclass
class Bdpn:
    members: dict
    source: Optional[Gbdpn] = None


# ---------------------------------------------------------------------------
# Degeneralization
# ---------------------------------------------------------------------------


def degeneralize(
    name: str,
    controls: Iterable,
    alphabet: Iterable,
    rules: Iterable,
    family: Sequence[frozenset],
) -> Bdpds:
    """Counter construction folding a generalized family into one set.

    States are (control, index) with 1-based indices; the index advances
    from j to j+1 (mod k) whenever the current control lies in the j-th
    family member, and acceptance is (first-member control, index 1).  A
    run of the result is accepting iff the underlying run visits every
    family member infinitely often.
    """
    fam = [frozenset(s) for s in family]
    k = len(fam)
    if k == 0:
        raise EngineError("degeneralization needs a nonempty acceptance family")

    def adv(j: int, control) -> int:
        return j % k + 1 if control in fam[j - 1] else j

    new_rules = []
    for r in rules:
        spawn = r.spawn
        if spawn is not None and not isinstance(spawn, SpawnTarget):
            spawn = SpawnTarget(spawn.process, spawn.control, spawn.word)
        for j in range(1, k + 1):
            new_rules.append(
                PRule(
                    (r.control, j),
                    r.symbol,
                    (r.target, adv(j, r.control)),
                    r.word,
                    spawn,
                )
            )
    new_controls = frozenset((c, j) for c in controls for j in range(1, k + 1))
    accepting = frozenset((c, 1) for c in fam[0])
    return Bdpds(
        name,
        new_controls,
        tuple(alphabet),
        tuple(sorted(new_rules, key=repr)),
        accepting,
    )


def degeneralize_gbdpds(member: Gbdpds) -> Bdpds:
    rules = [
        PRule(
            r.control,
            r.symbol,
            r.target,
            r.word,
            None
            if r.spawn is None
            else SpawnTarget(r.spawn.process, r.spawn.control, r.spawn.word),
        )
        for r in member.rules
    ]
    return degeneralize(
        member.name, member.controls, member.alphabet, rules, member.acceptance
    )


def degeneralize_gbdpn(gbdpn: Gbdpn) -> Bdpn:
    return Bdpn(
        {m.name: degeneralize_gbdpds(m) for m in gbdpn.members}, source=gbdpn
    )


# ---------------------------------------------------------------------------
# P-automata
# ---------------------------------------------------------------------------


def _ctl(control) -> tuple:
    return ("ctl", control)


class PAutomaton:
    """Finite automaton over stack symbols denoting a configuration set.

    A configuration (control, word) is accepted iff the automaton has a
    path from the control's state over the word to a final state.
    """

    def __init__(self, states, transitions, finals):
        self.states = frozenset(states)
        self.transitions = frozenset(transitions)
        self.finals = frozenset(finals)
        self._fwd: dict = defaultdict(set)
        for q, a, q2 in self.transitions:
            self._fwd[(q, a)].add(q2)

    def accepts(self, control, word: Sequence) -> bool:
        current = {_ctl(control)}
        for sym in word:
            nxt = set()
            for q in current:
                nxt |= self._fwd.get((q, sym), set())
            current = nxt
            if not current:
                return False
        return bool(current & self.finals)

    def __eq__(self, other):
        return (
            isinstance(other, PAutomaton)
            and self.states == other.states
            and self.transitions == other.transitions
            and self.finals == other.finals
        )


def config_automaton(configs: Iterable[tuple]) -> PAutomaton:
    """Automaton accepting exactly the given finite (control, word) set."""
    states = set()
    trans = set()
    finals = set()
    fresh = 0
    for control, word in configs:
        prev = _ctl(control)
        states.add(prev)
        for sym in word:
            nxt = ("st", fresh)
            fresh += 1
            states.add(nxt)
            trans.add((prev, sym, nxt))
            prev = nxt
        finals.add(prev)
    return PAutomaton(frozenset(states), frozenset(trans), frozenset(finals))


def heads_automaton(heads: Iterable[tuple], alphabet: Iterable) -> PAutomaton:
    """Automaton for {head configurations with arbitrary stack below}."""
    fin = ("fin",)
    states = {fin}
    trans = set()
    for control, sym in heads:
        states.add(_ctl(control))
        trans.add((_ctl(control), sym, fin))
    for sym in alphabet:
        trans.add((fin, sym, fin))
    return PAutomaton(frozenset(states), frozenset(trans), frozenset({fin}))


# ---------------------------------------------------------------------------
# Saturation
# ---------------------------------------------------------------------------


def _enabled_rules(bdpds: Bdpds, allowed_spawns) -> list:
    if allowed_spawns is None:
        return list(bdpds.rules)
    return [
        r for r in bdpds.rules if r.spawn is None or r.spawn in allowed_spawns
    ]


def _normalize(rules: Iterable[PRule]) -> list:
    """Split pushes of three or more symbols into chains of binary pushes.

    Fresh intermediate controls are never accepting and never queried, so
    reachability restricted to original controls is unchanged.
    """
    out = []
    fresh = 0
    for r in rules:
        if len(r.word) <= 2:
            out.append(r)
            continue
        word = r.word
        prev = ("nrm", fresh)
        fresh += 1
        out.append(PRule(r.control, r.symbol, prev, (word[-1],), r.spawn))
        for i in range(len(word) - 2, -1, -1):
            if i == 0:
                nxt = r.target
            else:
                nxt = ("nrm", fresh)
                fresh += 1
            out.append(PRule(prev, word[i + 1], nxt, (word[i], word[i + 1])))
            prev = nxt
    return out


def pre_star(bdpds: Bdpds, target: PAutomaton, allowed_spawns=None) -> PAutomaton:
    """Backward saturation: accept {c : c can reach a target configuration}.

    Rules whose spawn target is outside ``allowed_spawns`` are treated as
    absent (``None`` allows every spawn).  Saturation adds an edge
    (control, symbol) -> q whenever the rewritten word already reaches q,
    and terminates because the edge set over a fixed state space is finite.
    """
    rules = _normalize(_enabled_rules(bdpds, allowed_spawns))
    trans: set = set()
    fwd: dict = defaultdict(set)
    work: deque = deque()

    def add(q, a, q2) -> None:
        edge = (q, a, q2)
        if edge not in trans:
            trans.add(edge)
            fwd[(q, a)].add(q2)
            work.append(edge)

    one_index: dict = defaultdict(list)
    two_index: dict = defaultdict(list)
    pending: dict = defaultdict(set)

    for q, a, q2 in target.transitions:
        add(q, a, q2)
    for r in rules:
        src, dst = _ctl(r.control), _ctl(r.target)
        if len(r.word) == 0:
            add(src, r.symbol, dst)
        elif len(r.word) == 1:
            one_index[(dst, r.word[0])].append((src, r.symbol))
        else:
            two_index[(dst, r.word[0])].append((src, r.symbol, r.word[1]))

    while work:
        q, a, q2 = work.popleft()
        for src, sym in one_index.get((q, a), ()):
            add(src, sym, q2)
        for src, sym, below in two_index.get((q, a), ()):
            pending[(q2, below)].add((src, sym))
            for q3 in list(fwd.get((q2, below), ())):
                add(src, sym, q3)
        for src, sym in list(pending.get((q, a), ())):
            add(src, sym, q2)

    states = set(target.states)
    for q, a, q2 in trans:
        states.add(q)
        states.add(q2)
    return PAutomaton(frozenset(states), frozenset(trans), target.finals)


# ---------------------------------------------------------------------------
# Repeating heads
# ---------------------------------------------------------------------------


def _pops(rules: list, accepting: frozenset) -> dict:
    """For each head, the controls reachable by fully popping that symbol.

    Entries are (control, flag) where the flag records whether an
    accepting control is visited strictly after leaving the head (the
    final control included).
    """
    pops: dict = defaultdict(set)
    changed = True
    while changed:
        changed = False
        for r in rules:
            head = (r.control, r.symbol)
            bonus = r.target in accepting
            if len(r.word) == 0:
                new = {(r.target, bonus)}
            elif len(r.word) == 1:
                new = {
                    (c, b or bonus) for c, b in pops.get((r.target, r.word[0]), ())
                }
            else:
                new = set()
                for c1, b1 in pops.get((r.target, r.word[0]), ()):
                    for c2, b2 in pops.get((c1, r.word[1]), ()):
                        new.add((c2, b1 or b2 or bonus))
            before = pops[head]
            if not new <= before:
                before |= new
                changed = True
    return pops


def repeating_heads(bdpds: Bdpds, allowed_spawns=None) -> frozenset:
    """Heads that can reach themselves (with any tail) via an accepting visit.

    Computed on the head-reachability graph: edges carry a flag marking an
    accepting control strictly after the source head, and a head repeats
    iff its strongly connected component contains a flagged edge.
    """
    rules = _normalize(_enabled_rules(bdpds, allowed_spawns))
    pops = _pops(rules, bdpds.accepting)
    graph = nx.DiGraph()
    flagged: set = set()

    def edge(u, v, flag: bool) -> None:
        graph.add_edge(u, v)
        if flag:
            flagged.add((u, v))

    for r in rules:
        head = (r.control, r.symbol)
        graph.add_node(head)
        bonus = r.target in bdpds.accepting
        if len(r.word) >= 1:
            edge(head, (r.target, r.word[0]), bonus)
        if len(r.word) == 2:
            for c1, b1 in pops.get((r.target, r.word[0]), ()):
                edge(head, (c1, r.word[1]), b1 or bonus)

    repeating = set()
    for scc in nx.strongly_connected_components(graph):
        if any(u in scc and v in scc for (u, v) in flagged):
            repeating |= scc
    return frozenset(
        (c, s) for c, s in repeating if c in bdpds.controls
    )


def has_accepting_run(bdpds: Bdpds, control, word, allowed_spawns=None) -> bool:
    """Does the system have an accepting run from (control, word)?"""
    heads = repeating_heads(bdpds, allowed_spawns)
    target = heads_automaton(heads, bdpds.alphabet)
    return pre_star(bdpds, target, allowed_spawns).accepts(control, word)


# ---------------------------------------------------------------------------
# Membership engine with spawn handling
# ---------------------------------------------------------------------------


def _default_encodings(key: SpawnTarget):
    yield key.control, key.word


def product_spawn_encodings(key: SpawnTarget):
    """Start encodings of a spawned instance of a degeneralized product.

    The stored control fixes the initial atom; the top frame's label and
    the labels of deeper frames are guessed, deeper symbols becoming
    initial-frame annotations.  Counters start at 1.
    """
    pc = key.control
    base_word = tuple(s[1] for s in key.word)
    if not base_word:
        yield (pc, 1), ()
        return
    for mask in range(1 << len(base_word)):
        labels = ["unexit" if mask >> k & 1 == 0 else "exit" for k in range(len(base_word))]
        control = (ProdControl(pc.base, pc.atom, labels[0]), 1)
        stack = [plain(base_word[0])]
        stack.extend(
            init_annot(s, labels[k + 1]) for k, s in enumerate(base_word[1:])
        )
        yield control, tuple(stack)


class MembershipEngine:
    """Per-network saturation cache and good-spawn-target fixpoint."""

    def __init__(self, bdpn: Bdpn, encodings: Callable = _default_encodings):
        self.bdpn = bdpn
        self.encodings = encodings
        self._cache: dict = {}

    def automaton(self, member_name: str, allowed: Optional[frozenset]) -> PAutomaton:
        key = (member_name, allowed)
        auto = self._cache.get(key)
        if auto is None:
            member = self.bdpn.members[member_name]
            heads = repeating_heads(member, allowed)
            auto = pre_star(member, heads_automaton(heads, member.alphabet), allowed)
            self._cache[key] = auto
        return auto

    def spawn_targets(self) -> list:
        targets = set()
        for member in self.bdpn.members.values():
            for r in member.rules:
                if r.spawn is not None:
                    targets.add(r.spawn)
        return sorted(targets)

    def target_accepting(self, key: SpawnTarget, allowed: frozenset) -> bool:
        auto = self.automaton(key.process, allowed)
        return any(auto.accepts(c, w) for c, w in self.encodings(key))

    def good_dclics(self, keep: Callable = lambda key: True) -> frozenset:
        """Largest spawn-target set whose members all stay accepting.

        Starts from every spawn target occurring in any rule (optionally
        pre-filtered by ``keep``) and removes targets without an accepting
        run spawning only into the current set, until stable.
        """
        current = {t for t in self.spawn_targets() if keep(t)}
        while True:
            allowed = frozenset(current)
            dead = [t for t in sorted(current) if not self.target_accepting(t, allowed)]
            if not dead:
                return allowed
            current -= set(dead)


def good_dclics(bdpn: Bdpn, encodings: Callable = _default_encodings) -> frozenset:
    return MembershipEngine(bdpn, encodings).good_dclics()


# ---------------------------------------------------------------------------
# Top-level check
# ---------------------------------------------------------------------------


@dataclass
class Verdict:
    answer: str  # 'sat' | 'unsat'
    per_config: list  # (LocalConfig, atom index or None)
    good: frozenset
    sizes: dict
    timings: dict = field(default_factory=dict)

    @property
    def is_sat(self) -> bool:
        return self.answer == "sat"


def root_encodings(member: Gbdpds, cfg: LocalConfig, atom_index: int):
    key = SpawnTarget(
        member.name,
        ProdControl(cfg.control, atom_index, "unexit"),
        tuple(plain(s) for s in cfg.word),
    )
    yield from product_spawn_encodings(key)


def check(
    dpn: Dpn,
    formulas: Mapping[str, Formula],
    roots: Iterable[LocalConfig],
    *,
    stutter: bool = False,
    extend=None,
) -> Verdict:
    """Decide whether the given global configuration satisfies the formulas.

    ``formulas`` maps each process name to its formula; the verdict is sat
    iff every local configuration admits an initial atom whose product
    configuration has an accepting run spawning only into good targets.
    ``extend`` optionally post-processes the built product (used by the
    lock pipeline to add acceptance families).
    """
    t0 = time.perf_counter()
    roots = list(roots)
    diags = validate_dpn(dpn)
    if diags:
        raise ModelValidationError(diags)
    if stutter:
        dpn, roots = stutter_extend(dpn, roots)
    gbdpn = build_product(dpn, formulas)
    if extend is not None:
        gbdpn = extend(gbdpn)
    t1 = time.perf_counter()
    bdpn = degeneralize_gbdpn(gbdpn)
    t2 = time.perf_counter()
    engine = MembershipEngine(bdpn, product_spawn_encodings)
    good = engine.good_dclics()
    t3 = time.perf_counter()

    per_config = []
    for cfg in roots:
        name = dpn.owner_of_control(cfg.control)
        member = gbdpn.member(name)
        auto = engine.automaton(name, good)
        witness = None
        for atom in member.initial_atoms:
            if any(
                auto.accepts(c, w) for c, w in root_encodings(member, cfg, atom.index)
            ):
                witness = atom.index
                break
        per_config.append((cfg, witness))
    t4 = time.perf_counter()

    sizes = {
        m.name: dict(
            product_sizes(m),
            degeneralized_controls=len(bdpn.members[m.name].controls),
            degeneralized_rules=len(bdpn.members[m.name].rules),
        )
        for m in gbdpn.members
    }
    answer = "sat" if all(w is not None for _, w in per_config) else "unsat"
    return Verdict(
        answer=answer,
        per_config=per_config,
        good=good,
        sizes=sizes,
        timings={
            "build_product": t1 - t0,
            "degeneralize": t2 - t1,
            "good_dclics": t3 - t2,
            "roots": t4 - t3,
            "total": t4 - t0,
        },
    )
