"""Bounded-exploration oracle: ground-truth satisfaction by brute force.

Local runs are enumerated as lassos over the exact (control, stack[, held
locks]) configuration graph, each lasso is turned into a finite structured
word (prefix plus two copies of the period, successor maps computed on a
longer unrolling so call/return matching is exact), and the formula is
evaluated directly on that word.  Global questions search for an
assignment of satisfying lassos to every instance, including instances
created by chosen lassos, as a greatest fixpoint over spawn targets; lock
networks additionally require a mutual-exclusion-respecting fair
interleaving of the chosen lassos, found by cycle search on the scheduler
product.

Definite answers are conservative: sat always comes with verified
witnesses, unsat is only reported when every involved configuration graph
was fully explored and no budget was hit.  Per-path revisit pruning
(``visit_bound``) is the one documented completeness assumption; raising
it trades time for confidence.
"""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

import networkx as nx

from .formula import Formula
from .model import Dpn, LocalConfig, Rule
from .words import StructuredWord, TraceLetter, _match_successors


@dataclass(frozen=True)
class ExploreBounds:
    max_steps: int = 2000
    max_depth: int = 6
    max_instances: int = 8
    max_interleavings: int = 100_000
    visit_bound: int = 3
    max_lassos: int = 20_000
    work_budget: int = 300_000


@dataclass(frozen=True)
class OConfig:
    """Oracle-side configuration: a local configuration plus held locks."""

    process: str
    control: str
    word: tuple
    held: tuple = ()

    def pretty(self) -> str:
        base = f"{self.process}: {' '.join((self.control,) + self.word)}"
        if self.held:
            base += " holding " + ",".join(self.held)
        return base


@dataclass(frozen=True)
class LassoStep:
    config: OConfig
    props: frozenset
    tag: str
    action: Optional[tuple]
    spawned: Optional[LocalConfig]


@dataclass
class Lasso:
    steps: tuple
    cycle_start: int
    _word: Optional[StructuredWord] = field(default=None, compare=False, repr=False)

    def spawned_targets(self) -> frozenset:
        return frozenset(s.spawned for s in self.steps if s.spawned is not None)

    def word(self) -> StructuredWord:
        if self._word is None:
            self._word = _quotient_word(self.steps, self.cycle_start)
        return self._word

    def describe(self) -> dict:
        pre = self.steps[: self.cycle_start]
        cyc = self.steps[self.cycle_start :]

        def show(s: LassoStep) -> str:
            extra = f" [{s.action[0]} {s.action[1]}]" if s.action else ""
            sp = f" spawn {s.spawned.pretty()}" if s.spawned else ""
            return f"{s.config.pretty()} --{s.tag}{extra}-->{sp}"

        return {"prefix": [show(s) for s in pre], "cycle": [show(s) for s in cyc]}


def _quotient_word(steps: tuple, cycle_start: int) -> StructuredWord:
    """Finite structured word equivalent to prefix + cycle^omega.

    Successor maps are computed on prefix + five copies of the cycle; the
    retained structure is prefix + two copies with the back-edge into the
    second copy.  Because the configuration repeats at every period
    boundary, each call matches within two periods, so abstract successors
    of retained positions fall inside the long unrolling and can be folded
    back onto the second copy.
    """
    prefix = steps[:cycle_start]
    cycle = steps[cycle_start:]
    u, v = len(prefix), len(cycle)
    long_steps = list(prefix) + list(cycle) * 5
    letters4 = tuple(TraceLetter(s.props, s.tag) for s in long_steps)
    abs4, caller4 = _match_successors(letters4, None)

    keep = u + 2 * v
    back = u + v

    def fold(pos: Optional[int]) -> Optional[int]:
        if pos is None:
            return None
        if pos < keep:
            return pos
        return back + (pos - back) % v

    return StructuredWord(
        letters=letters4[:keep],
        back=back,
        abs_succ=tuple(fold(abs4[i]) for i in range(keep)),
        caller=tuple(caller4[i] for i in range(keep)),
    )


# ---------------------------------------------------------------------------
# Local exploration
# ---------------------------------------------------------------------------


@dataclass
class LocalExploration:
    start: OConfig
    lassos: list
    complete: bool
    reasons: frozenset


def _lock_step(held: tuple, action: Optional[tuple]) -> Optional[tuple]:
    """Next held-lock stack, or None when the action is not enabled locally.

    Nested non-reentrant discipline: acquiring a held lock or releasing
    anything but the most recently acquired lock has no transition.
    """
    if action is None:
        return held
    kind, lock = action
    if kind == "acq":
        return None if lock in held else held + (lock,)
    return held[:-1] if held and held[-1] == lock else None


def _successors(dpn: Dpn, cfg: OConfig, props_at) -> list:
    if not cfg.word:
        return []
    proc = dpn.process(cfg.process)
    top, rest = cfg.word[0], cfg.word[1:]
    out = []
    for rule in proc.rules:
        if rule.control != cfg.control or rule.symbol != top:
            continue
        held2 = _lock_step(cfg.held, rule.action)
        if held2 is None:
            continue
        succ = OConfig(cfg.process, rule.target, rule.word + rest, held2)
        spawned = None
        if rule.spawn is not None:
            spawned = LocalConfig(rule.spawn.process, rule.spawn.control, rule.spawn.word)
        step = LassoStep(cfg, props_at(cfg), rule.tag, rule.action, spawned)
        out.append((step, succ))
    return out


def default_props(dpn: Dpn, valuation=None):
    def props_at(cfg: OConfig) -> frozenset:
        top = cfg.word[0] if cfg.word else None
        base = dpn.label_of(cfg.control, top)
        if valuation is not None:
            base = base | valuation.props_at(cfg.process, cfg.control, cfg.word)
        return base

    return props_at


def explore_local(
    dpn: Dpn,
    start: LocalConfig,
    bounds: ExploreBounds = ExploreBounds(),
    *,
    valuation=None,
    held: tuple = (),
) -> LocalExploration:
    """All lassos from a configuration within bounds, via path enumeration.

    Every revisit of a configuration already on the current path closes a
    lasso at each of its earlier occurrences.  Paths stop at the revisit
    cap, the step cap, or the stack-depth cap; only the latter two (and
    budget exhaustion) mark the exploration as partial.
    """
    props_at = default_props(dpn, valuation)
    start_cfg = OConfig(start.process, start.control, start.word, held)
    reasons: set = set()
    lassos: list = []
    work = 0

    path_cfgs: list = [start_cfg]
    path_steps: list = []
    occurrences: dict = {start_cfg: [0]}
    visits: Counter = Counter({start_cfg: 1})
    frames: list = [iter(_successors(dpn, start_cfg, props_at))]

    while frames:
        work += 1
        if work > bounds.work_budget:
            reasons.add("work_budget")
            break
        try:
            step, succ = next(frames[-1])
        except StopIteration:
            frames.pop()
            done = path_cfgs.pop()
            occurrences[done].pop()
            visits[done] -= 1
            if path_steps:
                path_steps.pop()
            continue
        if len(succ.word) > bounds.max_depth:
            reasons.add("stack_bound")
            continue
        prior = occurrences.get(succ, ())
        if prior:
            if len(lassos) + len(prior) > bounds.max_lassos:
                reasons.add("lasso_budget")
                break
            for j in prior:
                lassos.append(Lasso(tuple(path_steps) + (step,), j))
        if visits[succ] >= bounds.visit_bound:
            continue
        if len(path_steps) + 1 >= bounds.max_steps:
            reasons.add("step_bound")
            continue
        path_cfgs.append(succ)
        path_steps.append(step)
        occurrences.setdefault(succ, []).append(len(path_cfgs) - 1)
        visits[succ] += 1
        frames.append(iter(_successors(dpn, succ, props_at)))

    return LocalExploration(
        start=start_cfg,
        lassos=lassos,
        complete=not reasons,
        reasons=frozenset(reasons),
    )


# ---------------------------------------------------------------------------
# Answers
# ---------------------------------------------------------------------------


@dataclass
class OracleAnswer:
    verdict: str  # 'sat' | 'unsat' | 'unknown'
    reason: Optional[str] = None
    witnesses: dict = field(default_factory=dict)

    @property
    def definite(self) -> bool:
        return self.verdict in ("sat", "unsat")


def _reason(reasons: Iterable[str]) -> Optional[str]:
    ordered = sorted(set(reasons))
    return ",".join(ordered) if ordered else None


def oracle_check_local(
    dpn: Dpn,
    start: LocalConfig,
    formula: Formula,
    bounds: ExploreBounds = ExploreBounds(),
    *,
    valuation=None,
) -> OracleAnswer:
    """Does some run from one configuration satisfy the formula?"""
    expl = explore_local(dpn, start, bounds, valuation=valuation)
    for lasso in expl.lassos:
        from .words import eval_structured_word

        if eval_structured_word(lasso.word(), formula):
            return OracleAnswer("sat", witnesses={start.pretty(): lasso.describe()})
    if expl.complete:
        return OracleAnswer("unsat")
    return OracleAnswer("unknown", reason=_reason(expl.reasons))


# ---------------------------------------------------------------------------
# Global check (plain networks)
# ---------------------------------------------------------------------------


class _GlobalContext:
    def __init__(self, dpn, formulas, bounds, valuation):
        self.dpn = dpn
        self.formulas = formulas
        self.bounds = bounds
        self.valuation = valuation
        self.explorations: dict = {}
        self.sat_lassos: dict = {}
        self.reasons: set = set()

    def explore(self, cfg: LocalConfig) -> LocalExploration:
        key = (cfg.process, cfg.control, cfg.word)
        expl = self.explorations.get(key)
        if expl is None:
            expl = explore_local(self.dpn, cfg, self.bounds, valuation=self.valuation)
            self.explorations[key] = expl
            self.reasons |= expl.reasons
            from .words import eval_structured_word

            f = self.formulas[cfg.process]
            self.sat_lassos[key] = [
                l for l in expl.lassos if eval_structured_word(l.word(), f)
            ]
        return expl

    def satisfying(self, cfg: LocalConfig) -> list:
        self.explore(cfg)
        return self.sat_lassos[(cfg.process, cfg.control, cfg.word)]


def oracle_check_global(
    dpn: Dpn,
    formulas: Mapping[str, Formula],
    roots: Iterable[LocalConfig],
    bounds: ExploreBounds = ExploreBounds(),
    *,
    valuation=None,
) -> OracleAnswer:
    """Search for a global run whose local runs all satisfy their formulas.

    Spawn targets of chosen lassos must themselves admit satisfying
    lassos, recursively: computed as a greatest fixpoint over discovered
    targets.  For lock networks the chosen lassos must additionally admit
    a fair mutual-exclusion-respecting interleaving.
    """
    roots = list(roots)
    if dpn.has_locks:
        return _oracle_check_locks(dpn, formulas, roots, bounds, valuation)
    ctx = _GlobalContext(dpn, dict(formulas), bounds, valuation)

    targets: set = set()
    queue = list(dict.fromkeys(roots))
    processed: set = set()
    overflow = False
    while queue:
        cfg = queue.pop()
        key = (cfg.process, cfg.control, cfg.word)
        if key in processed:
            continue
        processed.add(key)
        for lasso in ctx.satisfying(cfg):
            for t in sorted(lasso.spawned_targets()):
                if t not in targets:
                    if len(targets) >= bounds.max_instances:
                        overflow = True
                        continue
                    targets.add(t)
                    queue.append(t)
    if overflow:
        ctx.reasons.add("instance_bound")

    good = set(targets)
    changed = True
    while changed:
        changed = False
        for t in sorted(good):
            if not any(
                l.spawned_targets() <= good for l in ctx.satisfying(t)
            ):
                good.discard(t)
                changed = True
                break

    witnesses = {}
    all_sat = True
    for cfg in roots:
        pick = next(
            (l for l in ctx.satisfying(cfg) if l.spawned_targets() <= good), None
        )
        if pick is None:
            all_sat = False
            break
        witnesses[cfg.pretty()] = pick.describe()
    if all_sat:
        for t in sorted(good):
            pick = next(l for l in ctx.satisfying(t) if l.spawned_targets() <= good)
            witnesses.setdefault(t.pretty(), pick.describe())
        return OracleAnswer("sat", witnesses=witnesses)
    if not ctx.reasons:
        return OracleAnswer("unsat")
    return OracleAnswer("unknown", reason=_reason(ctx.reasons))


# ---------------------------------------------------------------------------
# Global check with locks
# ---------------------------------------------------------------------------


def _held_profile(lasso: Lasso) -> list:
    return [s.config.held for s in lasso.steps]


def _interleavable(tapes: list, budget: int) -> tuple:
    """Is there a fair mutex-respecting interleaving of the given lassos?

    ``tapes`` entries are (lasso, birth) where birth is None for root
    instances or (parent tape index, parent step index).  Nodes of the
    scheduler product are (positions, born flags); an interleaving exists
    iff some reachable strongly connected component contains an advancing
    edge for every tape.  Returns (answer, budget_exhausted).
    """
    lengths = [len(t[0].steps) for t in tapes]
    starts = [t[0].cycle_start for t in tapes]
    helds = [_held_profile(t[0]) for t in tapes]
    actions = [[s.action for s in t[0].steps] for t in tapes]

    def advance(pos: int, tape: int) -> int:
        nxt = pos + 1
        return starts[tape] if nxt >= lengths[tape] else nxt

    init = (tuple(0 for _ in tapes), tuple(t[1] is None for t in tapes))
    graph = nx.DiGraph()
    graph.add_node(init)
    frontier = [init]
    seen = {init}
    exhausted = False
    while frontier:
        node = frontier.pop()
        positions, born = node
        held_union: dict = {}
        for k in range(len(tapes)):
            if born[k]:
                for lock in helds[k][positions[k]]:
                    held_union.setdefault(lock, k)
        for k in range(len(tapes)):
            if not born[k]:
                continue
            act = actions[k][positions[k]]
            if act is not None and act[0] == "acq":
                owner = held_union.get(act[1])
                if owner is not None and owner != k:
                    continue
            new_pos = list(positions)
            new_pos[k] = advance(positions[k], k)
            new_born = list(born)
            for j, t in enumerate(tapes):
                if t[1] is not None and t[1][0] == k and t[1][1] == positions[k]:
                    new_born[j] = True
            nxt = (tuple(new_pos), tuple(new_born))
            graph.add_edge(node, nxt, tape=k)
            if nxt not in seen:
                if len(seen) >= budget:
                    exhausted = True
                    continue
                seen.add(nxt)
                frontier.append(nxt)

    want = set(range(len(tapes)))
    for scc in nx.strongly_connected_components(graph):
        tapes_inside = {
            data["tape"]
            for u, v, data in graph.edges(data=True)
            if u in scc and v in scc
        }
        if tapes_inside == want:
            return True, exhausted
    return False, exhausted


def _oracle_check_locks(dpn, formulas, roots, bounds, valuation) -> OracleAnswer:
    ctx = _GlobalContext(dpn, dict(formulas), bounds, valuation)
    reasons: set = set()
    budget = [bounds.max_interleavings]

    def assign(tapes: list, queue: list) -> Optional[list]:
        """Pick lassos for queued instances, then test interleavability."""
        if budget[0] <= 0:
            reasons.add("interleaving_bound")
            return None
        if not queue:
            budget[0] -= 1
            ok, exhausted = _interleavable(tapes, max(budget[0], 1))
            if exhausted:
                reasons.add("interleaving_bound")
            return list(tapes) if ok else None
        (cfg, birth), rest = queue[0], queue[1:]
        key = (cfg.process, cfg.control, cfg.word)
        # One representative per distinct spawned start configuration; root
        # instances always get their own tape (multiset semantics).
        if birth is not None and any(t[2] == key for t in tapes):
            return assign(tapes, rest)
        if len(tapes) >= bounds.max_instances:
            reasons.add("instance_bound")
            return None
        my_index = len(tapes)
        for lasso in ctx.satisfying(cfg):
            spawned = []
            for step_idx, s in enumerate(lasso.steps):
                if s.spawned is not None:
                    spawned.append((s.spawned, (my_index, step_idx)))
            result = assign(tapes + [(lasso, birth, key)], rest + spawned)
            if result is not None:
                return result
        return None

    queue = [(cfg, None) for cfg in roots]
    found = assign([], queue)
    if found is not None:
        witnesses = {
            t[0].steps[0].config.pretty() if t[0].steps else str(t[2]): t[0].describe()
            for t in found
        }
        return OracleAnswer("sat", witnesses=witnesses)
    if not reasons and not ctx.reasons:
        return OracleAnswer("unsat")
    return OracleAnswer("unknown", reason=_reason(reasons | ctx.reasons))
