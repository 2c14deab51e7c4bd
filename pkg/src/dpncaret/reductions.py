"""Regular-valuation encoding and the lock-network front end.

Regular valuations: a proposition may hold at a configuration depending on
the whole stack, given per-control deterministic automata that read the
stack bottom-to-top.  The encoding annotates every stack symbol with the
automata states reached strictly below it, so pushes and pops update the
annotation locally; truth of an encoded proposition becomes a function of
the configuration head (control plus annotated top symbol) and is stored
in head labels.

Lock networks: rules may acquire or release locks from a declared set,
accessed in a well-nested non-reentrant way.  The translation products
each process with an acquisition structure held in control locations: the
ordered stack of currently held locks, a per-run summary guess (locks
eventually held forever; locks acquired infinitely often), a phase bit
that turns the summary into checkable Büchi obligations, and the lock
just acquired.  Instances are then checked independently per summary, and
a global configuration is satisfiable iff some pairwise-compatible
assignment of summaries to its instances makes every instance accepting:
eternal sets must be disjoint and nobody may need a lock forever-often
that another instance eventually holds forever.  Spawned instances are
restricted to empty eternal sets (a declared engineering bound; the
random agreement suite keeps spawned instances lock-free).
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping, Optional, Sequence

from .buchi import (
    Bdpn,
    MembershipEngine,
    SpawnTarget,
    Verdict,
    check,
    degeneralize_gbdpn,
    product_spawn_encodings,
    root_encodings,
)
from .formula import Formula
from .model import (
    Dpds,
    Dpn,
    LocalConfig,
    ModelValidationError,
    Rule,
    Spawn,
    stutter_extend,
    validate_dpn,
)
from .product import Gbdpds, Gbdpn, build_product, product_sizes


class ValuationError(Exception):
    pass


class LockError(Exception):
    pass


# ---------------------------------------------------------------------------
# Regular valuations
# ---------------------------------------------------------------------------

_SINK = "!sink"


@dataclass(frozen=True)
class Dfa:
    """Deterministic, complete automaton over one process's stack alphabet."""

    states: tuple
    start: str
    finals: frozenset
    trans: tuple  # sorted ((state, symbol), state) pairs

    def table(self) -> dict:
        return dict(self.trans)


@dataclass
class RegularValuation:
    """Per-proposition, per-control stack automata (read bottom-to-top)."""

    entries: dict  # prop -> {control: Dfa}

    def props(self) -> frozenset:
        return frozenset(self.entries)

    def props_at(self, process: str, control: str, word: tuple) -> frozenset:
        out = set()
        for prop, per_control in self.entries.items():
            dfa = per_control.get(control)
            if dfa is None:
                continue
            table = dfa.table()
            state = dfa.start
            for sym in reversed(word):
                state = table.get((state, sym), _SINK)
            if state in dfa.finals:
                out.add(prop)
        return frozenset(out)

    def remap_controls(self, origin: Mapping[str, str]) -> "RegularValuation":
        """Re-key control entries through a translated-to-original map."""
        entries: dict = {}
        for prop, per_control in self.entries.items():
            new: dict = {}
            for translated, original in origin.items():
                dfa = per_control.get(original)
                if dfa is not None:
                    new[translated] = dfa
            if new:
                entries[prop] = new
        return RegularValuation(entries)


def parse_valuation(text: str, dpn: Dpn) -> RegularValuation:
    """Parse the valuation file format and validate against the model.

    Automata must be deterministic and complete over the owning process's
    stack alphabet; ``default`` rows fill the remaining symbols of a state.
    """
    from .model import _ModelParser  # same token conventions as the model format

    p = _ModelParser(text)
    entries: dict = {}
    while p.peek() is not None:
        kw = p.next()
        if kw != "prop":
            raise ValuationError(f"expected 'prop', found {kw!r}")
        prop = p.next()
        if prop not in dpn.ap:
            raise ValuationError(f"valuation for undeclared proposition {prop!r}")
        p.expect("for")
        controls = []
        while p.peek() != "{":
            controls.append(p.next())
        if not controls:
            raise ValuationError(f"prop {prop}: no controls named")
        control = controls[0]
        process = dpn.owner_of_control(control)
        for c in controls[1:]:
            if dpn.owner_of_control(c) != process:
                raise ValuationError(
                    f"prop {prop}: controls {control} and {c} belong to "
                    "different processes"
                )
        alphabet = tuple(dpn.process(process).alphabet)
        p.expect("{")
        states: list = []
        start: Optional[str] = None
        finals: set = set()
        edges: dict = {}
        defaults: dict = {}
        while p.peek() != "}":
            stmt = p.next()
            if stmt == "states":
                while p.peek() != ";":
                    states.append(p.next())
                p.expect(";")
            elif stmt == "start":
                start = p.next()
                p.expect(";")
            elif stmt == "final":
                while p.peek() != ";":
                    finals.add(p.next())
                p.expect(";")
            elif stmt == "edge":
                src, sym, dst = p.next(), p.next(), p.next()
                p.expect(";")
                if (src, sym) in edges:
                    raise ValuationError(
                        f"prop {prop}/{control}: nondeterministic on ({src}, {sym})"
                    )
                edges[(src, sym)] = dst
            elif stmt == "default":
                src, dst = p.next(), p.next()
                p.expect(";")
                defaults[src] = dst
            else:
                raise ValuationError(f"unknown valuation statement {stmt!r}")
        p.expect("}")
        if start is None or not states:
            raise ValuationError(f"prop {prop}/{control}: missing states or start")
        known = set(states)
        for (src, sym), dst in edges.items():
            if src not in known or dst not in known:
                raise ValuationError(f"prop {prop}/{control}: unknown state in edge")
            if sym not in alphabet:
                raise ValuationError(
                    f"prop {prop}/{control}: edge symbol {sym!r} outside the alphabet"
                )
        for s in states:
            for sym in alphabet:
                if (s, sym) not in edges:
                    if s in defaults:
                        edges[(s, sym)] = defaults[s]
                    else:
                        raise ValuationError(
                            f"prop {prop}/{control}: incomplete at ({s}, {sym})"
                        )
        dfa = Dfa(
            tuple(states),
            start,
            frozenset(finals),
            tuple(sorted(edges.items())),
        )
        for c in controls:
            entries.setdefault(prop, {})[c] = dfa
    return RegularValuation(entries)


@dataclass
class EncodedModel:
    dpn: Dpn
    valuation: RegularValuation
    components: dict  # process -> tuple of (prop, control)
    vectors: dict  # process -> tuple of state vectors

    def encode_word(self, process: str, word: tuple) -> tuple:
        comps = self.components.get(process, ())
        if not comps:
            return word
        return _annotate(self, process, word, _initial_vector(self, process))

    def encode_config(self, cfg: LocalConfig) -> LocalConfig:
        return LocalConfig(cfg.process, cfg.control, self.encode_word(cfg.process, cfg.word))


def _initial_vector(enc: EncodedModel, process: str) -> tuple:
    return tuple(
        enc.valuation.entries[prop][control].start
        for prop, control in enc.components[process]
    )


def _vector_step(enc: EncodedModel, process: str, vec: tuple, sym: str) -> tuple:
    out = []
    for k, (prop, control) in enumerate(enc.components[process]):
        table = enc.valuation.entries[prop][control].table()
        out.append(table.get((vec[k], sym), _SINK))
    return tuple(out)


def _encoded_symbol(sym: str, vec: tuple) -> str:
    return sym + "@" + ".".join(vec)


def _annotate(enc: EncodedModel, process: str, word: tuple, base_vec: tuple) -> tuple:
    """Annotate a word whose content sits on a stack with state vector base_vec.

    Symbols are annotated bottom-up: the deepest new symbol carries the
    base vector, each one above carries the vector advanced by the symbol
    below it.
    """
    out: list = []
    vec = base_vec
    for sym in reversed(word):
        out.append(_encoded_symbol(sym, vec))
        vec = _vector_step(enc, process, vec, sym)
    out.reverse()
    return tuple(out)


def regval_encode(dpn: Dpn, valuation: RegularValuation) -> EncodedModel:
    """Encode a regular valuation into stack annotations and head labels.

    The result has the same control locations and rule structure; stack
    symbols become (symbol, state vector) pairs and every encoded
    proposition is decided by the head labels, leaving control labels for
    the remaining propositions untouched.
    """
    diags = validate_dpn(dpn)
    if diags:
        raise ModelValidationError(diags)
    for prop in valuation.entries:
        for control, props in dpn.control_labels.items():
            if prop in props:
                raise ValuationError(
                    f"proposition {prop!r} has both a control label and a valuation"
                )

    components: dict = {}
    vectors: dict = {}
    for proc in dpn.processes:
        comps = sorted(
            (prop, control)
            for prop, per_control in valuation.entries.items()
            for control in per_control
            if control in set(proc.controls)
        )
        components[proc.name] = tuple(comps)
        if comps:
            tables = [valuation.entries[prop][control].table() for prop, control in comps]
            start = tuple(
                valuation.entries[prop][control].start for prop, control in comps
            )
            reachable = {start}
            frontier = [start]
            while frontier:
                vec = frontier.pop()
                for sym in proc.alphabet:
                    nxt = tuple(
                        tables[k].get((vec[k], sym), _SINK) for k in range(len(comps))
                    )
                    if nxt not in reachable:
                        reachable.add(nxt)
                        frontier.append(nxt)
            vectors[proc.name] = tuple(sorted(reachable))
        else:
            vectors[proc.name] = ()

    enc = EncodedModel(dpn, valuation, components, vectors)

    new_processes = []
    head_labels: dict = dict(dpn.head_labels)
    for proc in dpn.processes:
        comps = components[proc.name]
        if not comps:
            new_rules = []
            for r in proc.rules:
                spawn = r.spawn
                if spawn is not None and components[spawn.process]:
                    spawn = Spawn(
                        spawn.process,
                        spawn.control,
                        _annotate(enc, spawn.process, spawn.word,
                                  _initial_vector(enc, spawn.process)),
                    )
                new_rules.append(replace(r, spawn=spawn))
            new_processes.append(replace(proc, rules=tuple(new_rules)))
            continue
        new_alphabet = tuple(
            _encoded_symbol(sym, vec)
            for sym in proc.alphabet
            for vec in vectors[proc.name]
        )
        new_rules = []
        for r in proc.rules:
            for vec in vectors[proc.name]:
                spawn = r.spawn
                if spawn is not None and components[spawn.process]:
                    spawn = Spawn(
                        spawn.process,
                        spawn.control,
                        _annotate(enc, spawn.process, spawn.word,
                                  _initial_vector(enc, spawn.process)),
                    )
                new_rules.append(
                    Rule(
                        r.control,
                        _encoded_symbol(r.symbol, vec),
                        r.tag,
                        r.target,
                        _annotate(enc, proc.name, r.word, vec),
                        spawn,
                        r.action,
                    )
                )
        new_processes.append(
            Dpds(proc.name, proc.controls, new_alphabet, tuple(new_rules))
        )
        for control in proc.controls:
            for sym in proc.alphabet:
                for vec in vectors[proc.name]:
                    holding = frozenset(
                        prop
                        for k, (prop, ctl) in enumerate(comps)
                        if ctl == control
                        and _vector_step(enc, proc.name, vec, sym)[k]
                        in valuation.entries[prop][ctl].finals
                    )
                    if holding:
                        head_labels[(control, _encoded_symbol(sym, vec))] = holding

    encoded_dpn = Dpn(
        processes=tuple(new_processes),
        ap=dpn.ap,
        control_labels=dict(dpn.control_labels),
        head_labels=head_labels,
        locks=dpn.locks,
    )
    enc.dpn = encoded_dpn
    return enc


def check_with_valuation(
    dpn: Dpn,
    valuation: RegularValuation,
    formulas: Mapping[str, Formula],
    roots: Iterable[LocalConfig],
    *,
    stutter: bool = False,
) -> Verdict:
    enc = regval_encode(dpn, valuation)
    encoded_roots = [enc.encode_config(cfg) for cfg in roots]
    return check(enc.dpn, formulas, encoded_roots, stutter=stutter)


# ---------------------------------------------------------------------------
# Nested-lock discipline
# ---------------------------------------------------------------------------


def validate_nested(actions: Iterable[Optional[tuple]]) -> list:
    """Diagnostics for a lock-action sequence under nested discipline.

    Flags re-entrant acquisitions and releases of anything but the most
    recently acquired unreleased lock; the offending action is skipped and
    simulation continues.
    """
    diags: list = []
    held: list = []
    for pos, action in enumerate(actions):
        if action is None:
            continue
        kind, lock = action
        if kind == "acq":
            if lock in held:
                diags.append(f"position {pos}: re-entrant acquisition of {lock}")
            else:
                held.append(lock)
        else:
            if not held or held[-1] != lock:
                diags.append(
                    f"position {pos}: release of {lock} which is not the most "
                    "recently acquired unreleased lock"
                )
            else:
                held.pop()
    return diags


# ---------------------------------------------------------------------------
# Lock-network translation
# ---------------------------------------------------------------------------


def _lock_stacks(locks: Sequence[str]) -> list:
    out = [()]
    for size in range(1, len(locks) + 1):
        out.extend(itertools.permutations(locks, size))
    return out


def _summaries(locks: Sequence[str]) -> list:
    """All (eternal, infinite) disjoint pairs, deterministically ordered."""
    out = []
    for eternal in _subsets(locks):
        rest = [l for l in locks if l not in eternal]
        for infinite in _subsets(rest):
            out.append((frozenset(eternal), frozenset(infinite)))
    return out


def _subsets(items: Sequence[str]) -> list:
    out = []
    for mask in range(1 << len(items)):
        out.append(tuple(items[k] for k in range(len(items)) if mask >> k & 1))
    return out


def _mangle(control: str, held: tuple, eternal: frozenset, infinite: frozenset,
            phase: int, just: Optional[str]) -> str:
    def part(xs) -> str:
        xs = list(xs)
        return ".".join(xs) if xs else "-"

    return "%".join(
        [control, part(held), part(sorted(eternal)), part(sorted(infinite)),
         str(phase), just or "-"]
    )


@dataclass
class LockTranslation:
    dpn: Dpn
    origin: dict  # translated control -> original control
    summary_of: dict  # translated control -> (eternal, infinite)
    families: dict  # process -> list of (name, frozenset of translated controls)
    start_controls: dict  # (original control, eternal, infinite) -> translated
    pure_tau: bool


def _touches_locks(proc: Dpds) -> bool:
    return any(r.action is not None for r in proc.rules)


def lock_translate(ldpn: Dpn) -> LockTranslation:
    """Product each process with its acquisition structure.

    Control components: (original control, held-lock stack, summary
    (eternal, infinite), phase, just-acquired lock).  Phase 1 is entered
    nondeterministically, is absorbing, and structurally enforces the
    summary: eternal locks stay held, only summary locks may be touched,
    everything else was finished in the finite phase-0 prefix.  Per-lock
    Büchi families make infinite acquisition claims honest.
    """
    diags = validate_dpn(ldpn)
    if diags:
        raise ModelValidationError(diags)
    if not ldpn.has_locks or all(not _touches_locks(p) for p in ldpn.processes):
        stripped = Dpn(
            processes=tuple(
                replace(p, rules=tuple(replace(r, action=None) for r in p.rules))
                for p in ldpn.processes
            ),
            ap=ldpn.ap,
            control_labels=dict(ldpn.control_labels),
            head_labels=dict(ldpn.head_labels),
            locks=frozenset(),
        )
        return LockTranslation(
            dpn=stripped,
            origin={c: c for p in stripped.processes for c in p.controls},
            summary_of={},
            families={p.name: [] for p in stripped.processes},
            start_controls={},
            pure_tau=True,
        )

    locks = tuple(sorted(ldpn.locks))
    summaries = _summaries(locks)
    spawn_summaries = [(e, i) for e, i in summaries if not e]

    new_processes = []
    origin: dict = {}
    summary_of: dict = {}
    families: dict = {}
    start_controls: dict = {}
    control_labels: dict = {}

    for proc in ldpn.processes:
        # Reachable control states, over-approximated by ignoring stack
        # symbols: seeds are instance starts (empty held stack, phase 0).
        seeds = []
        for control in proc.controls:
            for eternal, infinite in summaries:
                state = (control, (), eternal, infinite, 0, None)
                seeds.append(state)
                start_controls[(control, eternal, infinite)] = _mangle(*state)
        reachable = set(seeds)
        frontier = list(seeds)
        edges: list = []  # (state, rule, new state)
        while frontier:
            state = frontier.pop()
            control, held, eternal, infinite, phase, _just = state
            for r in proc.rules:
                if r.control != control:
                    continue
                held2 = _lock_apply(held, r.action)
                if held2 is None:
                    continue
                just2 = r.action[1] if r.action is not None and r.action[0] == "acq" else None
                for phase2 in ((0, 1) if phase == 0 else (1,)):
                    if phase2 == 1:
                        hs = set(held2)
                        if not (eternal <= hs and hs <= eternal | infinite):
                            continue
                    nxt = (r.target, held2, eternal, infinite, phase2, just2)
                    edges.append((state, r, nxt))
                    if nxt not in reachable:
                        reachable.add(nxt)
                        frontier.append(nxt)

        controls = tuple(sorted(_mangle(*s) for s in reachable))
        for s in reachable:
            name = _mangle(*s)
            origin[name] = s[0]
            summary_of[name] = (s[2], s[3])
            control_labels[name] = ldpn.control_labels.get(s[0], frozenset())

        rules = []
        for state, r, nxt in edges:
            spawn = r.spawn
            spawns: list = [None] if spawn is None else []
            if spawn is not None:
                for eternal_s, infinite_s in spawn_summaries:
                    start = (spawn.control, (), eternal_s, infinite_s, 0, None)
                    key = (spawn.control, eternal_s, infinite_s)
                    start_controls.setdefault(key, _mangle(*start))
                    spawns.append(Spawn(spawn.process, _mangle(*start), spawn.word))
            for sp in spawns:
                rules.append(
                    Rule(
                        _mangle(*state),
                        r.symbol,
                        r.tag,
                        _mangle(*nxt),
                        r.word,
                        sp,
                        None,
                    )
                )
        new_processes.append(
            Dpds(proc.name, controls, proc.alphabet, tuple(sorted(rules, key=repr)))
        )
        fam = [
            (
                "lock-phase",
                frozenset(
                    _mangle(*s) for s in reachable if s[4] == 1
                ),
            )
        ]
        for lock in locks:
            fam.append(
                (
                    f"lock-infinite:{lock}",
                    frozenset(
                        _mangle(*s)
                        for s in reachable
                        if lock not in s[3] or s[5] == lock
                    ),
                )
            )
        families[proc.name] = fam

    translated = Dpn(
        processes=tuple(new_processes),
        ap=ldpn.ap,
        control_labels=control_labels,
        head_labels=_lift_head_labels(ldpn, origin),
        locks=frozenset(),
    )
    return LockTranslation(
        dpn=translated,
        origin=origin,
        summary_of=summary_of,
        families=families,
        start_controls=start_controls,
        pure_tau=False,
    )


def _lift_head_labels(ldpn: Dpn, origin: Mapping[str, str]) -> dict:
    if not ldpn.head_labels:
        return {}
    lifted = {}
    by_original: dict = {}
    for (control, sym), props in ldpn.head_labels.items():
        by_original.setdefault(control, []).append((sym, props))
    for translated, original in origin.items():
        for sym, props in by_original.get(original, ()):
            lifted[(translated, sym)] = props
    return lifted


def _lock_apply(held: tuple, action: Optional[tuple]) -> Optional[tuple]:
    if action is None:
        return held
    kind, lock = action
    if kind == "acq":
        return None if lock in held else held + (lock,)
    return held[:-1] if held and held[-1] == lock else None


def ldpn_to_dpn(ldpn: Dpn) -> Dpn:
    """The spec-facing reduction: lock network to plain network."""
    return lock_translate(ldpn).dpn


# ---------------------------------------------------------------------------
# Checking lock networks
# ---------------------------------------------------------------------------


def _lift_families(translation: LockTranslation):
    """Product-extension hook adding the lock acceptance families."""

    def extend(gbdpn: Gbdpn) -> Gbdpn:
        members = []
        for m in gbdpn.members:
            extra = translation.families.get(m.name, [])
            new_acceptance = list(m.acceptance)
            new_names = list(m.acceptance_names)
            for name, base_set in extra:
                new_acceptance.append(
                    frozenset(pc for pc in m.controls if pc.base in base_set)
                )
                new_names.append(name)
            members.append(
                replace_member(m, tuple(new_acceptance), tuple(new_names))
            )
        return Gbdpn(gbdpn.dpn, gbdpn.formulas, tuple(members))

    return extend


def replace_member(m: Gbdpds, acceptance, names) -> Gbdpds:
    return Gbdpds(
        name=m.name,
        source=m.source,
        table=m.table,
        formula=m.formula,
        initial_atoms=m.initial_atoms,
        controls=m.controls,
        grid_count=m.grid_count,
        alphabet=m.alphabet,
        rules=m.rules,
        acceptance=acceptance,
        acceptance_names=names,
    )


def _compatible(assignment: Sequence[tuple]) -> bool:
    for i in range(len(assignment)):
        for j in range(len(assignment)):
            if i == j:
                continue
            ei, _ = assignment[i]
            ej, ij = assignment[j]
            if i < j and ei & ej:
                return False
            if ei & ij:
                return False
    return True


def check_lock_network(
    ldpn: Dpn,
    formulas: Mapping[str, Formula],
    roots: Iterable[LocalConfig],
    *,
    stutter: bool = False,
) -> Verdict:
    """Decide satisfaction for a lock network.

    Enumerates summary assignments for the root instances; for each
    compatible assignment the translated network is checked with spawn
    targets pruned to summaries compatible with the eternally held locks.
    """
    t0 = time.perf_counter()
    roots = list(roots)
    if stutter:
        ldpn, roots = stutter_extend(ldpn, roots)
    translation = lock_translate(ldpn)
    if translation.pure_tau:
        return check(translation.dpn, formulas, roots)

    gbdpn = build_product(translation.dpn, formulas)
    gbdpn = _lift_families(translation)(gbdpn)
    bdpn = degeneralize_gbdpn(gbdpn)
    engine = MembershipEngine(bdpn, product_spawn_encodings)

    locks = tuple(sorted(ldpn.locks))
    summaries = _summaries(locks)

    def target_summary(key: SpawnTarget) -> tuple:
        return translation.summary_of.get(key.control.base, (frozenset(), frozenset()))

    good_by_eternal: dict = {}

    def good_for(eternal_union: frozenset) -> frozenset:
        cached = good_by_eternal.get(eternal_union)
        if cached is None:
            cached = engine.good_dclics(
                keep=lambda key: not (target_summary(key)[1] & eternal_union)
            )
            good_by_eternal[eternal_union] = cached
        return cached

    best: Optional[list] = None
    for assignment in itertools.product(summaries, repeat=len(roots)):
        if not _compatible(assignment):
            continue
        eternal_union = frozenset().union(*(e for e, _ in assignment)) if assignment else frozenset()
        good = good_for(eternal_union)
        per_config = []
        ok = True
        for cfg, (eternal, infinite) in zip(roots, assignment):
            start = translation.start_controls.get((cfg.control, eternal, infinite))
            if start is None:
                ok = False
                break
            member_name = translation.dpn.owner_of_control(start)
            member = gbdpn.member(member_name)
            auto = engine.automaton(member_name, good)
            lifted = LocalConfig(cfg.process, start, cfg.word)
            witness = None
            for atom in member.initial_atoms:
                if any(
                    auto.accepts(c, w)
                    for c, w in root_encodings(member, lifted, atom.index)
                ):
                    witness = atom.index
                    break
            if witness is None:
                ok = False
                break
            per_config.append((cfg, witness))
        if ok:
            best = per_config
            final_good = good
            break

    sizes = {
        m.name: dict(product_sizes(m)) for m in gbdpn.members
    }
    t1 = time.perf_counter()
    if best is not None:
        return Verdict(
            "sat", best, final_good, sizes, {"total": t1 - t0}
        )
    return Verdict(
        "unsat", [(cfg, None) for cfg in roots], frozenset(), sizes, {"total": t1 - t0}
    )
