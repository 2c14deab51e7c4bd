"""Product of a pushdown network with per-process formula atoms.

For each process and its formula the product automaton guesses, at every
step, the atom of closure members that hold and a label recording whether
the currently running procedure ever finishes along the run.  Call rules
stash the caller's atom and label inside the pushed return-point symbol;
the matching pop re-checks abstract-successor and caller-chain consistency
when that symbol resurfaces.  Acceptance is a generalized Büchi family:
one set forcing the unexit label to recur, one set per global-until for
its liveness obligation, and one per abstract-until restricted to unexit
states.

Initial configurations with more than one stack symbol additionally mark
the deeper frames with initial-frame annotations so a run may return out
of its starting procedure; each such frame carries its own guessed label,
and popping into it forces the caller chain empty (the run has no open
calls there).  Single-symbol starts never exercise this and behave exactly
like the plain construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Optional

from .formula import Atom, AtomTable, Formula, closure, format_formula
from .model import Dpn, Dpds, GlobalConfig, LocalConfig, ModelValidationError, validate_dpn

LABELS = ("exit", "unexit")


class ProductError(Exception):
    pass


@dataclass(frozen=True, order=True)
class ProdControl:
    base: str
    atom: int
    label: str

    def pretty(self) -> str:
        return f"<{self.base},A{self.atom},{self.label}>"


# Stack symbols are tagged tuples so they sort and hash cheaply:
#   ('s', gamma)                  plain symbol
#   ('r', gamma, atom, label)     return point annotated at a call
#   ('i', gamma, label)           initial-frame annotation
def plain(sym: str) -> tuple:
    return ("s", sym)


def ret_annot(sym: str, atom: int, label: str) -> tuple:
    return ("r", sym, atom, label)


def init_annot(sym: str, label: str) -> tuple:
    return ("i", sym, label)


def sym_pretty(sym: tuple) -> str:
    if sym[0] == "s":
        return sym[1]
    if sym[0] == "r":
        return f"{sym[1]}~A{sym[2]}{sym[3][0]}"
    return f"{sym[1]}~init{sym[2][0]}"


@dataclass(frozen=True, order=True)
class ProdSpawn:
    process: str
    control: ProdControl
    word: tuple


@dataclass(frozen=True, order=True)
class ProdRule:
    kind: str  # 'call' | 'ret' | 'merge' | 'int' | 'init'
    control: ProdControl
    symbol: tuple
    target: ProdControl
    word: tuple
    spawn: Optional[ProdSpawn] = None


@dataclass
class Gbdpds:
    name: str
    source: Dpds
    table: AtomTable
    formula: Formula
    initial_atoms: tuple
    controls: tuple  # controls participating in rules
    grid_count: int  # size of the full control grid (labels included)
    alphabet: tuple
    rules: tuple
    acceptance: tuple  # frozensets of ProdControl; unexit recurrence first
    acceptance_names: tuple


@dataclass
class Gbdpn:
    dpn: Dpn
    formulas: dict
    members: tuple

    def member(self, name: str) -> Gbdpds:
        for m in self.members:
            if m.name == name:
                return m
        raise KeyError(name)


def initial_atoms_of(table: AtomTable) -> tuple:
    """Atoms containing the root formula with no caller-next members."""
    root = table.closure.index[table.closure.root]
    return tuple(
        a for a in table.atoms if a.has(root) and table.caller_forms_mask(a) == 0
    )


def initial_atoms(f: Formula) -> tuple:
    return initial_atoms_of(AtomTable(closure(f)))


def _require_discipline(proc: Dpds) -> None:
    for k, r in enumerate(proc.rules):
        if r.tag == "int" and len(r.word) != 1:
            raise ProductError(
                f"{proc.name} rule #{k}: the product construction requires internal "
                f"rules to rewrite exactly one symbol (got {len(r.word)}); "
                "word-level call/return matching diverges from the stack otherwise"
            )


def build_product(dpn: Dpn, formulas: Mapping[str, Formula]) -> Gbdpn:
    """Build one product automaton per process of the network."""
    diags = validate_dpn(dpn)
    if diags:
        raise ModelValidationError(diags)
    missing = [p.name for p in dpn.processes if p.name not in formulas]
    if missing:
        raise ProductError(f"no formula for processes: {', '.join(missing)}")
    tables = {name: AtomTable(closure(f)) for name, f in formulas.items()}
    initial = {name: initial_atoms_of(t) for name, t in tables.items()}
    members = tuple(
        _build_member(dpn, proc, tables[proc.name], initial)
        for proc in dpn.processes
    )
    return Gbdpn(dpn, dict(formulas), members)


def _build_member(
    dpn: Dpn, proc: Dpds, table: AtomTable, initial: Mapping[str, tuple]
) -> Gbdpds:
    _require_discipline(proc)
    head_mode = bool(dpn.head_labels)
    atoms = table.atoms
    # Only propositions occurring in the formula's closure matter for atom
    # compatibility; model labels outside the closure are semantically inert.
    relevant = frozenset(name for _, name in table.closure.ap_members)

    by_tag: dict[str, list[Atom]] = {"call": [], "ret": [], "int": []}
    for a in atoms:
        by_tag[a.tag].append(a)
    by_required_g: dict[int, list[Atom]] = {}
    for a in atoms:
        by_required_g.setdefault(a.required[0], []).append(a)

    def lam(control: str, symbol: str) -> frozenset:
        return dpn.label_of(control, symbol) & relevant

    def spawn_variants(rule_spawn) -> list:
        if rule_spawn is None:
            return [None]
        target_initial = initial[rule_spawn.process]
        return [
            ProdSpawn(
                rule_spawn.process,
                ProdControl(rule_spawn.control, a0.index, "unexit"),
                tuple(plain(s) for s in rule_spawn.word),
            )
            for a0 in target_initial
        ]

    rules: list[ProdRule] = []
    pushed: set = set()
    ret_targets: set = set()

    for r in proc.rules:
        spawns = spawn_variants(r.spawn)
        if not spawns:
            continue  # spawned process has no viable initial atom: rule disabled
        lam_src = lam(r.control, r.symbol)
        if r.tag == "call":
            entry_sym, retpt_sym = r.word
            lam_dst = lam(r.target, entry_sym)
            for a in by_tag["call"]:
                if a.props != lam_src:
                    continue
                for a2 in by_required_g.get(a.present[0], ()):
                    if a2.props != lam_dst:
                        continue
                    if not table.caller_next(a2, a):
                        continue
                    for lab in LABELS:
                        for lab2 in LABELS:
                            if lab2 == "unexit" and not (
                                lab == "unexit" and table.abstract_forms_empty(a)
                            ):
                                continue
                            ann = ret_annot(retpt_sym, a.index, lab)
                            pushed.add(ann)
                            for sp in spawns:
                                rules.append(
                                    ProdRule(
                                        "call",
                                        ProdControl(r.control, a.index, lab),
                                        plain(r.symbol),
                                        ProdControl(r.target, a2.index, lab2),
                                        (plain(entry_sym), ann),
                                        sp,
                                    )
                                )
        elif r.tag == "ret":
            for a in by_tag["ret"]:
                if a.props != lam_src:
                    continue
                if not table.abstract_forms_empty(a):
                    continue
                for a2 in by_required_g.get(a.present[0], ()):
                    if not head_mode and a2.props != dpn.label_of(r.target) & relevant:
                        continue
                    for lab2 in LABELS:
                        target = ProdControl(r.target, a2.index, lab2)
                        ret_targets.add(target)
                        for sp in spawns:
                            rules.append(
                                ProdRule(
                                    "ret",
                                    ProdControl(r.control, a.index, "exit"),
                                    plain(r.symbol),
                                    target,
                                    (),
                                    sp,
                                )
                            )
        else:
            (dst_sym,) = r.word
            lam_dst = lam(r.target, dst_sym)
            for a in by_tag["int"]:
                if a.props != lam_src:
                    continue
                for a2 in by_required_g.get(a.present[0], ()):
                    if a2.props != lam_dst:
                        continue
                    if not table.abstract_next(a, a2):
                        continue
                    if a.present[2] != a2.present[2]:  # caller-next members agree
                        continue
                    for lab in LABELS:
                        for sp in spawns:
                            rules.append(
                                ProdRule(
                                    "int",
                                    ProdControl(r.control, a.index, lab),
                                    plain(r.symbol),
                                    ProdControl(r.target, a2.index, lab),
                                    (plain(dst_sym),),
                                    sp,
                                )
                            )

    # Annotated symbols (call annotations and initial-frame annotations) can
    # only surface as the stack top immediately after a pop, so merge rules
    # are needed exactly at the target controls of return rules.
    #
    # Return-point merges rewrite the resurfaced annotated symbol back to
    # its base symbol, checking abstract-successor and caller-chain
    # consistency against the atom stored at the call and restoring the
    # caller's label.  Initial-frame merges have no matching call in the
    # word: they require an empty caller chain and restore the frame's
    # guessed label.
    for tgt in sorted(ret_targets):
        a2 = atoms[tgt.atom]
        seen_syms = set()
        for ann in sorted(pushed):
            _, base_sym, a0_index, lab0 = ann
            if lab0 != tgt.label:
                continue
            a0 = atoms[a0_index]
            if not table.abstract_next(a0, a2):
                continue
            if a0.present[2] != a2.present[2]:
                continue
            if a2.props != lam(tgt.base, base_sym):
                continue
            rules.append(
                ProdRule("merge", tgt, ann, tgt, (plain(base_sym),), None)
            )
        if table.caller_forms_mask(a2) == 0:
            for base_sym in proc.alphabet:
                if a2.props != lam(tgt.base, base_sym):
                    continue
                rules.append(
                    ProdRule(
                        "init",
                        tgt,
                        init_annot(base_sym, tgt.label),
                        tgt,
                        (plain(base_sym),),
                        None,
                    )
                )

    participating: set = set()
    for r in rules:
        participating.add(r.control)
        participating.add(r.target)
    grid = tuple(sorted(participating))

    family: list[frozenset] = [
        frozenset(pc for pc in grid if pc.label == "unexit")
    ]
    names = ["unexit-recurrence"]
    cl = table.closure
    for i, _l, rgt, _x in cl.until_forms["g"]:
        family.append(
            frozenset(
                pc
                for pc in grid
                if not atoms[pc.atom].has(i) or atoms[pc.atom].has(rgt)
            )
        )
        names.append(f"until-g:{format_formula(cl.members[i])}")
    for i, _l, rgt, _x in cl.until_forms["a"]:
        family.append(
            frozenset(
                pc
                for pc in grid
                if pc.label == "unexit"
                and (not atoms[pc.atom].has(i) or atoms[pc.atom].has(rgt))
            )
        )
        names.append(f"until-a:{format_formula(cl.members[i])}")

    alphabet = tuple(
        [plain(s) for s in proc.alphabet]
        + sorted(pushed)
        + [init_annot(s, lab) for s in proc.alphabet for lab in LABELS]
    )
    if head_mode:
        grid_count = len(proc.controls) * len(atoms) * 2
    else:
        grid_count = 2 * sum(
            1
            for p in proc.controls
            for a in atoms
            if a.props == dpn.label_of(p) & relevant
        )
    return Gbdpds(
        name=proc.name,
        source=proc,
        table=table,
        formula=cl.root,
        initial_atoms=initial[proc.name],
        controls=grid,
        grid_count=grid_count,
        alphabet=alphabet,
        rules=tuple(sorted(rules, key=repr)),
        acceptance=tuple(family),
        acceptance_names=tuple(names),
    )


# ---------------------------------------------------------------------------
# Source configurations in the product
# ---------------------------------------------------------------------------


def corresponding_configs(G: Iterable[LocalConfig], gbdpn: Gbdpn):
    """Plain product counterparts of a global configuration.

    Every local configuration is annotated with one initial atom of its
    process formula at the unexit label; the result is the per-local
    candidate lists together with all combinations.
    """
    per_local = []
    for cfg in sorted(G):
        name = gbdpn.dpn.owner_of_control(cfg.control)
        try:
            member = gbdpn.member(name)
        except KeyError:
            raise ProductError(f"process {name} has no formula") from None
        candidates = tuple(
            (
                name,
                ProdControl(cfg.control, a.index, "unexit"),
                tuple(plain(s) for s in cfg.word),
            )
            for a in member.initial_atoms
        )
        per_local.append((cfg, candidates))

    def combos(idx: int):
        if idx == len(per_local):
            yield ()
            return
        _, cands = per_local[idx]
        for head in cands:
            for tail in combos(idx + 1):
                yield (head,) + tail

    return per_local, set(combos(0))


def product_sizes(member: Gbdpds) -> dict:
    n_plain = len(member.source.alphabet)
    n_atoms = len(member.table.atoms)
    return {
        "controls": member.grid_count,
        "controls_used": len(member.controls),
        "symbols": n_plain + n_plain * n_atoms * 2,
        "rules": len(member.rules),
        "acceptance_sets": len(member.acceptance),
        "atoms": n_atoms,
        "initial_atoms": len(member.initial_atoms),
        "closure": len(member.table.closure),
    }


def product_to_text(gbdpn: Gbdpn) -> str:
    """Dump the product in the model text format plus acceptance sections."""

    def ctl(pc: ProdControl) -> str:
        return f"{pc.base}@{pc.atom}@{pc.label[0]}"

    out: list[str] = []
    for m in gbdpn.members:
        out.append(f"process {m.name} {{")
        out.append("  controls " + " ".join(ctl(pc) for pc in m.controls) + ";")
        for r in m.rules:
            parts = ["  rule", ctl(r.control), sym_pretty(r.symbol), "->", ctl(r.target)]
            parts.extend(sym_pretty(s) for s in r.word)
            parts.append(f"[{r.kind}]")
            if r.spawn is not None:
                parts.append("spawn")
                parts.append(r.spawn.process)
                parts.append(ctl(r.spawn.control))
                parts.extend(sym_pretty(s) for s in r.spawn.word)
            out.append(" ".join(parts) + ";")
        out.append("}")
        out.append(f"accepting {m.name} {{")
        for fam_name, fam in zip(m.acceptance_names, m.acceptance):
            members = " ".join(ctl(pc) for pc in sorted(fam))
            out.append(f"  {fam_name}: {members};")
        out.append("}")
    return "\n".join(out) + "\n"
