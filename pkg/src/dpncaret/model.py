"""Dynamic pushdown networks: data model, text format, and semantics.

A network is a family of labelled pushdown processes with pairwise
disjoint control locations.  Every rule rewrites the top of one stack, is
tagged call/ret/int, and may carry a spawn suffix creating a fresh
instance of some process of the network.  Lock networks reuse the same
structures: a rule may additionally acquire or release a declared lock
(``action``), and a network with a nonempty ``locks`` set is treated as a
lock network by the reduction front end.

Stack words are tuples with the top of the stack at index 0, matching the
``p gamma omega`` notation used throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional, Sequence

TAGS = ("call", "ret", "int")


class ModelError(Exception):
    pass


class ModelFormatError(ModelError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ModelValidationError(ModelError):
    def __init__(self, diagnostics: Sequence[str]):
        super().__init__("; ".join(diagnostics))
        self.diagnostics = list(diagnostics)


# ---------------------------------------------------------------------------
# Data model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Spawn:
    process: str
    control: str
    word: tuple[str, ...]


@dataclass(frozen=True)
class Rule:
    control: str
    symbol: str
    tag: str
    target: str
    word: tuple[str, ...]
    spawn: Optional[Spawn] = None
    action: Optional[tuple[str, str]] = None  # ('acq'|'rel', lock); None is tau


@dataclass(frozen=True)
class Dpds:
    name: str
    controls: tuple[str, ...]
    alphabet: tuple[str, ...]
    rules: tuple[Rule, ...]


@dataclass
class Dpn:
    processes: tuple[Dpds, ...]
    ap: frozenset
    control_labels: dict
    head_labels: dict = field(default_factory=dict)  # (control, symbol) -> props
    locks: frozenset = frozenset()

    def __post_init__(self):
        self._owner = {}
        for proc in self.processes:
            for c in proc.controls:
                self._owner.setdefault(c, proc.name)
        self._by_name = {proc.name: proc for proc in self.processes}

    def process(self, name: str) -> Dpds:
        return self._by_name[name]

    def process_names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.processes)

    def owner_of_control(self, control: str) -> str:
        try:
            return self._owner[control]
        except KeyError:
            raise ModelError(f"unknown control location {control!r}") from None

    def label_of(self, control: str, symbol: Optional[str] = None) -> frozenset:
        """Propositions holding at a configuration head.

        Head entries override nothing: they extend the control labels, and
        configurations whose top symbol has no head entry fall back to the
        control labels alone.
        """
        base = self.control_labels.get(control, frozenset())
        if symbol is None:
            return base
        extra = self.head_labels.get((control, symbol))
        if extra is None:
            return base
        return base | extra

    @property
    def has_locks(self) -> bool:
        return bool(self.locks)


@dataclass(frozen=True, order=True)
class LocalConfig:
    process: str
    control: str
    word: tuple[str, ...]

    def pretty(self) -> str:
        return f"{self.process}: {' '.join((self.control,) + self.word)}"


GlobalConfig = tuple  # sorted tuple of LocalConfig (multiset with duplicates)


def global_config(configs: Iterable[LocalConfig]) -> GlobalConfig:
    return tuple(sorted(configs))


# ---------------------------------------------------------------------------
# Operational semantics
# ---------------------------------------------------------------------------


def step(dpn: Dpn, cfg: LocalConfig) -> list[tuple[LocalConfig, frozenset, str]]:
    """One-step successors of a local configuration.

    Returns (successor, spawned configurations, tag) triples; an empty
    stack or a head with no applicable rule yields no successors.  Lock
    actions are not interpreted here; lock-aware exploration lives in the
    oracle.
    """
    if not cfg.word:
        return []
    proc = dpn.process(cfg.process)
    top, rest = cfg.word[0], cfg.word[1:]
    out = []
    for rule in proc.rules:
        if rule.control != cfg.control or rule.symbol != top:
            continue
        succ = LocalConfig(cfg.process, rule.target, rule.word + rest)
        spawned = frozenset()
        if rule.spawn is not None:
            spawned = frozenset(
                {LocalConfig(rule.spawn.process, rule.spawn.control, rule.spawn.word)}
            )
        out.append((succ, spawned, rule.tag))
    return out


def dclics_of(dpn: Dpn, process: str) -> frozenset:
    """All spawn targets occurring in the rules of one process."""
    proc = dpn.process(process)
    return frozenset(
        LocalConfig(r.spawn.process, r.spawn.control, r.spawn.word)
        for r in proc.rules
        if r.spawn is not None
    )


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def validate_dpn(dpn: Dpn) -> list[str]:
    """Diagnostics list; empty iff all structural invariants hold."""
    diags: list[str] = []
    if not dpn.processes:
        diags.append("no processes")
        return diags
    seen_names = set()
    seen_controls: dict[str, str] = {}
    for proc in dpn.processes:
        if proc.name in seen_names:
            diags.append(f"duplicate process name {proc.name}")
        seen_names.add(proc.name)
        for c in proc.controls:
            if c in seen_controls and seen_controls[c] != proc.name:
                diags.append(
                    f"control {c} declared in both {seen_controls[c]} and {proc.name}"
                )
            seen_controls.setdefault(c, proc.name)
    by_name = {p.name: p for p in dpn.processes}
    for proc in dpn.processes:
        controls = set(proc.controls)
        alphabet = set(proc.alphabet)
        for k, rule in enumerate(proc.rules):
            where = f"{proc.name} rule #{k}"
            if rule.tag not in TAGS:
                diags.append(f"{where}: unknown tag {rule.tag}")
            if rule.tag == "call" and len(rule.word) != 2:
                diags.append(f"{where}: call rule must push exactly 2 symbols")
            if rule.tag == "ret" and rule.word:
                diags.append(f"{where}: ret rule must pop (empty right-hand word)")
            if rule.control not in controls:
                diags.append(f"{where}: unknown source control {rule.control}")
            if rule.target not in controls:
                diags.append(f"{where}: unknown target control {rule.target}")
            for s in (rule.symbol,) + rule.word:
                if s not in alphabet:
                    diags.append(f"{where}: symbol {s} not in process alphabet")
            if rule.spawn is not None:
                sp = rule.spawn
                tgt = by_name.get(sp.process)
                if tgt is None:
                    diags.append(f"{where}: spawn of unknown process {sp.process}")
                else:
                    if sp.control not in tgt.controls:
                        diags.append(
                            f"{where}: spawn control {sp.control} not in {sp.process}"
                        )
                    bad = [s for s in sp.word if s not in set(tgt.alphabet)]
                    if bad:
                        diags.append(
                            f"{where}: spawn symbols {bad} not in {sp.process}'s alphabet"
                        )
            if rule.action is not None:
                kind, lock = rule.action
                if kind not in ("acq", "rel"):
                    diags.append(f"{where}: unknown lock action {kind}")
                if lock not in dpn.locks:
                    diags.append(f"{where}: lock {lock} is not declared")
    for control, props in dpn.control_labels.items():
        if control not in seen_controls:
            diags.append(f"label for unknown control {control}")
        if not props <= dpn.ap:
            diags.append(f"label of {control} uses undeclared propositions")
    for (control, symbol), props in dpn.head_labels.items():
        if control not in seen_controls:
            diags.append(f"head label for unknown control {control}")
        else:
            proc = by_name[seen_controls[control]]
            if symbol not in set(proc.alphabet):
                diags.append(f"head label ({control}, {symbol}): unknown symbol")
        if not props <= dpn.ap:
            diags.append(f"head label of ({control}, {symbol}) uses undeclared propositions")
    return diags


# ---------------------------------------------------------------------------
# Text format
# ---------------------------------------------------------------------------

_PUNCT = set("{};:,[]")


def _tokenize_model(text: str) -> list[tuple[str, int]]:
    tokens: list[tuple[str, int]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0]
        i, n = 0, len(body)
        while i < n:
            ch = body[i]
            if ch.isspace():
                i += 1
                continue
            if ch in _PUNCT:
                tokens.append((ch, lineno))
                i += 1
                continue
            j = i
            while j < n and not body[j].isspace() and body[j] not in _PUNCT:
                j += 1
            tokens.append((body[i:j], lineno))
            i = j
    return tokens


class _ModelParser:
    def __init__(self, text: str):
        self.tokens = _tokenize_model(text)
        self.pos = 0

    def _line(self) -> int:
        if self.pos < len(self.tokens):
            return self.tokens[self.pos][1]
        return self.tokens[-1][1] if self.tokens else 1

    def peek(self) -> Optional[str]:
        if self.pos < len(self.tokens):
            return self.tokens[self.pos][0]
        return None

    def next(self) -> str:
        if self.pos >= len(self.tokens):
            raise ModelFormatError("unexpected end of input", self._line())
        tok = self.tokens[self.pos][0]
        self.pos += 1
        return tok

    def expect(self, tok: str) -> None:
        got = self.next()
        if got != tok:
            raise ModelFormatError(f"expected {tok!r}, found {got!r}", self._line())

    def parse(self) -> Dpn:
        ap: list[str] = []
        locks: list[str] = []
        processes: list[Dpds] = []
        control_labels: dict = {}
        head_labels: dict = {}
        while self.peek() is not None:
            kw = self.next()
            if kw == "ap":
                ap.extend(self._ident_block())
            elif kw == "locks":
                locks.extend(self._ident_block())
            elif kw == "process":
                processes.append(self._process_block())
            elif kw == "labels":
                self._labels_block(control_labels, head_labels)
            else:
                raise ModelFormatError(f"unknown section {kw!r}", self._line())
        dpn = Dpn(
            processes=tuple(processes),
            ap=frozenset(ap),
            control_labels=control_labels,
            head_labels=head_labels,
            locks=frozenset(locks),
        )
        for proc in processes:
            for c in proc.controls:
                control_labels.setdefault(c, frozenset())
        return dpn

    def _ident_block(self) -> list[str]:
        self.expect("{")
        items: list[str] = []
        while self.peek() != "}":
            tok = self.next()
            if tok in (";", ","):
                continue
            items.append(tok)
        self.expect("}")
        return items

    def _process_block(self) -> Dpds:
        name = self.next()
        self.expect("{")
        controls: list[str] = []
        declared_symbols: list[str] = []
        rules: list[Rule] = []
        while self.peek() != "}":
            kw = self.next()
            if kw == "controls":
                while self.peek() != ";":
                    controls.append(self.next())
                self.expect(";")
            elif kw == "symbols":
                while self.peek() != ";":
                    declared_symbols.append(self.next())
                self.expect(";")
            elif kw == "rule":
                rules.append(self._rule())
            else:
                raise ModelFormatError(f"unknown statement {kw!r}", self._line())
        self.expect("}")
        symbols = list(declared_symbols)
        seen = set(symbols)

        def note(sym: str) -> None:
            if sym not in seen:
                seen.add(sym)
                symbols.append(sym)

        for r in rules:
            note(r.symbol)
            for s in r.word:
                note(s)
        return Dpds(name, tuple(controls), tuple(symbols), tuple(rules))

    def _rule(self) -> Rule:
        control = self.next()
        symbol = self.next()
        self.expect("->")
        target = self.next()
        word: list[str] = []
        while self.peek() not in ("[",):
            word.append(self.next())
        self.expect("[")
        tag = self.next()
        self.expect("]")
        action: Optional[tuple[str, str]] = None
        if self.peek() == "[":
            self.next()
            kind = self.next()
            if kind == "tau":
                action = None
            else:
                action = (kind, self.next())
            self.expect("]")
        spawn: Optional[Spawn] = None
        if self.peek() == "spawn":
            self.next()
            sp_proc = self.next()
            sp_control = self.next()
            sp_word: list[str] = []
            while self.peek() != ";":
                sp_word.append(self.next())
            spawn = Spawn(sp_proc, sp_control, tuple(sp_word))
        self.expect(";")
        return Rule(control, symbol, tag, target, tuple(word), spawn, action)

    def _labels_block(self, control_labels: dict, head_labels: dict) -> None:
        self.expect("{")
        while self.peek() != "}":
            first = self.next()
            second = None
            if self.peek() != ":":
                second = self.next()
            self.expect(":")
            self.expect("{")
            props: list[str] = []
            while self.peek() != "}":
                tok = self.next()
                if tok != ",":
                    props.append(tok)
            self.expect("}")
            self.expect(";")
            if second is None:
                control_labels[first] = frozenset(props)
            else:
                head_labels[(first, second)] = frozenset(props)
        self.expect("}")


def parse_dpn(text: str) -> Dpn:
    return _ModelParser(text).parse()


def print_dpn(dpn: Dpn) -> str:
    """Canonical text form; parse_dpn(print_dpn(m)) reproduces m."""
    out: list[str] = []
    if dpn.ap:
        out.append("ap { " + "; ".join(sorted(dpn.ap)) + "; }")
    if dpn.locks:
        out.append("locks { " + "; ".join(sorted(dpn.locks)) + "; }")
    for proc in dpn.processes:
        out.append(f"process {proc.name} {{")
        if proc.controls:
            out.append("  controls " + " ".join(proc.controls) + ";")
        if proc.alphabet:
            out.append("  symbols " + " ".join(proc.alphabet) + ";")
        for r in proc.rules:
            parts = ["  rule", r.control, r.symbol, "->", r.target]
            parts.extend(r.word)
            parts.append(f"[{r.tag}]")
            if r.action is not None:
                parts.append(f"[{r.action[0]} {r.action[1]}]")
            if r.spawn is not None:
                parts.append("spawn")
                parts.append(r.spawn.process)
                parts.append(r.spawn.control)
                parts.extend(r.spawn.word)
            out.append(" ".join(parts) + ";")
        out.append("}")
    label_lines: list[str] = []
    for control in sorted(dpn.control_labels):
        props = dpn.control_labels[control]
        label_lines.append(f"  {control}: {{{', '.join(sorted(props))}}};")
    for control, symbol in sorted(dpn.head_labels):
        props = dpn.head_labels[(control, symbol)]
        label_lines.append(f"  {control} {symbol}: {{{', '.join(sorted(props))}}};")
    if label_lines:
        out.append("labels {")
        out.extend(label_lines)
        out.append("}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Flow-graph front end
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FlowEdge:
    src: str
    dst: Optional[str]  # None for ret edges
    kind: str  # 'call' | 'ret' | 'spawn' | 'simple'
    callee: Optional[str] = None


@dataclass(frozen=True)
class FlowProc:
    name: str
    entry: str
    nodes: tuple[str, ...]
    edges: tuple[FlowEdge, ...]


@dataclass(frozen=True)
class FlowGraphSystem:
    procedures: tuple[FlowProc, ...]

    def proc(self, name: str) -> FlowProc:
        for p in self.procedures:
            if p.name == name:
                return p
        raise ModelError(f"unknown procedure {name!r}")


def parse_flowgraph(text: str) -> FlowGraphSystem:
    p = _ModelParser(text)
    procedures: list[FlowProc] = []
    while p.peek() is not None:
        kw = p.next()
        if kw != "proc":
            raise ModelFormatError(f"expected 'proc', found {kw!r}", p._line())
        name = p.next()
        p.expect("entry")
        entry = p.next()
        p.expect("{")
        nodes: list[str] = [entry]
        edges: list[FlowEdge] = []

        def note(n: str) -> None:
            if n not in nodes:
                nodes.append(n)

        while p.peek() != "}":
            p.expect("edge")
            src = p.next()
            note(src)
            nxt = p.next()
            if nxt == "ret":
                edges.append(FlowEdge(src, None, "ret"))
                p.expect(";")
                continue
            dst = nxt
            note(dst)
            if p.peek() == ";":
                p.next()
                edges.append(FlowEdge(src, dst, "simple"))
                continue
            kind = p.next()
            if kind not in ("call", "spawn"):
                raise ModelFormatError(f"unknown edge kind {kind!r}", p._line())
            callee = p.next()
            p.expect(";")
            edges.append(FlowEdge(src, dst, kind, callee))
        p.expect("}")
        procedures.append(FlowProc(name, entry, tuple(nodes), tuple(edges)))
    return FlowGraphSystem(tuple(procedures))


def _node_symbol(proc: str, node: str) -> str:
    return f"{proc}.{node}"


def flowgraph_to_dpn(fgs: FlowGraphSystem, main: Optional[str] = None) -> Dpn:
    """One pushdown process per spawnable entry (main plus spawn targets).

    Each process has a single artificial control location named after its
    root procedure; stack symbols are procedure-qualified program points of
    every procedure reachable from the root through call edges.
    """
    if not fgs.procedures:
        raise ModelError("empty flow-graph system")
    declared = {p.name for p in fgs.procedures}
    if main is None:
        main = "main" if "main" in declared else fgs.procedures[0].name
    roots = [main]
    for p in fgs.procedures:
        for e in p.edges:
            if e.kind in ("call", "spawn"):
                if e.callee not in declared:
                    raise ModelError(
                        f"{p.name}: {e.kind} of undeclared procedure {e.callee!r}"
                    )
            if e.kind == "spawn" and e.callee not in roots:
                roots.append(e.callee)

    def reachable(root: str) -> list[str]:
        seen = [root]
        frontier = [root]
        while frontier:
            q = frontier.pop()
            for e in fgs.proc(q).edges:
                if e.kind == "call" and e.callee not in seen:
                    seen.append(e.callee)
                    frontier.append(e.callee)
        return seen

    processes = []
    for root in roots:
        control = root
        procs = reachable(root)
        symbols: list[str] = []
        rules: list[Rule] = []
        for q in procs:
            for node in fgs.proc(q).nodes:
                symbols.append(_node_symbol(q, node))
        for q in procs:
            for e in fgs.proc(q).edges:
                src = _node_symbol(q, e.src)
                if e.kind == "ret":
                    rules.append(Rule(control, src, "ret", control, ()))
                    continue
                dst = _node_symbol(q, e.dst)
                if e.kind == "call":
                    entry = _node_symbol(e.callee, fgs.proc(e.callee).entry)
                    rules.append(Rule(control, src, "call", control, (entry, dst)))
                elif e.kind == "spawn":
                    callee = fgs.proc(e.callee)
                    spawn = Spawn(
                        e.callee, e.callee, (_node_symbol(e.callee, callee.entry),)
                    )
                    rules.append(Rule(control, src, "int", control, (dst,), spawn))
                else:
                    rules.append(Rule(control, src, "int", control, (dst,)))
        processes.append(Dpds(root, (control,), tuple(symbols), tuple(rules)))
    dpn = Dpn(
        processes=tuple(processes),
        ap=frozenset(),
        control_labels={p.name: frozenset() for p in processes},
    )
    diags = validate_dpn(dpn)
    if diags:
        raise ModelValidationError(diags)
    return dpn


# ---------------------------------------------------------------------------
# Stuttering transform
# ---------------------------------------------------------------------------


def _fresh_marker(proc: Dpds) -> str:
    name = "_stut"
    k = 0
    existing = set(proc.alphabet)
    while name in existing:
        k += 1
        name = f"_stut{k}"
    return name


def stutter_extend(dpn: Dpn, roots: Iterable[LocalConfig]):
    """Append a per-process bottom marker with an int self-loop.

    Runs that would halt by emptying their stack instead stutter forever
    on the marker; dead configurations with a nonempty stack stay dead.
    Spawn targets and the given root configurations get the marker
    appended so every instance benefits.
    """
    markers = {p.name: _fresh_marker(p) for p in dpn.processes}
    new_processes = []
    for proc in dpn.processes:
        marker = markers[proc.name]
        rules = []
        for r in proc.rules:
            spawn = r.spawn
            if spawn is not None:
                spawn = Spawn(
                    spawn.process, spawn.control, spawn.word + (markers[spawn.process],)
                )
            rules.append(replace(r, spawn=spawn))
        for c in proc.controls:
            rules.append(Rule(c, marker, "int", c, (marker,)))
        new_processes.append(
            Dpds(proc.name, proc.controls, proc.alphabet + (marker,), tuple(rules))
        )
    new_dpn = Dpn(
        processes=tuple(new_processes),
        ap=dpn.ap,
        control_labels=dict(dpn.control_labels),
        head_labels=dict(dpn.head_labels),
        locks=dpn.locks,
    )
    new_roots = tuple(
        LocalConfig(c.process, c.control, c.word + (markers[c.process],))
        for c in roots
    )
    return new_dpn, new_roots
