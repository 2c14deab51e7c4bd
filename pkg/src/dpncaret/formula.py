"""CARET formulas over tagged words.

The core grammar has atomic propositions (including the three structural
tags ``call``/``ret``/``int``), disjunction, negation, and the three
modalities of next/until: global (``g``), abstract (``a``, follows
call/return matching), and caller (``c``, walks up the chain of open
calls).  Conjunction, ``true``/``false`` and the F/G operators are surface
sugar and are rewritten to the core grammar at parse time; everything
downstream (closure, atoms, the automaton product) only ever sees core
formulas.

``true`` desugars to ``call || ret || int`` which holds at every position
because each position carries exactly one tag.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Optional

TAGS = ("call", "ret", "int")
MODALITIES = ("g", "a", "c")


class FormulaError(Exception):
    """Base class for formula-level failures."""


class FormulaSyntaxError(FormulaError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at offset {position})")
        self.position = position


class UndeclaredPropositionError(FormulaError):
    def __init__(self, name: str):
        super().__init__(f"proposition {name!r} is not declared in the model's AP")
        self.name = name


# ---------------------------------------------------------------------------
# Core syntax tree
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Formula:
    """Base class; concrete nodes are Ap / Or / Not / Next / Until."""

    __slots__ = ()


@dataclass(frozen=True)
class Ap(Formula):
    name: str


@dataclass(frozen=True)
class Or(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Not(Formula):
    operand: Formula


@dataclass(frozen=True)
class Next(Formula):
    mod: str
    operand: Formula


@dataclass(frozen=True)
class Until(Formula):
    mod: str
    left: Formula
    right: Formula


def neg(f: Formula) -> Formula:
    """Single negation; collapses double negations so closures stay small."""
    if isinstance(f, Not):
        return f.operand
    return Not(f)


def true_formula() -> Formula:
    return Or(Ap("call"), Or(Ap("ret"), Ap("int")))


def false_formula() -> Formula:
    return neg(true_formula())


def conj(f: Formula, g: Formula) -> Formula:
    return neg(Or(neg(f), neg(g)))


def eventually(mod: str, f: Formula) -> Formula:
    return Until(mod, true_formula(), f)


def globally(mod: str, f: Formula) -> Formula:
    return neg(Until(mod, true_formula(), neg(f)))


def subformulas(f: Formula) -> Iterator[Formula]:
    stack = [f]
    while stack:
        g = stack.pop()
        yield g
        if isinstance(g, Not):
            stack.append(g.operand)
        elif isinstance(g, Or):
            stack.append(g.right)
            stack.append(g.left)
        elif isinstance(g, Next):
            stack.append(g.operand)
        elif isinstance(g, Until):
            stack.append(g.right)
            stack.append(g.left)


_PREC_ATOM, _PREC_UNARY, _PREC_UNTIL, _PREC_AND, _PREC_OR = 5, 4, 3, 2, 1


def format_formula(f: Formula) -> str:
    """Render a core formula in the surface syntax (always re-parseable)."""

    def go(g: Formula, parent: int) -> str:
        if isinstance(g, Ap):
            return g.name
        if isinstance(g, Not):
            s = "!" + go(g.operand, _PREC_UNARY)
            return s if parent <= _PREC_UNARY else "(" + s + ")"
        if isinstance(g, Next):
            s = f"X{g.mod} " + go(g.operand, _PREC_UNARY)
            return s if parent <= _PREC_UNARY else "(" + s + ")"
        if isinstance(g, Until):
            s = go(g.left, _PREC_UNARY) + f" U{g.mod} " + go(g.right, _PREC_UNTIL)
            return s if parent < _PREC_UNTIL else "(" + s + ")"
        if isinstance(g, Or):
            s = go(g.left, _PREC_OR) + " || " + go(g.right, _PREC_OR - 1)
            return s if parent < _PREC_OR else "(" + s + ")"
        raise TypeError(f"not a core formula node: {g!r}")

    return go(f, 0)


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_UNARY_OPS = {f"{op}{m}" for op in "XFG" for m in MODALITIES}
_UNTIL_OPS = {f"U{m}" for m in MODALITIES}


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens: list[tuple[str, str, int]] = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch in "()":
            tokens.append((ch, ch, i))
            i += 1
            continue
        if ch == "!":
            tokens.append(("!", "!", i))
            i += 1
            continue
        if text.startswith("&&", i):
            tokens.append(("&&", "&&", i))
            i += 2
            continue
        if text.startswith("||", i):
            tokens.append(("||", "||", i))
            i += 2
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            word = text[i:j]
            if word in _UNARY_OPS:
                tokens.append(("unary", word, i))
            elif word in _UNTIL_OPS:
                tokens.append(("until", word, i))
            elif len(word) == 2 and word[0] in "XFGU":
                raise FormulaSyntaxError(
                    f"unknown successor kind in operator {word!r}", i
                )
            else:
                tokens.append(("ident", word, i))
            i = j
            continue
        raise FormulaSyntaxError(f"unexpected character {ch!r}", i)
    tokens.append(("eof", "", n))
    return tokens


class _Parser:
    def __init__(self, tokens: list[tuple[str, str, int]], ap: Optional[frozenset]):
        self.tokens = tokens
        self.pos = 0
        self.ap = ap

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.pos]

    def advance(self) -> tuple[str, str, int]:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind: str) -> tuple[str, str, int]:
        tok = self.advance()
        if tok[0] != kind:
            raise FormulaSyntaxError(f"expected {kind!r}, found {tok[1]!r}", tok[2])
        return tok

    # precedence: unary > U > && > ||, with U right-associative
    def parse_or(self) -> Formula:
        left = self.parse_and()
        while self.peek()[0] == "||":
            self.advance()
            left = Or(left, self.parse_and())
        return left

    def parse_and(self) -> Formula:
        left = self.parse_until()
        while self.peek()[0] == "&&":
            self.advance()
            left = conj(left, self.parse_until())
        return left

    def parse_until(self) -> Formula:
        left = self.parse_unary()
        if self.peek()[0] == "until":
            _, word, _ = self.advance()
            return Until(word[1], left, self.parse_until())
        return left

    def parse_unary(self) -> Formula:
        kind, word, pos = self.peek()
        if kind == "!":
            self.advance()
            return neg(self.parse_unary())
        if kind == "unary":
            self.advance()
            op, mod = word[0], word[1]
            arg = self.parse_unary()
            if op == "X":
                return Next(mod, arg)
            if op == "F":
                return eventually(mod, arg)
            return globally(mod, arg)
        return self.parse_atom()

    def parse_atom(self) -> Formula:
        kind, word, pos = self.advance()
        if kind == "(":
            inner = self.parse_or()
            self.expect(")")
            return inner
        if kind == "ident":
            if word == "true":
                return true_formula()
            if word == "false":
                return false_formula()
            if word not in TAGS and self.ap is not None and word not in self.ap:
                raise UndeclaredPropositionError(word)
            return Ap(word)
        raise FormulaSyntaxError(f"expected a formula, found {word!r}", pos)


def parse_formula(text: str, ap: Optional[Iterable[str]] = None) -> Formula:
    """Parse surface syntax into a desugared core formula.

    ``ap`` is the model's declared proposition set; identifiers outside
    ``ap`` and the three tags are rejected.  Passing ``None`` disables the
    check (used by stand-alone inspection).
    """
    declared = None if ap is None else frozenset(ap)
    parser = _Parser(_tokenize(text), declared)
    result = parser.parse_or()
    tok = parser.peek()
    if tok[0] != "eof":
        raise FormulaSyntaxError(f"trailing input starting at {tok[1]!r}", tok[2])
    return result


# ---------------------------------------------------------------------------
# Closure
# ---------------------------------------------------------------------------


class Closure:
    """The closure of a formula, in a fixed insertion order.

    Contains the formula, the three tags, all subformulas, the X-unrolling
    of every until, and the single negation of every non-negated member.
    Member ordinals are stable for a given formula, which keeps atom
    bitmasks and reports reproducible.
    """

    def __init__(self, root: Formula):
        self.root = root
        members: list[Formula] = []
        index: dict[Formula, int] = {}

        def add(g: Formula) -> None:
            if g in index:
                return
            index[g] = len(members)
            members.append(g)
            queue.append(g)

        queue: list[Formula] = []
        for seed in (root, Ap("call"), Ap("ret"), Ap("int")):
            add(seed)
        qi = 0
        while qi < len(queue):
            g = queue[qi]
            qi += 1
            if isinstance(g, Not):
                add(g.operand)
            else:
                add(Not(g))
            if isinstance(g, Or):
                add(g.left)
                add(g.right)
            elif isinstance(g, Next):
                add(g.operand)
            elif isinstance(g, Until):
                add(g.left)
                add(g.right)
                add(Next(g.mod, g))

        self.members: tuple[Formula, ...] = tuple(members)
        self.index: dict[Formula, int] = index
        self.tag_index = {t: index[Ap(t)] for t in TAGS}
        self.ap_members = tuple(
            (i, m.name)
            for i, m in enumerate(members)
            if isinstance(m, Ap) and m.name not in TAGS
        )
        self.next_forms = {
            mod: tuple(
                (i, index[m.operand])
                for i, m in enumerate(members)
                if isinstance(m, Next) and m.mod == mod
            )
            for mod in MODALITIES
        }
        self.until_forms = {
            mod: tuple(
                (i, index[m.left], index[m.right], index[Next(mod, m)])
                for i, m in enumerate(members)
                if isinstance(m, Until) and m.mod == mod
            )
            for mod in MODALITIES
        }
        self.or_forms = tuple(
            (i, index[m.left], index[m.right])
            for i, m in enumerate(members)
            if isinstance(m, Or)
        )

    def __len__(self) -> int:
        return len(self.members)

    def __contains__(self, f: Formula) -> bool:
        return f in self.index

    def __iter__(self) -> Iterator[Formula]:
        return iter(self.members)


def closure(f: Formula) -> Closure:
    return Closure(f)


# ---------------------------------------------------------------------------
# Atoms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Atom:
    """A maximal consistent subset of a closure, carrying exactly one tag.

    ``bits`` has bit i set iff closure member i belongs to the atom.  The
    per-modality masks cache what the successor predicates need:
    ``present[m]`` marks the X^m members of the atom, and ``required[m]``
    marks the X^m closure members whose operand belongs to the atom.
    """

    bits: int
    index: int
    tag: str
    props: frozenset
    present: tuple[int, int, int]
    required: tuple[int, int, int]

    def has(self, member_index: int) -> bool:
        return bool(self.bits >> member_index & 1)


_MOD_POS = {m: k for k, m in enumerate(MODALITIES)}


class AtomTable:
    """All atoms of a formula, ordered by bitmask over closure ordinals."""

    def __init__(self, cl: Closure):
        self.closure = cl
        free = [i for i, _ in cl.ap_members]
        for mod in MODALITIES:
            free.extend(i for i, _ in cl.next_forms[mod])
        free.sort()
        self.atoms: tuple[Atom, ...] = tuple(self._enumerate(free))
        self._by_bits = {a.bits: a for a in self.atoms}

    def _enumerate(self, free: list[int]) -> list[Atom]:
        cl = self.closure
        members = cl.members
        raw: list[tuple[int, str]] = []
        for tag in TAGS:
            for choice in range(1 << len(free)):
                chosen = {free[k] for k in range(len(free)) if choice >> k & 1}
                value: dict[int, bool] = {}

                def val(i: int) -> bool:
                    got = value.get(i)
                    if got is not None:
                        return got
                    m = members[i]
                    if isinstance(m, Ap):
                        v = m.name == tag if m.name in TAGS else i in chosen
                    elif isinstance(m, Not):
                        v = not val(cl.index[m.operand])
                    elif isinstance(m, Or):
                        v = val(cl.index[m.left]) or val(cl.index[m.right])
                    elif isinstance(m, Next):
                        v = i in chosen
                    else:
                        assert isinstance(m, Until)
                        v = val(cl.index[m.right]) or (
                            val(cl.index[m.left]) and val(cl.index[Next(m.mod, m)])
                        )
                    value[i] = v
                    return v

                bits = 0
                for i in range(len(members)):
                    if val(i):
                        bits |= 1 << i
                raw.append((bits, tag))
        raw.sort()
        atoms = []
        for rank, (bits, tag) in enumerate(raw):
            props = frozenset(
                name for i, name in cl.ap_members if bits >> i & 1
            )
            present = []
            required = []
            for mod in MODALITIES:
                pres = 0
                req = 0
                for i, arg in cl.next_forms[mod]:
                    if bits >> i & 1:
                        pres |= 1 << i
                    if bits >> arg & 1:
                        req |= 1 << i
                present.append(pres)
                required.append(req)
            atoms.append(
                Atom(bits, rank, tag, props, tuple(present), tuple(required))
            )
        return atoms

    def __len__(self) -> int:
        return len(self.atoms)

    def __iter__(self) -> Iterator[Atom]:
        return iter(self.atoms)

    def members_of(self, atom: Atom) -> tuple[Formula, ...]:
        return tuple(
            m for i, m in enumerate(self.closure.members) if atom.bits >> i & 1
        )

    # -- successor-compatibility predicates --------------------------------

    def global_next(self, a: Atom, b: Atom) -> bool:
        """X^g members of ``a`` hold exactly when their operands are in ``b``."""
        k = _MOD_POS["g"]
        return a.present[k] == b.required[k]

    def abstract_next(self, a: Atom, b: Atom) -> bool:
        k = _MOD_POS["a"]
        return a.present[k] == b.required[k]

    def caller_next(self, a: Atom, b: Atom) -> bool:
        """X^c members of ``a`` hold exactly when their operands are in ``b``.

        The automaton product instantiates this with ``a`` = the atom of a
        procedure's first position and ``b`` = the atom of its call site.
        """
        k = _MOD_POS["c"]
        return a.present[k] == b.required[k]

    def succ_predicate(self, mod: str, a: Atom, b: Atom) -> bool:
        k = _MOD_POS[mod]
        return a.present[k] == b.required[k]

    def nex_forms(self, mod: str, a: Atom) -> frozenset:
        cl = self.closure
        return frozenset(
            cl.members[i] for i, _ in cl.next_forms[mod] if a.bits >> i & 1
        )

    def caller_forms_mask(self, a: Atom) -> int:
        return a.present[_MOD_POS["c"]]

    def abstract_forms_empty(self, a: Atom) -> bool:
        return a.present[_MOD_POS["a"]] == 0


def atoms(f: Formula) -> AtomTable:
    """Atom table of a core formula (closure computed internally)."""
    return AtomTable(closure(f))
