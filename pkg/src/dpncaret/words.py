"""Finite structured words and direct CARET evaluation.

A structured word is a finite sequence of tagged letters together with an
optional lasso back-edge and explicit abstract/caller successor maps.  The
back-edge makes the word stand for the ultimately periodic infinite word
obtained by repeating the suffix from the back-edge target.  Evaluation is
by least fixpoints over the finite position set, which is exact for until
formulas because every witness chain projects onto the finite structure.

This module is the semantic ground truth used by the exploration oracle;
it never looks at automata.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

from .formula import Ap, Formula, Next, Not, Or, Until, TAGS


@dataclass(frozen=True)
class TraceLetter:
    props: frozenset
    tag: str

    def __post_init__(self):
        if self.tag not in TAGS:
            raise ValueError(f"letter tag must be one of {TAGS}, got {self.tag!r}")


def letter(props: Sequence[str] = (), tag: str = "int") -> TraceLetter:
    return TraceLetter(frozenset(props), tag)


class MalformedWordError(Exception):
    pass


@dataclass
class StructuredWord:
    """Positions 0..N-1 with global/abstract/caller successor structure.

    ``back`` is the lasso target (the global successor of the last
    position), or None for a plain finite word.  ``abs_succ`` and
    ``caller`` hold explicit successor positions with None standing for
    the undefined successor.
    """

    letters: tuple[TraceLetter, ...]
    back: Optional[int] = None
    abs_succ: tuple[Optional[int], ...] = field(default=())
    caller: tuple[Optional[int], ...] = field(default=())

    def __post_init__(self):
        n = len(self.letters)
        if self.back is not None and not 0 <= self.back < n:
            raise MalformedWordError(f"lasso target {self.back} out of range")
        if not self.abs_succ and not self.caller:
            a, c = _match_successors(self.letters, self.back)
            self.abs_succ = a
            self.caller = c
        if len(self.abs_succ) != n or len(self.caller) != n:
            raise MalformedWordError("successor maps must cover every position")
        for m in (self.abs_succ, self.caller):
            for v in m:
                if v is not None and not 0 <= v < n:
                    raise MalformedWordError(f"successor {v} out of range")

    def __len__(self) -> int:
        return len(self.letters)

    def global_succ(self, i: int) -> Optional[int]:
        if i < len(self.letters) - 1:
            return i + 1
        return self.back


def _match_successors(
    letters: Sequence[TraceLetter], back: Optional[int]
) -> tuple[tuple[Optional[int], ...], tuple[Optional[int], ...]]:
    """Tag-driven matching within the finite structure.

    Calls left open at the end of the structure get an undefined abstract
    successor; callers point at the innermost call that is still open.
    """
    n = len(letters)
    abs_succ: list[Optional[int]] = [None] * n
    caller: list[Optional[int]] = [None] * n
    open_calls: list[int] = []
    for i, lt in enumerate(letters):
        caller[i] = open_calls[-1] if open_calls else None
        if lt.tag == "call":
            open_calls.append(i)
        elif lt.tag == "ret":
            if open_calls:
                j = open_calls.pop()
                abs_succ[j] = i + 1 if i + 1 < n else back
        else:
            abs_succ[i] = i + 1 if i + 1 < n else back
    return tuple(abs_succ), tuple(caller)


def eval_structured_word(word: StructuredWord, f: Formula) -> bool:
    """Decide (word, 0) |= f on the lasso structure.

    X^b with an undefined successor is false.  Untils are least fixpoints
    along the respective successor chains, with the global chain wrapping
    through the back-edge.
    """
    n = len(word)
    if n == 0:
        raise MalformedWordError("cannot evaluate on an empty word")
    table: dict[Formula, list[bool]] = {}

    def succ(mod: str, i: int) -> Optional[int]:
        if mod == "g":
            return word.global_succ(i)
        if mod == "a":
            return word.abs_succ[i]
        return word.caller[i]

    def rows(g: Formula) -> list[bool]:
        cached = table.get(g)
        if cached is not None:
            return cached
        if isinstance(g, Ap):
            row = [
                g.name == lt.tag if g.name in TAGS else g.name in lt.props
                for lt in word.letters
            ]
        elif isinstance(g, Not):
            sub = rows(g.operand)
            row = [not v for v in sub]
        elif isinstance(g, Or):
            lrow, rrow = rows(g.left), rows(g.right)
            row = [a or b for a, b in zip(lrow, rrow)]
        elif isinstance(g, Next):
            sub = rows(g.operand)
            row = []
            for i in range(n):
                j = succ(g.mod, i)
                row.append(j is not None and sub[j])
        elif isinstance(g, Until):
            lrow, rrow = rows(g.left), rows(g.right)
            row = list(rrow)
            changed = True
            while changed:
                changed = False
                for i in range(n):
                    if row[i] or not lrow[i]:
                        continue
                    j = succ(g.mod, i)
                    if j is not None and row[j]:
                        row[i] = True
                        changed = True
        else:
            raise TypeError(f"not a core formula node: {g!r}")
        table[g] = row
        return row

    return rows(f)[0]
