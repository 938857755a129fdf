"""Words, operator-string reduction and the block structure of the steering moment matrix.

A word is a product of Bob projectors followed by Charlie projectors. The entry
Gamma(v, w) stands for tr_BC(O_v^dag O_w rho_ABC), so it only depends on the reduced
form of the string O_v^dag O_w. Reduction uses idempotence (E E = E), orthogonality of
different outcomes of one setting (E_{b|y} E_{b'|y} = 0) and the commutation of Bob's
and Charlie's operators. The code works on strings of any length.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from itertools import product
from typing import NamedTuple

from .assemblage import Scenario

Letter = tuple[int, int]  # (outcome, setting)


class Word(NamedTuple):
    bob: tuple[Letter, ...] = ()
    charlie: tuple[Letter, ...] = ()

    @property
    def kind(self) -> str:
        return {(0, 0): "EMPTY", (1, 0): "B", (0, 1): "C"}.get(
            (len(self.bob), len(self.charlie)), "BC")

    def label(self) -> str:
        if not self.bob and not self.charlie:
            return "()"
        outs = "".join(str(o) for o, _ in self.bob) + "".join(str(o) for o, _ in self.charlie)
        sets = "".join(str(s) for _, s in self.bob) + "".join(str(s) for _, s in self.charlie)
        return f"({outs}|{sets})"


EMPTY = Word()


def word_set(sc: Scenario) -> list[Word]:
    """Empty word, Bob words (y-major), Charlie words, then joint words.

    Only the first k-1 outcomes of each setting appear; the last is fixed by completeness.
    """
    bob = [((b, y),) for y in range(sc.setB) for b in range(sc.outB - 1)]
    charlie = [((c, z),) for z in range(sc.setC) for c in range(sc.outC - 1)]
    return ([EMPTY] + [Word(b, ()) for b in bob] + [Word((), c) for c in charlie]
            + [Word(b, c) for b in bob for c in charlie])


def reduce_string(s) -> tuple[Letter, ...] | None:
    """Reduce a product of single-party projectors; ``None`` means the product vanishes."""
    out: list[Letter] = []
    for letter in s:
        if out and out[-1][1] == letter[1]:
            if out[-1][0] == letter[0]:
                continue
            return None
        out.append(letter)
    return tuple(out)


class Relation(Enum):
    ZERO = "zero"
    EQUAL = "equal"
    ADJOINT = "adjoint"


class EntryClass(NamedTuple):
    """Canonical operator string of an entry and how the entry relates to it."""

    key: Word | None
    relation: Relation

    @property
    def self_adjoint(self) -> bool:
        return self.key is not None and _reverse(self.key) == self.key

    @property
    def pinned(self) -> bool:
        """Strings with at most one projector per party equal a first-row (assemblage) entry."""
        return self.key is not None and len(self.key.bob) <= 1 and len(self.key.charlie) <= 1


def _reverse(w: Word) -> Word:
    return Word(w.bob[::-1], w.charlie[::-1])


def canonical_entry(v: Word, w: Word) -> EntryClass:
    bob = reduce_string(v.bob[::-1] + w.bob)
    charlie = reduce_string(v.charlie[::-1] + w.charlie)
    if bob is None or charlie is None:
        return EntryClass(None, Relation.ZERO)
    s = Word(bob, charlie)
    r = _reverse(s)
    if r < s:
        return EntryClass(r, Relation.ADJOINT)
    return EntryClass(s, Relation.EQUAL)


@dataclass(frozen=True)
class MomentStructure:
    """Block layout of Gamma: for each (i, j) either zero or a link to a representative block.

    ``links[(i, j)] = (i0, j0, adjoint)`` means Gamma(i, j) = Gamma(i0, j0), or its adjoint
    when ``adjoint`` is true. ``hermitian`` lists representatives whose class is
    self-adjoint. Representatives of pinned classes lie in the first row.
    """

    scenario: Scenario
    words: tuple[Word, ...]
    zeros: tuple[tuple[int, int], ...]
    links: dict
    representatives: dict
    hermitian: tuple[tuple[int, int], ...]

    @property
    def size(self) -> int:
        return len(self.words)

    def first_row_index(self) -> dict[Word, int]:
        return {w: j for j, w in enumerate(self.words)}


def moment_structure(sc: Scenario) -> MomentStructure:
    words = word_set(sc)
    n = len(words)
    reps: dict[Word, tuple[int, int, bool]] = {}
    zeros, links, herm = [], {}, []
    for i, j in product(range(n), repeat=2):
        cls = canonical_entry(words[i], words[j])
        if cls.relation is Relation.ZERO:
            zeros.append((i, j))
            continue
        adj = cls.relation is Relation.ADJOINT
        if cls.key not in reps:
            reps[cls.key] = (i, j, adj)
            if cls.self_adjoint and i != j:
                herm.append((i, j))
            continue
        i0, j0, adj0 = reps[cls.key]
        links[(i, j)] = (i0, j0, adj != adj0)
    for key, (i, j, _) in reps.items():
        if EntryClass(key, Relation.EQUAL).pinned and i != 0:
            raise AssertionError(f"pinned class {key} first met off the first row")
    return MomentStructure(sc, tuple(words), tuple(zeros), links,
                           {k: v[:2] for k, v in reps.items()}, tuple(herm))
