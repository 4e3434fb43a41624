"""Patterns, coverage counting, and maximal-uncovered-pattern detection.

A pattern is a length-d string over attribute values where each position is
either a concrete domain value or unspecified (wildcard, written ``X``).  A
fully specified pattern is a combination.  A pattern is uncovered at
threshold tau when fewer than tau catalog tuples match it; the maximal
uncovered patterns (MUPs) are the uncovered patterns all of whose parents
(one cell un-specified) are covered.

Counting goes through an inverted index: one id-set per (attribute, value)
pair, intersected over the specified cells.  Sets are fixed-width bitmaps
while the catalog holds at most 2**16 tuples and sorted id arrays beyond
that, since intersection cost dominates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyMupSet, UnknownValue, WrongArity
from .schema import AttributeSchema, Dataset, TupleRecord

UNSPECIFIED = None

_BITSET_MAX = 1 << 16


@dataclass(frozen=True)
class Pattern:
    """Cells are domain-value indices, or None where unspecified."""

    cells: tuple[int | None, ...]

    @property
    def level(self) -> int:
        return sum(1 for c in self.cells if c is not None)

    def is_combination(self) -> bool:
        return all(c is not None for c in self.cells)

    def specified(self) -> list[tuple[int, int]]:
        return [(i, c) for i, c in enumerate(self.cells) if c is not None]

    def parents(self) -> list["Pattern"]:
        """Un-specify one cell at a time."""
        out = []
        for i, c in enumerate(self.cells):
            if c is not None:
                out.append(Pattern(self.cells[:i] + (None,) + self.cells[i + 1 :]))
        return out

    def with_cell(self, attr: int, value: int | None) -> "Pattern":
        return Pattern(self.cells[:attr] + (value,) + self.cells[attr + 1 :])

    def refines(self, other: "Pattern") -> bool:
        """True when every cell specified in `other` is matched here."""
        return all(
            o is None or s == o for s, o in zip(self.cells, other.cells)
        )

    def sort_key(self) -> tuple:
        return (self.level, tuple(-1 if c is None else c for c in self.cells))

    def __str__(self) -> str:
        return "|".join("X" if c is None else str(c) for c in self.cells)


def pattern_to_string(p: Pattern, schema: AttributeSchema) -> str:
    """Value labels joined by '|', with X for unspecified cells."""
    parts = []
    for i, c in enumerate(p.cells):
        parts.append("X" if c is None else schema.value_label(i, c))
    return "|".join(parts)


def parse_pattern(text: str, schema: AttributeSchema) -> Pattern:
    """Parse a pattern string against a schema.

    Accepts '|'-separated tokens, or one character per attribute when the
    string has exactly d characters and no separator.  A token is X
    (unspecified), a value label, or a numeric value index.
    """
    if "|" in text:
        tokens = text.split("|")
    elif len(text) == schema.d:
        tokens = list(text)
    else:
        raise WrongArity(
            f"pattern {text!r} does not have {schema.d} tokens"
        )
    if len(tokens) != schema.d:
        raise WrongArity(f"pattern {text!r} has {len(tokens)} tokens, want {schema.d}")
    cells: list[int | None] = []
    for i, tok in enumerate(tokens):
        tok = tok.strip()
        if tok in ("X", "x"):
            cells.append(None)
            continue
        attr = schema.attributes[i]
        if tok in attr.values:
            cells.append(attr.values.index(tok))
        elif tok.isdigit() and int(tok) < len(attr.values):
            cells.append(int(tok))
        else:
            raise UnknownValue(
                f"token {tok!r} is not a value of attribute {attr.name!r}"
            )
    return Pattern(tuple(cells))


def matches(p: Pattern, t: TupleRecord) -> bool:
    """True iff every specified cell equals the tuple's value there."""
    return all(c is None or t.values[i] == c for i, c in enumerate(p.cells))


class InvertedIndex:
    """Per-(attribute, value) tuple-id sets over one catalog snapshot.

    Construction is single-threaded; queries afterwards are read-only and
    thread-safe.  `add_tuple` exists for append-only augmentation and must
    not race with readers.
    """

    def __init__(self, schema: AttributeSchema, tuples: Sequence[TupleRecord]):
        self.schema = schema
        self.n = len(tuples)
        self._bitset = self.n <= _BITSET_MAX
        if self._bitset:
            self._sets: list[list] = [
                [0] * len(a.values) for a in schema.attributes
            ]
            for idx, t in enumerate(tuples):
                bit = 1 << idx
                for attr, v in enumerate(t.values):
                    self._sets[attr][v] |= bit
        else:
            buckets: list[list[list[int]]] = [
                [[] for _ in a.values] for a in schema.attributes
            ]
            for idx, t in enumerate(tuples):
                for attr, v in enumerate(t.values):
                    buckets[attr][v].append(idx)
            self._sets = [
                [np.array(ids, dtype=np.int64) for ids in per_attr]
                for per_attr in buckets
            ]

    @classmethod
    def from_dataset(cls, dataset: Dataset, real_only: bool = False) -> "InvertedIndex":
        rows = dataset.real_tuples() if real_only else dataset.tuples
        return cls(dataset.schema, rows)

    def add_tuple(self, t: TupleRecord) -> None:
        idx = self.n
        if self._bitset and idx >= _BITSET_MAX:
            raise OverflowError("bitset index full; rebuild from the catalog")
        self.n += 1
        for attr, v in enumerate(t.values):
            if self._bitset:
                self._sets[attr][v] |= 1 << idx
            else:
                self._sets[attr][v] = np.append(self._sets[attr][v], idx)

    def _intersection(self, p: Pattern):
        spec = p.specified()
        if not spec:
            return None  # level 0: the whole catalog
        if self._bitset:
            acc = self._sets[spec[0][0]][spec[0][1]]
            for attr, v in spec[1:]:
                acc &= self._sets[attr][v]
                if not acc:
                    break
            return acc
        acc = self._sets[spec[0][0]][spec[0][1]]
        for attr, v in spec[1:]:
            acc = np.intersect1d(acc, self._sets[attr][v], assume_unique=True)
            if acc.size == 0:
                break
        return acc

    def count(self, p: Pattern) -> int:
        acc = self._intersection(p)
        if acc is None:
            return self.n
        if self._bitset:
            return bin(acc).count("1")
        return int(acc.size)

    def members(self, p: Pattern) -> list[int]:
        """Row positions of the tuples matching p, ascending."""
        acc = self._intersection(p)
        if acc is None:
            return list(range(self.n))
        if self._bitset:
            out = []
            while acc:
                low = acc & -acc
                out.append(low.bit_length() - 1)
                acc ^= low
            return out
        return [int(i) for i in acc]


def coverage_count(index: InvertedIndex, p: Pattern) -> int:
    """Number of catalog tuples matching p; the whole catalog at level 0."""
    return index.count(p)


@dataclass
class MupSet:
    """Maximal uncovered patterns for one catalog at one threshold."""

    mups: list[Pattern]
    tau: int

    def __len__(self) -> int:
        return len(self.mups)

    def __iter__(self):
        return iter(self.mups)

    def min_level(self) -> int:
        if not self.mups:
            raise EmptyMupSet("no MUPs")
        return min(p.level for p in self.mups)


def find_mups(index: InvertedIndex, schema: AttributeSchema, tau: int) -> MupSet:
    """Level-wise search of the pattern lattice for maximal uncovered patterns.

    Walks the lattice from the all-unspecified root downward.  A pattern at
    level L is a candidate only when all of its parents at level L-1 are
    covered; an uncovered pattern below an uncovered ancestor always has an
    uncovered parent (counts are monotone under specification), so skipped
    branches cannot hide MUPs.  Output is sorted by (level, cells) with
    unspecified ordered before any value.
    """
    if tau < 1:
        raise ValueError("tau must be >= 1")
    root = Pattern((None,) * schema.d)
    if index.count(root) < tau:
        return MupSet([root], tau)

    mups: list[Pattern] = []
    covered_prev: set[Pattern] = {root}
    for _level in range(1, schema.d + 1):
        candidates: set[Pattern] = set()
        for parent in covered_prev:
            for attr in range(schema.d):
                if parent.cells[attr] is not None:
                    continue
                for v in range(len(schema.attributes[attr].values)):
                    candidates.add(parent.with_cell(attr, v))
        covered_cur: set[Pattern] = set()
        for cand in candidates:
            # A parent absent from covered_prev is uncovered.
            if any(par not in covered_prev for par in cand.parents()):
                continue
            if index.count(cand) < tau:
                mups.append(cand)
            else:
                covered_cur.add(cand)
        covered_prev = covered_cur
        if not covered_prev:
            break
    mups.sort(key=Pattern.sort_key)
    return MupSet(mups, tau)


def min_level_mups(m: MupSet) -> MupSet:
    """The subset of m at the smallest level (the repair targets)."""
    if not m.mups:
        raise EmptyMupSet("cannot take the minimum level of an empty MUP set")
    lvl = m.min_level()
    return MupSet([p for p in m.mups if p.level == lvl], m.tau)


def enumerate_combinations(schema: AttributeSchema) -> Iterable[Pattern]:
    """All level-d patterns in lexicographic cell order."""
    card = schema.cardinalities
    cells = [0] * schema.d
    while True:
        yield Pattern(tuple(cells))
        for i in reversed(range(schema.d)):
            cells[i] += 1
            if cells[i] < card[i]:
                break
            cells[i] = 0
        else:
            return
