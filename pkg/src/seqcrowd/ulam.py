"""State algebra of the (M, q, e) Ulam-Renyi game.

A game status partitions the still-possible state labels by how many lies
each label would imply.  Statuses, their count vectors ("types") and the
Berlekamp-style weights defined here are the raw material for the question
heuristic in :mod:`seqcrowd.question_design`.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb
from typing import Optional, Sequence, Tuple


@dataclass(frozen=True)
class GameStatus:
    """Partition (A_0, ..., A_e) of surviving labels by implied lie count.

    ``classes_by_lies[i]`` holds every label that is still consistent with
    the answers seen so far under the assumption that exactly ``i`` of them
    were wrong.  Sets are stored as sorted tuples so equal statuses compare
    and hash identically regardless of construction order.
    """

    classes_by_lies: Tuple[Tuple[int, ...], ...]
    e: int
    M: int

    def __post_init__(self):
        if len(self.classes_by_lies) != self.e + 1:
            raise ValueError("expected e + 1 lie classes")
        seen = set()
        for labels in self.classes_by_lies:
            if list(labels) != sorted(labels):
                raise ValueError("lie classes must be sorted tuples")
            for x in labels:
                if not 1 <= x <= self.M:
                    raise ValueError(f"label {x} outside [1, {self.M}]")
                if x in seen:
                    raise ValueError(f"label {x} appears in two lie classes")
                seen.add(x)

    @property
    def type(self) -> "StatusType":
        return StatusType(tuple(len(a) for a in self.classes_by_lies))

    def support(self) -> Tuple[int, ...]:
        """All surviving labels, sorted."""
        return tuple(sorted(x for a in self.classes_by_lies for x in a))

    def total(self) -> int:
        return sum(len(a) for a in self.classes_by_lies)


@dataclass(frozen=True)
class StatusType:
    """Count vector (|A_0|, ..., |A_e|) of a status; drives the heuristic."""

    counts: Tuple[int, ...]

    def __post_init__(self):
        if any(c < 0 for c in self.counts):
            raise ValueError("negative count")

    @property
    def e(self) -> int:
        return len(self.counts) - 1

    def total(self) -> int:
        return sum(self.counts)


@dataclass(frozen=True)
class QuestionTuple:
    """A q-ary question: pairwise-disjoint label sets (T_1, ..., T_q).

    ``rows`` optionally records the per-lie-class split ``T_{j,i}`` used to
    build the question (rows[j][i] is the tuple of labels drawn from A_i
    into part j).
    """

    parts: Tuple[Tuple[int, ...], ...]
    rows: Optional[Tuple[Tuple[Tuple[int, ...], ...], ...]] = None

    def __post_init__(self):
        seen = set()
        for part in self.parts:
            for x in part:
                if x in seen:
                    raise ValueError(f"label {x} appears in two parts")
                seen.add(x)

    @property
    def q(self) -> int:
        return len(self.parts)

    def support(self) -> Tuple[int, ...]:
        return tuple(sorted(x for part in self.parts for x in part))

    def part_of(self, label: int) -> Optional[int]:
        """1-based index of the part containing ``label``, or None."""
        for j, part in enumerate(self.parts, start=1):
            if label in part:
                return j
        return None


def initial_status(M: int, e: int) -> GameStatus:
    """Status before any question: every label consistent with zero lies."""
    if M < 2:
        raise ValueError("need at least two classes")
    if e < 0:
        raise ValueError("lie budget must be non-negative")
    classes = (tuple(range(1, M + 1)),) + ((),) * e
    return GameStatus(classes, e=e, M=M)


def update_status(status: GameStatus, question: QuestionTuple, j: int) -> GameStatus:
    """Status after answer ``j``: labels outside T_j accrue one more lie.

    The new i-th class is (A_{i-1} \\ T_j) + (A_i & T_j); labels already in
    A_e that fall outside T_j are eliminated.
    """
    if not 1 <= j <= question.q:
        raise ValueError(f"answer index {j} outside [1, {question.q}]")
    if question.support() != status.support():
        raise ValueError("question parts must cover exactly the status support")
    t_j = set(question.parts[j - 1])
    old = status.classes_by_lies
    new_classes = []
    for i in range(status.e + 1):
        kept = [x for x in old[i] if x in t_j]
        demoted = [x for x in old[i - 1] if x not in t_j] if i > 0 else []
        new_classes.append(tuple(sorted(kept + demoted)))
    return GameStatus(tuple(new_classes), e=status.e, M=status.M)


def element_weight(i: int, w: int, q: int, e: int) -> int:
    """Number of remaining lie patterns for a label in A_i, w questions left.

    Sum over k <= e - i of C(w, k) (q-1)^k, computed in exact integers.
    """
    if not 0 <= i <= e:
        raise ValueError("lie index outside [0, e]")
    if w < 0:
        raise ValueError("questions left must be non-negative")
    return sum(comb(w, k) * (q - 1) ** k for k in range(e - i + 1))


def status_weight(t: StatusType, w: int, q: int) -> int:
    """Cumulative weight of a status type with w questions left."""
    if w < 0:
        raise ValueError("questions left must be non-negative")
    e = t.e
    return sum(c * element_weight(i, w, q, e) for i, c in enumerate(t.counts))


def is_final(status: GameStatus) -> Tuple[bool, Optional[int]]:
    """Whether the game is over, plus the surviving label if there is one.

    An all-empty status (more lies than the budget allows) is final with no
    winner rather than an error; the crowdsourcing wrapper handles it.
    """
    labels = status.support()
    if len(labels) > 1:
        return False, None
    if len(labels) == 1:
        return True, labels[0]
    return True, None


def status_from_sets(sets: Sequence[Sequence[int]], M: int) -> GameStatus:
    """Build a status from raw label collections (convenience constructor)."""
    classes = tuple(tuple(sorted(s)) for s in sets)
    return GameStatus(classes, e=len(classes) - 1, M=M)
