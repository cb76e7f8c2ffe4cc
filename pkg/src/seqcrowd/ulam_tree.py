"""Memoized construction of the (M, q, e) Ulam-Renyi question tree.

The question heuristic only looks at status types (count vectors), so the
tree is built over types with memoization on (type, questions-left); the
concrete-label tree would be exponentially redundant.  The tree yields the
question bound B-hat and serves as the action pool for the POMDP planner.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from math import comb
from typing import Dict, List, Optional, Tuple

import numpy as np

from .question_design import PartitionPlan, materialize, plan_counts
from .ulam import GameStatus, QuestionTuple, StatusType, initial_status, update_status

TypeKey = Tuple[int, ...]
MemoKey = Tuple[TypeKey, int]


@dataclass
class TypeNode:
    """Expansion record for one (type, questions-left) pair."""

    status_type: StatusType
    questions_left: int
    solvable: bool
    question_plan: Optional[PartitionPlan] = None
    children: Optional[Tuple[MemoKey, ...]] = None

    @property
    def terminal(self) -> bool:
        return self.question_plan is None


@dataclass
class UlamTree:
    """Successful depth-B question tree for an (M, q, e) game."""

    M: int
    q: int
    e: int
    depth: int
    memo: Dict[MemoKey, TypeNode]
    seed: int = 0
    _reps: Optional[Dict[MemoKey, Tuple[GameStatus, Optional[QuestionTuple]]]] = field(
        default=None, repr=False
    )

    @property
    def root_key(self) -> MemoKey:
        counts = (self.M,) + (0,) * self.e
        return (counts, self.depth)

    def node(self, status_type: StatusType, questions_left: int) -> TypeNode:
        return self.memo[(status_type.counts, questions_left)]

    def reachable_keys(self) -> List[MemoKey]:
        """Memo keys reachable from the root, in breadth-first order."""
        order: List[MemoKey] = []
        seen = {self.root_key}
        frontier = [self.root_key]
        while frontier:
            nxt: List[MemoKey] = []
            for key in frontier:
                order.append(key)
                node = self.memo[key]
                if node.children:
                    for child in node.children:
                        if child not in seen:
                            seen.add(child)
                            nxt.append(child)
            frontier = nxt
        return order

    def _representatives(self) -> Dict[MemoKey, Tuple[GameStatus, Optional[QuestionTuple]]]:
        """One concrete status (and materialized question) per reachable node.

        Propagated from the root with an RNG derived from the tree seed, so
        the materialization is reproducible for a given tree.
        """
        if self._reps is not None:
            return self._reps
        rng = np.random.default_rng(self.seed)
        reps: Dict[MemoKey, Tuple[GameStatus, Optional[QuestionTuple]]] = {}
        root_status = initial_status(self.M, self.e)
        frontier: List[Tuple[MemoKey, GameStatus]] = [(self.root_key, root_status)]
        while frontier:
            nxt: List[Tuple[MemoKey, GameStatus]] = []
            for key, status in frontier:
                if key in reps:
                    continue
                node = self.memo[key]
                if node.terminal:
                    reps[key] = (status, None)
                    continue
                question = materialize(node.question_plan, status, rng)
                reps[key] = (status, question)
                for j, child_key in enumerate(node.children, start=1):
                    if child_key not in reps:
                        nxt.append((child_key, update_status(status, question, j)))
            frontier = nxt
        self._reps = reps
        return reps

    def dump_json(self, path: str) -> None:
        """Write the reachable tree (ids, types, depths, child ids) to a file."""
        keys = self.reachable_keys()
        ids = {key: i for i, key in enumerate(keys)}
        nodes = []
        for key in keys:
            node = self.memo[key]
            nodes.append(
                {
                    "id": ids[key],
                    "type": list(key[0]),
                    "depth": self.depth - key[1],
                    "children": [ids[c] for c in node.children] if node.children else [],
                }
            )
        with open(path, "w", encoding="utf-8") as f:
            json.dump({"M": self.M, "q": self.q, "e": self.e, "B": self.depth, "nodes": nodes}, f)


def n_min(M: int, q: int, e: int) -> int:
    """Sphere-packing lower bound on the number of questions needed."""
    if M < 2 or q < 2 or e < 0:
        raise ValueError("need M >= 2, q >= 2, e >= 0")
    n = 0
    while True:
        volume = M * sum(comb(n, j) * (q - 1) ** j for j in range(e + 1))
        if volume <= q**n:
            return n
        n += 1


def child_type(counts: TypeKey, plan: PartitionPlan, j: int) -> TypeKey:
    """Type of the child status after answer j (1-based)."""
    row = plan.counts[j - 1]
    e = len(counts) - 1
    child = [row[0]]
    for i in range(1, e + 1):
        child.append(counts[i - 1] - row[i - 1] + row[i])
    return tuple(child)


def _solvable(counts: TypeKey, w: int, q: int, memo: Dict[MemoKey, TypeNode]) -> bool:
    key = (counts, w)
    cached = memo.get(key)
    if cached is not None:
        return cached.solvable
    t = StatusType(counts)
    if t.total() <= 1:
        memo[key] = TypeNode(t, w, solvable=True)
        return True
    if w == 0:
        memo[key] = TypeNode(t, w, solvable=False)
        return False
    plan = plan_counts(t, w, q)
    children = tuple((child_type(counts, plan, j), w - 1) for j in range(1, q + 1))
    ok = all(_solvable(c, w - 1, q, memo) for c, _ in children)
    memo[key] = TypeNode(t, w, solvable=ok, question_plan=plan, children=children)
    return ok


def compute_B(
    M: int,
    q: int,
    e: int,
    *,
    w_limit: Optional[int] = None,
    extra_cap: int = 64,
    seed: int = 0,
) -> Tuple[int, UlamTree]:
    """Smallest depth at which the heuristic tree isolates every state.

    Starts from the sphere-packing bound and increments until every leaf
    holds at most one state.  ``w_limit`` bails out early (raises) when only
    feasibility up to a budget matters; ``extra_cap`` bounds the search
    unconditionally so the loop is total.
    """
    if M < 2 or not 2 <= q <= M or e < 0:
        raise ValueError("need M >= 2, q in [2, M], e >= 0")
    start = n_min(M, q, e)
    hard_cap = start + extra_cap
    cap = hard_cap if w_limit is None else min(w_limit, hard_cap)
    memo: Dict[MemoKey, TypeNode] = {}
    root = (M,) + (0,) * e
    w = start
    while w <= cap:
        if _solvable(root, w, q, memo):
            return w, UlamTree(M=M, q=q, e=e, depth=w, memo=memo, seed=seed)
        w += 1
    if w_limit is not None and cap == w_limit:
        raise BudgetExceeded(
            f"no depth <= {w_limit} isolates every state for (M={M}, q={q}, e={e})"
        )
    raise RuntimeError(f"question bound search exceeded cap {hard_cap} for (M={M}, q={q}, e={e})")


class BudgetExceeded(RuntimeError):
    """The question bound exceeds the allowed depth limit."""


def sample_actions_urt(
    tree: UlamTree, k: int, rng: np.random.Generator
) -> List[QuestionTuple]:
    """Questions from k tree nodes drawn uniformly without replacement.

    Only non-terminal reachable nodes carry a question; if fewer than k
    exist, all are returned.
    """
    if k < 0:
        raise ValueError("sample size must be non-negative")
    reps = tree._representatives()
    candidates = [q for _, q in (reps[key] for key in tree.reachable_keys()) if q is not None]
    if k >= len(candidates):
        return candidates
    idx = rng.choice(len(candidates), size=k, replace=False)
    return [candidates[i] for i in idx]
