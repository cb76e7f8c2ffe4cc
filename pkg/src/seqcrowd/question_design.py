"""Next-question construction for the Ulam-Renyi game.

The heuristic splits the lowest nonempty lie class evenly across the q
parts, then fills in the higher lie classes one at a time so that the
weights of the q child statuses stay as balanced as possible.  Each fill
step is an integer quadratic program over a simplex; because its objective
reduces to a separable convex function, an incremental marginal-cost
allocation solves it exactly.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .ulam import GameStatus, QuestionTuple, StatusType, element_weight

# Above this budget the unit-by-unit greedy switches to water-filling with a
# small greedy top-up; both are exact, water-filling is O(q log q).
_GREEDY_UNIT_LIMIT = 256


@dataclass(frozen=True)
class AllocationProblem:
    """Balance one lie class across q parts given current partial loads.

    Minimize sum_{j,l} (loads[j] - loads[l] + alpha*(x_j - x_l))^2 over
    integer x >= 0 with sum(x) == budget and x_j <= cap.
    """

    q: int
    bin_loads: Tuple[int, ...]
    alpha: int
    budget: int
    cap: int

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.budget < 0:
            raise ValueError("budget must be non-negative")
        if len(self.bin_loads) != self.q:
            raise ValueError("need one load per part")
        if self.budget > self.q * self.cap:
            raise ValueError("infeasible: budget exceeds total capacity")


@dataclass(frozen=True)
class PartitionPlan:
    """Counts matrix: entry [j][i] is how many A_i labels go to part j+1."""

    counts: Tuple[Tuple[int, ...], ...]

    @property
    def q(self) -> int:
        return len(self.counts)

    def column_sums(self) -> Tuple[int, ...]:
        return tuple(sum(col) for col in zip(*self.counts))


def allocation_objective(p: AllocationProblem, x: Sequence[int]) -> int:
    """Exact pairwise-difference objective, in arbitrary-precision ints."""
    d = [p.bin_loads[j] + p.alpha * x[j] for j in range(p.q)]
    return sum((a - b) ** 2 for a in d for b in d)


def miqp_matrices(p: AllocationProblem) -> Tuple[np.ndarray, np.ndarray]:
    """(F, c) of the equivalent quadratic program min 1/2 x'Fx + c'x.

    F has diagonal (q-1)*alpha and off-diagonal -alpha; c_j sums the load
    differences of part j against all parts.  On the feasible simplex the
    pairwise objective equals 4*alpha*(1/2 x'Fx + c'x) plus a constant.
    """
    q, a = p.q, p.alpha
    F = np.full((q, q), -a, dtype=float)
    np.fill_diagonal(F, (q - 1) * a)
    c = np.array(
        [sum(p.bin_loads[j] - p.bin_loads[k] for k in range(q)) for j in range(q)],
        dtype=float,
    )
    return F, c


def even_split_lowest(t: StatusType, q: int) -> Tuple[int, Tuple[int, ...]]:
    """Even q-way split of the lowest nonempty lie class.

    Returns (m, counts) where m is the class index and the first
    |A_m| mod q parts get one extra element.
    """
    if t.total() == 0:
        raise ValueError("all-zero status type has nothing to split")
    m = next(i for i, c in enumerate(t.counts) if c > 0)
    n = t.counts[m]
    omega, delta = divmod(n, q)
    counts = tuple(omega + 1 if j < delta else omega for j in range(q))
    return m, counts


def _greedy_units(p: AllocationProblem, base: List[int], remaining: int) -> List[int]:
    """Allocate ``remaining`` units one at a time to the cheapest marginal.

    Marginal cost of raising x_j from v to v+1 is
    2*alpha*loads[j] + alpha^2*(2v+1), strictly increasing in v, so this
    greedy is exact for the separable convex objective.  Ties go to the
    highest part index, which lands on the lexicographically smallest
    optimum.
    """
    a = p.alpha
    x = list(base)
    heap = []
    for j in range(p.q):
        if x[j] < p.cap:
            m = 2 * a * p.bin_loads[j] + a * a * (2 * x[j] + 1)
            heapq.heappush(heap, (m, -j))
    for _ in range(remaining):
        m, nj = heapq.heappop(heap)
        j = -nj
        x[j] += 1
        if x[j] < p.cap:
            m = 2 * a * p.bin_loads[j] + a * a * (2 * x[j] + 1)
            heapq.heappush(heap, (m, -j))
    return x


def solve_allocation(p: AllocationProblem) -> Tuple[int, ...]:
    """Exact minimizer of the balancing objective.

    Since sum(x) is fixed, the pairwise objective differs from
    sum_j (loads[j] + alpha*x_j)^2 by a constant, which is separable and
    convex; incremental allocation by marginal cost is therefore optimal.
    With alpha > 0 ties resolve toward the lexicographically smallest
    vector; with alpha == 0 every vector is optimal and everything goes to
    the first parts.
    """
    if p.budget == 0:
        return (0,) * p.q
    if p.alpha == 0:
        # Objective does not depend on x; lexicographically greatest choice.
        x = [0] * p.q
        left = p.budget
        for j in range(p.q):
            x[j] = min(p.cap, left)
            left -= x[j]
        return tuple(x)
    if p.budget <= _GREEDY_UNIT_LIMIT:
        return tuple(_greedy_units(p, [0] * p.q, p.budget))
    base = _waterfill_base(p)
    return tuple(_greedy_units(p, base, p.budget - sum(base)))


def _waterfill_base(p: AllocationProblem) -> List[int]:
    """Under-estimate of the optimum from the continuous water level.

    The continuous optimum is x_j = max(0, (L - V_j)/alpha) for the level L
    with sum(x) == budget.  Flooring and backing off two units keeps the
    base componentwise below every integer optimum, so the greedy top-up
    lands on the exact solution.
    """
    a = float(p.alpha)
    order = sorted(range(p.q), key=lambda j: p.bin_loads[j])
    level = None
    for k in range(1, p.q + 1):
        active = order[:k]
        # sum_{j active} (L - V_j)/a == budget  =>  L = (a*budget + sum V)/k
        cand = (a * p.budget + sum(float(p.bin_loads[j]) for j in active)) / k
        nxt = float(p.bin_loads[order[k]]) if k < p.q else float("inf")
        if cand <= nxt:
            level = cand
            active_k = k
            break
    if level is None:  # numerical fallback: everything active
        active_k = p.q
        level = (a * p.budget + sum(float(p.bin_loads[j]) for j in order)) / p.q
    base = [0] * p.q
    for j in order[:active_k]:
        cont = (level - float(p.bin_loads[j])) / a
        base[j] = max(0, min(p.cap, int(cont) - 2))
    if sum(base) > p.budget:  # safety net: fall back to a plain greedy start
        return [0] * p.q
    return base


def brute_force_allocation(p: AllocationProblem, limit: int = 10**6) -> Tuple[int, ...]:
    """Exhaustive-search oracle over all feasible integer allocations."""

    def count_points(budget, parts):
        if parts == 1:
            return 1 if budget <= p.cap else 0
        total = 0
        for v in range(min(budget, p.cap) + 1):
            total += count_points(budget - v, parts - 1)
        return total

    if count_points(p.budget, p.q) > limit:
        raise ValueError("instance too large for exhaustive search")

    best_x = None
    best_obj = None

    def rec(j, left, prefix):
        nonlocal best_x, best_obj
        if j == p.q - 1:
            if left > p.cap:
                return
            x = prefix + [left]
            obj = allocation_objective(p, x)
            if best_obj is None or obj < best_obj or (obj == best_obj and x < list(best_x)):
                best_obj, best_x = obj, tuple(x)
            return
        for v in range(min(left, p.cap) + 1):
            rec(j + 1, left - v, prefix + [v])

    rec(0, p.budget, [])
    return best_x


def plan_counts(t: StatusType, w: int, q: int) -> PartitionPlan:
    """Counts matrix for the next question, from the type alone.

    Row m (lowest nonempty class) is split evenly; each later nonempty
    class is balanced against the partial child weights accumulated so far.
    """
    if t.total() == 0:
        raise ValueError("cannot design a question for an empty status")
    if w < 1:
        raise ValueError("need at least one question left")
    e = t.e
    weights = [element_weight(i, w - 1, q, e) for i in range(e + 1)] + [0]
    m, first = even_split_lowest(t, q)
    counts = [[0] * (e + 1) for _ in range(q)]
    loads = [0] * q
    for j in range(q):
        counts[j][m] = first[j]
        loads[j] = (weights[m] - weights[m + 1]) * first[j]
    for i in range(m + 1, e + 1):
        if t.counts[i] == 0:
            continue
        alpha = weights[i] - weights[i + 1]
        prob = AllocationProblem(
            q=q,
            bin_loads=tuple(loads),
            alpha=alpha,
            budget=t.counts[i],
            cap=t.counts[i],
        )
        x = solve_allocation(prob)
        for j in range(q):
            counts[j][i] = x[j]
            loads[j] += alpha * x[j]
    return PartitionPlan(tuple(tuple(row) for row in counts))


def materialize(
    plan: PartitionPlan, status: GameStatus, rng: Optional[np.random.Generator] = None
) -> QuestionTuple:
    """Turn a counts matrix into concrete label sets over a status.

    With an RNG, each lie class is shuffled before assignment; without one,
    the smallest labels go to the lowest part index.  Either way the result
    covers the status support exactly.
    """
    q = plan.q
    if plan.column_sums() != status.type.counts:
        raise ValueError("plan does not match the status type")
    rows: List[List[Tuple[int, ...]]] = [[] for _ in range(q)]
    for i, labels in enumerate(status.classes_by_lies):
        pool = list(labels)
        if rng is not None:
            rng.shuffle(pool)
        pos = 0
        for j in range(q):
            take = plan.counts[j][i]
            rows[j].append(tuple(sorted(pool[pos : pos + take])))
            pos += take
    parts = tuple(tuple(sorted(x for chunk in row for x in chunk)) for row in rows)
    return QuestionTuple(parts, rows=tuple(tuple(row) for row in rows))


def design_question(
    status: GameStatus,
    w: int,
    q: int,
    rng: Optional[np.random.Generator] = None,
) -> QuestionTuple:
    """Full heuristic: plan the counts for the status type, then materialize."""
    from .ulam import is_final

    final, _ = is_final(status)
    if final:
        raise ValueError("status is already decided; nothing to ask")
    plan = plan_counts(status.type, w, q)
    return materialize(plan, status, rng)
