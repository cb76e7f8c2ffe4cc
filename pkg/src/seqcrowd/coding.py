"""Code-matrix fusion of a q-ary question into per-worker binary microtasks.

A q x N binary code matrix assigns one binary question per worker; the
group's N bits are decoded to a part index by minimum Hamming distance with
random tie-break.  The induced q x q channel (the performance matrix) is
computed exactly by summing over all 2^N response vectors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

# Exact channel computation enumerates 2^N response vectors.
_MAX_EXACT_N = 20
# Exhaustive matrix search is attempted when q*N is at most this.
_MAX_EXHAUSTIVE_CELLS = 16
# Column candidates are enumerated exhaustively up to this many rows.
_MAX_COLUMN_ENUM_Q = 6
# Beyond this many rows, coordinate descent buys little over the best of a
# handful of balanced random matrices; those q never win the (q, e) trade-off
# anyway because worker reliability decays with q.
_MAX_DESCENT_Q = 12


@dataclass(frozen=True)
class CodeMatrix:
    """Binary q x N matrix: rows are class codewords, columns worker questions."""

    entries: Tuple[Tuple[int, ...], ...]

    def __post_init__(self):
        width = len(self.entries[0])
        for row in self.entries:
            if len(row) != width:
                raise ValueError("ragged code matrix")
            if any(v not in (0, 1) for v in row):
                raise ValueError("entries must be 0/1")

    @property
    def q(self) -> int:
        return len(self.entries)

    @property
    def N(self) -> int:
        return len(self.entries[0])

    def as_array(self) -> np.ndarray:
        return np.array(self.entries, dtype=np.int8)

    def to_json(self) -> dict:
        return {"q": self.q, "N": self.N, "rows": [list(r) for r in self.entries]}


@dataclass(frozen=True)
class PerformanceMatrix:
    """Row-stochastic q x q channel: P[l, o] = p(decoded o | true part l)."""

    probs: np.ndarray

    def __post_init__(self):
        p = self.probs
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise ValueError("performance matrix must be square")
        if np.any(p < -1e-15) or np.any(p > 1 + 1e-15):
            raise ValueError("entries must be probabilities")
        if np.max(np.abs(p.sum(axis=1) - 1.0)) > 1e-12:
            raise ValueError("rows must sum to 1")

    @property
    def q(self) -> int:
        return self.probs.shape[0]

    def min_diagonal(self) -> float:
        return float(np.min(np.diag(self.probs)))


def column_question(G: CodeMatrix, j: int) -> Tuple[Tuple[int, ...], Tuple[int, ...]]:
    """The binary question (B_0, B_1) worker j answers: which rows carry bit k."""
    if not 1 <= j <= G.N:
        raise ValueError(f"worker index {j} outside [1, {G.N}]")
    col = [row[j - 1] for row in G.entries]
    b0 = tuple(l for l in range(1, G.q + 1) if col[l - 1] == 0)
    b1 = tuple(l for l in range(1, G.q + 1) if col[l - 1] == 1)
    return b0, b1


def bit_probabilities(G: CodeMatrix, l: int, mu_q: float) -> np.ndarray:
    """P(worker reports bit 1) per column, given the true part is l.

    A worker's opinion is correct with probability mu_q and otherwise
    uniform over the other q-1 parts; the reported bit is the code entry of
    the opinion's row.
    """
    arr = G.as_array().astype(float)
    q = G.q
    others = arr.sum(axis=0) - arr[l - 1]
    return mu_q * arr[l - 1] + (1.0 - mu_q) / (q - 1) * others


def response_vector_prob(G: CodeMatrix, l: int, mu_q: float, u: Tuple[int, ...]) -> float:
    """Exact probability of the group bit vector u given the true part l."""
    if not 0.0 <= mu_q <= 1.0:
        raise ValueError("mean reliability must be in [0, 1]")
    if not 1 <= l <= G.q:
        raise ValueError(f"part index {l} outside [1, {G.q}]")
    if len(u) != G.N:
        raise ValueError("response vector length mismatch")
    p1 = bit_probabilities(G, l, mu_q)
    prob = 1.0
    for j, bit in enumerate(u):
        prob *= p1[j] if bit == 1 else 1.0 - p1[j]
    return prob


def hamming_decode(G: CodeMatrix, u, rng: np.random.Generator) -> int:
    """Row (1-based) with minimum Hamming distance to u; ties uniform random."""
    arr = G.as_array()
    uv = np.asarray(u, dtype=np.int8)
    dists = np.count_nonzero(arr != uv, axis=1)
    winners = np.flatnonzero(dists == dists.min())
    if len(winners) == 1:
        return int(winners[0]) + 1
    return int(rng.choice(winners)) + 1


from functools import lru_cache


@lru_cache(maxsize=8)
def _all_vectors(n: int) -> np.ndarray:
    return ((np.arange(2**n)[:, None] >> np.arange(n)[None, ::-1]) & 1).astype(np.int8)


def _decision_regions(G: CodeMatrix) -> np.ndarray:
    """For every u in {0,1}^N: boolean q x 2^N mask of minimum-distance rows."""
    arr = G.as_array()
    all_u = _all_vectors(G.N)
    dists = (all_u[:, None, :] != arr[None, :, :]).sum(axis=2)  # (2^N, q)
    mins = dists.min(axis=1, keepdims=True)
    return (dists == mins).T  # (q, 2^N)


def performance_matrix(G: CodeMatrix, mu_q: float) -> PerformanceMatrix:
    """Exact decode channel, splitting tie mass equally among tied rows."""
    if not 0.0 <= mu_q <= 1.0:
        raise ValueError("mean reliability must be in [0, 1]")
    if G.N > _MAX_EXACT_N:
        raise ValueError(f"exact channel needs N <= {_MAX_EXACT_N} (2^N enumeration)")
    q = G.q
    regions = _decision_regions(G)  # (q, 2^N) boolean
    weights = regions.astype(float) / regions.sum(axis=0)[None, :]  # C^o(u)
    all_u = _all_vectors(G.N)
    arr = G.as_array().astype(float)
    col_sums = arr.sum(axis=0)
    # (q, N) bit-1 probabilities for every true part at once.
    p1s = mu_q * arr + (1.0 - mu_q) / (q - 1) * (col_sums[None, :] - arr)
    pu = np.prod(
        np.where(all_u[None, :, :] == 1, p1s[:, None, :], 1.0 - p1s[:, None, :]), axis=2
    )  # (q, 2^N)
    probs = pu @ weights.T
    return PerformanceMatrix(probs)


def average_error_cost(G: CodeMatrix, mu_q: float) -> float:
    """Mean off-diagonal channel mass: the matrix-search objective."""
    P = performance_matrix(G, mu_q).probs
    return float((P.sum() - np.trace(P)) / G.q)


def _monte_carlo_cost(
    G: CodeMatrix, mu_q: float, rng: np.random.Generator, samples: int = 4000
) -> float:
    """Simulated decode error rate, for matrices too wide for the exact channel."""
    arr = G.as_array()
    q, n = arr.shape
    ls = rng.integers(0, q, size=samples)
    correct = rng.random((samples, n)) < mu_q
    wrong_rows = rng.integers(1, q, size=(samples, n))
    opinions = np.where(correct, ls[:, None], (ls[:, None] + wrong_rows) % q)
    bits = arr[opinions, np.arange(n)[None, :]]
    dists = (bits[:, None, :] != arr[None, :, :]).sum(axis=2)
    mins = dists.min(axis=1)
    tied = dists == mins[:, None]
    # Fractional credit for ties mirrors the uniform tie-break.
    credit = tied[np.arange(samples), ls] / tied.sum(axis=1)
    return float(1.0 - credit.mean())


def _has_duplicate_rows(rows) -> bool:
    return len(set(rows)) != len(rows)


def _balanced_matrix(q: int, N: int, rng: np.random.Generator) -> CodeMatrix:
    """Distinct rows from random balanced columns (half ones per column)."""
    while True:
        arr = np.zeros((q, N), dtype=np.int8)
        for j in range(N):
            ones = rng.choice(q, size=q // 2, replace=False)
            arr[ones, j] = 1
        rows = tuple(map(tuple, arr.tolist()))
        if q > 2**N or not _has_duplicate_rows(rows):
            return CodeMatrix(rows)


def _random_matrix(q: int, N: int, rng: np.random.Generator) -> CodeMatrix:
    while True:
        rows = tuple(tuple(int(b) for b in rng.integers(0, 2, size=N)) for _ in range(q))
        if q > 2**N or not _has_duplicate_rows(rows):
            return CodeMatrix(rows)


def _column_candidates(q: int, rng: np.random.Generator) -> np.ndarray:
    if q <= _MAX_COLUMN_ENUM_Q:
        vals = np.arange(2**q)
        return ((vals[:, None] >> np.arange(q)[None, ::-1]) & 1).astype(np.int8)
    # Too many patterns to enumerate: balanced random columns plus extremes.
    cands = [np.zeros(q, dtype=np.int8), np.ones(q, dtype=np.int8)]
    for _ in range(62):
        col = np.zeros(q, dtype=np.int8)
        ones = rng.choice(q, size=q // 2, replace=False)
        col[ones] = 1
        cands.append(col)
    return np.unique(np.array(cands), axis=0)


def search_code_matrix(
    q: int,
    N: int,
    mu_q: float,
    rng: np.random.Generator,
    restarts: int = 20,
) -> Tuple[CodeMatrix, float]:
    """Best code matrix found for the average decode-error objective.

    Small instances (q*N <= 16) are searched exhaustively.  Matrices whose
    exact channel is computable (N <= 20) get coordinate descent over
    columns from random restarts, enumerating all column patterns when q is
    small enough and sampling balanced patterns when it is not.  Wider
    matrices (the one-shot baseline with N(b-1) workers) are picked as the
    best of the random restarts under a Monte-Carlo cost estimate, since a
    noisy objective makes descent unreliable.  Returns the matrix and its
    achieved cost.
    """
    if q < 2 or N < 1:
        raise ValueError("need q >= 2 and N >= 1")
    if q * N <= _MAX_EXHAUSTIVE_CELLS:
        best, best_cost = None, None
        for code in range(2 ** (q * N)):
            bits = [(code >> k) & 1 for k in range(q * N - 1, -1, -1)]
            rows = tuple(tuple(bits[r * N : (r + 1) * N]) for r in range(q))
            if q <= 2**N and _has_duplicate_rows(rows):
                continue
            G = CodeMatrix(rows)
            cost = average_error_cost(G, mu_q)
            if best_cost is None or cost < best_cost - 1e-15:
                best, best_cost = G, cost
        return best, best_cost

    if N > _MAX_EXACT_N or q > _MAX_DESCENT_Q:
        cost_fn = _monte_carlo_cost if N > _MAX_EXACT_N else average_error_cost
        best, best_cost = None, None
        for _ in range(max(restarts, 8)):
            G = _balanced_matrix(q, N, rng)
            cost = cost_fn(G, mu_q, rng) if N > _MAX_EXACT_N else cost_fn(G, mu_q)
            if best_cost is None or cost < best_cost:
                best, best_cost = G, cost
        return best, best_cost

    candidates = _column_candidates(q, rng)
    best, best_cost = None, None
    for _ in range(restarts):
        arr = _random_matrix(q, N, rng).as_array()
        cost = average_error_cost(CodeMatrix(tuple(map(tuple, arr.tolist()))), mu_q)
        for _sweep in range(5):
            improved = False
            for j in range(N):
                col_best, col_cost = arr[:, j].copy(), cost
                for cand in candidates:
                    arr[:, j] = cand
                    rows = tuple(map(tuple, arr.tolist()))
                    if q <= 2**N and _has_duplicate_rows(rows):
                        continue
                    c = average_error_cost(CodeMatrix(rows), mu_q)
                    if c < col_cost - 1e-12:
                        col_best, col_cost = cand.copy(), c
                arr[:, j] = col_best
                if col_cost < cost - 1e-12:
                    cost = col_cost
                    improved = True
            if not improved:
                break
        if best_cost is None or cost < best_cost:
            best, best_cost = CodeMatrix(tuple(map(tuple, arr.tolist()))), cost
    return best, best_cost


# Channels are reused across the whole run so every policy sees an
# identical code matrix for a given (q, N, mu) setting.
_matrix_cache: Dict[Tuple[int, int, int], Tuple[CodeMatrix, float]] = {}


def cached_code_matrix(
    q: int, N: int, mu_q: float, seed: int = 12345, restarts: Optional[int] = None
) -> Tuple[CodeMatrix, float]:
    """search_code_matrix memoized on (q, N, mu rounded to 1e-3).

    The default restart budget shrinks with q to keep plan optimization
    (which sweeps q up to M) affordable; descent from a handful of starts
    is already near-converged on these sizes.
    """
    key = (q, N, round(mu_q * 1000))
    if key not in _matrix_cache:
        if restarts is None:
            restarts = 20 if q <= 4 else (8 if q <= 6 else 3)
        rng = np.random.default_rng(seed + 7919 * q + 104729 * N + key[2])
        _matrix_cache[key] = search_code_matrix(q, N, mu_q, rng, restarts=restarts)
    return _matrix_cache[key]
