"""Simulated worker groups answering q-ary questions through a code matrix.

Each question goes to a fresh group of N workers.  A worker's q-ary opinion
is correct with probability equal to their reliability and otherwise
uniform over the wrong parts; the opinion is reported as the single code
bit their column assigns to it, and the group's bits are Hamming-decoded
back to a part index.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .coding import CodeMatrix, hamming_decode
from .ulam import QuestionTuple

RELIABILITY_EXPONENT = -0.2


@dataclass(frozen=True)
class WorkerModel:
    """Group size, reliability scale, and the reliability distribution.

    ``distribution`` is "deterministic" (every worker exactly at the mean,
    the default: all design formulas only use the mean) or "beta"
    (mean mu_q, concentration kappa, for robustness experiments).
    """

    N: int = 10
    r: float = 0.75
    distribution: str = "deterministic"
    kappa: float = 10.0

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("group size must be positive")
        if not 0.0 < self.r <= 1.0:
            raise ValueError("reliability scale must be in (0, 1]")
        if self.distribution not in ("deterministic", "beta"):
            raise ValueError(f"unknown distribution {self.distribution!r}")


def mean_reliability(model: WorkerModel, q: int) -> float:
    """Mean worker reliability r * q**-0.2 for a q-ary question.

    Rejects degenerate settings where the "correct" answer is no more
    likely than uniform guessing.
    """
    if q < 2:
        raise ValueError("questions must have at least two parts")
    mu = model.r * q**RELIABILITY_EXPONENT
    if mu >= 1.0:
        mu = 1.0
    if mu <= 1.0 / q:
        raise ValueError(f"mean reliability {mu:.4f} not above chance 1/{q}")
    return mu


def draw_reliabilities(model: WorkerModel, q: int, rng: np.random.Generator) -> np.ndarray:
    """Fresh per-worker reliabilities for one group."""
    mu = mean_reliability(model, q)
    if model.distribution == "deterministic":
        return np.full(model.N, mu)
    a = mu * model.kappa
    b = (1.0 - mu) * model.kappa
    return rng.beta(a, b, size=model.N)


def sample_opinion(true_part: int, q: int, reliability: float, rng: np.random.Generator) -> int:
    """One worker's q-ary opinion: truthful w.p. reliability, else uniform wrong."""
    if not 0.0 <= reliability <= 1.0:
        raise ValueError("reliability must be in [0, 1]")
    if rng.random() < reliability:
        return true_part
    shift = int(rng.integers(1, q))
    return (true_part - 1 + shift) % q + 1


def group_answer(
    question: QuestionTuple,
    true_state: int,
    model: WorkerModel,
    G: CodeMatrix,
    rng: np.random.Generator,
    *,
    missing_ok: bool = False,
) -> Tuple[int, Tuple[int, ...]]:
    """Decoded answer and raw bit vector from one fresh worker group.

    When the true state is outside the question's support there is no
    correct part; with ``missing_ok`` opinions are drawn uniformly over the
    q parts (this happens once workers have erred more often than the game
    tolerates), otherwise it is an error.
    """
    q = question.q
    if G.q != q:
        raise ValueError("code matrix row count must match question arity")
    true_part = question.part_of(true_state)
    if true_part is None and not missing_ok:
        raise ValueError(f"state {true_state} not covered by the question")
    lambdas = draw_reliabilities(model, q, rng)
    bits = []
    for k in range(model.N):
        if true_part is None:
            opinion = int(rng.integers(1, q + 1))
        else:
            opinion = sample_opinion(true_part, q, float(lambdas[k]), rng)
        bits.append(G.entries[opinion - 1][k])
    u = tuple(bits)
    return hamming_decode(G, u, rng), u
