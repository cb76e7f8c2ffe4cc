"""Posterior over the hidden state and its Bayes update.

The belief is the POMDP's sufficient statistic.  After observing decoded
answer o to question T, mass inside the question's support is reweighted
by the channel column for o; mass outside the support is untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coding import PerformanceMatrix
from .ulam import QuestionTuple


@dataclass(frozen=True)
class Belief:
    """Probability vector over state labels 1..M."""

    probs: np.ndarray

    def __post_init__(self):
        p = self.probs
        if p.ndim != 1 or len(p) < 2:
            raise ValueError("belief must be a vector over at least two states")
        if np.any(p < 0):
            raise ValueError("negative probability mass")
        if abs(float(p.sum()) - 1.0) > 1e-9:
            raise ValueError("belief must sum to 1")

    @property
    def M(self) -> int:
        return len(self.probs)

    def prob(self, label: int) -> float:
        return float(self.probs[label - 1])


def uniform_belief(M: int) -> Belief:
    if M < 2:
        raise ValueError("need at least two states")
    return Belief(np.full(M, 1.0 / M))


def update_belief(
    belief: Belief, question: QuestionTuple, channel: PerformanceMatrix, o: int
) -> Belief:
    """Bayes update after decoded answer o; support-external mass unchanged."""
    if not 1 <= o <= question.q:
        raise ValueError(f"observation {o} outside [1, {question.q}]")
    p = belief.probs.copy()
    support = list(question.support())
    idx = np.array([s - 1 for s in support], dtype=int)
    if len(idx) == 0:
        raise ValueError("question has empty support")
    inside = p[idx]
    inside_mass = float(inside.sum())
    if inside_mass <= 0.0:
        raise ValueError("no belief mass on the question's support")
    # Channel likelihood for each supported state, via its part index.
    part_of = np.array([question.part_of(s) for s in support], dtype=int)
    lik = channel.probs[part_of - 1, o - 1]
    z = float((lik * inside).sum()) / inside_mass
    if z <= 0.0:
        raise ValueError("observation has zero probability under the belief")
    p[idx] = lik * inside / z
    # Defensive renormalization absorbs floating-point drift.
    p /= p.sum()
    return Belief(p)


def map_decision(belief: Belief) -> int:
    """Most probable state label; ties go to the lowest label."""
    return int(np.argmax(belief.probs)) + 1
