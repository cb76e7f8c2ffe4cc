"""Online Monte-Carlo planning over a sampled question set plus declare.

The full action space of all q-tuples is astronomically large, so the
planner works with a fixed sample of questions (from the Ulam-Renyi tree,
or uniform random as a baseline) plus a single terminal declare action
whose payoff is the MAP decision.  Search is UCB1 over a tree keyed by
(action, observation) histories; beliefs at tree nodes are tracked exactly
as M-vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import log, sqrt
from typing import Dict, List, Optional, Tuple

import numpy as np

from .belief import Belief, map_decision, uniform_belief, update_belief
from .coding import CodeMatrix, PerformanceMatrix, cached_code_matrix, performance_matrix
from .policies import TrialResult
from .ulam import QuestionTuple
from .ulam_tree import UlamTree, sample_actions_urt
from .worker_sim import WorkerModel, group_answer, mean_reliability

DEFAULT_SIMS = 4096
DEFAULT_C_UCB = 1.0
# How fast the eligible action set grows with node visits (see _simulate).
WIDENING_RATE = 0.5


@dataclass
class _ActionView:
    """Precomputed lookups for one question action."""

    question: QuestionTuple
    support_idx: np.ndarray  # 0-based state indices in the support
    part_idx: np.ndarray  # 0-based part index per support state
    part_of_state: Dict[int, int]  # label -> 1-based part


@dataclass
class PomdpModel:
    """Sampled-action POMDP for the labeling problem."""

    M: int
    b: int
    gamma: float
    q: int
    worker_model: WorkerModel
    actions: List[QuestionTuple]
    G: CodeMatrix
    channel: PerformanceMatrix
    # Decode distribution when the true state is outside a question's
    # support (workers guess uniformly).
    orphan_obs: np.ndarray
    views: List[_ActionView] = field(default_factory=list)
    channel_cdf: np.ndarray = field(default=None)
    orphan_cdf: np.ndarray = field(default=None)
    # (n_actions, q + 1, M) one-hot membership per part, last slot = outside
    # the support; used to score questions by how evenly they split a belief.
    part_masses: np.ndarray = field(default=None)

    def __post_init__(self):
        if not self.views:
            for question in self.actions:
                support = np.array([s - 1 for s in question.support()], dtype=np.intp)
                parts = np.array(
                    [question.part_of(s + 1) - 1 for s in support], dtype=np.intp
                )
                self.views.append(
                    _ActionView(
                        question,
                        support,
                        parts,
                        {s + 1: int(p) + 1 for s, p in zip(support, parts)},
                    )
                )
        self.channel_cdf = np.cumsum(self.channel.probs, axis=1)
        self.orphan_cdf = np.cumsum(self.orphan_obs)
        membership = np.zeros((len(self.actions), self.q + 1, self.M))
        for a, view in enumerate(self.views):
            membership[a, self.q, :] = 1.0
            membership[a, view.part_idx, view.support_idx] = 1.0
            membership[a, self.q, view.support_idx] = 0.0
        self.part_masses = membership.reshape(len(self.actions) * (self.q + 1), self.M)

    def split_scores_for(self, belief: np.ndarray, actions: np.ndarray) -> np.ndarray:
        """split_scores restricted to a subset of question indices."""
        masses = self.part_masses.reshape(len(self.actions), self.q + 1, self.M)[actions] @ belief
        inside = masses[:, : self.q]
        return 1.0 - 2.0 * masses[:, self.q] - np.einsum("ij,ij->i", inside, inside)

    def split_scores(self, belief: np.ndarray) -> np.ndarray:
        """How well each question discriminates under the given belief.

        Gini impurity over the question's parts, with mass outside the
        support counted as pure loss (it is untouched by the update): score
        = 1 - 2*m_out - sum_j m_j^2.  Maximal for an even full-coverage
        split; such questions shrink the posterior fastest.
        """
        masses = (self.part_masses @ belief).reshape(len(self.actions), self.q + 1)
        inside = masses[:, : self.q]
        return 1.0 - 2.0 * masses[:, self.q] - np.einsum("ij,ij->i", inside, inside)

    @property
    def n_actions(self) -> int:
        """Question actions plus the final declare action."""
        return len(self.actions) + 1

    @property
    def declare_index(self) -> int:
        return len(self.actions)


def _orphan_observation_dist(G: CodeMatrix, mu_q: float) -> np.ndarray:
    """Decode distribution when every worker opinion is a uniform guess."""
    from .coding import _all_vectors, _decision_regions

    arr = G.as_array().astype(float)
    p1 = arr.mean(axis=0)  # uniform opinion -> bit 1 with the column mean
    all_u = _all_vectors(G.N)
    pu = np.prod(np.where(all_u == 1, p1[None, :], 1.0 - p1[None, :]), axis=1)
    regions = _decision_regions(G)
    weights = regions.astype(float) / regions.sum(axis=0)[None, :]
    return weights @ pu


def uniform_question_sample(
    M: int, q: int, k: int, rng: np.random.Generator
) -> List[QuestionTuple]:
    """Baseline sampler: random disjoint q-part covers of random subsets."""
    questions = []
    while len(questions) < k:
        mask = rng.random(M) < 0.5
        support = np.flatnonzero(mask) + 1
        if len(support) < 2:
            continue
        assign = rng.integers(0, q, size=len(support))
        parts = tuple(
            tuple(int(s) for s in support[assign == j]) for j in range(q)
        )
        questions.append(QuestionTuple(parts))
    return questions


def build_model(
    M: int,
    b: int,
    gamma: float,
    model: WorkerModel,
    plan_tree: UlamTree,
    k: int,
    rng: np.random.Generator,
    *,
    sampler: str = "urt",
) -> PomdpModel:
    """Assemble the sampled-action POMDP around a planned question tree."""
    if k <= 0:
        raise ValueError("need a positive action sample size")
    if sampler not in ("urt", "uniform"):
        raise ValueError(f"unknown sampler {sampler!r}")
    q = plan_tree.q
    mu = mean_reliability(model, q)
    G, _ = cached_code_matrix(q, model.N, mu)
    channel = performance_matrix(G, mu)
    if sampler == "urt":
        actions = sample_actions_urt(plan_tree, k, rng)
    else:
        actions = uniform_question_sample(M, q, k, rng)
    return PomdpModel(
        M=M,
        b=b,
        gamma=gamma,
        q=q,
        worker_model=model,
        actions=actions,
        G=G,
        channel=channel,
        orphan_obs=_orphan_observation_dist(G, mu),
    )


class SearchNode:
    """MCTS bookkeeping: per-action visit counts and value estimates.

    Untried actions are expanded in descending split-score order (declare
    first, since its value is pinned by the belief itself), so with few
    simulations per node the search still reaches the informative moves.
    """

    __slots__ = (
        "belief", "counts", "values", "children", "total", "order",
        "next_untried", "rollout_candidates",
    )

    def __init__(self, belief: np.ndarray, model: "PomdpModel"):
        self.belief = belief
        n_actions = model.n_actions
        self.counts = np.zeros(n_actions, dtype=np.int64)
        self.values = np.zeros(n_actions, dtype=np.float64)
        self.children: Dict[Tuple[int, int], "SearchNode"] = {}
        self.total = 0
        by_score = np.argsort(-model.split_scores(belief), kind="stable")
        self.order = np.concatenate(([model.declare_index], by_score))
        self.next_untried = 0
        self.rollout_candidates = by_score[:_ROLLOUT_CANDIDATES]


def _fast_update(
    belief: np.ndarray, view: _ActionView, channel: np.ndarray, o: int
) -> np.ndarray:
    """Bayes update on a raw vector; o is 0-based here."""
    p = belief.copy()
    inside = p[view.support_idx]
    lik = channel[view.part_idx, o]
    mass = inside.sum()
    z = float(lik @ inside)
    if z <= 0.0:
        # Observation impossible under this belief; leave mass untouched.
        return p
    p[view.support_idx] = inside * lik * (mass / z)
    return p


def _sample_obs(
    model: PomdpModel, view: _ActionView, true_state: int, rng: np.random.Generator
) -> int:
    part = view.part_of_state.get(true_state)
    u = rng.random()
    if part is None:
        cdf = model.orphan_cdf
    else:
        cdf = model.channel_cdf[part - 1]
    return int(np.searchsorted(cdf, u))


# Rollouts re-score only this many of the start node's best questions per
# step; scoring the full action sample every step dominates planning time.
_ROLLOUT_CANDIDATES = 32


def _rollout(
    model: PomdpModel,
    belief: np.ndarray,
    true_state: int,
    steps_left: int,
    candidates: np.ndarray,
    rng: np.random.Generator,
) -> float:
    """Greedy belief-splitting questions until the horizon forces a declare.

    Always asking down to the horizon is a lower bound on the value of
    continuing; the search's declare action corrects for over-asking.
    Candidates are the start node's top-scored questions.
    """
    reward = 0.0
    while steps_left > 1:
        a = int(candidates[np.argmax(model.split_scores_for(belief, candidates))])
        view = model.views[a]
        o = _sample_obs(model, view, true_state, rng)
        belief = _fast_update(belief, view, model.channel.probs, o)
        reward -= model.gamma
        steps_left -= 1
    return reward + float(int(np.argmax(belief)) + 1 == true_state)


def _simulate(
    model: PomdpModel,
    node: SearchNode,
    true_state: int,
    steps_left: int,
    c_ucb: float,
    rng: np.random.Generator,
) -> float:
    declare = model.declare_index
    if steps_left <= 1:
        # Horizon: only declare remains.
        r = float(int(np.argmax(node.belief)) + 1 == true_state)
        node.counts[declare] += 1
        node.total += 1
        node.values[declare] += (r - node.values[declare]) / node.counts[declare]
        return r
    # Progressive widening: only the declare action plus the best-scored
    # questions compete until the node has enough visits to tell close
    # values apart.  Growth is logarithmic in visits: value gaps between
    # good questions are far smaller than Monte-Carlo noise, so a wide
    # eligible set would let noise pick arbitrary actions.
    n_allowed = min(2 + int(WIDENING_RATE * np.log2(node.total + 1)), len(node.order))
    if node.next_untried < n_allowed:
        a = int(node.order[node.next_untried])
        node.next_untried += 1
    else:
        eligible = node.order[:n_allowed]
        explore = c_ucb * np.sqrt(log(node.total) / node.counts[eligible])
        a = int(eligible[np.argmax(node.values[eligible] + explore)])
    if a == declare:
        r = float(int(np.argmax(node.belief)) + 1 == true_state)
    else:
        view = model.views[a]
        o = _sample_obs(model, view, true_state, rng)
        child = node.children.get((a, o))
        if child is None:
            child_belief = _fast_update(node.belief, view, model.channel.probs, o)
            child = SearchNode(child_belief, model)
            node.children[(a, o)] = child
            r = -model.gamma + _rollout(
                model, child_belief, true_state, steps_left - 1,
                child.rollout_candidates, rng,
            )
        else:
            r = -model.gamma + _simulate(model, child, true_state, steps_left - 1, c_ucb, rng)
    node.counts[a] += 1
    node.total += 1
    node.values[a] += (r - node.values[a]) / node.counts[a]
    return r


def plan_action(
    model: PomdpModel,
    belief: Belief,
    steps_left: int,
    sims: int = DEFAULT_SIMS,
    c_ucb: float = DEFAULT_C_UCB,
    rng: Optional[np.random.Generator] = None,
) -> int:
    """Most-visited root action after UCB search; declare_index means stop."""
    if steps_left < 1:
        raise ValueError("no action slots left")
    if steps_left == 1:
        return model.declare_index
    rng = rng if rng is not None else np.random.default_rng()
    root = SearchNode(belief.probs.copy(), model)
    for _ in range(sims):
        h = int(rng.choice(model.M, p=belief.probs)) + 1
        _simulate(model, root, h, steps_left, c_ucb, rng)
    return int(np.argmax(root.counts))


def run_pomcp_trial(
    model: PomdpModel,
    true_state: int,
    rng: np.random.Generator,
    *,
    sims: int = DEFAULT_SIMS,
    c_ucb: float = DEFAULT_C_UCB,
) -> TrialResult:
    """One episode: plan, pose questions to simulated workers, declare."""
    belief = uniform_belief(model.M)
    steps_left = model.b
    trace: List[Tuple[int, Optional[int]]] = []
    while True:
        a = plan_action(model, belief, steps_left, sims=sims, c_ucb=c_ucb, rng=rng)
        if a == model.declare_index:
            break
        question = model.actions[a]
        o, _u = group_answer(
            question, true_state, model.worker_model, model.G, rng, missing_ok=True
        )
        trace.append((o, question.part_of(true_state)))
        belief = update_belief(belief, question, model.channel, o)
        steps_left -= 1
    declared = map_decision(belief)
    n_questions = len(trace)
    reward = float(declared == true_state) - model.gamma * n_questions
    return TrialResult(true_state, declared, n_questions, reward, trace)
