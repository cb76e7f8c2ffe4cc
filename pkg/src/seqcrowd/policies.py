"""Sequential questioning strategies and baselines.

URSQS picks the question arity q and error tolerance e by maximizing a
surrogate objective (a binomial reliability lower bound minus the question
cost), then plays the Ulam-Renyi heuristic against simulated worker groups.
The one-shot coded baseline and an exhaustive-over-e benchmark live here
too.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb
from typing import Dict, List, Optional, Tuple

import numpy as np

from .belief import Belief, map_decision, uniform_belief, update_belief
from .coding import CodeMatrix, PerformanceMatrix, cached_code_matrix, hamming_decode, performance_matrix
from .question_design import materialize
from .ulam import QuestionTuple, initial_status, is_final, update_status
from .ulam_tree import BudgetExceeded, UlamTree, compute_B, n_min
from .worker_sim import WorkerModel, draw_reliabilities, mean_reliability, sample_opinion


@dataclass
class UrsqsPlan:
    """Chosen (q*, e*) with its question tree and worker channel.

    A degenerate plan (q_star None) means the budget allows no questions:
    the decision comes straight from the uniform prior.
    """

    M: int
    b: int
    gamma: float
    q_star: Optional[int]
    e_star: Optional[int]
    B_hat: int
    R_hat: float
    L: float
    tree: Optional[UlamTree] = None
    G: Optional[CodeMatrix] = None
    P_q: Optional[PerformanceMatrix] = None
    surrogate_by_qe: Dict[Tuple[int, int], float] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "M": self.M,
            "b": self.b,
            "gamma": self.gamma,
            "q_star": self.q_star,
            "e_star": self.e_star,
            "B_hat": self.B_hat,
            "R_hat": self.R_hat,
            "L": self.L,
            "code_matrix": self.G.to_json() if self.G else None,
            "performance_matrix": self.P_q.probs.tolist() if self.P_q else None,
        }


@dataclass
class TrialResult:
    """Outcome of one simulated labeling episode."""

    true_state: int
    declared_state: int
    questions_asked: int
    reward: float
    # One entry per question: (observed answer, part holding the true state
    # or None if the state had already been eliminated from the support).
    trace: List[Tuple[int, Optional[int]]] = field(default_factory=list)

    @property
    def correct(self) -> bool:
        return self.declared_state == self.true_state

    def decode_errors(self) -> int:
        """Questions whose decoded answer missed the true state's part."""
        return sum(1 for o, l in self.trace if l is None or o != l)


def r_hat(q: int, e: int, B_hat: int, p_min: float) -> float:
    """Probability of at most e group errors in B_hat questions at rate 1 - p_min."""
    if not 0.0 <= p_min <= 1.0:
        raise ValueError("p_min must be a probability")
    if e < 0 or B_hat < e:
        raise ValueError("need B_hat >= e >= 0")
    return float(
        sum(
            comb(B_hat, k) * (1.0 - p_min) ** k * p_min ** (B_hat - k)
            for k in range(e + 1)
        )
    )


def optimize_qe(
    M: int,
    b: int,
    gamma: float,
    model: WorkerModel,
    *,
    tree_seed: int = 0,
) -> UrsqsPlan:
    """Enumerate (q, e) and keep the best surrogate objective.

    For each q the e-loop stops at the first infeasible question bound
    (the bound is non-decreasing in e).  Ties go to the smallest (q, e).
    """
    if b < 1:
        raise ValueError("budget must allow at least the final decision")
    best: Optional[UrsqsPlan] = None
    surrogate: Dict[Tuple[int, int], float] = {}
    if b == 1:
        return UrsqsPlan(
            M=M, b=b, gamma=gamma, q_star=None, e_star=None,
            B_hat=0, R_hat=1.0 / M, L=1.0 / M,
        )
    for q in range(2, M + 1):
        if n_min(M, q, 0) > b - 1:
            continue
        try:
            mu = mean_reliability(model, q)
        except ValueError:
            continue  # workers no better than chance at this arity
        G, _ = cached_code_matrix(q, model.N, mu)
        P = performance_matrix(G, mu)
        p_min = P.min_diagonal()
        prev_B = 0
        e = 0
        while e <= b:
            try:
                B, tree = compute_B(M, q, e, w_limit=b - 1, seed=tree_seed)
            except BudgetExceeded:
                break
            assert B >= prev_B, "question bound decreased in e"
            prev_B = B
            R = r_hat(q, e, B, p_min)
            L = R - gamma * B
            surrogate[(q, e)] = L
            if best is None or L > best.L + 1e-12:
                best = UrsqsPlan(
                    M=M, b=b, gamma=gamma, q_star=q, e_star=e,
                    B_hat=B, R_hat=R, L=L, tree=tree, G=G, P_q=P,
                )
            e += 1
    if best is None:
        # No q fits the budget at all; fall back to the prior-only plan.
        best = UrsqsPlan(
            M=M, b=b, gamma=gamma, q_star=None, e_star=None,
            B_hat=0, R_hat=1.0 / M, L=1.0 / M,
        )
    best.surrogate_by_qe = surrogate
    return best


def run_ursqs_trial(
    plan: UrsqsPlan,
    true_state: int,
    model: WorkerModel,
    rng: np.random.Generator,
) -> TrialResult:
    """Play the planned Ulam-Renyi strategy once against simulated workers.

    Follows the plan's type tree down the realized answer path, posing each
    node's question to a fresh group.  Declares the unique survivor; if the
    workers erred past the tolerance and emptied the status, falls back to
    the MAP state of the concurrently tracked belief.
    """
    if plan.q_star is None:
        belief = uniform_belief(plan.M)
        declared = map_decision(belief)
        return TrialResult(true_state, declared, 0, float(declared == true_state))
    status = initial_status(plan.M, plan.e_star)
    belief = uniform_belief(plan.M)
    tree = plan.tree
    w_left = tree.depth
    trace: List[Tuple[int, Optional[int]]] = []
    from .worker_sim import group_answer

    while w_left > 0:
        final, _ = is_final(status)
        if final:
            break
        node = tree.memo[(status.type.counts, w_left)]
        question = materialize(node.question_plan, status, rng)
        o, _u = group_answer(question, true_state, model, plan.G, rng, missing_ok=True)
        trace.append((o, question.part_of(true_state)))
        status = update_status(status, question, o)
        belief = update_belief(belief, question, plan.P_q, o)
        w_left -= 1
    _, winner = is_final(status)
    declared = winner if winner is not None else map_decision(belief)
    n_questions = len(trace)
    reward = float(declared == true_state) - plan.gamma * n_questions
    return TrialResult(true_state, declared, n_questions, reward, trace)


def run_dcfecc_trial(
    M: int,
    workers: int,
    model: WorkerModel,
    rng: np.random.Generator,
    *,
    gamma: float = 0.0,
    charged_questions: Optional[int] = None,
) -> TrialResult:
    """One-shot M-ary coded baseline using all workers in a single round.

    Charged ``charged_questions`` (default workers / N) question costs so
    its reward is comparable with sequential strategies at equal worker
    spend.  The true state is drawn by the caller.
    """
    if workers < 1:
        raise ValueError("need at least one worker")
    mu = mean_reliability(model, M)
    if M > 2**workers:
        raise ValueError("too few workers to give every class a distinct codeword")
    G, _ = cached_code_matrix(M, workers, mu)
    true_state = int(rng.integers(1, M + 1))
    if model.distribution == "deterministic":
        lambdas = np.full(workers, mu)
    else:
        lambdas = rng.beta(mu * model.kappa, (1 - mu) * model.kappa, size=workers)
    bits = []
    for k in range(workers):
        opinion = sample_opinion(true_state, M, float(lambdas[k]), rng)
        bits.append(G.entries[opinion - 1][k])
    declared = hamming_decode(G, tuple(bits), rng)
    charged = charged_questions if charged_questions is not None else workers // model.N
    reward = float(declared == true_state) - gamma * charged
    return TrialResult(true_state, declared, charged, reward, [])


def ursqs_plan_for(
    M: int, b: int, gamma: float, model: WorkerModel, q: int, e: int, *, tree_seed: int = 0
) -> UrsqsPlan:
    """Plan for a fixed (q, e), bypassing the surrogate optimization."""
    mu = mean_reliability(model, q)
    G, _ = cached_code_matrix(q, model.N, mu)
    P = performance_matrix(G, mu)
    B, tree = compute_B(M, q, e, w_limit=b - 1, seed=tree_seed)
    R = r_hat(q, e, B, P.min_diagonal())
    return UrsqsPlan(
        M=M, b=b, gamma=gamma, q_star=q, e_star=e,
        B_hat=B, R_hat=R, L=R - gamma * B, tree=tree, G=G, P_q=P,
    )


def exhaustive_u_star(
    q: int,
    M: int,
    b: int,
    gamma: float,
    model: WorkerModel,
    trials: int,
    rng: np.random.Generator,
) -> Tuple[float, int, Dict[int, float]]:
    """Best simulated reward of the fixed-q strategy over all feasible e.

    Returns (best mean reward, best e, mean reward per e).
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    per_e: Dict[int, float] = {}
    e = 0
    while e <= b:
        try:
            plan = ursqs_plan_for(M, b, gamma, model, q, e)
        except (BudgetExceeded, ValueError):
            break
        total = 0.0
        for _ in range(trials):
            true_state = int(rng.integers(1, M + 1))
            total += run_ursqs_trial(plan, true_state, model, rng).reward
        per_e[e] = total / trials
        e += 1
    if not per_e:
        raise ValueError(f"no feasible error tolerance for q={q} within budget {b}")
    best_e = max(per_e, key=lambda k: (per_e[k], -k))
    return per_e[best_e], best_e, per_e
