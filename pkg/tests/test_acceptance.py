"""Full-scale acceptance checks for the complete system.

These run the library at benchmark scale (thousands to tens of thousands
of simulated episodes) and pin down the quantitative guarantees the
package advertises: exact combinatorial tables, solver/oracle agreement,
channel exactness, reliability bounds, strategy orderings, planner reward
bands, surrogate tightness, monotonic trends, and belief integrity.

The suite is deterministic (fixed seeds, one generator per trial) and is
expected to take a few hours on a single core.
"""

from math import comb

import numpy as np
import pytest

from seqcrowd.belief import Belief, uniform_belief, update_belief
from seqcrowd.coding import (
    CodeMatrix,
    PerformanceMatrix,
    cached_code_matrix,
    performance_matrix,
)
from seqcrowd.pomcp import build_model, run_pomcp_trial
from seqcrowd.policies import (
    exhaustive_u_star,
    optimize_qe,
    r_hat,
    run_dcfecc_trial,
    run_ursqs_trial,
)
from seqcrowd.question_design import (
    AllocationProblem,
    allocation_objective,
    brute_force_allocation,
    solve_allocation,
)
from seqcrowd.ulam import QuestionTuple, element_weight
from seqcrowd.ulam_tree import compute_B
from seqcrowd.worker_sim import WorkerModel, group_answer, mean_reliability


# ---------------------------------------------------------------------------
# Shared helpers and cached heavy artifacts
# ---------------------------------------------------------------------------

MODEL = WorkerModel()  # N=10, r=0.75, deterministic reliabilities

_PLAN_CACHE = {}


def plan_for(M, b, gamma, model=MODEL):
    key = (M, b, gamma, model.r)
    if key not in _PLAN_CACHE:
        _PLAN_CACHE[key] = optimize_qe(M, b, gamma, model)
    return _PLAN_CACHE[key]


def trial_rng(seed, trial):
    return np.random.default_rng([seed, trial])


def ursqs_rewards(plan, model, trials, seed):
    rewards = np.empty(trials)
    correct = np.empty(trials, dtype=bool)
    for t in range(trials):
        rng = trial_rng(seed, t)
        h = int(rng.integers(1, plan.M + 1))
        res = run_ursqs_trial(plan, h, model, rng)
        rewards[t] = res.reward
        correct[t] = res.correct
    return rewards, correct


def mean_ci(values):
    """Mean and half-width of the 95% confidence interval."""
    m = float(np.mean(values))
    se = float(np.std(values, ddof=1) / np.sqrt(len(values)))
    return m, 1.96 * se


# ---------------------------------------------------------------------------
# 1. Binary-game question-bound table
# ---------------------------------------------------------------------------

# Reference B(2, e) values for M = 2^m; rows m = 1..16, columns e = 1..8.
BINARY_TABLE = {
    1: (3, 5, 7, 9, 11, 13, 15, 17),
    2: (5, 8, 11, 14, 17, 20, 23, 26),
    3: (6, 9, 12, 15, 18, 21, 24, 27),
    4: (7, 10, 13, 16, 19, 22, 25, 28),
    5: (9, 12, 15, 18, 21, 24, 27, 30),
    6: (10, 13, 16, 19, 22, 25, 28, 31),
    7: (11, 14, 17, 20, 23, 26, 29, 32),
    8: (12, 15, 18, 21, 24, 27, 30, 33),
    9: (13, 17, 20, 23, 26, 29, 32, 35),
    10: (14, 18, 21, 24, 27, 30, 33, 36),
    11: (15, 19, 22, 25, 28, 31, 34, 37),
    12: (17, 20, 23, 27, 30, 33, 36, 39),
    13: (18, 21, 25, 28, 31, 34, 37, 40),
    14: (19, 22, 26, 29, 32, 35, 39, 42),
    15: (20, 24, 27, 30, 34, 37, 40, 43),
    16: (21, 25, 28, 32, 35, 38, 41, 44),
}


def test_binary_question_bound_table_exact():
    mismatches = []
    for m, row in BINARY_TABLE.items():
        for e in range(1, 9):
            B, _ = compute_B(2**m, 2, e)
            if B != row[e - 1]:
                mismatches.append((m, e, B, row[e - 1]))
    assert not mismatches, f"(m, e, got, want): {mismatches}"


# ---------------------------------------------------------------------------
# 2. Element-weight formula anchors
# ---------------------------------------------------------------------------


def test_element_weight_anchor_values():
    assert element_weight(0, 10, 4, 7) == 497452
    assert element_weight(7, 10, 4, 7) == 1
    # Cross-check the first anchor against the defining sum.
    assert 497452 == sum(comb(10, k) * 3**k for k in range(8))


# ---------------------------------------------------------------------------
# 3. Allocation solver equals the brute-force oracle
# ---------------------------------------------------------------------------


def test_allocation_solver_matches_oracle_on_1000_instances():
    rng = np.random.default_rng(301)
    mismatches = 0
    for _ in range(1000):
        q = int(rng.integers(2, 5))
        budget = int(rng.integers(0, 7))
        cap = int(rng.integers(max(1, -(-budget // q)), budget + 3))
        p = AllocationProblem(
            q=q,
            bin_loads=tuple(int(v) for v in rng.integers(0, 12, size=q)),
            alpha=int(rng.integers(0, 4)),
            budget=budget,
            cap=cap,
        )
        got = allocation_objective(p, solve_allocation(p))
        want = allocation_objective(p, brute_force_allocation(p))
        mismatches += got != want
    assert mismatches == 0


# ---------------------------------------------------------------------------
# 4. Worker channel exactness
# ---------------------------------------------------------------------------


def test_channel_rows_sum_to_one_on_100_random_instances():
    rng = np.random.default_rng(401)
    for _ in range(100):
        q = int(rng.integers(2, 7))
        mu = float(rng.uniform(1.0 / q + 0.05, 0.98))
        while True:
            rows = rng.integers(0, 2, size=(q, 10))
            if len({tuple(r) for r in rows}) == q:
                break
        G = CodeMatrix(tuple(tuple(int(v) for v in r) for r in rows))
        P = performance_matrix(G, mu)
        assert np.max(np.abs(P.probs.sum(axis=1) - 1.0)) < 1e-12


def test_channel_matches_simulated_decode_frequencies():
    q = 3
    mu = mean_reliability(MODEL, q)
    G, _ = cached_code_matrix(q, MODEL.N, mu)
    P = performance_matrix(G, mu)
    question = QuestionTuple(((1,), (2,), (3,)))
    per_row = 100_000 // q + 1
    for l in range(1, q + 1):
        rng = np.random.default_rng([402, l])
        counts = np.zeros(q)
        for _ in range(per_row):
            o, _ = group_answer(question, l, MODEL, G, rng)
            counts[o - 1] += 1
        freq = counts / per_row
        for o in range(q):
            p = P.probs[l - 1, o]
            se = np.sqrt(max(p * (1 - p), 1e-12) / per_row)
            assert abs(freq[o] - p) <= 3 * se, (
                f"row {l} answer {o + 1}: freq {freq[o]:.5f} vs p {p:.5f}"
            )


# ---------------------------------------------------------------------------
# 5. Reliability lower bound holds empirically
# ---------------------------------------------------------------------------


def test_sequential_accuracy_meets_reliability_bound():
    plan = plan_for(32, 9, 0.05)
    _, correct = ursqs_rewards(plan, MODEL, 10_000, seed=501)
    acc = float(np.mean(correct))
    se = np.sqrt(acc * (1 - acc) / len(correct))
    assert acc >= plan.R_hat - 3 * se, (
        f"accuracy {acc:.4f} below bound {plan.R_hat:.4f} - 3*{se:.4f}"
    )


# ---------------------------------------------------------------------------
# 6. Sequential strategy vs one-shot coded baseline
# ---------------------------------------------------------------------------


def test_sequential_beats_one_shot_baseline():
    plan = plan_for(32, 9, 0.05)
    seq_rewards, _ = ursqs_rewards(plan, MODEL, 10_000, seed=601)
    one_shot = np.empty(10_000)
    workers = MODEL.N * (plan.b - 1)
    for t in range(10_000):
        rng = trial_rng(602, t)
        one_shot[t] = run_dcfecc_trial(
            32, workers, MODEL, rng, gamma=plan.gamma
        ).reward
    m_seq, hw_seq = mean_ci(seq_rewards)
    m_one, hw_one = mean_ci(one_shot)
    assert m_seq - hw_seq > m_one + hw_one, (
        f"sequential {m_seq:.4f}±{hw_seq:.4f} vs one-shot {m_one:.4f}±{hw_one:.4f}"
    )


# ---------------------------------------------------------------------------
# 7–8. Online planner: reward band and sampler comparison
# ---------------------------------------------------------------------------

_POMCP_CACHE = {}


def pomcp_rewards(M, k, sampler, trials, sims, c_ucb=0.5, seed_salt=0):
    key = (M, k, sampler, trials, sims, c_ucb, seed_salt)
    if key in _POMCP_CACHE:
        return _POMCP_CACHE[key]
    plan = plan_for(M, 9, 0.05)
    pm = build_model(
        M, 9, 0.05, MODEL, plan.tree, k,
        np.random.default_rng([777, M, k, 0 if sampler == "urt" else 1]),
        sampler=sampler,
    )
    rewards = np.empty(trials)
    for t in range(trials):
        rng = trial_rng(700 + seed_salt, t)
        h = int(rng.integers(1, M + 1))
        rewards[t] = run_pomcp_trial(pm, h, rng, sims=sims, c_ucb=c_ucb).reward
    _POMCP_CACHE[key] = rewards
    return rewards


def test_planner_reward_band_and_action_pool_size():
    big = pomcp_rewards(32, 300, "urt", trials=2000, sims=2048)
    tiny = pomcp_rewards(32, 2, "urt", trials=2000, sims=2048)
    m_big, hw_big = mean_ci(big)
    m_tiny, _ = mean_ci(tiny)
    assert 0.40 <= m_big <= 0.60, f"planner reward {m_big:.4f}±{hw_big:.4f}"
    assert m_big > m_tiny, f"300 actions {m_big:.4f} vs 2 actions {m_tiny:.4f}"


@pytest.mark.parametrize("M,k", [(32, 300), (64, 300), (32, 2), (64, 2)])
def test_tree_sampling_beats_uniform_sampling(M, k):
    urt = pomcp_rewards(M, k, "urt", trials=2000, sims=1024)
    unif = pomcp_rewards(M, k, "uniform", trials=2000, sims=1024)
    m_u, hw_u = mean_ci(urt)
    m_n, hw_n = mean_ci(unif)
    assert m_u - hw_u > m_n + hw_n, (
        f"M={M} k={k}: tree {m_u:.4f}±{hw_u:.4f} vs uniform {m_n:.4f}±{hw_n:.4f}"
    )


# ---------------------------------------------------------------------------
# 9. Surrogate objective tracks the realized optimum
# ---------------------------------------------------------------------------


def test_surrogate_gap_small_at_reference_settings():
    gaps = []
    for i, (M, b) in enumerate([(128, 9), (32, 13)]):
        plan = plan_for(M, b, 0.05)
        rewards, _ = ursqs_rewards(plan, MODEL, 5000, seed=900 + i)
        realized = float(np.mean(rewards))
        u_star, _, _ = exhaustive_u_star(
            plan.q_star, M, b, 0.05, MODEL,
            trials=5000, rng=np.random.default_rng([910, i]),
        )
        gaps.append(abs(u_star - realized))
    assert float(np.mean(gaps)) <= 0.05, f"gaps {gaps}"


# ---------------------------------------------------------------------------
# 10. Reward trends in worker quality and question cost
# ---------------------------------------------------------------------------


def test_reward_monotone_in_worker_reliability():
    means = []
    for i, r in enumerate((0.60, 0.70, 0.80, 0.90)):
        model = WorkerModel(r=r)
        plan = plan_for(32, 9, 0.05, model)
        rewards, _ = ursqs_rewards(plan, model, 10_000, seed=1000 + i)
        means.append(mean_ci(rewards))
    for (m0, hw0), (m1, hw1) in zip(means, means[1:]):
        se_diff = np.sqrt((hw0 / 1.96) ** 2 + (hw1 / 1.96) ** 2)
        assert m1 >= m0 - se_diff, f"reward fell {m0:.4f} -> {m1:.4f}"


def test_reward_monotone_in_question_cost():
    means = []
    for i, gamma in enumerate((0.01, 0.05, 0.10)):
        plan = plan_for(32, 9, gamma)
        rewards, _ = ursqs_rewards(plan, MODEL, 10_000, seed=1100 + i)
        means.append(mean_ci(rewards))
    for (m0, hw0), (m1, hw1) in zip(means, means[1:]):
        se_diff = np.sqrt((hw0 / 1.96) ** 2 + (hw1 / 1.96) ** 2)
        assert m1 <= m0 + se_diff, f"reward rose {m0:.4f} -> {m1:.4f}"


# ---------------------------------------------------------------------------
# 11. Belief-update chains stay normalized and non-negative
# ---------------------------------------------------------------------------


def test_long_belief_chains_preserve_probability_mass():
    M, q = 16, 3
    rng = np.random.default_rng(1101)
    steps_total = 0
    while steps_total < 100_000:
        p = float(rng.uniform(0.4, 0.95))
        probs = np.full((q, q), (1 - p) / (q - 1))
        np.fill_diagonal(probs, p)
        P = PerformanceMatrix(probs)
        b = uniform_belief(M)
        for _ in range(1000):
            labels = rng.permutation(M) + 1
            cuts = sorted(rng.choice(np.arange(1, M), size=q - 1, replace=False))
            parts = tuple(
                tuple(sorted(int(x) for x in chunk))
                for chunk in np.split(labels, cuts)
            )
            o = int(rng.integers(1, q + 1))
            b = update_belief(b, QuestionTuple(parts), P, o)
            assert abs(float(b.probs.sum()) - 1.0) < 1e-6
            assert not np.any(b.probs < 0)
            steps_total += 1
