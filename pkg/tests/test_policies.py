"""Strategy layer: surrogate optimization, sequential play, baselines."""

from math import comb

import numpy as np
import pytest

from seqcrowd.policies import (
    TrialResult,
    exhaustive_u_star,
    optimize_qe,
    r_hat,
    run_dcfecc_trial,
    run_ursqs_trial,
    ursqs_plan_for,
)
from seqcrowd.worker_sim import WorkerModel


def test_r_hat_matches_binomial_tail():
    B, p = 8, 0.787
    for e in range(4):
        want = sum(
            comb(B, k) * (1 - p) ** k * p ** (B - k) for k in range(e + 1)
        )
        assert r_hat(3, e, B, p) == pytest.approx(want, abs=1e-15)
    assert r_hat(3, 0, 5, 1.0) == 1.0
    with pytest.raises(ValueError):
        r_hat(3, 2, 1, 0.5)
    with pytest.raises(ValueError):
        r_hat(3, 1, 4, 1.5)


def test_optimize_qe_degenerate_budget():
    plan = optimize_qe(8, 1, 0.05, WorkerModel())
    assert plan.q_star is None
    assert plan.R_hat == pytest.approx(1 / 8)


def test_optimize_qe_small_instance():
    model = WorkerModel()
    plan = optimize_qe(4, 4, 0.05, model)
    assert plan.q_star is not None
    assert plan.B_hat <= 3
    assert 0.0 < plan.R_hat <= 1.0
    assert plan.L == pytest.approx(plan.R_hat - 0.05 * plan.B_hat)
    # Every surrogate entry respects the budget and is beaten by the winner.
    for (q, e), L in plan.surrogate_by_qe.items():
        assert L <= plan.L + 1e-12
    assert (plan.q_star, plan.e_star) in plan.surrogate_by_qe


def test_ursqs_plan_for_fixed_setting():
    from seqcrowd.ulam_tree import BudgetExceeded

    model = WorkerModel()
    plan = ursqs_plan_for(8, 7, 0.02, model, q=2, e=1)
    assert (plan.q_star, plan.e_star) == (2, 1)
    assert plan.B_hat == 6
    assert plan.L == pytest.approx(plan.R_hat - 0.02 * 6)
    # A budget of 5 only allows 4 questions: the 6-question plan cannot fit.
    with pytest.raises(BudgetExceeded):
        ursqs_plan_for(8, 5, 0.02, model, q=2, e=1)


def test_ursqs_trial_reaches_decision(model, rng):
    plan = ursqs_plan_for(8, 7, 0.05, model, q=2, e=1)
    res = run_ursqs_trial(plan, true_state=5, model=model, rng=rng)
    assert 1 <= res.declared_state <= 8
    assert 0 <= res.questions_asked <= plan.B_hat
    assert res.reward == pytest.approx(
        float(res.correct) - 0.05 * res.questions_asked
    )
    assert len(res.trace) == res.questions_asked


def test_ursqs_trials_are_reproducible(model):
    plan = ursqs_plan_for(8, 7, 0.05, model, q=2, e=1)
    a = [run_ursqs_trial(plan, 3, model, np.random.default_rng(s)) for s in range(20)]
    b = [run_ursqs_trial(plan, 3, model, np.random.default_rng(s)) for s in range(20)]
    assert [(r.declared_state, r.questions_asked, r.reward) for r in a] == [
        (r.declared_state, r.questions_asked, r.reward) for r in b
    ]


def test_ursqs_accuracy_reasonable(model, rng):
    """With tolerance for one group error, most episodes decide correctly."""
    plan = ursqs_plan_for(8, 8, 0.0, model, q=2, e=1)
    n = 500
    hits = 0
    for _ in range(n):
        h = int(rng.integers(1, 9))
        hits += run_ursqs_trial(plan, h, model, rng).correct
    assert hits / n > 0.6


def test_degenerate_plan_trial(model, rng):
    plan = optimize_qe(8, 1, 0.1, model)
    res = run_ursqs_trial(plan, 5, model, rng)
    assert res.questions_asked == 0
    assert res.declared_state == 1  # MAP of the uniform prior, lowest label


def test_dcfecc_trial(model, rng):
    res = run_dcfecc_trial(16, 40, model, rng, gamma=0.05)
    assert 1 <= res.true_state <= 16
    assert 1 <= res.declared_state <= 16
    assert res.questions_asked == 4  # 40 workers / N=10
    assert res.reward == pytest.approx(float(res.correct) - 0.05 * 4)
    with pytest.raises(ValueError):
        run_dcfecc_trial(16, 0, model, rng)
    with pytest.raises(ValueError):
        run_dcfecc_trial(16, 3, model, rng)  # 16 classes need >= 4 bits


def test_dcfecc_beats_chance(model, rng):
    n, hits = 300, 0
    for _ in range(n):
        hits += run_dcfecc_trial(8, 30, model, rng).correct
    assert hits / n > 3 * (1 / 8)


def test_trial_result_decode_errors():
    res = TrialResult(2, 2, 3, 0.85, trace=[(1, 1), (2, 1), (3, None)])
    assert res.correct
    assert res.decode_errors() == 2


def test_exhaustive_u_star_small(model, rng):
    best, best_e, per_e = exhaustive_u_star(2, 8, 7, 0.05, model, trials=200, rng=rng)
    assert best == max(per_e.values())
    assert per_e[best_e] == best
    assert set(per_e) == set(range(len(per_e)))  # contiguous e from 0
    with pytest.raises(ValueError):
        exhaustive_u_star(2, 8, 7, 0.05, model, trials=0, rng=rng)
