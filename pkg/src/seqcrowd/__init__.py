"""Sequential question design for noisy multi-class crowdsourced labeling.

A library and CLI for inferring one of M states through q-ary questions
answered by unreliable worker groups: a lie-tolerant (Ulam-Renyi) game
engine, code-matrix worker fusion, a budgeted sequential questioning
strategy, and an online Monte-Carlo planner.
"""

from .belief import Belief, map_decision, uniform_belief, update_belief
from .coding import (
    CodeMatrix,
    PerformanceMatrix,
    average_error_cost,
    bit_probabilities,
    cached_code_matrix,
    column_question,
    hamming_decode,
    performance_matrix,
    response_vector_prob,
    search_code_matrix,
)
from .policies import (
    TrialResult,
    UrsqsPlan,
    exhaustive_u_star,
    optimize_qe,
    r_hat,
    run_dcfecc_trial,
    run_ursqs_trial,
    ursqs_plan_for,
)
from .pomcp import (
    PomdpModel,
    build_model,
    plan_action,
    run_pomcp_trial,
    uniform_question_sample,
)
from .question_design import (
    AllocationProblem,
    PartitionPlan,
    brute_force_allocation,
    design_question,
    materialize,
    plan_counts,
    solve_allocation,
)
from .ulam import (
    GameStatus,
    QuestionTuple,
    StatusType,
    element_weight,
    initial_status,
    is_final,
    status_weight,
    update_status,
)
from .ulam_tree import BudgetExceeded, UlamTree, compute_B, n_min, sample_actions_urt
from .worker_sim import WorkerModel, group_answer, mean_reliability, sample_opinion

__version__ = "1.0.0"

__all__ = [
    "AllocationProblem",
    "Belief",
    "BudgetExceeded",
    "CodeMatrix",
    "GameStatus",
    "PartitionPlan",
    "PerformanceMatrix",
    "PomdpModel",
    "QuestionTuple",
    "StatusType",
    "TrialResult",
    "UlamTree",
    "UrsqsPlan",
    "WorkerModel",
    "average_error_cost",
    "bit_probabilities",
    "brute_force_allocation",
    "build_model",
    "cached_code_matrix",
    "column_question",
    "compute_B",
    "design_question",
    "element_weight",
    "exhaustive_u_star",
    "group_answer",
    "hamming_decode",
    "initial_status",
    "is_final",
    "map_decision",
    "materialize",
    "mean_reliability",
    "n_min",
    "optimize_qe",
    "performance_matrix",
    "plan_action",
    "plan_counts",
    "r_hat",
    "response_vector_prob",
    "run_dcfecc_trial",
    "run_pomcp_trial",
    "run_ursqs_trial",
    "sample_actions_urt",
    "sample_opinion",
    "search_code_matrix",
    "solve_allocation",
    "status_weight",
    "uniform_belief",
    "uniform_question_sample",
    "update_belief",
    "update_status",
    "ursqs_plan_for",
]
