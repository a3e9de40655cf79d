"""Two-player contextual bandit simulation library.

A machine learner sees one context and recommends; a human learner sees
the recommendation plus a private context and acts; both observe the
chosen action's payoff. The package provides the interaction engine with
enforced information barriers, five online algorithms, environment
families with exact value oracles, a policy-independence checker, an
executable equivalence check between the directive-channel learner and
exponential weights on a lifted action space, and a deterministic
experiment CLI.
"""

from .core import (
    ActionSpace,
    ConfigError,
    Instance,
    MachinePolicy,
    HumanPolicy,
    NumericGuardError,
    RecommendationSpace,
    RegretTrace,
    SimulationError,
    SupportError,
    ValidationError,
    best_pair,
    eval_joint,
    expected_reward,
    expected_reward_with_error,
    regret_bound,
    value_matrix,
    BOUND_JOINT,
    BOUND_P2EXP4,
    BOUND_INDEP,
)
from .envgen import (
    GENERATORS,
    IndependenceReport,
    check_independence,
    instance_from_spec,
    make_allocation,
    make_conjecture,
    make_coupled_pair,
    make_defer,
    make_opacity_lb,
    make_private_info_lb,
    make_random_allocation,
    make_random_defer,
    make_random_tabular,
    make_randomized_lb,
    make_tabular,
)
from .agents import (
    ALGORITHM_IDS,
    ALGORITHM_MODES,
    Algorithm,
    IndepPair,
    JointExp4,
    MossPairs,
    P2Exp4,
    PlainExp4,
    default_params,
    make_algorithm,
)
from .engine import (
    BarrierViolation,
    CoupleReport,
    LiftedInstance,
    ModeError,
    RoundRecord,
    RunConfig,
    SinkError,
    couple_check,
    lift_instance,
    round_pseudo_regret,
    run_batch,
    run_episode,
    run_fixed_sequence,
)
from .cli import ExperimentConfig, main, parse_config

__version__ = "0.1.0"

__all__ = [
    "ActionSpace",
    "RecommendationSpace",
    "MachinePolicy",
    "HumanPolicy",
    "Instance",
    "RegretTrace",
    "SimulationError",
    "ValidationError",
    "SupportError",
    "ConfigError",
    "NumericGuardError",
    "BarrierViolation",
    "ModeError",
    "SinkError",
    "eval_joint",
    "expected_reward",
    "expected_reward_with_error",
    "value_matrix",
    "best_pair",
    "regret_bound",
    "BOUND_JOINT",
    "BOUND_P2EXP4",
    "BOUND_INDEP",
    "GENERATORS",
    "instance_from_spec",
    "make_tabular",
    "make_random_tabular",
    "make_private_info_lb",
    "make_opacity_lb",
    "make_randomized_lb",
    "make_conjecture",
    "make_allocation",
    "make_defer",
    "make_random_allocation",
    "make_random_defer",
    "make_coupled_pair",
    "check_independence",
    "IndependenceReport",
    "Algorithm",
    "P2Exp4",
    "JointExp4",
    "PlainExp4",
    "MossPairs",
    "IndepPair",
    "ALGORITHM_IDS",
    "ALGORITHM_MODES",
    "default_params",
    "make_algorithm",
    "run_episode",
    "run_fixed_sequence",
    "run_batch",
    "RunConfig",
    "RoundRecord",
    "round_pseudo_regret",
    "lift_instance",
    "LiftedInstance",
    "couple_check",
    "CoupleReport",
    "ExperimentConfig",
    "parse_config",
    "main",
]
