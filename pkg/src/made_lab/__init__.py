"""Tabular toolkit for occupancy-regularised exploration.

Exact and sampled occupancy measures, policy mixtures, exploration bonuses,
online learners, regularised policy gradients, the convex-mixture meta
algorithm and a seeded experiment harness.
"""
from .mdp import (
    MdpError,
    PolicyMixture,
    TabularMdp,
    exact_occupancy,
    mc_occupancy,
    mixture_occupancy,
    policy_value,
    value_iteration_plan,
)
from .envs import (
    ChainConfig,
    LockConfig,
    lock_layout,
    make_bidirectional_lock,
    make_chain_mdp,
    make_random_mdp,
)
from .bonuses import BonusConfig, CountTable, RecentBuffer, bonus_table
from .learners import LearnerConfig, RunRecord, run_learner
from .policy_grad import PgConfig, objective_grad, pg_run
from .meta import MetaConfig, regularity_check, run_algorithm1

__version__ = "0.1.0"

__all__ = [
    "BonusConfig", "ChainConfig", "CountTable", "LearnerConfig", "LockConfig",
    "MdpError", "MetaConfig", "PgConfig", "PolicyMixture", "RecentBuffer",
    "RunRecord", "TabularMdp", "bonus_table", "exact_occupancy", "lock_layout",
    "make_bidirectional_lock", "make_chain_mdp", "make_random_mdp", "mc_occupancy",
    "mixture_occupancy", "objective_grad", "pg_run", "policy_value",
    "regularity_check", "run_algorithm1", "run_learner", "value_iteration_plan",
]
