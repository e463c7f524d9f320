"""Tabular exploration benchmarks: UCB Q-learning, Delayed Q-learning and exact auditing."""

from explore_rl.auditor import AuditRecord, AuditTrace, mistake_count_by_threshold, run_experiment
from explore_rl.delayed_q import DelayedQState, UpdateEvent
from explore_rl.errors import ConfigError, InvalidMdpError, UsageError
from explore_rl.exact_planner import Policy, ValueTables, bellman_residual, evaluate_policy, value_iteration
from explore_rl.mdp_core import Seed, TabularMdp, load_mdp, sample_transition, save_mdp, validate
from explore_rl.rate_schedule import DerivedParams, derive_params
from explore_rl.ucb_q import UcbQState

__version__ = "0.1.0"
