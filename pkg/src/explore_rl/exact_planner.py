"""Exact ground-truth values for tabular MDPs.

Both solvers iterate the relevant Bellman operator from the zero table until
the sup-norm residual drops below ``tol``. The defaults put ``tol`` at
1e-10 of the value range, far below any audit threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from explore_rl.errors import UsageError
from explore_rl.mdp_core import TabularMdp


@dataclass(frozen=True)
class Policy:
    """Deterministic stationary policy, one action per state."""

    actions: tuple

    def __init__(self, actions: Iterable[int]):
        object.__setattr__(self, "actions", tuple(int(a) for a in actions))

    def __getitem__(self, s):
        return self.actions[s]

    def __len__(self):
        return len(self.actions)

    def __iter__(self):
        return iter(self.actions)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.actions, dtype=int)

    def check(self, mdp: TabularMdp) -> None:
        if len(self.actions) != mdp.num_states:
            raise UsageError(f"policy covers {len(self.actions)} states, MDP has {mdp.num_states}")
        bad = [s for s, a in enumerate(self.actions) if not 0 <= a < mdp.num_actions]
        if bad:
            raise UsageError(f"policy actions out of range at states {bad}")


@dataclass
class ValueTables:
    q: np.ndarray
    v: np.ndarray
    residual: float
    kind: str  # "optimal" or "policy"
    policy: Optional[Policy] = None
    iterations: int = 0
    diffs: list = field(default_factory=list, repr=False)

    def greedy(self) -> Policy:
        return greedy_policy(self.q)

    def to_dict(self) -> dict:
        out = {
            "kind": self.kind,
            "q": self.q.tolist(),
            "v": self.v.tolist(),
            "residual": self.residual,
            "iterations": self.iterations,
        }
        if self.policy is not None:
            out["policy"] = list(self.policy)
        return out


def default_tol(gamma: float) -> float:
    return 1e-10 / (1.0 - gamma)


def iteration_bound(gamma: float, tol: float) -> int:
    """Worst-case number of value-iteration sweeps from the zero table."""
    if gamma == 0.0:
        return 2
    return math.ceil(math.log(1.0 / ((1.0 - gamma) * tol)) / math.log(1.0 / gamma)) + 1


def greedy_policy(q: np.ndarray) -> Policy:
    """Argmax per row, lowest action index on ties."""
    return Policy(np.argmax(q, axis=1))


def _check_gamma(mdp: TabularMdp):
    if not 0.0 <= mdp.discount < 1.0:
        raise UsageError(f"discount must lie in [0,1), got {mdp.discount}")


def bellman_residual(mdp: TabularMdp, q: np.ndarray) -> float:
    """Sup-norm of q - (r + gamma * P max_a' q)."""
    q = np.asarray(q, dtype=float)
    if q.shape != mdp.shape:
        raise UsageError(f"q has shape {q.shape}, MDP expects {mdp.shape}")
    target = mdp.reward + mdp.discount * (mdp.transition @ q.max(axis=1))
    return float(np.max(np.abs(q - target)))


def policy_residual(mdp: TabularMdp, policy: Policy, q: np.ndarray) -> float:
    q = np.asarray(q, dtype=float)
    if q.shape != mdp.shape:
        raise UsageError(f"q has shape {q.shape}, MDP expects {mdp.shape}")
    v = q[np.arange(mdp.num_states), policy.as_array()]
    target = mdp.reward + mdp.discount * (mdp.transition @ v)
    return float(np.max(np.abs(q - target)))


def value_iteration(mdp: TabularMdp, tol: Optional[float] = None) -> ValueTables:
    """Optimal Q*, V* by value iteration started at zero."""
    _check_gamma(mdp)
    tol = default_tol(mdp.discount) if tol is None else float(tol)
    if tol <= 0:
        raise UsageError("tol must be positive")
    p, r, gamma = mdp.transition, mdp.reward, mdp.discount
    q = np.zeros(mdp.shape)
    diffs = []
    limit = iteration_bound(gamma, tol)
    for it in range(1, limit + 1):
        q_new = r + gamma * (p @ q.max(axis=1))
        diff = float(np.max(np.abs(q_new - q)))
        diffs.append(diff)
        q = q_new
        # diff is the residual of the previous iterate; q_new's is at most gamma*diff
        if gamma * diff <= tol:
            break
    residual = bellman_residual(mdp, q)
    return ValueTables(q=q, v=q.max(axis=1), residual=residual, kind="optimal", iterations=it, diffs=diffs)


def evaluate_policy(mdp: TabularMdp, policy, tol: Optional[float] = None) -> ValueTables:
    """Q^pi, V^pi of a deterministic stationary policy, by fixed-point iteration."""
    _check_gamma(mdp)
    if not isinstance(policy, Policy):
        policy = Policy(policy)
    policy.check(mdp)
    tol = default_tol(mdp.discount) if tol is None else float(tol)
    if tol <= 0:
        raise UsageError("tol must be positive")
    p, r, gamma = mdp.transition, mdp.reward, mdp.discount
    idx = np.arange(mdp.num_states)
    act = policy.as_array()
    # Work on the S x S chain first: v = r_pi + gamma P_pi v, then lift to Q.
    p_pi = p[idx, act]
    r_pi = r[idx, act]
    v = np.zeros(mdp.num_states)
    limit = iteration_bound(gamma, tol)
    for it in range(1, limit + 1):
        v_new = r_pi + gamma * (p_pi @ v)
        diff = float(np.max(np.abs(v_new - v)))
        v = v_new
        if gamma * diff <= tol:
            break
    q = r + gamma * (p @ v)
    residual = policy_residual(mdp, policy, q)
    return ValueTables(q=q, v=q[idx, act], residual=residual, kind="policy", policy=policy, iterations=it)
