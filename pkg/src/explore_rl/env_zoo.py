"""Benchmark MDP constructors.

* :func:`hard_instance` - three states ``a, b, c`` (indices 0, 1, 2) and two
  actions ``x, y`` (0, 1). ``x`` at ``a`` always reaches ``b``; ``y`` reaches
  ``c`` with probability ``10*eps``. ``b`` and ``c`` return to ``a``. Every
  reward is 1 except at ``c``. Greedy learners that favour ``y`` on ties
  only discover that it is worse after enough visits to ``c``.
* :func:`random_mdp`, :func:`chain_mdp` - generic test beds.
* :func:`lift_finite_horizon` - embeds an episodic MDP of horizon H into a
  discounted one with gamma = 1 - 1/H. Layer ``h`` (1-based) of original state
  ``s`` becomes state ``(h-1)*S + s``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from explore_rl.errors import InvalidMdpError, UsageError
from explore_rl.exact_planner import Policy
from explore_rl.mdp_core import ROW_SUM_TOL, Seed, TabularMdp

STATE_A, STATE_B, STATE_C = 0, 1, 2
ACTION_X, ACTION_Y = 0, 1


def hard_instance(epsilon: float, gamma: float) -> TabularMdp:
    if not 0.0 < epsilon < 0.1:
        raise UsageError(f"hard instance needs 0 < epsilon < 1/10, got {epsilon}")
    if not 0.5 < gamma < 1.0:
        raise UsageError(f"hard instance needs 1/2 < gamma < 1, got {gamma}")
    p = np.zeros((3, 2, 3))
    p[STATE_A, ACTION_X, STATE_B] = 1.0
    p[STATE_A, ACTION_Y, STATE_C] = 10.0 * epsilon
    p[STATE_A, ACTION_Y, STATE_B] = 1.0 - p[STATE_A, ACTION_Y, STATE_C]
    p[STATE_B, :, STATE_A] = 1.0
    p[STATE_C, :, STATE_A] = 1.0
    r = np.ones((3, 2))
    r[STATE_C, :] = 0.0
    return TabularMdp(3, 2, p, r, gamma, start_state=STATE_A)


def hard_instance_gap(epsilon: float, gamma: float) -> float:
    """V*(a) - V^pi(a) for a policy playing y at a: 10*eps*gamma / (1 - gamma^2)."""
    return 10.0 * epsilon * gamma / (1.0 - gamma**2)


def _as_generator(seed) -> np.random.Generator:
    if isinstance(seed, Seed):
        return np.random.Generator(np.random.PCG64(seed.value))
    return np.random.Generator(np.random.PCG64(Seed(int(seed)).value))


def _renormalize(rows: np.ndarray) -> np.ndarray:
    rows = rows / rows.sum(axis=-1, keepdims=True)
    # push any residual rounding into the largest entry of each row
    err = 1.0 - rows.sum(axis=-1)
    flat = rows.reshape(-1, rows.shape[-1])
    idx = flat.argmax(axis=1)
    flat[np.arange(flat.shape[0]), idx] += err.reshape(-1)
    return flat.reshape(rows.shape)


def random_mdp(S: int, A: int, gamma: float, branching: int, seed, start_state: int = 0) -> TabularMdp:
    """Random MDP: each row is Dirichlet(1,...,1) over ``branching`` distinct successors."""
    if not 1 <= branching <= S:
        raise UsageError(f"branching must lie in [1, S={S}], got {branching}")
    rng = _as_generator(seed)
    p = np.zeros((S, A, S))
    for s in range(S):
        for a in range(A):
            support = rng.choice(S, size=branching, replace=False)
            p[s, a, support] = rng.dirichlet(np.ones(branching))
    p = _renormalize(p)
    r = rng.uniform(0.0, 1.0, size=(S, A))
    return TabularMdp(S, A, p, r, gamma, start_state=start_state)


def chain_mdp(n: int, gamma: float) -> TabularMdp:
    """Line of ``n`` states; action 0 steps right (the last state loops), action 1 resets to 0.

    The only reward is 1 for action 0 at the last state.
    """
    if n < 2:
        raise UsageError(f"chain needs at least 2 states, got {n}")
    p = np.zeros((n, 2, n))
    for s in range(n):
        p[s, 0, min(s + 1, n - 1)] = 1.0
        p[s, 1, 0] = 1.0
    r = np.zeros((n, 2))
    r[n - 1, 0] = 1.0
    return TabularMdp(n, 2, p, r, gamma, start_state=0)


# -- finite-horizon lift --------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FiniteHorizonMdp:
    """Episodic MDP; ``reward_h[h-1, s, a]`` and ``transition_h[h-1, s, a, s']`` for steps h = 1..H."""

    num_states: int
    num_actions: int
    horizon: int
    reward_h: np.ndarray
    transition_h: np.ndarray
    start_state: int = 0

    def __post_init__(self):
        S, A, H = int(self.num_states), int(self.num_actions), int(self.horizon)
        r = np.array(self.reward_h, dtype=float)
        p = np.array(self.transition_h, dtype=float)
        if H < 1:
            raise UsageError(f"horizon must be positive, got {H}")
        if r.shape != (H, S, A) or p.shape != (H, S, A, S):
            raise UsageError(f"reward_h {r.shape} / transition_h {p.shape} do not match (H,S,A)=({H},{S},{A})")
        if np.any(np.abs(p.sum(axis=-1) - 1.0) > ROW_SUM_TOL) or np.any(p < 0):
            raise InvalidMdpError("finite-horizon transition rows must be distributions")
        if np.any(r < 0) or np.any(r > 1):
            raise InvalidMdpError("finite-horizon rewards must lie in [0,1]")
        if not 0 <= self.start_state < S:
            raise InvalidMdpError(f"start_state {self.start_state} out of range")
        r.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "num_states", S)
        object.__setattr__(self, "num_actions", A)
        object.__setattr__(self, "horizon", H)
        object.__setattr__(self, "reward_h", r)
        object.__setattr__(self, "transition_h", p)

    def to_dict(self) -> dict:
        return {
            "num_states": self.num_states,
            "num_actions": self.num_actions,
            "horizon": self.horizon,
            "start_state": int(self.start_state),
            "reward_h": self.reward_h.tolist(),
            "transition_h": self.transition_h.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FiniteHorizonMdp":
        return cls(
            data["num_states"],
            data["num_actions"],
            data["horizon"],
            np.asarray(data["reward_h"], dtype=float),
            np.asarray(data["transition_h"], dtype=float),
            data.get("start_state", 0),
        )


def load_finite_horizon(path: Union[str, Path]) -> FiniteHorizonMdp:
    return FiniteHorizonMdp.from_dict(json.loads(Path(path).read_text()))


def random_finite_horizon(S: int, A: int, horizon: int, seed, branching: int | None = None) -> FiniteHorizonMdp:
    rng = _as_generator(seed)
    branching = S if branching is None else branching
    p = np.zeros((horizon, S, A, S))
    for h in range(horizon):
        for s in range(S):
            for a in range(A):
                support = rng.choice(S, size=branching, replace=False)
                p[h, s, a, support] = rng.dirichlet(np.ones(branching))
    p = _renormalize(p)
    r = rng.uniform(0.0, 1.0, size=(horizon, S, A))
    return FiniteHorizonMdp(S, A, horizon, r, p, start_state=0)


def lifted_index(s: int, h: int, num_states: int) -> int:
    """Index of original state ``s`` at step ``h`` (1-based) in the lifted MDP."""
    return (h - 1) * num_states + s


def lift_finite_horizon(fh: FiniteHorizonMdp) -> TabularMdp:
    """Discounted MDP with gamma = 1 - 1/H whose start-state value is gamma^H/(1-gamma^H) times
    the episodic optimum over steps 1..H-1.

    Step-h rewards are scaled by gamma^(H-h+1). The last layer pays nothing and
    returns deterministically to the start state of layer 1.
    """
    S, A, H = fh.num_states, fh.num_actions, fh.horizon
    gamma = 1.0 - 1.0 / H
    n = S * H
    p = np.zeros((n, A, n))
    r = np.zeros((n, A))
    for h in range(1, H + 1):
        rows = slice((h - 1) * S, h * S)
        if h < H:
            p[rows, :, h * S : (h + 1) * S] = fh.transition_h[h - 1]
            r[rows] = gamma ** (H - h + 1) * fh.reward_h[h - 1]
        else:
            p[rows, :, lifted_index(fh.start_state, 1, S)] = 1.0
    return TabularMdp(n, A, p, r, gamma, start_state=lifted_index(fh.start_state, 1, S))


def project_policy(bar_policy, S: int, H_ep: int) -> np.ndarray:
    """Per-step policy table ``pi[h-1, s]`` read off a lifted stationary policy."""
    actions = np.asarray(list(bar_policy), dtype=int)
    if actions.shape != (S * H_ep,):
        raise UsageError(f"lifted policy has {actions.size} entries, expected S*H = {S * H_ep}")
    return actions.reshape(H_ep, S).copy()


def lift_policy(step_policy) -> Policy:
    """Inverse of :func:`project_policy`."""
    table = np.asarray(step_policy, dtype=int)
    if table.ndim != 2:
        raise UsageError("step policy must be a (H, S) table")
    return Policy(table.reshape(-1))
