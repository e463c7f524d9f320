"""Infinite-horizon Q-learning with UCB exploration bonuses.

The learner keeps two tables: ``q``, the running stochastic-approximation
estimate with bonus, and ``q_hat``, its running minimum, which is what the
agent acts on. Both start at 1/(1-gamma). Tables are stored as nested lists
because every step touches a single cell and numpy scalar access would
dominate the runtime.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from explore_rl.errors import UsageError
from explore_rl.exact_planner import Policy
from explore_rl.rate_schedule import C2, DerivedParams


class UcbQState:
    """Mutable state of one UCB Q-learning run.

    Test hooks: ``h_override`` replaces the learning-rate horizon (``math.inf``
    gives alpha_k = 1, i.e. full replacement) and ``zero_bonus`` drops b_k.
    With both set, :meth:`observe` is the plain Bellman backup on samples.
    """

    name = "ucb_q"

    def __init__(
        self,
        dims: tuple[int, int],
        params: DerivedParams,
        *,
        h_override: Optional[float] = None,
        zero_bonus: bool = False,
    ):
        S, A = int(dims[0]), int(dims[1])
        if S < 1 or A < 1:
            raise UsageError(f"dims must be positive, got {dims}")
        self.dims = (S, A)
        self.params = params
        self.delta = params.delta
        self.gamma = params.gamma
        self.h = params.h_rate if h_override is None else float(h_override)
        self.zero_bonus = bool(zero_bonus)
        init = 1.0 / (1.0 - self.gamma)
        self._q = [[init] * A for _ in range(S)]
        self._q_hat = [[init] * A for _ in range(S)]
        self._n = [[0] * A for _ in range(S)]
        self._bonus_scale = C2 / (1.0 - self.gamma)
        self._log_sa_over_delta = math.log(S * A / self.delta)

    @classmethod
    def init(cls, dims, params: DerivedParams, **hooks) -> "UcbQState":
        return cls(dims, params, **hooks)

    # -- views ---------------------------------------------------------------

    @property
    def q(self) -> np.ndarray:
        return np.array(self._q)

    @property
    def q_hat(self) -> np.ndarray:
        return np.array(self._q_hat)

    @property
    def visits(self) -> np.ndarray:
        return np.array(self._n, dtype=int)

    def cell(self, s: int, a: int) -> tuple[float, float, int]:
        """``(q, q_hat, visits)`` of one pair, without copying the tables."""
        return self._q[s][a], self._q_hat[s][a], self._n[s][a]

    # -- algorithm -------------------------------------------------------------

    def learning_rate(self, k: int) -> float:
        if math.isinf(self.h):
            return 1.0
        return (self.h + 1.0) / (self.h + k)

    def bonus(self, k: int) -> float:
        if self.zero_bonus:
            return 0.0
        iota = self._log_sa_over_delta + math.log((k + 1) * (k + 2))
        return self._bonus_scale * math.sqrt(self.h * iota / k)

    def select_action(self, s: int) -> int:
        """Greedy action on ``q_hat``; strict comparison, lowest index wins ties."""
        if not 0 <= s < self.dims[0]:
            raise UsageError(f"state {s} out of range [0,{self.dims[0]})")
        row = self._q_hat[s]
        best, best_val = 0, row[0]
        for a in range(1, len(row)):
            if row[a] > best_val:
                best, best_val = a, row[a]
        return best

    def observe(self, s: int, a: int, r: float, s_next: int) -> None:
        """Apply one transition (s, a, r, s_next) to the (s, a) cell."""
        S, A = self.dims
        if not (0 <= s < S and 0 <= a < A and 0 <= s_next < S):
            raise UsageError(f"transition ({s}, {a}, {s_next}) out of range for dims {self.dims}")
        # value of the successor is read before (s, a) changes: matters when s_next == s
        v_next = max(self._q_hat[s_next])
        k = self._n[s][a] + 1
        self._n[s][a] = k
        lr = self.learning_rate(k)
        q = (1.0 - lr) * self._q[s][a] + lr * (r + self.bonus(k) + self.gamma * v_next)
        self._q[s][a] = q
        if q < self._q_hat[s][a]:
            self._q_hat[s][a] = q

    def greedy_policy(self) -> Policy:
        return Policy(self.select_action(s) for s in range(self.dims[0]))

    # -- hooks and persistence ---------------------------------------------------

    def preload(self, q_hat, q=None) -> None:
        """Overwrite the value tables (test hook, e.g. seeding with Q*)."""
        q_hat = np.asarray(q_hat, dtype=float)
        if q_hat.shape != self.dims:
            raise UsageError(f"q_hat has shape {q_hat.shape}, expected {self.dims}")
        self._q_hat = q_hat.tolist()
        self._q = (q_hat if q is None else np.asarray(q, dtype=float)).tolist()

    def to_dict(self) -> dict:
        return {
            "algo": self.name,
            "dims": list(self.dims),
            "delta": self.delta,
            "h": self.h,
            "zero_bonus": self.zero_bonus,
            "params": self.params.to_dict(),
            "q": self._q,
            "q_hat": self._q_hat,
            "visits": self._n,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "UcbQState":
        params = DerivedParams(**data["params"])
        h = data.get("h", params.h_rate)
        state = cls(
            tuple(data["dims"]),
            params,
            h_override=None if h == params.h_rate else h,
            zero_bonus=data.get("zero_bonus", False),
        )
        state._q = [list(map(float, row)) for row in data["q"]]
        state._q_hat = [list(map(float, row)) for row in data["q_hat"]]
        state._n = [list(map(int, row)) for row in data["visits"]]
        return state
