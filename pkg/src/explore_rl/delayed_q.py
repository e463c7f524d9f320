"""Delayed Q-learning baseline.

Each (s, a) pair batches ``m`` sampled targets ``r + gamma * max_a' q_hat(s', a')``
and only then attempts an update, which succeeds when it would lower
``q_hat(s, a)`` by a clear margin. A pair whose attempt fails while nothing
else has changed since its batch began stops learning until some other pair
updates successfully.
"""

from __future__ import annotations

import enum
import math
from typing import Optional, Sequence

import numpy as np

from explore_rl.errors import UsageError
from explore_rl.exact_planner import Policy


class UpdateEvent(str, enum.Enum):
    NONE = "none"
    ATTEMPTED = "attempted"
    SUCCESSFUL = "successful"


def default_eps1(epsilon: float, gamma: float) -> float:
    return epsilon * (1.0 - gamma) / 9.0


def default_m(num_states: int, num_actions: int, gamma: float, eps1: float, delta: float) -> int:
    sa = num_states * num_actions
    k = 1.0 + sa / (delta * eps1 * (1.0 - gamma))
    return math.ceil(math.log(3.0 * sa * k / delta) / (2.0 * eps1**2 * (1.0 - gamma) ** 2))


class DelayedQState:
    name = "delayed_q"

    def __init__(
        self,
        dims: tuple[int, int],
        gamma: float,
        epsilon: float,
        delta: float,
        m_override: Optional[float] = None,
        *,
        eps1: Optional[float] = None,
        tie_break: Optional[Sequence[int]] = None,
    ):
        S, A = int(dims[0]), int(dims[1])
        if S < 1 or A < 1:
            raise UsageError(f"dims must be positive, got {dims}")
        if not 0.0 < gamma < 1.0:
            raise UsageError(f"gamma must lie in (0,1), got {gamma}")
        if not epsilon > 0:
            raise UsageError(f"epsilon must be positive, got {epsilon}")
        self.dims = (S, A)
        self.gamma = float(gamma)
        self.epsilon = float(epsilon)
        self.delta = float(delta)
        self.eps1 = default_eps1(epsilon, gamma) if eps1 is None else float(eps1)
        if m_override is None:
            self.m = default_m(S, A, gamma, self.eps1, delta)
        elif m_override == math.inf:
            self.m = math.inf
        else:
            if int(m_override) < 1:
                raise UsageError(f"m must be a positive integer, got {m_override}")
            self.m = int(m_override)
        order = list(range(A)) if tie_break is None else [int(a) for a in tie_break]
        if sorted(order) != list(range(A)):
            raise UsageError(f"tie_break must be a permutation of range({A}), got {tie_break}")
        self.tie_break = tuple(order)

        init = 1.0 / (1.0 - self.gamma)
        self._q_hat = [[init] * A for _ in range(S)]
        self._accum = [[0.0] * A for _ in range(S)]
        self._count = [[0] * A for _ in range(S)]
        self._learn = [[True] * A for _ in range(S)]
        self._batch_start = [[0] * A for _ in range(S)]
        self._last_attempt = [[0] * A for _ in range(S)]
        self.last_success = 0
        self.t = 0

    @classmethod
    def init(cls, dims, gamma, epsilon, delta, m_override=None, **kw) -> "DelayedQState":
        return cls(dims, gamma, epsilon, delta, m_override, **kw)

    @property
    def q_hat(self) -> np.ndarray:
        return np.array(self._q_hat)

    @property
    def count(self) -> np.ndarray:
        return np.array(self._count, dtype=int)

    @property
    def accum(self) -> np.ndarray:
        return np.array(self._accum)

    @property
    def learn_flag(self) -> np.ndarray:
        return np.array(self._learn, dtype=bool)

    @property
    def last_attempt(self) -> np.ndarray:
        return np.array(self._last_attempt, dtype=int)

    def select_action(self, s: int) -> int:
        """Greedy on ``q_hat``; ties go to whichever action comes first in ``tie_break``."""
        if not 0 <= s < self.dims[0]:
            raise UsageError(f"state {s} out of range [0,{self.dims[0]})")
        row = self._q_hat[s]
        order = self.tie_break
        best = order[0]
        best_val = row[best]
        for a in order[1:]:
            if row[a] > best_val:
                best, best_val = a, row[a]
        return best

    def greedy_policy(self) -> Policy:
        return Policy(self.select_action(s) for s in range(self.dims[0]))

    def observe(self, s: int, a: int, r: float, s_next: int) -> UpdateEvent:
        S, A = self.dims
        if not (0 <= s < S and 0 <= a < A and 0 <= s_next < S):
            raise UsageError(f"transition ({s}, {a}, {s_next}) out of range for dims {self.dims}")
        self.t += 1
        t = self.t
        if not self._learn[s][a]:
            if self._last_attempt[s][a] < self.last_success:
                self._learn[s][a] = True
            return UpdateEvent.NONE

        if self._count[s][a] == 0:
            self._batch_start[s][a] = t
        self._count[s][a] += 1
        self._accum[s][a] += r + self.gamma * max(self._q_hat[s_next])
        if self._count[s][a] < self.m:
            return UpdateEvent.NONE

        candidate = self._accum[s][a] / self.m + self.eps1
        if self._q_hat[s][a] - candidate >= 2.0 * self.eps1:
            self._q_hat[s][a] = candidate
            self.last_success = t
            event = UpdateEvent.SUCCESSFUL
        else:
            if self._batch_start[s][a] > self.last_success:
                self._learn[s][a] = False
            event = UpdateEvent.ATTEMPTED
        self._last_attempt[s][a] = t
        self._accum[s][a] = 0.0
        self._count[s][a] = 0
        return event

    def to_dict(self) -> dict:
        return {
            "algo": self.name,
            "dims": list(self.dims),
            "gamma": self.gamma,
            "epsilon": self.epsilon,
            "delta": self.delta,
            "eps1": self.eps1,
            "m": self.m if self.m != math.inf else None,
            "tie_break": list(self.tie_break),
            "q_hat": self._q_hat,
            "accum": self._accum,
            "count": self._count,
            "learn_flag": self._learn,
            "batch_start": self._batch_start,
            "last_attempt": self._last_attempt,
            "last_success": self.last_success,
            "t": self.t,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DelayedQState":
        m = data["m"]
        state = cls(
            tuple(data["dims"]),
            data["gamma"],
            data["epsilon"],
            data["delta"],
            math.inf if m is None else m,
            eps1=data["eps1"],
            tie_break=data["tie_break"],
        )
        state._q_hat = [list(map(float, row)) for row in data["q_hat"]]
        state._accum = [list(map(float, row)) for row in data["accum"]]
        state._count = [list(map(int, row)) for row in data["count"]]
        state._learn = [list(map(bool, row)) for row in data["learn_flag"]]
        state._batch_start = [list(map(int, row)) for row in data["batch_start"]]
        state._last_attempt = [list(map(int, row)) for row in data["last_attempt"]]
        state.last_success = int(data["last_success"])
        state.t = int(data["t"])
        return state
