"""Parameter chain, learning rates and confidence bonuses for UCB Q-learning.

Everything here is a pure function. ``derive_params`` turns a target accuracy
into the internal constants the learner needs (the accuracy slack ``eps1``
and the learning-rate horizon ``H``); the rest are the step-size schedule
``alpha_k = (H+1)/(H+k)``, the induced weights ``alpha_t^i`` and the
bonus/confidence widths built on ``iota(k) = ln(S*A*(k+1)*(k+2)/delta)``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from explore_rl.errors import UsageError

C2 = 4.0 * math.sqrt(2.0)
C3 = 3.0 * C2


@dataclass(frozen=True)
class DerivedParams:
    epsilon: float
    gamma: float
    delta: float
    epsilon2: float
    r_horizon: int
    l_levels: int
    xi_l: float
    m_segments: int
    epsilon1: float
    h_rate: float
    c2: float = C2
    c3: float = C3

    def to_dict(self) -> dict:
        return asdict(self)


def derive_params(epsilon: float, gamma: float, delta: float) -> DerivedParams:
    """Closed-form parameter chain eps -> (eps2, R, L, xi_L, M, eps1, H).

    Requires ``1/2 < gamma < 1``; the learner's guarantees are only stated
    on that range, so nothing outside it is extrapolated.
    """
    if not epsilon > 0:
        raise UsageError(f"epsilon must be positive, got {epsilon}")
    if not 0.5 < gamma < 1.0:
        raise UsageError(f"gamma must satisfy 1/2 < gamma < 1, got {gamma}")
    if not 0.0 < delta < 1.0:
        raise UsageError(f"delta must lie in (0,1), got {delta}")

    log_horizon = math.log(1.0 / (1.0 - gamma))
    eps2 = epsilon / 3.0
    R = max(1, math.ceil(math.log(1.0 / (eps2 * (1.0 - gamma))) / (1.0 - gamma)))
    L = int(math.floor(math.log2(R)))
    xi_l = eps2 / (2.0 ** (L + 2) * log_horizon)
    M = max(math.ceil(2.0 * math.log2(1.0 / (xi_l * (1.0 - gamma)))), 10)
    eps1 = epsilon / (24.0 * R * M * log_horizon)
    H = math.log(1.0 / ((1.0 - gamma) * eps1)) / math.log(1.0 / gamma)
    return DerivedParams(
        epsilon=epsilon,
        gamma=gamma,
        delta=delta,
        epsilon2=eps2,
        r_horizon=R,
        l_levels=L,
        xi_l=xi_l,
        m_segments=M,
        epsilon1=eps1,
        h_rate=H,
    )


def alpha(k: int, h: float) -> float:
    if k < 1:
        raise UsageError(f"visit count k must be >= 1, got {k}")
    if not h > 0:
        raise UsageError(f"h must be positive, got {h}")
    return (h + 1.0) / (h + k)


def alpha_weights(t: int, h: float) -> np.ndarray:
    """Weights (alpha_t^0, ..., alpha_t^t) that the t-th estimate puts on each sample.

    Built with the forward recursion alpha_t^i = (1 - alpha_t) alpha_{t-1}^i,
    alpha_t^t = alpha_t, which never forms long products.
    """
    if t < 0:
        raise UsageError(f"t must be nonnegative, got {t}")
    w = np.zeros(t + 1)
    w[0] = 1.0
    for j in range(1, t + 1):
        a = alpha(j, h)
        w[:j] *= 1.0 - a
        w[j] = a
    return w


def alpha_weight_table(t_max: int, h: float) -> list[np.ndarray]:
    """``alpha_weights(t, h)`` for every t in 0..t_max, sharing one recursion."""
    rows = [np.ones(1)]
    w = np.ones(1)
    for j in range(1, t_max + 1):
        a = alpha(j, h)
        w = np.append(w * (1.0 - a), a)
        rows.append(w)
    return rows


def iota(k: int, num_states: int, num_actions: int, delta: float) -> float:
    return math.log(num_states * num_actions * (k + 1) * (k + 2) / delta)


def bonus(k: int, h: float, s: int, a: int, delta: float, gamma: float) -> float:
    """Exploration bonus b_k = c2/(1-gamma) * sqrt(h * iota(k) / k).

    ``s`` and ``a`` are the numbers of states and actions (they enter only
    through iota).
    """
    if k < 1:
        raise UsageError(f"visit count k must be >= 1, got {k}")
    return C2 / (1.0 - gamma) * math.sqrt(h * iota(k, s, a, delta) / k)


def beta(t: int, h: float, s: int, a: int, delta: float, gamma: float) -> float:
    """Confidence width c3/(1-gamma) * sqrt(h * iota(t) / t); always 3 * bonus."""
    if t < 1:
        raise UsageError(f"t must be >= 1, got {t}")
    return C3 / (1.0 - gamma) * math.sqrt(h * iota(t, s, a, delta) / t)
