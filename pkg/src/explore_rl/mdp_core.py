"""Finite discounted MDPs: representation, validation, seeded sampling and JSON I/O."""

from __future__ import annotations

import hashlib
import json
from bisect import bisect_right
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Union

import numpy as np

from explore_rl.errors import InvalidMdpError, UsageError

ROW_SUM_TOL = 1e-12
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True, eq=False)
class TabularMdp:
    """Finite MDP with deterministic rewards.

    ``transition[s, a, s']`` is p(s'|s,a) and ``reward[s, a]`` is r(s,a).
    Arrays are copied and made read-only on construction so an instance can
    be shared between concurrent runs.
    """

    num_states: int
    num_actions: int
    transition: np.ndarray
    reward: np.ndarray
    discount: float
    start_state: int = 0
    _cdf: list = field(init=False, repr=False, compare=False)
    _rew: list = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        p = np.array(self.transition, dtype=float)
        r = np.array(self.reward, dtype=float)
        S, A = int(self.num_states), int(self.num_actions)
        if S < 1 or A < 1:
            raise UsageError(f"num_states and num_actions must be positive, got S={S}, A={A}")
        if p.shape != (S, A, S):
            raise UsageError(f"transition has shape {p.shape}, expected {(S, A, S)}")
        if r.shape != (S, A):
            raise UsageError(f"reward has shape {r.shape}, expected {(S, A)}")
        p.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "num_states", S)
        object.__setattr__(self, "num_actions", A)
        object.__setattr__(self, "transition", p)
        object.__setattr__(self, "reward", r)
        object.__setattr__(self, "discount", float(self.discount))
        object.__setattr__(self, "start_state", int(self.start_state))
        # Per-row cumulative tables as plain lists: the sampler is on the hot path.
        cdf = [[list(np.cumsum(p[s, a])) for a in range(A)] for s in range(S)]
        object.__setattr__(self, "_cdf", cdf)
        object.__setattr__(self, "_rew", r.tolist())

    @property
    def shape(self) -> tuple[int, int]:
        return self.num_states, self.num_actions

    @property
    def vmax(self) -> float:
        """Upper bound 1/(1-gamma) on any value."""
        return 1.0 / (1.0 - self.discount)

    def __eq__(self, other):
        if not isinstance(other, TabularMdp):
            return NotImplemented
        return (
            self.shape == other.shape
            and self.discount == other.discount
            and self.start_state == other.start_state
            and np.array_equal(self.transition, other.transition)
            and np.array_equal(self.reward, other.reward)
        )

    __hash__ = None


@dataclass(frozen=True)
class Violation:
    kind: str
    where: tuple
    message: str

    def __str__(self):
        return self.message


class ValidationReport(list):
    """List of :class:`Violation`; empty means the MDP is valid."""

    @property
    def ok(self) -> bool:
        return not self


def validate(mdp: TabularMdp) -> ValidationReport:
    """Collect every invariant violation of ``mdp``. Never raises."""
    report = ValidationReport()
    p, r = mdp.transition, mdp.reward
    for s in range(mdp.num_states):
        for a in range(mdp.num_actions):
            row = p[s, a]
            if np.any(row < 0.0) or np.any(row > 1.0) or not np.all(np.isfinite(row)):
                report.append(Violation("transition_entry", (s, a), f"transition({s},{a},.) has entries outside [0,1]"))
            total = float(row.sum())
            if not abs(total - 1.0) <= ROW_SUM_TOL:
                report.append(Violation("row_sum", (s, a), f"transition({s},{a},.) sums to {total!r}, not 1"))
            rew = r[s, a]
            if not 0.0 <= rew <= 1.0:
                report.append(Violation("reward", (s, a), f"reward({s},{a})={rew!r} outside [0,1]"))
    if not 0.0 <= mdp.discount < 1.0:
        report.append(Violation("discount", (), f"discount {mdp.discount!r} outside [0,1)"))
    if not 0 <= mdp.start_state < mdp.num_states:
        report.append(Violation("start_state", (), f"start_state {mdp.start_state} outside [0,{mdp.num_states})"))
    return report


# -- randomness -------------------------------------------------------------


@dataclass(frozen=True)
class Seed:
    """64-bit seed with stable, label-based stream splitting."""

    value: int

    def __post_init__(self):
        if not 0 <= int(self.value) <= _MASK64:
            raise UsageError(f"seed must be a 64-bit unsigned integer, got {self.value}")
        object.__setattr__(self, "value", int(self.value))

    def child(self, label: str) -> "Seed":
        digest = hashlib.blake2b(f"{self.value}/{label}".encode(), digest_size=8).digest()
        return Seed(int.from_bytes(digest, "little"))

    def stream(self, label: str | None = None) -> "RandomStream":
        seed = self if label is None else self.child(label)
        return RandomStream(seed.value)


class RandomStream:
    """Buffered uniform stream over a PCG64 generator.

    Draws uniforms in blocks; the sequence returned by :meth:`random` is a
    pure function of the seed, independent of block size.
    """

    def __init__(self, seed: int, block: int = 4096):
        self.generator = np.random.Generator(np.random.PCG64(seed))
        self._block = block
        self._buf: list[float] = []
        self._pos = 0

    def random(self) -> float:
        if self._pos >= len(self._buf):
            self._buf = self.generator.random(self._block).tolist()
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return u


def sample_transition(mdp: TabularMdp, s: int, a: int, rng) -> tuple[int, float]:
    """Draw ``(next_state, reward)`` by inverse CDF over ascending next-state index.

    ``rng`` is anything with a ``random()`` method returning a uniform in [0, 1).
    """
    if not (0 <= s < mdp.num_states and 0 <= a < mdp.num_actions):
        raise UsageError(f"(s={s}, a={a}) out of range for MDP of shape {mdp.shape}")
    cdf = mdp._cdf[s][a]
    nxt = bisect_right(cdf, rng.random())
    if nxt >= mdp.num_states:
        # u landed above a row total that rounded just below 1
        nxt = int(np.flatnonzero(mdp.transition[s, a])[-1])
    return nxt, mdp._rew[s][a]


# -- JSON format ------------------------------------------------------------


def mdp_to_dict(mdp: TabularMdp) -> dict[str, Any]:
    return {
        "num_states": mdp.num_states,
        "num_actions": mdp.num_actions,
        "discount": mdp.discount,
        "start_state": mdp.start_state,
        "reward": mdp.reward.tolist(),
        "transition": mdp.transition.tolist(),
    }


def mdp_from_dict(data: dict[str, Any]) -> TabularMdp:
    """Build and validate an MDP; raises :class:`InvalidMdpError` if invalid."""
    required = ("num_states", "num_actions", "discount", "start_state", "reward", "transition")
    missing = [k for k in required if k not in data]
    if missing:
        raise InvalidMdpError(f"MDP document missing fields: {', '.join(missing)}")
    try:
        mdp = TabularMdp(
            num_states=data["num_states"],
            num_actions=data["num_actions"],
            transition=np.asarray(data["transition"], dtype=float),
            reward=np.asarray(data["reward"], dtype=float),
            discount=data["discount"],
            start_state=data["start_state"],
        )
    except (UsageError, ValueError, TypeError) as exc:
        raise InvalidMdpError(str(exc)) from exc
    report = validate(mdp)
    if report:
        raise InvalidMdpError("invalid MDP: " + "; ".join(map(str, report)), report)
    return mdp


def save_mdp(mdp: TabularMdp, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(mdp_to_dict(mdp)) + "\n")


def load_mdp(path: Union[str, Path]) -> TabularMdp:
    return mdp_from_dict(json.loads(Path(path).read_text()))
