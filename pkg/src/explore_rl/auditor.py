"""Sample complexity of exploration, measured along a single trajectory.

At each step t the learner's current greedy policy pi_t is frozen and its
value is compared with the optimum at the current state:
``gap_policy = V*(s_t) - V^{pi_t}(s_t)``. A step is a mistake when that gap
exceeds ``epsilon_audit``. The action gap ``V*(s_t) - Q*(s_t, a_t)`` is
logged too; it is exact and needs no policy evaluation.

Policy values are recomputed only when the greedy policy changes (plus a
safety refresh every ``eval_cadence`` steps) and memoised per policy, so the
per-step cost is a table lookup.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

from explore_rl.errors import UsageError
from explore_rl.exact_planner import ValueTables, evaluate_policy, value_iteration
from explore_rl.mdp_core import Seed, TabularMdp, sample_transition


@dataclass(frozen=True)
class AuditRecord:
    t: int
    s: int
    a: int
    gap_policy: float
    gap_action: float
    mistake: bool


@dataclass
class AuditTrace:
    """Outcome of one audited run.

    Per-step columns are kept for every ``record_every``-th step; the totals
    (``total_mistakes``, ``threshold_counts``) always cover all ``horizon_run`` steps.
    """

    t: np.ndarray
    s: np.ndarray
    a: np.ndarray
    gap_policy: np.ndarray
    gap_action: np.ndarray
    mistake: np.ndarray
    cumulative_mistakes: list
    total_mistakes: int
    horizon_run: int
    record_every: int
    epsilon_audit: float
    threshold_counts: dict = field(default_factory=dict)
    final_max_qhat_minus_qstar: float = math.nan
    params: dict = field(default_factory=dict)

    @property
    def records(self) -> Iterator[AuditRecord]:
        for i in range(len(self.t)):
            yield AuditRecord(
                int(self.t[i]),
                int(self.s[i]),
                int(self.a[i]),
                float(self.gap_policy[i]),
                float(self.gap_action[i]),
                bool(self.mistake[i]),
            )

    def header(self) -> dict:
        return {
            "type": "header",
            "params": self.params,
            "horizon_run": self.horizon_run,
            "record_every": self.record_every,
            "epsilon_audit": self.epsilon_audit,
            "total_mistakes": self.total_mistakes,
            "threshold_counts": {repr(k): v for k, v in self.threshold_counts.items()},
            "final_max_qhat_minus_qstar": self.final_max_qhat_minus_qstar,
        }

    def to_jsonl(self) -> str:
        lines = [json.dumps(self.header(), sort_keys=True)]
        cum = dict(self.cumulative_mistakes)
        for rec in self.records:
            row = {
                "t": rec.t,
                "s": rec.s,
                "a": rec.a,
                "gap_policy": rec.gap_policy,
                "gap_action": rec.gap_action,
                "mistake": rec.mistake,
                "cumulative_mistakes": cum.get(rec.t),
            }
            lines.append(json.dumps(row, sort_keys=True))
        return "\n".join(lines) + "\n"

    def write_jsonl(self, path) -> None:
        Path(path).write_text(self.to_jsonl())


class PolicyGapCache:
    """V* - V^pi for frozen policies, memoised by the policy's action tuple."""

    def __init__(self, mdp: TabularMdp, optimal: ValueTables, tol: Optional[float] = None):
        self.mdp = mdp
        self.v_star = optimal.v
        self.tol = tol
        self._memo: dict[tuple, list] = {}
        self.evaluations = 0

    def __call__(self, policy) -> list:
        key = tuple(policy)
        gaps = self._memo.get(key)
        if gaps is None:
            self.evaluations += 1
            vt = evaluate_policy(self.mdp, key, self.tol)
            gaps = (self.v_star - vt.v).tolist()
            self._memo[key] = gaps
        return gaps


StepHook = Callable[[int, int, int, float, int], None]


def run_experiment(
    mdp: TabularMdp,
    learner,
    T: int,
    epsilon_audit: float,
    seed: Seed,
    eval_cadence: int = 1000,
    *,
    record_every: int = 100,
    thresholds: Sequence[float] = (),
    optimal: Optional[ValueTables] = None,
    on_step: Optional[StepHook] = None,
    params: Optional[dict] = None,
) -> AuditTrace:
    """Run ``learner`` for ``T`` steps from ``mdp.start_state`` and audit every step.

    ``learner`` needs ``select_action(s)``, ``observe(s, a, r, s_next)``,
    ``greedy_policy()`` and a ``q_hat`` array. ``on_step(t, s, a, r, s_next)``
    is called after each update. ``thresholds`` get exact per-threshold
    mistake counts without keeping every step.
    """
    if T < 1:
        raise UsageError(f"T must be >= 1, got {T}")
    if eval_cadence < 1:
        raise UsageError(f"eval_cadence must be >= 1, got {eval_cadence}")
    if record_every < 1:
        raise UsageError(f"record_every must be >= 1, got {record_every}")
    if tuple(learner.q_hat.shape) != mdp.shape:
        raise UsageError(f"learner tables {learner.q_hat.shape} do not match MDP {mdp.shape}")

    optimal = value_iteration(mdp) if optimal is None else optimal
    v_star = optimal.v.tolist()
    q_star = optimal.q.tolist()
    gap_of = PolicyGapCache(mdp, optimal)
    stream = seed.stream("trajectory")
    thresholds = [float(x) for x in thresholds]
    th_counts = [0] * len(thresholds)

    n_rec = (T - 1) // record_every + 1
    rec_t = np.zeros(n_rec, dtype=np.int64)
    rec_s = np.zeros(n_rec, dtype=np.int64)
    rec_a = np.zeros(n_rec, dtype=np.int64)
    rec_gp = np.zeros(n_rec)
    rec_ga = np.zeros(n_rec)
    rec_m = np.zeros(n_rec, dtype=bool)
    cumulative = []

    policy = list(learner.greedy_policy())
    gaps = gap_of(policy)
    select, observe = learner.select_action, learner.observe
    mistakes = 0
    s = mdp.start_state
    i = 0
    for t in range(1, T + 1):
        if t % eval_cadence == 0:
            fresh = list(learner.greedy_policy())
            if fresh != policy:
                policy = fresh
            gaps = gap_of(policy)
        a = select(s)
        if a != policy[s]:
            policy[s] = a
            gaps = gap_of(policy)
        g = gaps[s]
        is_mistake = g > epsilon_audit
        if is_mistake:
            mistakes += 1
        for j, th in enumerate(thresholds):
            if g > th:
                th_counts[j] += 1
        if (t - 1) % record_every == 0:
            rec_t[i], rec_s[i], rec_a[i] = t, s, a
            rec_gp[i] = g
            rec_ga[i] = v_star[s] - q_star[s][a]
            rec_m[i] = is_mistake
            cumulative.append((t, mistakes))
            i += 1

        s_next, r = sample_transition(mdp, s, a, stream)
        observe(s, a, r, s_next)
        if on_step is not None:
            on_step(t, s, a, r, s_next)
        # only row s of q_hat moved, so only pi(s) can change
        new_a = select(s)
        if new_a != policy[s]:
            policy[s] = new_a
            gaps = gap_of(policy)
        s = s_next

    if not cumulative or cumulative[-1][0] != T:
        cumulative.append((T, mistakes))
    final_gap = float(np.max(learner.q_hat - optimal.q))
    return AuditTrace(
        t=rec_t,
        s=rec_s,
        a=rec_a,
        gap_policy=rec_gp,
        gap_action=rec_ga,
        mistake=rec_m,
        cumulative_mistakes=cumulative,
        total_mistakes=mistakes,
        horizon_run=T,
        record_every=record_every,
        epsilon_audit=float(epsilon_audit),
        threshold_counts=dict(zip(thresholds, th_counts)),
        final_max_qhat_minus_qstar=final_gap,
        params=dict(params or {}),
    )


def mistake_count_by_threshold(trace: AuditTrace, thresholds: Sequence[float]) -> dict:
    """Number of steps with ``gap_policy > threshold``, for each threshold."""
    if trace.record_every != 1 or len(trace.gap_policy) != trace.horizon_run:
        raise UsageError("trace was downsampled; rerun with record_every=1 to count by threshold")
    gaps = trace.gap_policy
    return {th: int(np.count_nonzero(gaps > th)) for th in thresholds}
