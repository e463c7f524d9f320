import json

import numpy as np
import pytest

from conftest import PinnedLearner
from explore_rl.auditor import PolicyGapCache, run_experiment, mistake_count_by_threshold
from explore_rl.env_zoo import STATE_A, chain_mdp, hard_instance, random_mdp
from explore_rl.errors import UsageError
from explore_rl.exact_planner import evaluate_policy, value_iteration
from explore_rl.mdp_core import Seed
from explore_rl.rate_schedule import derive_params
from explore_rl.ucb_q import UcbQState


@pytest.fixture
def hard():
    return hard_instance(0.05, 0.9)


def pinned_y(mdp):
    return PinnedLearner([1, 1, 1], mdp.num_actions)


class TestMistakes:
    def test_q_star_preloaded_makes_no_mistakes(self):
        mdp = random_mdp(5, 3, 0.9, 3, Seed(0))
        q_star = value_iteration(mdp).q
        learner = UcbQState(mdp.shape, derive_params(0.1, 0.9, 0.1))
        learner.preload(q_star)
        trace = run_experiment(mdp, learner, 3000, 1e-6, Seed(1))
        assert trace.total_mistakes == 0

    def test_pinned_y_errs_at_every_visit_to_a(self, hard):
        trace = run_experiment(hard, pinned_y(hard), 2000, 1.0, Seed(2), record_every=1)
        visits_a = int(np.count_nonzero(trace.s == STATE_A))
        assert visits_a > 0
        assert trace.total_mistakes >= visits_a
        assert np.all(trace.gap_policy[trace.s == STATE_A] == pytest.approx(2.3684, abs=1e-4))

    def test_pinned_y_under_loose_threshold(self, hard):
        trace = run_experiment(hard, pinned_y(hard), 2000, 3.0, Seed(2))
        assert trace.total_mistakes == 0

    def test_action_gap_logged(self, hard):
        trace = run_experiment(hard, pinned_y(hard), 500, 1.0, Seed(3), record_every=1)
        at_a = trace.gap_action[trace.s == STATE_A]
        np.testing.assert_allclose(at_a, 10 * 0.05 * 0.9, atol=1e-8)

    def test_gap_matches_fresh_evaluation(self):
        mdp = random_mdp(4, 2, 0.8, 2, Seed(5))
        learner = UcbQState(mdp.shape, derive_params(1.0, 0.8, 0.1), h_override=1.0)
        optimal = value_iteration(mdp)
        policies = []

        def hook(t, s, a, r, s_next):
            policies.append(tuple(learner.greedy_policy()))

        trace = run_experiment(mdp, learner, 100, 0.1, Seed(6), record_every=1, on_step=hook)
        # the policy in force at step t is the one left after step t-1
        start = tuple(UcbQState(mdp.shape, derive_params(1.0, 0.8, 0.1)).greedy_policy())
        in_force = [start] + policies[:-1]
        for rec, pol in zip(trace.records, in_force):
            want = optimal.v[rec.s] - evaluate_policy(mdp, pol).v[rec.s]
            assert rec.gap_policy == pytest.approx(want, abs=1e-9)


class TestThresholds:
    def test_above_value_range_is_zero(self, hard):
        trace = run_experiment(hard, pinned_y(hard), 1000, 1.0, Seed(4), record_every=1)
        assert mistake_count_by_threshold(trace, [11.0]) == {11.0: 0}

    def test_zero_threshold_counts_every_step(self, hard):
        # the loss at a propagates to b and c (scaled by gamma), so every step has a positive gap
        trace = run_experiment(hard, pinned_y(hard), 1000, 1.0, Seed(4), record_every=1, thresholds=[0.0, 2.0, 2.2])
        gap_a = 10 * 0.05 * 0.9 / (1 - 0.81)
        np.testing.assert_allclose(trace.gap_policy[trace.s != STATE_A], 0.9 * gap_a, atol=1e-8)
        assert mistake_count_by_threshold(trace, [0.0])[0.0] == 1000
        assert mistake_count_by_threshold(trace, [2.2])[2.2] == int(np.count_nonzero(trace.s == STATE_A))
        assert trace.threshold_counts == mistake_count_by_threshold(trace, [0.0, 2.0, 2.2])

    def test_downsampled_trace_rejected(self, hard):
        trace = run_experiment(hard, pinned_y(hard), 1000, 1.0, Seed(4), record_every=10)
        with pytest.raises(UsageError):
            mistake_count_by_threshold(trace, [0.1])

    def test_totals_cover_every_step_when_downsampled(self, hard):
        full = run_experiment(hard, pinned_y(hard), 1000, 1.0, Seed(4), record_every=1, thresholds=[0.5])
        thin = run_experiment(hard, pinned_y(hard), 1000, 1.0, Seed(4), record_every=37, thresholds=[0.5])
        assert thin.total_mistakes == full.total_mistakes
        assert thin.threshold_counts == full.threshold_counts
        assert len(thin.t) == (1000 - 1) // 37 + 1


class TestDeterminism:
    @pytest.mark.parametrize("cadence", [1, 7, 1000])
    def test_cadence_does_not_change_counts(self, cadence):
        mdp = chain_mdp(4, 0.8)
        learner = UcbQState(mdp.shape, derive_params(1.0, 0.8, 0.1), h_override=1.0)
        ref_learner = UcbQState(mdp.shape, derive_params(1.0, 0.8, 0.1), h_override=1.0)
        ref = run_experiment(mdp, ref_learner, 800, 0.5, Seed(8), eval_cadence=10**9, record_every=1)
        got = run_experiment(mdp, learner, 800, 0.5, Seed(8), eval_cadence=cadence, record_every=1)
        assert got.total_mistakes == ref.total_mistakes
        np.testing.assert_array_equal(got.gap_policy, ref.gap_policy)

    def test_same_seed_same_jsonl(self, hard):
        a = run_experiment(hard, pinned_y(hard), 300, 1.0, Seed(9), record_every=3).to_jsonl()
        b = run_experiment(hard, pinned_y(hard), 300, 1.0, Seed(9), record_every=3).to_jsonl()
        assert a == b


def test_cache_memoises_by_policy(hard):
    cache = PolicyGapCache(hard, value_iteration(hard))
    g1 = cache((1, 1, 1))
    g2 = cache([1, 1, 1])
    assert g1 == g2 and cache.evaluations == 1
    cache((0, 0, 0))
    assert cache.evaluations == 2


def test_jsonl_layout(hard, tmp_path):
    trace = run_experiment(hard, pinned_y(hard), 50, 1.0, Seed(0), record_every=10, params={"run": "x"})
    path = tmp_path / "t.jsonl"
    trace.write_jsonl(path)
    lines = [json.loads(line) for line in path.read_text().splitlines()]
    assert lines[0]["type"] == "header" and lines[0]["params"] == {"run": "x"}
    assert [rec["t"] for rec in lines[1:]] == [1, 11, 21, 31, 41]
    assert set(lines[1]) == {"t", "s", "a", "gap_policy", "gap_action", "mistake", "cumulative_mistakes"}


def test_shape_mismatch_rejected(hard):
    with pytest.raises(UsageError):
        run_experiment(hard, PinnedLearner([0, 0], 2), 10, 1.0, Seed(0))
