import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from explore_rl.env_zoo import random_mdp
from explore_rl.errors import UsageError
from explore_rl.mdp_core import Seed, sample_transition
from explore_rl.rate_schedule import DerivedParams, bonus, derive_params
from explore_rl.ucb_q import UcbQState


def params_for(gamma, delta=0.1, h=2.0):
    """Hand-built parameters, so gamma outside the derivation range can be used in unit examples."""
    return DerivedParams(
        epsilon=0.1,
        gamma=gamma,
        delta=delta,
        epsilon2=0.1 / 3,
        r_horizon=1,
        l_levels=0,
        xi_l=1.0,
        m_segments=10,
        epsilon1=1e-3,
        h_rate=h,
    )


class TestInit:
    @pytest.mark.parametrize("gamma,value", [(0.5, 2.0), (0.9, 10.0)])
    def test_optimistic_start(self, gamma, value):
        st_ = UcbQState((3, 2), params_for(gamma))
        np.testing.assert_allclose(st_.q_hat, value)
        np.testing.assert_allclose(st_.q, value)
        assert st_.visits.sum() == 0

    def test_uses_derived_horizon(self):
        p = derive_params(0.1, 0.9, 0.05)
        assert UcbQState.init((2, 2), p).h == p.h_rate


class TestSelectAction:
    def test_fresh_ties_pick_first(self):
        assert UcbQState((2, 3), params_for(0.9)).select_action(1) == 0

    def test_argmax(self):
        st_ = UcbQState((1, 2), params_for(0.9))
        st_.preload([[1.0, 3.0]])
        assert st_.select_action(0) == 1

    def test_no_tolerance_in_comparison(self):
        st_ = UcbQState((1, 2), params_for(0.9))
        st_.preload([[3.0, 3.0 - 1e-15]])
        assert st_.select_action(0) == 0
        st_.preload([[3.0 - 1e-15, 3.0]])
        assert st_.select_action(0) == 1

    def test_out_of_range(self):
        with pytest.raises(UsageError):
            UcbQState((2, 2), params_for(0.9)).select_action(2)


class TestObserve:
    def test_first_visit_clamp_binds(self):
        st_ = UcbQState((1, 1), params_for(0.5, delta=0.1, h=2.0))
        b1 = (4 * math.sqrt(2) / 0.5) * math.sqrt(2 * math.log(60))
        assert b1 == pytest.approx(32.375, abs=1e-3)
        st_.observe(0, 0, 1.0, 0)
        assert st_.q[0, 0] == pytest.approx(1 + b1 + 0.5 * 2.0, rel=1e-12)
        assert st_.q[0, 0] == pytest.approx(34.375, abs=1e-3)
        assert st_.q_hat[0, 0] == 2.0

    def test_bonus_matches_schedule(self):
        st_ = UcbQState((3, 2), params_for(0.9, delta=0.05, h=100.0))
        for k in (1, 2, 50):
            assert st_.bonus(k) == pytest.approx(bonus(k, 100.0, 3, 2, 0.05, 0.9), rel=1e-12)

    def test_degenerate_schedule_is_bellman_backup(self):
        st_ = UcbQState((2, 2), params_for(0.9), h_override=math.inf, zero_bonus=True)
        st_.preload([[4.0, 1.0], [2.0, 7.0]])
        st_.observe(0, 1, 0.5, 1)
        assert st_.q[0, 1] == pytest.approx(0.5 + 0.9 * 7.0)
        st_.observe(1, 0, 0.0, 0)
        assert st_.q[1, 0] == pytest.approx(0.9 * 4.0)
        assert st_.q_hat[1, 0] == 2.0  # the clamp keeps the lower value

    def test_successor_read_before_update(self):
        st_ = UcbQState((1, 1), params_for(0.9), h_override=math.inf, zero_bonus=True)
        st_.preload([[5.0]])
        st_.observe(0, 0, 0.0, 0)
        assert st_.q[0, 0] == pytest.approx(4.5)
        st_.observe(0, 0, 0.0, 0)
        assert st_.q[0, 0] == pytest.approx(0.9 * 4.5)

    def test_visits_count_up(self):
        st_ = UcbQState((2, 2), params_for(0.9))
        for k in range(1, 5):
            st_.observe(1, 0, 0.3, 0)
            assert st_.visits[1, 0] == k
        assert st_.visits.sum() == 4

    def test_out_of_range(self):
        st_ = UcbQState((2, 2), params_for(0.9))
        with pytest.raises(UsageError):
            st_.observe(0, 2, 0.0, 0)
        with pytest.raises(UsageError):
            st_.observe(0, 0, 0.0, 5)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32), st.sampled_from([1.0, 5.0, None]))
    def test_invariants_along_random_trajectories(self, seed, h):
        mdp = random_mdp(4, 2, 0.6, 2, Seed(seed))
        learner = UcbQState((4, 2), derive_params(1.0, 0.6, 0.1), h_override=h)
        rng = Seed(seed).stream("t")
        s = 0
        for _ in range(400):
            a = learner.select_action(s)
            before_hat, before_q, before_n = learner.q_hat, learner.q, learner.visits
            s_next, r = sample_transition(mdp, s, a, rng)
            learner.observe(s, a, r, s_next)
            after_hat, after_q = learner.q_hat, learner.q
            assert after_hat[s, a] <= before_hat[s, a]
            assert after_hat[s, a] <= after_q[s, a]
            mask = np.ones_like(after_hat, dtype=bool)
            mask[s, a] = False
            np.testing.assert_array_equal(after_hat[mask], before_hat[mask])
            np.testing.assert_array_equal(after_q[mask], before_q[mask])
            assert learner.visits[s, a] == before_n[s, a] + 1
            s = s_next


class TestGreedyPolicy:
    def test_fresh_is_all_zero(self):
        assert tuple(UcbQState((4, 3), params_for(0.9)).greedy_policy()) == (0, 0, 0, 0)

    def test_after_lowering_action_one(self):
        st_ = UcbQState((3, 2), params_for(0.9))
        q = st_.q_hat
        q[:, 1] -= 1.0
        st_.preload(q)
        assert tuple(st_.greedy_policy()) == (0, 0, 0)


def test_snapshot_round_trip():
    p = derive_params(0.2, 0.8, 0.1)
    st_ = UcbQState((3, 2), p, h_override=4.0)
    for s, a, r, s2 in [(0, 1, 0.5, 2), (2, 0, 1.0, 1), (0, 1, 0.0, 0)]:
        st_.observe(s, a, r, s2)
    back = UcbQState.from_dict(st_.to_dict())
    np.testing.assert_array_equal(back.q, st_.q)
    np.testing.assert_array_equal(back.q_hat, st_.q_hat)
    np.testing.assert_array_equal(back.visits, st_.visits)
    assert back.h == 4.0
    back.observe(1, 1, 0.2, 0)
    st_.observe(1, 1, 0.2, 0)
    np.testing.assert_array_equal(back.q, st_.q)
