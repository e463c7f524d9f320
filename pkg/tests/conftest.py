import numpy as np
import pytest

from explore_rl.exact_planner import Policy
from explore_rl.mdp_core import TabularMdp


class PinnedLearner:
    """Learner stub that always plays a fixed policy and never learns."""

    name = "pinned"

    def __init__(self, actions, num_actions, q_hat=None):
        self.actions = list(actions)
        self._q_hat = np.zeros((len(self.actions), num_actions)) if q_hat is None else np.asarray(q_hat)

    @property
    def q_hat(self):
        return self._q_hat

    def select_action(self, s):
        return self.actions[s]

    def observe(self, s, a, r, s_next):
        pass

    def greedy_policy(self):
        return Policy(self.actions)


@pytest.fixture
def two_state_mdp():
    p = np.zeros((2, 2, 2))
    p[0, 0] = [0.0, 1.0]
    p[0, 1] = [0.3, 0.7]
    p[1, 0] = [1.0, 0.0]
    p[1, 1] = [0.5, 0.5]
    r = np.array([[0.2, 0.8], [1.0, 0.0]])
    return TabularMdp(2, 2, p, r, 0.8)
