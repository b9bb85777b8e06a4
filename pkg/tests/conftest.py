import numpy as np
import pytest
from hypothesis import HealthCheck, settings, strategies as st

from made_lab.envs import make_random_mdp

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@st.composite
def random_mdps(draw, max_states=5, max_actions=3, discount=None):
    S = draw(st.integers(1, max_states))
    A = draw(st.integers(1, max_actions))
    seed = draw(st.integers(0, 2**31 - 1))
    gamma = discount if discount is not None else draw(st.floats(0.0, 0.95))
    return make_random_mdp(S, A, seed, gamma)


@st.composite
def mdp_and_policy(draw, max_states=5, max_actions=3, interior=False, discount=None):
    mdp = draw(random_mdps(max_states, max_actions, discount))
    rng = np.random.default_rng(draw(st.integers(0, 2**31 - 1)))
    pi = rng.dirichlet(np.ones(mdp.n_actions), size=mdp.n_states)
    if interior:
        pi = np.maximum(pi, 0.05)
        pi /= pi.sum(axis=1, keepdims=True)
    return mdp, pi


@pytest.fixture
def cycle_mdp():
    from made_lab.mdp import TabularMdp

    P = np.zeros((2, 1, 2))
    P[0, 0, 1] = P[1, 0, 0] = 1.0
    return TabularMdp(P, np.zeros((2, 1)), np.array([1.0, 0.0]), 0.5)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    report = getattr(module, "REPORT", None)
    if report:
        terminalreporter.section("acceptance criteria")
        for n in sorted(report):
            terminalreporter.write_line(report[n])
