import numpy as np
import pytest
from hypothesis import given, strategies as st

from made_lab.envs import ChainConfig, chain_optimal_value, make_chain_mdp, make_random_mdp
from made_lab.mdp import TabularMdp, policy_q, policy_value, uniform_policy
from made_lab.oracles import tangent_finite_difference
from made_lab.policy_grad import (
    OBJECTIVES,
    PgConfig,
    grad_entropy,
    grad_made,
    grad_rel_entropy,
    grad_vanilla,
    objective_grad,
    objective_value,
    pg_run,
    simplex_project,
    tangent,
)

from conftest import mdp_and_policy


def _bandit(rewards):
    r = np.asarray(rewards, dtype=float)[None, :]
    P = np.ones((1, r.shape[1], 1))
    return TabularMdp(P, r, np.ones(1), 0.5)


def _rel_err(g, fd):
    return np.max(np.abs(tangent(g) - fd)) / max(np.max(np.abs(fd)), 1e-12)


@pytest.mark.parametrize("objective", OBJECTIVES)
@pytest.mark.parametrize("seed", range(3))
def test_finite_difference(objective, seed):
    mdp = make_random_mdp(4, 3, seed, 0.9)
    pi = np.random.default_rng(seed).dirichlet(np.ones(3), size=4) * 0.9 + 0.1 / 3
    g = objective_grad(mdp, pi, objective, 0.1)
    fd = tangent_finite_difference(lambda p: objective_value(mdp, p, objective, 0.1), pi)
    assert _rel_err(g, fd) <= 1e-4


@given(mdp_and_policy(max_states=4, interior=True, discount=0.8),
       st.sampled_from(OBJECTIVES), st.sampled_from([1, -1]))
def test_finite_difference_property(pair, objective, sign):
    mdp, pi = pair
    if mdp.n_actions == 1:
        return
    g = objective_grad(mdp, pi, objective, 0.05, sign)
    fd = tangent_finite_difference(lambda p: objective_value(mdp, p, objective, 0.05, sign), pi)
    assert np.max(np.abs(tangent(g) - fd)) <= 1e-4 * max(np.max(np.abs(fd)), 1.0)


@given(mdp_and_policy(interior=True))
def test_tau_zero_reduces_to_vanilla(pair):
    mdp, pi = pair
    base = grad_vanilla(mdp, pi)
    for g in (grad_entropy(mdp, pi, 0.0), grad_rel_entropy(mdp, pi, 0.0), grad_made(mdp, pi, 0.0)):
        np.testing.assert_array_equal(g, base)


def test_rel_entropy_term():
    mdp = make_random_mdp(3, 4, 0, 0.9)
    pi = uniform_policy(3, 4)
    extra = grad_rel_entropy(mdp, pi, 0.1) - grad_vanilla(mdp, pi)
    np.testing.assert_allclose(extra, 0.4)


def test_boundary_policy_rejected():
    mdp = make_random_mdp(2, 2, 0, 0.9)
    pi = np.array([[1.0, 0.0], [0.5, 0.5]])
    grad_vanilla(mdp, pi)
    for fn in (grad_entropy, grad_rel_entropy):
        with pytest.raises(ValueError):
            fn(mdp, pi, 0.1)


def test_bandit_gradient_is_q():
    mdp = _bandit([1.0, 0.2, -0.3])
    pi = np.array([[0.2, 0.5, 0.3]])
    g = grad_vanilla(mdp, pi)
    q = policy_q(mdp, pi)
    np.testing.assert_allclose(g / q, g[0, 0] / q[0, 0])


def test_entropy_pushes_toward_uniform():
    mdp = _bandit([0.3, 0.3])
    for p in (0.1, 0.3, 0.8, 0.95):
        pi = np.array([[p, 1 - p]])
        step = tangent(grad_entropy(mdp, pi, 0.1))
        assert np.sign(step[0, 0]) == np.sign(0.5 - p)


def test_made_single_pair_has_no_tangent_component():
    mdp = _bandit([0.7])
    g = grad_made(mdp, np.ones((1, 1)), 0.1) - grad_vanilla(mdp, np.ones((1, 1)))
    np.testing.assert_allclose(tangent(g), 0.0)


def test_made_sign():
    mdp = make_random_mdp(3, 2, 1, 0.9)
    pi = uniform_policy(3, 2)
    with pytest.raises(ValueError):
        grad_made(mdp, pi, 0.1, sign=0)
    plus = grad_made(mdp, pi, 0.1, 1) - grad_vanilla(mdp, pi)
    minus = grad_made(mdp, pi, 0.1, -1) - grad_vanilla(mdp, pi)
    np.testing.assert_allclose(plus, -minus)


@pytest.mark.parametrize("v,expected", [([0.3, 0.7], [0.3, 0.7]), ([2.0, 0.0], [1.0, 0.0]),
                                        ([0.4, 0.4], [0.5, 0.5])])
def test_projection_examples(v, expected):
    np.testing.assert_allclose(simplex_project(np.array(v)), expected)


vectors = st.lists(st.floats(-10, 10), min_size=1, max_size=6).map(np.array)


@given(vectors)
def test_projection_properties(v):
    x = simplex_project(v)
    assert np.all(x >= 0) and x.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(simplex_project(x), x, atol=1e-12)
    # optimality: x is at least as close to v as random simplex points
    rng = np.random.default_rng(0)
    for y in rng.dirichlet(np.ones(len(v)), size=20):
        assert np.linalg.norm(x - v) <= np.linalg.norm(y - v) + 1e-9


def test_chain_vanishing_gradient():
    mdp = make_chain_mdp(ChainConfig(depth=8))
    g = grad_vanilla(mdp, uniform_policy(mdp.n_states, mdp.n_actions))
    # the row-constant part of the ambient gradient is removed by projection
    assert np.max(np.abs(tangent(g))) < 1e-4


@pytest.mark.parametrize("objective", OBJECTIVES)
def test_iterates_stay_on_simplex(objective):
    mdp = make_random_mdp(4, 3, 2, 0.9)
    rows = []
    pg_run(mdp, PgConfig(objective, step_size=5.0, iters=50),
           callback=lambda k, th: rows.append(th.copy()))
    for th in rows:
        assert np.all(th >= 0)
        assert np.max(np.abs(th.sum(axis=1) - 1.0)) <= 1e-12


@given(st.integers(0, 10_000))
def test_vanilla_small_step_monotone(seed):
    mdp = make_random_mdp(3, 2, seed, 0.8)
    trace = pg_run(mdp, PgConfig("vanilla", step_size=1e-3, iters=100))
    assert np.all(np.diff(trace.values) >= -1e-12)


@pytest.mark.parametrize("objective", OBJECTIVES)
def test_bandit_converges(objective):
    mdp = _bandit([1.0, 0.0])
    trace = pg_run(mdp, PgConfig(objective, step_size=0.05, iters=800))
    assert trace.policy[0, 0] > 0.99


@pytest.mark.parametrize("objective", ["entropy", "rel_entropy", "made"])
def test_large_steps_do_not_bounce(objective):
    # an undamped step of 5 lands on the floor, where tau / theta explodes
    mdp = _bandit([1.0, 0.0])
    rows = []
    pg_run(mdp, PgConfig(objective, step_size=5.0, iters=50),
           callback=lambda k, th: rows.append(th[0, 0]))
    assert min(rows) > 0.5


def test_regularised_objective_never_drops():
    mdp = make_random_mdp(3, 3, 4, 0.9)
    seen = []
    cfg = PgConfig("rel_entropy", step_size=50.0, iters=30)
    pg_run(mdp, cfg, callback=lambda k, th: seen.append((k, th.copy())))
    prev = uniform_policy(3, 3)
    for k, th in seen:
        tau = cfg.tau(k)
        assert objective_value(mdp, th, "rel_entropy", tau) >= \
            objective_value(mdp, prev, "rel_entropy", tau) - 1e-12
        prev = th


def test_trace_logging():
    mdp = make_random_mdp(3, 2, 0, 0.9)
    trace = pg_run(mdp, PgConfig("made", iters=20, log_every=5))
    assert trace.iters == [0, 5, 10, 15, 20]
    assert trace.values[-1] == pytest.approx(policy_value(mdp, trace.policy))
    assert trace.rows()[0][1] == "made"
    stop = pg_run(mdp, PgConfig("vanilla", iters=500, stop_at=trace.values[2]))
    assert stop.values[-1] >= trace.values[2] and stop.iters[-1] < 500


def test_config_validation():
    with pytest.raises(ValueError):
        PgConfig("natural")
    with pytest.raises(ValueError):
        PgConfig(step_size=0.0)
    with pytest.raises(ValueError):
        PgConfig(tau0=-0.1)
    with pytest.raises(ValueError):
        PgConfig(max_backtracks=-1)
    assert PgConfig(tau0=0.1).tau(4) == pytest.approx(0.05)


def test_chain_made_beats_entropy_at_step_five():
    mdp = make_chain_mdp(ChainConfig(depth=8))
    target = 0.9 * chain_optimal_value(8)
    hits = {obj: pg_run(mdp, PgConfig(obj, step_size=5.0, iters=200, stop_at=target))
            .first_reaching(target) for obj in ("made", "entropy")}
    assert hits["made"] is not None and hits["entropy"] is not None
    assert hits["made"] < hits["entropy"]
