import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from made_lab.envs import (
    ChainConfig,
    LockConfig,
    chain_optimal_value,
    lock_layout,
    make_bidirectional_lock,
    make_chain_mdp,
    make_random_mdp,
)
from made_lab.mdp import deterministic_policy, exact_occupancy, mc_occupancy, policy_value, uniform_policy


def test_lock_end_rewards():
    cfg = LockConfig(env_seed=4)
    mdp, lay = make_bidirectional_lock(cfg), lock_layout(cfg)
    ends = {lock: mdp.reward[lay.good[lock][-1]] for lock in (0, 1)}
    np.testing.assert_allclose(ends[lay.big_lock], [1.0, 1.0])
    np.testing.assert_allclose(ends[1 - lay.big_lock], [0.1, 0.1])


def test_lock_shape_and_start():
    mdp = make_bidirectional_lock(LockConfig(depth=5))
    assert mdp.transition.shape == (22, 2, 22)
    assert mdp.initial[0] == 1.0 and mdp.terminal.sum() == 1


def test_deterministic_lock_reaches_big_reward():
    cfg = LockConfig(depth=4, slip=0.0, env_seed=2)
    mdp, lay = make_bidirectional_lock(cfg), lock_layout(cfg)
    s = lay.start
    a = lay.big_lock
    total = 0.0
    for i in range(cfg.depth + 1):
        nxt = int(np.argmax(mdp.transition[s, a]))
        assert mdp.transition[s, a, nxt] == 1.0
        total += mdp.transition_reward[s, a, nxt]
        s = nxt
        if i < cfg.depth - 1:
            a = lay.good_action[lay.big_lock][i]
        else:
            a = 0
    assert s == lay.terminal
    assert total == pytest.approx(cfg.big_reward + cfg.depth * cfg.anti_reward)


def test_small_lock_structure():
    mdp = make_bidirectional_lock(LockConfig(depth=2, slip=0.5, env_seed=0))
    np.testing.assert_allclose(mdp.transition.sum(axis=2), 1.0, atol=1e-12)
    positive = {s for s, a, t in zip(*np.nonzero(mdp.transition_reward > 0))}
    assert len(positive) == 2


def _reachable(mdp, sources):
    seen, stack = set(sources), list(sources)
    while stack:
        s = stack.pop()
        for t in np.nonzero(mdp.transition[s].sum(axis=0) > 0)[0]:
            if t not in seen:
                seen.add(int(t))
                stack.append(int(t))
    return seen


@given(st.integers(1, 6), st.floats(0.0, 0.9), st.integers(0, 1000))
def test_dead_chain_is_inescapable(depth, slip, seed):
    cfg = LockConfig(depth=depth, slip=slip, env_seed=seed)
    mdp, lay = make_bidirectional_lock(cfg), lock_layout(cfg)
    dead = [s for lock in (0, 1) for s in lay.dead[lock]]
    good = {s for lock in (0, 1) for s in lay.good[lock]}
    assert not (_reachable(mdp, dead) & good)
    np.testing.assert_allclose(mdp.reward[dead], 0.0)
    np.testing.assert_allclose(mdp.transition.sum(axis=2), 1.0, atol=1e-12)


@given(st.integers(2, 6), st.integers(0, 1000))
def test_dead_ward_action_is_myopically_best(depth, seed):
    cfg = LockConfig(depth=depth, slip=0.5, env_seed=seed)
    mdp, lay = make_bidirectional_lock(cfg), lock_layout(cfg)
    for lock in (0, 1):
        for i, g in enumerate(lay.good[lock][:-1]):
            good_a = lay.good_action[lock][i]
            assert mdp.reward[g, 1 - good_a] > mdp.reward[g, good_a]


def test_fixed_action_layout():
    lay = lock_layout(LockConfig(randomize_actions=False))
    assert all(a == 0 for row in lay.good_action for a in row)


@pytest.mark.parametrize("kwargs", [dict(depth=0), dict(slip=1.0), dict(big_reward=0.05),
                                    dict(anti_reward=0.1)])
def test_invalid_lock_config(kwargs):
    with pytest.raises(ValueError):
        LockConfig(**kwargs)


def test_lock_grid_layout():
    cfg = LockConfig(depth=3)
    lay = lock_layout(cfg)
    grid = lay.grid(np.arange(4 * 3 + 2))
    assert grid.shape == (4, 4)
    assert grid[0, 0] == lay.start and grid[1, 0] == lay.terminal
    np.testing.assert_array_equal(grid[2, 1:], lay.good[1])
    np.testing.assert_array_equal(grid[3, 1:], lay.dead[1])


def test_chain_discount_and_value():
    mdp = make_chain_mdp(ChainConfig(depth=8))
    assert mdp.discount == pytest.approx(8 / 9)
    assert chain_optimal_value(8) == pytest.approx(9 * (8 / 9) ** 9)
    assert policy_value(mdp, deterministic_policy([0] * 10, 4)) == pytest.approx(chain_optimal_value(8))


def test_chain_uniform_value_is_tiny():
    mdp = make_chain_mdp(ChainConfig(depth=8))
    assert policy_value(mdp, uniform_policy(10, 4)) < 0.01


@pytest.mark.parametrize("depth", [1, 2, 3, 4])
def test_only_always_advance_is_optimal(depth):
    mdp = make_chain_mdp(ChainConfig(depth=depth))
    target = chain_optimal_value(depth) - 1e-9
    S = depth + 2
    for acts in itertools.product(range(4), repeat=S):
        J = policy_value(mdp, deterministic_policy(acts, 4))
        if J >= target:
            assert all(a == 0 for a in acts)


def test_random_mdp_determinism_and_rows():
    a, b = make_random_mdp(4, 3, 9), make_random_mdp(4, 3, 9)
    np.testing.assert_array_equal(a.transition, b.transition)
    np.testing.assert_array_equal(a.reward, b.reward)
    np.testing.assert_allclose(a.transition.sum(axis=2), 1.0, atol=1e-12)


def test_random_mdp_matches_rollouts():
    mdp = make_random_mdp(4, 2, 5)
    pi = np.random.default_rng(5).dirichlet(np.ones(2), size=4)
    assert np.max(np.abs(exact_occupancy(mdp, pi) - mc_occupancy(mdp, pi, 200_000, 0))) < 0.01
