import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pushlab.env import (
    GOAL_SLICE,
    OBS_DIM,
    Action,
    EnvConfig,
    EpisodeConfig,
    EpisodeOverError,
    PushEnv,
    compute_rewards,
    normalize_action,
    rescale_action,
    reward,
    success,
)
from pushlab.physics2d import PhysParams, ShapeSpec

finite = st.floats(-1.0, 1.0, allow_nan=False)


def test_reward_examples():
    assert reward((0, 0), (0, 0)) == 0.0
    assert reward((0.0099, 0.0), (0.0, 0.0)) == 0.0
    assert reward((0.01, 0.0), (0.0, 0.0)) == -1.0
    assert reward((0.3, 0.4), (0.0, 0.0)) == -1.0


@given(finite, finite, finite, finite)
def test_reward_symmetric_and_matches_vectorized(a, b, c, d):
    r = reward((a, b), (c, d))
    assert r == reward((c, d), (a, b))
    assert r == compute_rewards(np.array([a, b]), np.array([c, d]))
    assert reward((a, b), (a, b)) == 0.0


def test_success_is_strict():
    assert success(0.005)
    assert not success(0.01)


def test_rescale_bounds():
    hi = rescale_action([1, 1, 1])
    lo = rescale_action([-1, -1, -1])
    assert (hi.a_x, hi.a_y, hi.a_s) == (1.0, 1.0, 600)
    assert (lo.a_x, lo.a_y, lo.a_s) == (-1.0, -1.0, 10)
    assert rescale_action([0, 0, 0]).a_s == 305


@given(finite, finite, finite)
def test_rescale_invertible(u0, u1, u2):
    a = rescale_action([u0, u1, u2])
    assert isinstance(a.a_s, int) and 10 <= a.a_s <= 600
    back = normalize_action(a)
    assert back[:2] == pytest.approx([u0, u1], abs=0)
    assert abs(back[2] - u2) <= 0.5 / 295 + 1e-12


def test_action_validation():
    with pytest.raises(ValueError):
        Action(1.5, 0.0, 100)
    with pytest.raises(ValueError):
        Action(0.0, 0.0, 5)


def test_config_validation():
    with pytest.raises(ValueError):
        EnvConfig(observation="pixels")
    with pytest.raises(ValueError):
        EnvConfig(sampler="gaussian")
    with pytest.raises(ValueError):
        PushEnv(EnvConfig(observation="encoder"))


def test_reset_deterministic():
    a, b = PushEnv(seed=3), PushEnv(seed=3)
    assert np.array_equal(a.reset(), b.reset())
    assert a.episode == b.episode
    assert np.array_equal(a.reset(seed=9), b.reset(seed=9))


def test_reset_poses_valid():
    env = PushEnv(seed=0)
    x0, y0, x1, y1 = env.config.table_bounds
    thetas = []
    for _ in range(1000):
        obs = env.reset()
        ep = env.episode
        assert obs.shape == (OBS_DIM,)
        assert math.dist(ep.start_pose[:2], ep.goal_pose[:2]) >= 0.05
        for p in (ep.start_pose, ep.goal_pose, ep.ee_start):
            assert x0 <= p[0] <= x1 and y0 <= p[1] <= y1
        thetas.append(ep.goal_pose[2])
    assert -math.pi <= min(thetas) and max(thetas) <= math.pi
    assert min(thetas) < -3.0 and max(thetas) > 3.0


def test_episode_protocol():
    env = PushEnv(seed=1)
    obs = env.reset()
    goal = obs[GOAL_SLICE].copy()
    rng = np.random.default_rng(0)
    for t in range(1, 51):
        obs, r, truncated, info = env.step(rescale_action(rng.uniform(-1, 1, 3)))
        assert truncated == (t == 50)
        assert np.array_equal(obs[GOAL_SLICE], goal)
        assert r == reward(info["p_o"], info["p_g"])
        assert info["success"] == (info["distance"] < 0.01)
    with pytest.raises(EpisodeOverError):
        env.step(Action(0.0, 0.0, 10))


def test_noop_step_far_from_object():
    env = PushEnv()
    ep = EpisodeConfig(ShapeSpec.disc(0.05), PhysParams(0.5, 0.5, 0.005), (0.1, 0.1, 0.0), (-0.1, -0.1, 0.0),
                       (-0.18, 0.18))
    env.reset(episode=ep)
    total = 0.0
    for _ in range(50):
        obs, r, _, info = env.step(Action(0.0, 0.0, 10))
        total += r
        assert np.array_equal(info["p_o"], [0.1, 0.1])
    assert total == -50.0


def test_push_toward_goal_can_succeed():
    # start to the left of the goal, pusher behind the object on the push line
    env = PushEnv()
    ep = EpisodeConfig(ShapeSpec.disc(0.045), PhysParams(0.8, 0.9, 0.005), (-0.05, 0.0, 0.0), (0.03, 0.0, 0.0),
                       (-0.12, 0.0))
    env.reset(episode=ep)
    best = math.inf
    for _ in range(50):
        ee = env.pusher_state.pos
        gap = 0.03 - env.object_state.pose[0]
        target_x = env.object_state.pose[0] - 0.045 - 0.005 + max(gap, 0.0)
        _, _, _, info = env.step(Action(float(np.clip(target_x - ee[0], -1, 1)), 0.0, 200))
        best = min(best, info["distance"])
    assert best < 0.01
