import logging
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fpg.core_math import RngStream
from fpg.turntable import (
    ACTION_PENALTY,
    EnvConfig,
    Turntable,
    TurntableState,
    optimal_action,
    reset,
    reward,
    step,
    transition,
    wrap,
)

angles = st.floats(-math.pi, math.pi).filter(lambda v: v > -math.pi)


def test_reset_deterministic_and_uniform():
    cfg = EnvConfig()
    a, b = reset(cfg, RngStream(3)), reset(cfg, RngStream(3))
    assert a == b
    rng = RngStream(4)
    draws = np.array([[s.angle, s.target] for s in (reset(cfg, rng) for _ in range(10_000))])
    assert abs(draws[:, 0].mean()) < 0.05
    assert np.all(draws > -math.pi) and np.all(draws <= math.pi)


def test_reset_differs_across_seeds():
    cfg = EnvConfig()
    assert all(reset(cfg, RngStream(s)) != reset(cfg, RngStream(s + 1000)) for s in range(100))


def test_zero_action_reward():
    s = TurntableState(0.4, -1.1)
    nxt, r = step(s, 0.0)
    assert nxt == s
    assert r == math.sin(0.4 - 1.1)


def test_reachable_sine_maximum():
    s = TurntableState(0.3, 0.5)
    a = wrap(math.pi / 2 - 0.3 - 0.5)
    _, r = step(s, a)
    assert math.isclose(r, 1 - ACTION_PENALTY * abs(a), rel_tol=1e-14)


def test_optimal_action_at_zero_offset():
    a = optimal_action(0.0)
    assert abs(a - math.acos(0.25)) < 2 * math.pi / 4000
    assert abs(math.cos(a) - 0.25) < 2e-3


def test_optimal_action_vectorised():
    offs = np.array([0.0, 1.5, -2.0])
    assert np.array_equal(optimal_action(offs), [optimal_action(o) for o in offs])
    assert optimal_action(1.5) == 0.0  # inside the no-move band


def test_clipping_logged(caplog):
    env = Turntable(EnvConfig(episode_length=3), RngStream(0))
    env.reset()
    with caplog.at_level(logging.DEBUG, logger="fpg.turntable"):
        _, _, done = env.step(5.0)
    assert env.last_action == math.pi
    assert env.clip_events == 1
    assert "clipping" in caplog.text
    assert not done


def test_episode_end_and_target_constancy():
    env = Turntable(EnvConfig(episode_length=4), RngStream(1))
    s0 = env.reset()
    rng = RngStream(2)
    for t in range(4):
        s, _, done = env.step(float(rng.uniform(-3, 3)))
        assert s.target == s0.target
        assert done == (t == 3)


def test_errors():
    with pytest.raises(ValueError):
        transition(TurntableState(0.0, 0.0), float("nan"))
    with pytest.raises(ValueError):
        TurntableState(4.0, 0.0)
    with pytest.raises(ValueError):
        EnvConfig(episode_length=0)
    with pytest.raises(RuntimeError):
        Turntable().step(0.1)


def test_wrap_many_compositions():
    rng = RngStream(11)
    x = wrap(rng.uniform(-math.pi, math.pi, 1_000_000))
    for _ in range(5):
        x = wrap(x + rng.uniform(-math.pi, math.pi, x.size))
        assert np.all(x > -math.pi) and np.all(x <= math.pi)
    assert wrap(-math.pi) == math.pi


@given(angles, angles, st.floats(-10, 10))
def test_reward_bounded(angle, target, a):
    _, r = step(TurntableState(angle, target), a)
    assert -1 - math.pi / 4 <= r <= 1


@given(angles, angles, st.floats(-math.pi, math.pi))
def test_reward_matches_helper(angle, target, a):
    s = TurntableState(angle, target)
    _, r = step(s, a)
    assert math.isclose(r, float(reward(s.offset, a)), abs_tol=1e-12)
