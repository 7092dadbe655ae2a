"""Turntable: rotate a disk so that its angle plus the target angle hits pi/2.

Transition ``angle' = wrap(angle + a)``; the reward reads the post-action
angle, ``sin(angle' + target) - |a| / 4``. Actions are clipped to
``[-pi, pi]`` here and nowhere else.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .core_math import RngStream

log = logging.getLogger(__name__)

ACTION_PENALTY = 0.25
ACTION_LIMIT = math.pi


def wrap(x):
    """Map angles to ``(-pi, pi]``."""
    x = np.asarray(x, float)
    # identity inside the range so wrapped angles are not perturbed by rounding
    out = np.where((x > -math.pi) & (x <= math.pi), x, math.pi - np.mod(math.pi - x, 2 * math.pi))
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class TurntableState:
    angle: float
    target: float

    def __post_init__(self):
        for name in ("angle", "target"):
            v = getattr(self, name)
            if not (-math.pi < v <= math.pi):
                raise ValueError(f"{name}={v} lies outside (-pi, pi]")

    @property
    def offset(self) -> float:
        """``angle + target``: the only quantity reward and optimum depend on."""
        return self.angle + self.target


@dataclass(frozen=True)
class EnvConfig:
    episode_length: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.episode_length < 1:
            raise ValueError("episode_length must be at least 1")


def reward(offset, a):
    """Reward from the pre-action offset and the executed action (broadcasts)."""
    a = np.asarray(a, float)
    return np.sin(offset + a) - ACTION_PENALTY * np.abs(a)


def optimal_action(offset, resolution: int = 4001) -> np.ndarray:
    """One-step reward maximiser by grid search over ``[-pi, pi]``.

    Vectorised over ``offset``. Grid spacing is ``2 pi / (resolution - 1)``.
    """
    grid = np.linspace(-ACTION_LIMIT, ACTION_LIMIT, resolution)
    off = np.atleast_1d(np.asarray(offset, float))
    vals = reward(off[:, None], grid[None, :])
    best = grid[np.argmax(vals, axis=1)]
    return best if np.ndim(offset) else best[0]


def reset(config: EnvConfig, rng: RngStream) -> TurntableState:
    # uniform on [-pi, pi) mapped into (-pi, pi]
    angle, target = wrap(rng.uniform(-math.pi, math.pi, size=2))
    return TurntableState(float(angle), float(target))


def transition(state: TurntableState, a: float):
    """Returns ``(next_state, reward, executed_action)``."""
    a = float(a)
    if not math.isfinite(a):
        raise ValueError("action must be finite")
    if abs(a) > ACTION_LIMIT:
        log.debug("clipping action %.4f to [-pi, pi]", a)
        a = max(-ACTION_LIMIT, min(ACTION_LIMIT, a))
    nxt = TurntableState(wrap(state.angle + a), state.target)
    r = math.sin(nxt.angle + state.target) - ACTION_PENALTY * abs(a)
    return nxt, r, a


class Turntable:
    """Episodic wrapper: counts steps and reports ``done``."""

    def __init__(self, config: EnvConfig | None = None, rng: RngStream | None = None):
        self.config = config or EnvConfig()
        self.rng = rng or RngStream(self.config.seed)
        self.state: TurntableState | None = None
        self.t = 0
        self.clip_events = 0
        self.last_action = None

    def reset(self) -> TurntableState:
        self.state = reset(self.config, self.rng)
        self.t = 0
        return self.state

    def step(self, a: float):
        """Returns ``(next_state, reward, done)``; the clipped action is kept in ``last_action``."""
        if self.state is None:
            raise RuntimeError("call reset() before step()")
        if abs(float(a)) > ACTION_LIMIT:
            self.clip_events += 1
        nxt, r, executed = transition(self.state, a)
        self.state = nxt
        self.last_action = executed
        self.t += 1
        return nxt, r, self.t >= self.config.episode_length


def step(state: TurntableState, a: float):
    nxt, r, _ = transition(state, a)
    return nxt, r
