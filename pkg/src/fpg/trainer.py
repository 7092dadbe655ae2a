"""Actor-critic training on the turntable.

The per-state policy gradient is either the analytic expected gradient or a
single-sample estimate of order 0/1/2. Either way it is pushed through a
linear policy head by the chain rule, discounted by ``gamma**t`` within the
episode and applied by SGD. The critic's linear coefficients follow SARSA.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable

import numpy as np

from .analytic import GradientUpdate, hybrid_gradient
from .core_math import RngStream, SpdFactor
from .critic import AbsAtom, HybridCritic, TrigAtom, sarsa_update
from .estimators import spg_update
from .policy import GaussianPolicy
from .turntable import EnvConfig, Turntable, TurntableState, optimal_action

log = logging.getLogger(__name__)

METHODS = ("epg-analytic", "spg-m0", "spg-m1", "spg-m2")
OPTIMIZERS = ("sgd", "sgd-momentum")
CRITIC_INITS = ("prior", "zero", "oracle")
CURVE_HEADER = ("step", "episode", "return", "mean_action_error", "grad_norm")
DIVERGENCE_LIMIT = 1e6


class DivergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    method: str = "epg-analytic"
    steps: int = 20_000
    gamma: float = 0.9
    actor_lr: float = 0.002
    critic_lr: float = 0.1
    seed: int = 0
    optimizer: str = "sgd"
    momentum: float = 0.9
    sigma: float = 0.05
    critic_init: str = "prior"
    actor_uses_abs_term: bool = True
    learn_scale: bool = False
    learn_critic: bool = True

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
        if self.critic_init not in CRITIC_INITS:
            raise ValueError(f"critic_init must be one of {CRITIC_INITS}")
        if self.steps < 1:
            raise ValueError("steps must be at least 1")
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")
        # actor_lr = 0 freezes the actor, which is a legitimate control run
        if self.actor_lr < 0 or not self.critic_lr > 0:
            raise ValueError("learning rates must be positive (actor_lr may be 0)")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.method == "spg-m2" and self.learn_scale and self.actor_uses_abs_term:
            raise ValueError("spg-m2 scale estimates need a Hessian; set actor_uses_abs_term=false")


def features(state: TurntableState) -> np.ndarray:
    x = state.offset
    return np.array([math.sin(x), math.cos(x), 1.0])


N_FEATURES = 3


@dataclass
class LinearPolicyHead:
    """``mean = weights @ phi``; scale fixed at ``sigma`` or ``exp(scale_weights @ phi)``."""

    weights: np.ndarray
    sigma: float = 0.05
    scale_weights: np.ndarray | None = None

    @classmethod
    def zeros(cls, n_actions: int = 1, n_features: int = N_FEATURES, sigma=0.05, learn_scale=False):
        sw = np.full((n_actions, n_features), 0.0) if learn_scale else None
        if sw is not None:
            sw[:, -1] = math.log(sigma)  # bias feature carries the initial log-scale
        return cls(np.zeros((n_actions, n_features)), sigma, sw)

    @property
    def learn_scale(self) -> bool:
        return self.scale_weights is not None

    def stds(self, phi) -> np.ndarray:
        if self.scale_weights is None:
            return np.full(self.weights.shape[0], self.sigma)
        return np.exp(self.scale_weights @ phi)

    def mean(self, phi) -> np.ndarray:
        return self.weights @ phi

    def policy(self, phi) -> GaussianPolicy:
        return GaussianPolicy(self.mean(phi), SpdFactor(np.diag(self.stds(phi))))


def chain_rule_update(head: LinearPolicyHead, phi, inner: GradientUpdate):
    """Weight gradients of ``E`` through the head.

    Returns ``(d_weights, d_scale_weights)``; the second is ``None`` for a
    fixed scale. The scale path uses only the diagonal of ``I_{Sigma^1/2}``
    because the head's scale factor is diagonal.
    """
    phi = np.asarray(phi, float)
    if inner.grad_mean is None:
        raise ValueError("update carries no mean gradient")
    gm = np.asarray(inner.grad_mean, float)
    if gm.size != head.weights.shape[0] or phi.size != head.weights.shape[1]:
        raise ValueError("gradient or features do not match the head's shape")
    d_w = np.outer(gm, phi)
    if not head.learn_scale:
        return d_w, None
    if inner.grad_scale is None:
        raise ValueError("learnable scale needs a scale gradient")
    stds = head.stds(phi)
    d_v = np.outer(np.diag(inner.grad_scale) * stds, phi)
    return d_w, d_v


def turntable_critic(init: str = "prior") -> HybridCritic:
    """``c sin(offset + a) + w |a|`` with the trig phase set per state.

    At phase shift ``-offset`` the trig atom ``cos(a - pi/2)`` becomes
    ``sin(a + offset)``.
    """
    # "oracle" is the one-step reward itself, the exact critic at gamma = 0
    coeffs = {"prior": (0.5, -0.25), "zero": (0.0, 0.0), "oracle": (1.0, -0.25)}[init]
    return HybridCritic((TrigAtom([1.0], math.pi / 2), AbsAtom()), coeffs)


def state_phase(state: TurntableState) -> float:
    return -state.offset


@dataclass
class LearningCurve:
    rows: list = field(default_factory=list)

    def append(self, step, episode, ret, err, gnorm):
        if self.rows and step <= self.rows[-1][0]:
            raise ValueError("learning-curve steps must increase strictly")
        self.rows.append((int(step), int(episode), float(ret), float(err), float(gnorm)))

    def column(self, name: str) -> np.ndarray:
        return np.array([r[CURVE_HEADER.index(name)] for r in self.rows])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CURVE_HEADER)
        for s, e, ret, err, g in self.rows:
            w.writerow([s, e, repr(ret), repr(err), repr(g)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "LearningCurve":
        reader = csv.reader(io.StringIO(text))
        header = tuple(next(reader))
        if header != CURVE_HEADER:
            raise ValueError(f"unexpected header {header}")
        curve = cls()
        for row in reader:
            curve.append(int(row[0]), int(row[1]), float(row[2]), float(row[3]), float(row[4]))
        return curve


class _Optimizer:
    def __init__(self, cfg: TrainConfig):
        self.lr = cfg.actor_lr
        self.beta = cfg.momentum if cfg.optimizer == "sgd-momentum" else 0.0
        self.velocity = {}

    def update(self, key: str, g: np.ndarray) -> np.ndarray:
        if self.beta:
            v = self.beta * self.velocity.get(key, 0.0) + g
            self.velocity[key] = v
            g = v
        return self.lr * g  # ascent step


def _without_abs(critic: HybridCritic) -> HybridCritic:
    keep = [i for i, atom in enumerate(critic.atoms) if not isinstance(atom, AbsAtom)]
    return HybridCritic(tuple(critic.atoms[i] for i in keep), critic.coeffs[keep])


def per_state_gradient(
    cfg: TrainConfig, critic: HybridCritic, policy: GaussianPolicy, rng: RngStream
) -> GradientUpdate:
    if cfg.method == "epg-analytic":
        upd, _ = hybrid_gradient(critic, policy)
        return upd
    a = policy.sample(rng)
    if cfg.method == "spg-m0":
        return spg_update(0, critic, policy, a)
    if cfg.method == "spg-m1":
        return spg_update(1, critic, policy, a)
    # order 2 has no mean estimator: order-1 mean alongside the order-2 scale
    mean = spg_update(1, critic, policy, a)
    scale = spg_update(2, critic, policy, a).grad_scale if cfg.learn_scale else None
    return GradientUpdate(mean.expectation, mean.grad_mean, None, scale)


def run(env_config: EnvConfig, cfg: TrainConfig, critic: HybridCritic | None = None) -> LearningCurve:
    """Train for ``cfg.steps`` environment steps; one curve row per finished episode."""
    root = RngStream(cfg.seed)
    env_rng, act_rng, est_rng = root.spawn(3)
    env = Turntable(env_config, env_rng)
    head = LinearPolicyHead.zeros(sigma=cfg.sigma, learn_scale=cfg.learn_scale)
    critic = critic or turntable_critic(cfg.critic_init)
    opt = _Optimizer(cfg)
    curve = LearningCurve()

    state = env.reset()
    t = 0
    episode = 0
    ep_return, ep_offsets, ep_means, ep_gnorms = 0.0, [], [], []
    pow_gamma = 1.0
    for step in range(1, cfg.steps + 1):
        phi = features(state)
        policy = head.policy(phi)
        here = critic.with_phase_shift(state_phase(state))
        actor_critic = here if cfg.actor_uses_abs_term else _without_abs(here)
        inner = per_state_gradient(cfg, actor_critic, policy, est_rng)
        d_w, d_v = chain_rule_update(head, phi, inner)
        d_w = pow_gamma * d_w
        gnorm = float(np.linalg.norm(d_w))
        if d_v is not None:
            d_v = pow_gamma * d_v
            gnorm = math.hypot(gnorm, float(np.linalg.norm(d_v)))
        if not math.isfinite(gnorm) or gnorm > DIVERGENCE_LIMIT:
            raise DivergenceError(
                f"gradient norm {gnorm:.3e} at step {step} (episode {episode}, t={t}); "
                f"weights={head.weights.tolist()} critic={critic.coeffs.tolist()}"
            )
        head.weights = head.weights + opt.update("w", d_w)
        if d_v is not None:
            head.scale_weights = head.scale_weights + opt.update("v", d_v)

        policy = head.policy(phi)
        a = float(policy.sample(act_rng)[0])
        nxt, r, done = env.step(a)
        a_next = float(np.clip(head.policy(features(nxt)).sample(act_rng)[0], -math.pi, math.pi))
        # the critic learns on executed (clipped) actions
        if cfg.learn_critic:
            critic = sarsa_update(
                critic,
                state_phase(state),
                [env.last_action],
                r,
                [a_next],
                state_phase(nxt),
                cfg.critic_lr,
                cfg.gamma,
            )

        ep_return += r
        ep_offsets.append(state.offset)
        ep_means.append(float(policy.mean[0]))
        ep_gnorms.append(gnorm)
        state = nxt
        t += 1
        pow_gamma *= cfg.gamma
        if done:
            err = float(np.mean(np.abs(np.array(ep_means) - optimal_action(np.array(ep_offsets)))))
            curve.append(step, episode, ep_return, err, float(np.mean(ep_gnorms)))
            episode += 1
            state = env.reset()
            t = 0
            pow_gamma = 1.0
            ep_return, ep_offsets, ep_means, ep_gnorms = 0.0, [], [], []
    return curve


def steps_to_threshold(curves: Iterable[LearningCurve], threshold: float) -> float:
    """First logged step at which the across-seed median error drops below ``threshold``.

    Returns ``inf`` if it never does. Curves must share their logging steps.
    """
    curves = list(curves)
    steps = curves[0].column("step")
    errs = np.array([c.column("mean_action_error") for c in curves])
    for c in curves[1:]:
        if not np.array_equal(c.column("step"), steps):
            raise ValueError("curves were logged at different steps")
    med = np.median(errs, axis=0)
    hit = np.nonzero(med < threshold)[0]
    return float(steps[hit[0]]) if hit.size else math.inf


def config_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)
