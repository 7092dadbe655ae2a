"""Single-sample policy-gradient estimators of order 0, 1 and 2.

The order is the number of action derivatives taken of the critic:

* 0 -- score function: needs only ``Q(a)``
* 1 -- reparameterisation: needs ``grad_a Q``
* 2 -- Hessian: needs ``hess_a Q``; only a scale estimate exists

All three estimate the same integrals as :mod:`fpg.analytic` when ``a`` is
drawn from the policy.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analytic import GradientUpdate
from .core_math import DimensionError, RngStream
from .critic import HybridCritic
from .policy import GaussianPolicy

ORDERS = (0, 1, 2)


def _check_order(order: int) -> int:
    if order not in ORDERS:
        raise ValueError(f"estimator order must be one of {ORDERS}, got {order!r}")
    return int(order)


def spg_batch(order: int, critic: HybridCritic, policy: GaussianPolicy, actions):
    """Vectorised estimates for actions shaped ``(N, n)``.

    Returns ``(q, grad_mean, grad_scale)`` with shapes ``(N,)``, ``(N, n)`` and
    ``(N, n, n)``; ``grad_mean`` is ``None`` at order 2.
    """
    order = _check_order(order)
    if critic.dim != policy.dim:
        raise DimensionError("critic and policy disagree on action dimension")
    a = np.asarray(actions, float).reshape(-1, policy.dim)
    L = policy.scale.lower
    q = np.asarray(critic.eval(a), float).reshape(-1)
    if order == 0:
        # grad_a beta = -score * beta, hess_a beta = score_hessian * beta
        score = policy.score(a)
        gm = score * q[:, None]
        gs = np.matmul(L, policy.score_hessian(a)) * q[:, None, None]
    elif order == 1:
        g = np.asarray(critic.grad_a(a), float).reshape(a.shape)
        gm = g
        z = policy.scale.solve_lower_t((a - policy.mean).T).T  # L^{-T}(a - mu)
        gs = z[:, :, None] * g[:, None, :]
    else:
        gm = None
        gs = np.matmul(L, critic.hessian_a(a))
    return q, gm, gs


def spg_update(order: int, critic: HybridCritic, policy: GaussianPolicy, a) -> GradientUpdate:
    a = np.asarray(a, float).reshape(1, policy.dim)
    q, gm, gs = spg_batch(order, critic, policy, a)
    return GradientUpdate(
        expectation=float(q[0]),
        grad_mean=None if gm is None else gm[0],
        grad_cov=None,
        grad_scale=gs[0],
    )


def spg_mean_order2_fallback(critic, policy, a) -> np.ndarray:
    """Order 2 has no mean estimator; the order-1 mean is used alongside it."""
    return spg_update(1, critic, policy, a).grad_mean


@dataclass(frozen=True)
class VarianceRow:
    order: int
    coordinate: str
    mean: float
    variance: float
    n: int


def coordinate_names(n: int, order: int) -> list[str]:
    names = [] if order == 2 else [f"mean[{i}]" for i in range(n)]
    return names + [f"scale[{i},{j}]" for i in range(n) for j in range(n)]


def flatten_estimates(gm, gs) -> np.ndarray:
    parts = [] if gm is None else [gm]
    parts.append(gs.reshape(gs.shape[0], -1))
    return np.concatenate(parts, axis=1)


def estimator_variance(
    order: int,
    critic: HybridCritic,
    policy: GaussianPolicy,
    n_samples: int,
    rng: RngStream,
    chunk: int = 200_000,
) -> list[VarianceRow]:
    """Empirical mean and (unbiased) variance of every estimate coordinate."""
    if n_samples < 2:
        raise ValueError("need at least two samples")
    order = _check_order(order)
    count = 0
    # chunked Welford-style accumulation keeps memory flat at 1e6+ samples
    mean = m2 = shift = None
    remaining = n_samples
    while remaining > 0:
        k = min(chunk, remaining)
        a = policy.sample(rng, k)
        _, gm, gs = spg_batch(order, critic, policy, a)
        x = flatten_estimates(gm, gs)
        if shift is None:
            shift = x[0].copy()  # constant estimators then give exactly zero variance
        x = x - shift
        bmean = x.mean(axis=0)
        bm2 = ((x - bmean) ** 2).sum(axis=0)
        if mean is None:
            mean, m2, count = bmean, bm2, k
        else:
            tot = count + k
            delta = bmean - mean
            mean = mean + delta * (k / tot)
            m2 = m2 + bm2 + delta**2 * (count * k / tot)
            count = tot
        remaining -= k
    var = m2 / (count - 1)
    mean = mean + shift
    names = coordinate_names(policy.dim, order)
    return [VarianceRow(order, nm, float(mu), float(v), count) for nm, mu, v in zip(names, mean, var)]
