"""Closed-form Gaussian expectations of critic atoms and their policy gradients.

For a Gaussian policy ``N(mu, Sigma)`` with ``Sigma = L^T L`` every atom family
has a closed-form expected value ``E``. The gradients returned here are

* ``grad_mean``  -- dE/dmu
* ``grad_cov``   -- dE/dSigma, a symmetric matrix
* ``grad_scale`` -- dE/dL = 2 L dE/dSigma

Hybrid critics and mixture policies compose these by linearity.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core_math import DimensionError, SpdFactor, std_normal_cdf
from .critic import AbsAtom, HybridCritic, QuadricAtom, RbfAtom, TrigAtom
from .policy import DiracPolicy, GaussianPolicy, MixturePolicy

_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True, eq=False)
class GradientUpdate:
    expectation: float
    grad_mean: np.ndarray | None
    grad_cov: np.ndarray | None = None
    grad_scale: np.ndarray | None = None

    def scaled(self, c: float) -> "GradientUpdate":
        def mul(x):
            return None if x is None else c * x

        return GradientUpdate(
            c * self.expectation, mul(self.grad_mean), mul(self.grad_cov), mul(self.grad_scale)
        )


@dataclass(frozen=True, eq=False)
class MixtureGradientUpdate:
    per_component: list
    weight_grads: np.ndarray
    weights: np.ndarray = field(default=None)

    @property
    def expectation(self) -> float:
        return float(np.dot(self.weights, self.weight_grads))


def _check(atom, policy: GaussianPolicy):
    if atom.dim != policy.dim:
        raise DimensionError(f"atom is {atom.dim}-dimensional, policy {policy.dim}-dimensional")
    if isinstance(atom, AbsAtom) and policy.dim != 1:
        raise DimensionError("|a| atom requires a one-dimensional action space")


def _abs_moments(policy: GaussianPolicy):
    mu = float(policy.mean[0])
    sigma = float(policy.scale.lower[0, 0])
    t = mu / sigma
    gauss = math.exp(-0.5 * t * t)
    return mu, sigma, t, gauss


def _rbf_parts(atom: RbfAtom, policy: GaussianPolicy):
    total = SpdFactor.from_matrix(policy.cov + atom.shape.matrix())
    d = policy.mean - atom.loc
    w = total.solve(d)
    e = math.exp(-0.5 * (policy.dim * math.log(2 * math.pi) + total.logdet() + float(d @ w)))
    return total, d, w, e


def atom_expectation(atom, policy: GaussianPolicy) -> float:
    _check(atom, policy)
    if isinstance(atom, TrigAtom):
        lf = policy.scale.lower @ atom.freq
        return math.exp(-0.5 * float(lf @ lf)) * math.cos(float(atom.freq @ policy.mean) - atom.phase)
    if isinstance(atom, RbfAtom):
        return _rbf_parts(atom, policy)[3]
    if isinstance(atom, QuadricAtom):
        d = policy.mean - atom.center
        H = atom.h_matrix
        return float(
            np.sum(H * policy.cov) + d @ H @ d + atom.linear @ policy.mean + atom.offset
        )
    if isinstance(atom, AbsAtom):
        mu, sigma, t, gauss = _abs_moments(policy)
        # folded-normal mean
        return sigma * _SQRT_2_OVER_PI * gauss + mu * (1.0 - 2.0 * std_normal_cdf(-t))
    raise TypeError(f"unknown atom type {type(atom).__name__}")


def atom_grad_mean(atom, policy: GaussianPolicy) -> np.ndarray:
    _check(atom, policy)
    if isinstance(atom, TrigAtom):
        lf = policy.scale.lower @ atom.freq
        damp = math.exp(-0.5 * float(lf @ lf))
        return -damp * math.sin(float(atom.freq @ policy.mean) - atom.phase) * atom.freq
    if isinstance(atom, RbfAtom):
        _, _, w, e = _rbf_parts(atom, policy)
        return -e * w
    if isinstance(atom, QuadricAtom):
        return 2.0 * (atom.h_matrix @ (policy.mean - atom.center)) + atom.linear
    if isinstance(atom, AbsAtom):
        _, _, t, _ = _abs_moments(policy)
        return np.array([1.0 - 2.0 * std_normal_cdf(-t)])
    raise TypeError(f"unknown atom type {type(atom).__name__}")


def atom_grad_cov(atom, policy: GaussianPolicy) -> np.ndarray:
    _check(atom, policy)
    if isinstance(atom, TrigAtom):
        return -0.5 * atom_expectation(atom, policy) * np.outer(atom.freq, atom.freq)
    if isinstance(atom, RbfAtom):
        total, _, w, e = _rbf_parts(atom, policy)
        # log det(2 pi (Sigma + S)) term, not log det(2 pi Sigma)
        return 0.5 * e * (np.outer(w, w) - total.inverse())
    if isinstance(atom, QuadricAtom):
        return atom.h_matrix.copy()
    if isinstance(atom, AbsAtom):
        _, sigma, _, gauss = _abs_moments(policy)
        return np.array([[gauss * _INV_SQRT_2PI / sigma]])
    raise TypeError(f"unknown atom type {type(atom).__name__}")


def atom_grad_scale(atom, policy: GaussianPolicy) -> np.ndarray:
    return scale_from_cov_grad(policy, atom_grad_cov(atom, policy))


def scale_from_cov_grad(policy: GaussianPolicy, grad_cov: np.ndarray) -> np.ndarray:
    """Chain rule through ``Sigma = L^T L``: dE/dL = 2 L dE/dSigma."""
    return 2.0 * (policy.scale.lower @ grad_cov)


def atom_update(atom, policy: GaussianPolicy) -> GradientUpdate:
    gc = atom_grad_cov(atom, policy)
    return GradientUpdate(
        atom_expectation(atom, policy),
        atom_grad_mean(atom, policy),
        gc,
        scale_from_cov_grad(policy, gc),
    )


def hybrid_gradient(critic: HybridCritic, policy: GaussianPolicy):
    """Coefficient-weighted sum of per-atom updates.

    Returns ``(update, coeff_grads)`` where ``coeff_grads[i]`` is atom i's
    expected value, i.e. the derivative of ``E`` with respect to ``coeffs[i]``.
    """
    if critic.dim != policy.dim:
        raise DimensionError(f"critic is {critic.dim}-dimensional, policy {policy.dim}-dimensional")
    n = policy.dim
    e = 0.0
    gm = np.zeros(n)
    gc = np.zeros((n, n))
    coeff_grads = np.empty(len(critic.atoms))
    for i, (c, atom) in enumerate(zip(critic.coeffs, critic.atoms)):
        ei = atom_expectation(atom, policy)
        coeff_grads[i] = ei
        e += c * ei
        gm = gm + c * atom_grad_mean(atom, policy)
        gc = gc + c * atom_grad_cov(atom, policy)
    return GradientUpdate(e, gm, gc, scale_from_cov_grad(policy, gc)), coeff_grads


def dirac_update(critic: HybridCritic, policy: DiracPolicy) -> GradientUpdate:
    """Point evaluation: E = Q(loc), dE/dloc = grad_a Q(loc)."""
    loc = policy.location
    return GradientUpdate(critic.eval(loc), np.asarray(critic.grad_a(loc), float))


def mixture_gradient(critic: HybridCritic, policy: MixturePolicy) -> MixtureGradientUpdate:
    """Per-component updates and the weight derivatives ``E_i``.

    The caller combines them as ``sum_i w_i {I}_i + (d w_i / d theta) E_i``.
    """
    per, eis = [], []
    for _, comp in policy.components:
        if isinstance(comp, GaussianPolicy):
            upd, _ = hybrid_gradient(critic, comp)
        else:
            upd = dirac_update(critic, comp)
        per.append(upd)
        eis.append(upd.expectation)
    return MixtureGradientUpdate(per, np.array(eis), policy.weights)


def rbf_natural_grad_mean(atom: RbfAtom, policy: GaussianPolicy) -> np.ndarray:
    """Natural-gradient direction ``-1/2 (S Sigma^{-1} + I)^{-1} (mu - l)``.

    The positive factor ``E`` is left out; it rescales but does not rotate.
    """
    _check(atom, policy)
    S = atom.shape.matrix()
    # S Sigma^{-1} = (Sigma^{-1} S)^T since both are symmetric
    s_sig_inv = policy.scale.solve(S).T
    return -0.5 * np.linalg.solve(s_sig_inv + np.eye(policy.dim), policy.mean - atom.loc)


def softmax(logits) -> np.ndarray:
    z = np.asarray(logits, float)
    z = np.exp(z - z.max())
    return z / z.sum()


def softmax_weight_gradient(logits, weight_grads) -> np.ndarray:
    """Gradient of ``sum_i softmax(logits)_i E_i`` with respect to the logits."""
    p = softmax(logits)
    e = np.asarray(weight_grads, float)
    return p * (e - p @ e)
