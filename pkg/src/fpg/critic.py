"""Critic atoms over the action space and their linear combinations.

All evaluation routines accept actions shaped ``(..., n)`` and broadcast over
the leading axes, so a batch of Monte Carlo draws is evaluated in one call.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence, Union

import numpy as np
from scipy import integrate

from .core_math import DimensionError, SpdFactor, as_matrix, as_vector, gaussian_logpdf


class UnsupportedAtomError(ValueError):
    """The requested derivative does not exist for this atom."""


class NonDifferentiablePointError(ValueError):
    pass


def _points(a, n: int) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1)
    if a.shape[-1] != n:
        raise DimensionError(f"action has trailing dimension {a.shape[-1]}, critic expects {n}")
    return a


def _frozen(x: np.ndarray) -> np.ndarray:
    x = np.array(x, dtype=float)
    x.setflags(write=False)
    return x


@dataclass(frozen=True, eq=False)
class TrigAtom:
    """``cos(freq . a - phase)``."""

    freq: np.ndarray
    phase: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "freq", _frozen(as_vector(self.freq, "freq")))
        if not math.isfinite(self.phase):
            raise ValueError("phase must be finite")
        object.__setattr__(self, "phase", float(self.phase))

    @property
    def dim(self) -> int:
        return self.freq.size

    def _arg(self, a):
        return _points(a, self.dim) @ self.freq - self.phase

    def value(self, a):
        return np.cos(self._arg(a))

    def grad(self, a):
        return -np.sin(self._arg(a))[..., None] * self.freq

    def hess(self, a):
        return -np.cos(self._arg(a))[..., None, None] * np.outer(self.freq, self.freq)


@dataclass(frozen=True, eq=False)
class RbfAtom:
    """Unnormalised-shape Gaussian bump ``N(a; loc, S)`` with ``S = shape.matrix()``."""

    loc: np.ndarray
    shape: SpdFactor

    def __post_init__(self):
        object.__setattr__(self, "loc", _frozen(as_vector(self.loc, "loc")))
        if not isinstance(self.shape, SpdFactor):
            object.__setattr__(self, "shape", SpdFactor(self.shape))
        if self.shape.dim != self.loc.size:
            raise DimensionError("rbf loc and shape disagree on dimension")

    @property
    def dim(self) -> int:
        return self.loc.size

    def value(self, a):
        return np.exp(gaussian_logpdf(_points(a, self.dim), self.loc, self.shape))

    def _whitened(self, a):
        a = _points(a, self.dim)
        d = (a - self.loc).reshape(-1, self.dim).T
        return self.shape.solve(d).T.reshape(a.shape)

    def grad(self, a):
        a = _points(a, self.dim)
        return -self.value(a)[..., None] * self._whitened(a)

    def hess(self, a):
        a = _points(a, self.dim)
        s = self._whitened(a)
        outer = s[..., :, None] * s[..., None, :]
        return self.value(a)[..., None, None] * (outer - self.shape.inverse())


@dataclass(frozen=True, eq=False)
class QuadricAtom:
    """``(a - center)^T H (a - center) + linear . a + offset``.

    ``linear`` defaults to zero; with ``H = 0`` it gives a plain linear critic.
    """

    h_matrix: np.ndarray
    center: np.ndarray
    offset: float = 0.0
    linear: np.ndarray | None = None

    def __post_init__(self):
        c = as_vector(self.center, "center")
        h = as_matrix(self.h_matrix, c.size, "h_matrix")
        if not np.array_equal(h, h.T):
            raise ValueError("h_matrix must be exactly symmetric")
        lin = np.zeros(c.size) if self.linear is None else as_vector(self.linear, "linear")
        if lin.size != c.size:
            raise DimensionError("linear term has the wrong dimension")
        object.__setattr__(self, "h_matrix", _frozen(h))
        object.__setattr__(self, "center", _frozen(c))
        object.__setattr__(self, "linear", _frozen(lin))
        object.__setattr__(self, "offset", float(self.offset))

    @property
    def dim(self) -> int:
        return self.center.size

    def value(self, a):
        a = _points(a, self.dim)
        d = a - self.center
        return np.einsum("...i,ij,...j->...", d, self.h_matrix, d) + a @ self.linear + self.offset

    def grad(self, a):
        d = _points(a, self.dim) - self.center
        return 2.0 * (d @ self.h_matrix) + self.linear

    def hess(self, a):
        a = _points(a, self.dim)
        return np.broadcast_to(2.0 * self.h_matrix, a.shape[:-1] + (self.dim, self.dim)).copy()


@dataclass(frozen=True, eq=False)
class AbsAtom:
    """``|a|`` on a one-dimensional action space."""

    @property
    def dim(self) -> int:
        return 1

    def value(self, a):
        return np.abs(_points(a, 1)[..., 0])

    def grad(self, a):
        a = _points(a, 1)
        if np.any(a == 0.0):
            raise NonDifferentiablePointError("|a| has no gradient at a = 0")
        return np.sign(a)

    def hess(self, a):
        raise UnsupportedAtomError("the second derivative of |a| is a distribution")


CriticAtom = Union[TrigAtom, RbfAtom, QuadricAtom, AbsAtom]


@dataclass(frozen=True, eq=False)
class HybridCritic:
    """``sum_i coeffs[i] * atoms[i](a)``."""

    atoms: tuple
    coeffs: np.ndarray = field(default=None)

    def __post_init__(self):
        atoms = tuple(self.atoms)
        if not atoms:
            raise ValueError("critic needs at least one atom")
        coeffs = np.ones(len(atoms)) if self.coeffs is None else np.asarray(self.coeffs, float)
        if coeffs.shape != (len(atoms),):
            raise ValueError(f"{len(atoms)} atoms but {coeffs.size} coefficients")
        if not np.all(np.isfinite(coeffs)):
            raise ValueError("critic coefficients must be finite")
        dims = {atom.dim for atom in atoms}
        if len(dims) != 1:
            raise DimensionError(f"atoms disagree on action dimension: {sorted(dims)}")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "coeffs", _frozen(coeffs))

    @classmethod
    def single(cls, atom, coeff: float = 1.0) -> "HybridCritic":
        return cls((atom,), [coeff])

    @property
    def dim(self) -> int:
        return self.atoms[0].dim

    def atom_values(self, a) -> np.ndarray:
        """Per-atom values stacked on the last axis."""
        return np.stack([np.asarray(atom.value(a), float) for atom in self.atoms], axis=-1)

    def eval(self, a):
        out = sum(c * atom.value(a) for c, atom in zip(self.coeffs, self.atoms))
        return float(out) if np.ndim(out) == 0 else out

    def grad_a(self, a):
        return sum(c * atom.grad(a) for c, atom in zip(self.coeffs, self.atoms))

    def hessian_a(self, a):
        for atom in self.atoms:
            if isinstance(atom, AbsAtom):
                raise UnsupportedAtomError("critic contains an |a| atom; no Hessian")
        return sum(c * atom.hess(a) for c, atom in zip(self.coeffs, self.atoms))

    def with_coeffs(self, coeffs) -> "HybridCritic":
        return HybridCritic(self.atoms, coeffs)

    def with_phase_shift(self, shift: float) -> "HybridCritic":
        """Add ``shift`` to every trigonometric phase; other atoms are untouched."""
        if shift == 0:
            return self
        atoms = tuple(
            replace(atom, phase=atom.phase + shift) if isinstance(atom, TrigAtom) else atom
            for atom in self.atoms
        )
        return HybridCritic(atoms, self.coeffs)

    def scaled(self, factor: float) -> "HybridCritic":
        return HybridCritic(self.atoms, factor * self.coeffs)


def eval(critic: HybridCritic, a):  # noqa: A001 - mirrors the operation name
    return critic.eval(a)


def grad_a(critic: HybridCritic, a):
    return critic.grad_a(a)


def hessian_a(critic: HybridCritic, a):
    return critic.hessian_a(a)


def constant_critic(value: float, dim: int = 1) -> HybridCritic:
    return HybridCritic.single(TrigAtom(np.zeros(dim), 0.0), value)


def fit_fourier_series(
    target: Callable[[float], float], half_period: float, order: int, *, check_points: int = 257
) -> HybridCritic:
    """Truncated Fourier series of ``target`` on ``[-L, L]`` as a trig critic.

    The layout of the returned critic is: a constant atom, then cosine and sine
    atoms interleaved for m = 1..order. Sine terms carry phase pi/2. The
    constant coefficient is the mean of ``target`` (half the raw m=0 integral).
    """
    L = float(half_period)
    if not (L > 0 and math.isfinite(L)):
        raise ValueError("half_period must be positive and finite")
    if order < 0:
        raise ValueError("order must be non-negative")
    grid = np.linspace(-L, L, check_points)
    samples = np.array([float(target(x)) for x in grid])
    if not np.all(np.isfinite(samples)):
        raise ValueError("target produced non-finite samples on [-L, L]")

    w0 = math.pi / L

    def project(weight: str, freq: float) -> float:
        # zero coefficients cannot meet a relative tolerance; quad warns spuriously
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            return _project(weight, freq)

    def _project(weight: str, freq: float) -> float:
        if freq == 0.0:
            val, _ = integrate.quad(target, -L, L, limit=400, epsabs=1e-13, epsrel=1e-12)
        else:
            val, _ = integrate.quad(
                target, -L, L, weight=weight, wvar=freq, limit=400, epsabs=1e-13, epsrel=1e-12
            )
        return val / L

    atoms = [TrigAtom([0.0], 0.0)]
    coeffs = [0.5 * project("cos", 0.0)]
    for m in range(1, order + 1):
        atoms.append(TrigAtom([m * w0], 0.0))
        coeffs.append(project("cos", m * w0))
        atoms.append(TrigAtom([m * w0], math.pi / 2))
        coeffs.append(project("sin", m * w0))
    return HybridCritic(tuple(atoms), coeffs)


def td_error(
    critic: HybridCritic,
    a,
    r: float,
    a_next,
    gamma: float,
    phase: float = 0.0,
    next_phase: float = 0.0,
) -> float:
    q = critic.with_phase_shift(phase).eval(a)
    q_next = critic.with_phase_shift(next_phase).eval(a_next)
    return float(r + gamma * q_next - q)


def sarsa_update(
    critic: HybridCritic,
    phase: float,
    a,
    r: float,
    a_next,
    next_phase: float,
    alpha: float,
    gamma: float,
) -> HybridCritic:
    """One semi-gradient SARSA step on the linear coefficients.

    ``phase`` and ``next_phase`` condition the critic on the current and next
    state by shifting every trigonometric phase; atom shapes never change.
    """
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if not 0 <= gamma < 1:
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    here = critic.with_phase_shift(phase)
    feats = here.atom_values(a)
    q = float(feats @ critic.coeffs)
    q_next = critic.with_phase_shift(next_phase).eval(a_next)
    delta = r + gamma * q_next - q
    return critic.with_coeffs(critic.coeffs + alpha * delta * feats)


def fourier_partial_sum_error(critic: HybridCritic, target, points: Sequence[float]) -> float:
    pts = np.asarray(points, float)
    approx = critic.eval(pts[:, None])
    exact = np.array([float(target(x)) for x in pts])
    return float(np.max(np.abs(approx - exact)))
