"""Gaussian, Dirac and mixture policies over a real action space."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .core_math import (
    DimensionError,
    RngStream,
    SpdFactor,
    as_vector,
    gaussian_logpdf,
    spd_from_factor,
)

MIXTURE_WEIGHT_TOL = 1e-12


def _check_points(a, n: int) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1)
    if a.shape[-1] != n:
        raise DimensionError(f"expected trailing dimension {n}, got shape {a.shape}")
    return a


@dataclass(frozen=True, eq=False)
class GaussianPolicy:
    """``N(mean, L^T L)`` where ``L = scale.lower``."""

    mean: np.ndarray
    scale: SpdFactor

    def __post_init__(self):
        mean = as_vector(self.mean, "mean").copy()
        mean.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        if not isinstance(self.scale, SpdFactor):
            object.__setattr__(self, "scale", SpdFactor(self.scale))
        if self.scale.dim != mean.size:
            raise DimensionError(
                f"mean has dimension {mean.size} but scale is {self.scale.dim}x{self.scale.dim}"
            )

    @classmethod
    def isotropic(cls, mean, sigma: float) -> "GaussianPolicy":
        mean = as_vector(mean, "mean")
        return cls(mean, SpdFactor(sigma * np.eye(mean.size)))

    @classmethod
    def from_cov(cls, mean, cov) -> "GaussianPolicy":
        return cls(mean, SpdFactor.from_matrix(cov))

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def cov(self) -> np.ndarray:
        return spd_from_factor(self.scale)

    def pdf(self, a):
        out = np.exp(gaussian_logpdf(_check_points(a, self.dim), self.mean, self.scale))
        return float(out) if out.ndim == 0 else out

    def auxiliary_pdf(self, x):
        """Reflected density ``N(0, Sigma)(x)``, so that ``aux(mean - a) == pdf(a)``."""
        x = _check_points(x, self.dim)
        # evaluated as pdf(mean - x) so the reflection identity holds bitwise
        return self.pdf(self.mean - x)

    def score(self, a) -> np.ndarray:
        """``Sigma^{-1}(a - mean)``; batch axes lead."""
        a = _check_points(a, self.dim)
        d = (a - self.mean).reshape(-1, self.dim).T
        return self.scale.solve(d).T.reshape(a.shape)

    def score_hessian(self, a) -> np.ndarray:
        """``Sigma^{-1} d d^T Sigma^{-1} - Sigma^{-1}`` with ``d = a - mean``."""
        s = self.score(a)
        return s[..., :, None] * s[..., None, :] - self.scale.inverse()

    def pdf_grad(self, a) -> np.ndarray:
        """``grad_a pdf = -Sigma^{-1}(a - mean) pdf``."""
        a = _check_points(a, self.dim)
        return -self.score(a) * np.asarray(self.pdf(a))[..., None]

    def pdf_hess(self, a) -> np.ndarray:
        """``hess_a pdf = (Sigma^{-1} d d^T Sigma^{-1} - Sigma^{-1}) pdf``."""
        a = _check_points(a, self.dim)
        return self.score_hessian(a) * np.asarray(self.pdf(a))[..., None, None]

    def characteristic_fn(self, omega, centered: bool = False) -> complex:
        """``E[exp(i omega^T a)]``; ``centered`` drops the mean (the reflected policy's transform)."""
        omega = as_vector(omega, "omega")
        if omega.size != self.dim:
            raise DimensionError(f"omega has dimension {omega.size}, policy {self.dim}")
        w = self.scale.lower @ omega
        damp = np.exp(-0.5 * float(w @ w))
        if centered:
            return complex(damp)
        return complex(damp * np.exp(1j * float(omega @ self.mean)))

    def sample(self, rng: RngStream, size: int | None = None) -> np.ndarray:
        z = rng.normal(self.dim if size is None else (size, self.dim))
        return self.mean + z @ self.scale.lower


@dataclass(frozen=True, eq=False)
class DiracPolicy:
    location: np.ndarray

    def __post_init__(self):
        loc = as_vector(self.location, "location").copy()
        loc.setflags(write=False)
        object.__setattr__(self, "location", loc)

    @property
    def dim(self) -> int:
        return self.location.size

    def sample(self, rng: RngStream | None = None, size: int | None = None) -> np.ndarray:
        if size is None:
            return self.location.copy()
        return np.broadcast_to(self.location, (size, self.dim)).copy()


Component = Union[GaussianPolicy, DiracPolicy]


@dataclass(frozen=True, eq=False)
class MixturePolicy:
    """Convex combination of Gaussian and Dirac components."""

    components: tuple

    def __post_init__(self):
        comps = tuple((float(w), c) for w, c in self.components)
        if not comps:
            raise ValueError("mixture needs at least one component")
        weights = np.array([w for w, _ in comps])
        if not np.all(np.isfinite(weights)) or np.any(weights < 0):
            raise ValueError("mixture weights must be finite and non-negative")
        if abs(weights.sum() - 1.0) > MIXTURE_WEIGHT_TOL:
            raise ValueError(f"mixture weights sum to {weights.sum()!r}, not 1")
        dims = {c.dim for _, c in comps}
        if len(dims) != 1:
            raise DimensionError(f"components disagree on action dimension: {sorted(dims)}")
        for _, c in comps:
            if not isinstance(c, (GaussianPolicy, DiracPolicy)):
                raise TypeError(f"unsupported mixture component {type(c).__name__}")
        object.__setattr__(self, "components", comps)

    @property
    def dim(self) -> int:
        return self.components[0][1].dim

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for w, _ in self.components])

    def _pick(self, u):
        cdf = np.cumsum(self.weights)
        cdf[-1] = 1.0
        idx = np.searchsorted(cdf, u, side="right")
        return np.minimum(idx, len(self.components) - 1)

    def sample(self, rng: RngStream, size: int | None = None) -> np.ndarray:
        """One uniform per draw selects the component by inverse CDF."""
        if size is None:
            return self.sample(rng, 1)[0]
        idx = self._pick(rng.uniform(size=size))
        z = rng.normal((size, self.dim))
        out = np.empty((size, self.dim))
        for i, (_, comp) in enumerate(self.components):
            sel = idx == i
            if isinstance(comp, GaussianPolicy):
                out[sel] = comp.mean + z[sel] @ comp.scale.lower
            else:
                out[sel] = comp.location
        return out


def sample(policy, rng: RngStream, size: int | None = None) -> np.ndarray:
    return policy.sample(rng, size)
