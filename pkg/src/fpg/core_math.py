"""Shared numerical substrate.

Covariances are carried as a lower-triangular factor ``L`` with ``L.T @ L``
equal to the covariance. Every inverse is taken through triangular solves
against that factor.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import solve_triangular

MAX_QUAD_DIM = 8


class DimensionError(ValueError):
    """Raised when vector/matrix shapes disagree."""


class SingularMatrixError(ValueError):
    """Raised when a matrix that must be SPD is not."""


def as_vector(x, name: str = "vector") -> np.ndarray:
    v = np.atleast_1d(np.asarray(x, dtype=float))
    if v.ndim != 1 or v.size < 1:
        raise DimensionError(f"{name} must be a non-empty 1-d array, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} has non-finite entries")
    return v


def as_matrix(m, n: int | None = None, name: str = "matrix") -> np.ndarray:
    a = np.atleast_2d(np.asarray(m, dtype=float))
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {a.shape}")
    if n is not None and a.shape[0] != n:
        raise DimensionError(f"{name} must be {n}x{n}, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


@dataclass(frozen=True, eq=False)
class SpdFactor:
    """Lower-triangular ``L`` with positive diagonal; represents ``L.T @ L``."""

    lower: np.ndarray

    def __post_init__(self):
        L = as_matrix(self.lower, name="factor")
        if not np.array_equal(L, np.tril(L)):
            raise ValueError("factor must be lower triangular")
        if np.any(np.diag(L) <= 0):
            raise SingularMatrixError("factor diagonal must be strictly positive")
        L = L.copy()
        L.setflags(write=False)
        object.__setattr__(self, "lower", L)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @classmethod
    def from_matrix(cls, cov) -> "SpdFactor":
        """Factor an SPD matrix as ``L.T @ L`` with ``L`` lower triangular.

        ``numpy.linalg.cholesky`` gives ``C C^T``; flipping both axes of the
        input turns that into the reversed ordering we need.
        """
        cov = as_matrix(cov, name="cov")
        if not np.allclose(cov, cov.T, rtol=1e-12, atol=1e-14):
            raise SingularMatrixError("matrix is not symmetric")
        try:
            c = np.linalg.cholesky(cov[::-1, ::-1])
        except np.linalg.LinAlgError as exc:
            raise SingularMatrixError("matrix is not positive definite") from exc
        # cov = P C C^T P = (P C P)(P C P)^T, P C P upper triangular
        upper = c[::-1, ::-1]
        return cls(np.tril(upper.T))

    @classmethod
    def diag(cls, stds) -> "SpdFactor":
        return cls(np.diag(as_vector(stds, "stds")))

    @classmethod
    def identity(cls, n: int) -> "SpdFactor":
        return cls(np.eye(n))

    def matrix(self) -> np.ndarray:
        return spd_from_factor(self)

    def solve(self, b) -> np.ndarray:
        """``(L^T L)^{-1} b`` via two triangular solves (b may be a matrix)."""
        y = solve_triangular(self.lower, b, trans="T", lower=True)
        return solve_triangular(self.lower, y, lower=True)

    def solve_lower_t(self, b) -> np.ndarray:
        """``L^{-T} b``."""
        return solve_triangular(self.lower, b, trans="T", lower=True)

    def inverse(self) -> np.ndarray:
        """Explicit ``Sigma^{-1}`` assembled from triangular solves (symmetrised)."""
        inv = self.solve(np.eye(self.dim))
        return 0.5 * (inv + inv.T)

    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.lower))))


def spd_from_factor(factor: SpdFactor) -> np.ndarray:
    L = factor.lower
    m = L.T @ L
    # exact symmetry regardless of summation order
    return np.triu(m) + np.triu(m, 1).T


def gaussian_logpdf(x, mean, cov) -> np.ndarray:
    """Log density of N(mean, cov); ``x`` may carry leading batch axes."""
    mean = as_vector(mean, "mean")
    n = mean.size
    factor = cov if isinstance(cov, SpdFactor) else SpdFactor.from_matrix(as_matrix(cov, n, "cov"))
    if factor.dim != n:
        raise DimensionError(f"cov is {factor.dim}-dimensional, mean is {n}-dimensional")
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (n,):
        raise DimensionError(f"x has trailing dimension {x.shape[-1:]} but mean has {n}")
    d = (x - mean).reshape(-1, n).T
    w = solve_triangular(factor.lower, d, trans="T", lower=True)
    maha = np.sum(w * w, axis=0)
    out = -0.5 * (n * math.log(2 * math.pi) + factor.logdet() + maha)
    return out.reshape(x.shape[:-1])


def gaussian_pdf(x, mean, cov):
    """Gaussian density; scalar for a single point, array for a batch."""
    out = np.exp(gaussian_logpdf(x, mean, cov))
    return float(out) if out.ndim == 0 else out


def std_normal_cdf(x: float) -> float:
    if not math.isfinite(x):
        raise ValueError("x must be finite")
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def std_normal_cdf_array(x) -> np.ndarray:
    from scipy.special import ndtr

    return ndtr(np.asarray(x, dtype=float))


@lru_cache(maxsize=None)
def _hermgauss(k: int):
    nodes, weights = np.polynomial.hermite.hermgauss(k)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def gauss_hermite_nodes(k: int) -> list[tuple[float, float]]:
    """Gauss-Hermite rule for weight ``exp(-x^2)``; exact to degree ``2k-1``."""
    if not isinstance(k, (int, np.integer)) or not 1 <= k <= 64:
        raise ValueError(f"k must be an integer in [1, 64], got {k!r}")
    nodes, weights = _hermgauss(int(k))
    return list(zip(nodes.tolist(), weights.tolist()))


def gauss_hermite_arrays(k: int) -> tuple[np.ndarray, np.ndarray]:
    gauss_hermite_nodes(k)  # range check
    return _hermgauss(int(k))


class RngStream:
    """Seeded RNG (PCG64). Equal seeds give equal draw sequences.

    Child streams from :meth:`spawn` are derived through ``SeedSequence`` so
    they are reproducible and independent of how much the parent has drawn.
    """

    def __init__(self, seed: int):
        if not isinstance(seed, (int, np.integer)) or not 0 <= int(seed) < 2**64:
            raise ValueError(f"seed must be a 64-bit non-negative integer, got {seed!r}")
        self.seed = int(seed)
        self._ss = np.random.SeedSequence(self.seed)
        self._gen = np.random.Generator(np.random.PCG64(self._ss))

    def normal(self, size=None):
        return self._gen.standard_normal(size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)

    def spawn(self, n: int) -> list["RngStream"]:
        children = []
        for child_ss in self._ss.spawn(n):
            s = RngStream.__new__(RngStream)
            s.seed = self.seed
            s._ss = child_ss
            s._gen = np.random.Generator(np.random.PCG64(child_ss))
            children.append(s)
        return children

    @property
    def generator(self) -> np.random.Generator:
        return self._gen
