"""Independent numerical ground truth.

Everything here integrates or differentiates *pointwise* critic/policy values;
no closed-form expectation is reused, so agreement with :mod:`fpg.analytic`
is evidence rather than tautology.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core_math import MAX_QUAD_DIM, DimensionError, RngStream, gauss_hermite_arrays
from .critic import HybridCritic
from .policy import GaussianPolicy

FIRST_DIFF_STEP = 1e-5
SECOND_DIFF_STEP = 1e-4


class WindowingError(ValueError):
    """Test function does not decay inside the DFT grid."""


@dataclass(frozen=True)
class QuadratureSpec:
    nodes_per_dim: int
    dimension: int

    def __post_init__(self):
        if not 4 <= self.nodes_per_dim <= 64:
            raise ValueError("nodes_per_dim must lie in [4, 64]")
        if not 1 <= self.dimension <= MAX_QUAD_DIM:
            raise DimensionError(f"quadrature dimension must lie in [1, {MAX_QUAD_DIM}]")


@dataclass(frozen=True)
class GridSpec:
    half_width: float
    points: int

    def __post_init__(self):
        p = self.points
        if not (64 <= p <= 8192 and p & (p - 1) == 0):
            raise ValueError("points must be a power of two in [64, 8192]")
        if not self.half_width > 0:
            raise ValueError("half_width must be positive")

    @property
    def step(self) -> float:
        return 2.0 * self.half_width / self.points

    def axis(self) -> np.ndarray:
        return -self.half_width + self.step * np.arange(self.points)

    def frequencies(self) -> np.ndarray:
        k = np.arange(self.points) - self.points // 2
        return 2.0 * math.pi * k / (self.points * self.step)


def _as_fn(critic) -> Callable:
    return critic.eval if isinstance(critic, HybridCritic) else critic


# ---------------------------------------------------------------------------
# expectations


def quad_nodes(policy: GaussianPolicy, spec: QuadratureSpec):
    """Tensor-product Gauss-Hermite nodes in action space and normalised weights."""
    if spec.dimension != policy.dim:
        raise DimensionError(f"spec dimension {spec.dimension} != policy dimension {policy.dim}")
    x, w = gauss_hermite_arrays(spec.nodes_per_dim)
    n = policy.dim
    z = np.stack(np.meshgrid(*([x] * n), indexing="ij"), axis=-1).reshape(-1, n)
    wt = np.prod(np.stack(np.meshgrid(*([w] * n), indexing="ij"), axis=-1).reshape(-1, n), axis=1)
    wt = wt / math.pi ** (n / 2)
    # a = mu + sqrt(2) L^T z
    a = policy.mean + math.sqrt(2.0) * (z @ policy.scale.lower)
    return a, wt


def quad_expectation(critic, policy: GaussianPolicy, spec: QuadratureSpec | None = None):
    """``E_policy[critic(a)]`` by whitened Gauss-Hermite quadrature."""
    spec = spec or QuadratureSpec(32, policy.dim)
    a, wt = quad_nodes(policy, spec)
    vals = np.asarray(_as_fn(critic)(a), float)
    return np.tensordot(wt, vals, axes=(0, 0))


def mc_expectation(critic, policy, n: int, rng: RngStream, chunk: int = 250_000):
    """Sample mean of ``critic(a)`` with its standard error."""
    if n < 100:
        raise ValueError("Monte Carlo needs n >= 100")
    fn = _as_fn(critic)
    total, total_sq, done = 0.0, 0.0, 0
    shift = None
    while done < n:
        k = min(chunk, n - done)
        vals = np.asarray(fn(policy.sample(rng, k)), float).reshape(-1)
        if shift is None:
            shift = vals[0]  # shifted sums to limit cancellation
        d = vals - shift
        total += d.sum()
        total_sq += (d * d).sum()
        done += k
    mean = total / n
    var = max(total_sq / n - mean * mean, 0.0) * n / (n - 1)
    return float(shift + mean), math.sqrt(var / n)


# ---------------------------------------------------------------------------
# finite differences


def finite_diff(fn: Callable, point, step: float = FIRST_DIFF_STEP, symmetric: bool = False):
    """Central-difference gradient of a scalar function of an array block.

    With ``symmetric=True`` the block is a symmetric matrix and each
    off-diagonal pair moves together, so the result is the symmetric gradient
    ``G`` with ``dF = trace(G dX)``.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    x0 = np.array(point, dtype=float)
    grad = np.zeros_like(x0)

    def call(x):
        v = float(fn(x))
        if not math.isfinite(v):
            raise ValueError("function returned a non-finite value")
        return v

    if symmetric:
        n = x0.shape[0]
        for j in range(n):
            for k in range(j, n):
                e = np.zeros_like(x0)
                if j == k:
                    e[j, j] = 1.0
                else:
                    e[j, k] = e[k, j] = 0.5
                g = (call(x0 + step * e) - call(x0 - step * e)) / (2 * step)
                grad[j, k] = grad[k, j] = g
        return grad
    for idx in np.ndindex(x0.shape):
        e = np.zeros_like(x0)
        e[idx] = step
        grad[idx] = (call(x0 + e) - call(x0 - e)) / (2 * step)
    return grad


def finite_diff_hessian(fn: Callable, point, step: float = SECOND_DIFF_STEP) -> np.ndarray:
    x0 = np.asarray(point, float)
    n = x0.size
    h = np.zeros((n, n))
    eye = np.eye(n) * step
    for j in range(n):
        for k in range(j, n):
            v = (
                fn(x0 + eye[j] + eye[k])
                - fn(x0 + eye[j] - eye[k])
                - fn(x0 - eye[j] + eye[k])
                + fn(x0 - eye[j] - eye[k])
            ) / (4 * step * step)
            h[j, k] = h[k, j] = v
    return h


# ---------------------------------------------------------------------------
# discrete Fourier checks of the multiplication/derivative property


@dataclass(frozen=True)
class TestFunction:
    """Smooth decaying function with its analytic gradient and Hessian.

    All three callables take points shaped ``(..., dim)``.
    """

    name: str
    dim: int
    f: Callable
    grad: Callable
    hess: Callable

    __test__ = False  # not a pytest class


def gaussian_test_function(dim: int = 1) -> TestFunction:
    c = (2 * math.pi) ** (-dim / 2)

    def f(x):
        return c * np.exp(-0.5 * np.sum(x * x, axis=-1))

    def grad(x):
        return -x * f(x)[..., None]

    def hess(x):
        outer = x[..., :, None] * x[..., None, :]
        return (outer - np.eye(dim)) * f(x)[..., None, None]

    return TestFunction(f"gaussian{dim}d", dim, f, grad, hess)


def x_gaussian_test_function(dim: int = 1) -> TestFunction:
    """``x_0 * N(x; 0, I)``."""
    g = gaussian_test_function(dim)
    e0 = np.eye(dim)[0]

    def f(x):
        return x[..., 0] * g.f(x)

    def grad(x):
        return e0 * g.f(x)[..., None] + x[..., :1] * g.grad(x)

    def hess(x):
        gg = g.grad(x)
        cross = e0[:, None] * gg[..., None, :] + gg[..., :, None] * e0[None, :]
        return cross + x[..., 0, None, None] * g.hess(x)

    return TestFunction(f"x_gaussian{dim}d", dim, f, grad, hess)


def _dft_matrix(grid: GridSpec) -> np.ndarray:
    """``D[k, j] = exp(-i w_k x_j)``; forward transform is ``step * D @ f``."""
    return np.exp(-1j * np.outer(grid.frequencies(), grid.axis()))


def _grid_points(grid: GridSpec, dim: int) -> np.ndarray:
    axes = [grid.axis()] * dim
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def _check_window(values: np.ndarray, tol: float = 1e-8):
    edges = []
    for ax in range(values.ndim):
        edges.append(np.take(values, [0, -1], axis=ax))
    edge = max(float(np.max(np.abs(e))) for e in edges)
    if edge > tol:
        raise WindowingError(f"test function is {edge:.2e} at the grid boundary (limit {tol:g})")


def _forward(values: np.ndarray, D: np.ndarray, h: float) -> np.ndarray:
    out = values.astype(complex)
    for ax in range(values.ndim):
        out = np.moveaxis(np.tensordot(D, out, axes=(1, ax)), 0, ax)
    return out * h**values.ndim


def _inverse(spec: np.ndarray, D: np.ndarray, h: float) -> np.ndarray:
    n = D.shape[0]
    out = spec
    Dh = D.conj().T
    for ax in range(spec.ndim):
        out = np.moveaxis(np.tensordot(Dh, out, axes=(1, ax)), 0, ax)
    return out / (n * h) ** spec.ndim


def _interior(grid: GridSpec, dim: int, fraction: float = 0.8) -> np.ndarray:
    inside = np.abs(grid.axis()) <= fraction * grid.half_width
    return np.ix_(*([inside] * dim))


def dft_lemma_check_vector(grid: GridSpec, fn: TestFunction) -> float:
    """Max deviation of ``IDFT(i w DFT(f))`` from the analytic gradient on the interior."""
    pts = _grid_points(grid, fn.dim)
    vals = fn.f(pts)
    _check_window(vals)
    D = _dft_matrix(grid)
    F = _forward(vals, D, grid.step)
    w = grid.frequencies().copy()
    w[0] = 0.0  # unpaired Nyquist bin carries no odd-derivative information
    exact = fn.grad(pts)
    inside = _interior(grid, fn.dim)
    err = 0.0
    for j in range(fn.dim):
        shape = [1] * fn.dim
        shape[j] = -1
        deriv = _inverse(1j * w.reshape(shape) * F, D, grid.step)
        diff = np.abs(deriv - exact[..., j])[inside]
        err = max(err, float(np.max(diff)))
    return err


def dft_lemma_check_matrix(grid: GridSpec, fn: TestFunction) -> float:
    """Max deviation of ``IDFT((i w)(i w)^T DFT(f))`` from the analytic Hessian."""
    pts = _grid_points(grid, fn.dim)
    vals = fn.f(pts)
    _check_window(vals)
    D = _dft_matrix(grid)
    F = _forward(vals, D, grid.step)
    w = grid.frequencies()
    exact = fn.hess(pts)
    inside = _interior(grid, fn.dim)
    err = 0.0
    for j in range(fn.dim):
        for k in range(j, fn.dim):
            wj = w.copy()
            wk = w.copy()
            if j != k:
                wj[0] = wk[0] = 0.0
            sj = [1] * fn.dim
            sj[j] = -1
            sk = [1] * fn.dim
            sk[k] = -1
            mult = (1j * wj.reshape(sj)) * (1j * wk.reshape(sk))
            deriv = _inverse(mult * F, D, grid.step)
            diff = np.abs(deriv - exact[..., j, k])[inside]
            err = max(err, float(np.max(diff)))
    return err


# ---------------------------------------------------------------------------
# reflected-policy derivative identity


def aux_lemma_check(
    policy: GaussianPolicy, order: int, rng: RngStream | None = None, n_points: int = 100
) -> float:
    """Compare finite-difference derivatives of the reflected density at ``mu - a``
    with ``(-1)^order`` times the analytic action derivatives of the policy density."""
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    rng = rng or RngStream(0)
    pts = policy.sample(rng, n_points)
    err = 0.0
    for a in pts:
        nu = policy.mean - a
        if order == 0:
            diff = abs(policy.auxiliary_pdf(nu) - policy.pdf(a))
        elif order == 1:
            fd = finite_diff(policy.auxiliary_pdf, nu, FIRST_DIFF_STEP)
            diff = np.max(np.abs(fd - (-1) * policy.pdf_grad(a)))
        else:
            fd = finite_diff_hessian(policy.auxiliary_pdf, nu, SECOND_DIFF_STEP)
            diff = np.max(np.abs(fd - policy.pdf_hess(a)))
        err = max(err, float(diff))
    return err



def adaptive_expectation_1d(fn: Callable, policy: GaussianPolicy, breakpoints=(0.0,)) -> float:
    """``E[fn(a)]`` for a 1-d Gaussian by adaptive quadrature split at kinks.

    Gauss-Hermite converges slowly for non-smooth integrands such as ``|a|``.
    """
    from scipy import integrate

    if policy.dim != 1:
        raise DimensionError("adaptive 1-d quadrature needs a 1-d policy")
    mu = float(policy.mean[0])
    sigma = float(policy.scale.lower[0, 0])
    lo, hi = mu - 40 * sigma, mu + 40 * sigma
    cuts = sorted(b for b in breakpoints if lo < b < hi)
    edges = [lo, *cuts, hi]

    norm = 1.0 / (sigma * math.sqrt(2.0 * math.pi))

    def integrand(x):
        pdf = norm * math.exp(-0.5 * ((x - mu) / sigma) ** 2)
        return float(np.asarray(fn(np.array([[x]])), float).reshape(-1)[0]) * pdf

    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(integrand, a, b, points=[mu] if a < mu < b else None,
                                limit=500, epsabs=1e-15, epsrel=1e-13)
        total += val
    return total
