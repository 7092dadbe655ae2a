"""Oracle-backed self checks, grouped for ``fpg verify``.

Each check reduces to one ``max_error`` compared with a tolerance. The random
instance generators are shared with the test-suite so both exercise the same
parameter ranges.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .analytic import (
    atom_expectation,
    atom_grad_cov,
    atom_grad_mean,
    atom_grad_scale,
    dirac_update,
    hybrid_gradient,
    mixture_gradient,
    rbf_natural_grad_mean,
)
from .core_math import RngStream, SpdFactor
from .critic import AbsAtom, HybridCritic, QuadricAtom, RbfAtom, TrigAtom, fit_fourier_series
from .estimators import estimator_variance, flatten_estimates, spg_batch
from .oracle import (
    GridSpec,
    QuadratureSpec,
    adaptive_expectation_1d,
    aux_lemma_check,
    dft_lemma_check_matrix,
    dft_lemma_check_vector,
    finite_diff,
    gaussian_test_function,
    mc_expectation,
    quad_expectation,
    x_gaussian_test_function,
)
from .policy import DiracPolicy, GaussianPolicy, MixturePolicy

FAMILIES = ("trig", "rbf", "quadric", "abs")
GROUPS = ("closed_form", "gradients", "dft", "aux", "estimators", "mixture", "natural", "fourier")
REL_FLOOR = 1e-8
QUAD_NODES = 64
AUX_TOLERANCES = {0: 1e-14, 1: 1e-6, 2: 1e-4}
DFT_TOLERANCES = {"first": 1e-6, "second": 1e-4}
Z_LIMIT = 4.0


@dataclass(frozen=True)
class CheckResult:
    name: str
    max_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.max_error <= self.tolerance)

    @property
    def status(self) -> str:
        return "pass" if self.passed else "fail"


# ---------------------------------------------------------------------------
# random instances


def random_gaussian(rng: RngStream, n: int) -> GaussianPolicy:
    """Mean in roughly [-1, 1]^n, covariance eigenvalues in about [0.1, 1.5]."""
    a = 0.4 * rng.normal((n, n))
    cov = a @ a.T + 0.1 * np.eye(n)
    return GaussianPolicy.from_cov(rng.uniform(-1.0, 1.0, n), cov)


def random_atom(family: str, rng: RngStream, n: int):
    if family == "trig":
        return TrigAtom(rng.uniform(-1.5, 1.5, n), float(rng.uniform(-math.pi, math.pi)))
    if family == "rbf":
        b = 0.5 * rng.normal((n, n))
        return RbfAtom(rng.uniform(-1.0, 1.0, n), SpdFactor.from_matrix(b @ b.T + 0.3 * np.eye(n)))
    if family == "quadric":
        h = rng.normal((n, n))
        return QuadricAtom(
            0.5 * (h + h.T), rng.uniform(-1.0, 1.0, n), float(rng.normal()), rng.normal(n)
        )
    if family == "abs":
        if n != 1:
            raise ValueError("the |a| family is one-dimensional")
        return AbsAtom()
    raise ValueError(f"unknown family {family!r}")


def family_dims(family: str) -> tuple[int, ...]:
    return (1,) if family == "abs" else (1, 2, 3)


def relative_error(x, ref, floor: float = REL_FLOOR) -> float:
    """Max-norm error of a block relative to the reference block's max-norm."""
    x, ref = np.asarray(x, float), np.asarray(ref, float)
    return float(np.max(np.abs(x - ref)) / max(float(np.max(np.abs(ref))), floor))


# ---------------------------------------------------------------------------
# closed forms against quadrature and finite differences


def oracle_expectation(atom, policy: GaussianPolicy, nodes: int = QUAD_NODES) -> float:
    critic = HybridCritic.single(atom)
    if isinstance(atom, AbsAtom):
        return adaptive_expectation_1d(critic.eval, policy)
    return float(quad_expectation(critic, policy, QuadratureSpec(nodes, policy.dim)))


def closed_form_error(atom, policy: GaussianPolicy, nodes: int = QUAD_NODES) -> float:
    return relative_error(atom_expectation(atom, policy), oracle_expectation(atom, policy, nodes))


def _e_of_mean(atom, policy):
    return lambda m: atom_expectation(atom, GaussianPolicy(m, policy.scale))


def _e_of_cov(atom, policy):
    return lambda c: atom_expectation(atom, GaussianPolicy.from_cov(policy.mean, c))


def _e_of_scale(atom, policy):
    # E depends on L only through Sigma = L^T L, so any square L is admissible
    return lambda lo: atom_expectation(atom, GaussianPolicy.from_cov(policy.mean, lo.T @ lo))


def gradient_errors(atom, policy: GaussianPolicy, fd_cov: Callable | None = None) -> dict:
    """Relative errors of the three gradient blocks against central differences.

    ``fd_cov`` substitutes an alternative covariance gradient, which lets a
    test plant a known-wrong formula.
    """
    grad_cov = (fd_cov or atom_grad_cov)(atom, policy)
    return {
        "mean": relative_error(
            atom_grad_mean(atom, policy), finite_diff(_e_of_mean(atom, policy), policy.mean)
        ),
        "cov": relative_error(
            grad_cov, finite_diff(_e_of_cov(atom, policy), policy.cov, symmetric=True)
        ),
        "scale": relative_error(
            atom_grad_scale(atom, policy), finite_diff(_e_of_scale(atom, policy), policy.scale.lower)
        ),
    }


def _instances(family: str, count: int, rng: RngStream):
    dims = family_dims(family)
    for i in range(count):
        n = dims[i % len(dims)]
        yield random_atom(family, rng, n), random_gaussian(rng, n)


def check_closed_form(count: int = 20, seed: int = 11) -> list[CheckResult]:
    out = []
    for family in FAMILIES:
        rng = RngStream(seed)
        err = max(closed_form_error(a, p) for a, p in _instances(family, count, rng))
        out.append(CheckResult(f"closed_form_expectation[{family}]", err, 1e-7))
    return out


def check_gradients(count: int = 20, seed: int = 12) -> list[CheckResult]:
    out = []
    for family in FAMILIES:
        rng = RngStream(seed)
        worst = {"mean": 0.0, "cov": 0.0, "scale": 0.0}
        for atom, pol in _instances(family, count, rng):
            for k, v in gradient_errors(atom, pol).items():
                worst[k] = max(worst[k], v)
        out += [CheckResult(f"closed_form_grad_{k}[{family}]", v, 1e-5) for k, v in worst.items()]
    return out


# ---------------------------------------------------------------------------
# lemma checks


def check_dft(points_1d: int = 1024, points_2d: int = 256, half_width: float = 12.0) -> list[CheckResult]:
    out = []
    for dim, pts in ((1, points_1d), (2, points_2d)):
        grid = GridSpec(half_width, pts)
        for fn in (gaussian_test_function(dim), x_gaussian_test_function(dim)):
            out.append(
                CheckResult(
                    f"dft_lemma_check_vector[{fn.name}]",
                    dft_lemma_check_vector(grid, fn),
                    DFT_TOLERANCES["first"],
                )
            )
            out.append(
                CheckResult(
                    f"dft_lemma_check_matrix[{fn.name}]",
                    dft_lemma_check_matrix(grid, fn),
                    DFT_TOLERANCES["second"],
                )
            )
    return out


def check_aux(count: int = 6, seed: int = 13) -> list[CheckResult]:
    rng = RngStream(seed)
    pols = [random_gaussian(rng, 1 + i % 3) for i in range(count)]
    out = []
    for order, tol in AUX_TOLERANCES.items():
        err = max(aux_lemma_check(p, order, rng.spawn(1)[0], n_points=50) for p in pols)
        out.append(CheckResult(f"aux_lemma_check[order{order}]", err, tol))
    return out


# ---------------------------------------------------------------------------
# estimators


def analytic_targets(order: int, critic: HybridCritic, policy: GaussianPolicy) -> np.ndarray:
    upd, _ = hybrid_gradient(critic, policy)
    gm = None if order == 2 else upd.grad_mean[None, :]
    return flatten_estimates(gm, upd.grad_scale[None, :, :])[0]


def estimator_z_score(
    order: int, critic: HybridCritic, policy: GaussianPolicy, n_samples: int, rng: RngStream
) -> float:
    """Largest |mean - analytic| / standard error over all estimate coordinates."""
    rows = estimator_variance(order, critic, policy, n_samples, rng)
    target = analytic_targets(order, critic, policy)
    z = 0.0
    for row, t in zip(rows, target):
        # floor: zero-variance estimators only differ from the target by rounding
        se = max(math.sqrt(row.variance / row.n), 1e-12 * max(1.0, abs(t)))
        z = max(z, abs(row.mean - t) / se)
    return z


def supported_orders(family: str) -> tuple[int, ...]:
    # the |a| atom has no Hessian, so no order-2 estimate exists for it
    return (0, 1) if family == "abs" else (0, 1, 2)


def check_estimators(count: int = 2, n_samples: int = 100_000, seed: int = 14) -> list[CheckResult]:
    out = []
    for family in FAMILIES:
        for order in supported_orders(family):
            rng = RngStream(seed)
            z = max(
                estimator_z_score(order, HybridCritic.single(a), p, n_samples, rng)
                for a, p in _instances(family, count, rng)
            )
            out.append(CheckResult(f"estimator_unbiased[m{order},{family}]", z, Z_LIMIT))
    out += zero_variance_checks(RngStream(seed + 1))
    return out


def zero_variance_checks(rng: RngStream, n_samples: int = 1000) -> list[CheckResult]:
    """Order 1 on a linear critic and order 2 on a quadric reproduce the analytic value."""
    out = []
    for n in (1, 2, 3):
        pol = random_gaussian(rng, n)
        linear = HybridCritic.single(QuadricAtom(np.zeros((n, n)), np.zeros(n), 0.3, rng.normal(n)))
        _, gm, _ = spg_batch(1, linear, pol, pol.sample(rng, n_samples))
        upd, _ = hybrid_gradient(linear, pol)
        out.append(
            CheckResult(f"zero_variance[m1,linear,n{n}]", float(np.max(np.abs(gm - upd.grad_mean))), 0.0)
        )
        quad = HybridCritic.single(random_atom("quadric", rng, n))
        _, _, gs = spg_batch(2, quad, pol, pol.sample(rng, n_samples))
        upd, _ = hybrid_gradient(quad, pol)
        out.append(
            CheckResult(f"zero_variance[m2,quadric,n{n}]", float(np.max(np.abs(gs - upd.grad_scale))), 0.0)
        )
    return out


# ---------------------------------------------------------------------------
# mixtures, natural gradient, Fourier fits


def random_mixture_case(rng: RngStream, n: int = 1):
    critic = HybridCritic(
        (random_atom("trig", rng, n), random_atom("rbf", rng, n), random_atom("quadric", rng, n)),
        rng.normal(3),
    )
    comps = (
        (0.5, random_gaussian(rng, n)),
        (0.3, random_gaussian(rng, n)),
        (0.2, DiracPolicy(rng.uniform(-1.0, 1.0, n))),
    )
    return critic, MixturePolicy(comps)


def mixture_z_score(critic: HybridCritic, mix: MixturePolicy, n_samples: int, rng: RngStream) -> float:
    total = mixture_gradient(critic, mix).expectation
    mc, se = mc_expectation(critic, mix, n_samples, rng)
    return abs(total - mc) / se


def dirac_point_error(critic: HybridCritic, loc) -> float:
    upd = dirac_update(critic, DiracPolicy(loc))
    return max(
        abs(upd.expectation - float(critic.eval(loc))),
        float(np.max(np.abs(upd.grad_mean - np.asarray(critic.grad_a(loc), float)))),
    )


def check_mixture(n_samples: int = 200_000, seed: int = 15) -> list[CheckResult]:
    rng = RngStream(seed)
    out = []
    for n in (1, 2):
        critic, mix = random_mixture_case(rng, n)
        out.append(CheckResult(f"mixture_vs_mc[n{n}]", mixture_z_score(critic, mix, n_samples, rng), Z_LIMIT))
        loc = mix.components[-1][1].location
        out.append(CheckResult(f"mixture_dirac_point[n{n}]", dirac_point_error(critic, loc), 0.0))
    return out


def natural_identity_error(pol: GaussianPolicy, shape: SpdFactor, d) -> float:
    sig, s = pol.cov, shape.matrix()
    lhs = sig @ np.linalg.solve(sig + s, d)
    rhs = np.linalg.solve(s @ np.linalg.inv(sig) + np.eye(pol.dim), d)
    return relative_error(lhs, rhs)


def natural_half_error(pol: GaussianPolicy) -> float:
    """With S = Sigma the natural-gradient weighting is exactly I/2."""
    sig = pol.cov
    weight = np.linalg.inv(sig @ np.linalg.inv(sig) + np.eye(pol.dim))
    return float(np.max(np.abs(weight - 0.5 * np.eye(pol.dim))))


def natural_direction_error(atom: RbfAtom, pol: GaussianPolicy) -> float:
    """Sigma grad_mean / E must equal twice the natural direction returned by the library."""
    e = atom_expectation(atom, pol)
    lhs = pol.cov @ atom_grad_mean(atom, pol) / e
    return relative_error(lhs, 2.0 * rbf_natural_grad_mean(atom, pol))


def check_natural(count: int = 20, seed: int = 16) -> list[CheckResult]:
    rng = RngStream(seed)
    ident = half = direc = 0.0
    for i in range(count):
        n = 1 + i % 3
        pol = random_gaussian(rng, n)
        atom = random_atom("rbf", rng, n)
        ident = max(ident, natural_identity_error(pol, atom.shape, pol.mean - atom.loc))
        half = max(half, natural_half_error(pol))
        direc = max(direc, natural_direction_error(atom, pol))
    return [
        CheckResult("natural_gradient_identity", ident, 1e-10),
        CheckResult("natural_gradient_half_weight", half, 1e-10),
        CheckResult("natural_gradient_direction", direc, 1e-10),
    ]


def clipped_quadratic(x):
    return np.minimum(np.asarray(x, float) ** 2, 4.0)


def fourier_fit_errors(orders=(2, 5, 10, 20), target=clipped_quadratic, half_period=math.pi):
    """Max reconstruction error on interior points (|x| <= 0.8 L) for each order."""
    pts = np.linspace(-0.8 * half_period, 0.8 * half_period, 801)
    fits, errs = [], []
    for m in orders:
        critic = fit_fourier_series(lambda x: float(target(x)), half_period, m)
        fits.append(critic)
        errs.append(float(np.max(np.abs(critic.eval(pts[:, None]) - target(pts)))))
    return fits, errs


def fourier_expectation_excess(critic, recon_err: float, mean: float, sigma: float = 0.1,
                               target=clipped_quadratic, kinks=(-2.0, 2.0)) -> float:
    """How far ``|E_trig - E_target|`` exceeds the reconstruction error (<= 1e-6 passes)."""
    pol = GaussianPolicy.isotropic([mean], sigma)
    e_trig = hybrid_gradient(critic, pol)[0].expectation
    e_true = adaptive_expectation_1d(lambda a: target(a[..., 0]), pol, kinks)
    return abs(e_trig - e_true) - recon_err


def check_fourier() -> list[CheckResult]:
    fits, errs = fourier_fit_errors()
    increase = max(max(b - a for a, b in zip(errs[:-1], errs[1:])), 0.0)
    excess = max(
        fourier_expectation_excess(c, e, mu) for c, e in zip(fits, errs) for mu in (-1.9, -0.4, 0.0, 1.1, 2.0)
    )
    return [
        CheckResult("fourier_error_monotone", increase, 0.0),
        CheckResult("fourier_expectation_within_recon", max(excess, 0.0), 1e-6),
    ]


_GROUP_FUNCS = {
    "closed_form": check_closed_form,
    "gradients": check_gradients,
    "dft": check_dft,
    "aux": check_aux,
    "estimators": check_estimators,
    "mixture": check_mixture,
    "natural": check_natural,
    "fourier": check_fourier,
}


def run_checks(only: Iterable[str] | None = None) -> list[CheckResult]:
    groups = list(GROUPS) if not only else list(only)
    bad = [g for g in groups if g not in _GROUP_FUNCS]
    if bad:
        raise ValueError(f"unknown check group(s) {bad}; choose from {list(GROUPS)}")
    results = []
    for g in groups:
        results += _GROUP_FUNCS[g]()
    return results


def write_report(results: list[CheckResult], stream) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(("name", "max_error", "tolerance", "status"))
    for r in results:
        w.writerow((r.name, repr(r.max_error), repr(r.tolerance), r.status))
