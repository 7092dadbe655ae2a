import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fpg.analytic import (
    atom_expectation,
    atom_grad_cov,
    atom_grad_mean,
    atom_grad_scale,
    atom_update,
    hybrid_gradient,
    mixture_gradient,
    rbf_natural_grad_mean,
    scale_from_cov_grad,
    softmax,
    softmax_weight_gradient,
)
from fpg.core_math import DimensionError, RngStream, SpdFactor
from fpg.critic import AbsAtom, HybridCritic, QuadricAtom, RbfAtom, TrigAtom
from fpg.oracle import QuadratureSpec, finite_diff, quad_expectation
from fpg.policy import DiracPolicy, GaussianPolicy, MixturePolicy
from fpg.verification import (
    FAMILIES,
    closed_form_error,
    family_dims,
    gradient_errors,
    random_atom,
    random_gaussian,
)

INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def test_expectation_examples():
    pol = GaussianPolicy.from_cov([0.4, -0.2], [[0.5, 0.1], [0.1, 0.3]])
    assert atom_expectation(TrigAtom([0.0, 0.0], 0.0), pol) == 1.0
    unit = GaussianPolicy.isotropic([0.7], 1.0)
    assert math.isclose(atom_expectation(QuadricAtom([[1.0]], [0.7]), unit), 1.0, rel_tol=1e-15)
    half = GaussianPolicy.from_cov([0.3], [[0.5]])
    rbf = RbfAtom([0.3], SpdFactor.from_matrix([[0.5]]))
    assert math.isclose(atom_expectation(rbf, half), INV_SQRT_2PI, rel_tol=1e-14)
    assert abs(quad_expectation(HybridCritic.single(rbf), half, QuadratureSpec(48, 1)) - INV_SQRT_2PI) < 1e-12
    std = GaussianPolicy.isotropic([0.0], 1.0)
    assert math.isclose(atom_expectation(AbsAtom(), std), math.sqrt(2 / math.pi), rel_tol=1e-15)


def test_abs_requires_one_dimension():
    with pytest.raises(DimensionError):
        atom_expectation(AbsAtom(), GaussianPolicy.isotropic([0.0, 0.0], 1.0))
    with pytest.raises(DimensionError):
        atom_expectation(TrigAtom([1.0]), GaussianPolicy.isotropic([0.0, 0.0], 1.0))


def test_grad_mean_examples():
    pol = GaussianPolicy.isotropic([0.3, 0.1], 0.6)
    assert np.array_equal(atom_grad_mean(TrigAtom([0.0, 0.0], 0.4), pol), [0.0, 0.0])
    rbf = RbfAtom(pol.mean, SpdFactor.identity(2))
    assert np.array_equal(atom_grad_mean(rbf, pol), [0.0, 0.0])


def test_grad_cov_examples(rng):
    pol = random_gaussian(rng, 2)
    H = np.array([[1.0, 0.5], [0.5, -1.0]])
    assert np.array_equal(atom_grad_cov(QuadricAtom(H, [0.0, 1.0]), pol), H)
    f = np.array([0.7, -0.3])
    trig = TrigAtom(f, float(f @ pol.mean) - math.pi / 2)
    assert np.max(np.abs(atom_grad_cov(trig, pol))) < 1e-16


def test_grad_scale_examples(rng):
    unit = GaussianPolicy([0.2, -0.1], SpdFactor.identity(2))
    atom = random_atom("trig", rng, 2)
    assert np.array_equal(atom_grad_scale(atom, unit), 2 * atom_grad_cov(atom, unit))
    H = np.array([[2.0, 0.1], [0.1, 0.5]])
    assert np.array_equal(atom_grad_scale(QuadricAtom(H, [0.0, 0.0]), unit), 2 * H)


@pytest.mark.parametrize("family", FAMILIES)
def test_closed_forms_against_oracles(family):
    rng = RngStream(40)
    for i in range(12):
        n = family_dims(family)[i % len(family_dims(family))]
        atom, pol = random_atom(family, rng, n), random_gaussian(rng, n)
        assert closed_form_error(atom, pol) < 1e-7
        errs = gradient_errors(atom, pol)
        assert max(errs.values()) < 1e-5, errs


@pytest.mark.parametrize("family", FAMILIES)
def test_grad_mean_fd_tight(family):
    rng = RngStream(41)
    n = family_dims(family)[-1]
    atom, pol = random_atom(family, rng, n), random_gaussian(rng, n)
    fd = finite_diff(lambda m: atom_expectation(atom, GaussianPolicy(m, pol.scale)), pol.mean)
    g = atom_grad_mean(atom, pol)
    assert np.max(np.abs(g - fd)) <= 1e-6 * (np.max(np.abs(g)) + 1e-8)


@pytest.mark.parametrize("family", FAMILIES)
def test_grad_cov_symmetric_and_scale_identity(family):
    rng = RngStream(42)
    n = family_dims(family)[-1]
    atom, pol = random_atom(family, rng, n), random_gaussian(rng, n)
    upd = atom_update(atom, pol)
    assert np.array_equal(upd.grad_cov, upd.grad_cov.T)
    assert np.array_equal(upd.grad_scale, 2.0 * (pol.scale.lower @ upd.grad_cov))
    assert np.array_equal(upd.grad_scale, scale_from_cov_grad(pol, upd.grad_cov))


@given(st.floats(0.05, 4.0), st.floats(0.05, 4.0))
def test_trig_damping_monotone(t1, t2):
    atom = TrigAtom([0.8, -1.1], 0.3)
    lo, hi = sorted((t1, t2))
    e = [abs(atom_expectation(atom, GaussianPolicy.from_cov([0.2, 0.5], t * np.eye(2)))) for t in (lo, hi)]
    assert e[1] <= e[0]


def test_quadric_negative_definite_points_to_center(rng):
    H = -np.array([[2.0, 0.3], [0.3, 1.0]])
    l = np.array([0.5, -0.5])
    atom = QuadricAtom(H, l)
    for _ in range(50):
        pol = random_gaussian(rng, 2)
        assert atom_grad_mean(atom, pol) @ (l - pol.mean) > 0


def test_hybrid_singleton_and_linearity(rng):
    pol = random_gaussian(rng, 2)
    atom = random_atom("rbf", rng, 2)
    upd, cg = hybrid_gradient(HybridCritic.single(atom), pol)
    ref = atom_update(atom, pol)
    assert upd.expectation == ref.expectation
    assert np.array_equal(upd.grad_mean, ref.grad_mean)
    assert np.array_equal(upd.grad_cov, ref.grad_cov)
    assert cg[0] == ref.expectation

    critic = HybridCritic(tuple(random_atom(f, rng, 2) for f in ("trig", "rbf", "quadric")), rng.normal(3))
    one, _ = hybrid_gradient(critic, pol)
    two, _ = hybrid_gradient(critic.scaled(2.0), pol)
    assert two.expectation == 2 * one.expectation
    assert np.array_equal(two.grad_mean, 2 * one.grad_mean)
    assert np.array_equal(two.grad_cov, 2 * one.grad_cov)


def test_hybrid_coefficient_gradient(rng):
    pol = random_gaussian(rng, 1)
    critic = HybridCritic((random_atom("trig", rng, 1), AbsAtom()), [0.3, -0.2])
    _, cg = hybrid_gradient(critic, pol)
    fd = finite_diff(lambda c: hybrid_gradient(critic.with_coeffs(c), pol)[0].expectation, critic.coeffs)
    assert np.allclose(cg, fd, atol=1e-9)


def test_hybrid_five_atoms_against_quadrature(rng):
    pol = random_gaussian(rng, 2)
    atoms = tuple(random_atom(f, rng, 2) for f in ("trig", "trig", "rbf", "rbf", "quadric"))
    critic = HybridCritic(atoms, rng.normal(5))
    e = hybrid_gradient(critic, pol)[0].expectation
    q = quad_expectation(critic, pol, QuadratureSpec(48, 2))
    assert abs(e - q) <= 1e-7 * max(abs(q), 1e-8)


def test_mixture_degenerate_cases(rng):
    pol = random_gaussian(rng, 2)
    critic = HybridCritic(tuple(random_atom(f, rng, 2) for f in ("trig", "quadric")), [1.0, 0.5])
    mg = mixture_gradient(critic, MixturePolicy(((1.0, pol),)))
    ref, _ = hybrid_gradient(critic, pol)
    assert mg.expectation == ref.expectation
    assert np.array_equal(mg.per_component[0].grad_mean, ref.grad_mean)

    loc = np.array([0.3, -0.8])
    mg = mixture_gradient(critic, MixturePolicy(((1.0, DiracPolicy(loc)),)))
    assert mg.weight_grads[0] == critic.eval(loc)
    assert np.array_equal(mg.per_component[0].grad_mean, critic.grad_a(loc))


def test_mixture_linearity(rng):
    critic = HybridCritic((random_atom("trig", rng, 1), random_atom("rbf", rng, 1)), [1.0, 2.0])
    comps = ((0.6, random_gaussian(rng, 1)), (0.4, DiracPolicy([0.2])))
    mg = mixture_gradient(critic, MixturePolicy(comps))
    e0 = hybrid_gradient(critic, comps[0][1])[0].expectation
    assert mg.expectation == pytest.approx(0.6 * e0 + 0.4 * critic.eval([0.2]), rel=1e-15)


def test_softmax_weight_gradient(rng):
    logits = rng.normal(4)
    e = rng.normal(4)
    fd = finite_diff(lambda z: softmax(z) @ e, logits)
    assert np.allclose(softmax_weight_gradient(logits, e), fd, atol=1e-9)
    assert math.isclose(softmax(logits).sum(), 1.0, rel_tol=1e-15)


def test_natural_gradient_examples(rng):
    pol = random_gaussian(rng, 2)
    at_peak = RbfAtom(pol.mean, SpdFactor.from_matrix(np.eye(2)))
    assert np.array_equal(rbf_natural_grad_mean(at_peak, pol), [0.0, 0.0])
    same = RbfAtom([0.1, 0.4], pol.scale)
    assert np.allclose(rbf_natural_grad_mean(same, pol), -0.25 * (pol.mean - same.loc), atol=1e-15)


def test_natural_gradient_matches_fisher_preconditioning(rng):
    for n in (1, 2, 3):
        pol = random_gaussian(rng, n)
        atom = random_atom("rbf", rng, n)
        e = atom_expectation(atom, pol)
        # the Fisher matrix for the mean is Sigma^{-1}; its inverse applied to I_mu over E
        lhs = pol.cov @ atom_grad_mean(atom, pol) / e
        assert np.allclose(lhs, 2.0 * rbf_natural_grad_mean(atom, pol), rtol=1e-10, atol=1e-14)
