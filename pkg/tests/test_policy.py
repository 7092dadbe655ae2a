import cmath
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fpg.core_math import DimensionError, RngStream, SpdFactor, gaussian_pdf
from fpg.oracle import QuadratureSpec, finite_diff, quad_expectation
from fpg.policy import DiracPolicy, GaussianPolicy, MixturePolicy, sample

from .conftest import spd


def test_degenerate_gaussian_sample_is_mean(rng):
    pol = GaussianPolicy([0.3, -1.0], SpdFactor.diag([1e-12, 1e-12]))
    assert np.allclose(sample(pol, rng), pol.mean, atol=1e-5)


def test_standard_normal_sample_mean(rng):
    pol = GaussianPolicy(np.zeros(3), SpdFactor.identity(3))
    draws = pol.sample(rng, 100_000)
    assert np.all(np.abs(draws.mean(axis=0)) < 0.02)


def test_sample_uses_transposed_factor(rng):
    cov = spd(rng, 3)
    pol = GaussianPolicy.from_cov(np.zeros(3), cov)
    draws = pol.sample(rng, 200_000)
    assert np.allclose(np.cov(draws.T), cov, atol=0.02)


def test_dirac_mixture_samples_exact(rng):
    mix = MixturePolicy(((1.0, DiracPolicy([2.0])),))
    assert np.all(sample(mix, rng, 1000) == 2.0)
    assert np.array_equal(sample(mix, rng), np.array([2.0]))


def test_mixture_component_frequencies(rng):
    mix = MixturePolicy(((0.25, DiracPolicy([-5.0])), (0.75, GaussianPolicy.isotropic([5.0], 0.1))))
    draws = mix.sample(rng, 40_000)[:, 0]
    assert abs(np.mean(draws < 0) - 0.25) < 0.01


@pytest.mark.parametrize(
    "comps",
    [
        (),
        ((0.5, DiracPolicy([0.0])),),
        ((1.2, DiracPolicy([0.0])), (-0.2, DiracPolicy([1.0]))),
        ((0.5, DiracPolicy([0.0])), (0.5, DiracPolicy([0.0, 1.0]))),
    ],
)
def test_mixture_rejects_invalid(comps):
    with pytest.raises(ValueError):
        MixturePolicy(comps)


def test_mixture_weight_tolerance():
    MixturePolicy(((0.5, DiracPolicy([0.0])), (0.5 + 1e-13, DiracPolicy([1.0]))))
    with pytest.raises(ValueError):
        MixturePolicy(((0.5, DiracPolicy([0.0])), (0.5 + 1e-10, DiracPolicy([1.0]))))


def test_pdf_delegates(rng):
    cov = spd(rng, 2)
    pol = GaussianPolicy.from_cov([0.1, 0.2], cov)
    a = rng.normal(2)
    assert math.isclose(pol.pdf(a), gaussian_pdf(a, pol.mean, pol.cov), rel_tol=1e-13)
    with pytest.raises(DimensionError):
        pol.pdf([0.0])


@pytest.mark.parametrize("n", [1, 2, 3])
def test_pdf_integrates_to_one(rng, n):
    pol = GaussianPolicy.from_cov(rng.normal(n), spd(rng, n))
    wide = GaussianPolicy.from_cov(pol.mean, 2.0 * pol.cov)
    total = quad_expectation(lambda a: pol.pdf(a) / wide.pdf(a), wide, QuadratureSpec(40, n))
    assert abs(total - 1.0) < 1e-8


def test_auxiliary_pdf(rng):
    pol = GaussianPolicy.from_cov([0.5, -0.2], spd(rng, 2))
    peak = gaussian_pdf(np.zeros(2), np.zeros(2), pol.cov)
    assert math.isclose(pol.auxiliary_pdf(np.zeros(2)), peak, rel_tol=1e-14)
    a = pol.sample(rng, 1000)
    assert np.max(np.abs(pol.auxiliary_pdf(pol.mean - a) - pol.pdf(a))) <= 1e-15
    x = rng.normal((50, 2))
    assert np.allclose(pol.auxiliary_pdf(x), pol.auxiliary_pdf(-x), rtol=1e-14, atol=0)


def test_density_derivatives_match_finite_differences(rng):
    pol = GaussianPolicy.from_cov([0.2], [[0.7]])
    for a in pol.sample(rng, 5):
        fd = finite_diff(pol.pdf, a)
        assert np.allclose(pol.pdf_grad(a), fd, atol=1e-9)
        fd2 = finite_diff(lambda x: pol.pdf_grad(x)[0], a)
        assert np.allclose(pol.pdf_hess(a)[0], fd2, atol=1e-8)


def test_characteristic_fn_examples():
    pol = GaussianPolicy.isotropic([0.4], 1.0)
    assert pol.characteristic_fn([0.0]) == 1
    assert pol.characteristic_fn([0.0], centered=True) == 1
    assert abs(pol.characteristic_fn([1.0], centered=True) - math.exp(-0.5)) < 1e-15
    assert pol.characteristic_fn([1.0], centered=True).imag == 0.0
    with pytest.raises(DimensionError):
        pol.characteristic_fn([1.0, 2.0])


@pytest.mark.parametrize("n", [1, 2])
def test_characteristic_fn_matches_quadrature(rng, n):
    pol = GaussianPolicy.from_cov(rng.normal(n), spd(rng, n))
    omega = rng.normal(n)
    re = quad_expectation(lambda a: np.cos(a @ omega), pol, QuadratureSpec(48, n))
    im = quad_expectation(lambda a: np.sin(a @ omega), pol, QuadratureSpec(48, n))
    # E[e^{i w.a}] is returned; the transform with e^{-i w.a} is its conjugate
    assert abs(pol.characteristic_fn(omega) - complex(re, im)) < 1e-6
    assert abs(pol.characteristic_fn(omega).conjugate() - complex(re, -im)) < 1e-6


@given(st.lists(st.floats(-20, 20), min_size=2, max_size=2), st.floats(0.05, 3.0))
def test_characteristic_fn_bounded(omega, sigma):
    pol = GaussianPolicy.isotropic([0.3, -0.7], sigma)
    assert abs(pol.characteristic_fn(omega)) <= 1.0 + 1e-15
    assert abs(cmath.phase(pol.characteristic_fn(omega, centered=True))) == 0.0


def test_gaussian_rejects_dim_mismatch():
    with pytest.raises(DimensionError):
        GaussianPolicy([0.0, 1.0], SpdFactor.identity(3))


def test_replay_is_deterministic():
    pol = GaussianPolicy.isotropic([0.0, 0.0], 0.3)
    assert np.array_equal(pol.sample(RngStream(5), 100), pol.sample(RngStream(5), 100))
