import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fpg.core_math import DimensionError, RngStream, SpdFactor, gaussian_pdf
from fpg.critic import (
    AbsAtom,
    HybridCritic,
    NonDifferentiablePointError,
    QuadricAtom,
    RbfAtom,
    TrigAtom,
    UnsupportedAtomError,
    constant_critic,
    eval as critic_eval,
    fit_fourier_series,
    fourier_partial_sum_error,
    grad_a,
    hessian_a,
    sarsa_update,
    td_error,
)
from fpg.oracle import finite_diff
from fpg.trainer import turntable_critic
from fpg.verification import random_atom

SMOOTH = ("trig", "rbf", "quadric")


def test_eval_examples():
    assert critic_eval(HybridCritic.single(TrigAtom([1.0], 0.0)), [0.0]) == 1.0
    assert critic_eval(HybridCritic.single(QuadricAtom([[1.0]], [0.0])), [2.0]) == 4.0
    hybrid = HybridCritic((TrigAtom([1.0], 0.0), QuadricAtom([[1.0]], [0.0])), [1.0, 2.0])
    assert math.isclose(critic_eval(hybrid, [math.pi]), 2 * math.pi**2 - 1, rel_tol=1e-15)


def test_rbf_value_is_gaussian_pdf(rng):
    atom = random_atom("rbf", rng, 2)
    a = rng.normal(2)
    assert math.isclose(atom.value(a), gaussian_pdf(a, atom.loc, atom.shape.matrix()), rel_tol=1e-13)


def test_eval_is_linear(rng):
    atoms = tuple(random_atom(f, rng, 2) for f in SMOOTH)
    c = rng.normal(3)
    a = rng.normal((20, 2))
    parts = sum(ci * HybridCritic.single(at).eval(a) for ci, at in zip(c, atoms))
    assert np.array_equal(HybridCritic(atoms, c).eval(a), parts)


def test_trig_values_bounded(rng):
    atom = random_atom("trig", rng, 3)
    v = atom.value(rng.normal((500, 3)) * 10)
    assert np.all(np.abs(v) <= 1.0)


def test_grad_examples():
    assert np.allclose(grad_a(HybridCritic.single(TrigAtom([1.0], 0.0)), [math.pi / 2]), [-1.0])
    g = grad_a(HybridCritic.single(QuadricAtom(np.eye(2), [0.0, 0.0])), [1.0, 2.0])
    assert np.array_equal(g, [2.0, 4.0])
    assert np.array_equal(AbsAtom().grad([-0.3]), [-1.0])
    with pytest.raises(NonDifferentiablePointError):
        AbsAtom().grad([0.0])


@pytest.mark.parametrize("family", SMOOTH)
@pytest.mark.parametrize("n", [1, 2, 3])
def test_grad_matches_finite_differences(family, n):
    rng = RngStream(100 + n)
    critic = HybridCritic.single(random_atom(family, rng, n))
    for a in rng.normal((20, n)):
        fd = finite_diff(critic.eval, a)
        g = critic.grad_a(a)
        assert np.max(np.abs(g - fd)) <= 1e-6 * (np.max(np.abs(g)) + 1e-8) + 1e-10


@pytest.mark.parametrize("family", SMOOTH)
def test_hessian_matches_finite_differences(family):
    rng = RngStream(7)
    critic = HybridCritic.single(random_atom(family, rng, 2))
    for a in rng.normal((20, 2)):
        h = critic.hessian_a(a)
        assert np.array_equal(h, h.T)
        rows = np.array([finite_diff(lambda x: critic.grad_a(x)[i], a) for i in range(2)])
        assert np.max(np.abs(h - rows)) <= 1e-5 * (np.max(np.abs(h)) + 1e-8)


def test_hessian_examples(rng):
    H = np.array([[1.0, 0.3], [0.3, -2.0]])
    q = HybridCritic.single(QuadricAtom(H, [0.5, 0.5]))
    assert np.array_equal(hessian_a(q, rng.normal(2)), 2 * H)
    assert np.allclose(hessian_a(HybridCritic.single(TrigAtom([1.0], 0.0)), [0.0]), [[-1.0]])
    with pytest.raises(UnsupportedAtomError):
        hessian_a(HybridCritic((TrigAtom([1.0]), AbsAtom())), [0.5])


def test_batched_shapes(rng):
    critic = HybridCritic(tuple(random_atom(f, rng, 3) for f in SMOOTH))
    a = rng.normal((7, 3))
    assert critic.eval(a).shape == (7,)
    assert critic.grad_a(a).shape == (7, 3)
    assert critic.hessian_a(a).shape == (7, 3, 3)


def test_construction_errors():
    with pytest.raises(ValueError):
        HybridCritic(())
    with pytest.raises(ValueError):
        HybridCritic((TrigAtom([1.0]),), [1.0, 2.0])
    with pytest.raises(DimensionError):
        HybridCritic((TrigAtom([1.0]), TrigAtom([1.0, 2.0])))
    with pytest.raises(ValueError):
        QuadricAtom([[1.0, 2.0], [0.0, 1.0]], [0.0, 0.0])
    with pytest.raises(DimensionError):
        HybridCritic.single(TrigAtom([1.0, 1.0])).eval([0.0])


def test_phase_shift_touches_only_trig():
    c = HybridCritic((TrigAtom([1.0], 0.2), AbsAtom()), [1.0, -0.5])
    shifted = c.with_phase_shift(0.3)
    assert math.isclose(shifted.atoms[0].phase, 0.5)
    assert shifted.atoms[1] is c.atoms[1]
    assert np.array_equal(shifted.coeffs, c.coeffs)


def test_constant_critic(rng):
    assert np.all(constant_critic(3.5, 2).eval(rng.normal((10, 2))) == 3.5)


# ---------------------------------------------------------------------------
# Fourier fits


def test_fourier_cosine_orthogonality():
    critic = fit_fourier_series(math.cos, math.pi, 1)
    assert np.allclose(critic.coeffs, [0.0, 1.0, 0.0], atol=1e-10)
    assert critic.atoms[2].phase == math.pi / 2


def test_fourier_constant():
    critic = fit_fourier_series(lambda x: 3.0, 2.0, 3)
    assert abs(critic.coeffs[0] - 3.0) < 1e-13
    assert np.allclose(critic.coeffs[1:], 0.0, atol=1e-12)
    assert abs(critic.eval([0.7]) - 3.0) < 1e-12


def test_fourier_sawtooth_improves():
    pts = np.linspace(-0.8 * math.pi, 0.8 * math.pi, 401)
    errs = [fourier_partial_sum_error(fit_fourier_series(lambda x: x, math.pi, m), lambda x: x, pts)
            for m in (5, 10)]
    assert errs[1] < errs[0]


def test_fourier_smooth_target_monotone():
    target = lambda x: math.exp(math.cos(x))  # noqa: E731
    pts = np.linspace(-math.pi, math.pi, 301)
    errs = [fourier_partial_sum_error(fit_fourier_series(target, math.pi, m), target, pts)
            for m in (2, 5, 10, 20)]
    assert all(b <= a for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 1e-12


def test_fourier_errors():
    with pytest.raises(ValueError):
        fit_fourier_series(lambda x: float("nan"), 1.0, 2)
    with pytest.raises(ValueError):
        fit_fourier_series(math.cos, 0.0, 2)
    with pytest.raises(ValueError):
        fit_fourier_series(math.cos, 1.0, -1)


# ---------------------------------------------------------------------------
# SARSA


def test_sarsa_zero_td_keeps_coeffs():
    critic = HybridCritic.single(TrigAtom([0.0]), 2.0)
    # Q = 2 everywhere; r = 2 (1 - gamma) gives delta = 0
    out = sarsa_update(critic, 0.0, [0.1], 2.0 * 0.5, [0.4], 0.0, 0.3, 0.5)
    assert np.array_equal(out.coeffs, critic.coeffs)


def test_sarsa_scalar_rule():
    critic = HybridCritic.single(TrigAtom([0.0]), 0.0)
    out = sarsa_update(critic, 0.0, [0.0], 1.0, [0.0], 0.0, 0.1, 0.0)
    assert math.isclose(out.coeffs[0], 0.1)
    assert out.atoms == critic.atoms


@pytest.mark.parametrize("alpha,gamma", [(0.0, 0.5), (1.5, 0.5), (0.1, 1.0), (0.1, -0.1)])
def test_sarsa_rejects_bad_rates(alpha, gamma):
    with pytest.raises(ValueError):
        sarsa_update(constant_critic(0.0), 0.0, [0.0], 0.0, [0.0], 0.0, alpha, gamma)


def test_sarsa_converges_on_fixed_dataset():
    # transitions sampled once, then replayed; the turntable critic can fit them
    rng = RngStream(21)
    gamma = 0.5
    k = 200
    x = rng.uniform(-math.pi, math.pi, k)
    a = rng.uniform(-1.0, 1.0, k)
    x_next = rng.uniform(-math.pi, math.pi, k)
    a_next = rng.uniform(-1.0, 1.0, k)
    true = turntable_critic("oracle").with_coeffs([1.3, -0.4])
    r = np.array([
        true.with_phase_shift(-xi).eval([ai]) - gamma * true.with_phase_shift(-xn).eval([an])
        for xi, ai, xn, an in zip(x, a, x_next, a_next)
    ])

    def mean_abs_td(c):
        return np.mean([abs(td_error(c, [ai], ri, [an], gamma, -xi, -xn))
                        for xi, ai, ri, xn, an in zip(x, a, r, x_next, a_next)])

    critic = turntable_critic("zero")
    start = mean_abs_td(critic)
    for i in range(5000):
        j = i % k
        critic = sarsa_update(critic, -x[j], [a[j]], r[j], [a_next[j]], -x_next[j], 0.1, gamma)
    assert mean_abs_td(critic) < 0.1 * start


@given(st.floats(-3, 3), st.floats(-3, 3).filter(lambda v: abs(v) > 1e-3))
def test_sarsa_only_changes_coefficients(phase, act):
    critic = turntable_critic()
    out = sarsa_update(critic, phase, [act], 0.3, [0.2], 0.1, 0.5, 0.9)
    assert out.atoms == critic.atoms
    assert out.coeffs.shape == critic.coeffs.shape
