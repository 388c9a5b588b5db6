import math

import numpy as np
import pytest

from ddpm_lab import (
    PerturbationSpec,
    estimate_eps_score,
    exact_provider,
    isotropic_gaussian,
    perturbed_provider,
    sample_forward,
    score_exact,
    standard_gaussian,
)


def test_exact_provider_delegates_bit_for_bit(sched64, gmm_2d):
    prov = exact_provider(gmm_2d, sched64)
    x = np.array([0.4, -0.9])
    for t in (1, 20, 64):
        assert np.array_equal(prov(t, x), score_exact(gmm_2d, sched64, t, x))


def test_exact_provider_standard_gaussian(sched64):
    prov = exact_provider(standard_gaussian(2), sched64)
    x = np.array([1.0, -2.0])
    for t in (3, 40):
        assert np.allclose(prov(t, x), -x, rtol=1e-12)


def test_exact_provider_point_mass(sched64):
    from ddpm_lab import point_masses
    tgt = point_masses([(1.0, [0.0])])
    prov = exact_provider(tgt, sched64)
    t = 15
    x = np.array([0.6])
    assert np.allclose(prov(t, x), -x / (1 - sched64.alphabar_at(t)), rtol=1e-12)


def test_zero_magnitude_bias_is_identity(sched64):
    tgt = standard_gaussian(2)
    base = exact_provider(tgt, sched64)
    pert = perturbed_provider(base, PerturbationSpec("constant_bias", 0.0, 5))
    x = np.array([0.3, 0.7])
    assert np.array_equal(pert(9, x), base(9, x))


def test_constant_bias_eps_score_is_exact(sched64):
    tgt = standard_gaussian(2)
    base = exact_provider(tgt, sched64)
    pert = perturbed_provider(base, PerturbationSpec("constant_bias", 0.05, 5))
    est = estimate_eps_score(pert, tgt, sched64, n=200, seed=1)
    # deterministic deviation: no Monte-Carlo variance at all
    assert est.value == pytest.approx(0.05, rel=1e-12)
    assert est.stderr == pytest.approx(0.0, abs=1e-15)


def test_exact_provider_eps_score_is_zero(sched64):
    tgt = standard_gaussian(1)
    est = estimate_eps_score(exact_provider(tgt, sched64), tgt, sched64, n=50, seed=2)
    assert est.value == 0.0


def test_bias_homogeneity(sched64):
    tgt = isotropic_gaussian(3, 1.0)
    base = exact_provider(tgt, sched64)
    e1 = estimate_eps_score(
        perturbed_provider(base, PerturbationSpec("constant_bias", 0.03, 7)),
        tgt, sched64, n=64, seed=3).value
    e2 = estimate_eps_score(
        perturbed_provider(base, PerturbationSpec("constant_bias", 0.06, 7)),
        tgt, sched64, n=64, seed=3).value
    assert e2 == pytest.approx(2 * e1, rel=1e-12)


def test_scaled_perturbation_analytic_value(sched64):
    # s* = -x for the standard Gaussian, so the time-averaged squared error
    # of (1+rho) s* is rho^2 E||X_t||^2 = rho^2 d at every step.
    d, rho = 4, 0.1
    tgt = standard_gaussian(d)
    base = exact_provider(tgt, sched64)
    pert = perturbed_provider(base, PerturbationSpec("scaled", rho))
    est = estimate_eps_score(pert, tgt, sched64, n=4000, seed=4)
    expected = rho * math.sqrt(d)
    assert abs(est.value - expected) < 3 * max(est.stderr, 1e-6)


def test_provider_purity(sched64):
    tgt = standard_gaussian(2)
    pert = perturbed_provider(exact_provider(tgt, sched64),
                              PerturbationSpec("constant_bias", 0.2, 11))
    x = np.array([0.5, -0.1])
    assert np.array_equal(pert(7, x), pert(7, x))


def test_bias_direction_is_unit_and_fixed():
    from ddpm_lab.scores import bias_direction
    u1 = bias_direction(5, 42)
    u2 = bias_direction(5, 42)
    assert np.array_equal(u1, u2)
    assert np.linalg.norm(u1) == pytest.approx(1.0, rel=1e-12)
    assert not np.array_equal(u1, bias_direction(5, 43))


def test_perturbation_spec_validation():
    with pytest.raises(ValueError):
        PerturbationSpec("weird", 0.1)
    with pytest.raises(ValueError):
        PerturbationSpec("constant_bias", -0.1)


def test_estimate_rejects_bad_n(sched64):
    tgt = standard_gaussian(1)
    with pytest.raises(ValueError):
        estimate_eps_score(exact_provider(tgt, sched64), tgt, sched64, n=0, seed=0)
