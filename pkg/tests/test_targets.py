import json
import math

import numpy as np
import pytest
from scipy.integrate import quad

from ddpm_lab import (
    EmbeddedTarget,
    GaussianMixtureTarget,
    build_schedule,
    covering_number,
    first_moment_bound,
    gaussian_mixture,
    intrinsic_dimension_estimate,
    isotropic_gaussian,
    load_target,
    marginal_log_density,
    point_masses,
    posterior_stats,
    sample_forward,
    schedule_from_betas,
    score_exact,
    standard_gaussian,
    target_hash,
    target_to_dict,
)
from ddpm_lab.rng import make_rng
from conftest import fd_gradient, fd_jacobian


# ---------------------------------------------------------------------------
# marginal_log_density
# ---------------------------------------------------------------------------


def test_standard_gaussian_marginal_is_standard_normal(sched64):
    # abar * 1 + (1 - abar) = 1 at every step.
    tgt = standard_gaussian(3)
    x = np.array([0.4, -1.0, 2.2])
    expected = -0.5 * (x @ x) - 1.5 * math.log(2 * math.pi)
    for t in (1, 17, 64):
        assert marginal_log_density(tgt, sched64, t, x) == pytest.approx(expected, rel=1e-12)


def test_point_mass_marginal_at_half_signal():
    # Explicit-beta schedule pins abar_1 = 0.5 exactly.
    sched = schedule_from_betas([0.5, 0.1])
    tgt = point_masses([(1.0, [0.0])])
    got = marginal_log_density(tgt, sched, 1, np.array([0.0]))
    assert got == pytest.approx(math.log(1.0 / math.sqrt(2 * math.pi * 0.5)), rel=1e-14)


def test_two_atom_marginal_matches_quadrature_oracle(sched64, two_atoms_1d):
    # Oracle: integrate the forward transition kernel against the atom law,
    # written out by hand, independent of the package's mixture code.
    t = 40
    ab = sched64.alphabar_at(t)

    def density_oracle(x):
        var = 1.0 - ab
        out = 0.0
        for w, atom in ((0.5, 1.0), (0.5, -1.0)):
            out += w * math.exp(-(x - math.sqrt(ab) * atom) ** 2 / (2 * var)) \
                / math.sqrt(2 * math.pi * var)
        return out

    for x in (0.0, 0.3, -1.7, 2.5):
        got = marginal_log_density(two_atoms_1d, sched64, t, np.array([x]))
        assert got == pytest.approx(math.log(density_oracle(x)), rel=1e-12)


def test_gmm_marginal_matches_quadrature_oracle(sched64, gmm_1d):
    # Oracle: numeric integral of kernel(x | x0) p0(x0) dx0.
    t = 25
    ab = sched64.alphabar_at(t)
    var_noise = 1.0 - ab

    def p0(x0):
        out = 0.0
        for w, m, v in ((0.3, -1.0, 0.5), (0.7, 1.5, 2.0)):
            out += w * math.exp(-(x0 - m) ** 2 / (2 * v)) / math.sqrt(2 * math.pi * v)
        return out

    def kernel(x, x0):
        return math.exp(-(x - math.sqrt(ab) * x0) ** 2 / (2 * var_noise)) \
            / math.sqrt(2 * math.pi * var_noise)

    for x in (0.0, 1.2, -2.0):
        oracle, err = quad(lambda x0: kernel(x, x0) * p0(x0), -60, 60,
                           limit=400, epsabs=1e-13, epsrel=1e-12)
        assert err < 1e-9 * oracle
        got = marginal_log_density(gmm_1d, sched64, t, np.array([x]))
        assert got == pytest.approx(math.log(oracle), rel=1e-9)


def test_marginal_rejects_bad_step(sched64):
    with pytest.raises(ValueError):
        marginal_log_density(standard_gaussian(1), sched64, 0, np.array([0.0]))
    with pytest.raises(ValueError):
        marginal_log_density(standard_gaussian(1), sched64, 65, np.array([0.0]))


# ---------------------------------------------------------------------------
# score_exact
# ---------------------------------------------------------------------------


def test_standard_gaussian_score_is_negative_x(sched64):
    tgt = standard_gaussian(2)
    x = np.array([0.7, -0.2])
    for t in (1, 30, 64):
        assert np.allclose(score_exact(tgt, sched64, t, x), -x, rtol=1e-12)


def test_single_point_mass_score(sched64):
    tgt = point_masses([(1.0, [0.0])])
    t = 22
    x = np.array([0.9])
    expected = -x / (1.0 - sched64.alphabar_at(t))
    assert np.allclose(score_exact(tgt, sched64, t, x), expected, rtol=1e-12)


def test_two_atom_score_matches_finite_difference(sched64, two_atoms_1d):
    t = 40
    x = np.array([0.3])
    fd = fd_gradient(lambda p: marginal_log_density(two_atoms_1d, sched64, t, p), x, 1e-5)
    s = score_exact(two_atoms_1d, sched64, t, x)
    assert np.linalg.norm(fd - s) / np.linalg.norm(s) < 1e-5


def test_score_fd_consistency_random_triples(sched64, gmm_2d, two_atoms_1d, gmm_1d):
    rng = make_rng(3, 77)
    zoo = [gmm_2d, two_atoms_1d, gmm_1d, standard_gaussian(2)]
    for i in range(40):
        tgt = zoo[i % len(zoo)]
        t = int(rng.integers(1, 65))
        x = sample_forward(tgt, sched64, t, 1, 1000 + i)[0]
        h = 1e-5 * (1.0 + float(np.linalg.norm(x)))
        fd = fd_gradient(lambda p: marginal_log_density(tgt, sched64, t, p), x, h)
        s = score_exact(tgt, sched64, t, x)
        assert np.linalg.norm(fd - s) / (1e-9 + np.linalg.norm(s)) < 1e-4


def test_score_batch_matches_single(sched64, gmm_2d):
    xs = np.array([[0.1, 0.2], [1.5, -0.4], [-2.0, 0.8]])
    batch = score_exact(gmm_2d, sched64, 30, xs)
    for i, x in enumerate(xs):
        assert np.allclose(batch[i], score_exact(gmm_2d, sched64, 30, x), rtol=1e-12)


# ---------------------------------------------------------------------------
# posterior_stats
# ---------------------------------------------------------------------------


def test_point_mass_posterior_is_deterministic(sched64):
    # Deterministic posterior: the residual second moment equals g g^T, so
    # J equals the identity and I - J (the noise covariance) vanishes.
    tgt = point_masses([(1.0, [0.4, -0.6])])
    ps = posterior_stats(tgt, sched64, 20, np.array([1.0, 0.5]))
    assert np.allclose(ps.J, np.eye(2), atol=1e-12)


def test_standard_gaussian_jacobian(sched64):
    # Hand derivation from the residual-moment formula (checked against the
    # finite-difference oracle below): J = (1 - abar) I for N(0, I).
    tgt = standard_gaussian(2)
    t = 33
    ab = sched64.alphabar_at(t)
    ps = posterior_stats(tgt, sched64, t, np.array([0.3, 1.1]))
    assert np.allclose(ps.J, (1.0 - ab) * np.eye(2), rtol=1e-10, atol=1e-12)


def test_jacobian_matches_finite_difference(sched64, gmm_2d, two_atoms_1d):
    rng = make_rng(4, 78)
    for i, tgt in enumerate([gmm_2d, two_atoms_1d, gmm_2d, two_atoms_1d]):
        t = int(rng.integers(2, 65))
        x = sample_forward(tgt, sched64, t, 1, 2000 + i)[0]
        h = 1e-5 * (1.0 + float(np.linalg.norm(x)))
        J_fd = fd_jacobian(lambda p: posterior_stats(tgt, sched64, t, p).g, x, h)
        ps = posterior_stats(tgt, sched64, t, x)
        assert np.linalg.norm(J_fd - ps.J) / (1e-9 + np.linalg.norm(ps.J)) < 1e-4


def test_identity_minus_jacobian_psd(sched64, gmm_2d, two_atoms_1d):
    rng = make_rng(5, 79)
    for i in range(60):
        tgt = (gmm_2d, two_atoms_1d)[i % 2]
        t = int(rng.integers(1, 65))
        x = sample_forward(tgt, sched64, t, 1, 3000 + i)[0]
        ps = posterior_stats(tgt, sched64, t, x)
        ImJ = np.eye(tgt.d) - ps.J
        assert np.allclose(ImJ, ImJ.T, atol=1e-10)
        lam = np.linalg.eigvalsh(ImJ).min()
        assert lam >= -1e-8 * (1.0 + np.trace(ImJ))


def test_posterior_g_consistent_with_score(sched64, gmm_1d):
    t = 12
    x = np.array([0.25])
    ps = posterior_stats(gmm_1d, sched64, t, x)
    s = score_exact(gmm_1d, sched64, t, x)
    assert np.allclose(ps.g, -(1.0 - sched64.alphabar_at(t)) * s, rtol=1e-11)
    assert ps.log_density == pytest.approx(
        marginal_log_density(gmm_1d, sched64, t, x), rel=1e-12)


# ---------------------------------------------------------------------------
# sample_forward
# ---------------------------------------------------------------------------


def test_sample_forward_moments_point_mass(sched64):
    tgt = point_masses([(1.0, [0.0, 0.0])])
    t, n = 20, 100_000
    ab = sched64.alphabar_at(t)
    x = sample_forward(tgt, sched64, t, n, seed=9)
    se_mean = math.sqrt((1 - ab) / n)
    assert np.all(np.abs(x.mean(axis=0)) < 4 * se_mean)
    se_var = (1 - ab) * math.sqrt(2.0 / (n - 1))
    assert np.all(np.abs(x.var(axis=0) - (1 - ab)) < 4 * se_var)


def test_sample_forward_deterministic(sched64, gmm_2d):
    a = sample_forward(gmm_2d, sched64, 10, 50, seed=3)
    b = sample_forward(gmm_2d, sched64, 10, 50, seed=3)
    assert np.array_equal(a, b)
    c = sample_forward(gmm_2d, sched64, 10, 50, seed=4)
    assert not np.array_equal(a, c)


def test_sample_forward_mixture_covariance(sched512, gmm_2d):
    # At t = T the samples must match the analytic mixture moments.
    t, n = 512, 100_000
    ab = sched512.alphabar_at(t)
    w = gmm_2d.weights
    mu = gmm_2d.means
    mean0 = w @ mu
    second = sum(w[i] * (gmm_2d.covs[i] + np.outer(mu[i], mu[i])) for i in range(2))
    cov0 = second - np.outer(mean0, mean0)
    expected = ab * cov0 + (1 - ab) * np.eye(2)
    x = sample_forward(gmm_2d, sched512, t, n, seed=11)
    emp = np.cov(x.T)
    # 4 standard errors, SE ~ cov * sqrt(2/n) entrywise scale
    tol = 4 * np.sqrt((np.outer(np.diag(expected), np.diag(expected))
                       + expected ** 2) / n)
    assert np.all(np.abs(emp - expected) < tol)


def test_sample_forward_rejects_bad_n(sched64):
    with pytest.raises(ValueError):
        sample_forward(standard_gaussian(1), sched64, 1, 0, seed=0)


# ---------------------------------------------------------------------------
# embedded targets
# ---------------------------------------------------------------------------


def _embedded_fixture():
    base = point_masses([(0.5, [1.0]), (0.5, [-1.0])])
    rng = make_rng(21, 5)
    embed, _ = np.linalg.qr(rng.standard_normal((3, 1)))
    return EmbeddedTarget(base=base, embed=embed, offset=np.array([0.3, -0.2, 0.1]))


def test_embedded_requires_orthonormal_columns():
    base = point_masses([(1.0, [0.0])])
    with pytest.raises(ValueError):
        EmbeddedTarget(base=base, embed=np.array([[1.0], [1.0], [0.0]]),
                       offset=np.zeros(3))


def test_embedded_requires_ambient_larger_than_base():
    base = point_masses([(1.0, [0.0, 0.0])])
    with pytest.raises(ValueError):
        EmbeddedTarget(base=base, embed=np.eye(2), offset=np.zeros(2))


def test_embedded_score_matches_finite_difference(sched64):
    tgt = _embedded_fixture()
    t = 30
    x = sample_forward(tgt, sched64, t, 1, seed=77)[0]
    h = 1e-5 * (1.0 + float(np.linalg.norm(x)))
    fd = fd_gradient(lambda p: marginal_log_density(tgt, sched64, t, p), x, h)
    s = score_exact(tgt, sched64, t, x)
    assert np.linalg.norm(fd - s) / np.linalg.norm(s) < 1e-4


def test_embedded_score_equivariance(sched64):
    # Ambient score = embed @ base score at the projected point, plus the
    # normal-component pull -x_perp/(1-abar).
    tgt = _embedded_fixture()
    t = 18
    ab = sched64.alphabar_at(t)
    x = np.array([0.5, 0.2, -0.4])
    centered = x - math.sqrt(ab) * tgt.offset
    z = tgt.embed.T @ centered
    x_perp = centered - tgt.embed @ z
    expected = tgt.embed @ score_exact(tgt.base, sched64, t, z) - x_perp / (1 - ab)
    assert np.allclose(score_exact(tgt, sched64, t, x), expected, rtol=1e-12)


def test_embedded_jacobian_psd_and_fd(sched64):
    tgt = _embedded_fixture()
    t = 25
    x = sample_forward(tgt, sched64, t, 1, seed=78)[0]
    ps = posterior_stats(tgt, sched64, t, x)
    ImJ = np.eye(3) - ps.J
    assert np.linalg.eigvalsh(ImJ).min() >= -1e-8 * (1 + np.trace(ImJ))
    h = 1e-5 * (1.0 + float(np.linalg.norm(x)))
    J_fd = fd_jacobian(lambda p: posterior_stats(tgt, sched64, t, p).g, x, h)
    assert np.linalg.norm(J_fd - ps.J) / np.linalg.norm(ps.J) < 1e-4


# ---------------------------------------------------------------------------
# validation and files
# ---------------------------------------------------------------------------


def test_weights_must_sum_to_one():
    with pytest.raises(ValueError):
        point_masses([(0.5, [0.0]), (0.4, [1.0])])


def test_empty_atom_list_rejected():
    with pytest.raises(ValueError):
        point_masses([])


def test_nonfinite_atom_rejected():
    with pytest.raises(ValueError):
        point_masses([(1.0, [math.inf])])


def test_gmm_rejects_asymmetric_cov():
    with pytest.raises(ValueError):
        gaussian_mixture([(1.0, [0.0, 0.0], [[1.0, 0.5], [0.0, 1.0]])])


def test_gmm_rejects_singular_cov():
    with pytest.raises(ValueError, match="PointMass"):
        gaussian_mixture([(1.0, [0.0, 0.0], [[1.0, 0.0], [0.0, 0.0]])])


def test_first_moment_bound():
    pm = point_masses([(0.25, [3.0]), (0.75, [-1.0])])
    assert first_moment_bound(pm) == pytest.approx(0.25 * 3 + 0.75 * 1)
    g = isotropic_gaussian(2, 4.0)
    assert first_moment_bound(g) == pytest.approx(math.sqrt(8.0))


def test_target_file_roundtrip(gmm_2d):
    blob = json.dumps(target_to_dict(gmm_2d))
    back = load_target(json.loads(blob))
    assert isinstance(back, GaussianMixtureTarget)
    assert np.allclose(back.means, gmm_2d.means)
    assert target_hash(back) == target_hash(gmm_2d)


def test_embedded_file_roundtrip():
    tgt = _embedded_fixture()
    back = load_target(target_to_dict(tgt))
    assert isinstance(back, EmbeddedTarget)
    assert np.allclose(back.embed, tgt.embed)
    assert target_hash(back) == target_hash(tgt)


def test_load_target_rejects_unknown_kind():
    with pytest.raises(ValueError):
        load_target({"kind": "mystery"})


def test_load_target_rejects_non_orthonormal_embed():
    spec = {
        "kind": "embedded",
        "base": {"kind": "point_masses", "atoms": [{"weight": 1.0, "location": [0.0]}]},
        "embed": [[1.0], [1.0], [0.0]],
        "offset": [0.0, 0.0, 0.0],
    }
    with pytest.raises(ValueError):
        load_target(spec)


# ---------------------------------------------------------------------------
# covering numbers and intrinsic dimension
# ---------------------------------------------------------------------------


def test_covering_single_point():
    assert covering_number(np.zeros((1, 4)), eps=0.5) == 1


def test_covering_two_far_points():
    pts = np.array([[0.0, 0.0], [3.0, 0.0]])
    assert covering_number(pts, eps=1.0) == 2
    assert covering_number(pts, eps=3.0) == 1


def _brute_force_greedy(points, eps):
    pts = [np.asarray(p, dtype=float) for p in points]
    count = 0
    while pts:
        center = pts[0]
        count += 1
        pts = [p for p in pts if float(np.linalg.norm(p - center)) > eps]
    return count


def test_covering_matches_brute_force_oracle():
    rng = make_rng(6, 80)
    for _ in range(5):
        pts = rng.standard_normal((120, 3))
        for eps in (0.3, 0.8, 1.5):
            assert covering_number(pts, eps) == _brute_force_greedy(pts, eps)


def test_disk_covering_slope_in_band():
    # 1e4 points on a unit 2-disk embedded in d=16.
    rng = make_rng(7, 81)
    r = np.sqrt(rng.uniform(0, 1, 10_000))
    theta = rng.uniform(0, 2 * math.pi, 10_000)
    disk = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
    embed, _ = np.linalg.qr(rng.standard_normal((16, 2)))
    pts = disk @ embed.T
    n_eps = covering_number(pts, 0.1)
    ratio = math.log(n_eps) / math.log(1.0 / 0.1)
    assert 1.5 <= ratio <= 2.5


def test_intrinsic_dimension_line_segment():
    ts = np.linspace(0.0, 2.0, 5000)
    rng = make_rng(8, 82)
    direction = rng.standard_normal(16)
    direction /= np.linalg.norm(direction)
    pts = ts[:, None] * direction[None, :]
    est = intrinsic_dimension_estimate(pts, [0.4, 0.2, 0.1, 0.05])
    assert 0.8 <= est <= 1.2


def test_intrinsic_dimension_repeated_point_is_zero():
    pts = np.tile([1.0, 2.0], (500, 1))
    assert intrinsic_dimension_estimate(pts, [0.4, 0.2, 0.1]) == 0.0


def test_intrinsic_dimension_rejects_degenerate_grid():
    pts = np.zeros((10, 2))
    with pytest.raises(ValueError):
        intrinsic_dimension_estimate(pts, [0.4, 0.4, 0.4])
    with pytest.raises(ValueError):
        intrinsic_dimension_estimate(pts, [0.4, 0.2])


def test_covering_rejects_bad_eps():
    with pytest.raises(ValueError):
        covering_number(np.zeros((3, 2)), eps=0.0)
