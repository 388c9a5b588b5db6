import math

import numpy as np
import pytest

from ddpm_lab import (
    SamplerAbort,
    ScoreProvider,
    build_schedule,
    coefficients_lowdim,
    coefficients_standard,
    ddim_coefficients,
    ddpm_step,
    exact_provider,
    gaussian_oracle_reverse,
    isotropic_gaussian,
    run_reverse,
    standard_gaussian,
)
from ddpm_lab.samplers import (
    read_samples_binary,
    write_samples_binary,
    write_samples_csv,
)


# ---------------------------------------------------------------------------
# coefficient designs
# ---------------------------------------------------------------------------


def test_standard_design_eta_equals_sigma_squared(sched64):
    c = coefficients_standard(sched64)
    assert np.allclose(c.eta, c.sigma ** 2, rtol=1e-15)
    assert np.array_equal(c.eta, sched64.beta)  # 1 - alpha_t, exactly


def test_standard_design_eta1_is_beta1():
    s = build_schedule(100, 2.0, 1.0)
    c = coefficients_standard(s)
    assert c.eta[0] == s.beta_at(1) == 1e-4


def test_eta_bounded_by_step_size_cap(sched512):
    cap = 4.0 * math.log(512) / 512
    c = coefficients_standard(sched512)
    assert np.all(c.eta <= cap * (1 + 1e-12))


def test_lowdim_design_formula(sched64):
    c = coefficients_lowdim(sched64)
    std = coefficients_standard(sched64)
    assert c.sigma[0] == 0.0  # alpha_1 = alphabar_1 forces sigma*_1 = 0
    assert np.array_equal(c.eta, std.eta)
    a, ab = sched64.alpha[1:], sched64.alphabar[1:]
    expected = (1 - a) * (a - ab) / (1 - ab)
    assert np.allclose(c.sigma[1:] ** 2, expected, rtol=1e-12)
    # strictly smaller noise than the standard design for t >= 2
    assert np.all(c.sigma[1:] < std.sigma[1:])


def test_lowdim_sigma_ratio(sched64):
    c = coefficients_lowdim(sched64)
    std = coefficients_standard(sched64)
    ratio = c.sigma[1:] / std.sigma[1:]
    expected = np.sqrt((sched64.alpha[1:] - sched64.alphabar[1:])
                       / (1 - sched64.alphabar[1:]))
    assert np.allclose(ratio, expected, rtol=1e-12)


def test_ddim_design(sched64):
    c = ddim_coefficients(sched64)
    std = coefficients_standard(sched64)
    assert np.all(c.sigma == 0.0)
    assert np.allclose(c.eta, std.eta / 2.0, rtol=1e-15)


def test_ddim_eta1_half_beta1():
    s = build_schedule(100, 2.0, 1.0)
    c = ddim_coefficients(s)
    assert c.eta[0] == pytest.approx(5e-5, rel=1e-12)


# ---------------------------------------------------------------------------
# ddpm_step
# ---------------------------------------------------------------------------


def _zero_provider(d, T):
    return ScoreProvider(fn=lambda t, x: np.zeros_like(x), kind="custom", d=d, T=T)


def test_step_pure_rescale(sched64):
    # eta = sigma = 0 leaves only the 1/sqrt(alpha) rescale.
    c = coefficients_standard(sched64)
    zeroed = type(c)(eta=np.zeros(64), sigma=np.zeros(64), alpha=c.alpha,
                     design_tag="custom")
    y = np.array([1.0, -2.0])
    t = 30
    out = ddpm_step(y, t, _zero_provider(2, 64), zeroed, np.zeros(2))
    assert np.allclose(out, y / math.sqrt(sched64.alpha_at(t)), rtol=1e-15)


def test_step_matches_update_formula(sched64):
    tgt = standard_gaussian(2)
    prov = exact_provider(tgt, sched64)
    c = coefficients_standard(sched64)
    y = np.array([0.8, -0.3])
    z = np.array([0.5, 1.5])
    t = 12
    i = t - 1
    expected = (y + c.eta[i] * prov(t, y) + c.sigma[i] * z) / math.sqrt(c.alpha[i])
    assert np.array_equal(ddpm_step(y, t, prov, c, z), expected)


def test_step_deterministic_with_ddim(sched64):
    prov = exact_provider(standard_gaussian(2), sched64)
    c = ddim_coefficients(sched64)
    y = np.array([0.2, 0.4])
    a = ddpm_step(y, 10, prov, c, np.zeros(2))
    b = ddpm_step(y, 10, prov, c, np.zeros(2))
    assert np.array_equal(a, b)


def test_step_aborts_on_nonfinite_score(sched64):
    bad = ScoreProvider(fn=lambda t, x: np.full_like(x, np.nan), kind="custom",
                        d=2, T=64)
    c = coefficients_standard(sched64)
    with pytest.raises(SamplerAbort, match="t=12"):
        ddpm_step(np.array([0.1, 0.2]), 12, bad, c, np.zeros(2))


def test_step_rejects_bad_t(sched64):
    prov = exact_provider(standard_gaussian(1), sched64)
    c = coefficients_standard(sched64)
    with pytest.raises(ValueError):
        ddpm_step(np.array([0.0]), 0, prov, c, np.zeros(1))


# ---------------------------------------------------------------------------
# run_reverse
# ---------------------------------------------------------------------------


def test_run_reverse_deterministic_across_workers(sched64):
    prov = exact_provider(isotropic_gaussian(2, 1.5), sched64)
    c = coefficients_standard(sched64)
    ref = run_reverse(prov, sched64, c, n=333, seed=5, workers=1, chunk_size=50)
    for workers in (2, 8):
        out = run_reverse(prov, sched64, c, n=333, seed=5, workers=workers,
                          chunk_size=50)
        assert out.samples.tobytes() == ref.samples.tobytes()


def test_run_reverse_chunk_size_invariance(sched64):
    prov = exact_provider(isotropic_gaussian(2, 1.5), sched64)
    c = coefficients_standard(sched64)
    a = run_reverse(prov, sched64, c, n=100, seed=6, chunk_size=7)
    b = run_reverse(prov, sched64, c, n=100, seed=6, chunk_size=100)
    assert a.samples.tobytes() == b.samples.tobytes()


def test_run_reverse_prefix_stability(sched64):
    # adding trajectories never perturbs existing ones
    prov = exact_provider(standard_gaussian(1), sched64)
    c = coefficients_standard(sched64)
    small = run_reverse(prov, sched64, c, n=10, seed=7)
    big = run_reverse(prov, sched64, c, n=25, seed=7)
    assert np.array_equal(big.samples[:10], small.samples)


def test_run_reverse_telescoping_identity(sched64):
    # sigma = 0 and zero score: Y_1 = Y_T * sqrt(abar_1 / abar_T) exactly.
    T = 64
    zeroed = coefficients_standard(sched64)
    zeroed = type(zeroed)(eta=np.zeros(T), sigma=np.zeros(T),
                          alpha=sched64.alpha.copy(), design_tag="custom")
    prov = _zero_provider(1, T)
    out = run_reverse(prov, sched64, zeroed, n=8, seed=8, track_steps=True)
    # reconstruct Y_T from the per-trajectory streams
    from ddpm_lab.rng import trajectory_rng
    for i in range(8):
        y_T = trajectory_rng(8, i).standard_normal((T, 1))[0]
        factor = np.prod(1.0 / np.sqrt(sched64.alpha[1:].astype(np.longdouble)))
        expected = y_T * float(factor)
        assert out.samples[i] == pytest.approx(expected, rel=1e-13)


def test_run_reverse_matches_gaussian_oracle(sched64):
    sigma0_sq = 1.5
    tgt = isotropic_gaussian(2, sigma0_sq)
    prov = exact_provider(tgt, sched64)
    c = coefficients_standard(sched64)
    n = 100_000
    out = run_reverse(prov, sched64, c, n=n, seed=9)
    m_or, v_or = gaussian_oracle_reverse(sigma0_sq, sched64, c)
    se_mean = math.sqrt(v_or / n)
    se_var = v_or * math.sqrt(2.0 / (n - 1))
    for col in range(2):
        assert abs(out.samples[:, col].mean() - m_or) < 4 * se_mean
        assert abs(out.samples[:, col].var(ddof=1) - v_or) < 4 * se_var


def test_run_reverse_per_step_stats(sched64):
    prov = exact_provider(standard_gaussian(1), sched64)
    c = coefficients_standard(sched64)
    out = run_reverse(prov, sched64, c, n=2000, seed=10, track_steps=True)
    assert out.per_step_mean.shape == (64, 1)
    # Y_T is standard normal
    assert abs(out.per_step_mean[63, 0]) < 4 / math.sqrt(2000)
    assert abs(out.per_step_var[63, 0] - 1.0) < 4 * math.sqrt(2.0 / 1999)


def test_run_reverse_abort_reports_step(sched64):
    calls = {"n": 0}

    def flaky(t, x):
        calls["n"] += 1
        if t == 30:
            return np.full_like(x, np.inf)
        return np.zeros_like(x)

    prov = ScoreProvider(fn=flaky, kind="custom", d=1, T=64)
    c = coefficients_standard(sched64)
    with pytest.raises(SamplerAbort, match="t=30"):
        run_reverse(prov, sched64, c, n=4, seed=11)


def test_run_reverse_validates_sizes(sched64):
    prov = exact_provider(standard_gaussian(1), sched64)
    c = coefficients_standard(sched64)
    with pytest.raises(ValueError):
        run_reverse(prov, sched64, c, n=0, seed=0)
    other = build_schedule(32, 2.0, 4.0)
    with pytest.raises(ValueError):
        run_reverse(prov, other, coefficients_standard(other), n=1, seed=0)


# ---------------------------------------------------------------------------
# gaussian_oracle_reverse
# ---------------------------------------------------------------------------


def test_oracle_unit_variance_symmetry(sched64):
    # zero bias and a centered target force m_1 = 0 by symmetry
    m, v = gaussian_oracle_reverse(1.0, sched64, coefficients_standard(sched64))
    assert m == 0.0
    assert v > 0.0


def test_oracle_unit_variance_fixed_point():
    # v*_t = 1 throughout; the recursion converges to 1 at the 1/T rate.
    devs = {}
    for T in (512, 1024, 2048):
        s = build_schedule(T, 2.0, 4.0)
        _, v = gaussian_oracle_reverse(1.0, s, coefficients_standard(s))
        devs[T] = abs(v - 1.0)
    assert devs[2048] < 0.1  # v_1 -> 1
    # O(1/T): halving from T to 2T within a generous band
    assert 1.4 < devs[512] / devs[1024] < 2.8
    assert 1.4 < devs[1024] / devs[2048] < 2.8


def test_oracle_telescoping_with_zero_coefficients(sched64):
    T = 64
    zeroed = coefficients_standard(sched64)
    zeroed = type(zeroed)(eta=np.zeros(T), sigma=np.zeros(T),
                          alpha=sched64.alpha.copy(), design_tag="custom")
    _, v = gaussian_oracle_reverse(2.0, sched64, zeroed)
    expected = sched64.alphabar_at(1) / sched64.alphabar_at(64)
    assert v == pytest.approx(expected, rel=1e-12)


def test_oracle_lowdim_design_matches_pure_noise_exactly(sched512):
    # sigma0_sq = 0 is a point mass at the origin; the adaptive design's
    # injected noise equals the posterior variance, so v_t tracks 1 - abar_t
    # exactly apart from the vanishing initialization gap.
    c = coefficients_lowdim(sched512)
    m, v = gaussian_oracle_reverse(0.0, sched512, c)
    assert m == 0.0
    assert v == pytest.approx(1.0 - sched512.alphabar_at(1), rel=1e-6)


def test_oracle_bias_shifts_mean_linearly(sched64):
    c = coefficients_standard(sched64)
    m1, v1 = gaussian_oracle_reverse(2.0, sched64, c, bias=0.01)
    m2, v2 = gaussian_oracle_reverse(2.0, sched64, c, bias=0.02)
    assert v1 == v2  # bias never touches the variance recursion
    assert m2 == pytest.approx(2 * m1, rel=1e-12)


def test_oracle_rejects_negative_variance(sched64):
    with pytest.raises(ValueError):
        gaussian_oracle_reverse(-1.0, sched64, coefficients_standard(sched64))


# ---------------------------------------------------------------------------
# sample dumps
# ---------------------------------------------------------------------------


def test_binary_dump_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    samples = rng.standard_normal((37, 3))
    path = tmp_path / "samples.bin"
    write_samples_binary(samples, path)
    raw = path.read_bytes()
    assert raw[:4] == b"DDL1"
    assert int.from_bytes(raw[4:8], "little") == 37
    assert int.from_bytes(raw[8:12], "little") == 3
    back = read_samples_binary(path)
    assert np.array_equal(back, samples)


def test_csv_dump_full_precision(tmp_path):
    samples = np.array([[0.1, -2.5e-17], [1 / 3, 7.0]])
    path = tmp_path / "samples.csv"
    write_samples_csv(samples, path)
    back = np.loadtxt(path, delimiter=",", ndmin=2)
    assert np.array_equal(back, samples)
