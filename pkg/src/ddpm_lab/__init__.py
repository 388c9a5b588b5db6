"""Numerical laboratory for diffusion reverse-process convergence rates."""

__version__ = "0.1.0"

from .schedule import (
    Schedule,
    ValidityReport,
    build_schedule,
    schedule_from_betas,
    schedule_invariants_check,
    write_schedule_csv,
)
from .targets import (
    EmbeddedTarget,
    GaussianMixtureTarget,
    PointMassMixtureTarget,
    PosteriorStats,
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
    score_exact,
    standard_gaussian,
    target_hash,
    target_to_dict,
)
from .scores import (
    EpsScoreEstimate,
    PerturbationSpec,
    ScoreProvider,
    estimate_eps_score,
    exact_provider,
    perturbed_provider,
)
from .samplers import (
    ReverseRunResult,
    SamplerAbort,
    SamplerCoefficients,
    coefficients_lowdim,
    coefficients_standard,
    ddim_coefficients,
    ddpm_step,
    gaussian_oracle_reverse,
    run_reverse,
)
from .metrics import (
    GridSpec,
    RateFit,
    TVEstimate,
    default_grid,
    fit_rate,
    fit_rate_adaptive,
    kl_gaussians,
    kl_step_gaussian,
    pinsker_check,
    tv_gaussians_1d,
    tv_grid,
    tv_product_coupling,
    tv_sliced,
)
