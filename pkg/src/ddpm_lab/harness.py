"""Declarative experiment runner: rate scans, validation, persistence.

An experiment is one config mapping (TOML or JSON, ``spec_version = 1``)
resolved into an :class:`ExperimentSpec`.  Scans emit ``results.csv`` with
the fixed header

    experiment_id,T,d,k,design,eps_score,tv,tv_stderr,noise_floor,seed,runtime_s

plus ``fit.json`` (log-log slopes) and ``meta.json`` (resolved spec and a
content hash).  All randomness is derived from the spec seed through
counter-based substreams keyed by row values, so rows are independent of
one another and of worker count.  Wall-clock runtimes are recorded in the
``runtime_s`` column and in meta.json; they are the single non-reproducible
output field.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import __version__
from .metrics import (
    GridSpec,
    RateFit,
    TVEstimate,
    default_grid,
    fit_rate,
    fit_rate_adaptive,
    kl_gaussians,
    kl_gaussians_same_cov,
    kl_step_gaussian,
    pinsker_check,
    tv_gaussians_1d,
    tv_grid,
    tv_product_coupling,
)
from .rng import STREAM_NOISE_FLOOR, STREAM_VALIDATION, make_rng
from .samplers import (
    SamplerAbort,
    SamplerCoefficients,
    coefficients_lowdim,
    coefficients_standard,
    ddim_coefficients,
    gaussian_oracle_reverse,
    run_reverse,
)
from .schedule import CheckOutcome, Schedule, build_schedule, schedule_invariants_check
from .scores import (
    PerturbationSpec,
    bias_direction,
    estimate_eps_score,
    exact_provider,
    perturbed_provider,
)
from .targets import (
    EmbeddedTarget,
    GaussianMixtureTarget,
    PointMassMixtureTarget,
    Target,
    covering_number,
    first_moment_bound,
    forward_cell_masses,
    forward_moments,
    gaussian_mixture,
    intrinsic_dimension_estimate,
    isotropic_gaussian,
    load_target,
    marginal_log_density,
    point_masses,
    posterior_stats,
    sample_data,
    sample_forward,
    score_exact,
    target_hash,
    target_to_dict,
)

RESULTS_HEADER = ["experiment_id", "T", "d", "k", "design", "eps_score", "tv",
                  "tv_stderr", "noise_floor", "seed", "runtime_s"]

SPEC_VERSION = 1

_DESIGNS = {
    "ddpm_standard": coefficients_standard,
    "ddpm_lowdim": coefficients_lowdim,
    "ddim": ddim_coefficients,
}


@dataclass(frozen=True)
class ExperimentSpec:
    """Resolved experiment description (defaults filled in)."""

    experiment_id: str
    target: dict
    T_grid: tuple[int, ...]
    c0: float = 2.0
    c1: float = 4.0
    design: str = "ddpm_standard"
    perturbation: dict | None = None
    trajectories: int = 100_000
    tv_method: str = "exact_gaussian_1d"
    bin_width: float | None = None
    extent_sigmas: float = 8.0
    seed: int = 0
    workers: int = 1
    spec_version: int = SPEC_VERSION

    def to_dict(self) -> dict:
        out = asdict(self)
        out["T_grid"] = list(self.T_grid)
        return out

    def content_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def resolve_spec(raw: dict, **overrides) -> ExperimentSpec:
    """Fill defaults and validate a parsed config mapping.

    ``overrides`` (CLI flags) take precedence over config values, which take
    precedence over defaults.
    """
    cfg = dict(raw)
    version = cfg.pop("spec_version", SPEC_VERSION)
    if version != SPEC_VERSION:
        raise ValueError(f"unsupported spec_version {version}; this build reads {SPEC_VERSION}")
    for k, v in overrides.items():
        if v is not None:
            cfg[k] = v
    known = set(ExperimentSpec.__dataclass_fields__)
    unknown = set(cfg) - known
    if unknown:
        raise ValueError(f"unknown config fields: {sorted(unknown)}")
    if "target" not in cfg:
        raise ValueError("config must define a target")
    if "T_grid" not in cfg:
        raise ValueError("config must define T_grid")
    cfg["T_grid"] = tuple(int(t) for t in cfg["T_grid"])
    if any(b <= a for a, b in zip(cfg["T_grid"], cfg["T_grid"][1:])):
        raise ValueError("T_grid must be strictly increasing")
    if any(t < 2 for t in cfg["T_grid"]):
        raise ValueError("every T must be at least 2")
    spec = ExperimentSpec(**cfg)
    if spec.design not in _DESIGNS:
        raise ValueError(f"unknown design {spec.design!r}; choose from {sorted(_DESIGNS)}")
    if spec.tv_method not in ("exact_gaussian_1d", "grid_1d", "grid_2d"):
        raise ValueError(f"unknown tv_method {spec.tv_method!r}")
    if spec.tv_method != "exact_gaussian_1d" and spec.trajectories < 1000:
        raise ValueError("sample-based TV needs at least 10^3 trajectories")
    if spec.perturbation is not None:
        _perturbation_spec(spec.perturbation)  # validates
    return spec


def load_config(path) -> dict:
    """Parse a TOML or JSON experiment config."""
    text = open(path, "rb").read()
    name = str(path)
    if name.endswith(".json"):
        return json.loads(text.decode())
    try:
        import tomllib as toml  # Python >= 3.11
    except ModuleNotFoundError:
        import tomli as toml
    return toml.loads(text.decode())


def resolve_target(spec_target: dict) -> Target:
    """Expand config target families into concrete targets.

    Beyond the three file kinds (gaussian_mixture, point_masses, embedded)
    the harness accepts two families: ``gaussian_iso`` ({d, sigma0_sq}) and
    ``lowdim_atoms`` ({k, d_ambient, n_atoms, half_width, atom_seed}), the
    embedded uniform atom cloud used by the low-dimension scans.
    """
    kind = spec_target.get("kind")
    if kind == "gaussian_iso":
        return isotropic_gaussian(int(spec_target["d"]), float(spec_target["sigma0_sq"]))
    if kind == "lowdim_atoms":
        return lowdim_atom_target(
            k=int(spec_target["k"]),
            d_ambient=int(spec_target["d_ambient"]),
            n_atoms=int(spec_target.get("n_atoms", 64)),
            half_width=float(spec_target.get("half_width", 3.0)),
            atom_seed=int(spec_target.get("atom_seed", 1)),
        )
    return load_target(spec_target)


def lowdim_atom_target(k: int, d_ambient: int, n_atoms: int = 64,
                       half_width: float = 3.0, atom_seed: int = 1) -> Target:
    """Uniform atom cloud in a k-cube, embedded in ambient dimension d.

    With k == d_ambient the embedding is skipped and the plain point-mass
    target is returned (identity embedding).
    """
    rng = make_rng(atom_seed, STREAM_VALIDATION, k, d_ambient)
    atoms = rng.uniform(-half_width, half_width, size=(n_atoms, k))
    base = PointMassMixtureTarget(d=k, weights=np.full(n_atoms, 1.0 / n_atoms), atoms=atoms)
    if k == d_ambient:
        return base
    gauss = rng.standard_normal((d_ambient, k))
    embed, _ = np.linalg.qr(gauss)
    return EmbeddedTarget(base=base, embed=embed[:, :k], offset=np.zeros(d_ambient))


def _perturbation_spec(p: dict | None) -> PerturbationSpec | None:
    if p is None or p.get("kind") in (None, "none"):
        return None
    return PerturbationSpec(kind=p["kind"], magnitude=float(p["magnitude"]),
                            direction_seed=int(p.get("direction_seed", 0)))


def _iso_sigma0_sq(target: Target) -> float:
    """Extract sigma0^2 from a centered isotropic Gaussian target."""
    if (isinstance(target, GaussianMixtureTarget) and len(target.weights) == 1
            and target.covs is None and np.allclose(target.means, 0.0)):
        return float(target.iso_vars[0])
    if isinstance(target, PointMassMixtureTarget) and len(target.weights) == 1 \
            and np.allclose(target.atoms, 0.0):
        return 0.0
    raise ValueError("the exact Gaussian oracle needs a centered isotropic Gaussian target")


def _row_seed(seed: int, *key: int) -> int:
    """Stable derived integer seed for one scan row."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0] >> 1)


@dataclass(frozen=True)
class ScanRow:
    experiment_id: str
    T: int
    d: int
    k: int
    design: str
    eps_score: float
    tv: float
    tv_stderr: float
    noise_floor: float
    seed: int
    runtime_s: float
    extras: dict = field(default_factory=dict)


@dataclass(frozen=True)
class RateScanResult:
    spec: ExperimentSpec
    rows: tuple[ScanRow, ...]
    fit: RateFit | None
    dropped_smallest: bool
    validity: dict
    spec_hash: str


# ---------------------------------------------------------------------------
# TV measurement for one reverse run
# ---------------------------------------------------------------------------


def _exact_oracle_tv(target: Target, schedule: Schedule, coeffs: SamplerCoefficients,
                     perturbation: PerturbationSpec | None) -> float:
    sigma0_sq = _iso_sigma0_sq(target)
    if target.d != 1:
        raise ValueError("exact_gaussian_1d applies to d = 1 targets; "
                         "use the dimension scan for product targets")
    bias = 0.0
    if perturbation is not None:
        if perturbation.kind != "constant_bias":
            raise ValueError("the bias-extended oracle supports constant_bias only")
        bias = perturbation.magnitude * float(bias_direction(1, perturbation.direction_seed)[0])
    m1, v1 = gaussian_oracle_reverse(sigma0_sq, schedule, coeffs, bias=bias)
    vstar = schedule.alphabar_at(1) * sigma0_sq + 1.0 - schedule.alphabar_at(1)
    return tv_gaussians_1d(0.0, vstar, m1, v1)


def _grid_for(target: Target, schedule: Schedule, spec: ExperimentSpec, d: int) -> GridSpec:
    mean, sd = forward_moments(target, schedule, 1)
    return default_grid(mean, sd, spec.trajectories, d,
                        extent_sigmas=spec.extent_sigmas, bin_width=spec.bin_width)


def _grid_cell_masses(target: Target, schedule: Schedule, grid: GridSpec) -> np.ndarray:
    try:
        return forward_cell_masses(target, schedule, 1, grid.edges())
    except ValueError:
        # General covariances: integrate the log density by midpoint refinement.
        from .metrics import cell_masses_from_log_density

        def logp(pts):
            return marginal_log_density(target, schedule, 1, pts)

        return cell_masses_from_log_density(logp, grid)


def _sampled_tv(target: Target, schedule: Schedule, coeffs, provider, spec: ExperimentSpec,
                row_seed: int, grid_d: int, project=None) -> tuple[TVEstimate, float]:
    """Run the sampler and estimate TV against the analytic t=1 marginal.

    Returns (tv_estimate, noise_floor).  ``project`` optionally maps raw
    (n, d) samples to the coordinates being gridded (embedded targets).
    The noise floor is the same estimator applied to samples drawn from the
    analytic marginal itself.
    """
    result = run_reverse(provider, schedule, coeffs, spec.trajectories, row_seed,
                         workers=spec.workers)
    samples = result.samples if project is None else project(result.samples)
    grid_target = target if project is None else target.base
    grid = _grid_for(grid_target, schedule, spec, grid_d)
    masses = _grid_cell_masses(grid_target, schedule, grid)
    est = tv_grid(samples, grid, cell_masses=masses)
    floor_samples = sample_forward(grid_target, schedule, 1, spec.trajectories,
                                   _row_seed(row_seed, STREAM_NOISE_FLOOR))
    floor = tv_grid(floor_samples, grid, cell_masses=masses)
    return est, floor.value


# ---------------------------------------------------------------------------
# Scans
# ---------------------------------------------------------------------------


def run_rate_scan(spec: ExperimentSpec) -> RateScanResult:
    """TV against the step count over spec.T_grid, plus a log-log fit.

    A sampler abort invalidates the affected row, not the scan; the scan
    fails only if fewer than 3 rows survive.
    """
    if len(spec.T_grid) < 3:
        raise ValueError("rate scans need a T grid with at least 3 values")
    target = resolve_target(spec.target)
    perturbation = _perturbation_spec(spec.perturbation)
    rows: list[ScanRow] = []
    validity = {}
    for T in spec.T_grid:
        t0 = time.perf_counter()
        schedule = build_schedule(T, spec.c0, spec.c1)
        validity[T] = schedule_invariants_check(schedule)
        coeffs = _DESIGNS[spec.design](schedule)
        row_seed = _row_seed(spec.seed, T)
        try:
            if spec.tv_method == "exact_gaussian_1d":
                tv = _exact_oracle_tv(target, schedule, coeffs, perturbation)
                est = TVEstimate(value=tv, method="exact_gaussian_1d")
                floor = 0.0
            else:
                provider = exact_provider(target, schedule)
                if perturbation is not None:
                    provider = perturbed_provider(provider, perturbation)
                est, floor = _sampled_tv(target, schedule, coeffs, provider, spec,
                                         row_seed, grid_d=target.d)
        except SamplerAbort:
            continue
        eps = _eps_for_row(perturbation, target, schedule, spec, row_seed)
        rows.append(ScanRow(
            experiment_id=spec.experiment_id, T=T, d=target.d, k=_intrinsic_k(target),
            design=spec.design, eps_score=eps, tv=est.value, tv_stderr=est.stderr,
            noise_floor=floor, seed=spec.seed, runtime_s=time.perf_counter() - t0,
        ))
    if len(rows) < 3:
        raise RuntimeError(f"rate scan kept only {len(rows)} rows; need at least 3")
    fit, dropped = fit_rate_adaptive([(r.T, r.tv) for r in rows if r.tv > 0])
    return RateScanResult(spec=spec, rows=tuple(rows), fit=fit,
                          dropped_smallest=dropped, validity=validity,
                          spec_hash=spec.content_hash())


def _intrinsic_k(target: Target) -> int:
    return target.k if isinstance(target, EmbeddedTarget) else target.d


def _eps_for_row(perturbation, target, schedule, spec, row_seed) -> float:
    if perturbation is None:
        return 0.0
    if perturbation.kind == "constant_bias":
        return perturbation.magnitude
    provider = perturbed_provider(exact_provider(target, schedule), perturbation)
    return estimate_eps_score(provider, target, schedule, n=2048, seed=row_seed).value


@dataclass(frozen=True)
class ScoreErrorScanResult:
    spec: ExperimentSpec
    rows: tuple[ScanRow, ...]
    excess: tuple[tuple[float, float], ...]
    fit: RateFit | None
    dropped_smallest: bool
    spec_hash: str


def run_score_error_scan(spec: ExperimentSpec, eps_grid) -> ScoreErrorScanResult:
    """TV degradation against a grid of constant-bias magnitudes at fixed T.

    The grid must include 0; the zero row reuses the exact-score stream, so
    it matches an unperturbed run at the same seed exactly.  The fit is over
    excess TV (tv(eps) - tv(0)) for eps > 0.
    """
    eps_grid = [float(e) for e in eps_grid]
    if 0.0 not in eps_grid:
        raise ValueError("eps_grid must include 0")
    if any(e < 0 for e in eps_grid):
        raise ValueError("eps values must be non-negative")
    if len(spec.T_grid) != 1:
        raise ValueError("score-error scans fix one T; give a single-value T_grid")
    T = spec.T_grid[0]
    target = resolve_target(spec.target)
    schedule = build_schedule(T, spec.c0, spec.c1)
    coeffs = _DESIGNS[spec.design](schedule)
    direction_seed = int((spec.perturbation or {}).get("direction_seed", 0))
    row_seed = _row_seed(spec.seed, T)

    rows: list[ScanRow] = []
    tv_by_eps: dict[float, float] = {}
    for eps in sorted(eps_grid):
        t0 = time.perf_counter()
        pert = PerturbationSpec("constant_bias", eps, direction_seed) if eps > 0 else None
        if spec.tv_method == "exact_gaussian_1d":
            tv = _exact_oracle_tv(target, schedule, coeffs, pert)
            est = TVEstimate(value=tv, method="exact_gaussian_1d")
            floor = 0.0
        else:
            provider = exact_provider(target, schedule)
            if pert is not None:
                provider = perturbed_provider(provider, pert)
            est, floor = _sampled_tv(target, schedule, coeffs, provider, spec,
                                     row_seed, grid_d=target.d)
        tv_by_eps[eps] = est.value
        rows.append(ScanRow(
            experiment_id=spec.experiment_id, T=T, d=target.d, k=_intrinsic_k(target),
            design=spec.design, eps_score=eps, tv=est.value, tv_stderr=est.stderr,
            noise_floor=floor, seed=spec.seed, runtime_s=time.perf_counter() - t0,
        ))
    base_tv = tv_by_eps[0.0]
    excess = tuple((eps, tv_by_eps[eps] - base_tv) for eps in sorted(eps_grid) if eps > 0)
    positive = [(e, x) for e, x in excess if x > 0]
    fit = dropped = None
    if len(positive) >= 3:
        fit, dropped = fit_rate_adaptive(positive)
    return ScoreErrorScanResult(spec=spec, rows=tuple(rows), excess=excess, fit=fit,
                                dropped_smallest=bool(dropped), spec_hash=spec.content_hash())


@dataclass(frozen=True)
class LowdimScanResult:
    spec: ExperimentSpec
    rows: tuple[ScanRow, ...]
    fits: dict
    intrinsic_dim: dict
    spec_hash: str


def run_lowdim_scan(spec: ExperimentSpec, k_grid, d_ambient: int) -> LowdimScanResult:
    """Compare the standard and dimension-adaptive designs on embedded targets.

    For each intrinsic dimension k the target is an embedded atom cloud.
    TV is measured exactly on the two factors of the ambient law: the
    projected (base) coordinates by grid histogram, and the normal Gaussian
    factor by the exact per-coordinate oracle (the correction is combined
    across coordinates by the product-coupling rule and reported separately
    in the row extras).
    """
    rows: list[ScanRow] = []
    fits: dict[str, dict] = {}
    intrinsic = {}
    for k in k_grid:
        k = int(k)
        tgt_spec = dict(spec.target)
        tgt_spec.update({"kind": "lowdim_atoms", "k": k, "d_ambient": d_ambient})
        target = resolve_target(tgt_spec)
        base = target.base if isinstance(target, EmbeddedTarget) else target
        atoms_ambient = (base.atoms @ target.embed.T + target.offset
                         if isinstance(target, EmbeddedTarget) else base.atoms)
        diam = float(np.max(np.linalg.norm(atoms_ambient - atoms_ambient.mean(0), axis=1))) * 2
        eps_grid = [diam / 4, diam / 8, diam / 16]
        intrinsic[k] = intrinsic_dimension_estimate(atoms_ambient, eps_grid)
        for design in ("ddpm_standard", "ddpm_lowdim"):
            pts = []
            for T in spec.T_grid:
                t0 = time.perf_counter()
                schedule = build_schedule(T, spec.c0, spec.c1)
                coeffs = _DESIGNS[design](schedule)
                row_seed = _row_seed(spec.seed, T, 1 if design == "ddpm_lowdim" else 0, k)
                provider = exact_provider(target, schedule)
                if isinstance(target, EmbeddedTarget):
                    sq = math.sqrt(schedule.alphabar_at(1))

                    def project(y, target=target, sq=sq):
                        return (y - sq * target.offset) @ target.embed

                    est, floor = _sampled_tv(target, schedule, coeffs, provider, spec,
                                             row_seed, grid_d=k, project=project)
                    m_perp, v_perp = gaussian_oracle_reverse(0.0, schedule, coeffs)
                    tv_norm_coord = tv_gaussians_1d(0.0, 1.0 - schedule.alphabar_at(1),
                                                    m_perp, v_perp)
                    tv_normal = tv_product_coupling([tv_norm_coord] * (d_ambient - k))
                else:
                    est, floor = _sampled_tv(target, schedule, coeffs, provider, spec,
                                             row_seed, grid_d=k)
                    tv_normal = 0.0
                total = tv_product_coupling([est.value, tv_normal])
                rows.append(ScanRow(
                    experiment_id=spec.experiment_id, T=T, d=d_ambient, k=k,
                    design=design, eps_score=0.0, tv=total, tv_stderr=est.stderr,
                    noise_floor=floor, seed=spec.seed,
                    runtime_s=time.perf_counter() - t0,
                    extras={"tv_projected": est.value, "tv_normal": tv_normal},
                ))
                pts.append((T, total))
            fit, dropped = fit_rate_adaptive([(T, tv) for T, tv in pts if tv > 0])
            fits[f"k{k}_{design}"] = {"slope": fit.slope, "intercept": fit.intercept,
                                      "r_squared": fit.r_squared,
                                      "dropped_smallest": dropped}
    return LowdimScanResult(spec=spec, rows=tuple(rows), fits=fits,
                            intrinsic_dim=intrinsic, spec_hash=spec.content_hash())


@dataclass(frozen=True)
class DimScanResult:
    spec: ExperimentSpec
    rows: tuple[ScanRow, ...]
    ratios: dict
    spec_hash: str


def run_dim_scan(spec: ExperimentSpec, d_grid) -> DimScanResult:
    """Per-coordinate exact TV combined across independent coordinates.

    The target family is the centered isotropic Gaussian of the spec at
    each d in the grid; with identical independent coordinates the exact
    1-d oracle applies per coordinate and the combined value is the
    product-coupling composition.  No sampling anywhere.
    """
    if len(spec.T_grid) != 1:
        raise ValueError("dimension scans fix one T; give a single-value T_grid")
    T = spec.T_grid[0]
    sigma0_sq = float(spec.target.get("sigma0_sq", 1.0))
    schedule = build_schedule(T, spec.c0, spec.c1)
    coeffs = _DESIGNS[spec.design](schedule)
    m1, v1 = gaussian_oracle_reverse(sigma0_sq, schedule, coeffs)
    vstar = schedule.alphabar_at(1) * sigma0_sq + 1.0 - schedule.alphabar_at(1)
    tv1 = tv_gaussians_1d(0.0, vstar, m1, v1)
    rows = []
    ratios = {}
    for d in d_grid:
        t0 = time.perf_counter()
        d = int(d)
        tv_d = tv_product_coupling([tv1] * d)
        ratios[d] = tv_d / tv1 if tv1 > 0 else float("nan")
        rows.append(ScanRow(
            experiment_id=spec.experiment_id, T=T, d=d, k=d, design=spec.design,
            eps_score=0.0, tv=tv_d, tv_stderr=0.0, noise_floor=0.0, seed=spec.seed,
            runtime_s=time.perf_counter() - t0, extras={"tv_per_coordinate": tv1},
        ))
    return DimScanResult(spec=spec, rows=tuple(rows), ratios=ratios,
                         spec_hash=spec.content_hash())


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_results_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RESULTS_HEADER)
        for r in rows:
            w.writerow([_fmt(getattr(r, name)) for name in RESULTS_HEADER])


def write_fit_json(fits: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(fits, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_meta_json(spec: ExperimentSpec, path, runtimes: dict | None = None,
                    extra: dict | None = None) -> None:
    meta = {
        "spec": spec.to_dict(),
        "spec_hash": spec.content_hash(),
        "package_version": __version__,
    }
    if runtimes:
        meta["runtimes_s"] = runtimes
    if extra:
        meta.update(extra)
    with open(path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def fit_to_dict(fit: RateFit | None, dropped: bool = False) -> dict:
    if fit is None:
        return {"slope": None, "intercept": None, "r_squared": None,
                "dropped_smallest": dropped}
    return {"slope": fit.slope, "intercept": fit.intercept,
            "r_squared": fit.r_squared, "points": [list(p) for p in fit.points],
            "dropped_smallest": dropped}


# ---------------------------------------------------------------------------
# Validation suite
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SuiteReport:
    checks: tuple[CheckOutcome, ...]
    runtime_s: float

    @property
    def all_pass(self) -> bool:
        return all(c.passed for c in self.checks)

    def lines(self) -> list[str]:
        out = [
            f"{'PASS' if c.passed else 'FAIL'} {c.name} (margin={c.margin:.6g})"
            + (f" {c.detail}" if c.detail else "")
            for c in self.checks
        ]
        out.append(f"{'PASS' if self.all_pass else 'FAIL'} overall "
                   f"({sum(c.passed for c in self.checks)}/{len(self.checks)} checks, "
                   f"{self.runtime_s:.1f}s)")
        return out


def _fd_score(target, schedule, t, x):
    """Central-difference gradient of the marginal log density."""
    h = 1e-5 * (1.0 + float(np.linalg.norm(x)))
    g = np.zeros_like(x)
    for j in range(len(x)):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (marginal_log_density(target, schedule, t, x + e)
                - marginal_log_density(target, schedule, t, x - e)) / (2 * h)
    return g


def _fd_jacobian_of_g(target, schedule, t, x):
    """Central-difference Jacobian of the conditional residual g."""
    h = 1e-5 * (1.0 + float(np.linalg.norm(x)))
    d = len(x)
    J = np.zeros((d, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        gp = posterior_stats(target, schedule, t, x + e).g
        gm = posterior_stats(target, schedule, t, x - e).g
        J[:, j] = (gp - gm) / (2 * h)
    return J


def _validation_targets():
    """Fixed zoo of analytic targets exercised by the suite."""
    two_atoms = point_masses([(0.5, [1.0]), (0.5, [-1.0])])
    gmm1 = gaussian_mixture([(0.3, [-1.0], 0.5), (0.7, [1.5], 2.0)])
    gmm2 = gaussian_mixture([
        (0.25, [0.0, 0.0], [[1.0, 0.3], [0.3, 0.8]]),
        (0.45, [2.0, -1.0], [[0.5, -0.1], [-0.1, 0.9]]),
        (0.30, [-1.5, 1.0], [[1.2, 0.0], [0.0, 0.4]]),
    ])
    atoms2d = point_masses([(0.25, [1.0, 1.0]), (0.25, [-1.0, 1.0]),
                            (0.25, [1.0, -1.0]), (0.25, [-1.0, -1.0])])
    rng = make_rng(12345, STREAM_VALIDATION, 99)
    embed, _ = np.linalg.qr(rng.standard_normal((3, 1)))
    embedded = EmbeddedTarget(base=two_atoms, embed=embed,
                              offset=np.array([0.3, -0.2, 0.1]))
    return [two_atoms, gmm1, gmm2, atoms2d, embedded, isotropic_gaussian(2, 1.0)]


def run_validation_suite(seed: int = 0) -> SuiteReport:
    """Execute every module's invariant checks at fixed desk-scale sizes.

    Failures are report content, not exceptions; the CLI maps the overall
    outcome to the exit status.
    """
    t_start = time.perf_counter()
    checks: list[CheckOutcome] = []
    rng = make_rng(seed, STREAM_VALIDATION)

    # --- schedule bounds at the pinned step counts
    for T in (64, 256, 1024):
        rep = schedule_invariants_check(build_schedule(T, 2.0, 4.0))
        worst = min(c.margin for c in rep.checks)
        checks.append(CheckOutcome(f"schedule_bounds_T{T}", rep.all_pass, worst))

    # --- product consistency: alphabar_t / alphabar_{t-1} == alpha_t
    s = build_schedule(512, 2.0, 4.0)
    rel = np.abs(s.alphabar[1:] / s.alphabar[:-1] - s.alpha[1:]) / s.alpha[1:]
    tol = 3.0 * 2.0 ** -53  # two stored roundings plus the division
    checks.append(CheckOutcome("schedule_product_consistency",
                               bool(rel.max() <= tol), tol - float(rel.max())))

    # --- determinism of construction
    s2 = build_schedule(512, 2.0, 4.0)
    same = (s.beta.tobytes() == s2.beta.tobytes()
            and s.alphabar.tobytes() == s2.alphabar.tobytes())
    checks.append(CheckOutcome("schedule_determinism", same, 0.0))

    # --- finite-difference score and Jacobian consistency; PSD of I - J
    zoo = _validation_targets()
    sched = build_schedule(64, 2.0, 4.0)
    worst_score = 0.0
    worst_jac = 0.0
    n_triples = 200
    for i in range(n_triples):
        target = zoo[i % len(zoo)]
        t = int(rng.integers(1, sched.T + 1))
        x = sample_forward(target, sched, t, 1, _row_seed(seed, 7, i))[0]
        s_closed = score_exact(target, sched, t, x)
        s_fd = _fd_score(target, sched, t, x)
        rel_err = float(np.linalg.norm(s_fd - s_closed) /
                        (1e-9 + np.linalg.norm(s_closed)))
        worst_score = max(worst_score, rel_err)
        ps = posterior_stats(target, sched, t, x)
        J_fd = _fd_jacobian_of_g(target, sched, t, x)
        rel_err_j = float(np.linalg.norm(J_fd - ps.J) / (1e-9 + np.linalg.norm(ps.J)))
        worst_jac = max(worst_jac, rel_err_j)
    checks.append(CheckOutcome("score_fd_consistency", worst_score < 1e-4,
                               1e-4 - worst_score, f"{n_triples} triples"))
    checks.append(CheckOutcome("jacobian_fd_consistency", worst_jac < 1e-4,
                               1e-4 - worst_jac, f"{n_triples} triples"))

    psd_margin = math.inf
    for i in range(1000):
        target = zoo[i % len(zoo)]
        t = int(rng.integers(1, sched.T + 1))
        x = sample_forward(target, sched, t, 1, _row_seed(seed, 8, i))[0]
        ps = posterior_stats(target, sched, t, x)
        ImJ = np.eye(len(x)) - ps.J
        lam = float(np.linalg.eigvalsh(ImJ).min())
        psd_margin = min(psd_margin, lam + 1e-8 * (1.0 + float(np.trace(ImJ))))
    checks.append(CheckOutcome("psd_identity_minus_jacobian", psd_margin >= 0.0,
                               psd_margin, "1000 triples"))

    # --- covariance identity: I - J equals Cov of the unit noise given x,
    #     estimated by importance-weighted Monte Carlo over prior atoms.
    worst_cov = 0.0
    for name, target, x in (
        ("d1", point_masses([(0.5, [1.0]), (0.5, [-1.0])]), np.array([0.12])),
        ("d2", point_masses([(0.5, [1.0, 0.6]), (0.5, [-1.0, -0.6])]),
         np.array([0.1, 0.05])),
    ):
        t = 40
        abar = sched.alphabar_at(t)
        om = 1.0 - abar
        draws = 1_000_000
        mc_rng = make_rng(seed, STREAM_VALIDATION, 17, len(x))
        idx = mc_rng.choice(len(target.weights), size=draws, p=target.weights)
        x0 = target.atoms[idx]
        resid = (x[None, :] - math.sqrt(abar) * x0) / math.sqrt(om)
        logw = -0.5 * np.sum(resid * resid, axis=1)
        w = np.exp(logw - logw.max())
        w /= w.sum()
        mean = w @ resid
        cov = (resid - mean).T * w @ (resid - mean)
        ImJ = np.eye(len(x)) - posterior_stats(target, sched, t, x).J
        rel = float(np.linalg.norm(cov - ImJ) / np.linalg.norm(ImJ))
        worst_cov = max(worst_cov, rel)
    checks.append(CheckOutcome("covariance_identity_mc", worst_cov < 1e-3,
                               1e-3 - worst_cov, "10^6 posterior draws"))

    # --- score-provider contracts
    target = isotropic_gaussian(2, 1.0)
    provider = exact_provider(target, sched)
    est0 = estimate_eps_score(provider, target, sched, n=64, seed=seed)
    checks.append(CheckOutcome("eps_score_exact_zero", est0.value == 0.0, -est0.value))

    p1 = perturbed_provider(provider, PerturbationSpec("constant_bias", 0.05, 3))
    p2 = perturbed_provider(provider, PerturbationSpec("constant_bias", 0.10, 3))
    e1 = estimate_eps_score(p1, target, sched, n=64, seed=seed).value
    e2 = estimate_eps_score(p2, target, sched, n=64, seed=seed).value
    checks.append(CheckOutcome("eps_score_bias_homogeneity",
                               math.isclose(e2, 2 * e1, rel_tol=1e-12),
                               -abs(e2 - 2 * e1)))

    xq = np.array([0.4, -0.7])
    same = np.array_equal(p1(5, xq), p1(5, xq))
    checks.append(CheckOutcome("provider_purity", same, 0.0))

    # --- reverse-process determinism across worker counts
    target64 = isotropic_gaussian(3, 1.5)
    sched64 = build_schedule(64, 2.0, 4.0)
    coeffs64 = coefficients_standard(sched64)
    prov64 = exact_provider(target64, sched64)
    ref = run_reverse(prov64, sched64, coeffs64, 512, seed, workers=1, chunk_size=64)
    ok = True
    for wk in (2, 8):
        out = run_reverse(prov64, sched64, coeffs64, 512, seed, workers=wk, chunk_size=64)
        ok = ok and out.samples.tobytes() == ref.samples.tobytes()
    checks.append(CheckOutcome("reverse_worker_determinism", ok, 0.0, "workers 1/2/8"))

    # --- DDIM determinism
    ddim = ddim_coefficients(sched64)
    r1 = run_reverse(prov64, sched64, ddim, 64, seed)
    r2 = run_reverse(prov64, sched64, ddim, 64, seed)
    checks.append(CheckOutcome("ddim_determinism",
                               r1.samples.tobytes() == r2.samples.tobytes(), 0.0))

    # --- design consistency
    std = coefficients_standard(sched64)
    low = coefficients_lowdim(sched64)
    eta_same = np.array_equal(std.eta, low.eta)
    ratio = low.sigma[1:] / std.sigma[1:]
    expect = np.sqrt((sched64.alpha[1:] - sched64.alphabar[1:])
                     / (1.0 - sched64.alphabar[1:]))
    dev = float(np.max(np.abs(ratio - expect)))
    checks.append(CheckOutcome("design_consistency", eta_same and dev < 1e-12,
                               1e-12 - dev))

    # --- linear-score equivalence: sampler moments match the Gaussian oracle
    m_or, v_or = gaussian_oracle_reverse(1.5, sched64, coeffs64)
    n_mc = 100_000
    run = run_reverse(prov64, sched64, coeffs64, n_mc, _row_seed(seed, 21))
    margin = math.inf
    for c in range(3):
        col = run.samples[:, c]
        se_mean = math.sqrt(v_or / n_mc)
        se_var = v_or * math.sqrt(2.0 / (n_mc - 1))
        margin = min(margin, 4 * se_mean - abs(col.mean() - m_or))
        margin = min(margin, 4 * se_var - abs(col.var(ddof=1) - v_or))
    checks.append(CheckOutcome("gaussian_linear_equivalence", margin >= 0.0, margin,
                               f"n={n_mc}, d=3"))

    # --- closed-form KL identity against the same-covariance Gaussian KL
    worst_kl = 0.0
    d = 3
    for _ in range(1000):
        s_est = rng.standard_normal(d)
        s_true = rng.standard_normal(d)
        alpha_t = float(rng.uniform(0.2, 0.999))
        x = rng.standard_normal(d)
        closed = kl_step_gaussian(s_est, s_true, alpha_t)
        cov = (1.0 - alpha_t) / alpha_t * np.eye(d)
        m1 = (x + (1.0 - alpha_t) * s_est) / math.sqrt(alpha_t)
        m2 = (x + (1.0 - alpha_t) * s_true) / math.sqrt(alpha_t)
        generic = kl_gaussians_same_cov(m1, m2, cov)
        rel = abs(closed - generic) / max(abs(generic), 1e-300)
        worst_kl = max(worst_kl, rel if generic != 0 else abs(closed - generic))
    checks.append(CheckOutcome("kl_closed_form_identity", worst_kl < 1e-12,
                               1e-12 - worst_kl, "1000 random inputs"))

    # --- Pinsker on exactly computed pairs
    pinsker_margin = math.inf
    all_ok = True
    for _ in range(200):
        m1, m2 = rng.normal(0, 1, 2)
        v1, v2 = rng.uniform(0.3, 3.0, 2)
        tv = tv_gaussians_1d(m1, v1, m2, v2)
        kl = kl_gaussians(np.array([m1]), np.array([[v1]]),
                          np.array([m2]), np.array([[v2]]))
        all_ok = all_ok and pinsker_check(tv, kl)
        pinsker_margin = min(pinsker_margin, math.sqrt(0.5 * kl) - tv)
    checks.append(CheckOutcome("pinsker_exact_pairs", all_ok, pinsker_margin,
                               "200 Gaussian pairs"))

    # --- grid-TV estimator consistency: error decreases with sample size
    tgt1 = isotropic_gaussian(1, 1.0)
    sched_t = build_schedule(64, 2.0, 4.0)
    means = []
    for n in (10_000, 100_000, 1_000_000):
        grid = default_grid(*forward_moments(tgt1, sched_t, 1), n, 1)
        masses = forward_cell_masses(tgt1, sched_t, 1, grid.edges())
        vals = []
        for s_i in range(10):
            smp = sample_forward(tgt1, sched_t, 1, n, _row_seed(seed, 31, n, s_i))
            vals.append(tv_grid(smp, grid, cell_masses=masses).value)
        means.append(float(np.mean(vals)))
    drop = min(means[0] - means[1], means[1] - means[2])
    checks.append(CheckOutcome("tv_estimator_consistency", drop > 0.0, drop,
                               f"means={['%.4g' % m for m in means]}"))
    in_bounds = all(0.0 <= m <= 1.0 for m in means)
    checks.append(CheckOutcome("tv_bounds", in_bounds, 0.0))

    return SuiteReport(checks=tuple(checks), runtime_s=time.perf_counter() - t_start)
