"""Command-line entry point.

Subcommands: validate, rate-scan, score-error-scan, lowdim-scan, sample,
schedule-dump, covering.  Exit status: 0 on success, 1 on experiment
failure, 2 on usage errors (argparse's own convention).  Every subcommand
prints the resolved spec, with defaults filled, before doing any work.
Flag values override config values, which override the defaults; the
worker-count default comes from the DDPM_LAB_THREADS environment variable.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .harness import (
    ExperimentSpec,
    fit_to_dict,
    load_config,
    resolve_spec,
    resolve_target,
    run_lowdim_scan,
    run_rate_scan,
    run_score_error_scan,
    run_validation_suite,
    write_fit_json,
    write_meta_json,
    write_results_csv,
)
from .samplers import (
    run_reverse,
    write_samples_binary,
    write_samples_csv,
    write_samples_meta,
)
from .schedule import build_schedule, schedule_invariants_check, write_schedule_csv
from .scores import exact_provider, perturbed_provider
from .targets import covering_number, intrinsic_dimension_estimate, target_hash

_SCAN_ONLY_KEYS = ("eps_grid", "k_grid", "d_ambient", "d_grid")


class UsageError(Exception):
    """Bad invocation or unreadable inputs; maps to exit status 2."""


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError) as exc:
        print(f"experiment failed: {exc}", file=sys.stderr)
        return 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ddpm-lab",
        description="Diffusion reverse-process convergence laboratory",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="run the full invariant validation suite")
    p.add_argument("--seed", type=int, default=0, help="suite seed")
    p.add_argument("--out", type=Path, default=None, help="write validation_report.csv here")
    p.set_defaults(func=_cmd_validate)

    for name, help_text in (
        ("rate-scan", "TV against the step count T"),
        ("score-error-scan", "TV degradation against the score bias"),
        ("lowdim-scan", "standard vs dimension-adaptive design on embedded targets"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_scan_args(p)
        p.set_defaults(func={"rate-scan": _cmd_rate_scan,
                             "score-error-scan": _cmd_score_error_scan,
                             "lowdim-scan": _cmd_lowdim_scan}[name])

    p = sub.add_parser("sample", help="emit raw Y_1 sample matrices")
    _add_scan_args(p)
    p.add_argument("--format", choices=("csv", "bin"), default="csv",
                   help="sample dump format")
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("schedule-dump", help="write the schedule arrays as CSV")
    p.add_argument("--T", type=int, required=True, help="step count")
    p.add_argument("--c0", type=float, default=2.0, help="first-step exponent")
    p.add_argument("--c1", type=float, default=4.0, help="growth-rate constant")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.set_defaults(func=_cmd_schedule_dump)

    p = sub.add_parser("covering", help="greedy-net covering numbers of a point cloud")
    p.add_argument("--points", type=Path, required=True,
                   help="CSV file, one point per row")
    p.add_argument("--eps", type=float, nargs="+", required=True,
                   help="strictly decreasing radii")
    p.add_argument("--out", type=Path, default=None, help="output directory")
    p.set_defaults(func=_cmd_covering)

    return parser


def _add_scan_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("config", type=Path, help="experiment config (TOML or JSON)")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--workers", type=int, default=None, help="worker thread count")
    p.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    p.add_argument("-v", "--verbose", action="store_true", help="chatty progress output")


def _default_workers() -> int | None:
    env = os.environ.get("DDPM_LAB_THREADS")
    if env is None:
        return None
    try:
        return max(1, int(env))
    except ValueError:
        raise UsageError(f"DDPM_LAB_THREADS must be an integer, got {env!r}")


def _load_scan_spec(args) -> tuple[ExperimentSpec, dict]:
    if not args.config.exists():
        raise UsageError(f"config file not found: {args.config}")
    try:
        raw = load_config(args.config)
    except Exception as exc:
        raise UsageError(f"cannot parse {args.config}: {exc}")
    scan_extras = {k: raw.pop(k) for k in _SCAN_ONLY_KEYS if k in raw}
    workers = args.workers if args.workers is not None else (
        raw.get("workers") or _default_workers())
    try:
        spec = resolve_spec(raw, seed=args.seed, workers=workers)
    except ValueError as exc:
        raise UsageError(str(exc))
    print(json.dumps({"resolved_spec": spec.to_dict(), **scan_extras},
                     indent=2, sort_keys=True))
    return spec, scan_extras


def _ensure_out(args) -> Path:
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_validate(args) -> int:
    print(json.dumps({"resolved_spec": {"command": "validate", "seed": args.seed}},
                     indent=2))
    report = run_validation_suite(seed=args.seed)
    for line in report.lines():
        print(line)
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        path = args.out / "validation_report.csv"
        with open(path, "w") as fh:
            fh.write("check,passed,margin,detail\n")
            for c in report.checks:
                fh.write(f"{c.name},{int(c.passed)},{c.margin!r},{c.detail}\n")
        print(f"wrote {path}")
    return 0 if report.all_pass else 1


def _cmd_rate_scan(args) -> int:
    spec, _ = _load_scan_spec(args)
    out = _ensure_out(args)
    result = run_rate_scan(spec)
    write_results_csv(result.rows, out / "results.csv")
    write_fit_json(fit_to_dict(result.fit, result.dropped_smallest), out / "fit.json")
    validity = {
        str(T): {c.name: [c.passed, c.margin] for c in rep.checks}
        for T, rep in result.validity.items()
    }
    write_meta_json(spec, out / "meta.json",
                    runtimes={str(r.T): r.runtime_s for r in result.rows},
                    extra={"schedule_validity": validity})
    if not args.no_figures:
        from .reporting import render_rate_figure
        render_rate_figure(result, out / "rate_scan.png")
    print(f"fit: slope={result.fit.slope:.4f} r2={result.fit.r_squared:.5f} "
          f"dropped_smallest={result.dropped_smallest}")
    print(f"wrote {out / 'results.csv'}")
    return 0


def _cmd_score_error_scan(args) -> int:
    spec, extras = _load_scan_spec(args)
    if "eps_grid" not in extras:
        raise UsageError("score-error-scan config needs an eps_grid list (including 0)")
    out = _ensure_out(args)
    result = run_score_error_scan(spec, extras["eps_grid"])
    write_results_csv(result.rows, out / "results.csv")
    fits = fit_to_dict(result.fit, result.dropped_smallest)
    fits["excess"] = [list(p) for p in result.excess]
    write_fit_json(fits, out / "fit.json")
    write_meta_json(spec, out / "meta.json",
                    runtimes={repr(r.eps_score): r.runtime_s for r in result.rows})
    if not args.no_figures:
        from .reporting import render_score_error_figure
        render_score_error_figure(result, out / "score_error_scan.png")
    if result.fit is not None:
        print(f"excess fit: slope={result.fit.slope:.4f} r2={result.fit.r_squared:.5f}")
    print(f"wrote {out / 'results.csv'}")
    return 0


def _cmd_lowdim_scan(args) -> int:
    spec, extras = _load_scan_spec(args)
    if "k_grid" not in extras or "d_ambient" not in extras:
        raise UsageError("lowdim-scan config needs k_grid and d_ambient")
    out = _ensure_out(args)
    result = run_lowdim_scan(spec, extras["k_grid"], int(extras["d_ambient"]))
    write_results_csv(result.rows, out / "results.csv")
    fits = dict(result.fits)
    fits["intrinsic_dimension_estimates"] = {str(k): v for k, v in result.intrinsic_dim.items()}
    write_fit_json(fits, out / "fit.json")
    write_meta_json(spec, out / "meta.json",
                    runtimes={f"k{r.k}_{r.design}_T{r.T}": r.runtime_s for r in result.rows})
    with open(out / "lowdim_components.csv", "w") as fh:
        fh.write("experiment_id,T,k,design,tv_projected,tv_normal\n")
        for r in result.rows:
            fh.write(f"{r.experiment_id},{r.T},{r.k},{r.design},"
                     f"{r.extras['tv_projected']!r},{r.extras['tv_normal']!r}\n")
    if not args.no_figures:
        from .reporting import render_lowdim_figure
        render_lowdim_figure(result, out / "lowdim_scan.png")
    for key, fit in result.fits.items():
        print(f"{key}: slope={fit['slope']:.4f} r2={fit['r_squared']:.5f}")
    print(f"wrote {out / 'results.csv'}")
    return 0


def _cmd_sample(args) -> int:
    spec, _ = _load_scan_spec(args)
    if len(spec.T_grid) != 1:
        raise UsageError("sample needs a single-value T_grid")
    out = _ensure_out(args)
    T = spec.T_grid[0]
    from .harness import _DESIGNS, _perturbation_spec, _row_seed

    target = resolve_target(spec.target)
    schedule = build_schedule(T, spec.c0, spec.c1)
    coeffs = _DESIGNS[spec.design](schedule)
    provider = exact_provider(target, schedule)
    pert = _perturbation_spec(spec.perturbation)
    if pert is not None:
        provider = perturbed_provider(provider, pert)
    result = run_reverse(provider, schedule, coeffs, spec.trajectories,
                         _row_seed(spec.seed, T), workers=spec.workers)
    if args.format == "csv":
        path = out / "samples.csv"
        write_samples_csv(result.samples, path)
    else:
        path = out / "samples.bin"
        write_samples_binary(result.samples, path)
    write_samples_meta(out / "samples.meta.json", seed=spec.seed, T=T,
                       design_tag=coeffs.design_tag, target_hash=target_hash(target))
    print(f"wrote {path} ({spec.trajectories} x {target.d})")
    return 0


def _cmd_schedule_dump(args) -> int:
    print(json.dumps({"resolved_spec": {"command": "schedule-dump", "T": args.T,
                                        "c0": args.c0, "c1": args.c1}}, indent=2))
    try:
        schedule = build_schedule(args.T, args.c0, args.c1)
    except ValueError as exc:
        raise UsageError(str(exc))
    out = _ensure_out(args)
    path = out / "schedule.csv"
    write_schedule_csv(schedule, path)
    report = schedule_invariants_check(schedule)
    for line in report.lines():
        print(line)
    print(f"wrote {path}")
    return 0


def _cmd_covering(args) -> int:
    if not args.points.exists():
        raise UsageError(f"points file not found: {args.points}")
    eps = [float(e) for e in args.eps]
    print(json.dumps({"resolved_spec": {"command": "covering",
                                        "points": str(args.points), "eps": eps}},
                     indent=2))
    points = np.loadtxt(args.points, delimiter=",", ndmin=2)
    counts = [covering_number(points, e) for e in eps]
    try:
        slope = intrinsic_dimension_estimate(points, eps)
    except ValueError as exc:
        raise UsageError(str(exc))
    for e, c in zip(eps, counts):
        print(f"eps={e}: N={c}")
    print(f"intrinsic dimension estimate (covering slope): {slope:.4f}")
    if args.out is not None:
        out = _ensure_out(args)
        with open(out / "covering.csv", "w") as fh:
            fh.write("eps,covering_number\n")
            for e, c in zip(eps, counts):
                fh.write(f"{e!r},{c}\n")
            fh.write(f"# slope,{slope!r}\n")
        from .reporting import render_covering_figure
        render_covering_figure(eps, counts, slope, out / "covering.png")
        print(f"wrote {out / 'covering.csv'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
