"""Figure rendering for scan outputs.

Every scan subcommand renders a log-log figure next to its results.csv.
Figures are a convenience view of the delimited output, never an input to
any computation.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_STYLE = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 130,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
}


def _fit_line(ax, xs, slope, intercept, label):
    xs = np.asarray(sorted(xs), dtype=float)
    ys = np.exp(intercept + slope * np.log(xs))
    ax.plot(xs, ys, "--", linewidth=1, label=label)


def render_rate_figure(result, path) -> None:
    """TV against T with the fitted power law."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        Ts = [r.T for r in result.rows]
        tvs = [r.tv for r in result.rows]
        ax.loglog(Ts, tvs, "o", label="measured TV")
        floors = [r.noise_floor for r in result.rows]
        if any(f > 0 for f in floors):
            ax.loglog(Ts, floors, "s", markersize=3, alpha=0.6, label="noise floor")
        if result.fit is not None:
            _fit_line(ax, Ts, result.fit.slope, result.fit.intercept,
                      f"slope {result.fit.slope:.2f} (r$^2$={result.fit.r_squared:.3f})")
        ax.set_xlabel("steps T")
        ax.set_ylabel("TV distance")
        ax.set_title(result.spec.experiment_id)
        ax.legend()
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def render_score_error_figure(result, path) -> None:
    """Excess TV against the bias magnitude."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        eps = [e for e, _ in result.excess]
        exc = [x for _, x in result.excess]
        ax.loglog(eps, exc, "o", label="excess TV")
        if result.fit is not None:
            _fit_line(ax, eps, result.fit.slope, result.fit.intercept,
                      f"slope {result.fit.slope:.2f}")
        ax.set_xlabel(r"score bias $\varepsilon$")
        ax.set_ylabel("excess TV")
        ax.set_title(result.spec.experiment_id)
        ax.legend()
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def render_lowdim_figure(result, path) -> None:
    """Per-design TV curves for every intrinsic dimension in the scan."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        groups: dict[tuple[int, str], list] = {}
        for r in result.rows:
            groups.setdefault((r.k, r.design), []).append((r.T, r.tv))
        for (k, design), pts in sorted(groups.items()):
            pts.sort()
            marker = "o" if design == "ddpm_lowdim" else "x"
            ax.loglog([p[0] for p in pts], [p[1] for p in pts], marker + "-",
                      label=f"k={k} {design}")
        ax.set_xlabel("steps T")
        ax.set_ylabel("TV distance")
        ax.set_title(result.spec.experiment_id)
        ax.legend()
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def render_covering_figure(eps_grid, counts, slope, path, title="covering numbers") -> None:
    """log N_eps against log(1/eps) with the fitted slope."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        inv = [1.0 / e for e in eps_grid]
        ax.loglog(inv, counts, "o", label="greedy net size")
        logx = np.log(inv)
        c = float(np.mean(np.log(counts) - slope * logx))
        ax.loglog(inv, np.exp(c + slope * logx), "--",
                  label=f"slope {slope:.2f}")
        ax.set_xlabel(r"$1/\varepsilon$")
        ax.set_ylabel(r"$N_\varepsilon$")
        ax.set_title(title)
        ax.legend()
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
