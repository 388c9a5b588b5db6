"""Analytic target distributions with closed-form forward-process marginals.

A target models the data distribution at time zero.  Pushing it through the
forward noising map ``X_t = sqrt(abar_t) X_0 + sqrt(1-abar_t) W`` keeps every
quantity of interest in closed form for the mixture families implemented
here:

- the marginal log density of X_t,
- the exact score (gradient of that log density),
- the conditional residual g_t(x) = E[x - sqrt(abar_t) X_0 | X_t = x],
  its Jacobian J_t(x), and the fact that I - J_t is PSD.

Scores are computed through component responsibilities in log space; no
numeric differentiation anywhere.  The module also hosts the greedy-net
covering-number estimator and the covering-slope intrinsic-dimension
estimate used by the low-dimensional experiments.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp, ndtr

from .rng import STREAM_FORWARD, make_rng
from .schedule import Schedule

_WEIGHT_TOL = 1e-12
_ORTHO_TOL = 1e-10


@dataclass(eq=False)
class GaussianMixtureTarget:
    """Mixture of Gaussians: components (weight, mean, cov).

    Covariances must be symmetric positive definite; degenerate (zero
    eigenvalue) components belong in :class:`PointMassMixtureTarget`
    instead.  Weights must sum to one.
    """

    d: int
    weights: np.ndarray
    means: np.ndarray          # (K, d)
    covs: np.ndarray | None    # (K, d, d); None when isotropic
    iso_vars: np.ndarray | None = None  # (K,) per-component s**2 when isotropic
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        _validate_weights(self.weights)
        if self.means.shape != (len(self.weights), self.d):
            raise ValueError("means must have shape (K, d)")
        if self.covs is not None:
            for i, cov in enumerate(self.covs):
                if not np.allclose(cov, cov.T, atol=1e-12):
                    raise ValueError(f"component {i}: covariance not symmetric")
                evals = np.linalg.eigvalsh(cov)
                scale = max(float(evals.max()), 1.0)
                if evals.min() < -1e-10 * scale:
                    raise ValueError(f"component {i}: covariance not PSD")
                if evals.min() <= 1e-12 * scale:
                    raise ValueError(
                        f"component {i}: covariance is singular; use "
                        "PointMassMixtureTarget for degenerate targets"
                    )
        if not math.isfinite(first_moment_bound(self)):
            raise ValueError("target must have finite first moment")


@dataclass(eq=False)
class PointMassMixtureTarget:
    """Finite atom set: components (weight, location)."""

    d: int
    weights: np.ndarray
    atoms: np.ndarray  # (K, d)
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if len(self.atoms) == 0:
            raise ValueError("atom list must be non-empty")
        _validate_weights(self.weights)
        if self.atoms.shape != (len(self.weights), self.d):
            raise ValueError("atoms must have shape (K, d)")
        if not np.all(np.isfinite(self.atoms)):
            raise ValueError("atom locations must be finite")


@dataclass(eq=False)
class EmbeddedTarget:
    """Low-dimensional base target mapped into ambient space.

    X_0 = embed @ X_base + offset, with ``embed`` a (d, k) matrix with
    orthonormal columns and k < d.  The forward marginal factorizes into
    the base marginal on the spanned subspace times an isotropic Gaussian
    on its orthogonal complement, which keeps scores and Jacobians exact
    and cheap.
    """

    base: GaussianMixtureTarget | PointMassMixtureTarget
    embed: np.ndarray   # (d, k)
    offset: np.ndarray  # (d,)

    def __post_init__(self):
        d, k = self.embed.shape
        if d <= k:
            raise ValueError(f"ambient dimension d={d} must exceed base dimension k={k}")
        if self.base.d != k:
            raise ValueError("embed column count must match base dimension")
        gram = self.embed.T @ self.embed
        if not np.allclose(gram, np.eye(k), atol=_ORTHO_TOL):
            raise ValueError("embed must have orthonormal columns")
        if self.offset.shape != (d,):
            raise ValueError("offset must be a d-vector")

    @property
    def d(self) -> int:
        return self.embed.shape[0]

    @property
    def k(self) -> int:
        return self.embed.shape[1]


Target = GaussianMixtureTarget | PointMassMixtureTarget | EmbeddedTarget


@dataclass(frozen=True)
class PosteriorStats:
    """Conditional residual g, its Jacobian J, and log p_{X_t}(x)."""

    g: np.ndarray
    J: np.ndarray
    log_density: float


def gaussian_mixture(components, d: int | None = None) -> GaussianMixtureTarget:
    """Build a Gaussian mixture from (weight, mean, cov) triples.

    ``cov`` entries may be scalars (isotropic), 1-d arrays (diagonal), or
    full matrices.
    """
    weights = np.array([float(w) for w, _, _ in components])
    means = np.array([np.atleast_1d(np.asarray(m, dtype=float)) for _, m, _ in components])
    d = means.shape[1] if d is None else d
    raw = [np.asarray(c, dtype=float) for _, _, c in components]
    if all(r.ndim == 0 for r in raw):
        iso = np.array([float(r) for r in raw])
        return GaussianMixtureTarget(d=d, weights=weights, means=means,
                                     covs=None, iso_vars=iso)
    covs = np.array([np.diag(r) if r.ndim == 1 else r for r in raw])
    return GaussianMixtureTarget(d=d, weights=weights, means=means, covs=covs)


def point_masses(atoms_and_weights) -> PointMassMixtureTarget:
    """Build a point-mass mixture from (weight, location) pairs."""
    pairs = list(atoms_and_weights)
    if not pairs:
        raise ValueError("atom list must be non-empty")
    weights = np.array([float(w) for w, _ in pairs])
    atoms = np.array([np.atleast_1d(np.asarray(a, dtype=float)) for _, a in pairs])
    return PointMassMixtureTarget(d=atoms.shape[1], weights=weights, atoms=atoms)


def standard_gaussian(d: int) -> GaussianMixtureTarget:
    return isotropic_gaussian(d, 1.0)


def isotropic_gaussian(d: int, sigma0_sq: float) -> GaussianMixtureTarget:
    return gaussian_mixture([(1.0, np.zeros(d), sigma0_sq)], d=d)


def _validate_weights(weights: np.ndarray) -> None:
    if np.any(weights <= 0) or np.any(weights > 1):
        raise ValueError("weights must lie in (0, 1]")
    if abs(float(weights.sum()) - 1.0) > _WEIGHT_TOL:
        raise ValueError(f"weights must sum to 1 within {_WEIGHT_TOL}, got {weights.sum()!r}")


def first_moment_bound(target: Target) -> float:
    """Upper bound on E||X_0||; exact for point masses.

    Gaussian mixtures use sum_i w_i (||mu_i|| + sqrt(trace Sigma_i)).
    """
    if isinstance(target, PointMassMixtureTarget):
        return float(np.sum(target.weights * np.linalg.norm(target.atoms, axis=1)))
    if isinstance(target, GaussianMixtureTarget):
        norms = np.linalg.norm(target.means, axis=1)
        if target.covs is None:
            traces = target.iso_vars * target.d
        else:
            traces = np.trace(target.covs, axis1=1, axis2=2)
        return float(np.sum(target.weights * (norms + np.sqrt(traces))))
    return first_moment_bound(target.base) + float(np.linalg.norm(target.offset))


# ---------------------------------------------------------------------------
# Mixture state at a fixed step: smoothed means and covariance factors
# ---------------------------------------------------------------------------


class _MixtureState:
    """Per-(target, schedule, t) factors for the forward marginal.

    The marginal of X_t is a mixture with means sqrt(abar) mu_i and
    covariances C_i = abar Sigma_i + (1-abar) I.  Point masses and
    isotropic components keep C_i scalar; full covariances carry a
    Cholesky factor per component.
    """

    def __init__(self, target, schedule: Schedule, t: int):
        abar = schedule.alphabar_at(t)
        self.abar = abar
        self.one_minus = 1.0 - abar
        self.log_w = np.log(_weights_of(target))
        self.d = target.d
        sq = math.sqrt(abar)
        if isinstance(target, PointMassMixtureTarget):
            self.means = sq * target.atoms
            self.iso_var = np.full(len(target.weights), self.one_minus)
            self.sig2 = np.zeros(len(target.weights))
            self.chol = None
        elif target.covs is None:
            self.means = sq * target.means
            self.sig2 = target.iso_vars
            self.iso_var = abar * target.iso_vars + self.one_minus
            self.chol = None
        else:
            self.means = sq * target.means
            self.sig2 = None
            self.iso_var = None
            C = abar * target.covs + self.one_minus * np.eye(target.d)
            self.chol = np.linalg.cholesky(C)
            self.logdet = 2.0 * np.sum(np.log(np.diagonal(self.chol, axis1=1, axis2=2)), axis=1)
            # Sigma_i C_i^{-1}, symmetric since C_i is a polynomial in Sigma_i.
            self.sigma_cinv = np.stack([
                np.linalg.solve(C[i], target.covs[i].T).T for i in range(len(C))
            ])
        if self.iso_var is not None and float(np.ptp(self.iso_var)) == 0.0:
            # Shared isotropic variance: terms independent of the component
            # cancel inside the softmax, so responsibilities need only one
            # matmul against these precomputed projections.
            v = float(self.iso_var[0])
            self.softmax_proj = self.means.T / v
            self.softmax_bias = self.log_w - 0.5 * np.sum(self.means ** 2, axis=1) / v
        else:
            self.softmax_proj = None

    def component_logpdf(self, x: np.ndarray) -> np.ndarray:
        """Per-component log N(x; mean_i, C_i); x has shape (n, d)."""
        n = x.shape[0]
        if self.chol is None:
            diff2 = (
                np.sum(x * x, axis=1)[:, None]
                - 2.0 * x @ self.means.T
                + np.sum(self.means * self.means, axis=1)[None, :]
            )
            # Guard tiny negative values from cancellation.
            np.maximum(diff2, 0.0, out=diff2)
            return (
                -0.5 * diff2 / self.iso_var[None, :]
                - 0.5 * self.d * np.log(2.0 * math.pi * self.iso_var)[None, :]
            )
        K = len(self.log_w)
        out = np.empty((n, K))
        for i in range(K):
            diff = x - self.means[i]
            zi = solve_triangular(self.chol[i], diff.T, lower=True).T
            out[:, i] = -0.5 * np.sum(zi * zi, axis=1) \
                - 0.5 * (self.d * math.log(2.0 * math.pi) + self.logdet[i])
        return out

    def cinv_residual(self, x: np.ndarray) -> np.ndarray:
        """C_i^{-1} (x - mean_i) for all components; shape (n, K, d)."""
        if self.chol is None:
            return (x[:, None, :] - self.means[None, :, :]) / self.iso_var[None, :, None]
        K = len(self.log_w)
        out = np.empty((x.shape[0], K, self.d))
        for i in range(K):
            diff = x - self.means[i]
            zi = solve_triangular(self.chol[i], diff.T, lower=True)
            out[:, i, :] = solve_triangular(self.chol[i].T, zi, lower=False).T
        return out

    def residual_cov(self, i: int) -> np.ndarray:
        """Cov(x - sqrt(abar) X_0 | x, component i) = abar (1-abar) Sigma_i C_i^{-1}."""
        if self.chol is None:
            v = self.abar * self.one_minus * self.sig2[i] / self.iso_var[i]
            return v * np.eye(self.d)
        return self.abar * self.one_minus * self.sigma_cinv[i]


def _weights_of(target) -> np.ndarray:
    return target.weights


def _state(target, schedule: Schedule, t: int) -> _MixtureState:
    key = (schedule.content_key(), t)
    st = target._cache.get(key)
    if st is None:
        st = _MixtureState(target, schedule, t)
        target._cache[key] = st
    return st


def _embedded_frame(target: EmbeddedTarget, schedule: Schedule, t: int, x: np.ndarray):
    """Split ambient points into base coordinates and the normal residue."""
    sq = math.sqrt(schedule.alphabar_at(t))
    centered = x - sq * target.offset
    z = centered @ target.embed
    x_perp = centered - z @ target.embed.T
    return z, x_perp


def marginal_log_density(target: Target, schedule: Schedule, t: int, x) -> float | np.ndarray:
    """log p_{X_t}(x) via a stable log-sum-exp over component terms.

    Accepts a single d-vector or an (n, d) batch.
    """
    x2, single = _as_batch(x, target.d)
    if isinstance(target, EmbeddedTarget):
        z, x_perp = _embedded_frame(target, schedule, t, x2)
        om = 1.0 - schedule.alphabar_at(t)
        dperp = target.d - target.k
        log_norm = -0.5 * dperp * math.log(2.0 * math.pi * om) \
            - 0.5 * np.sum(x_perp * x_perp, axis=1) / om
        out = marginal_log_density(target.base, schedule, t, z) + log_norm
    else:
        st = _state(target, schedule, t)
        out = logsumexp(st.component_logpdf(x2) + st.log_w[None, :], axis=1)
    return float(out[0]) if single else out


def score_exact(target: Target, schedule: Schedule, t: int, x) -> np.ndarray:
    """Exact gradient of log p_{X_t} at x, in closed form.

    Computed through component responsibilities (softmax of per-component
    log likelihoods), never by numeric differentiation.
    """
    x2, single = _as_batch(x, target.d)
    if isinstance(target, EmbeddedTarget):
        z, x_perp = _embedded_frame(target, schedule, t, x2)
        om = 1.0 - schedule.alphabar_at(t)
        s = score_exact(target.base, schedule, t, z) @ target.embed.T - x_perp / om
        return s[0] if single else s
    st = _state(target, schedule, t)
    if st.softmax_proj is not None:
        # Shared-variance fast path: one matmul for the responsibility
        # logits, one for the posterior mean of the component centers.
        logits = x2 @ st.softmax_proj + st.softmax_bias[None, :]
        logits -= logits.max(axis=1, keepdims=True)
        np.exp(logits, out=logits)
        denom = logits.sum(axis=1)
        if not np.all(np.isfinite(denom)) or np.any(denom <= 0):
            raise FloatingPointError("mixture responsibilities underflowed to zero")
        mbar = (logits @ st.means) / denom[:, None]
        s = (mbar - x2) / float(st.iso_var[0])
    else:
        resp = _responsibilities(st, x2)
        if st.chol is None:
            # Isotropic components: -sum_k r_k (x - m_k)/v_k collapses to
            # matmuls, avoiding the (n, K, d) tensor.
            q = resp / st.iso_var[None, :]
            s = -(x2 * q.sum(axis=1)[:, None] - q @ st.means)
        else:
            y = st.cinv_residual(x2)
            s = -np.einsum("nk,nkd->nd", resp, y)
    return s[0] if single else s


def _responsibilities(st: _MixtureState, x2: np.ndarray) -> np.ndarray:
    logits = st.component_logpdf(x2) + st.log_w[None, :]
    logits -= logits.max(axis=1, keepdims=True)
    resp = np.exp(logits)
    total = resp.sum(axis=1, keepdims=True)
    if not np.all(np.isfinite(total)) or np.any(total <= 0):
        raise FloatingPointError(
            "mixture responsibilities underflowed to zero; this should be "
            "impossible under the log-sum-exp implementation"
        )
    return resp / total


def posterior_stats(target: Target, schedule: Schedule, t: int, x) -> PosteriorStats:
    """Residual mean g, Jacobian J, and log density at a single point.

    J = I + (g g^T - S) / (1 - abar) with S the conditional second moment
    of the residual; I - J equals the conditional covariance of the unit
    noise and is symmetric PSD.
    """
    x2, _ = _as_batch(x, target.d)
    if x2.shape[0] != 1:
        raise ValueError("posterior_stats takes a single d-vector")
    if isinstance(target, EmbeddedTarget):
        z, x_perp = _embedded_frame(target, schedule, t, x2)
        base = posterior_stats(target.base, schedule, t, z[0])
        U = target.embed
        g = U @ base.g + x_perp[0]
        J = U @ base.J @ U.T + (np.eye(target.d) - U @ U.T)
        om = 1.0 - schedule.alphabar_at(t)
        dperp = target.d - target.k
        log_norm = -0.5 * dperp * math.log(2.0 * math.pi * om) \
            - 0.5 * float(x_perp[0] @ x_perp[0]) / om
        return PosteriorStats(g=g, J=J, log_density=base.log_density + log_norm)

    st = _state(target, schedule, t)
    resp = _responsibilities(st, x2)[0]
    y = st.cinv_residual(x2)[0]          # (K, d)
    m_comp = st.one_minus * y            # residual mean per component
    g = resp @ m_comp
    S = np.zeros((target.d, target.d))
    for i in range(len(resp)):
        S += resp[i] * (st.residual_cov(i) + np.outer(m_comp[i], m_comp[i]))
    J = np.eye(target.d) + (np.outer(g, g) - S) / st.one_minus
    logp = float(logsumexp(st.component_logpdf(x2)[0] + st.log_w))
    return PosteriorStats(g=g, J=J, log_density=logp)


def _as_batch(x, d: int) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        if arr.shape[0] != d:
            raise ValueError(f"expected a {d}-vector, got shape {arr.shape}")
        return arr[None, :], True
    if arr.ndim != 2 or arr.shape[1] != d:
        raise ValueError(f"expected shape (n, {d}), got {arr.shape}")
    return arr, False


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def sample_data(target: Target, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n points from X_0."""
    if isinstance(target, EmbeddedTarget):
        base = sample_data(target.base, n, rng)
        return base @ target.embed.T + target.offset
    idx = rng.choice(len(target.weights), size=n, p=target.weights)
    if isinstance(target, PointMassMixtureTarget):
        return target.atoms[idx]
    x = target.means[idx].copy()
    z = rng.standard_normal((n, target.d))
    if target.covs is None:
        x += np.sqrt(target.iso_vars)[idx, None] * z
    else:
        chol = np.linalg.cholesky(target.covs)
        for i in np.unique(idx):
            sel = idx == i
            x[sel] += z[sel] @ chol[i].T
    return x


def sample_forward(target: Target, schedule: Schedule, t: int, n: int, seed: int) -> np.ndarray:
    """n independent draws of X_t = sqrt(abar) X_0 + sqrt(1-abar) W.

    Deterministic given the seed; the stream is keyed by (seed, t).
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    abar = schedule.alphabar_at(t)
    rng = make_rng(seed, STREAM_FORWARD, t)
    x0 = sample_data(target, n, rng)
    w = rng.standard_normal((n, target.d))
    return math.sqrt(abar) * x0 + math.sqrt(1.0 - abar) * w


# ---------------------------------------------------------------------------
# Forward-marginal summary moments (used for grid sizing)
# ---------------------------------------------------------------------------


def forward_moments(target: Target, schedule: Schedule, t: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-coordinate mean and standard deviation of X_t."""
    if isinstance(target, EmbeddedTarget):
        raise ValueError("forward_moments applies to mixture targets; use the base target")
    abar = schedule.alphabar_at(t)
    w = target.weights
    if isinstance(target, PointMassMixtureTarget):
        mu = target.atoms
        second = mu ** 2
    else:
        mu = target.means
        if target.covs is None:
            var_c = np.repeat(target.iso_vars[:, None], target.d, axis=1)
        else:
            var_c = np.diagonal(target.covs, axis1=1, axis2=2)
        second = mu ** 2 + var_c
    mean0 = w @ mu
    var0 = w @ second - mean0 ** 2
    mean_t = math.sqrt(abar) * mean0
    var_t = abar * var0 + (1.0 - abar)
    return mean_t, np.sqrt(var_t)


def forward_cell_masses(target: Target, schedule: Schedule, t: int,
                        edges: list[np.ndarray]) -> np.ndarray:
    """Exact mass of X_t in each cell of an axis-aligned grid (d <= 2).

    Exact for point masses and isotropic mixtures, where every smoothed
    component has diagonal covariance: the mass of a box is a product of
    Gaussian CDF differences per axis.
    """
    if isinstance(target, EmbeddedTarget):
        raise ValueError("grid cell masses apply to mixture targets; project first")
    st = _state(target, schedule, t)
    if st.chol is not None:
        raise ValueError("exact cell masses require per-component isotropic covariance")
    d = target.d
    if d != len(edges) or d not in (1, 2):
        raise ValueError("edges must match the target dimension and d must be 1 or 2")
    w = np.exp(st.log_w)
    sd = np.sqrt(st.iso_var)
    per_axis = []
    for ax in range(d):
        e = edges[ax]
        z = (e[None, :] - st.means[:, ax][:, None]) / sd[:, None]
        cdf = ndtr(z)
        per_axis.append(np.diff(cdf, axis=1))  # (K, cells_ax)
    if d == 1:
        return w @ per_axis[0]
    return np.einsum("k,ki,kj->ij", w, per_axis[0], per_axis[1])


# ---------------------------------------------------------------------------
# Covering numbers and intrinsic dimension
# ---------------------------------------------------------------------------


def covering_number(points, eps: float) -> int:
    """Size of a greedy eps-net over the rows of ``points``.

    Repeatedly picks the first (lowest original index) uncovered point as a
    center and discards everything within distance eps.  The result is an
    estimate: it upper-bounds the minimal covering number and lower-bounds
    the eps-packing number.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    remaining = pts
    count = 0
    eps2 = eps * eps
    while remaining.shape[0]:
        center = remaining[0]
        count += 1
        d2 = np.sum((remaining - center) ** 2, axis=1)
        remaining = remaining[d2 > eps2]
    return count


def intrinsic_dimension_estimate(points, eps_grid) -> float:
    """Least-squares slope of log N_eps against log(1/eps).

    Requires at least three strictly decreasing eps values.
    """
    eps = [float(e) for e in eps_grid]
    if len(eps) < 3:
        raise ValueError("eps_grid must contain at least 3 values")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("eps_grid must be strictly decreasing")
    counts = np.array([covering_number(points, e) for e in eps], dtype=float)
    x = np.log(1.0 / np.asarray(eps))
    y = np.log(counts)
    A = np.vstack([x, np.ones_like(x)]).T
    slope, _ = np.linalg.lstsq(A, y, rcond=None)[0]
    return float(slope)


# ---------------------------------------------------------------------------
# Target definition files
# ---------------------------------------------------------------------------


def load_target(spec: dict) -> Target:
    """Build a target from its definition mapping (parsed JSON/TOML).

    Schema: ``kind`` is one of gaussian_mixture / point_masses / embedded;
    mixtures carry ``components`` ([{weight, mean, cov}]), point masses
    carry ``atoms`` ([{weight, location}]), embedded carries ``base``,
    an orthonormal ``embed`` matrix (validated) and an ``offset``.
    """
    kind = spec.get("kind")
    if kind == "gaussian_mixture":
        comps = [(c["weight"], c["mean"], c["cov"]) for c in spec["components"]]
        return gaussian_mixture(comps)
    if kind == "point_masses":
        atoms = [(a["weight"], a["location"]) for a in spec["atoms"]]
        return point_masses(atoms)
    if kind == "embedded":
        base = load_target(spec["base"])
        embed = np.asarray(spec["embed"], dtype=float)
        offset = np.asarray(spec.get("offset", np.zeros(embed.shape[0])), dtype=float)
        return EmbeddedTarget(base=base, embed=embed, offset=offset)
    raise ValueError(f"unknown target kind {kind!r}")


def target_to_dict(target: Target) -> dict:
    if isinstance(target, PointMassMixtureTarget):
        return {
            "kind": "point_masses",
            "atoms": [
                {"weight": float(w), "location": [float(v) for v in a]}
                for w, a in zip(target.weights, target.atoms)
            ],
        }
    if isinstance(target, GaussianMixtureTarget):
        comps = []
        for i, (w, m) in enumerate(zip(target.weights, target.means)):
            if target.covs is None:
                cov = float(target.iso_vars[i])
            else:
                cov = [[float(v) for v in row] for row in target.covs[i]]
            comps.append({"weight": float(w), "mean": [float(v) for v in m], "cov": cov})
        return {"kind": "gaussian_mixture", "components": comps}
    return {
        "kind": "embedded",
        "base": target_to_dict(target.base),
        "embed": [[float(v) for v in row] for row in target.embed],
        "offset": [float(v) for v in target.offset],
    }


def target_hash(target: Target) -> str:
    blob = json.dumps(target_to_dict(target), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]
