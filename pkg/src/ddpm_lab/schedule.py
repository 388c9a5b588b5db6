"""Discretization schedule: geometric-growth learning rates with a cap.

The step sizes are

    beta_1   = T**(-c0)
    beta_t+1 = (c1 log T / T) * min(beta_1 * (1 + c1 log T / T)**t, 1)

for t = 1..T-1, with alpha_t = 1 - beta_t and alphabar_t the running
product of the alphas.  Step indices are 1-based everywhere in the public
interface and in file outputs; the arrays are stored 0-based internally
(``beta[t-1]`` is step t).

Construction is intentionally permissive: the formula is evaluated
verbatim even when the constants put the schedule outside its admissible
regime (small T can drive beta above 1).  All regime checks live in
:func:`schedule_invariants_check`, which reports failures as data instead
of raising.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(eq=False)
class Schedule:
    """Built schedule arrays for a fixed step count T.

    Attributes
    ----------
    T : int
        Number of steps.
    c0, c1 : float
        Schedule constants (NaN for schedules built from an explicit beta
        array).
    beta, alpha, alphabar : ndarray, shape (T,)
        Step sizes, their complements, and the running product of alphas;
        entry ``[t-1]`` belongs to step t.
    """

    T: int
    c0: float
    c1: float
    beta: np.ndarray
    alpha: np.ndarray
    alphabar: np.ndarray

    def beta_at(self, t: int) -> float:
        self._check_step(t)
        return float(self.beta[t - 1])

    def alpha_at(self, t: int) -> float:
        self._check_step(t)
        return float(self.alpha[t - 1])

    def alphabar_at(self, t: int) -> float:
        self._check_step(t)
        return float(self.alphabar[t - 1])

    def _check_step(self, t: int) -> None:
        if not 1 <= t <= self.T:
            raise ValueError(f"step index t={t} out of range [1, {self.T}]")

    def content_key(self) -> str:
        """Stable digest of the beta array, used as a cache key."""
        return hashlib.sha256(self.beta.tobytes()).hexdigest()[:16]


def build_schedule(T: int, c0: float = 2.0, c1: float = 4.0) -> Schedule:
    """Build the geometric-growth schedule for the given constants.

    Raises
    ------
    ValueError
        If T < 2 or either constant is not strictly positive.
    """
    if not isinstance(T, (int, np.integer)) or isinstance(T, bool):
        raise ValueError(f"T must be an integer, got {T!r}")
    if T < 2:
        raise ValueError(f"T must be at least 2, got {T}")
    if not (c0 > 0):
        raise ValueError(f"c0 must be positive, got {c0}")
    if not (c1 > 0):
        raise ValueError(f"c1 must be positive, got {c1}")

    beta = np.empty(T, dtype=np.float64)
    beta[0] = float(T) ** (-float(c0))
    rate = c1 * math.log(T) / T
    for t in range(1, T):
        # Eq. index t here is the exponent in the geometric growth term.
        beta[t] = rate * min(beta[0] * (1.0 + rate) ** t, 1.0)
    return _finish(T, float(c0), float(c1), beta)


def schedule_from_betas(betas) -> Schedule:
    """Escape hatch: build a schedule from an explicit beta array.

    The constants c0/c1 are recorded as NaN; the invariant checker
    substitutes the smallest c1 consistent with the observed step sizes
    for the c1-parameterized bounds.
    """
    beta = np.asarray(betas, dtype=np.float64).copy()
    if beta.ndim != 1 or beta.size < 2:
        raise ValueError("betas must be a 1-d array with at least 2 entries")
    return _finish(int(beta.size), float("nan"), float("nan"), beta)


def _finish(T: int, c0: float, c1: float, beta: np.ndarray) -> Schedule:
    alpha = 1.0 - beta
    # Running product in extended precision so that alphabar_t/alphabar_{t-1}
    # reproduces alpha_t to within a rounding unit per step.
    alphabar = np.cumprod(alpha.astype(np.longdouble)).astype(np.float64)
    return Schedule(T=T, c0=c0, c1=c1, beta=beta, alpha=alpha, alphabar=alphabar)


@dataclass(frozen=True)
class CheckOutcome:
    """One named inequality check: pass/fail plus the worst-case margin.

    ``margin`` is the smallest slack across steps; non-negative means the
    inequality holds everywhere it applies.
    """

    name: str
    passed: bool
    margin: float
    detail: str = ""


@dataclass(frozen=True)
class ValidityReport:
    checks: tuple[CheckOutcome, ...] = field(default_factory=tuple)

    @property
    def all_pass(self) -> bool:
        return all(c.passed for c in self.checks)

    def outcome(self, name: str) -> CheckOutcome:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def lines(self) -> list[str]:
        return [
            f"{'PASS' if c.passed else 'FAIL'} {c.name} (margin={c.margin:.6g})"
            + (f" {c.detail}" if c.detail else "")
            for c in self.checks
        ]


def schedule_invariants_check(s: Schedule) -> ValidityReport:
    """Check the step-size regime inequalities; failures are data.

    Checks reported (first is structural, the rest restate the admissible
    regime of the schedule):

    - ``beta_in_range``: 0 < beta_t < 1 for every step.
    - ``alpha_lower_bound``: alpha_t >= 1 - c1 log T / T.
    - ``ratio_one_minus_alphabar``: (1-alpha_t)/(1-alphabar_t) <= 8 c1 log T / T
      for t >= 2.
    - ``ratio_alpha_minus_alphabar``: (1-alpha_t)/(alpha_t-alphabar_t)
      <= 8 c1 log T / T for t >= 2.
    - ``alphabar_T_decay``: 0 < alphabar_T <= T**(-c1/2).

    For explicit-beta schedules (c1 = NaN) the bounds use the effective
    constant c1_eff = T * max(beta_t) / log T, noted in the detail field.
    """
    T = s.T
    logT = math.log(T)
    c1 = s.c1
    detail = ""
    if math.isnan(c1):
        c1 = T * float(s.beta.max()) / logT
        detail = f"c1_eff={c1:.6g} (explicit-beta schedule)"

    checks: list[CheckOutcome] = []

    lo = float(s.beta.min())
    hi = float(s.beta.max())
    m = min(lo, 1.0 - hi)
    checks.append(CheckOutcome("beta_in_range", 0.0 < lo and hi < 1.0, m, detail))

    bound = 1.0 - c1 * logT / T
    m = float(s.alpha.min()) - bound
    checks.append(CheckOutcome("alpha_lower_bound", m >= 0.0, m))

    cap = 8.0 * c1 * logT / T
    with np.errstate(divide="ignore", invalid="ignore"):
        r1 = s.beta[1:] / (1.0 - s.alphabar[1:])
        r2 = s.beta[1:] / (s.alpha[1:] - s.alphabar[1:])
    m1 = cap - float(np.max(r1))
    m2 = cap - float(np.max(r2))
    ok1 = bool(np.all(np.isfinite(r1))) and m1 >= 0.0
    ok2 = bool(np.all(np.isfinite(r2))) and bool(np.all(r2 > 0)) and m2 >= 0.0
    checks.append(CheckOutcome("ratio_one_minus_alphabar", ok1, m1))
    checks.append(CheckOutcome("ratio_alpha_minus_alphabar", ok2, m2))

    abar_T = float(s.alphabar[-1])
    decay = float(T) ** (-c1 / 2.0)
    m = min(decay - abar_T, abar_T)
    checks.append(CheckOutcome("alphabar_T_decay", 0.0 < abar_T <= decay, m))

    return ValidityReport(checks=tuple(checks))


def write_schedule_csv(s: Schedule, path) -> None:
    """Dump the schedule as CSV: columns t, beta, alpha, alphabar.

    One row per step, 1-based t, shortest round-trip decimal representation
    (full precision).
    """
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "beta", "alpha", "alphabar"])
        for t in range(1, s.T + 1):
            w.writerow([t, repr(s.beta[t - 1].item()), repr(s.alpha[t - 1].item()),
                        repr(s.alphabar[t - 1].item())])
