"""Sensitivity bounds on the risk difference under bounded outcome-mean
ratios across treatment arms, indexed by tau in [0, 1).

Two variants:

* the sample variant shrinks each slack term by the opposite-arm propensity,
  bounding the effect on the analytic sample;
* the generalization variant drops that shrinkage (the selection probability
  is unknowable but at most one), bounding the effect on the wider
  population the sample was drawn from, so its interval contains the sample
  variant's at every tau.

Both collapse to the unbounded estimate at tau=0. The explain-away threshold
is the smallest tau whose bound (or bound CI) reaches zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .data import AnalyticSample
from .effects import DEFAULT_ALPHA, InfluenceEstimate, from_if_values, phi1_values, _uniform_weights, _weighted_mean_var
from .errors import ConfigError
from .nuisance import NuisanceBundle

TAU_GRID_MAX = 0.5
TAU_GRID_STEP = 0.005
MIN_EXPLAIN_AWAY_GRID = 50

VARIANT_SAMPLE = "prop1-sample"
VARIANT_GENERALIZATION = "prop2-generalization"


def default_tau_grid(tau_max: float = TAU_GRID_MAX,
                     step: float = TAU_GRID_STEP) -> np.ndarray:
    n_steps = int(round(tau_max / step))
    return np.linspace(0.0, n_steps * step, n_steps + 1)


@dataclass(frozen=True)
class SensitivityResult:
    variant: str
    taus: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    lower_ci_lo: np.ndarray
    lower_ci_hi: np.ndarray
    upper_ci_lo: np.ndarray
    upper_ci_hi: np.ndarray
    base: InfluenceEstimate          # tau = 0 risk difference
    psi1: float                      # mean potential outcome a=1
    psi0: float
    alpha: float

    def csv_rows(self) -> list[dict]:
        return [{"tau": float(t), "lower": float(lo), "upper": float(up),
                 "lo_ci": float(lci), "hi_ci": float(uci)}
                for t, lo, up, lci, uci in zip(
                    self.taus, self.lower, self.upper,
                    self.lower_ci_lo, self.upper_ci_hi)]


def _bound_series(taus, if_rd, slack1, slack0, weights, alpha):
    """Per-tau bound points and CIs from the per-record IF combinations."""
    z = norm.ppf(1 - alpha / 2)
    lower = np.empty(len(taus))
    upper = np.empty(len(taus))
    lci_lo = np.empty(len(taus))
    lci_hi = np.empty(len(taus))
    uci_lo = np.empty(len(taus))
    uci_hi = np.empty(len(taus))
    for j, tau in enumerate(taus):
        ratio = tau / (1.0 - tau)
        up_if = if_rd + ratio * slack1 + tau * slack0
        lo_if = if_rd - tau * slack1 - ratio * slack0
        up_pt, up_var = _weighted_mean_var(up_if, weights)
        lo_pt, lo_var = _weighted_mean_var(lo_if, weights)
        upper[j] = up_pt
        lower[j] = lo_pt
        uci_lo[j], uci_hi[j] = up_pt - z * np.sqrt(up_var), up_pt + z * np.sqrt(up_var)
        lci_lo[j], lci_hi[j] = lo_pt - z * np.sqrt(lo_var), lo_pt + z * np.sqrt(lo_var)
    return lower, upper, lci_lo, lci_hi, uci_lo, uci_hi


def _validate_taus(taus):
    taus = np.asarray(taus, dtype=float)
    if np.any(taus < 0) or np.any(taus >= 1):
        raise ConfigError("tau values must lie in [0, 1)")
    return taus


def prop1_bounds(sample: AnalyticSample, bundle: NuisanceBundle, taus=None,
                 alpha: float = DEFAULT_ALPHA) -> SensitivityResult:
    """Sample-effect bounds; slack terms carry the opposite-arm propensity."""
    taus = _validate_taus(default_tau_grid() if taus is None else taus)
    bundle.require_n(sample.n)
    y = sample.outcome(bundle.outcome)
    a = np.asarray(sample.a, dtype=float)
    weights = _uniform_weights(sample)
    f11 = phi1_values(sample, bundle, 1)
    f10 = phi1_values(sample, bundle, 0)
    if_rd = f11 - f10
    # one-step estimators of E[mu_1(X) pi_0(X)] and E[mu_0(X) pi_1(X)]
    slack1 = (bundle.pi0 * a / bundle.pi1 * (y - bundle.mu1)
              + bundle.mu1 * ((1 - a) - bundle.pi0)
              + bundle.mu1 * bundle.pi0)
    slack0 = (bundle.pi1 * (1 - a) / bundle.pi0 * (y - bundle.mu0)
              + bundle.mu0 * (a - bundle.pi1)
              + bundle.mu0 * bundle.pi1)
    series = _bound_series(taus, if_rd, slack1, slack0, weights, alpha)
    base = from_if_values("risk_difference", if_rd, weights, alpha,
                          scale="risk-difference")
    psi1, _ = _weighted_mean_var(f11, weights)
    psi0, _ = _weighted_mean_var(f10, weights)
    return SensitivityResult(VARIANT_SAMPLE, taus, *series, base, psi1, psi0, alpha)


def prop2_bounds(sample: AnalyticSample, bundle: NuisanceBundle, taus=None,
                 alpha: float = DEFAULT_ALPHA) -> SensitivityResult:
    """Generalization bounds; slack terms are the arm-conditional outcome means."""
    taus = _validate_taus(default_tau_grid() if taus is None else taus)
    bundle.require_n(sample.n)
    weights = _uniform_weights(sample)
    f11 = phi1_values(sample, bundle, 1)
    f10 = phi1_values(sample, bundle, 0)
    if_rd = f11 - f10
    series = _bound_series(taus, if_rd, f11, f10, weights, alpha)
    base = from_if_values("risk_difference", if_rd, weights, alpha,
                          scale="risk-difference")
    psi1, _ = _weighted_mean_var(f11, weights)
    psi0, _ = _weighted_mean_var(f10, weights)
    return SensitivityResult(VARIANT_GENERALIZATION, taus, *series, base,
                             psi1, psi0, alpha)


@dataclass(frozen=True)
class TauStarReport:
    variant: str
    tau_star_ci: float | None        # CI of the bound reaches zero
    tau_star_point: float | None     # bound point itself reaches zero
    tau_star_closed_form: float | None
    direction: str                   # which bound was tracked
    notes: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"variant": self.variant, "tau_star_ci": self.tau_star_ci,
                "tau_star_point": self.tau_star_point,
                "tau_star_closed_form": self.tau_star_closed_form,
                "direction": self.direction, "notes": list(self.notes)}


def closed_form_tau_star(psi1: float, psi0: float) -> float | None:
    """tau at which the relevant bound point crosses zero, ignoring variance.

    For a negative effect (psi1 < psi0) the upper bound crosses first and the
    threshold is 1 - sqrt(psi1/psi0); for a positive effect the mirrored form
    applies. Requires both mean potential outcomes positive.
    """
    if psi1 <= 0 or psi0 <= 0:
        return None
    if psi1 == psi0:
        return 0.0
    lo, hi = (psi1, psi0) if psi1 < psi0 else (psi0, psi1)
    return float(1.0 - np.sqrt(lo / hi))


def _first_crossing(taus, series, rising: bool) -> float | None:
    """Smallest tau where the series reaches zero, linearly interpolated."""
    reached = series >= 0 if rising else series <= 0
    if not reached.any():
        return None
    j = int(np.argmax(reached))
    if j == 0:
        return float(taus[0])
    t0, t1 = taus[j - 1], taus[j]
    v0, v1 = series[j - 1], series[j]
    if v1 == v0:
        return float(t1)
    return float(t0 + (0.0 - v0) * (t1 - t0) / (v1 - v0))


def explain_away(result: SensitivityResult) -> TauStarReport:
    """Smallest tau that renders the effect statistically indistinguishable
    from zero (CI criterion), plus the point-crossing and closed-form values."""
    if len(result.taus) < MIN_EXPLAIN_AWAY_GRID:
        raise ConfigError(f"explain-away needs a tau grid with >= "
                          f"{MIN_EXPLAIN_AWAY_GRID} points, got {len(result.taus)}")
    notes = []
    if result.base.point >= 0:
        direction = "lower"
        tau_ci = _first_crossing(result.taus, result.lower_ci_lo, rising=False)
        tau_pt = _first_crossing(result.taus, result.lower, rising=False)
    else:
        direction = "upper"
        tau_ci = _first_crossing(result.taus, result.upper_ci_hi, rising=True)
        tau_pt = _first_crossing(result.taus, result.upper, rising=True)
    if tau_ci is None:
        notes.append(f"bound CI never reaches 0 on the grid; tau* > {result.taus[-1]}")
    if tau_pt is None:
        notes.append(f"bound point never reaches 0 on the grid; tau* > {result.taus[-1]}")
    closed = (closed_form_tau_star(result.psi1, result.psi0)
              if result.variant == VARIANT_GENERALIZATION else None)
    return TauStarReport(result.variant, tau_ci, tau_pt, closed, direction,
                         tuple(notes))


def comparator_tau(unadjusted: SensitivityResult,
                   adjusted_point: float) -> float | None:
    """Smallest tau at which the unadjusted bounds cover the adjusted estimate.

    Used with an intercept-only nuisance fit to express how much confounding
    the covariate set accounts for.
    """
    inside = (unadjusted.lower <= adjusted_point) & (adjusted_point <= unadjusted.upper)
    if not inside.any():
        return None
    j = int(np.argmax(inside))
    if j == 0:
        return float(unadjusted.taus[0])
    # interpolate on whichever bound was violated just before coverage
    if unadjusted.lower[j - 1] > adjusted_point:
        series = unadjusted.lower - adjusted_point
        return _first_crossing(unadjusted.taus, series, rising=False)
    series = unadjusted.upper - adjusted_point
    return _first_crossing(unadjusted.taus, series, rising=True)
