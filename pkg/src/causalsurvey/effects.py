"""One-step influence-function estimators for mean potential outcomes and
their contrasts.

Every estimator returns an InfluenceEstimate carrying the per-record
uncentered influence-function values: the point estimate is their (weighted)
mean, the variance is their empirical variance over n, and confidence
intervals use standard normal quantiles. Estimators are pure functions of
(sample, bundle) and safe to evaluate concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import norm

from .data import AnalyticSample, AcceptingSample
from .errors import ConfigError, DataError
from .nuisance import NuisanceBundle

DEFAULT_ALPHA = 0.05
MIN_SUBGROUP_N = 50


@dataclass(frozen=True)
class InfluenceEstimate:
    label: str
    point: float
    if_values: np.ndarray         # uncentered, one per record
    variance: float
    ci: tuple[float, float]
    n: int
    scale: str                    # risk-difference | risk-ratio | mean
    alpha: float = DEFAULT_ALPHA
    weights: np.ndarray | None = None
    notes: tuple[str, ...] = ()

    @property
    def se(self) -> float:
        return float(np.sqrt(self.variance))

    def to_dict(self) -> dict:
        return {"label": self.label, "point": self.point, "se": self.se,
                "ci": list(self.ci), "n": self.n, "scale": self.scale,
                "alpha": self.alpha, "notes": list(self.notes)}


def _weighted_mean_var(values, weights):
    """Mean of the IF values and the variance of that mean."""
    if weights is None:
        point = float(values.mean())
        var = float(values.var() / len(values))
        return point, var
    wsum = weights.sum()
    point = float(np.sum(weights * values) / wsum)
    var = float(np.sum(weights**2 * (values - point) ** 2) / wsum**2)
    return point, var


def from_if_values(label, if_values, weights=None, alpha=DEFAULT_ALPHA,
                   scale="mean", notes=()) -> InfluenceEstimate:
    """Package per-record IF values into a point estimate with a normal CI."""
    if_values = np.asarray(if_values, dtype=float)
    point, var = _weighted_mean_var(if_values, weights)
    z = norm.ppf(1 - alpha / 2)
    half = z * np.sqrt(var)
    return InfluenceEstimate(label, point, if_values, var,
                             (point - half, point + half), len(if_values),
                             scale, alpha, weights, tuple(notes))


def _uniform_weights(sample):
    w = np.asarray(sample.weight, dtype=float)
    return None if np.allclose(w, 1.0) else w


def phi1_values(sample: AnalyticSample, bundle: NuisanceBundle, arm: int) -> np.ndarray:
    """Uncentered AIPW influence values for the mean potential outcome at ``arm``."""
    bundle.require_n(sample.n)
    y = sample.outcome(bundle.outcome)
    a = np.asarray(sample.a, dtype=float)
    if arm == 1:
        ind, pi, mu = a, bundle.pi1, bundle.mu1
    elif arm == 0:
        ind, pi, mu = 1.0 - a, bundle.pi0, bundle.mu0
    else:
        raise ConfigError(f"arm must be 0 or 1, got {arm}")
    return ind / pi * (y - mu) + mu


def phi1(sample, bundle, arm, alpha=DEFAULT_ALPHA) -> InfluenceEstimate:
    """Mean potential outcome under treatment level ``arm``."""
    values = phi1_values(sample, bundle, arm)
    return from_if_values(f"mean_potential_outcome[a={arm}]", values,
                          _uniform_weights(sample), alpha, scale="mean")


def risk_difference(sample, bundle, alpha=DEFAULT_ALPHA) -> InfluenceEstimate:
    values = phi1_values(sample, bundle, 1) - phi1_values(sample, bundle, 0)
    return from_if_values("risk_difference", values, _uniform_weights(sample),
                          alpha, scale="risk-difference")


def risk_ratio(sample, bundle, alpha=DEFAULT_ALPHA) -> InfluenceEstimate:
    """Ratio of mean potential outcomes, CI by the delta method on the log scale."""
    v1 = phi1_values(sample, bundle, 1)
    v0 = phi1_values(sample, bundle, 0)
    weights = _uniform_weights(sample)
    p1, _ = _weighted_mean_var(v1, weights)
    p0, _ = _weighted_mean_var(v0, weights)
    if p0 <= 0:
        raise DataError(f"risk ratio undefined: denominator estimate {p0} <= 0")
    log_if = v1 / p1 - v0 / p0
    _, var_log = _weighted_mean_var(log_if, weights)
    z = norm.ppf(1 - alpha / 2)
    point = p1 / p0
    half = z * np.sqrt(var_log)
    ci = (point * np.exp(-half), point * np.exp(half))
    return InfluenceEstimate("risk_ratio", point, log_if, var_log, ci,
                             len(v1), "risk-ratio", alpha, weights)


# ---------------------------------------------------------------------------
# subgroups


@dataclass(frozen=True)
class SubgroupEstimate:
    """An effect averaged over one covariate-defined subgroup."""

    predicate: tuple[tuple[str, tuple[str, ...]], ...]   # (covariate, levels)
    estimate: InfluenceEstimate
    suppressed: bool = False

    @property
    def label(self) -> str:
        if not self.predicate:
            return "(all)"
        return " & ".join(f"{cov} in {{{','.join(levels)}}}"
                          for cov, levels in self.predicate)

    def mask(self, sample) -> np.ndarray:
        return predicate_mask(sample, self.predicate)


def predicate_mask(sample, predicate) -> np.ndarray:
    mask = np.ones(sample.n, dtype=bool)
    for cov, levels in predicate:
        col = sample.covariates.get(cov)
        if col is None:
            raise ConfigError(f"unknown covariate {cov!r} in predicate")
        codes = {col.levels.index(level) for level in levels if level in col.levels}
        mask &= np.isin(col.codes, list(codes))
    return mask


def subgroup_effects(estimate: InfluenceEstimate, sample, grouping,
                     min_n=MIN_SUBGROUP_N, alpha=None) -> list[SubgroupEstimate]:
    """Per-subgroup estimates by averaging the parent IF values.

    ``grouping`` is either a covariate name (its levels partition the sample)
    or an explicit list of predicates. Groups below ``min_n`` are returned
    suppressed, with the point withheld.
    """
    if estimate.scale == "risk-ratio":
        raise ConfigError("subgroup averaging applies to linear estimands; "
                          "recompute phi1 contrasts per group for ratios")
    alpha = estimate.alpha if alpha is None else alpha
    if isinstance(grouping, str):
        col = sample.covariates.get(grouping)
        if col is None:
            raise ConfigError(f"unknown covariate {grouping!r}")
        predicates = [((grouping, (level,)),) for level in col.levels]
    else:
        predicates = [tuple(p) for p in grouping]
    out = []
    weights = estimate.weights
    for pred in predicates:
        mask = predicate_mask(sample, pred)
        n_g = int(mask.sum())
        if n_g < min_n:
            empty = InfluenceEstimate("suppressed", float("nan"),
                                      np.empty(0), float("nan"),
                                      (float("nan"), float("nan")), n_g,
                                      estimate.scale, alpha,
                                      notes=(f"subgroup below minimum size {min_n}",))
            out.append(SubgroupEstimate(pred, empty, suppressed=True))
            continue
        sub = from_if_values(estimate.label, estimate.if_values[mask],
                             None if weights is None else weights[mask],
                             alpha, estimate.scale)
        out.append(SubgroupEstimate(pred, sub))
    return out


def difference_test(e1: SubgroupEstimate, e2: SubgroupEstimate,
                    sample=None) -> tuple[float, float]:
    """Two-sided z-test of equal subgroup effects; groups must be disjoint."""
    if sample is not None:
        if np.any(e1.mask(sample) & e2.mask(sample)):
            raise ConfigError("overlapping subgroups: difference test assumes "
                              "independent groups")
    a, b = e1.estimate, e2.estimate
    denom = np.sqrt(a.variance + b.variance)
    if denom == 0:
        return 0.0, 1.0
    z = (a.point - b.point) / denom
    p = 2 * norm.sf(abs(z))
    return float(z), float(p)


# ---------------------------------------------------------------------------
# full-sample (complete-case-weighted) effects


def full_sample_effect(accepting: AcceptingSample, bundle: NuisanceBundle,
                       alpha=DEFAULT_ALPHA) -> InfluenceEstimate:
    """Risk difference over every vaccine-accepting record.

    The bias-correction terms carry the extra 1(R=1)/eta(X) factor; the
    regression terms are averaged over everyone, including incomplete cases.
    """
    if bundle.eta is None:
        raise ConfigError("full-sample effect needs a bundle with a fitted "
                          "complete-case probability")
    bundle.require_n(accepting.n)
    r = accepting.r.astype(float)
    a = np.where(accepting.r_a, accepting.a, 0).astype(float)
    y = np.where(accepting.r_y, accepting.y, 0).astype(float)
    corr1 = r / bundle.eta * a / bundle.pi1 * (y - bundle.mu1)
    corr0 = r / bundle.eta * (1 - a) / bundle.pi0 * (y - bundle.mu0)
    values = corr1 - corr0 + (bundle.mu1 - bundle.mu0)
    notes = []
    if bundle.alarms.get("positivity_eta_alarm"):
        notes.append("complete-case probabilities near the clip boundary; "
                     "weights may be unstable")
    est = from_if_values("risk_difference[accepting]", values,
                         _uniform_weights(accepting), alpha,
                         scale="risk-difference", notes=notes)
    return est


def pr_scaled_bound(estimate: InfluenceEstimate, p_r: float) -> InfluenceEstimate:
    """Scale an effect by the complete-case fraction.

    Valid as a bound when effects on the excluded stratum do not exceed zero;
    that assumption is recorded on the result.
    """
    if not 0 < p_r <= 1:
        raise ConfigError(f"p_r must be in (0, 1], got {p_r}")
    point = estimate.point * p_r
    values = estimate.if_values * p_r
    var = estimate.variance * p_r**2
    ci = (estimate.ci[0] * p_r, estimate.ci[1] * p_r)
    notes = estimate.notes + (
        f"scaled by complete-case fraction {p_r}; bound assumes non-positive "
        "effects on the excluded stratum",)
    return replace(estimate, label=estimate.label + "[p_r-bound]", point=point,
                   if_values=values, variance=var, ci=ci, notes=notes)


@dataclass(frozen=True)
class PandemicBound:
    """Lower bounds on the pandemic's effect implied by the vaccination effect."""

    rd_lower_bound: float
    rd_ci: tuple[float, float]
    ratio_lower_bound: float
    ratio_ci: tuple[float, float]
    caveat: str = ("valid only if mean outcomes under universal vaccination "
                   "during the pandemic are at least as high as in a world "
                   "with neither pandemic nor vaccination")

    def to_dict(self) -> dict:
        return {"rd_lower_bound": self.rd_lower_bound, "rd_ci": list(self.rd_ci),
                "ratio_lower_bound": self.ratio_lower_bound,
                "ratio_ci": list(self.ratio_ci), "caveat": self.caveat}


def pandemic_bound(rd: InfluenceEstimate, rr: InfluenceEstimate) -> PandemicBound:
    """Negated risk difference and inverted risk ratio as pandemic-effect bounds."""
    return PandemicBound(
        rd_lower_bound=-rd.point,
        rd_ci=(-rd.ci[1], -rd.ci[0]),
        ratio_lower_bound=1.0 / rr.point,
        ratio_ci=(1.0 / rr.ci[1], 1.0 / rr.ci[0]),
    )
