"""Interventional mediation decomposition with two mediators.

The total effect splits into a direct effect, an indirect effect through
each mediator, and a covariant effect capturing mediator dependence. Every
component is a difference of functionals of the form

    E[ sum_m mu_a(m1, m2, X) * w(m1, m2 | X) ]

where the mediator weight w is either a joint law at one treatment level or
a product of marginals at (possibly different) levels. One-step estimators
for both functional families are implemented below; each component combines
two of them, and the covariant effect is the record-wise residual, so the
decomposition is additive by construction, exactly.

Reference 0 shifts mediator marginals against the untreated baseline with
the outcome model evaluated under treatment; reference 1 is the mirrored
decomposition. Both produce identical totals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .data import AnalyticSample, N_MEDIATOR_LEVELS
from .effects import DEFAULT_ALPHA, InfluenceEstimate, from_if_values, _uniform_weights, _weighted_mean_var
from .errors import ConfigError
from .nuisance import NuisanceBundle

RATIO_STABILITY_MULTIPLE = 10.0


@dataclass(frozen=True)
class ProportionMediated:
    component: str
    ratio: float
    ci: tuple[float, float]
    suppressed: bool = False
    unstable: bool = False

    def to_dict(self) -> dict:
        return {"component": self.component, "ratio": self.ratio,
                "ci": list(self.ci), "suppressed": self.suppressed,
                "unstable": self.unstable}


@dataclass(frozen=True)
class MediationDecomposition:
    total: InfluenceEstimate
    ide: InfluenceEstimate
    iie_m1: InfluenceEstimate
    iie_m2: InfluenceEstimate
    cov: InfluenceEstimate
    reference: int
    warnings: tuple[str, ...] = ()

    def components(self) -> dict[str, InfluenceEstimate]:
        return {"ide": self.ide, "iie_m1": self.iie_m1,
                "iie_m2": self.iie_m2, "cov": self.cov}

    def to_dict(self) -> dict:
        out = {"reference": self.reference, "total": self.total.to_dict(),
               "warnings": list(self.warnings)}
        out.update({k: v.to_dict() for k, v in self.components().items()})
        return out


class _MediationArrays:
    """Shared gathers over the (n, 2, 4, 4) nuisance tables."""

    def __init__(self, sample: AnalyticSample, bundle: NuisanceBundle):
        bundle.require_n(sample.n)
        bundle.require_mediators()
        n = sample.n
        self.n = n
        self.y = sample.outcome(bundle.outcome)
        self.a = np.asarray(sample.a, dtype=float)
        self.pi = np.stack([bundle.pi0, bundle.pi1], axis=1)        # (n, 2)
        self.mu = bundle.mu_m.reshape(n, 2, N_MEDIATOR_LEVELS, N_MEDIATOR_LEVELS)
        self.pj = bundle.pmed.reshape(n, 2, N_MEDIATOR_LEVELS, N_MEDIATOR_LEVELS)
        self.q1 = self.pj.sum(axis=3)                               # (n, 2, 4)
        self.q2 = self.pj.sum(axis=2)                               # (n, 2, 4)
        self.idx = np.arange(n)
        self.m1 = np.asarray(sample.m1, dtype=int)
        self.m2 = np.asarray(sample.m2, dtype=int)
        self.clip_eps = bundle.clip_eps
        self.denominator_floor_hits = 0

    def ind(self, arm: int) -> np.ndarray:
        return self.a if arm == 1 else 1.0 - self.a

    def joint_at_observed(self, arm: int) -> np.ndarray:
        vals = self.pj[self.idx, arm, self.m1, self.m2]
        if self.clip_eps > 0:
            self.denominator_floor_hits += int(np.sum(vals <= self.clip_eps * 1.0001))
        return vals

    def mu_at_observed(self, arm: int) -> np.ndarray:
        return self.mu[self.idx, arm, self.m1, self.m2]

    def lambda_joint(self, arm: int, med: int) -> np.ndarray:
        """IF of E[sum_m mu_arm(m, X) p_med(m | X)] with a joint mediator draw."""
        mu_bar = np.sum(self.mu[:, arm] * self.pj[:, med], axis=(1, 2))
        resid = (self.ind(arm) / self.pi[:, arm]
                 * self.pj[self.idx, med, self.m1, self.m2] / self.joint_at_observed(arm)
                 * (self.y - self.mu_at_observed(arm)))
        med_corr = (self.ind(med) / self.pi[:, med]
                    * (self.mu_at_observed(arm) - mu_bar))
        return resid + med_corr + mu_bar

    def lambda_product(self, arm: int, med1: int, med2: int) -> np.ndarray:
        """IF of the same functional with independent marginal mediator draws."""
        # mu_arm integrated against one marginal at a time, then both
        mu_int_m2 = np.einsum("nij,nj->ni", self.mu[:, arm], self.q2[:, med2])  # (n, 4) in m1
        mu_int_m1 = np.einsum("nij,ni->nj", self.mu[:, arm], self.q1[:, med1])  # (n, 4) in m2
        mu_bar = np.sum(mu_int_m2 * self.q1[:, med1], axis=1)
        resid = (self.ind(arm) / self.pi[:, arm]
                 * self.q1[self.idx, med1, self.m1] * self.q2[self.idx, med2, self.m2]
                 / self.joint_at_observed(arm)
                 * (self.y - self.mu_at_observed(arm)))
        corr1 = (self.ind(med1) / self.pi[:, med1]
                 * (mu_int_m2[self.idx, self.m1] - mu_bar))
        corr2 = (self.ind(med2) / self.pi[:, med2]
                 * (mu_int_m1[self.idx, self.m2] - mu_bar))
        return resid + corr1 + corr2 + mu_bar


def interventional_decomposition(sample: AnalyticSample, bundle: NuisanceBundle,
                                 reference: int = 0,
                                 alpha: float = DEFAULT_ALPHA) -> MediationDecomposition:
    """Estimate the direct / indirect-M1 / indirect-M2 / covariant split.

    The covariant component is defined as the record-wise residual, so
    ide + iie_m1 + iie_m2 + cov equals the total exactly, record by record.
    """
    if reference not in (0, 1):
        raise ConfigError(f"reference must be 0 or 1, got {reference}")
    arrs = _MediationArrays(sample, bundle)
    if_total = arrs.lambda_joint(1, 1) - arrs.lambda_joint(0, 0)
    if reference == 0:
        if_ide = arrs.lambda_joint(1, 0) - arrs.lambda_joint(0, 0)
        if_m1 = arrs.lambda_product(1, 1, 0) - arrs.lambda_product(1, 0, 0)
        if_m2 = arrs.lambda_product(1, 1, 1) - arrs.lambda_product(1, 1, 0)
    else:
        if_ide = arrs.lambda_joint(1, 1) - arrs.lambda_joint(0, 1)
        if_m1 = arrs.lambda_product(0, 1, 1) - arrs.lambda_product(0, 0, 1)
        if_m2 = arrs.lambda_product(0, 0, 1) - arrs.lambda_product(0, 0, 0)
    if_cov = if_total - if_ide - if_m1 - if_m2

    weights = _uniform_weights(sample)
    tag = f"ref={reference}"
    warnings = []
    if arrs.denominator_floor_hits:
        warnings.append(
            f"{arrs.denominator_floor_hits} joint mediator probabilities sat at "
            f"the clip floor in estimator denominators; positivity is suspect")
    build = lambda label, vals: from_if_values(label, vals, weights, alpha,
                                               scale="risk-difference")
    return MediationDecomposition(
        total=build(f"total[{tag}]", if_total),
        ide=build(f"ide[{tag}]", if_ide),
        iie_m1=build(f"iie_m1[{tag}]", if_m1),
        iie_m2=build(f"iie_m2[{tag}]", if_m2),
        cov=build(f"cov[{tag}]", if_cov),
        reference=reference,
        warnings=tuple(warnings),
    )


def proportion_mediated(dec: MediationDecomposition,
                        alpha: float = DEFAULT_ALPHA) -> list[ProportionMediated]:
    """Each component as a share of the total, with delta-method CIs.

    Ratios are suppressed outright when the total is numerically zero and
    flagged unstable when |total| < 10 standard errors.
    """
    total = dec.total
    out = []
    z = norm.ppf(1 - alpha / 2)
    suppressed = abs(total.point) < 1e-12
    unstable = not suppressed and abs(total.point) < RATIO_STABILITY_MULTIPLE * total.se
    for name, comp in dec.components().items():
        if suppressed:
            out.append(ProportionMediated(name, float("nan"),
                                          (float("nan"), float("nan")),
                                          suppressed=True))
            continue
        ratio = comp.point / total.point
        resid = comp.if_values - ratio * total.if_values
        _, var = _weighted_mean_var(resid, total.weights)
        half = z * np.sqrt(var) / abs(total.point)
        out.append(ProportionMediated(name, float(ratio),
                                      (float(ratio - half), float(ratio + half)),
                                      unstable=unstable))
    return out


def mediator_equality_test(dec: MediationDecomposition) -> tuple[float, float]:
    """z-test of equal indirect effects; the IF difference carries the correlation."""
    diff = dec.iie_m1.if_values - dec.iie_m2.if_values
    point, var = _weighted_mean_var(diff, dec.total.weights)
    if var == 0:
        return 0.0, 1.0
    z = point / np.sqrt(var)
    return float(z), float(2 * norm.sf(abs(z)))
