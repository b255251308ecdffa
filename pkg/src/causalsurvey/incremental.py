"""Incremental propensity interventions: the outcome rate when everyone's
treatment odds are multiplied by delta, traced over a grid.

Pointwise intervals come from the per-delta influence functions; the uniform
band calibrates the supremum over the grid with a Gaussian-multiplier
bootstrap of the centered influence-function curves. delta=0 and the
infinite-odds endpoint reduce exactly to the untreated / treated mean
potential outcomes, and the observed-distribution effect is the contrast
between delta=1 and delta=0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .data import AnalyticSample
from .effects import DEFAULT_ALPHA, InfluenceEstimate, from_if_values, phi1, phi1_values, _uniform_weights
from .errors import ConfigError
from .nuisance import NuisanceBundle
from .rng import root_stream

DELTA_GRID_MIN = 0.05
DELTA_GRID_MAX = 5.0
DELTA_GRID_POINTS = 50
MIN_BAND_REPS = 100
_BOOT_BLOCK = 200


def default_delta_grid() -> np.ndarray:
    return np.geomspace(DELTA_GRID_MIN, DELTA_GRID_MAX, DELTA_GRID_POINTS)


@dataclass(frozen=True)
class IncrementalCurve:
    deltas: np.ndarray
    estimates: np.ndarray
    se: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    band_lo: np.ndarray
    band_hi: np.ndarray
    band_quantile: float
    if_matrix: np.ndarray              # (n, n_deltas), uncentered
    endpoint_infinity: InfluenceEstimate
    alpha: float
    band_reps: int
    seed: int
    weights: np.ndarray | None = None
    warnings: tuple[str, ...] = ()
    metadata: dict = field(default_factory=dict)

    def at_delta(self, delta: float) -> int:
        hits = np.flatnonzero(np.isclose(self.deltas, delta))
        if not len(hits):
            raise ConfigError(f"delta {delta} is not on the computed grid")
        return int(hits[0])

    def csv_rows(self) -> list[dict]:
        return [{"delta": float(d), "estimate": float(e), "lo_pt": float(lo),
                 "hi_pt": float(hi), "lo_unif": float(bl), "hi_unif": float(bh)}
                for d, e, lo, hi, bl, bh in zip(
                    self.deltas, self.estimates, self.ci_lo, self.ci_hi,
                    self.band_lo, self.band_hi)]


def phi2_values(sample: AnalyticSample, bundle: NuisanceBundle,
                delta: float) -> np.ndarray:
    """Uncentered influence values for the delta-shifted outcome rate."""
    bundle.require_n(sample.n)
    a = np.asarray(sample.a, dtype=float)
    pi1, pi0 = bundle.pi1, bundle.pi0
    denom = delta * pi1 + pi0
    f11 = phi1_values(sample, bundle, 1)
    f10 = phi1_values(sample, bundle, 0)
    main = (delta * pi1 * f11 + pi0 * f10) / denom
    correction = delta * (bundle.mu1 - bundle.mu0) * (a - pi1) / denom**2
    return main + correction


def plug_in_curve(bundle: NuisanceBundle, deltas) -> np.ndarray:
    """Grid of plug-in values with the correction terms zeroed."""
    deltas = np.asarray(deltas, dtype=float)
    pi1, pi0 = bundle.pi1[:, None], bundle.pi0[:, None]
    mu1, mu0 = bundle.mu1[:, None], bundle.mu0[:, None]
    vals = (deltas * pi1 * mu1 + pi0 * mu0) / (deltas * pi1 + pi0)
    return vals.mean(axis=0)


def incremental_curve(sample: AnalyticSample, bundle: NuisanceBundle,
                      deltas=None, band_reps: int = 1000, seed: int = 0,
                      alpha: float = DEFAULT_ALPHA) -> IncrementalCurve:
    """Estimate the intervention curve over the delta grid with uniform bands.

    The grid is augmented with delta=0 and delta=1 so the endpoints and the
    observed-distribution contrast are always available.
    """
    if deltas is None:
        deltas = default_delta_grid()
    deltas = np.asarray(deltas, dtype=float)
    if np.any(deltas < 0):
        raise ConfigError("delta grid values must be >= 0")
    deltas = np.unique(np.concatenate([deltas, [0.0, 1.0]]))
    warnings = []
    if band_reps < MIN_BAND_REPS:
        warnings.append(f"band_reps={band_reps} < {MIN_BAND_REPS}; uniform band "
                        "quantile will be unstable")

    n = sample.n
    weights = _uniform_weights(sample)
    if_matrix = np.empty((n, len(deltas)))
    for j, d in enumerate(deltas):
        if_matrix[:, j] = phi2_values(sample, bundle, float(d))

    if weights is None:
        estimates = if_matrix.mean(axis=0)
        centered = if_matrix - estimates
        se = centered.std(axis=0) / np.sqrt(n)
    else:
        wnorm = weights / weights.mean()
        estimates = (wnorm[:, None] * if_matrix).mean(axis=0)
        centered = wnorm[:, None] * (if_matrix - estimates)
        se = np.sqrt((centered**2).mean(axis=0) / n)
    z = norm.ppf(1 - alpha / 2)

    sup_stats = _multiplier_sup(centered, se * np.sqrt(n), band_reps, seed)
    q = float(np.quantile(sup_stats, 1 - alpha)) if len(sup_stats) else z
    q = max(q, z)  # the uniform band must contain the pointwise band

    endpoint = phi1(sample, bundle, 1, alpha)
    return IncrementalCurve(
        deltas=deltas, estimates=estimates, se=se,
        ci_lo=estimates - z * se, ci_hi=estimates + z * se,
        band_lo=estimates - q * se, band_hi=estimates + q * se,
        band_quantile=q, if_matrix=if_matrix, endpoint_infinity=endpoint,
        alpha=alpha, band_reps=band_reps, seed=seed, weights=weights,
        warnings=tuple(warnings),
        metadata={"assumes_missingness_independent_of_treatment": True},
    )


def _multiplier_sup(centered, sigma_root_n, reps, seed):
    """Sup over the grid of |normalized multiplier sums|, one per replicate."""
    n, g = centered.shape
    safe_sigma = np.where(sigma_root_n > 0, sigma_root_n, np.inf)
    rng = root_stream(seed)
    sups = np.empty(reps)
    done = 0
    while done < reps:
        block = min(_BOOT_BLOCK, reps - done)
        xi = rng.standard_normal((block, n))
        sums = xi @ centered / np.sqrt(n)          # (block, g)
        sups[done:done + block] = np.max(np.abs(sums) / safe_sigma, axis=1)
        done += block
    return sups


def observed_effect(curve: IncrementalCurve,
                    alpha: float | None = None) -> InfluenceEstimate:
    """Effect of the observed treatment distribution: delta=1 vs delta=0."""
    alpha = curve.alpha if alpha is None else alpha
    j1 = curve.at_delta(1.0)
    j0 = curve.at_delta(0.0)
    values = curve.if_matrix[:, j1] - curve.if_matrix[:, j0]
    return from_if_values("observed_effect", values, curve.weights, alpha,
                          scale="risk-difference")
