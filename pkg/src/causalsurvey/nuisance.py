"""Nuisance-function estimation: propensity, outcome regressions, joint
mediator probabilities, and the complete-case probability, with optional
cross-fitting and probability clipping.

The GLM path fits every function once on the full sample (folds=1); the
boosted-tree paths require K >= 2 folds, and every record is predicted by a
model trained on the other folds. Outcome models are fit separately per
treatment arm, mediator-cell outcome models separately per (arm, m1, m2)
cell, and mediator probabilities separately within each arm.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import glm, learners
from .data import AcceptingSample, AnalyticSample, N_JOINT_CELLS, build_design
from .errors import ConfigError, DataError
from .rng import root_stream

DEFAULT_CLIP = 0.01
POSITIVITY_ALARM_FRACTION = 0.01

# re-exported building blocks (the full learner menu)
fit_logistic = glm.fit_logistic
fit_multinomial = glm.fit_multinomial
fit_gbt = learners.fit_gbt
stack = learners.stack

LEARNER_KINDS = ("glm", "gbt", "gbt-stack")


@dataclass(frozen=True)
class NuisanceSpec:
    learner: str = "glm"
    folds: int | None = None          # None: 1 for glm, 5 for tree learners
    clip: float = DEFAULT_CLIP
    covariates: tuple[str, ...] | None = None
    pi_covariates: tuple[str, ...] | None = None   # override for the propensity
    mu_covariates: tuple[str, ...] | None = None   # override for outcome models
    outcome: str = "y"
    mediators: bool = False
    seed: int = 0
    gbt: learners.GbtParams = field(default_factory=learners.GbtParams)
    gbt_grid_size: int = 20

    def resolved_folds(self) -> int:
        if self.folds is not None:
            return self.folds
        return 1 if self.learner == "glm" else 5

    def validate(self) -> None:
        if self.learner not in LEARNER_KINDS:
            raise ConfigError(f"unknown learner {self.learner!r}")
        k = self.resolved_folds()
        if k < 1:
            raise ConfigError("folds must be >= 1")
        if k == 1 and self.learner != "glm":
            raise ConfigError("folds=1 (full-sample fit) is only allowed for the glm path")
        if not 0 <= self.clip < 0.5:
            raise ConfigError("clip epsilon must be in [0, 0.5)")


@dataclass
class NuisanceBundle:
    """Per-record nuisance predictions, aligned with the sample they were fit on."""

    outcome: str
    pi1: np.ndarray
    mu0: np.ndarray
    mu1: np.ndarray
    folds: np.ndarray
    clip_eps: float
    mu_m: np.ndarray | None = None     # (n, 2, 16) outcome given arm and mediator cell
    pmed: np.ndarray | None = None     # (n, 2, 16) joint mediator probabilities
    eta: np.ndarray | None = None      # complete-case probability, full-sample mode
    mode: str = "complete-case"
    split: str = "main"
    alarms: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.pi1)

    @property
    def pi0(self) -> np.ndarray:
        return 1.0 - self.pi1

    def require_n(self, n: int) -> None:
        if self.n != n:
            raise DataError(f"bundle holds {self.n} records, sample has {n}")

    def require_mediators(self) -> None:
        if self.mu_m is None or self.pmed is None:
            raise ConfigError("bundle was fit without mediator models")

    def to_dict(self) -> dict:
        out = {
            "format": "nuisance-bundle/1",
            "outcome": self.outcome,
            "mode": self.mode,
            "split": self.split,
            "clip_eps": self.clip_eps,
            "pi1": self.pi1.tolist(),
            "mu0": self.mu0.tolist(),
            "mu1": self.mu1.tolist(),
            "folds": self.folds.tolist(),
            "alarms": self.alarms,
            "warnings": list(self.warnings),
            "metadata": self.metadata,
        }
        for name in ("mu_m", "pmed", "eta"):
            arr = getattr(self, name)
            out[name] = None if arr is None else arr.tolist()
        return out

    @classmethod
    def from_dict(cls, payload: dict) -> "NuisanceBundle":
        if payload.get("format") != "nuisance-bundle/1":
            raise DataError(f"unsupported bundle format {payload.get('format')!r}")
        def arr(key, dtype=float):
            val = payload[key]
            return None if val is None else np.asarray(val, dtype=dtype)
        return cls(
            outcome=payload["outcome"],
            pi1=arr("pi1"),
            mu0=arr("mu0"),
            mu1=arr("mu1"),
            folds=arr("folds", int),
            clip_eps=payload["clip_eps"],
            mu_m=arr("mu_m"),
            pmed=arr("pmed"),
            eta=arr("eta"),
            mode=payload["mode"],
            split=payload["split"],
            alarms=dict(payload["alarms"]),
            warnings=list(payload["warnings"]),
            metadata=dict(payload["metadata"]),
        )


def make_folds(n: int, k: int, seed: int) -> np.ndarray:
    if k <= 1:
        return np.zeros(n, dtype=int)
    order = root_stream(seed).permutation(n)
    folds = np.empty(n, dtype=int)
    folds[order] = np.arange(n) % k
    return folds


class _BinaryLearner:
    """Uniform fit/predict facade over the learner menu for binary targets."""

    def __init__(self, spec: NuisanceSpec, seed: int):
        self.spec = spec
        self.seed = seed

    def fit(self, design, target, weights):
        spec = self.spec
        if spec.learner == "glm":
            return glm.fit_logistic(design, target, weights)
        if spec.learner == "gbt":
            return learners.fit_gbt(design, target, "bernoulli",
                                    replace(spec.gbt, seed=self.seed), weights)
        return self._fit_stacked(design, target, weights)

    def _fit_stacked(self, design, target, weights):
        rng = root_stream(self.seed)
        n = len(target)
        holdout = rng.random(n) < 0.2
        if holdout.all() or not holdout.any():
            holdout = np.zeros(n, dtype=bool)
            holdout[: max(1, n // 5)] = True
        grid = learners.draw_gbt_grid(self.spec.gbt_grid_size, self.seed)
        probes = [learners.fit_gbt(design[~holdout], target[~holdout], "bernoulli",
                                   g, weights[~holdout]) for g in grid]
        val = [m.predict_proba(design[holdout]) for m in probes]
        w, _ = learners.stack_weights(val, target[holdout], weights[holdout])
        members = [learners.fit_gbt(design, target, "bernoulli", g, weights)
                   for g in grid]
        return learners.StackedModel(members, w, 0.0)

    @staticmethod
    def predict(model, design):
        if hasattr(model, "predict_proba"):
            proba = model.predict_proba(design)
            return proba[:, 1] if proba.ndim == 2 else proba
        return model.predict(design)


def _clip(values, eps, alarms, key):
    if eps <= 0:
        return values, 0
    hits = int(np.sum((values < eps) | (values > 1 - eps)))
    if hits:
        alarms[key] = alarms.get(key, 0) + hits
    return np.clip(values, eps, 1 - eps), hits


def crossfit(sample: AnalyticSample, spec: NuisanceSpec) -> NuisanceBundle:
    """Fit all requested nuisances on the analytic sample."""
    spec.validate()
    k = spec.resolved_folds()
    n = sample.n
    y = sample.outcome(spec.outcome)
    a = np.asarray(sample.a, dtype=int)
    w = np.asarray(sample.weight, dtype=float)
    folds = make_folds(n, k, spec.seed)

    pi_design, _ = build_design(sample, _names(spec.pi_covariates, spec.covariates))
    mu_design, _ = build_design(sample, _names(spec.mu_covariates, spec.covariates))

    alarms: dict = {}
    warn: list[str] = []
    pi1 = np.empty(n)
    mu0 = np.empty(n)
    mu1 = np.empty(n)
    mu_m = np.empty((n, 2, N_JOINT_CELLS)) if spec.mediators else None
    pmed = np.empty((n, 2, N_JOINT_CELLS)) if spec.mediators else None
    m_code = sample.m

    for fold in range(k):
        test = folds == fold
        train = ~test if k > 1 else np.ones(n, dtype=bool)
        seed_base = spec.seed * 1000 + fold
        fitter = _BinaryLearner(spec, seed_base)

        model_pi = fitter.fit(pi_design[train], a[train], w[train])
        _collect_warnings(model_pi, warn, f"pi fold {fold}")
        pi1[test] = fitter.predict(model_pi, pi_design[test])

        for arm, out in ((0, mu0), (1, mu1)):
            rows = train & (a == arm)
            if not rows.any():
                raise DataError(f"no records with A={arm} in training folds for fold {fold}")
            model = fitter.fit(mu_design[rows], y[rows], w[rows])
            _collect_warnings(model, warn, f"mu a={arm} fold {fold}")
            out[test] = fitter.predict(model, mu_design[test])

        if spec.mediators:
            _fit_mediator_cells(sample, spec, fitter, mu_design, train, test,
                                a, w, m_code, mu_m, warn, fold)
            for arm in (0, 1):
                rows = train & (a == arm)
                fit = glm.fit_multinomial(mu_design[rows], m_code[rows],
                                          N_JOINT_CELLS, w[rows],
                                          structural_zeros=True)
                _collect_warnings(fit, warn, f"pmed a={arm} fold {fold}")
                pmed[test, arm, :] = fit.predict_proba(mu_design[test])

    pi1, hits = _clip(pi1, spec.clip, alarms, "pi")
    if hits > POSITIVITY_ALARM_FRACTION * n:
        warn.append(f"positivity alarm: {hits}/{n} propensity predictions at the "
                    f"clip boundary {spec.clip}")
        alarms["positivity_pi_alarm"] = True
    mu0, _ = _clip(mu0, spec.clip, alarms, "mu0")
    mu1, _ = _clip(mu1, spec.clip, alarms, "mu1")
    if spec.mediators:
        mu_m = np.clip(mu_m, spec.clip, 1 - spec.clip)
        raw_sums = pmed.sum(axis=2)
        alarms["pmed_raw_sum_max_dev"] = float(np.max(np.abs(raw_sums - 1.0)))
        pmed, _ = _clip(pmed, spec.clip, alarms, "pmed")
        pmed = pmed / pmed.sum(axis=2, keepdims=True)

    meta = {"learner": spec.learner, "folds": k, "seed": spec.seed,
            "outcome": spec.outcome,
            "clip_note": "joint mediator probabilities are clipped then renormalized"}
    return NuisanceBundle(spec.outcome, pi1, mu0, mu1, folds, spec.clip,
                          mu_m=mu_m, pmed=pmed, split=sample.split,
                          alarms=alarms, warnings=warn, metadata=meta)


def crossfit_full(accepting: AcceptingSample, spec: NuisanceSpec) -> NuisanceBundle:
    """Full-sample variant over all vaccine-accepting records.

    Propensity and outcome models are trained on the complete cases but
    predicted for everyone; the complete-case probability model is trained on
    the whole accepting sample. Only the full-sample GLM path (folds=1) is
    supported here.
    """
    spec.validate()
    if spec.resolved_folds() != 1:
        raise ConfigError("full-sample bundles support the folds=1 GLM path only")
    if spec.mediators:
        raise ConfigError("mediator models are not fit in full-sample mode")
    cm = accepting.r
    if not cm.any():
        raise DataError("no complete cases in accepting sample")
    sample = accepting.complete()

    n = accepting.n
    w = np.asarray(accepting.weight, dtype=float)
    # a design shell over every accepting record; only covariates are read
    shell = AnalyticSample(
        np.where(accepting.r_y, accepting.y, 0).astype(float),
        np.where(accepting.r_a, accepting.a, 0).astype(int),
        np.clip(accepting.m1, 0, None), np.clip(accepting.m2, 0, None),
        accepting.covariates, w,
        accepting.m1_threshold, accepting.m2_threshold)
    pi_design, _ = build_design(shell, _names(spec.pi_covariates, spec.covariates))
    mu_design, _ = build_design(shell, _names(spec.mu_covariates, spec.covariates))
    y = sample.outcome(spec.outcome)
    a = np.asarray(sample.a, dtype=int)
    wc = np.asarray(sample.weight, dtype=float)
    fitter = _BinaryLearner(spec, spec.seed)
    alarms: dict = {}
    warn: list[str] = []

    pi_model = fitter.fit(pi_design[cm], a, wc)
    _collect_warnings(pi_model, warn, "pi full-sample")
    pi1 = fitter.predict(pi_model, pi_design)
    mus = []
    for arm in (0, 1):
        rows = a == arm
        if not rows.any():
            raise DataError(f"no complete records with A={arm}")
        model = fitter.fit(mu_design[cm][rows], y[rows], wc[rows])
        _collect_warnings(model, warn, f"mu a={arm} full-sample")
        mus.append(fitter.predict(model, mu_design))
    eta_model = fitter.fit(pi_design, cm.astype(float), w)
    _collect_warnings(eta_model, warn, "eta full-sample")
    eta = fitter.predict(eta_model, pi_design)

    pi1, _ = _clip(pi1, spec.clip, alarms, "pi")
    mu0, _ = _clip(mus[0], spec.clip, alarms, "mu0")
    mu1, _ = _clip(mus[1], spec.clip, alarms, "mu1")
    eta, hits = _clip(eta, spec.clip, alarms, "eta")
    if hits > POSITIVITY_ALARM_FRACTION * n:
        warn.append(f"positivity warning: {hits}/{n} complete-case probabilities at "
                    f"the clip boundary {spec.clip}")
        alarms["positivity_eta_alarm"] = True

    meta = {"learner": spec.learner, "folds": 1, "seed": spec.seed,
            "outcome": spec.outcome, "mode": "full-sample"}
    return NuisanceBundle(spec.outcome, pi1, mu0, mu1, np.zeros(n, dtype=int),
                          spec.clip, eta=eta, mode="full-sample",
                          alarms=alarms, warnings=warn, metadata=meta)


def _names(override, default):
    if override is not None:
        return list(override)
    return None if default is None else list(default)


def _collect_warnings(model, warn, context):
    for msg in getattr(model, "warnings", []):
        warn.append(f"{context}: {msg}")


def _fit_mediator_cells(sample, spec, fitter, design, train, test, a, w,
                        m_code, mu_m, warn, fold):
    y = sample.outcome(spec.outcome)
    for arm in (0, 1):
        arm_rows = train & (a == arm)
        arm_mean = float(np.average(y[arm_rows], weights=w[arm_rows]))
        for cell in range(N_JOINT_CELLS):
            rows = arm_rows & (m_code == cell)
            if not rows.any():
                mu_m[test, arm, cell] = arm_mean
                warn.append(f"empty outcome cell a={arm} m={cell} fold {fold}; "
                            "constant fallback")
                continue
            if len(np.unique(y[rows])) == 1:
                mu_m[test, arm, cell] = float(y[rows][0])
                continue
            model = fitter.fit(design[rows], y[rows], w[rows])
            _collect_warnings(model, warn, f"mu_m a={arm} m={cell} fold {fold}")
            mu_m[test, arm, cell] = fitter.predict(model, design[test])


# ---------------------------------------------------------------------------
# diagnostics

WEIGHT_QUANTILES = (0.0, 0.01, 0.25, 0.5, 0.75, 0.99, 1.0)
QUANTILE_LABELS = ("min", "1%", "25%", "50%", "75%", "99%", "max")


@dataclass
class CalibrationReport:
    curves: dict[str, list[tuple[float, float, int]]]
    weight_quantiles: dict[str, dict[str, float]]

    def to_dict(self) -> dict:
        return {
            "curves": {k: [list(b) for b in v] for k, v in self.curves.items()},
            "weight_quantiles": self.weight_quantiles,
        }

    def csv_rows(self) -> list[dict]:
        rows = []
        for model, bins in self.curves.items():
            for i, (pred, obs, count) in enumerate(bins):
                rows.append({"model": model, "bin": i, "mean_predicted": pred,
                             "mean_observed": obs, "count": count})
        return rows


def calibration_curve(predicted, observed, bins=10):
    """Decile-binned calibration pairs; bin counts always sum to n."""
    predicted = np.asarray(predicted, dtype=float)
    observed = np.asarray(observed, dtype=float)
    edges = np.unique(np.quantile(predicted, np.linspace(0, 1, bins + 1)))
    if len(edges) < 2:
        return [(float(predicted.mean()), float(observed.mean()), len(predicted))]
    idx = np.clip(np.searchsorted(edges, predicted, side="right") - 1, 0,
                  len(edges) - 2)
    out = []
    for b in range(len(edges) - 1):
        mask = idx == b
        if not mask.any():
            continue
        out.append((float(predicted[mask].mean()), float(observed[mask].mean()),
                    int(mask.sum())))
    return out


def diagnostics(bundle: NuisanceBundle, sample, bins=10) -> CalibrationReport:
    """Calibration curves for every fitted model plus IPW weight quantiles."""
    curves = {}
    a = np.asarray(sample.a, dtype=float)
    curves["pi"] = calibration_curve(bundle.pi1, a, bins)
    y = sample.outcome(bundle.outcome) if hasattr(sample, "outcome") else None
    if y is not None and bundle.mode == "complete-case":
        mu_obs = np.where(sample.a == 1, bundle.mu1, bundle.mu0)
        curves["mu"] = calibration_curve(mu_obs, y, bins)
    weights = {}
    pi_obs = np.where(a == 1, bundle.pi1, bundle.pi0)
    weights["inv_pi"] = _quantile_table(1.0 / pi_obs)
    if bundle.eta is not None:
        r = sample.r.astype(float) if hasattr(sample, "r") else np.ones(bundle.n)
        curves["eta"] = calibration_curve(bundle.eta, r, bins)
        curves["pi_eta"] = calibration_curve(bundle.pi1 * bundle.eta, a * r, bins)
        weights["inv_eta"] = _quantile_table(1.0 / bundle.eta)
    return CalibrationReport(curves, weights)


def _quantile_table(values):
    qs = np.quantile(values, WEIGHT_QUANTILES)
    return {label: float(q) for label, q in zip(QUANTILE_LABELS, qs)}
