"""Tree-ensemble learner and model stacking.

The boosted-tree fit wraps scikit-learn's gradient boosting behind the
hyperparameters used elsewhere in the package (depth, learning rate, rounds,
min leaf weight, subsample, seed) so the rest of the code never touches
sklearn directly. Zero rounds is a valid degenerate configuration: it yields
the constant base-rate model.
"""

from __future__ import annotations

import warnings as _warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.ensemble import GradientBoostingClassifier

from .errors import ConfigError
from .rng import root_stream

STACK_STEPS = 500
STACK_EPS = 1e-9


@dataclass(frozen=True)
class GbtParams:
    depth: int = 3
    learning_rate: float = 0.1
    rounds: int = 100
    min_leaf_weight: float = 1.0
    subsample: float = 1.0
    seed: int = 0

    def validate(self) -> None:
        if self.depth < 1:
            raise ConfigError(f"gbt depth must be >= 1, got {self.depth}")
        if self.rounds < 0:
            raise ConfigError(f"gbt rounds must be >= 0, got {self.rounds}")
        if not 0 < self.learning_rate:
            raise ConfigError("gbt learning_rate must be positive")
        if not 0 < self.subsample <= 1:
            raise ConfigError("gbt subsample must be in (0, 1]")


@dataclass
class ConstantModel:
    """Base-rate predictor; also the rounds=0 boosting model."""

    kind = "constant"
    proba: np.ndarray  # (K,) class frequencies

    def predict_proba(self, design: np.ndarray) -> np.ndarray:
        return np.tile(self.proba, (design.shape[0], 1))

    def predict(self, design: np.ndarray) -> np.ndarray:
        return np.full(design.shape[0], self.proba[-1] if len(self.proba) == 2
                       else np.nan)


@dataclass
class GbtFit:
    kind = "gradient-boosted-trees"
    params: GbtParams
    n_classes: int
    classes_present: np.ndarray
    model: object  # sklearn estimator or ConstantModel

    def predict_proba(self, design: np.ndarray) -> np.ndarray:
        raw = self.model.predict_proba(design)
        out = np.zeros((design.shape[0], self.n_classes))
        out[:, self.classes_present] = raw[:, :len(self.classes_present)]
        return out

    def predict(self, design: np.ndarray) -> np.ndarray:
        """P(class 1) for binary targets."""
        return self.predict_proba(design)[:, 1]


def fit_gbt(design, target, loss="bernoulli", params: GbtParams | None = None,
            weights=None) -> GbtFit:
    """Boosted-tree fit of class probabilities, deterministic given the seed."""
    if loss not in ("bernoulli", "multinomial"):
        raise ConfigError(f"unknown gbt loss {loss!r}")
    params = params or GbtParams()
    params.validate()
    design = np.asarray(design, dtype=float)
    target = np.asarray(target, dtype=int)
    if weights is None:
        weights = np.ones(len(target))
    n_classes = 2 if loss == "bernoulli" else int(target.max()) + 1
    counts = np.bincount(target, weights=weights, minlength=n_classes)
    present = np.flatnonzero(counts > 0)

    if params.rounds == 0 or len(present) == 1:
        freq = counts / counts.sum()
        return GbtFit(params, n_classes, np.arange(n_classes),
                      ConstantModel(proba=freq))

    frac = min(0.5, params.min_leaf_weight / max(weights.sum(), 1.0))
    model = GradientBoostingClassifier(
        max_depth=params.depth,
        learning_rate=params.learning_rate,
        n_estimators=params.rounds,
        min_weight_fraction_leaf=frac,
        subsample=params.subsample,
        random_state=params.seed,
    )
    with _warnings.catch_warnings():
        _warnings.simplefilter("ignore")
        model.fit(design, target, sample_weight=weights)
    return GbtFit(params, n_classes, present, model)


def draw_gbt_grid(n_draws=20, seed=0) -> list[GbtParams]:
    """Seeded draws over the depth / learning-rate / rounds grid."""
    rng = root_stream(seed)
    grid = []
    for _ in range(n_draws):
        grid.append(GbtParams(
            depth=int(rng.integers(2, 7)),
            learning_rate=float(rng.choice([0.05, 0.1, 0.3])),
            rounds=int(rng.integers(50, 401)),
            seed=int(rng.integers(0, 2**31 - 1)),
        ))
    return grid


# ---------------------------------------------------------------------------
# stacking


@dataclass
class StackedModel:
    kind = "stacked-ensemble"
    members: list
    weights: np.ndarray
    validation_loss: float
    warnings: list[str] = field(default_factory=list)

    def predict_proba(self, design: np.ndarray) -> np.ndarray:
        out = None
        for w, m in zip(self.weights, self.members):
            p = m.predict_proba(design)
            out = w * p if out is None else out + w * p
        return out

    def predict(self, design: np.ndarray) -> np.ndarray:
        return self.predict_proba(design)[:, 1]


def _log_loss(proba, target, weights):
    p = np.clip(proba[np.arange(len(target)), target], 1e-12, None)
    return float(-np.sum(weights * np.log(p)) / weights.sum())


def stack_weights(member_probas, target, weights=None, steps=STACK_STEPS):
    """Simplex weights minimizing validation log-loss, by exponentiated gradient.

    ``member_probas`` is a list of (n, K) validation probability matrices.
    Falls back to the best single member whenever the optimized mixture would
    be worse, so stacking never loses to its best member.
    """
    n = member_probas[0].shape[0]
    target = np.asarray(target, dtype=int)
    if weights is None:
        weights = np.ones(n)
    m = len(member_probas)
    picks = np.stack([p[np.arange(n), target] for p in member_probas])  # (m, n)
    picks = np.clip(picks, 1e-12, None)
    w = np.full(m, 1.0 / m)
    for _ in range(steps):
        mix = w @ picks
        grad = -(picks / mix) @ weights / weights.sum()
        grad = grad - grad.mean()
        scale = np.max(np.abs(grad))
        if scale < 1e-14:
            break
        w = w * np.exp(-0.5 * grad / scale)
        w = w / w.sum()
    member_losses = [-float(np.sum(weights * np.log(picks[j])) / weights.sum())
                     for j in range(m)]
    mix_loss = -float(np.sum(weights * np.log(w @ picks)) / weights.sum())
    best = int(np.argmin(member_losses))
    if mix_loss > member_losses[best]:
        w = np.zeros(m)
        w[best] = 1.0
        mix_loss = member_losses[best]
    return w, mix_loss


def stack(members, validation_probas, target, weights=None) -> StackedModel:
    """Combine fitted members by their validation-loss-optimal convex weights."""
    notes = []
    if len(members) < 2:
        notes.append("fewer than 2 members; stacking is a pass-through")
        w = np.ones(len(members))
        loss = _log_loss(validation_probas[0], np.asarray(target, dtype=int),
                         np.ones(validation_probas[0].shape[0])
                         if weights is None else np.asarray(weights))
        return StackedModel(list(members), w, loss, notes)
    w, loss = stack_weights(validation_probas, target, weights)
    return StackedModel(list(members), w, loss, notes)
