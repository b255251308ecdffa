"""Weighted logistic and multinomial regression fit by Newton-type iterations.

Both fits maximize the weighted log-likelihood, optionally with a ridge
penalty on the standardized scale (intercept never penalized). The objective
exposed to tests is the *mean* negative log-likelihood, so gradient
magnitudes and the convergence tolerance do not scale with n.

Fits never raise on nonconvergence or separation: they escalate to a small
ridge penalty and attach warnings, so callers can inspect ``fit.warnings``.
"""

from __future__ import annotations

import warnings as _warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, LinAlgWarning, solve
from scipy.special import expit

from .errors import ConfigError, DataError, NumericalError


def _solve_pd(hess, grad):
    """Solve the Newton system; ill-conditioning counts as singular."""
    with _warnings.catch_warnings():
        _warnings.simplefilter("error", LinAlgWarning)
        return solve(hess, grad, assume_a="pos")

MAX_ITER = 100
# stop well below the 1e-8 score contract so coefficients are pinned to the
# closed forms even when the Fisher curvature is small
SCORE_TOL = 1e-11
SCORE_CONTRACT = 1e-8
RIDGE_FALLBACK = 1e-4
SEPARATION_COEF = 15.0


def _column_scales(design: np.ndarray) -> np.ndarray:
    """Per-column SDs used for the standardized ridge penalty.

    Constant columns (the intercept) get scale 0 so they are never penalized.
    """
    scales = design.std(axis=0)
    return scales


def logistic_nll_grad(beta, design, target, weights, ridge=0.0, scales=None):
    """Mean weighted Bernoulli NLL and its gradient at ``beta``.

    Stable for large |z| via logaddexp. ``ridge`` penalizes (beta_j * s_j)^2 / 2
    with s_j the column SD, so the penalty is invariant to dummy rescaling.
    """
    if scales is None:
        scales = _column_scales(design)
    z = design @ beta
    wsum = weights.sum()
    nll = float(np.sum(weights * (np.logaddexp(0.0, z) - target * z)) / wsum)
    grad = design.T @ (weights * (expit(z) - target)) / wsum
    if ridge > 0.0:
        s2 = scales**2
        nll += 0.5 * ridge * float(np.sum(s2 * beta**2))
        grad = grad + ridge * s2 * beta
    return nll, grad


@dataclass
class LogisticFit:
    beta: np.ndarray
    converged: bool
    n_iter: int
    ridge: float
    max_score: float
    warnings: list[str] = field(default_factory=list)

    def predict(self, design: np.ndarray) -> np.ndarray:
        return expit(design @ self.beta)


def fit_logistic(design, target, weights=None, ridge=0.0,
                 max_iter=MAX_ITER, tol=SCORE_TOL) -> LogisticFit:
    """IRLS fit of P(target=1 | design) with automatic ridge escalation.

    Escalates to ridge=1e-4 when the normal equations are singular or the
    fit separates (any |coef| > 15 on the standardized scale), attaching a
    warning either way. Nonconvergence after 100 iterations returns the last
    iterate flagged ``converged=False``.
    """
    design = np.asarray(design, dtype=float)
    target = np.asarray(target, dtype=float)
    if design.ndim != 2 or len(target) != design.shape[0]:
        raise DataError("design/target shape mismatch")
    if weights is None:
        weights = np.ones(len(target))
    weights = np.asarray(weights, dtype=float)
    if np.any(weights < 0):
        raise DataError("negative sample weights")

    scales = _column_scales(design)
    warnings: list[str] = []
    fit = _irls(design, target, weights, ridge, scales, max_iter, tol)
    if fit is None:
        warnings.append("singular normal equations; ridge fallback engaged")
        ridge = max(ridge, RIDGE_FALLBACK)
        fit = _irls(design, target, weights, ridge, scales, max_iter, tol)
        if fit is None:
            raise NumericalError("logistic design singular even under ridge")
    beta, converged, n_iter, max_score = fit

    if ridge == 0.0 and np.any(np.abs(beta * np.where(scales > 0, scales, 1.0)) > SEPARATION_COEF):
        warnings.append("separation detected; ridge escalation engaged")
        ridge = RIDGE_FALLBACK
        refit = _irls(design, target, weights, ridge, scales, max_iter, tol)
        if refit is not None:
            beta, converged, n_iter, max_score = refit
    if not converged:
        warnings.append(f"IRLS did not converge in {max_iter} iterations "
                        f"(max |score| = {max_score:.3e}); returning last iterate")
    return LogisticFit(beta, converged, n_iter, ridge, max_score, warnings)


def _irls(design, target, weights, ridge, scales, max_iter, tol):
    n, p = design.shape
    wsum = weights.sum()
    beta = np.zeros(p)
    s2 = ridge * scales**2
    max_score = np.inf
    for it in range(1, max_iter + 1):
        z = design @ beta
        prob = expit(z)
        grad = design.T @ (weights * (prob - target)) / wsum + s2 * beta
        max_score = float(np.max(np.abs(grad)))
        if max_score < tol:
            return beta, True, it - 1, max_score
        curv = weights * prob * (1.0 - prob)
        hess = (design.T * curv) @ design / wsum + np.diag(s2)
        try:
            step = _solve_pd(hess, grad)
        except (LinAlgError, LinAlgWarning, np.linalg.LinAlgError):
            return None
        # halve until the objective stops increasing; guards extreme steps
        nll0, _ = logistic_nll_grad(beta, design, target, weights, ridge, scales)
        scale = 1.0
        for _ in range(30):
            cand = beta - scale * step
            nll1, _ = logistic_nll_grad(cand, design, target, weights, ridge, scales)
            if nll1 <= nll0 + 1e-14:
                break
            scale *= 0.5
        beta = beta - scale * step
    z = design @ beta
    grad = design.T @ (weights * (expit(z) - target)) / wsum + s2 * beta
    return beta, False, max_iter, float(np.max(np.abs(grad)))


# ---------------------------------------------------------------------------
# multinomial


def _softmax(logits):
    """Row softmax and row logsumexp, numerically stable."""
    peak = logits.max(axis=1, keepdims=True)
    z = np.exp(logits - peak)
    total = z.sum(axis=1, keepdims=True)
    return z / total, peak + np.log(total)


def _unpack_coef(coef, p, n_classes):
    """Class-major flat vector -> (p, K) logit matrix with reference class 0."""
    b = np.zeros((p, n_classes))
    b[:, 1:] = coef.reshape(n_classes - 1, p).T
    return b


def multinomial_nll_grad(coef, design, target, n_classes, weights,
                         ridge=0.0, scales=None):
    """Mean weighted multinomial NLL and gradient.

    ``coef`` flattens the per-class coefficient blocks for classes 1..K-1 in
    class-major order; class 0 is the reference with logits fixed at zero.
    """
    design = np.asarray(design, dtype=float)
    n, p = design.shape
    if scales is None:
        scales = _column_scales(design)
    b = _unpack_coef(coef, p, n_classes)
    logits = design @ b
    prob, lse = _softmax(logits)
    wsum = weights.sum()
    ll = logits[np.arange(n), target] - lse[:, 0]
    nll = float(-np.sum(weights * ll) / wsum)
    resid = weights[:, None] * prob
    np.subtract.at(resid, (np.arange(n), target), weights)
    grad_full = design.T @ resid / wsum            # (p, K)
    grad = grad_full[:, 1:]
    if ridge > 0.0:
        s2 = scales**2
        nll += 0.5 * ridge * float(np.sum(s2[:, None] * b[:, 1:] ** 2))
        grad = grad + ridge * s2[:, None] * b[:, 1:]
    return nll, grad.T.ravel()


@dataclass
class MultinomialFit:
    coef: np.ndarray          # (p, K-1), class 0 is the reference
    n_classes: int
    classes_present: np.ndarray
    converged: bool
    n_iter: int
    ridge: float
    max_score: float
    warnings: list[str] = field(default_factory=list)

    def predict_proba(self, design: np.ndarray) -> np.ndarray:
        p = design.shape[1]
        b = np.zeros((p, len(self.classes_present)))
        b[:, 1:] = self.coef
        prob_present, _ = _softmax(design @ b)
        out = np.zeros((design.shape[0], self.n_classes))
        out[:, self.classes_present] = prob_present
        return out


def fit_multinomial(design, target, n_classes, weights=None, ridge=0.0,
                    structural_zeros=False, max_iter=MAX_ITER,
                    tol=SCORE_TOL) -> MultinomialFit:
    """Newton fit of a softmax model over classes 0..n_classes-1.

    Classes with no observed weight are an error unless ``structural_zeros``
    is set, in which case they are dropped from the fit and predicted with
    probability exactly zero.
    """
    design = np.asarray(design, dtype=float)
    target = np.asarray(target, dtype=int)
    if weights is None:
        weights = np.ones(len(target))
    weights = np.asarray(weights, dtype=float)
    counts = np.bincount(target, weights=weights, minlength=n_classes)
    present = np.flatnonzero(counts > 0)
    if len(present) < n_classes and not structural_zeros:
        missing = sorted(set(range(n_classes)) - set(present.tolist()))
        raise DataError(f"classes with no observations: {missing}; "
                        "pass structural_zeros=True to drop them")
    remap = -np.ones(n_classes, dtype=int)
    remap[present] = np.arange(len(present))
    y = remap[target]
    k = len(present)
    if k == 1:
        fit = MultinomialFit(np.zeros((design.shape[1], 0)), n_classes,
                             present, True, 0, ridge, 0.0)
        return fit

    scales = _column_scales(design)
    warnings: list[str] = []
    out = _newton_multinomial(design, y, k, weights, ridge, scales, max_iter, tol)
    if out is None:
        warnings.append("singular multinomial Hessian; ridge fallback engaged")
        ridge = max(ridge, RIDGE_FALLBACK)
        out = _newton_multinomial(design, y, k, weights, ridge, scales, max_iter, tol)
        if out is None:
            raise NumericalError("multinomial design singular even under ridge")
    coef, converged, n_iter, max_score = out
    if ridge == 0.0 and np.any(np.abs(coef * np.where(scales > 0, scales, 1.0)[:, None]) > SEPARATION_COEF):
        warnings.append("separation detected; ridge escalation engaged")
        ridge = RIDGE_FALLBACK
        refit = _newton_multinomial(design, y, k, weights, ridge, scales, max_iter, tol)
        if refit is not None:
            coef, converged, n_iter, max_score = refit
    if not converged:
        warnings.append(f"multinomial Newton did not converge in {max_iter} iterations")
    return MultinomialFit(coef, n_classes, present, converged, n_iter, ridge,
                          max_score, warnings)


def _unflatten(coef, p, k):
    return coef.reshape(k - 1, p).T


def _newton_multinomial(design, y, k, weights, ridge, scales, max_iter, tol):
    n, p = design.shape
    wsum = weights.sum()
    coef = np.zeros(p * (k - 1))
    s2 = ridge * scales**2
    max_score = np.inf
    for it in range(1, max_iter + 1):
        nll, grad = multinomial_nll_grad(coef, design, y, k, weights, ridge, scales)
        max_score = float(np.max(np.abs(grad)))
        if max_score < tol:
            return _unflatten(coef, p, k), True, it - 1, max_score
        prob, _ = _softmax(design @ _unpack_coef(coef, p, k))
        hess = np.empty((k - 1, p, k - 1, p))
        for a in range(1, k):
            for c in range(a, k):
                w_ac = weights * (prob[:, a] * ((a == c) - prob[:, c]))
                block = (design.T * w_ac) @ design / wsum
                if a == c:
                    block = block + np.diag(s2)
                hess[a - 1, :, c - 1, :] = block
                if a != c:
                    hess[c - 1, :, a - 1, :] = block.T
        try:
            step = _solve_pd(hess.reshape(p * (k - 1), p * (k - 1)), grad)
        except (LinAlgError, LinAlgWarning, np.linalg.LinAlgError):
            return None
        scale = 1.0
        for _ in range(30):
            cand = coef - scale * step
            nll1, _ = multinomial_nll_grad(cand, design, y, k, weights, ridge, scales)
            if nll1 <= nll + 1e-14:
                break
            scale *= 0.5
        coef = coef - scale * step
    _, grad = multinomial_nll_grad(coef, design, y, k, weights, ridge, scales)
    return _unflatten(coef, p, k), False, max_iter, float(np.max(np.abs(grad)))
