import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import logit

from causalsurvey import glm
from causalsurvey.errors import DataError


def random_problem(rng, n=200, p=3):
    design = np.column_stack([np.ones(n), rng.normal(size=(n, p - 1))])
    target = (rng.random(n) < 0.4).astype(float)
    weights = rng.uniform(0.5, 2.0, n)
    return design, target, weights


class TestLogistic:
    def test_intercept_only_closed_form(self):
        y = np.r_[np.ones(25), np.zeros(75)]
        fit = glm.fit_logistic(np.ones((100, 1)), y)
        assert abs(fit.beta[0] - logit(0.25)) < 1e-8

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        design, target, weights = random_problem(rng)
        for trial in range(20):
            beta = rng.normal(size=design.shape[1])
            ridge = 0.0 if trial % 2 else 0.05
            _, grad = glm.logistic_nll_grad(beta, design, target, weights, ridge)
            fd = np.empty_like(beta)
            for j in range(len(beta)):
                e = np.zeros_like(beta)
                e[j] = 1e-6
                hi, _ = glm.logistic_nll_grad(beta + e, design, target, weights, ridge)
                lo, _ = glm.logistic_nll_grad(beta - e, design, target, weights, ridge)
                fd[j] = (hi - lo) / 2e-6
            rel = np.max(np.abs(fd - grad) / (np.abs(fd) + 1e-10))
            assert rel < 1e-6

    def test_score_small_at_convergence(self):
        rng = np.random.default_rng(3)
        design, target, weights = random_problem(rng, n=500)
        fit = glm.fit_logistic(design, target, weights)
        assert fit.converged
        assert fit.max_score < 1e-8

    def test_separated_data_escalates_to_ridge(self):
        design = np.array([[1.0, 0.0], [1.0, 0.1], [1.0, 0.9], [1.0, 1.0]])
        target = np.array([0.0, 0.0, 1.0, 1.0])
        fit = glm.fit_logistic(design, target)
        assert fit.ridge > 0
        assert any("separation" in w or "ridge" in w for w in fit.warnings)

    def test_rank_deficient_design_falls_back_to_ridge(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=300)
        design = np.column_stack([np.ones(300), x, x])  # duplicated column
        target = (rng.random(300) < 0.5).astype(float)
        fit = glm.fit_logistic(design, target)
        assert fit.ridge > 0
        assert any("singular" in w for w in fit.warnings)

    def test_nonconvergence_flagged_not_raised(self):
        rng = np.random.default_rng(1)
        design, target, weights = random_problem(rng)
        fit = glm.fit_logistic(design, target, weights, max_iter=1)
        assert not fit.converged
        assert any("did not converge" in w for w in fit.warnings)

    def test_weighted_fit_equals_replicated_rows(self):
        rng = np.random.default_rng(5)
        design = np.column_stack([np.ones(50), rng.normal(size=50)])
        target = (rng.random(50) < 0.5).astype(float)
        weights = rng.integers(1, 4, size=50).astype(float)
        expanded_design = np.repeat(design, weights.astype(int), axis=0)
        expanded_target = np.repeat(target, weights.astype(int))
        a = glm.fit_logistic(design, target, weights)
        b = glm.fit_logistic(expanded_design, expanded_target)
        assert np.allclose(a.beta, b.beta, atol=1e-7)


class TestMultinomial:
    def test_intercept_only_matches_frequencies(self):
        rng = np.random.default_rng(11)
        target = rng.choice(3, size=2000, p=[0.5, 0.3, 0.2])
        fit = glm.fit_multinomial(np.ones((2000, 1)), target, 3)
        freq = np.bincount(target, minlength=3) / 2000
        pred = fit.predict_proba(np.ones((1, 1)))[0]
        assert np.max(np.abs(pred - freq)) < 1e-8

    def test_two_classes_reduce_to_logistic(self):
        rng = np.random.default_rng(13)
        design = np.column_stack([np.ones(800), rng.normal(size=(800, 2))])
        target = (rng.random(800) < 0.3).astype(int)
        multi = glm.fit_multinomial(design, target, 2)
        logi = glm.fit_logistic(design, target.astype(float))
        assert np.max(np.abs(multi.predict_proba(design)[:, 1]
                             - logi.predict(design))) < 1e-8

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(17)
        design = np.column_stack([np.ones(300), rng.normal(size=300)])
        target = rng.choice(16, size=300)
        fit = glm.fit_multinomial(design, target, 16, structural_zeros=True)
        pred = fit.predict_proba(np.column_stack([np.ones(1000),
                                                  rng.normal(size=1000)]))
        assert np.max(np.abs(pred.sum(axis=1) - 1.0)) < 1e-12

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(19)
        n, p, k = 300, 3, 5
        design = np.column_stack([np.ones(n), rng.normal(size=(n, p - 1))])
        target = rng.choice(k, size=n)
        weights = rng.uniform(0.5, 2.0, n)
        for _ in range(5):
            coef = rng.normal(size=p * (k - 1)) * 0.3
            _, grad = glm.multinomial_nll_grad(coef, design, target, k, weights, 0.02)
            fd = np.empty_like(coef)
            for j in range(len(coef)):
                e = np.zeros_like(coef)
                e[j] = 1e-6
                hi, _ = glm.multinomial_nll_grad(coef + e, design, target, k, weights, 0.02)
                lo, _ = glm.multinomial_nll_grad(coef - e, design, target, k, weights, 0.02)
                fd[j] = (hi - lo) / 2e-6
            assert np.max(np.abs(fd - grad) / (np.abs(fd) + 1e-10)) < 1e-6

    def test_empty_class_requires_flag(self):
        design = np.ones((50, 1))
        target = np.zeros(50, dtype=int)
        with pytest.raises(DataError):
            glm.fit_multinomial(design, target, 3)
        fit = glm.fit_multinomial(design, target, 3, structural_zeros=True)
        pred = fit.predict_proba(design)
        assert np.all(pred[:, 0] == 1.0)
        assert np.all(pred[:, 1:] == 0.0)


@settings(max_examples=30, deadline=None)
@given(frac=st.floats(0.05, 0.95))
def test_intercept_only_any_rate(frac):
    n = 400
    k = int(round(frac * n))
    y = np.r_[np.ones(k), np.zeros(n - k)]
    fit = glm.fit_logistic(np.ones((n, 1)), y)
    assert abs(fit.beta[0] - logit(k / n)) < 1e-8
