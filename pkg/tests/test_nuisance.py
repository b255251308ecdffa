import json

import numpy as np
import pytest

from causalsurvey import nuisance, sim
from causalsurvey.data import AnalyticSample, build_design
from causalsurvey.errors import ConfigError, DataError


class TestFolds:
    def test_fold_sizes_balanced(self):
        folds = nuisance.make_folds(100, 2, seed=0)
        assert np.bincount(folds).tolist() == [50, 50]

    def test_folds_deterministic(self):
        assert np.array_equal(nuisance.make_folds(500, 5, 3),
                              nuisance.make_folds(500, 5, 3))

    def test_tree_learner_requires_crossfit(self):
        with pytest.raises(ConfigError):
            nuisance.NuisanceSpec(learner="gbt", folds=1).validate()

    def test_unknown_learner(self):
        with pytest.raises(ConfigError):
            nuisance.NuisanceSpec(learner="deep-net").validate()


class TestCrossfitGlm:
    def test_propensity_accuracy_dgp1(self, dgp1_sample, dgp1_bundle):
        truth = sim.enumerate_truth(sim.dgp1(), deltas=[1.0])
        cells = sim.sample_cells(sim.dgp1(), dgp1_sample)
        true_pi = truth.pi_z[cells]
        assert np.mean(np.abs(dgp1_bundle.pi1 - true_pi)) < 0.01

    def test_clipping_with_alarm(self):
        spec = sim.dgp1()
        sample = sim.generate_sample(spec, 2000, seed=4)
        bundle = nuisance.crossfit(sample, nuisance.NuisanceSpec(clip=0.45))
        assert bundle.pi1.min() >= 0.45 - 1e-12
        assert bundle.pi1.max() <= 0.55 + 1e-12
        assert bundle.alarms.get("pi", 0) > 0
        assert bundle.alarms.get("positivity_pi_alarm") is True

    def test_mediator_rows_sum_to_one(self, dgp2_bundle):
        sums = dgp2_bundle.pmed.sum(axis=2)
        assert np.max(np.abs(sums - 1)) < 1e-12
        assert dgp2_bundle.alarms["pmed_raw_sum_max_dev"] < 1e-9

    def test_empty_arm_in_fold_errors(self):
        spec = sim.dgp1()
        sample = sim.generate_sample(spec, 200, seed=5)
        all_treated = AnalyticSample(sample.y, np.ones(sample.n, dtype=int),
                                     sample.m1, sample.m2, sample.covariates,
                                     sample.weight)
        with pytest.raises(DataError, match="A=0"):
            nuisance.crossfit(all_treated, nuisance.NuisanceSpec())


class TestCrossfitGbt:
    def _sample(self, n=1200, seed=0):
        return sim.generate_sample(sim.dgp1(), n, seed=seed)

    def test_prediction_comes_from_other_folds(self):
        from causalsurvey.learners import GbtParams
        sample = self._sample()
        spec = nuisance.NuisanceSpec(learner="gbt", folds=2,
                                     gbt=GbtParams(rounds=30, depth=2))
        base = nuisance.crossfit(sample, spec)
        # corrupt outcomes in fold 0: only fold-0 predictions may change
        y2 = sample.y.copy()
        corrupt = base.folds != 0   # records training the fold-0 models
        y2[corrupt] = 1 - y2[corrupt]
        tampered = AnalyticSample(y2, sample.a, sample.m1, sample.m2,
                                  sample.covariates, sample.weight)
        again = nuisance.crossfit(tampered, spec)
        assert np.array_equal(base.folds, again.folds)
        changed = base.mu1 != again.mu1
        assert changed[base.folds == 0].any()

    def test_unchanged_fold_predictions_stable(self):
        sample = self._sample()
        from causalsurvey.learners import GbtParams
        spec = nuisance.NuisanceSpec(learner="gbt", folds=3,
                                     gbt=GbtParams(rounds=20, depth=2))
        base = nuisance.crossfit(sample, spec)
        # corrupting only fold 2's *own* rows leaves fold-2 predictions intact
        y2 = sample.y.copy()
        rows = base.folds == 2
        y2[rows] = 1 - y2[rows]
        tampered = AnalyticSample(y2, sample.a, sample.m1, sample.m2,
                                  sample.covariates, sample.weight)
        again = nuisance.crossfit(tampered, spec)
        assert np.allclose(base.mu1[rows], again.mu1[rows])
        assert np.allclose(base.pi1[rows], again.pi1[rows])

    def test_stacked_path_runs(self):
        sample = self._sample(800)
        spec = nuisance.NuisanceSpec(learner="gbt-stack", folds=2,
                                     gbt_grid_size=3)
        bundle = nuisance.crossfit(sample, spec)
        assert np.all((bundle.pi1 >= 0.01) & (bundle.pi1 <= 0.99))


class TestSerialization:
    def test_round_trip(self, dgp2_bundle):
        payload = json.loads(json.dumps(dgp2_bundle.to_dict()))
        back = nuisance.NuisanceBundle.from_dict(payload)
        assert np.array_equal(back.pi1, dgp2_bundle.pi1)
        assert np.array_equal(back.pmed, dgp2_bundle.pmed)
        assert back.outcome == dgp2_bundle.outcome

    def test_format_guard(self):
        with pytest.raises(DataError):
            nuisance.NuisanceBundle.from_dict({"format": "other"})


class TestDiagnostics:
    def test_calibrated_model_bins_close(self):
        rng = np.random.default_rng(0)
        n = 20_000
        pred = rng.uniform(0.05, 0.95, n)
        obs = (rng.random(n) < pred).astype(float)
        curve = nuisance.calibration_curve(pred, obs, bins=10)
        assert sum(c for _, _, c in curve) == n
        for mean_pred, mean_obs, count in curve:
            assert abs(mean_pred - mean_obs) < 2 / np.sqrt(count)

    def test_constant_model_single_bin(self):
        pred = np.full(500, 0.3)
        obs = (np.random.default_rng(1).random(500) < 0.3).astype(float)
        curve = nuisance.calibration_curve(pred, obs)
        assert len(curve) == 1
        assert curve[0][0] == pytest.approx(0.3)
        assert curve[0][1] == pytest.approx(obs.mean())

    def test_report_quantiles_nondecreasing(self, dgp1_sample, dgp1_bundle):
        report = nuisance.diagnostics(dgp1_bundle, dgp1_sample)
        for table in report.weight_quantiles.values():
            vals = [table[q] for q in nuisance.QUANTILE_LABELS]
            assert all(a <= b + 1e-12 for a, b in zip(vals, vals[1:]))
        assert set(report.curves) >= {"pi", "mu"}

    def test_full_sample_report_has_eta(self):
        spec = sim.dgp1_mar()
        acc = sim.generate_accepting(spec, 5000, seed=3)
        bundle = nuisance.crossfit_full(acc, nuisance.NuisanceSpec())
        report = nuisance.diagnostics(bundle, acc)
        assert "eta" in report.curves and "pi_eta" in report.curves
        assert "inv_eta" in report.weight_quantiles


def test_design_matrix_levels():
    sample = sim.generate_sample(sim.dgp_hte_planted(), 500, seed=0)
    design, info = build_design(sample, ["x2", "x3"])
    assert design.shape[1] == 1 + 3 + 1   # intercept + (4-1) + (2-1)
    assert info.level_map["x2"]["0"] is None
    assert info.column_names()[0] == "(intercept)"
    with pytest.raises(ConfigError):
        build_design(sample, ["nope"])
