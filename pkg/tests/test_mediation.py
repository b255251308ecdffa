import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from causalsurvey import mediation, nuisance, sim
from causalsurvey.data import N_JOINT_CELLS
from causalsurvey.effects import from_if_values


def oracle_case(rho=0.3):
    spec = sim.dgp2(rho)
    sample = sim.exhaustive_sample(spec)
    bundle = sim.true_bundle(spec, sample)
    truth = sim.enumerate_truth(spec, deltas=[1.0])
    return spec, sample, bundle, truth


COMPONENTS = ("total", "ide", "iie_m1", "iie_m2", "cov")


class TestOracleIdentity:
    @pytest.mark.parametrize("reference", [0, 1])
    def test_matches_enumeration(self, reference):
        _, sample, bundle, truth = oracle_case()
        dec = mediation.interventional_decomposition(sample, bundle, reference)
        expected = truth.decomposition[reference]
        for name in COMPONENTS:
            assert getattr(dec, name).point == pytest.approx(
                getattr(expected, name), abs=1e-10), name

    def test_reference_totals_identical(self):
        _, sample, bundle, _ = oracle_case()
        d0 = mediation.interventional_decomposition(sample, bundle, 0)
        d1 = mediation.interventional_decomposition(sample, bundle, 1)
        assert np.allclose(d0.total.if_values, d1.total.if_values)

    def test_outcome_flat_in_mediators_collapses(self):
        # mediators present but causally inert for the outcome
        base = sim.dgp2(0.4)
        y_prob = np.zeros_like(base.y_prob)
        y_prob[:, 0, :] = np.array([0.2, 0.4])[:, None]
        y_prob[:, 1, :] = np.array([0.35, 0.6])[:, None]
        spec = sim.DgpSpec("flat", base.covariates, base.x_prob, base.pi1,
                           y_prob, base.pmed)
        sample = sim.exhaustive_sample(spec)
        bundle = sim.true_bundle(spec, sample)
        dec = mediation.interventional_decomposition(sample, bundle, 0)
        assert dec.iie_m1.point == pytest.approx(0.0, abs=1e-12)
        assert dec.iie_m2.point == pytest.approx(0.0, abs=1e-12)
        assert dec.cov.point == pytest.approx(0.0, abs=1e-12)
        assert dec.ide.point == pytest.approx(dec.total.point, abs=1e-12)

    def test_independent_mediators_zero_covariant_truth(self):
        truth = sim.enumerate_truth(sim.dgp2(rho=0.0), deltas=[1.0])
        assert truth.decomposition[0].cov == pytest.approx(0.0, abs=1e-14)
        assert truth.decomposition[1].cov == pytest.approx(0.0, abs=1e-14)


class TestAdditivity:
    def test_record_wise_residual(self, dgp2_sample, dgp2_bundle):
        dec = mediation.interventional_decomposition(dgp2_sample, dgp2_bundle, 0)
        resid = (dec.total.if_values - dec.ide.if_values
                 - dec.iie_m1.if_values - dec.iie_m2.if_values
                 - dec.cov.if_values)
        assert np.max(np.abs(resid)) < 1e-12

    @settings(max_examples=10, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_additivity_on_random_bundles(self, seed):
        rng = np.random.default_rng(seed)
        n = 60
        sample = sim.generate_sample(sim.dgp2(0.2), n, seed=seed)
        pmed = rng.dirichlet(np.ones(N_JOINT_CELLS), size=(n, 2))
        bundle = nuisance.NuisanceBundle(
            "y", rng.uniform(0.2, 0.8, n), rng.uniform(0.1, 0.9, n),
            rng.uniform(0.1, 0.9, n), np.zeros(n, dtype=int), 0.0,
            mu_m=rng.uniform(0.05, 0.95, (n, 2, N_JOINT_CELLS)),
            pmed=pmed)
        dec = mediation.interventional_decomposition(sample, bundle, 1)
        resid = (dec.total.if_values - dec.ide.if_values - dec.iie_m1.if_values
                 - dec.iie_m2.if_values - dec.cov.if_values)
        assert np.max(np.abs(resid)) < 1e-12


class TestProportions:
    def _fixed_decomposition(self):
        n = 1000
        comps = {"total": -0.04, "ide": -0.02, "iie_m1": -0.01,
                 "iie_m2": -0.005, "cov": -0.005}
        # constant IF values: zero variance, exact ratios
        builders = {k: from_if_values(k, np.full(n, v), scale="risk-difference")
                    for k, v in comps.items()}
        return mediation.MediationDecomposition(
            builders["total"], builders["ide"], builders["iie_m1"],
            builders["iie_m2"], builders["cov"], reference=0)

    def test_arithmetic(self):
        props = {p.component: p.ratio
                 for p in mediation.proportion_mediated(self._fixed_decomposition())}
        assert props["ide"] == pytest.approx(0.50)
        assert props["iie_m1"] == pytest.approx(0.25)
        assert props["iie_m2"] == pytest.approx(0.125)
        assert props["cov"] == pytest.approx(0.125)

    def test_oracle_proportions(self):
        _, sample, bundle, truth = oracle_case()
        dec = mediation.interventional_decomposition(sample, bundle, 0)
        props = {p.component: p for p in mediation.proportion_mediated(dec)}
        expected = truth.decomposition[0]
        for name in ("ide", "iie_m1", "iie_m2", "cov"):
            assert props[name].ratio == pytest.approx(
                getattr(expected, name) / expected.total, abs=1e-10)

    def test_zero_total_suppresses(self):
        n = 50
        zero = from_if_values("z", np.zeros(n), scale="risk-difference")
        dec = mediation.MediationDecomposition(zero, zero, zero, zero, zero, 0)
        props = mediation.proportion_mediated(dec)
        assert all(p.suppressed for p in props)


class TestEqualityTest:
    def test_identical_indirect_effects(self):
        n = 200
        vals = np.random.default_rng(0).normal(size=n)
        est = from_if_values("e", vals, scale="risk-difference")
        dec = mediation.MediationDecomposition(est, est, est, est, est, 0)
        z, p = mediation.mediator_equality_test(dec)
        assert z == 0.0 and p == 1.0

    def test_size_under_exchangeable_mediators(self):
        # symmetric DGP: both mediators identically distributed and weighted
        pmed = np.zeros((2, 2, N_JOINT_CELLS))
        y_prob = np.zeros((2, 2, N_JOINT_CELLS))
        s1 = np.repeat(sim.MEDIATOR_SCORES, 4)
        s2 = np.tile(sim.MEDIATOR_SCORES, 4)
        for x in range(2):
            for a in range(2):
                coef = 0.4 * a - 0.2 * x + 0.1
                pmed[x, a] = sim.tilted_joint(coef, coef, 0.25)
                logits = -1.2 + 0.5 * a + 0.35 * s1 + 0.35 * s2 + 0.3 * x
                y_prob[x, a] = 1 / (1 + np.exp(-logits))
        spec = sim.DgpSpec("sym", (("x1", 2),), np.array([0.5, 0.5]),
                           np.array([0.45, 0.55]), y_prob, pmed)
        rejections = 0
        n_sims = 120
        for s in range(n_sims):
            sample = sim.generate_sample(spec, 4000, seed=5000 + s)
            bundle = nuisance.crossfit(sample,
                                       nuisance.NuisanceSpec(mediators=True))
            dec = mediation.interventional_decomposition(sample, bundle, 0)
            _, p = mediation.mediator_equality_test(dec)
            rejections += p < 0.05
        rate = rejections / n_sims
        assert 0.0 <= rate <= 0.125, rate

    def test_detects_unequal_mediators(self, dgp2_sample, dgp2_bundle):
        dec = mediation.interventional_decomposition(dgp2_sample, dgp2_bundle, 0)
        z, p = mediation.mediator_equality_test(dec)
        assert p < 0.05


def test_positivity_warning_on_floor_cells():
    spec = sim.dgp2(0.3)
    sample = sim.generate_sample(spec, 2000, seed=77)
    bundle = nuisance.crossfit(sample, nuisance.NuisanceSpec(mediators=True,
                                                             clip=0.2))
    dec = mediation.interventional_decomposition(sample, bundle, 0)
    assert any("positivity" in w for w in dec.warnings)
