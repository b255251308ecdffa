import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from causalsurvey import sim
from causalsurvey.data import decode_joint_mediator, encode_joint_mediator
from causalsurvey.errors import ConfigError, DataError
from causalsurvey.ingest import (FilterConfig, SchemaConfig, SurveyRecord,
                                 apply_range_rules, bin_numeric,
                                 build_analytic_sample, join_auxiliary,
                                 load_survey, recode_missing_as_category,
                                 write_records)

SCHEMA = SchemaConfig(outcome="dep", treatment="vax", mediator1="iso",
                      mediator2="worry", acceptance="accept",
                      covariates=("age", "race"))


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(header + "\n")
        for row in rows:
            handle.write(row + "\n")
    return str(path)


HEADER = "dep,vax,iso,worry,accept,age,race"


class TestLoad:
    def test_all_cells_present(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", HEADER,
                         ["1,0,2,3,1,a,w", "0,1,0,0,1,b,w", "1,1,3,1,1,a,b"])
        records, report = load_survey(path, SCHEMA)
        assert len(records) == 3
        assert not report.row_errors
        assert all(r.complete for r in records)
        assert records[0].outcome == 1 and records[0].mediator2 == 3

    def test_empty_treatment_cell_absent(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", HEADER, ["1,,2,3,1,a,w"])
        records, _ = load_survey(path, SCHEMA)
        assert records[0].treatment is None
        assert not records[0].r_treatment
        assert records[0].r_outcome

    def test_missing_schema_column_names_it(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", "vax,iso,worry,accept,age,race",
                         ["0,2,3,1,a,w"])
        with pytest.raises(ConfigError, match="dep"):
            load_survey(path, SCHEMA)

    def test_bad_ordinal_reported_not_dropped(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", HEADER,
                         ["1,0,9,3,1,a,w", "0,1,1,1,1,b,w"])
        records, report = load_survey(path, SCHEMA)
        assert len(records) == 2
        assert records[0].mediator1 is None
        assert report.row_errors and report.row_errors[0][1] == "iso"

    def test_bad_row_dropped_when_configured(self, tmp_path):
        schema = SchemaConfig(**{**SCHEMA.__dict__, "drop_bad_rows": True})
        path = write_csv(tmp_path / "d.csv", HEADER,
                         ["1,0,9,3,1,a,w", "0,1,1,1,1,b,w"])
        records, report = load_survey(path, schema)
        assert len(records) == 1
        assert report.rows_dropped == 1

    def test_value_map_recodes_treatment(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", HEADER,
                         ["1,yes,2,3,1,a,w", "1,idk,2,3,1,a,w"])
        records, _ = load_survey(path, SCHEMA,
                                 {"vax": {"yes": 1, "no": 0, "idk": 0}})
        assert records[0].treatment == 1
        assert records[1].treatment == 0


class TestRecode:
    def test_absent_becomes_missing_level(self):
        rec = SurveyRecord(covariates={"race": None})
        out = recode_missing_as_category([rec], ["race"])
        assert out[0].covariates["race"] == "missing"

    def test_present_unchanged(self):
        rec = SurveyRecord(covariates={"race": "w"})
        out = recode_missing_as_category([rec], ["race"])
        assert out[0] is rec

    def test_counting_oracle(self):
        rng = np.random.default_rng(0)
        absent = rng.permutation(100) < 30
        records = [SurveyRecord(covariates={"race": None if absent[i] else "w"})
                   for i in range(100)]
        out = recode_missing_as_category(records, ["race"])
        n_missing = sum(r.covariates["race"] == "missing" for r in out)
        assert n_missing == 30

    def test_numeric_covariate_rejected(self):
        rec = SurveyRecord(covariates={"income": 1.5})
        with pytest.raises(ConfigError, match="bin"):
            recode_missing_as_category([rec], ["income"])


def _fixture_records():
    """10 records: 6 complete accepting, 2 hesitant, 2 accepting incomplete."""
    recs = []
    for i in range(6):
        recs.append(SurveyRecord(outcome=i % 2, treatment=(i // 2) % 2,
                                 mediator1=1, mediator2=2, acceptance=1,
                                 covariates={"g": "a" if i < 3 else "b"}))
    for _ in range(2):
        recs.append(SurveyRecord(outcome=1, treatment=0, mediator1=0,
                                 mediator2=0, acceptance=0,
                                 covariates={"g": "a"}))
    for _ in range(2):
        recs.append(SurveyRecord(outcome=None, treatment=1, mediator1=0,
                                 mediator2=0, acceptance=1,
                                 covariates={"g": "b"}))
    return recs


class TestAnalyticSample:
    def test_hand_enumerated_ledger(self):
        sample, ledger = build_analytic_sample(_fixture_records())
        assert sample.n == 6
        assert ledger.final == 6
        assert ledger.after_hesitant == 8
        assert ledger.p_r == pytest.approx(6 / 8)

    def test_all_complete_identity(self):
        records = _fixture_records()[:6]
        sample, ledger = build_analytic_sample(records)
        assert sample.n == 6
        assert ledger.p_r == 1.0

    def test_empty_sample_fatal(self):
        records = [SurveyRecord(acceptance=0, covariates={"g": "a"})]
        with pytest.raises(DataError, match="empty"):
            build_analytic_sample(records)

    def test_ledger_telescopes(self):
        _, ledger = build_analytic_sample(_fixture_records())
        counts = [c for _, c in ledger.steps()]
        assert all(a >= b for a, b in zip(counts, counts[1:]))

    def test_include_hesitant_keeps_them(self):
        sample, ledger = build_analytic_sample(
            _fixture_records(), FilterConfig(include_hesitant=True))
        assert sample.n == 8

    def test_row_filters(self):
        filters = FilterConfig(row_filters=({"column": "g", "keep_in": ["a"]},))
        sample, ledger = build_analytic_sample(_fixture_records(), filters)
        assert ledger.after_row_filters == 5
        assert sample.n == 3


class TestJoin:
    def test_drop_policy_and_added_columns(self, tmp_path):
        aux = write_csv(tmp_path / "aux.csv", "fips,pop,density,gini",
                        ["A,100,5,0.3"])
        records = [SurveyRecord(region="A", covariates={"g": "x"}),
                   SurveyRecord(region="B", covariates={"g": "y"})]
        joined = join_auxiliary(records, aux, "fips", policy="drop")
        assert len(joined) == 1
        assert set(joined[0].covariates) == {"g", "pop", "density", "gini"}

    def test_missing_policy(self, tmp_path):
        aux = write_csv(tmp_path / "aux.csv", "fips,pop", ["A,100"])
        records = [SurveyRecord(region="B", covariates={})]
        joined = join_auxiliary(records, aux, "fips", policy="missing")
        assert len(joined) == 1
        assert joined[0].covariates["pop"] is None

    def test_duplicate_keys_error(self, tmp_path):
        aux = write_csv(tmp_path / "aux.csv", "fips,pop", ["A,1", "A,2"])
        with pytest.raises(DataError, match="A"):
            join_auxiliary([SurveyRecord(region="A")], aux, "fips")

    def test_quintile_binning_equal_counts(self):
        rng = np.random.default_rng(1)
        values = rng.normal(size=100)
        records = [SurveyRecord(covariates={"pop": float(v)}) for v in values]
        binned = bin_numeric(records, "pop", 5)
        counts = {}
        for rec in binned:
            counts[rec.covariates["pop"]] = counts.get(rec.covariates["pop"], 0) + 1
        assert counts == {f"q{i}": 20 for i in range(1, 6)}
        # bins respect the value ordering
        order = np.argsort(values)
        assert binned[order[0]].covariates["pop"] == "q1"
        assert binned[order[-1]].covariates["pop"] == "q5"


class TestSuspicious:
    def test_clean_data_untouched(self):
        records = [SurveyRecord(covariates={"household_size": "3"})]
        kept, n = apply_range_rules(records)
        assert n == 0 and len(kept) == 1

    def test_out_of_range_dropped(self):
        records = [SurveyRecord(covariates={"household_size": "-2"}),
                   SurveyRecord(covariates={"household_size": "4"})]
        kept, n = apply_range_rules(records)
        assert n == 1 and len(kept) == 1


class TestRoundTrip:
    def test_write_then_load_identical(self, tmp_path):
        spec = sim.dgp1_mcar()
        records = sim.generate_records(spec, 300, seed=9)
        schema = SchemaConfig(outcome="y", treatment="a", mediator1="m1",
                              mediator2="m2", acceptance="v",
                              covariates=("x1",))
        path = tmp_path / "round.csv"
        write_records(records, path, schema)
        loaded, report = load_survey(path, schema)
        assert not report.row_errors
        assert loaded == records


@given(st.integers(0, 3), st.integers(0, 3))
def test_joint_mediator_code_bijective(m1, m2):
    code = encode_joint_mediator(m1, m2)
    assert 0 <= code < 16
    d1, d2 = decode_joint_mediator(code)
    assert (d1, d2) == (m1, m2)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.booleans(), st.booleans()),
                min_size=1, max_size=40))
def test_ledger_telescopes_on_arbitrary_records(rows):
    records = []
    for complete, accepting, reported in rows:
        records.append(SurveyRecord(
            outcome=1 if complete else None,
            treatment=0, mediator1=1, mediator2=1,
            acceptance=(1 if accepting else 0) if reported else None,
            covariates={"g": "a"}))
    try:
        _, ledger = build_analytic_sample(records)
    except DataError:
        return  # everything excluded; fatal by contract
    counts = [c for _, c in ledger.steps()]
    assert all(a >= b for a, b in zip(counts, counts[1:]))
    assert 0 < ledger.p_r <= 1
