import csv
import json
import os

import numpy as np
import pytest

from causalsurvey.cli import run


def read_json(path):
    with open(path, encoding="utf-8") as handle:
        return json.load(handle)


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as handle:
        return list(csv.DictReader(handle))


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "sim"
    assert run(["simulate", "--preset", "dgp1", "--n", "20000", "--seed", "7",
                "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def bundle_path(sim_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("cli-fit")
    assert run(["fit", "--config", str(sim_dir / "config.json"),
                "--data", str(sim_dir / "data.csv"), "--out", str(out)]) == 0
    return out / "bundle.json"


class TestSimulate:
    def test_artifacts_exist(self, sim_dir):
        for name in ("data.csv", "truth.json", "dgp.json", "config.json"):
            assert (sim_dir / name).exists()

    def test_truth_values(self, sim_dir):
        truth = read_json(sim_dir / "truth.json")["truth"]
        assert truth["rd"] == pytest.approx(0.15)
        assert truth["rr"] == pytest.approx(1.75)


class TestAte:
    def test_end_to_end_matches_truth(self, sim_dir, bundle_path, tmp_path):
        out = tmp_path / "ate"
        assert run(["ate", "--config", str(sim_dir / "config.json"),
                    "--data", str(sim_dir / "data.csv"),
                    "--bundle", str(bundle_path), "--out", str(out)]) == 0
        rows = {r["label"]: r for r in read_csv(out / "ate.csv")}
        rd = rows["risk_difference"]
        assert abs(float(rd["point"]) - 0.15) < 3 * float(rd["se"])
        payload = read_json(out / "ate.json")
        assert payload["p_r"] == 1.0
        assert "provenance" in payload

    def test_missing_bundle_is_config_error(self, sim_dir, tmp_path, capsys):
        code = run(["ate", "--config", str(sim_dir / "config.json"),
                    "--data", str(sim_dir / "data.csv"),
                    "--out", str(tmp_path / "x")])
        assert code == 2
        assert "bundle" in capsys.readouterr().err

    def test_nonexistent_bundle_named(self, sim_dir, tmp_path, capsys):
        code = run(["ate", "--config", str(sim_dir / "config.json"),
                    "--data", str(sim_dir / "data.csv"),
                    "--bundle", "missing-bundle.json",
                    "--out", str(tmp_path / "x")])
        assert code == 2
        assert "missing-bundle.json" in capsys.readouterr().err

    def test_missing_data_is_data_error(self, sim_dir, tmp_path):
        code = run(["ate", "--config", str(sim_dir / "config.json"),
                    "--data", "nope.csv", "--fit", "--out", str(tmp_path / "x")])
        assert code == 3


class TestSensitivityCommand:
    def test_grid_rows(self, sim_dir, bundle_path, tmp_path):
        out = tmp_path / "sens"
        assert run(["sensitivity", "--config", str(sim_dir / "config.json"),
                    "--data", str(sim_dir / "data.csv"),
                    "--bundle", str(bundle_path), "--out", str(out),
                    "--tau-max", "0.5"]) == 0
        rows = read_csv(out / "sensitivity_prop1.csv")
        assert len(rows) == 101
        payload = read_json(out / "sensitivity.json")
        assert payload["prop2"]["tau_star"]["tau_star_closed_form"] is not None


class TestConfigValidation:
    def test_unknown_key_rejected(self, sim_dir, tmp_path, capsys):
        cfg = read_json(sim_dir / "config.json")
        cfg["extra_section"] = {}
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(cfg))
        code = run(["fit", "--config", str(bad),
                    "--data", str(sim_dir / "data.csv"),
                    "--out", str(tmp_path / "x")])
        assert code == 2
        assert "extra_section" in capsys.readouterr().err

    def test_unknown_variant_rejected(self, sim_dir, tmp_path):
        code = run(["rerun", "--config", str(sim_dir / "config.json"),
                    "--data", str(sim_dir / "data.csv"),
                    "--out", str(tmp_path / "x"), "--variants", "bogus"])
        assert code == 2


class TestRerun:
    def test_empty_variant_list_is_baseline(self, sim_dir, tmp_path):
        out = tmp_path / "rr"
        assert run(["rerun", "--config", str(sim_dir / "config.json"),
                    "--data", str(sim_dir / "data.csv"), "--out", str(out),
                    "--variants", ""]) == 0
        rows = read_csv(out / "comparison.csv")
        assert [r["variant"] for r in rows] == ["baseline"]

    def test_suspicious_exclusion_noop_on_clean_data(self, sim_dir, tmp_path):
        out = tmp_path / "rr2"
        assert run(["rerun", "--config", str(sim_dir / "config.json"),
                    "--data", str(sim_dir / "data.csv"), "--out", str(out),
                    "--variants", "baseline,suspicious-excluded"]) == 0
        rows = read_csv(out / "comparison.csv")
        assert rows[0]["point"] == rows[1]["point"]
        assert rows[1]["excluded_suspicious"] == "0"

    def test_hesitant_inclusion_attenuates(self, tmp_path):
        sim_out = tmp_path / "two"
        assert run(["simulate", "--preset", "twostratum", "--n", "40000",
                    "--seed", "3", "--out", str(sim_out)]) == 0
        out = tmp_path / "rr3"
        assert run(["rerun", "--config", str(sim_out / "config.json"),
                    "--data", str(sim_out / "data.csv"), "--out", str(out),
                    "--variants", "baseline,hesitant-included"]) == 0
        rows = {r["variant"]: float(r["point"]) for r in
                read_csv(out / "comparison.csv")}
        assert rows["hesitant-included"] < rows["baseline"] - 0.02

    def test_nonresponse_inclusion_variant_runs(self, sim_dir, tmp_path):
        out = tmp_path / "rr4"
        assert run(["rerun", "--config", str(sim_dir / "config.json"),
                    "--data", str(sim_dir / "data.csv"), "--out", str(out),
                    "--variants", "baseline,hesitancy-nonresponse-included"]) == 0
        assert len(read_csv(out / "comparison.csv")) == 2


class TestSubgroupsCommand:
    def test_discover_then_confirm(self, tmp_path):
        sim_out = tmp_path / "hte"
        assert run(["simulate", "--preset", "hte-planted", "--n", "30000",
                    "--seed", "5", "--out", str(sim_out)]) == 0
        disc = tmp_path / "disc"
        assert run(["subgroups", "--config", str(sim_out / "config.json"),
                    "--data", str(sim_out / "data.csv"), "--discover",
                    "--seed", "2", "--min-leaf", "400",
                    "--out", str(disc)]) == 0
        tree = read_json(disc / "tree.json")
        assert tree["tree"]["covariate"] == "x1"
        conf = tmp_path / "conf"
        assert run(["subgroups", "--config", str(sim_out / "config.json"),
                    "--data", str(sim_out / "data.csv"), "--confirm",
                    "--candidates", str(disc / "candidates.json"),
                    "--approve-all", "--seed", "2", "--out", str(conf)]) == 0
        rows = read_csv(conf / "confirmed.csv")
        assert len(rows) == 2
        points = sorted(float(r["point"]) for r in rows)
        assert points[0] == pytest.approx(0.1, abs=0.05)
        assert points[1] == pytest.approx(0.2, abs=0.05)

    def test_grouping_mode(self, sim_dir, bundle_path, tmp_path):
        out = tmp_path / "grp"
        assert run(["subgroups", "--config", str(sim_dir / "config.json"),
                    "--data", str(sim_dir / "data.csv"),
                    "--bundle", str(bundle_path), "--grouping", "x1",
                    "--out", str(out)]) == 0
        rows = read_csv(out / "subgroups.csv")
        assert len(rows) == 2


class TestMediateCommand:
    def test_mediate_runs(self, tmp_path):
        sim_out = tmp_path / "m"
        assert run(["simulate", "--preset", "dgp2", "--n", "15000",
                    "--seed", "4", "--out", str(sim_out)]) == 0
        out = tmp_path / "med"
        assert run(["mediate", "--config", str(sim_out / "config.json"),
                    "--data", str(sim_out / "data.csv"), "--fit",
                    "--reference", "1", "--out", str(out)]) == 0
        payload = read_json(out / "mediate.json")
        dec = payload["decomposition"]
        total = dec["total"]["point"]
        parts = sum(dec[k]["point"] for k in ("ide", "iie_m1", "iie_m2", "cov"))
        assert parts == pytest.approx(total, abs=1e-12)


class TestArtifactSchemas:
    def test_emitted_artifacts_validate(self, sim_dir, bundle_path, tmp_path):
        import jsonschema

        from causalsurvey.cli import ARTIFACT_SCHEMAS

        produced = {"truth.json": sim_dir / "truth.json",
                    "bundle.json": bundle_path,
                    "ledger.json": bundle_path.parent / "ledger.json"}
        common = ["--config", str(sim_dir / "config.json"),
                  "--data", str(sim_dir / "data.csv"),
                  "--bundle", str(bundle_path)]
        for command, name in (("ate", "ate.json"),
                              ("sensitivity", "sensitivity.json"),
                              ("diagnose", "diagnostics.json")):
            out = tmp_path / command
            assert run([command, *common, "--out", str(out)]) == 0
            produced[name] = out / name
        out = tmp_path / "inc"
        assert run(["incremental", *common, "--delta-points", "5",
                    "--band-reps", "150", "--out", str(out)]) == 0
        produced["incremental.json"] = out / "incremental.json"
        for name, path in produced.items():
            jsonschema.validate(read_json(path), ARTIFACT_SCHEMAS[name])


class TestNumericalExit:
    def test_singular_beyond_ridge_is_exit_4(self, capsys):
        import numpy as np

        from causalsurvey import glm
        from causalsurvey.errors import NumericalError

        design = np.column_stack([np.ones(40), np.zeros(40)])
        target = np.r_[np.ones(30), np.zeros(10)]
        with pytest.raises(NumericalError):
            glm.fit_logistic(design, target)


class TestDiagnoseCommand:
    def test_outputs(self, sim_dir, bundle_path, tmp_path):
        out = tmp_path / "diag"
        assert run(["diagnose", "--config", str(sim_dir / "config.json"),
                    "--data", str(sim_dir / "data.csv"),
                    "--bundle", str(bundle_path), "--out", str(out)]) == 0
        rows = read_csv(out / "calibration.csv")
        by_model = {}
        for row in rows:
            by_model.setdefault(row["model"], 0)
            by_model[row["model"]] += int(row["count"])
        assert by_model["pi"] == 20000


class TestIncrementalCommand:
    def test_csv_columns(self, sim_dir, bundle_path, tmp_path):
        out = tmp_path / "inc"
        assert run(["incremental", "--config", str(sim_dir / "config.json"),
                    "--data", str(sim_dir / "data.csv"),
                    "--bundle", str(bundle_path), "--out", str(out),
                    "--delta-points", "10", "--band-reps", "200",
                    "--seed", "3"]) == 0
        rows = read_csv(out / "incremental.csv")
        assert set(rows[0]) == {"delta", "estimate", "lo_pt", "hi_pt",
                                "lo_unif", "hi_unif"}
        deltas = [float(r["delta"]) for r in rows]
        assert 0.0 in deltas and 1.0 in deltas
