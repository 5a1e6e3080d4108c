"""Command-line interface tests: schemas, determinism, exit codes."""

import json

import pytest

from dtrsense.cli import main
from dtrsense.fileio import read_panel_csv


def write_model_spec(path):
    path.write_text(
        json.dumps(
            {
                "schema_version": 1,
                "stages": [
                    {
                        "blip": ["x1", "x2"],
                        "treatment_free": ["x1", "x2"],
                        "propensity": ["x1", "x2"],
                    }
                ],
            }
        )
    )


def write_confounder(path, beta_u_mean=2.0, variance=0.1):
    path.write_text(
        json.dumps(
            {
                "schema_version": 1,
                "confounder": {"terms": ["x1", "x2", "a1"], "link": "identity"},
                "priors": {
                    "zeta": [
                        {"mean": -0.26, "variance": variance},
                        {"mean": 0.22, "variance": variance},
                        {"mean": -0.36, "variance": variance},
                        {"mean": 0.53, "variance": variance},
                    ],
                    "beta_u": {"mean": beta_u_mean, "variance": variance},
                },
            }
        )
    )


class TestSimulate:
    def test_writes_expected_schema(self, tmp_path):
        out = tmp_path / "panel.csv"
        code = main(
            ["simulate", "--dgp", "one-stage", "--n", "1000", "--seed", "7", "--out", str(out)]
        )
        assert code == 0
        text = out.read_text().splitlines()
        assert text[0] == "id,x1,x2,a1,y"
        assert len(text) == 1001

    def test_repeat_is_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        argv = ["simulate", "--dgp", "two-stage", "--n", "200", "--seed", "3", "--out"]
        assert main(argv + [str(a)]) == 0
        assert main(argv + [str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_zero_n_is_config_error(self, tmp_path):
        code = main(
            ["simulate", "--dgp", "one-stage", "--n", "0", "--seed", "1",
             "--out", str(tmp_path / "x.csv")]
        )
        assert code == 2

    def test_emit_latent(self, tmp_path):
        out, lat = tmp_path / "p.csv", tmp_path / "u.csv"
        code = main(
            ["simulate", "--dgp", "one-stage", "--n", "50", "--seed", "2",
             "--out", str(out), "--emit-latent", str(lat)]
        )
        assert code == 0
        assert lat.read_text().splitlines()[0] == "id,u"
        panel_text = out.read_text()
        assert "u" not in panel_text.splitlines()[0].split(",")

    def test_dgp_config_overrides(self, tmp_path):
        cfg = tmp_path / "dgp.json"
        cfg.write_text(json.dumps({"schema_version": 1, "psi": [2.0, 0.0, 0.0], "beta_u": 0.0}))
        out = tmp_path / "p.csv"
        code = main(
            ["simulate", "--dgp", "one-stage", "--n", "100", "--seed", "2",
             "--dgp-config", str(cfg), "--out", str(out)]
        )
        assert code == 0

    def test_unknown_dgp_key_rejected(self, tmp_path):
        cfg = tmp_path / "dgp.json"
        cfg.write_text(json.dumps({"schema_version": 1, "nope": 1.0}))
        code = main(
            ["simulate", "--dgp", "one-stage", "--n", "10", "--seed", "2",
             "--dgp-config", str(cfg), "--out", str(tmp_path / "p.csv")]
        )
        assert code == 2


class TestSensa:
    @pytest.fixture()
    def panel_path(self, tmp_path):
        out = tmp_path / "panel.csv"
        main(["simulate", "--dgp", "one-stage", "--n", "250", "--seed", "5", "--out", str(out)])
        return out

    def test_outputs_and_flag(self, tmp_path, panel_path, capsys):
        model, conf = tmp_path / "model.json", tmp_path / "conf.json"
        write_model_spec(model)
        write_confounder(conf, beta_u_mean=0.0, variance=0.0)
        prefix = tmp_path / "out" / "sensa"
        code = main(
            ["sensa", "--panel", str(panel_path), "--model", str(model),
             "--confounder", str(conf), "--B", "60", "--seed", "1",
             "--out-prefix", str(prefix)]
        )
        assert code == 0
        printed = capsys.readouterr().out
        assert "no-confounding check" in printed
        table = (tmp_path / "out" / "sensa.csv").read_text().splitlines()
        assert table[0] == "stage,coefficient,unadjusted,adjusted,ci_low,ci_high"
        assert len(table) == 4
        bundle = json.loads((tmp_path / "out" / "sensa.json").read_text())
        assert bundle["config"]["B"] == 60
        # degenerate zero prior: adjusted tracks unadjusted up to bootstrap noise
        rows = [line.split(",") for line in table[1:]]
        for row in rows:
            assert abs(float(row[2]) - float(row[3])) < 0.15

    def test_numeric_payload_reproducible(self, tmp_path, panel_path):
        model, conf = tmp_path / "model.json", tmp_path / "conf.json"
        write_model_spec(model)
        write_confounder(conf)
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        for prefix in (out1, out2):
            code = main(
                ["sensa", "--panel", str(panel_path), "--model", str(model),
                 "--confounder", str(conf), "--B", "60", "--seed", "9",
                 "--out-prefix", str(prefix)]
            )
            assert code == 0
        assert (tmp_path / "r1.csv").read_bytes() == (tmp_path / "r2.csv").read_bytes()
        b1 = json.loads((tmp_path / "r1.json").read_text())
        b2 = json.loads((tmp_path / "r2.json").read_text())
        assert b1["results"] == b2["results"]

    def test_malformed_csv_is_data_error(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("id,x1,x2,a1,y\n1,0.1,0.2,1,na\n")
        model, conf = tmp_path / "model.json", tmp_path / "conf.json"
        write_model_spec(model)
        write_confounder(conf)
        code = main(
            ["sensa", "--panel", str(bad), "--model", str(model),
             "--confounder", str(conf), "--B", "60", "--seed", "1",
             "--out-prefix", str(tmp_path / "o")]
        )
        assert code == 3

    def test_bad_spec_is_config_error(self, tmp_path, panel_path):
        model, conf = tmp_path / "model.json", tmp_path / "conf.json"
        model.write_text(json.dumps({"schema_version": 1}))
        write_confounder(conf)
        code = main(
            ["sensa", "--panel", str(panel_path), "--model", str(model),
             "--confounder", str(conf), "--B", "60", "--seed", "1",
             "--out-prefix", str(tmp_path / "o")]
        )
        assert code == 2


class TestStudy:
    def test_tiny_study_outputs(self, tmp_path):
        out = tmp_path / "study"
        code = main(
            ["study", "--dgp", "one-stage", "--scenarios", "unadjusted,narrow-centered",
             "--reps", "3", "--B", "50", "--n", "150", "--seed", "1",
             "--out-dir", str(out)]
        )
        assert code == 0
        metrics = (out / "metrics.csv").read_text().splitlines()
        assert metrics[0].startswith("scenario,stage,coefficient,true_value,rmse")
        assert len(metrics) == 1 + 2 * 3
        assert (out / "estimates_unadjusted.csv").exists()
        assert (out / "estimates_narrow-centered.csv").exists()
        bundle = json.loads((out / "bundle.json").read_text())
        assert bundle["results"]["unadjusted"]["reps_used"] == 3

    def test_thread_invariance(self, tmp_path):
        outs = []
        for threads, tag in (("1", "t1"), ("2", "t2")):
            out = tmp_path / tag
            code = main(
                ["study", "--dgp", "one-stage", "--scenarios", "unadjusted",
                 "--reps", "4", "--B", "50", "--n", "150", "--seed", "2",
                 "--threads", threads, "--out-dir", str(out)]
            )
            assert code == 0
            outs.append(out)
        e1 = (outs[0] / "estimates_unadjusted.csv").read_bytes()
        e2 = (outs[1] / "estimates_unadjusted.csv").read_bytes()
        assert e1 == e2
        m1 = (outs[0] / "metrics.csv").read_bytes()
        m2 = (outs[1] / "metrics.csv").read_bytes()
        assert m1 == m2

    def test_bad_scenario_name(self, tmp_path):
        code = main(
            ["study", "--dgp", "one-stage", "--scenarios", "bogus",
             "--reps", "2", "--B", "50", "--n", "100", "--seed", "1",
             "--out-dir", str(tmp_path / "s")]
        )
        assert code == 2


class TestPlasmodeCommand:
    def test_generates_sets(self, tmp_path):
        cov = tmp_path / "cov.csv"
        cov.write_text(
            "id,sex,age,phq,a1\n"
            + "\n".join(
                f"{i},{i % 2},{(i % 7) / 7:.3f},{(i % 5) / 5:.3f},{(i // 2) % 2}"
                for i in range(1, 61)
            )
            + "\n"
        )
        om = tmp_path / "om.json"
        om.write_text(
            json.dumps(
                {
                    "schema_version": 1,
                    "treatment": "a1",
                    "treatment_free": ["sex", "age", "phq"],
                    "blip": ["sex", "phq"],
                    "beta": [0.5, -0.3, 0.2, -0.4],
                    "psi": [1.0, -0.5, 0.2],
                    "beta_u": -1.0,
                    "confounder": {
                        "terms": ["sex", "a1"],
                        "link": "logit",
                        "zeta": [-1.0, 0.3, 0.8],
                    },
                }
            )
        )
        out = tmp_path / "sets"
        code = main(
            ["plasmode", "--covariates", str(cov), "--outcome-model", str(om),
             "--n-sets", "3", "--seed", "4", "--out-dir", str(out)]
        )
        assert code == 0
        files = sorted(p.name for p in out.iterdir())
        assert "plasmode_0000.csv" in files and "plasmode_0002.csv" in files
        panel, _ = read_panel_csv(out / "plasmode_0000.csv")
        assert panel.n == 60

    def test_missing_column_is_data_error(self, tmp_path):
        cov = tmp_path / "cov.csv"
        cov.write_text("id,sex,a1\n1,0,1\n2,1,0\n")
        om = tmp_path / "om.json"
        om.write_text(
            json.dumps(
                {
                    "schema_version": 1,
                    "treatment": "a1",
                    "treatment_free": ["sex", "age"],
                    "blip": ["sex"],
                    "beta": [0.0, 0.0, 0.0],
                    "psi": [0.0, 0.0],
                    "beta_u": 0.0,
                    "confounder": {"terms": ["sex"], "link": "logit", "zeta": [0.0, 0.0]},
                }
            )
        )
        code = main(
            ["plasmode", "--covariates", str(cov), "--outcome-model", str(om),
             "--n-sets", "1", "--seed", "1", "--out-dir", str(tmp_path / "o")]
        )
        assert code == 3


class TestVersionFlag:
    def test_version_exits_zero(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        assert "dtrsense" in capsys.readouterr().out
