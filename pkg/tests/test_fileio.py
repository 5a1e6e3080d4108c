"""Serialization round-trips, schema validation, and atomic writes."""

import json
import os

import numpy as np
import pytest

from dtrsense.confound import Link
from dtrsense.errors import ConfigError, SchemaMismatch
from dtrsense.fileio import (
    atomic_write,
    confounder_from_json,
    model_spec_from_json,
    read_panel_csv,
    read_table_csv,
    write_panel_csv,
)
from dtrsense.simlab import OneStageDgp, TwoStageDgp, gen_one_stage, gen_two_stage


class TestPanelCsv:
    @pytest.mark.parametrize("maker", [
        lambda: gen_one_stage(OneStageDgp(), 120, 3)[0],
        lambda: gen_two_stage(TwoStageDgp(), 120, 3)[0],
    ])
    def test_round_trip_identical(self, tmp_path, maker):
        panel = maker()
        path = tmp_path / "panel.csv"
        write_panel_csv(path, panel)
        loaded, ids = read_panel_csv(path)
        assert loaded.stages == panel.stages
        assert np.array_equal(loaded.y, panel.y)
        assert np.array_equal(loaded.a, panel.a)
        for name in panel.covariates:
            assert np.array_equal(loaded.column(name), panel.column(name))
        assert np.array_equal(ids, np.arange(1, 121))

    def test_rewrite_is_byte_identical(self, tmp_path):
        panel = gen_one_stage(OneStageDgp(), 50, 9)[0]
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_panel_csv(p1, panel)
        write_panel_csv(p2, panel)
        assert p1.read_bytes() == p2.read_bytes()

    def test_one_stage_header_schema(self, tmp_path):
        panel = gen_one_stage(OneStageDgp(), 5, 1)[0]
        path = tmp_path / "panel.csv"
        write_panel_csv(path, panel)
        header = path.read_text().splitlines()[0]
        assert header == "id,x1,x2,a1,y"

    def test_malformed_row_names_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("id,x1,a1,y\n1,0.5,1,2.0\n2,oops,0,1.0\n")
        with pytest.raises(SchemaMismatch, match="row 3"):
            read_panel_csv(path)

    def test_missing_treatment_columns(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("id,x1,y\n1,0.5,2.0\n")
        with pytest.raises(SchemaMismatch):
            read_panel_csv(path)

    def test_read_table(self, tmp_path):
        path = tmp_path / "tab.csv"
        path.write_text("id,sex,age\n1,1,0.5\n2,0,-0.25\n")
        table = read_table_csv(path)
        assert set(table) == {"sex", "age"}
        np.testing.assert_allclose(table["age"], [0.5, -0.25])


class TestSpecJson:
    def test_model_spec_round_trip(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text(
            json.dumps(
                {
                    "schema_version": 1,
                    "stages": [
                        {"blip": ["x1"], "treatment_free": ["x1", "x2"], "propensity": ["x1"]}
                    ],
                }
            )
        )
        spec = model_spec_from_json(path)
        assert spec.stages[0].blip == ("x1",)

    def test_unknown_keys_rejected(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text(json.dumps({"schema_version": 1, "stages": [], "extra": 1}))
        with pytest.raises(ConfigError, match="extra"):
            model_spec_from_json(path)

    def test_wrong_version_rejected(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text(json.dumps({"schema_version": 2, "stages": []}))
        with pytest.raises(ConfigError, match="schema_version"):
            model_spec_from_json(path)

    def test_invalid_json_reports_line(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text('{"schema_version": 1,\n  "stages": [}')
        with pytest.raises(ConfigError, match="line 2"):
            model_spec_from_json(path)

    def test_confounder_spec_parses(self, tmp_path):
        path = tmp_path / "conf.json"
        path.write_text(
            json.dumps(
                {
                    "schema_version": 1,
                    "confounder": {"terms": ["x1", "a1"], "link": "identity"},
                    "priors": {
                        "zeta": [
                            {"mean": 0.0, "variance": 0.1},
                            {"mean": 0.3, "variance": 0.1},
                            {"mean": 0.5, "variance": 0.1},
                        ],
                        "beta_u": {"mean": 2.0, "variance": 0.1},
                    },
                }
            )
        )
        terms, link, prior = confounder_from_json(path)
        assert terms == ("x1", "a1")
        assert link is Link.IDENTITY
        assert prior.beta_u.mean == 2.0

    def test_zeta_length_validated(self, tmp_path):
        path = tmp_path / "conf.json"
        path.write_text(
            json.dumps(
                {
                    "schema_version": 1,
                    "confounder": {"terms": ["x1"], "link": "logit"},
                    "priors": {
                        "zeta": [{"mean": 0.0, "variance": 0.1}],
                        "beta_u": {"mean": 0.0, "variance": 0.1},
                    },
                }
            )
        )
        with pytest.raises(ConfigError, match="zeta"):
            confounder_from_json(path)


class TestAtomicWrite:
    def test_failure_leaves_no_target_or_temp(self, tmp_path, monkeypatch):
        target = tmp_path / "out.txt"

        def boom(src, dst):
            raise OSError("interrupted")

        monkeypatch.setattr(os, "replace", boom)
        with pytest.raises(OSError):
            atomic_write(target, "data")
        assert not target.exists()
        assert list(tmp_path.iterdir()) == []

    def test_success_writes_content(self, tmp_path):
        target = tmp_path / "out.txt"
        atomic_write(target, "hello\n")
        assert target.read_text() == "hello\n"
        assert list(tmp_path.iterdir()) == [target]
