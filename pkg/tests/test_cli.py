"""Command line interface, driven in-process through ``main``.

Each test invokes ``main`` with an argv list and checks the shell-level
contract: exit codes, the ``error:`` line on stderr, ``--quiet``, and the
files left in the output directory.
"""

import json

import numpy as np
import pytest

from demandstack import (
    GroundTruth, SyntheticSpec, generate_synthetic, ingest_csv, load_model,
    load_schema,
)
from demandstack.cli import main, predict_any

SPEC_ARGS = {"n_products": 6, "weeks": 8, "noise_std": 0.5, "seed": 123}

RUN_CONFIG = {
    "seed": 3,
    "data": {"synthetic": dict(SPEC_ARGS)},
    "protocol": {"repetitions": 3, "subset_fraction": 0.8, "cv_folds": 3},
    "learners": {
        "grids": False,
        "dt": {"max_depth": 4},
        "rf": {"n_trees": 3, "tree": {"max_depth": 4}},
        "gbt": {"n_stages": 5, "tree": {"max_depth": 2}},
    },
}

RUN_ARTIFACTS = sorted(
    ["run_matrix.csv", "stats.json"]
    + [f"table{i}.{ext}" for i in (1, 2, 3, 4) for ext in ("csv", "txt")]
    + [f"model_{m}.json"
       for m in ("single_lr", "single_dt", "single_rf", "single_gbt", "stacked")]
)

FEATURE_NAMES = ["week", "price", "stock", "popularity", "seller_rating", "brand"]


def write_config(path, doc):
    path.write_text(json.dumps(doc), encoding="utf-8")
    return str(path)


def reference_dataset():
    """The dataset every config in this file generates (seed is pinned)."""
    return generate_synthetic(SyntheticSpec(truth=GroundTruth(), **SPEC_ARGS))


def load_dataset(directory, csv_name, schema_name):
    doc = json.loads((directory / schema_name).read_text(encoding="utf-8"))
    return ingest_csv(str(directory / csv_name), load_schema(doc))


@pytest.fixture(scope="module")
def weekly_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("weekly")
    cfg = write_config(out / "cfg.json", {"seed": 7, "data": {"synthetic": dict(SPEC_ARGS)}})
    assert main(["synth", "--config", cfg, "--out", str(out), "--quiet"]) == 0
    return out


@pytest.fixture(scope="module")
def sales_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sales")
    cfg = write_config(out / "cfg.json",
                       {"seed": 7, "data": {"synthetic": {**SPEC_ARGS, "sales": True}}})
    assert main(["synth", "--config", cfg, "--out", str(out), "--quiet"]) == 0
    return out


@pytest.fixture(scope="module")
def run_setup(tmp_path_factory):
    """One protocol run shared by the read-only assertions below."""
    cfg = write_config(tmp_path_factory.mktemp("runcfg") / "run.json", RUN_CONFIG)
    out = tmp_path_factory.mktemp("runout")
    assert main(["run", "--config", cfg, "--out", str(out), "--quiet"]) == 0
    return cfg, out


class TestSynth:
    def test_weekly_files_round_trip(self, weekly_dir):
        assert (weekly_dir / "weekly.csv").exists()
        assert (weekly_dir / "weekly_schema.json").exists()
        d = load_dataset(weekly_dir, "weekly.csv", "weekly_schema.json")
        assert d.equals(reference_dataset())

    def test_sales_mode_file_set(self, sales_dir):
        for name in ("sales.csv", "views_purchase.csv", "views_abandon.csv",
                     "sales_schema.json", "views_schema.json"):
            assert (sales_dir / name).exists(), name

    def test_sales_row_count_matches_demand(self, sales_dir):
        sales = load_dataset(sales_dir, "sales.csv", "sales_schema.json")
        assert sales.n == int(reference_dataset().column("demand").sum())

    def test_master_seed_feeds_generator(self, tmp_path, capsys):
        # no explicit data seed here, so --seed must change the bytes
        spec = {k: v for k, v in SPEC_ARGS.items() if k != "seed"}
        cfg = write_config(tmp_path / "cfg.json", {"data": {"synthetic": spec}})
        a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
        for out, seed in ((a, "1"), (b, "2"), (c, "1")):
            assert main(["synth", "--config", cfg, "--seed", seed,
                         "--out", str(out), "--quiet"]) == 0
        first = (a / "weekly.csv").read_bytes()
        assert first != (b / "weekly.csv").read_bytes()
        assert first == (c / "weekly.csv").read_bytes()

    def test_quiet_silences_stdout(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "cfg.json",
                           {"data": {"synthetic": {"n_products": 2, "weeks": 2}}})
        assert main(["synth", "--config", cfg, "--out", str(tmp_path), "--quiet"]) == 0
        assert capsys.readouterr().out == ""
        assert main(["synth", "--config", cfg, "--out", str(tmp_path)]) == 0
        assert "weekly rows" in capsys.readouterr().out

    def test_missing_config_is_an_error(self, capsys):
        assert main(["synth"]) == 1
        assert capsys.readouterr().err.startswith("error: ")

    def test_nonexistent_config_path(self, tmp_path, capsys):
        assert main(["synth", "--config", str(tmp_path / "nope.json")]) == 1
        assert "error: " in capsys.readouterr().err


class TestPreprocess:
    def preprocess(self, sales_dir, out, extra=None, seed=7):
        pp = {
            "views": [str(sales_dir / "views_purchase.csv"),
                      str(sales_dir / "views_abandon.csv")],
            "views_schema": str(sales_dir / "views_schema.json"),
            "max_demand": 10 ** 6,
        }
        pp.update(extra or {})
        cfg = write_config(out / "cfg.json", {
            "seed": seed,
            "data": {"csv": str(sales_dir / "sales.csv"),
                     "schema": str(sales_dir / "sales_schema.json")},
            "preprocess": pp,
        })
        return main(["preprocess", "--config", cfg, "--out", str(out), "--quiet"])

    def test_chain_rebuilds_weekly_rows(self, sales_dir, tmp_path):
        assert self.preprocess(sales_dir, tmp_path) == 0
        got = load_dataset(tmp_path, "processed.csv", "processed_schema.json")
        ref = reference_dataset()
        sold = ref.column("demand") > 0  # zero-demand weeks produce no sale rows

        assert got.n == int(sold.sum())
        assert got.schema_column("demand").role.value == "target"
        assert np.array_equal(got.column("demand"), ref.column("demand")[sold])
        assert np.array_equal(got.column("popularity"), ref.column("popularity")[sold])
        for name in ("week", "price", "stock", "seller_rating"):
            assert np.allclose(got.column(name), ref.column(name)[sold], rtol=1e-12)
        got_brands = [got.label_of("brand", c) for c in got.column("brand")]
        ref_brands = [ref.label_of("brand", c) for c in ref.column("brand")[sold]]
        assert got_brands == ref_brands

    def test_summary_reports_pipeline(self, sales_dir, tmp_path):
        assert self.preprocess(sales_dir, tmp_path) == 0
        report = (tmp_path / "preprocess_summary.txt").read_text(encoding="utf-8")
        assert "popularity derived from 2 view tables" in report
        assert "weekly rows after aggregation" in report
        assert "outlier removal" in report

    def test_missing_cells_are_filled(self, tmp_path):
        synth = write_config(tmp_path / "synth.json", {
            "seed": 7,
            "data": {"synthetic": {**SPEC_ARGS, "sales": True, "missing_rate": 0.25}},
        })
        assert main(["synth", "--config", synth, "--out", str(tmp_path), "--quiet"]) == 0
        assert self.preprocess(tmp_path, tmp_path) == 0
        got = load_dataset(tmp_path, "processed.csv", "processed_schema.json")
        for c in got.schema:
            assert not got.missing_mask(c.name).any(), c.name
        # demand counts group rows, so filling never disturbs it
        ref = reference_dataset()
        sold = ref.column("demand") > 0
        assert np.array_equal(got.column("demand"), ref.column("demand")[sold])

    def test_views_without_schema(self, sales_dir, tmp_path, capsys):
        pp_dir = tmp_path / "x"
        pp_dir.mkdir()
        cfg = write_config(pp_dir / "cfg.json", {
            "data": {"csv": str(sales_dir / "sales.csv"),
                     "schema": str(sales_dir / "sales_schema.json")},
            "preprocess": {"views": [str(sales_dir / "views_purchase.csv")]},
        })
        assert main(["preprocess", "--config", cfg, "--out", str(pp_dir)]) == 1
        assert "views_schema" in capsys.readouterr().err

    def test_unknown_preprocess_key(self, sales_dir, tmp_path, capsys):
        assert self.preprocess(sales_dir, tmp_path, extra={"bogus": 1}) == 1
        err = capsys.readouterr().err
        assert "unknown keys" in err and "bogus" in err

    def test_csv_without_schema_key(self, sales_dir, tmp_path, capsys):
        cfg = write_config(tmp_path / "cfg.json",
                           {"data": {"csv": str(sales_dir / "sales.csv")}})
        assert main(["preprocess", "--config", cfg, "--out", str(tmp_path)]) == 1
        assert "'synthetic' or 'csv'" in capsys.readouterr().err


class TestRun:
    def test_artifact_set(self, run_setup):
        _, out = run_setup
        for name in RUN_ARTIFACTS:
            assert (out / name).exists(), name
        assert not list(out.glob("*.tmp*"))

    def test_run_matrix_shape(self, run_setup):
        _, out = run_setup
        lines = (out / "run_matrix.csv").read_text(encoding="utf-8").splitlines()
        names = lines[0].split(",")
        # 4 sweep combos, 4 singles, 6 pairs, 4 triples, one shared best triple
        assert len(names) == 18
        assert len(set(names)) == 18
        assert "single:RF" in names
        assert "sg:LR+RF+GBT>LR" in names
        assert len(lines) == 1 + RUN_CONFIG["protocol"]["repetitions"]
        for line in lines[1:]:
            values = [float(v) for v in line.split(",")]
            assert all(v > 0 and np.isfinite(v) for v in values)

    def test_table_row_counts(self, run_setup):
        _, out = run_setup
        for stem, rows in (("table1", 4), ("table2", 5), ("table3", 6), ("table4", 4)):
            lines = (out / f"{stem}.csv").read_text(encoding="utf-8").splitlines()
            assert lines[0] == "model,rmse_mean,rmse_std,rmse_min"
            assert len(lines) == 1 + rows, stem
            text = (out / f"{stem}.txt").read_text(encoding="utf-8").splitlines()
            assert len(text) == 3 + rows  # title, rule, header

    def test_table2_lists_singles_then_stack(self, run_setup):
        _, out = run_setup
        lines = (out / "table2.csv").read_text(encoding="utf-8").splitlines()
        assert [l.split(",")[0] for l in lines[1:]] == ["DT", "GBT", "RF", "LR", "SG(LR)"]

    def test_stats_json_layout(self, run_setup):
        _, out = run_setup
        doc = json.loads((out / "stats.json").read_text(encoding="utf-8"))
        assert list(doc) == ["seed", "rows", "repetitions", "alpha", "entries",
                             "tables", "rf_vs_stacked_t_test"]
        assert doc["seed"] == 3
        assert doc["repetitions"] == 3
        assert doc["alpha"] == 0.05
        assert len(doc["entries"]) == 18
        for stats in doc["entries"].values():
            assert set(stats) == {"rmse_mean", "rmse_std", "rmse_min"}
            assert stats["rmse_min"] <= stats["rmse_mean"]
        assert len(doc["tables"]) == 4
        for table in doc["tables"]:
            assert isinstance(table["anova"]["reject_equal_means"], bool)
            assert 0.0 <= table["anova"]["p_value"] <= 1.0
        assert isinstance(doc["rf_vs_stacked_t_test"]["reject_equal_means"], bool)

    def test_models_reload(self, run_setup):
        _, out = run_setup
        for name in RUN_ARTIFACTS:
            if not name.startswith("model_"):
                continue
            model, cols = load_model(str(out / name))
            assert [c["name"] for c in cols] == FEATURE_NAMES
            assert predict_any(model, reference_dataset()).shape == (48,)

    def test_rerun_is_byte_identical(self, run_setup, tmp_path):
        cfg, out = run_setup
        assert main(["run", "--config", cfg, "--out", str(tmp_path), "--quiet"]) == 0
        for name in RUN_ARTIFACTS:
            assert (tmp_path / name).read_bytes() == (out / name).read_bytes(), name

    def test_seed_flag_changes_results(self, run_setup, tmp_path):
        cfg, out = run_setup
        assert main(["run", "--config", cfg, "--seed", "99",
                     "--out", str(tmp_path), "--quiet"]) == 0
        assert (tmp_path / "run_matrix.csv").read_bytes() != (out / "run_matrix.csv").read_bytes()
        assert json.loads((tmp_path / "stats.json").read_text(encoding="utf-8"))["seed"] == 99

    def test_all_tables_disabled(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "cfg.json", {
            **RUN_CONFIG,
            "tables": {"level2_sweep": False, "singles": False,
                       "binaries": False, "triples": False},
        })
        assert main(["run", "--config", cfg, "--out", str(tmp_path)]) == 1
        assert "every table is disabled" in capsys.readouterr().err

    def test_unknown_protocol_key(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "cfg.json",
                           {**RUN_CONFIG, "protocol": {"reps": 3}})
        assert main(["run", "--config", cfg, "--out", str(tmp_path)]) == 1
        assert "protocol" in capsys.readouterr().err

    def test_run_on_preprocessed_output(self, sales_dir, tmp_path):
        # group means carry float rounding the raw generator never produces,
        # so the whole learner set has to survive aggregated data too
        pp = write_config(tmp_path / "pp.json", {
            "data": {"csv": str(sales_dir / "sales.csv"),
                     "schema": str(sales_dir / "sales_schema.json")},
            "preprocess": {"views": [str(sales_dir / "views_purchase.csv"),
                                     str(sales_dir / "views_abandon.csv")],
                           "views_schema": str(sales_dir / "views_schema.json"),
                           "max_demand": 10 ** 6},
        })
        assert main(["preprocess", "--config", pp, "--out", str(tmp_path), "--quiet"]) == 0
        run_cfg = write_config(tmp_path / "run.json", {
            **{k: v for k, v in RUN_CONFIG.items() if k != "data"},
            "data": {"csv": str(tmp_path / "processed.csv"),
                     "schema": str(tmp_path / "processed_schema.json")},
        })
        report = tmp_path / "report"
        assert main(["run", "--config", run_cfg, "--out", str(report), "--quiet"]) == 0
        doc = json.loads((report / "stats.json").read_text(encoding="utf-8"))
        assert len(doc["entries"]) == 18


class TestPredict:
    def test_round_trip_matches_in_memory(self, run_setup, weekly_dir, tmp_path):
        _, out = run_setup
        dst = tmp_path / "preds.csv"
        assert main(["predict", "--model", str(out / "model_single_lr.json"),
                     "--input", str(weekly_dir / "weekly.csv"),
                     "--out", str(dst), "--quiet"]) == 0
        lines = dst.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "prediction"
        got = np.array([float(v) for v in lines[1:]])
        model, _ = load_model(str(out / "model_single_lr.json"))
        # repr round trip is exact, so the file must match to the bit
        assert np.array_equal(got, predict_any(model, reference_dataset()))

    def test_stacked_model_predicts(self, run_setup, weekly_dir, tmp_path):
        _, out = run_setup
        dst = tmp_path / "preds.csv"
        assert main(["predict", "--model", str(out / "model_stacked.json"),
                     "--input", str(weekly_dir / "weekly.csv"),
                     "--out", str(dst), "--quiet"]) == 0
        assert len(dst.read_text(encoding="utf-8").splitlines()) == 49

    def test_default_output_name(self, run_setup, weekly_dir, tmp_path, monkeypatch):
        _, out = run_setup
        monkeypatch.chdir(tmp_path)
        assert main(["predict", "--model", str(out / "model_single_dt.json"),
                     "--input", str(weekly_dir / "weekly.csv"), "--quiet"]) == 0
        assert (tmp_path / "predictions.csv").exists()

    def test_missing_required_column(self, run_setup, tmp_path, capsys):
        _, out = run_setup
        bad = tmp_path / "bad.csv"
        bad.write_text("price,stock\n9.5,3.0\n", encoding="utf-8")
        assert main(["predict", "--model", str(out / "model_single_lr.json"),
                     "--input", str(bad), "--out", str(tmp_path / "p.csv")]) == 1
        err = capsys.readouterr().err
        assert "lacks required columns" in err and "brand" in err

    def test_header_only_input(self, run_setup, tmp_path):
        _, out = run_setup
        src = tmp_path / "empty.csv"
        src.write_text(",".join(FEATURE_NAMES) + "\n", encoding="utf-8")
        dst = tmp_path / "p.csv"
        assert main(["predict", "--model", str(out / "model_single_lr.json"),
                     "--input", str(src), "--out", str(dst), "--quiet"]) == 0
        assert dst.read_text(encoding="utf-8") == "prediction\n"

    def test_completely_empty_input(self, run_setup, tmp_path, capsys):
        _, out = run_setup
        src = tmp_path / "none.csv"
        src.write_text("", encoding="utf-8")
        assert main(["predict", "--model", str(out / "model_single_lr.json"),
                     "--input", str(src)]) == 1
        assert "expected a header row" in capsys.readouterr().err

    def test_model_flag_required(self, capsys):
        assert main(["predict", "--input", "whatever.csv"]) == 1
        assert "needs --model and --input" in capsys.readouterr().err

    def test_model_without_layout(self, run_setup, tmp_path, capsys):
        from demandstack import save_model
        _, out = run_setup
        model, _ = load_model(str(out / "model_single_lr.json"))
        bare = tmp_path / "bare.json"
        save_model(model, str(bare), None)
        assert main(["predict", "--model", str(bare),
                     "--input", str(tmp_path / "x.csv")]) == 1
        assert "no input column layout" in capsys.readouterr().err
