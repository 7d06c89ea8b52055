"""Command-line experiment harness.

Subcommands:

* ``synth``       write a seeded synthetic dataset (weekly, or sale-level
                  plus view-event tables) with its schema file
* ``preprocess``  ingest sale-level CSV and run the cleaning pipeline down
                  to one weekly row per (product, year, week)
* ``run``         split the data, execute the repeated-subset protocol over
                  the configured model combinations, and write the four
                  report tables, the run matrix, significance verdicts, and
                  the fitted models
* ``predict``     apply a saved model file to a CSV of feature rows

All randomness flows from one master seed (config ``seed``, overridable
with ``--seed``); subsystem seeds are derived from it by labeled hashing,
so reruns with the same config are byte-identical.  Output files are
written to a temp name and renamed, never left half-written.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from .dataset import (
    Column, ColumnKind, ColumnRole, Dataset, GroundTruth, SyntheticSpec,
    aggregate_weekly, derive_popularity, drop_sparse, fill_missing,
    generate_synthetic, generate_synthetic_sales, ingest_csv, load_schema,
    remove_outliers, split, write_csv,
)
from .ensemble import (
    ForestConfig, ForestModel, GbtConfig, GbtModel, predict_forest, predict_gbt,
)
from .errors import DataError, DemandStackError
from .evalstat import SingleEntry, StackEntry, anova, run_protocol, t_test
from .linear import ElasticNetConfig, LinearModel, predict_linear
from .seeding import derive_seed
from .serialize import atomic_write_text, load_model, save_model
from .stacking import (
    LearnerKind, LearnerSpec, StackedModel, train_first_level, train_stacked,
    with_default_grid,
)
from .tree import CategoricalNode, Leaf, NumericNode, TreeConfig, predict_tree

_KIND_ORDER = ["DT", "GBT", "RF", "LR"]
_PAIRS = [("GBT", "DT"), ("GBT", "LR"), ("LR", "DT"), ("DT", "RF"),
          ("GBT", "RF"), ("LR", "RF")]
_TRIPLES = [("DT", "RF", "GBT"), ("RF", "DT", "LR"), ("GBT", "LR", "DT"),
            ("LR", "RF", "GBT")]
_BEST_TRIPLE = ("LR", "RF", "GBT")


# ---------------------------------------------------------------------------
# config handling
# ---------------------------------------------------------------------------


def _load_config(path) -> dict:
    if path is None:
        raise DataError("this command needs --config")
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _check_keys(obj: dict, allowed, where: str) -> None:
    unknown = set(obj) - set(allowed)
    if unknown:
        raise DataError(f"unknown keys {sorted(unknown)} in {where}")


def _tree_config(obj: dict | None, where: str) -> TreeConfig:
    obj = obj or {}
    _check_keys(obj, ("max_depth", "min_samples_leaf", "variance_threshold",
                      "feature_subset_size"), where)
    return TreeConfig(**obj)


def _learner_configs(cfg: dict, master_seed: int):
    learners = cfg.get("learners", {})
    _check_keys(learners, ("lr", "dt", "rf", "gbt", "grids"), "learners")
    lr_obj = dict(learners.get("lr", {}))
    _check_keys(lr_obj, ("lam", "l1_ratio", "fit_intercept", "standardize",
                         "max_iters", "tol"), "learners.lr")
    lr = ElasticNetConfig(**lr_obj)

    dt = _tree_config(learners.get("dt"), "learners.dt")

    rf_obj = dict(learners.get("rf", {}))
    _check_keys(rf_obj, ("n_trees", "seed", "feature_subset_size", "tree"), "learners.rf")
    rf = ForestConfig(
        n_trees=rf_obj.get("n_trees", 20),
        seed=rf_obj.get("seed", derive_seed(master_seed, "rf")),
        feature_subset_size=rf_obj.get("feature_subset_size"),
        tree=_tree_config(rf_obj.get("tree"), "learners.rf.tree"),
    )

    gbt_obj = dict(learners.get("gbt", {}))
    _check_keys(gbt_obj, ("n_stages", "learning_rate", "seed", "tree"), "learners.gbt")
    gbt = GbtConfig(
        n_stages=gbt_obj.get("n_stages", 100),
        learning_rate=gbt_obj.get("learning_rate", 0.1),
        seed=gbt_obj.get("seed", derive_seed(master_seed, "gbt")),
        tree=_tree_config(gbt_obj.get("tree", {"max_depth": 3}), "learners.gbt.tree"),
    )
    return {"LR": lr, "DT": dt, "RF": rf, "GBT": gbt}, learners.get("grids", True)


def _synthetic_spec(obj: dict, master_seed: int) -> SyntheticSpec:
    _check_keys(obj, ("n_products", "weeks", "noise_std", "seed", "quantize",
                      "truth", "sales", "missing_rate"), "data.synthetic")
    truth_obj = dict(obj.get("truth", {}))
    _check_keys(truth_obj, ("intercept", "price", "stock", "popularity", "seller_rating",
                            "week", "price_popularity", "brand_effects"), "data.synthetic.truth")
    if "brand_effects" in truth_obj:
        truth_obj["brand_effects"] = tuple(truth_obj["brand_effects"])
    return SyntheticSpec(
        n_products=obj.get("n_products", 50),
        weeks=obj.get("weeks", 40),
        noise_std=obj.get("noise_std", 1.0),
        seed=obj.get("seed", derive_seed(master_seed, "synth")),
        quantize=obj.get("quantize", True),
        truth=GroundTruth(**truth_obj),
    )


def _schema_to_config(schema) -> dict:
    return {"columns": [{"name": c.name, "kind": c.kind.value, "role": c.role.value}
                        for c in schema]}


def _load_data(cfg: dict, master_seed: int) -> Dataset:
    data = cfg.get("data", {})
    _check_keys(data, ("synthetic", "csv", "schema"), "data")
    if "synthetic" in data:
        return generate_synthetic(_synthetic_spec(data["synthetic"], master_seed))
    if "csv" not in data or "schema" not in data:
        raise DataError("config data section needs either 'synthetic' or 'csv' plus 'schema'")
    with open(data["schema"], "r", encoding="utf-8") as fh:
        schema = load_schema(json.load(fh))
    return ingest_csv(data["csv"], schema)


# ---------------------------------------------------------------------------
# model entry construction
# ---------------------------------------------------------------------------


def _combo_name(first, second) -> str:
    return "sg:" + "+".join(first) + ">" + second


def _build_entries(cfg: dict, configs: dict, use_grids: bool):
    """Returns (ordered entries, table layouts as (title, [(display, entry_name)]))."""
    tables_cfg = cfg.get("tables", {})
    _check_keys(tables_cfg, ("level2_sweep", "singles", "binaries", "triples"), "tables")
    want = {
        "level2_sweep": tables_cfg.get("level2_sweep", True),
        "singles": tables_cfg.get("singles", True),
        "binaries": tables_cfg.get("binaries", True),
        "triples": tables_cfg.get("triples", True),
    }

    def first_spec(kind: str) -> LearnerSpec:
        spec = LearnerSpec(LearnerKind[kind], configs[kind])
        return with_default_grid(spec) if use_grids else spec

    def combiner_spec(kind: str) -> LearnerSpec:
        cfg_k = configs[kind]
        if kind == "LR":
            # meta-features go into the combiner unstandardized
            cfg_k = replace(cfg_k, standardize=False)
        return LearnerSpec(LearnerKind[kind], cfg_k)

    entries: dict[str, object] = {}
    tables: list[tuple[str, list[tuple[str, str]]]] = []

    if want["level2_sweep"]:
        rows = []
        for kind in _KIND_ORDER:
            name = _combo_name(_KIND_ORDER, kind)
            entries.setdefault(name, StackEntry(
                name, tuple(first_spec(k) for k in _KIND_ORDER), combiner_spec(kind)))
            rows.append((kind, name))
        tables.append(("Second-level learner sweep (first level: DT+GBT+RF+LR)", rows))

    best_name = _combo_name(_BEST_TRIPLE, "LR")
    if want["singles"]:
        rows = []
        for kind in _KIND_ORDER:
            name = f"single:{kind}"
            entries.setdefault(name, SingleEntry(name, LearnerSpec(LearnerKind[kind], configs[kind])))
            rows.append((kind, name))
        entries.setdefault(best_name, StackEntry(
            best_name, tuple(first_spec(k) for k in _BEST_TRIPLE), combiner_spec("LR")))
        rows.append(("SG(LR)", best_name))
        tables.append(("Single learners vs stacked generalization", rows))

    if want["binaries"]:
        rows = []
        for pair in _PAIRS:
            name = _combo_name(pair, "LR")
            entries.setdefault(name, StackEntry(
                name, tuple(first_spec(k) for k in pair), combiner_spec("LR")))
            rows.append(("+".join(pair), name))
        tables.append(("Stacked pairs (LR combiner)", rows))

    if want["triples"]:
        rows = []
        for triple in _TRIPLES:
            name = _combo_name(triple, "LR")
            entries.setdefault(name, StackEntry(
                name, tuple(first_spec(k) for k in triple), combiner_spec("LR")))
            rows.append(("+".join(triple), name))
        tables.append(("Stacked triples (LR combiner)", rows))

    if not entries:
        raise DataError("every table is disabled; nothing to run")
    return list(entries.values()), tables


def predict_any(model, d: Dataset, indices=None) -> np.ndarray:
    if isinstance(model, LinearModel):
        return predict_linear(model, d, indices)
    if isinstance(model, (Leaf, NumericNode, CategoricalNode)):
        return predict_tree(model, d, indices)
    if isinstance(model, ForestModel):
        return predict_forest(model, d, indices)
    if isinstance(model, GbtModel):
        return predict_gbt(model, d, indices)
    if isinstance(model, StackedModel):
        return model.predict(d, indices)
    raise DataError(f"cannot predict with model of type {type(model).__name__}")


# ---------------------------------------------------------------------------
# report writing
# ---------------------------------------------------------------------------


def _table_stats(matrix, rows):
    out = []
    for display, entry_name in rows:
        col = matrix.column(entry_name)
        out.append((display, float(col.mean()), float(col.std()), float(col.min())))
    return out

def _write_table(out_dir: str, stem: str, title: str, stats) -> list[str]:
    csv_lines = ["model,rmse_mean,rmse_std,rmse_min"]
    for display, mean, std, best in stats:
        csv_lines.append(f"{display},{mean!r},{std!r},{best!r}")
    atomic_write_text(os.path.join(out_dir, f"{stem}.csv"), "\n".join(csv_lines) + "\n")

    width = max(len("model"), *(len(s[0]) for s in stats))
    text = [title, "-" * len(title),
            f"{'model':<{width}}  {'mean':>10}  {'std':>10}  {'min':>10}"]
    for display, mean, std, best in stats:
        text.append(f"{display:<{width}}  {mean:>10.4f}  {std:>10.4f}  {best:>10.4f}")
    atomic_write_text(os.path.join(out_dir, f"{stem}.txt"), "\n".join(text) + "\n")
    return [f"{stem}.csv", f"{stem}.txt"]


def _anova_dict(res) -> dict:
    return {
        "f_statistic": res.f_statistic,
        "df_between": res.df_between,
        "df_within": res.df_within,
        "ms_between": res.ms_between,
        "ms_within": res.ms_within,
        "p_value": res.p_value,
        "alpha": res.alpha,
        "reject_equal_means": res.reject,
    }


def _ttest_dict(res) -> dict:
    return {
        "t_statistic": res.t_statistic,
        "df": res.df,
        "p_value": res.p_value,
        "alpha": res.alpha,
        "reject_equal_means": res.reject,
        "paired": res.paired,
    }


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _say(quiet: bool, message: str) -> None:
    if not quiet:
        print(message)


def cmd_synth(args) -> int:
    cfg = _load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    out_dir = args.out or cfg.get("out", ".")
    os.makedirs(out_dir, exist_ok=True)
    data = cfg.get("data", {})
    obj = data.get("synthetic", {})
    spec = _synthetic_spec(obj, seed)

    if obj.get("sales", False):
        sales, purchases, abandons = generate_synthetic_sales(
            spec, missing_rate=obj.get("missing_rate", 0.0))
        write_csv(sales, os.path.join(out_dir, "sales.csv"))
        write_csv(purchases, os.path.join(out_dir, "views_purchase.csv"))
        write_csv(abandons, os.path.join(out_dir, "views_abandon.csv"))
        atomic_write_text(os.path.join(out_dir, "sales_schema.json"),
                          json.dumps(_schema_to_config(sales.schema), indent=1) + "\n")
        atomic_write_text(os.path.join(out_dir, "views_schema.json"),
                          json.dumps(_schema_to_config(purchases.schema), indent=1) + "\n")
        _say(args.quiet, f"wrote {sales.n} sale rows and 2 view tables to {out_dir}")
    else:
        weekly = generate_synthetic(spec)
        write_csv(weekly, os.path.join(out_dir, "weekly.csv"))
        atomic_write_text(os.path.join(out_dir, "weekly_schema.json"),
                          json.dumps(_schema_to_config(weekly.schema), indent=1) + "\n")
        _say(args.quiet, f"wrote {weekly.n} weekly rows to {out_dir}")
    return 0


def cmd_preprocess(args) -> int:
    cfg = _load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    out_dir = args.out or cfg.get("out", ".")
    os.makedirs(out_dir, exist_ok=True)

    d = _load_data(cfg, seed)
    pp = cfg.get("preprocess", {})
    _check_keys(pp, ("numeric_fill", "categorical_fill", "sentinel", "sparse_threshold",
                     "max_demand", "aggregate", "quantity", "views", "views_schema",
                     "popularity"), "preprocess")
    report = [f"ingested rows: {d.n}", f"ingested columns: {len(d.schema)}"]

    d = drop_sparse(d, threshold=pp.get("sparse_threshold", 0.5))
    report.append(f"columns after sparsity filter: {len(d.schema)}")
    d = fill_missing(d, numeric=pp.get("numeric_fill", "mean"),
                     categorical=pp.get("categorical_fill", "mode"),
                     sentinel=pp.get("sentinel", "missing"))

    if pp.get("aggregate", True):
        d = aggregate_weekly(d, quantity=pp.get("quantity"))
        report.append(f"weekly rows after aggregation: {d.n}")

    views_paths = pp.get("views", [])
    if pp.get("popularity", True) and views_paths:
        if "views_schema" not in pp:
            raise DataError("preprocess.views needs preprocess.views_schema")
        with open(pp["views_schema"], "r", encoding="utf-8") as fh:
            views_schema = load_schema(json.load(fh))
        tables = [ingest_csv(p, views_schema) for p in views_paths]
        d = derive_popularity(d, tables)
        report.append(f"popularity derived from {len(tables)} view tables")

    before = d.n
    d = remove_outliers(d, max_demand=pp.get("max_demand", 20))
    report.append(f"rows after outlier removal (< {pp.get('max_demand', 20)}): {d.n} "
                  f"(dropped {before - d.n})")

    write_csv(d, os.path.join(out_dir, "processed.csv"))
    atomic_write_text(os.path.join(out_dir, "processed_schema.json"),
                      json.dumps(_schema_to_config(d.schema), indent=1) + "\n")
    atomic_write_text(os.path.join(out_dir, "preprocess_summary.txt"),
                      "\n".join(report) + "\n")
    _say(args.quiet, "\n".join(report))
    _say(args.quiet, f"wrote processed.csv to {out_dir}")
    return 0


def cmd_run(args) -> int:
    cfg = _load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    out_dir = args.out or cfg.get("out", ".")
    os.makedirs(out_dir, exist_ok=True)

    d = _load_data(cfg, seed)
    split_cfg = cfg.get("split", {})
    _check_keys(split_cfg, ("fractions",), "split")
    fractions = tuple(split_cfg.get("fractions", (0.5, 0.2, 0.3)))
    split_idx = split(d, fractions=fractions, seed=derive_seed(seed, "split"))

    proto = cfg.get("protocol", {})
    _check_keys(proto, ("repetitions", "subset_fraction", "cv_folds", "alpha",
                        "paired_ttest"), "protocol")
    alpha = proto.get("alpha", 0.05)

    configs, use_grids = _learner_configs(cfg, seed)
    entries, tables = _build_entries(cfg, configs, use_grids)
    _say(args.quiet, f"data: {d.n} rows; split {split_idx.train.size}/"
                     f"{split_idx.validation.size}/{split_idx.test.size}; "
                     f"{len(entries)} model entries")

    result = run_protocol(
        d, split_idx, entries,
        repetitions=proto.get("repetitions", 20),
        subset_fraction=proto.get("subset_fraction", 0.8),
        cv_k=proto.get("cv_folds", 10),
        seed=seed,
    )
    matrix = result.matrix

    written = []
    header = ",".join(matrix.names)
    body = "\n".join(",".join(repr(float(v)) for v in row) for row in matrix.values)
    atomic_write_text(os.path.join(out_dir, "run_matrix.csv"), header + "\n" + body + "\n")
    written.append("run_matrix.csv")

    stats_doc = {
        "seed": seed,
        "rows": d.n,
        "repetitions": int(matrix.values.shape[0]),
        "alpha": alpha,
        "entries": {
            name: {
                "rmse_mean": float(col.mean()),
                "rmse_std": float(col.std()),
                "rmse_min": float(col.min()),
            }
            for name, col in ((n, matrix.column(n)) for n in matrix.names)
        },
        "tables": [],
    }

    for i, (title, rows) in enumerate(tables, start=1):
        stats = _table_stats(matrix, rows)
        written.extend(_write_table(out_dir, f"table{i}", title, stats))
        groups = [matrix.column(entry_name) for _, entry_name in rows]
        table_doc = {"title": title,
                     "rows": [{"model": disp, "entry": entry} for disp, entry in rows]}
        if len(groups) >= 2:
            table_doc["anova"] = _anova_dict(anova(groups, alpha=alpha))
        stats_doc["tables"].append(table_doc)

    best_name = _combo_name(_BEST_TRIPLE, "LR")
    if "single:RF" in matrix.names and best_name in matrix.names:
        res = t_test(matrix.column("single:RF"), matrix.column(best_name),
                     alpha=alpha, paired=proto.get("paired_ttest", False))
        stats_doc["rf_vs_stacked_t_test"] = _ttest_dict(res)

    atomic_write_text(os.path.join(out_dir, "stats.json"),
                      json.dumps(stats_doc, indent=1) + "\n")
    written.append("stats.json")

    # final models on the full train (+ validation for the combiner), for predict
    input_columns = [{"name": c.name, "kind": c.kind.value} for c in d.feature_columns()]
    union = np.concatenate([split_idx.train, split_idx.validation])
    finals: dict[str, object] = {}
    final_specs = {f"single_{k.lower()}": LearnerSpec(LearnerKind[k], configs[k])
                   for k in _KIND_ORDER}
    for fname, spec in final_specs.items():
        finals[fname] = train_first_level(d, [spec], union, folds=None)[0].model
    finals["stacked"] = train_stacked(
        d,
        [with_default_grid(LearnerSpec(LearnerKind[k], configs[k])) if use_grids
         else LearnerSpec(LearnerKind[k], configs[k]) for k in _BEST_TRIPLE],
        LearnerSpec(LearnerKind.LR, replace(configs["LR"], standardize=False)),
        split_idx.train, split_idx.validation,
        cv_k=proto.get("cv_folds", 10), cv_seed=derive_seed(seed, "final-folds"),
    )
    for fname, model in finals.items():
        save_model(model, os.path.join(out_dir, f"model_{fname}.json"), input_columns)
        written.append(f"model_{fname}.json")

    _say(args.quiet, f"wrote {', '.join(written)} to {out_dir}")
    return 0


def cmd_predict(args) -> int:
    if args.model is None or args.input is None:
        raise DataError("predict needs --model and --input")
    model, input_columns = load_model(args.model)
    if not input_columns:
        raise DataError(f"{args.model} has no input column layout; cannot parse CSV")

    import csv as _csv
    with open(args.input, "r", encoding="utf-8", newline="") as fh:
        try:
            header = [h.strip() for h in next(_csv.reader(fh))]
        except StopIteration:
            raise DataError(f"{args.input} is empty, expected a header row") from None
    known = {c["name"]: ColumnKind(c["kind"]) for c in input_columns}
    schema = []
    for name in header:
        if name in known:
            schema.append(Column(name, known[name], ColumnRole.FEATURE))
        else:
            schema.append(Column(name, ColumnKind.NUMERIC, ColumnRole.DROP))
    missing = set(known) - set(header)
    if missing:
        raise DataError(f"{args.input} lacks required columns {sorted(missing)}")

    d = ingest_csv(args.input, schema)
    preds = predict_any(model, d) if d.n else np.empty(0)
    out_path = args.out or "predictions.csv"
    atomic_write_text(out_path, "prediction\n" + "".join(f"{float(p)!r}\n" for p in preds))
    _say(args.quiet, f"wrote {preds.size} predictions to {out_path}")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="demandstack",
        description="Weekly demand forecasting: preprocessing, stacked-model "
                    "comparison protocol, and prediction.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="path to the JSON config file")
        p.add_argument("--seed", type=int, help="master seed (overrides config)")
        p.add_argument("--out", help="output directory or file (overrides config)")
        p.add_argument("--quiet", action="store_true", help="suppress progress output")

    common(sub.add_parser("synth", help="generate a synthetic dataset"))
    common(sub.add_parser("preprocess", help="clean and aggregate sale-level data"))
    common(sub.add_parser("run", help="run the model comparison protocol"))
    p_pred = sub.add_parser("predict", help="apply a saved model to a CSV")
    common(p_pred)
    p_pred.add_argument("--model", help="path to a saved model file")
    p_pred.add_argument("--input", help="CSV of feature rows")
    return parser


_COMMANDS = {
    "synth": cmd_synth,
    "preprocess": cmd_preprocess,
    "run": cmd_run,
    "predict": cmd_predict,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except DemandStackError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
