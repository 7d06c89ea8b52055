"""Two-stage stacked generalization over the four base regressors.

First level: each learner spec (elastic-net LR, decision tree, random
forest, or boosted trees) trains on the training rows, selecting its
hyperparameters by k-fold cross-validation over a small per-kind grid when
one is given.  Forests skip cross-validation and report their out-of-bag
error instead.  Second level: the first-level models predict the held-out
validation rows, those predictions form the meta-feature matrix (one
column per learner, used without standardization), and the combiner trains
on (meta-features, validation targets).

First-level entries are ordered canonically by learner kind before
training, so permuting the spec list changes nothing, bit for bit.  The
meta layout (column label per position) is stored with the model and
reused verbatim at prediction time and across serialization round-trips.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .dataset import Column, ColumnKind, ColumnRole, Dataset, FoldPlan
from .ensemble import (
    ForestConfig, ForestModel, GbtConfig, GbtModel,
    fit_forest, fit_gbt, forest_config_from_dict, forest_config_to_dict,
    gbt_config_from_dict, gbt_config_to_dict, predict_forest, predict_gbt,
    tree_config_from_dict, tree_config_to_dict,
)
from .errors import DataError
from .evalstat import rmse
from .linear import ElasticNetConfig, LinearModel, fit_linear, predict_linear
from .tree import TreeConfig, fit_tree, predict_tree, tree_from_dict, tree_to_dict


class LearnerKind(Enum):
    LR = "lr"
    DT = "dt"
    RF = "rf"
    GBT = "gbt"


_CONFIG_TYPES = {
    LearnerKind.LR: ElasticNetConfig,
    LearnerKind.DT: TreeConfig,
    LearnerKind.RF: ForestConfig,
    LearnerKind.GBT: GbtConfig,
}


@dataclass(frozen=True)
class LearnerSpec:
    """A learner kind, its base config, and an optional CV grid of configs."""

    kind: LearnerKind
    config: object = None
    grid: tuple | None = None

    def resolved_config(self):
        cfg = self.config if self.config is not None else _CONFIG_TYPES[self.kind]()
        if not isinstance(cfg, _CONFIG_TYPES[self.kind]):
            raise DataError(
                f"{self.kind.name} spec carries a {type(cfg).__name__}, "
                f"expected {_CONFIG_TYPES[self.kind].__name__}"
            )
        return cfg


def default_grid(spec: LearnerSpec) -> tuple:
    """The stock hyperparameter grid for a spec's kind, derived from its base config."""
    cfg = spec.resolved_config()
    if spec.kind is LearnerKind.LR:
        return tuple(replace(cfg, lam=lam) for lam in (0.1, 0.3, 1.0))
    if spec.kind is LearnerKind.DT:
        return tuple(replace(cfg, max_depth=depth) for depth in (3, 6, None))
    if spec.kind is LearnerKind.GBT:
        return tuple(
            replace(cfg, learning_rate=lr, n_stages=stages)
            for lr in (0.05, 0.1) for stages in (50, 100)
        )
    return ()


def with_default_grid(spec: LearnerSpec) -> LearnerSpec:
    grid = default_grid(spec)
    return replace(spec, grid=grid) if grid else spec


def _fit(kind: LearnerKind, cfg, d: Dataset, indices, y=None):
    if kind is LearnerKind.LR:
        model, _ = fit_linear(d, cfg, indices=indices, y=y)
        return model
    if kind is LearnerKind.DT:
        return fit_tree(d, cfg, indices=indices, y=y)
    if kind is LearnerKind.RF:
        return fit_forest(d, cfg, indices=indices, y=y)
    return fit_gbt(d, cfg, indices=indices, y=y)


def _predict(kind: LearnerKind, model, d: Dataset, indices=None) -> np.ndarray:
    if kind is LearnerKind.LR:
        return predict_linear(model, d, indices)
    if kind is LearnerKind.DT:
        return predict_tree(model, d, indices)
    if kind is LearnerKind.RF:
        return predict_forest(model, d, indices)
    return predict_gbt(model, d, indices)


class TrainedLearner:
    """A fitted first- or second-level model with its selection record."""

    def __init__(self, label, kind, config, model, score=None, score_kind="fit"):
        self.label = label
        self.kind = kind
        self.config = config
        self.model = model
        self.score = score
        self.score_kind = score_kind

    def predict(self, d: Dataset, indices=None) -> np.ndarray:
        return _predict(self.kind, self.model, d, indices)

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "learner": self.kind.value,
            "config": _config_to_dict(self.kind, self.config),
            "score": self.score,
            "score_kind": self.score_kind,
            "model": _model_to_dict(self.kind, self.model),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "TrainedLearner":
        kind = LearnerKind(obj["learner"])
        return cls(
            label=obj["label"],
            kind=kind,
            config=_config_from_dict(kind, obj["config"]),
            model=_model_from_dict(kind, obj["model"]),
            score=obj.get("score"),
            score_kind=obj.get("score_kind", "fit"),
        )


def _enet_config_to_dict(cfg: ElasticNetConfig) -> dict:
    return {
        "lam": cfg.lam, "l1_ratio": cfg.l1_ratio, "fit_intercept": cfg.fit_intercept,
        "standardize": cfg.standardize, "max_iters": cfg.max_iters, "tol": cfg.tol,
    }


def _config_to_dict(kind: LearnerKind, cfg) -> dict:
    if kind is LearnerKind.LR:
        return _enet_config_to_dict(cfg)
    if kind is LearnerKind.DT:
        return tree_config_to_dict(cfg)
    if kind is LearnerKind.RF:
        return forest_config_to_dict(cfg)
    return gbt_config_to_dict(cfg)


def _config_from_dict(kind: LearnerKind, obj: dict):
    if kind is LearnerKind.LR:
        return ElasticNetConfig(**obj)
    if kind is LearnerKind.DT:
        return tree_config_from_dict(obj)
    if kind is LearnerKind.RF:
        return forest_config_from_dict(obj)
    return gbt_config_from_dict(obj)


def _model_to_dict(kind: LearnerKind, model) -> dict:
    if kind is LearnerKind.DT:
        return {"kind": "tree", "tree": tree_to_dict(model)}
    return model.to_dict()


def _model_from_dict(kind: LearnerKind, obj: dict):
    if kind is LearnerKind.DT:
        return tree_from_dict(obj["tree"])
    if kind is LearnerKind.LR:
        return LinearModel.from_dict(obj)
    if kind is LearnerKind.RF:
        return ForestModel.from_dict(obj)
    return GbtModel.from_dict(obj)


# ---------------------------------------------------------------------------
# first level
# ---------------------------------------------------------------------------


def _labels_for(specs) -> list[str]:
    labels = []
    seen: dict[str, int] = {}
    for spec in specs:
        base = spec.kind.name
        seen[base] = seen.get(base, 0) + 1
        labels.append(base if seen[base] == 1 else f"{base}#{seen[base]}")
    return labels


def _select_by_cv(spec: LearnerSpec, d: Dataset, folds: FoldPlan):
    grid = spec.grid
    best_cfg = None
    best_score = None
    for cfg in grid:
        fold_scores = np.empty(folds.k)
        for i in range(folds.k):
            fit_idx, val_idx = folds.fold(i)
            model = _fit(spec.kind, cfg, d, fit_idx)
            fold_scores[i] = rmse(_predict(spec.kind, model, d, val_idx), d.target[val_idx])
        score = float(fold_scores.mean())
        if best_score is None or score < best_score:
            best_cfg, best_score = cfg, score
    return best_cfg, best_score


def train_first_level(d: Dataset, specs, indices=None, folds: FoldPlan | None = None,
                      cv_k: int = 10, cv_seed: int = 0) -> list[TrainedLearner]:
    """Fit every spec on the training rows; returns one TrainedLearner per spec.

    Specs with a grid are selected by k-fold cross-validation on the
    training rows (ties keep the earliest grid entry) and refit on all of
    them.  Forest specs never consume folds: they fit once and record their
    out-of-bag error.  A missing fold plan is built from (cv_k, cv_seed).
    """
    idx = np.arange(d.n) if indices is None else np.asarray(indices)
    trained = []
    for label, spec in zip(_labels_for(specs), specs):
        cfg = spec.resolved_config()
        if spec.kind is LearnerKind.RF:
            model = _fit(spec.kind, cfg, d, idx)
            trained.append(TrainedLearner(label, spec.kind, cfg, model,
                                          score=model.oob_rmse, score_kind="oob"))
            continue
        if spec.grid:
            if folds is None:
                from .dataset import kfold
                folds = kfold(idx, k=cv_k, seed=cv_seed)
            cfg, score = _select_by_cv(spec, d, folds)
            model = _fit(spec.kind, cfg, d, idx)
            trained.append(TrainedLearner(label, spec.kind, cfg, model,
                                          score=score, score_kind="cv"))
        else:
            model = _fit(spec.kind, cfg, d, idx)
            trained.append(TrainedLearner(label, spec.kind, cfg, model))
    return trained


# ---------------------------------------------------------------------------
# meta features and the stacked model
# ---------------------------------------------------------------------------

META_TARGET = "target"


def build_meta_features(models, d: Dataset, indices=None) -> np.ndarray:
    """Stack model predictions column-wise: column j comes from models[j]."""
    if not models:
        raise DataError("need at least one first-level model")
    cols = [np.asarray(m.predict(d, indices), dtype=np.float64) for m in models]
    return np.column_stack(cols)


def meta_dataset(meta: np.ndarray, labels, y=None) -> Dataset:
    """Wrap a meta-feature matrix as a Dataset so any learner can consume it."""
    if meta.ndim != 2 or meta.shape[1] != len(labels):
        raise DataError(f"meta matrix shape {meta.shape} does not fit {len(labels)} labels")
    schema = [Column(label, ColumnKind.NUMERIC, ColumnRole.FEATURE) for label in labels]
    columns = {label: np.ascontiguousarray(meta[:, j]) for j, label in enumerate(labels)}
    if y is not None:
        schema.append(Column(META_TARGET, ColumnKind.NUMERIC, ColumnRole.TARGET))
        columns[META_TARGET] = np.asarray(y, dtype=np.float64)
    return Dataset(schema, columns)


class StackedModel:
    def __init__(self, first, second, meta_layout):
        self.first: list[TrainedLearner] = list(first)
        self.second: TrainedLearner = second
        self.meta_layout: list[str] = list(meta_layout)

    def predict(self, d: Dataset, indices=None) -> np.ndarray:
        meta = build_meta_features(self.first, d, indices)
        return self.second.predict(meta_dataset(meta, self.meta_layout))

    def to_dict(self) -> dict:
        return {
            "kind": "stacked",
            "meta_layout": list(self.meta_layout),
            "first": [m.to_dict() for m in self.first],
            "second": self.second.to_dict(),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "StackedModel":
        return cls(
            first=[TrainedLearner.from_dict(m) for m in obj["first"]],
            second=TrainedLearner.from_dict(obj["second"]),
            meta_layout=obj["meta_layout"],
        )


def canonical_order(specs) -> list[int]:
    """Indices reordering specs by learner kind name, stable within a kind."""
    return sorted(range(len(specs)), key=lambda i: (specs[i].kind.name, i))


def assemble_stacked(first_models, second_spec: LearnerSpec, d: Dataset,
                     val_indices) -> StackedModel:
    """Train the combiner on validation meta-features of already-fit models."""
    val_idx = np.asarray(val_indices)
    if val_idx.size == 0:
        raise DataError("validation split is empty; the combiner has nothing to train on")
    meta = build_meta_features(first_models, d, val_idx)
    labels = [m.label for m in first_models]
    md = meta_dataset(meta, labels, y=d.target[val_idx])
    cfg = second_spec.resolved_config()
    model = _fit(second_spec.kind, cfg, md, np.arange(md.n))
    second = TrainedLearner(f"L2:{second_spec.kind.name}", second_spec.kind, cfg, model)
    return StackedModel(first_models, second, labels)


def train_stacked(d: Dataset, first_specs, second_spec: LearnerSpec,
                  train_indices, val_indices, folds: FoldPlan | None = None,
                  cv_k: int = 10, cv_seed: int = 0) -> StackedModel:
    """Full two-stage fit: first level on train, combiner on validation."""
    specs = list(first_specs)
    if not specs:
        raise DataError("need at least one first-level spec")
    ordered = [specs[i] for i in canonical_order(specs)]
    first = train_first_level(d, ordered, train_indices, folds, cv_k, cv_seed)
    return assemble_stacked(first, second_spec, d, val_indices)
