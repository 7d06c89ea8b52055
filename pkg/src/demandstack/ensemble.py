"""Bagged forests and gradient-boosted trees over the regression tree.

Forest: each of n_trees trees trains on a bootstrap resample (n draws with
replacement) of the training rows, with a per-node random feature subset of
floor(sqrt(p)) features unless configured otherwise.  Rows never drawn for
a tree form its out-of-bag set; averaging each row's out-of-bag predictions
yields an internal error estimate without a held-out fold.  Every tree's
random stream derives from (seed, tree_index), so fits are reproducible
and order-independent.

Boosting: the model starts from the mean target and repeatedly fits a
shallow tree to the current residuals, adding learning_rate times its
prediction.  Because each stage tree predicts leaf means of the residuals
it was grown on, the squared-error loss J_s = sum((y - F_s)^2) cannot
increase for learning rates in (0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .dataset import Dataset
from .errors import DataError
from .tree import TreeConfig, TreeNode, fit_tree_traced, predict_tree, tree_from_dict, tree_to_dict


# ---------------------------------------------------------------------------
# bootstrap
# ---------------------------------------------------------------------------


def bootstrap_sample(n: int, rng: np.random.Generator):
    """Draw n positions with replacement; returns (in_bag, out_of_bag).

    in_bag is the multiset of drawn positions in draw order; out_of_bag is
    the sorted complement of the distinct drawn positions.
    """
    if n < 1:
        raise DataError(f"cannot bootstrap from {n} rows")
    in_bag = rng.integers(0, n, size=n)
    oob = np.setdiff1d(np.arange(n), in_bag, assume_unique=False)
    return in_bag, oob


# ---------------------------------------------------------------------------
# random forest
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 20
    tree: TreeConfig = TreeConfig()
    seed: int = 0
    # None means floor(sqrt(number of features)), resolved at fit time
    feature_subset_size: int | None = None

    def validate(self) -> None:
        if self.n_trees < 1:
            raise DataError(f"n_trees must be positive, got {self.n_trees}")
        self.tree.validate()
        if self.feature_subset_size is not None and self.feature_subset_size < 1:
            raise DataError(f"feature_subset_size must be >= 1, got {self.feature_subset_size}")


class ForestModel:
    def __init__(self, trees, config, in_bags=None, oobs=None,
                 oob_rmse=math.nan, oob_uncovered=0):
        self.trees: list[TreeNode] = list(trees)
        self.config = config
        self.in_bags = in_bags
        self.oobs = oobs
        self.oob_rmse = oob_rmse
        self.oob_uncovered = oob_uncovered

    def to_dict(self) -> dict:
        return {
            "kind": "forest",
            "config": forest_config_to_dict(self.config),
            "oob_rmse": None if math.isnan(self.oob_rmse) else self.oob_rmse,
            "oob_uncovered": self.oob_uncovered,
            "trees": [tree_to_dict(t) for t in self.trees],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ForestModel":
        oob = obj.get("oob_rmse")
        return cls(
            trees=[tree_from_dict(t) for t in obj["trees"]],
            config=forest_config_from_dict(obj["config"]),
            oob_rmse=math.nan if oob is None else float(oob),
            oob_uncovered=int(obj.get("oob_uncovered", 0)),
        )


def tree_config_to_dict(cfg: TreeConfig) -> dict:
    return {
        "max_depth": cfg.max_depth,
        "min_samples_leaf": cfg.min_samples_leaf,
        "variance_threshold": cfg.variance_threshold,
        "feature_subset_size": cfg.feature_subset_size,
    }


def tree_config_from_dict(obj: dict) -> TreeConfig:
    return TreeConfig(**obj)


def forest_config_to_dict(cfg: ForestConfig) -> dict:
    return {
        "n_trees": cfg.n_trees,
        "tree": tree_config_to_dict(cfg.tree),
        "seed": cfg.seed,
        "feature_subset_size": cfg.feature_subset_size,
    }


def forest_config_from_dict(obj: dict) -> ForestConfig:
    obj = dict(obj)
    obj["tree"] = tree_config_from_dict(obj["tree"])
    return ForestConfig(**obj)


def fit_forest(d: Dataset, cfg: ForestConfig = ForestConfig(), indices=None, y=None) -> ForestModel:
    """Fit a bootstrap-aggregated forest and its out-of-bag error estimate."""
    cfg.validate()
    idx = np.arange(d.n) if indices is None else np.asarray(indices)
    if idx.size == 0:
        raise DataError("cannot fit a forest on zero rows")
    target = d.target[idx] if y is None else np.asarray(y, dtype=np.float64)
    if target.shape[0] != idx.size:
        raise DataError(f"target length {target.shape[0]} != row count {idx.size}")

    n_features = len(d.feature_columns())
    subset = cfg.feature_subset_size
    if subset is None:
        subset = max(1, int(math.floor(math.sqrt(n_features))))
    if subset > n_features:
        raise DataError(f"feature_subset_size {subset} exceeds the {n_features} available features")
    tree_cfg = replace(cfg.tree, feature_subset_size=subset)

    trees = []
    in_bags = []
    oobs = []
    oob_sum = np.zeros(idx.size)
    oob_count = np.zeros(idx.size, dtype=np.int64)
    for t in range(cfg.n_trees):
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, t]))
        in_bag, oob = bootstrap_sample(idx.size, rng)
        root, _ = fit_tree_traced(d, tree_cfg, indices=idx[in_bag], y=target[in_bag], rng=rng)
        trees.append(root)
        in_bags.append(in_bag)
        oobs.append(oob)
        if oob.size:
            oob_sum[oob] += predict_tree(root, d, idx[oob])
            oob_count[oob] += 1

    covered = oob_count > 0
    if covered.any():
        err = oob_sum[covered] / oob_count[covered] - target[covered]
        oob_rmse = float(np.sqrt((err @ err) / covered.sum()))
    else:
        oob_rmse = math.nan
    return ForestModel(trees, cfg, in_bags, oobs, oob_rmse,
                       oob_uncovered=int((~covered).sum()))


def predict_forest(f: ForestModel, d: Dataset, indices=None) -> np.ndarray:
    """Arithmetic mean of the member trees' predictions."""
    if not f.trees:
        raise DataError("forest has no trees")
    total = predict_tree(f.trees[0], d, indices)
    for tree in f.trees[1:]:
        total = total + predict_tree(tree, d, indices)
    return total / len(f.trees)


# ---------------------------------------------------------------------------
# gradient boosting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GbtConfig:
    n_stages: int = 100
    learning_rate: float = 0.1
    tree: TreeConfig = TreeConfig(max_depth=3)
    seed: int = 0

    def validate(self) -> None:
        if self.n_stages < 1:
            raise DataError(f"n_stages must be positive, got {self.n_stages}")
        if not 0.0 < self.learning_rate <= 1.0:
            raise DataError(f"learning_rate must lie in (0, 1], got {self.learning_rate}")
        self.tree.validate()


class GbtModel:
    def __init__(self, initial, trees, config, stage_losses=None):
        self.initial = float(initial)
        self.trees: list[TreeNode] = list(trees)
        self.config = config
        self.stage_losses = stage_losses

    def to_dict(self) -> dict:
        return {
            "kind": "gbt",
            "initial": self.initial,
            "config": gbt_config_to_dict(self.config),
            "stage_losses": self.stage_losses.tolist() if self.stage_losses is not None else None,
            "trees": [tree_to_dict(t) for t in self.trees],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "GbtModel":
        losses = obj.get("stage_losses")
        return cls(
            initial=obj["initial"],
            trees=[tree_from_dict(t) for t in obj["trees"]],
            config=gbt_config_from_dict(obj["config"]),
            stage_losses=np.asarray(losses) if losses is not None else None,
        )


def gbt_config_to_dict(cfg: GbtConfig) -> dict:
    return {
        "n_stages": cfg.n_stages,
        "learning_rate": cfg.learning_rate,
        "tree": tree_config_to_dict(cfg.tree),
        "seed": cfg.seed,
    }


def gbt_config_from_dict(obj: dict) -> GbtConfig:
    obj = dict(obj)
    obj["tree"] = tree_config_from_dict(obj["tree"])
    return GbtConfig(**obj)


def fit_gbt(d: Dataset, cfg: GbtConfig = GbtConfig(), indices=None, y=None) -> GbtModel:
    """Fit stagewise trees on residuals starting from the mean target."""
    cfg.validate()
    idx = np.arange(d.n) if indices is None else np.asarray(indices)
    target = d.target[idx] if y is None else np.asarray(y, dtype=np.float64)
    if target.shape[0] != idx.size:
        raise DataError(f"target length {target.shape[0]} != row count {idx.size}")
    if idx.size < 2:
        raise DataError(f"need at least 2 rows to boost, got {idx.size}")
    if not np.isfinite(target).all():
        raise DataError("targets contain non-finite values")

    initial = float(target.mean())
    current = np.full(idx.size, initial)
    trees = []
    losses = np.empty(cfg.n_stages)
    for s in range(cfg.n_stages):
        resid = target - current
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, s]))
        root, stage_pred = fit_tree_traced(d, cfg.tree, indices=idx, y=resid, rng=rng)
        trees.append(root)
        current = current + cfg.learning_rate * stage_pred
        err = target - current
        losses[s] = float(err @ err)
    return GbtModel(initial, trees, cfg, losses)


def predict_gbt(m: GbtModel, d: Dataset, indices=None) -> np.ndarray:
    """Initial prediction plus learning_rate times the staged tree sum."""
    idx = np.arange(d.n) if indices is None else np.asarray(indices)
    total = np.zeros(idx.size)
    for tree in m.trees:
        total += predict_tree(tree, d, idx)
    return m.initial + m.config.learning_rate * total
