"""Regression trees grown by variance reduction.

A split's score is the node's population variance minus the weighted
within-child variance:

    vr = var(y) - sum_c P(c) * var(y | c)

Numeric features split binarily at midpoints between adjacent distinct
sorted values (left takes <= threshold); categorical features split
multiway with one child per in-node category plus a designated fallback
child (the most populous one) that also absorbs categories unseen during
training.  A categorical feature is used at most once per root-to-leaf
path.  The best split is the argmax of vr over candidate features; ties go
to the earliest feature in schema order, and within a numeric feature to
the smallest threshold.

Growth stops at a node when its variance falls below the configured
threshold (or is exactly zero), the depth limit is reached, or no legal
split remains (every candidate is constant in-node or would produce a
child smaller than min_samples_leaf).  Leaves predict the mean target.
Growth and routing are iterative, so tree depth is not limited by the
interpreter's recursion limit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .dataset import Dataset, MISSING_CODE, is_coded
from .errors import DataError


@dataclass(frozen=True)
class TreeConfig:
    max_depth: int | None = None
    min_samples_leaf: int = 1
    variance_threshold: float = 0.0
    feature_subset_size: int | None = None

    def validate(self) -> None:
        if self.max_depth is not None and self.max_depth < 0:
            raise DataError(f"max_depth must be non-negative or None, got {self.max_depth}")
        if self.min_samples_leaf < 1:
            raise DataError(f"min_samples_leaf must be >= 1, got {self.min_samples_leaf}")
        if self.variance_threshold < 0:
            raise DataError(f"variance_threshold must be non-negative, got {self.variance_threshold}")
        if self.feature_subset_size is not None and self.feature_subset_size < 1:
            raise DataError(f"feature_subset_size must be >= 1, got {self.feature_subset_size}")


class Leaf:
    __slots__ = ("prediction", "n")

    def __init__(self, prediction: float, n: int):
        self.prediction = prediction
        self.n = n


class NumericNode:
    __slots__ = ("feature", "threshold", "left", "right")

    def __init__(self, feature: str, threshold: float, left=None, right=None):
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right


class CategoricalNode:
    __slots__ = ("feature", "children", "fallback")

    def __init__(self, feature: str, children: dict | None = None, fallback: str = ""):
        self.feature = feature
        self.children = children if children is not None else {}
        self.fallback = fallback


TreeNode = Leaf | NumericNode | CategoricalNode


# ---------------------------------------------------------------------------
# variance primitives
# ---------------------------------------------------------------------------


def node_variance(values) -> float:
    """Population variance (divisor n) of a value vector."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise DataError("variance of an empty vector is undefined")
    return float(arr.var())


def split_variance(feature_values, targets) -> float:
    """Weighted within-group variance of targets grouped by feature value."""
    f = np.asarray(feature_values)
    y = np.asarray(targets, dtype=np.float64)
    if f.shape[0] != y.shape[0]:
        raise DataError(f"feature length {f.shape[0]} != target length {y.shape[0]}")
    if y.size == 0:
        raise DataError("split variance of an empty vector is undefined")
    _, codes = np.unique(f, return_inverse=True)
    codes = np.ascontiguousarray(codes, dtype=np.int64)
    return float(kernels.grouped_within_variance(codes, y, int(codes.max()) + 1))


def variance_reduction(feature_values, targets) -> float:
    """node_variance minus split_variance, clamped at zero."""
    return max(node_variance(targets) - split_variance(feature_values, targets), 0.0)


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------


class _Feature:
    __slots__ = ("name", "coded", "values", "labels")

    def __init__(self, name, coded, values, labels):
        self.name = name
        self.coded = coded
        self.values = values
        self.labels = labels


def _materialize(d: Dataset, idx: np.ndarray) -> list[_Feature]:
    feats = []
    for col in d.feature_columns():
        arr = d.column(col.name)[idx]
        if is_coded(col.kind):
            if (arr == MISSING_CODE).any():
                raise DataError(f"feature '{col.name}' has missing values; fill them first")
            feats.append(_Feature(col.name, True,
                                  np.ascontiguousarray(arr, dtype=np.int64),
                                  d.categories[col.name]))
        else:
            values = np.ascontiguousarray(arr, dtype=np.float64)
            if not np.isfinite(values).all():
                raise DataError(f"feature '{col.name}' has non-finite values; fill them first")
            feats.append(_Feature(col.name, False, values, None))
    return feats


def fit_tree_traced(d: Dataset, cfg: TreeConfig = TreeConfig(), indices=None,
                    y=None, rng: np.random.Generator | None = None):
    """Grow a tree; returns (root, training predictions aligned with indices)."""
    cfg.validate()
    idx = np.arange(d.n) if indices is None else np.asarray(indices)
    if idx.size == 0:
        raise DataError("cannot fit a tree on zero rows")
    target = d.target[idx] if y is None else np.asarray(y, dtype=np.float64)
    if target.shape[0] != idx.size:
        raise DataError(f"target length {target.shape[0]} != row count {idx.size}")
    if not np.isfinite(target).all():
        raise DataError("targets contain non-finite values")
    feats = _materialize(d, idx)
    for f in feats:
        if not f.coded and not np.isfinite(f.values).all():
            raise DataError(f"feature '{f.name}' has non-finite values; fill missing data first")
    if cfg.feature_subset_size is not None:
        if cfg.feature_subset_size > len(feats):
            raise DataError(
                f"feature_subset_size {cfg.feature_subset_size} exceeds "
                f"the {len(feats)} available features"
            )
        if rng is None:
            rng = np.random.default_rng(0)

    train_pred = np.empty(idx.size)
    root_holder: list = [None]

    def attach(slot, node):
        parent, key = slot
        if parent is None:
            root_holder[0] = node
        elif isinstance(parent, NumericNode):
            setattr(parent, key, node)
        else:
            parent.children[key] = node

    # stack entries: (local row positions, depth, frozenset of used coded features, slot)
    stack = [(np.arange(idx.size), 0, frozenset(), (None, None))]
    while stack:
        rows, depth, used, slot = stack.pop()
        y_node = target[rows]
        mu = float(y_node.mean())

        def leaf():
            attach(slot, Leaf(mu, rows.size))
            train_pred[rows] = mu

        var = float(y_node.var())
        if var < cfg.variance_threshold or var <= 0.0:
            leaf()
            continue
        if cfg.max_depth is not None and depth >= cfg.max_depth:
            leaf()
            continue

        available = [p for p, f in enumerate(feats) if not (f.coded and p in used)]
        if cfg.feature_subset_size is not None and cfg.feature_subset_size < len(available):
            chosen = rng.choice(len(available), size=cfg.feature_subset_size, replace=False)
            available = sorted(available[c] for c in chosen)

        best_pos = -1
        best_vr = -1.0
        best_threshold = 0.0
        best_counts = None
        for pos in available:
            f = feats[pos]
            sub = f.values[rows]
            if f.coded:
                counts = np.bincount(sub, minlength=len(f.labels))
                present = counts > 0
                if int(present.sum()) < 2 or counts[present].min() < cfg.min_samples_leaf:
                    continue
                within = kernels.grouped_within_variance(sub, y_node, len(f.labels))
                vr = max(var - within, 0.0)
                threshold = 0.0
            else:
                vr, threshold = kernels.numeric_split_scan(sub, y_node, cfg.min_samples_leaf)
                if vr < 0.0:
                    continue
                counts = None
            if vr > best_vr:
                best_pos, best_vr, best_threshold, best_counts = pos, vr, threshold, counts

        if best_pos < 0:
            leaf()
            continue

        f = feats[best_pos]
        sub = f.values[rows]
        if f.coded:
            fallback_code = int(np.argmax(best_counts))
            node = CategoricalNode(f.name, fallback=f.labels[fallback_code])
            attach(slot, node)
            child_used = used | {best_pos}
            for code in np.flatnonzero(best_counts > 0):
                child_rows = rows[sub == code]
                stack.append((child_rows, depth + 1, child_used, (node, f.labels[int(code)])))
        else:
            node = NumericNode(f.name, float(best_threshold))
            attach(slot, node)
            mask = sub <= best_threshold
            stack.append((rows[mask], depth + 1, used, (node, "left")))
            stack.append((rows[~mask], depth + 1, used, (node, "right")))

    return root_holder[0], train_pred


def fit_tree(d: Dataset, cfg: TreeConfig = TreeConfig(), indices=None,
             y=None, rng: np.random.Generator | None = None) -> TreeNode:
    """Grow a regression tree on the given dataset rows."""
    root, _ = fit_tree_traced(d, cfg, indices, y, rng)
    return root


# ---------------------------------------------------------------------------
# prediction
# ---------------------------------------------------------------------------


def predict_tree(tree: TreeNode, d: Dataset, indices=None) -> np.ndarray:
    """Route dataset rows through a tree; returns one prediction per row."""
    idx = np.arange(d.n) if indices is None else np.asarray(indices)
    out = np.empty(idx.size)
    numeric_cache: dict[str, np.ndarray] = {}
    label_cache: dict[str, list[str]] = {}
    code_cache: dict[str, np.ndarray] = {}

    def numeric_column(name):
        if name not in numeric_cache:
            col = d.schema_column(name)
            if is_coded(col.kind):
                raise DataError(f"tree expects numeric values in column '{name}'")
            arr = np.asarray(d.column(name)[idx], dtype=np.float64)
            if not np.isfinite(arr).all():
                raise DataError(f"column '{name}' has non-finite values; fill them first")
            numeric_cache[name] = arr
        return numeric_cache[name]

    def coded_column(name):
        if name not in code_cache:
            col = d.schema_column(name)
            if not is_coded(col.kind):
                raise DataError(f"tree expects categorical values in column '{name}'")
            code_cache[name] = d.column(name)[idx]
            label_cache[name] = d.categories[name]
        return code_cache[name], label_cache[name]

    stack = [(tree, np.arange(idx.size))]
    while stack:
        node, rows = stack.pop()
        if rows.size == 0:
            continue
        if isinstance(node, Leaf):
            out[rows] = node.prediction
            continue
        if isinstance(node, NumericNode):
            sub = numeric_column(node.feature)[rows]
            mask = sub <= node.threshold
            stack.append((node.left, rows[mask]))
            stack.append((node.right, rows[~mask]))
            continue
        codes, labels = coded_column(node.feature)
        sub = codes[rows]
        claimed = np.zeros(rows.size, dtype=bool)
        code_of = {lab: i for i, lab in enumerate(labels)}
        for label, child in node.children.items():
            code = code_of.get(label)
            if code is None:
                continue
            mask = sub == code
            if label != node.fallback:
                claimed |= mask
                stack.append((child, rows[mask]))
        # the fallback child takes its own category plus anything unseen
        stack.append((node.children[node.fallback], rows[~claimed]))
    return out


# ---------------------------------------------------------------------------
# structure helpers and serialization
# ---------------------------------------------------------------------------


def tree_depth(tree: TreeNode) -> int:
    depth = 0
    stack = [(tree, 0)]
    while stack:
        node, at = stack.pop()
        depth = max(depth, at)
        if isinstance(node, NumericNode):
            stack.append((node.left, at + 1))
            stack.append((node.right, at + 1))
        elif isinstance(node, CategoricalNode):
            for child in node.children.values():
                stack.append((child, at + 1))
    return depth


def tree_to_dict(tree: TreeNode) -> dict:
    """Depth-first nested mapping with a fixed field order per node type."""
    if isinstance(tree, Leaf):
        return {"type": "leaf", "prediction": tree.prediction, "n": tree.n}
    if isinstance(tree, NumericNode):
        return {
            "type": "numeric",
            "feature": tree.feature,
            "threshold": tree.threshold,
            "left": tree_to_dict(tree.left),
            "right": tree_to_dict(tree.right),
        }
    return {
        "type": "categorical",
        "feature": tree.feature,
        "fallback": tree.fallback,
        "children": {label: tree_to_dict(child) for label, child in tree.children.items()},
    }


def tree_from_dict(obj: dict) -> TreeNode:
    kind = obj["type"]
    if kind == "leaf":
        return Leaf(obj["prediction"], obj["n"])
    if kind == "numeric":
        return NumericNode(obj["feature"], obj["threshold"],
                           tree_from_dict(obj["left"]), tree_from_dict(obj["right"]))
    if kind == "categorical":
        node = CategoricalNode(obj["feature"], fallback=obj["fallback"])
        node.children = {label: tree_from_dict(child) for label, child in obj["children"].items()}
        return node
    raise DataError(f"unknown tree node type '{kind}'")
