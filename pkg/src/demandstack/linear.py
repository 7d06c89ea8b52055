"""Elastic-net linear regression on one-hot encoded features.

The model minimizes

    (1/n) * ||y - X b - b0||^2 + lam * (l1_ratio * ||b||_1
                                        + (1 - l1_ratio) * ||b||_2^2)

by cyclic coordinate descent with soft thresholding (see
:mod:`demandstack.kernels`).  The intercept is never penalized.  Features
are standardized by default; the model stores the column means and scales
and applies them at prediction time, so coefficients live in standardized
space and :meth:`LinearModel.raw_coefficients` maps them back.

Categorical features are expanded to one indicator column per category
(no reference category is dropped) in first-seen category order; a category
unseen during training encodes as an all-zero block.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .dataset import Dataset, is_coded
from .errors import DataError

ENCODED_NUMERIC = "numeric"
ENCODED_CATEGORICAL = "categorical"


@dataclass(frozen=True)
class ElasticNetConfig:
    lam: float = 0.3
    l1_ratio: float = 0.8
    fit_intercept: bool = True
    standardize: bool = True
    max_iters: int = 10000
    tol: float = 1e-7

    def validate(self) -> None:
        if self.lam < 0:
            raise DataError(f"lam must be non-negative, got {self.lam}")
        if not 0.0 <= self.l1_ratio <= 1.0:
            raise DataError(f"l1_ratio must lie in [0, 1], got {self.l1_ratio}")
        if self.max_iters < 1:
            raise DataError(f"max_iters must be positive, got {self.max_iters}")
        if self.tol <= 0:
            raise DataError(f"tol must be positive, got {self.tol}")


@dataclass(frozen=True)
class EncodedColumn:
    name: str
    kind: str
    start: int
    stop: int
    categories: tuple[str, ...] | None = None


class FeatureEncoding:
    """Column layout mapping schema features to encoded matrix columns."""

    def __init__(self, entries: Sequence[EncodedColumn]):
        self.entries = list(entries)
        self.width = self.entries[-1].stop if self.entries else 0

    @classmethod
    def from_dataset(cls, d: Dataset) -> "FeatureEncoding":
        entries = []
        at = 0
        for col in d.feature_columns():
            if is_coded(col.kind):
                cats = tuple(d.categories[col.name])
                entries.append(EncodedColumn(col.name, ENCODED_CATEGORICAL,
                                             at, at + len(cats), cats))
                at += len(cats)
            else:
                entries.append(EncodedColumn(col.name, ENCODED_NUMERIC, at, at + 1))
                at += 1
        return cls(entries)

    def transform(self, d: Dataset, indices=None) -> np.ndarray:
        """Encode dataset rows into a dense float matrix.

        Categories are matched by label, so the input may intern its own
        codes; unseen or missing categories produce all-zero indicator
        blocks.  Non-finite numeric cells are an error.
        """
        idx = np.arange(d.n) if indices is None else np.asarray(indices)
        X = np.zeros((idx.size, self.width))
        for entry in self.entries:
            arr = d.column(entry.name)[idx]
            if entry.kind == ENCODED_NUMERIC:
                if not np.isfinite(arr).all():
                    raise DataError(f"column '{entry.name}' has non-finite values; fill or drop them")
                X[:, entry.start] = arr
            else:
                slot_by_label = {lab: i for i, lab in enumerate(entry.categories)}
                input_labels = d.categories[entry.name]
                slot_of_code = np.array(
                    [slot_by_label.get(lab, -1) for lab in input_labels] + [-1],
                    dtype=np.int64,
                )
                slots = slot_of_code[arr]
                rows = np.flatnonzero(slots >= 0)
                X[rows, entry.start + slots[rows]] = 1.0
        return X

    def to_dict(self) -> dict:
        return {
            "entries": [
                {"name": e.name, "kind": e.kind, "start": e.start, "stop": e.stop,
                 "categories": list(e.categories) if e.categories is not None else None}
                for e in self.entries
            ]
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "FeatureEncoding":
        return cls([
            EncodedColumn(e["name"], e["kind"], e["start"], e["stop"],
                          tuple(e["categories"]) if e["categories"] is not None else None)
            for e in obj["entries"]
        ])


def encode_features(d: Dataset, indices=None) -> tuple[np.ndarray, FeatureEncoding]:
    """One-hot encode a dataset's feature columns in schema order."""
    enc = FeatureEncoding.from_dataset(d)
    return enc.transform(d, indices), enc


@dataclass
class TrainReport:
    final_loss: float
    iterations: int
    converged: bool
    residuals: np.ndarray
    loss_history: np.ndarray


class LinearModel:
    def __init__(self, beta, intercept, config, mean=None, scale=None, encoding=None):
        self.beta = np.asarray(beta, dtype=np.float64)
        self.intercept = float(intercept)
        self.config = config
        self.mean = None if mean is None else np.asarray(mean, dtype=np.float64)
        self.scale = None if scale is None else np.asarray(scale, dtype=np.float64)
        self.encoding = encoding

    def predict_matrix(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.beta.shape[0]:
            raise DataError(
                f"expected matrix with {self.beta.shape[0]} columns, got shape {X.shape}"
            )
        if self.mean is not None:
            X = (X - self.mean) / self.scale
        return X @ self.beta + self.intercept

    def raw_coefficients(self) -> tuple[np.ndarray, float]:
        """Coefficients and intercept expressed on unstandardized inputs."""
        if self.mean is None:
            return self.beta.copy(), self.intercept
        beta = self.beta / self.scale
        return beta, self.intercept - float(self.mean @ beta)

    def to_dict(self) -> dict:
        return {
            "kind": "linear",
            "beta": self.beta.tolist(),
            "intercept": self.intercept,
            "config": {
                "lam": self.config.lam,
                "l1_ratio": self.config.l1_ratio,
                "fit_intercept": self.config.fit_intercept,
                "standardize": self.config.standardize,
                "max_iters": self.config.max_iters,
                "tol": self.config.tol,
            },
            "mean": self.mean.tolist() if self.mean is not None else None,
            "scale": self.scale.tolist() if self.scale is not None else None,
            "encoding": self.encoding.to_dict() if self.encoding is not None else None,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "LinearModel":
        enc = obj.get("encoding")
        return cls(
            beta=np.asarray(obj["beta"], dtype=np.float64),
            intercept=obj["intercept"],
            config=ElasticNetConfig(**obj["config"]),
            mean=obj["mean"],
            scale=obj["scale"],
            encoding=FeatureEncoding.from_dict(enc) if enc is not None else None,
        )


def elastic_net_objective(X, y, beta, intercept, lam, l1_ratio) -> float:
    """Objective value on the given (already encoded/standardized) matrix."""
    resid = y - (X @ beta + intercept)
    penalty = lam * (l1_ratio * np.abs(beta).sum() + (1.0 - l1_ratio) * float(beta @ beta))
    return float(resid @ resid) / y.shape[0] + penalty


def fit_elastic_net(X, y, cfg: ElasticNetConfig = ElasticNetConfig(),
                    encoding: FeatureEncoding | None = None):
    """Fit on an encoded matrix; returns (LinearModel, TrainReport)."""
    cfg.validate()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2:
        raise DataError(f"X must be 2-dimensional, got shape {X.shape}")
    if y.ndim != 1 or y.shape[0] != X.shape[0]:
        raise DataError(f"y shape {y.shape} does not match X shape {X.shape}")
    if X.shape[0] == 0:
        raise DataError("cannot fit on an empty matrix")
    if not np.isfinite(X).all():
        raise DataError("X contains non-finite values")
    if not np.isfinite(y).all():
        raise DataError("y contains non-finite values")

    mean = scale = None
    Xf = X
    if cfg.standardize:
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale = np.where(scale == 0.0, 1.0, scale)
        Xf = (X - mean) / scale
    Xf = np.asfortranarray(Xf)

    loss_out = np.zeros(cfg.max_iters)
    beta, intercept, sweeps, converged = kernels.enet_cd(
        Xf, y, cfg.lam * cfg.l1_ratio, cfg.lam * (1.0 - cfg.l1_ratio),
        cfg.fit_intercept, cfg.max_iters, cfg.tol, loss_out,
    )
    model = LinearModel(beta, intercept, cfg, mean=mean, scale=scale, encoding=encoding)
    fitted = model.predict_matrix(X)
    report = TrainReport(
        final_loss=float(loss_out[sweeps - 1]),
        iterations=int(sweeps),
        converged=bool(converged),
        residuals=y - fitted,
        loss_history=loss_out[:sweeps].copy(),
    )
    return model, report


def fit_linear(d: Dataset, cfg: ElasticNetConfig = ElasticNetConfig(),
               indices=None, y=None):
    """Encode a dataset's features and fit; returns (LinearModel, TrainReport)."""
    idx = np.arange(d.n) if indices is None else np.asarray(indices)
    enc = FeatureEncoding.from_dataset(d)
    X = enc.transform(d, idx)
    target = d.target[idx] if y is None else np.asarray(y, dtype=np.float64)
    return fit_elastic_net(X, target, cfg, encoding=enc)


def predict_linear(m: LinearModel, d: Dataset, indices=None) -> np.ndarray:
    """Apply a fitted model to dataset rows via its stored encoding."""
    if m.encoding is None:
        raise DataError("model has no feature encoding; use predict_matrix")
    for entry in m.encoding.entries:
        d.schema_column(entry.name)
    return m.predict_matrix(m.encoding.transform(d, indices))
