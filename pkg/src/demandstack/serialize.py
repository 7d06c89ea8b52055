"""Model files: one JSON document per model, written atomically.

Every file carries a format tag, the model payload, and optionally the
input column layout (name and kind per feature) so the predict command can
parse a matching CSV without a separate schema file.  Floats survive the
round trip exactly because JSON text keeps Python's shortest repr.
"""

from __future__ import annotations

import contextlib
import json
import os
import sys

from .ensemble import ForestModel, GbtModel
from .errors import DataError
from .linear import LinearModel
from .stacking import StackedModel
from .tree import CategoricalNode, Leaf, NumericNode, tree_from_dict, tree_to_dict

FORMAT_NAME = "demandstack-model"
FORMAT_VERSION = 1


@contextlib.contextmanager
def deep_stack(limit: int = 20000):
    """Temporarily raise the recursion limit for deep tree (de)serialization."""
    old = sys.getrecursionlimit()
    if old < limit:
        sys.setrecursionlimit(limit)
    try:
        yield
    finally:
        sys.setrecursionlimit(old)


def atomic_write_text(path, text: str) -> None:
    """Write via a sibling temp file and rename, so readers never see partial output."""
    path = os.fspath(path)
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def model_to_dict(model) -> dict:
    if isinstance(model, (Leaf, NumericNode, CategoricalNode)):
        return {"kind": "tree", "tree": tree_to_dict(model)}
    if isinstance(model, (LinearModel, ForestModel, GbtModel, StackedModel)):
        return model.to_dict()
    raise DataError(f"cannot serialize model of type {type(model).__name__}")


def model_from_dict(obj: dict):
    kind = obj.get("kind")
    if kind == "tree":
        return tree_from_dict(obj["tree"])
    if kind == "linear":
        return LinearModel.from_dict(obj)
    if kind == "forest":
        return ForestModel.from_dict(obj)
    if kind == "gbt":
        return GbtModel.from_dict(obj)
    if kind == "stacked":
        return StackedModel.from_dict(obj)
    raise DataError(f"unknown model kind '{kind}'")


def save_model(model, path, input_columns=None) -> None:
    """Serialize a model (and optionally its input column layout) to ``path``."""
    with deep_stack():
        doc = {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "input_columns": input_columns,
            "model": model_to_dict(model),
        }
        atomic_write_text(path, json.dumps(doc, indent=1) + "\n")


def load_model(path):
    """Returns (model, input_columns) from a file written by save_model."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    with deep_stack():
        doc = json.loads(text)
        if doc.get("format") != FORMAT_NAME:
            raise DataError(f"{path} is not a {FORMAT_NAME} file")
        if doc.get("version") != FORMAT_VERSION:
            raise DataError(
                f"{path} has format version {doc.get('version')}, "
                f"this build reads version {FORMAT_VERSION}"
            )
        return model_from_dict(doc["model"]), doc.get("input_columns")
