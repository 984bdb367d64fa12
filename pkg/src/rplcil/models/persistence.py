"""Versioned model files: a magic line, then a JSON parameter dump.

Floats go through JSON's shortest round-trip repr, so a reloaded model
reproduces predictions bit for bit.
"""

from __future__ import annotations

import json
import os

import numpy as np

from ..exceptions import ModelFileError
from .gbdt import GbdtClassifier, RegressionTree
from .mlp import MlpClassifier

MAGIC = "RPLCIL1"
FORMAT_VERSION = 1


def model_kind(model) -> str:
    if isinstance(model, GbdtClassifier):
        return "gbdt"
    if isinstance(model, MlpClassifier):
        return "mlp"
    raise TypeError(f"unsupported model type {type(model).__name__}")


def _dump(model) -> dict:
    kind = model_kind(model)
    body = {"format_version": FORMAT_VERSION, "kind": kind, "params": model.get_params()}
    if kind == "gbdt":
        body["base_score"] = model.base_score_
        body["n_features_in"] = model.n_features_in_
        body["trees"] = [t.to_dict() for t in model.trees_]
    else:
        body["params"]["hidden_layer_sizes"] = list(model.hidden_layer_sizes)
        body["n_features_in"] = model.n_features_in_
        body["mean"] = model.mean_.tolist()
        body["scale"] = model.scale_.tolist()
        body["coefs"] = [W.tolist() for W in model.coefs_]
        body["intercepts"] = [b.tolist() for b in model.intercepts_]
        body["n_updates"] = model.n_updates_
    return body


def dumps(model) -> str:
    return f"{MAGIC}\n{model_kind(model)}\n{json.dumps(_dump(model))}\n"


def loads(text: str):
    lines = text.split("\n", 2)
    if len(lines) < 3 or lines[0] != MAGIC:
        raise ModelFileError("not an rplcil model file (bad magic)")
    kind = lines[1]
    try:
        body = json.loads(lines[2])
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"corrupt model body: {exc}") from None
    if body.get("format_version") != FORMAT_VERSION or body.get("kind") != kind:
        raise ModelFileError("unsupported model file version or inconsistent kind tag")
    if kind == "gbdt":
        model = GbdtClassifier(**body["params"])
        model.base_score_ = float(body["base_score"])
        model.trees_ = [RegressionTree.from_dict(t) for t in body["trees"]]
    elif kind == "mlp":
        params = dict(body["params"])
        params["hidden_layer_sizes"] = tuple(params["hidden_layer_sizes"])
        model = MlpClassifier(**params)
        model.mean_ = np.asarray(body["mean"], dtype=float)
        model.scale_ = np.asarray(body["scale"], dtype=float)
        model.coefs_ = [np.asarray(W, dtype=float) for W in body["coefs"]]
        model.intercepts_ = [np.asarray(b, dtype=float) for b in body["intercepts"]]
        model.n_updates_ = int(body["n_updates"])
    else:
        raise ModelFileError(f"unknown model kind {kind!r}")
    model.n_features_in_ = int(body["n_features_in"])
    model.classes_ = np.array([0, 1])
    return model


def save_model(model, path, overwrite: bool = False) -> str:
    """Write ``model`` to ``path``; refuses to replace an existing file unless ``overwrite``."""
    mode = "w" if overwrite else "x"
    with open(path, mode) as fh:
        fh.write(dumps(model))
    return os.fspath(path)


def load_model(path):
    with open(path) as fh:
        return loads(fh.read())


def next_free_path(path) -> str:
    """``path`` if unused, otherwise the first free ``stem.vN.ext`` (N >= 2)."""
    path = os.fspath(path)
    if not os.path.exists(path):
        return path
    stem, ext = os.path.splitext(path)
    n = 2
    while os.path.exists(f"{stem}.v{n}{ext}"):
        n += 1
    return f"{stem}.v{n}{ext}"
