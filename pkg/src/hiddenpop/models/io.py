"""Versioned model persistence; the feature schema travels inside the file."""

from __future__ import annotations

import json

import numpy as np

from ..errors import SchemaMismatch
from ..features import FeatureSchema
from .forest import DecisionTree, ForestModel
from .logistic import LogisticModel

FORMAT_VERSION = 1


def _tree_to_dict(tree: DecisionTree) -> dict:
    return {
        "feature": tree.feature.tolist(),
        "threshold": tree.threshold.tolist(),
        "left": tree.left.tolist(),
        "right": tree.right.tolist(),
        "counts": tree.counts.tolist(),
    }


def _tree_from_dict(d: dict) -> DecisionTree:
    return DecisionTree(
        feature=np.array(d["feature"], dtype=np.intp),
        threshold=np.array(d["threshold"], dtype=float),
        left=np.array(d["left"], dtype=np.intp),
        right=np.array(d["right"], dtype=np.intp),
        counts=np.array(d["counts"], dtype=np.int64),
    )


def save_model(path, model, schema: FeatureSchema):
    payload = {
        "format_version": FORMAT_VERSION,
        "schema": json.loads(schema.to_json()),
    }
    if isinstance(model, LogisticModel):
        payload["model_type"] = "logistic"
        payload["model"] = {
            "intercept": model.intercept,
            "weights": model.weights.tolist(),
            "ridge_lambda": model.ridge_lambda,
            "converged": model.converged,
            "iterations": model.iterations,
            "max_abs_gradient": model.max_abs_gradient,
        }
    elif isinstance(model, ForestModel):
        payload["model_type"] = "forest"
        payload["model"] = {
            "n_trees": model.n_trees,
            "mtry": model.mtry,
            "min_leaf": model.min_leaf,
            "max_depth": model.max_depth,
            "seed": model.seed,
            "n_features": model.n_features,
            "oob_error": model.oob_error,
            "trees": [_tree_to_dict(t) for t in model.trees],
        }
    else:
        raise TypeError(f"cannot save model of type {type(model).__name__}")
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, sort_keys=True)


def load_model(path):
    """Returns (model, schema)."""
    with open(path, encoding="utf-8") as f:
        payload = json.load(f)
    if payload.get("format_version") != FORMAT_VERSION:
        raise SchemaMismatch(
            f"{path}: unsupported model format {payload.get('format_version')!r}"
        )
    schema = FeatureSchema.from_json(json.dumps(payload["schema"]))
    m = payload["model"]
    if payload["model_type"] == "logistic":
        model = LogisticModel(
            intercept=m["intercept"],
            weights=np.array(m["weights"], dtype=float),
            ridge_lambda=m["ridge_lambda"],
            converged=m["converged"],
            iterations=m["iterations"],
            max_abs_gradient=m["max_abs_gradient"],
        )
    elif payload["model_type"] == "forest":
        model = ForestModel(
            trees=[_tree_from_dict(t) for t in m["trees"]],
            n_trees=m["n_trees"],
            mtry=m["mtry"],
            min_leaf=m["min_leaf"],
            max_depth=m["max_depth"],
            seed=m["seed"],
            n_features=m["n_features"],
            oob_error=m["oob_error"],
        )
    else:
        raise SchemaMismatch(f"{path}: unknown model_type {payload['model_type']!r}")
    if len(schema.columns) != (
        len(model.weights) if payload["model_type"] == "logistic" else model.n_features
    ):
        raise SchemaMismatch(f"{path}: schema width does not match model width")
    return model, schema
