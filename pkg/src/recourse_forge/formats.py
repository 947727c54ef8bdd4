"""JSON serialization, content hashing and atomic file writes."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path
from typing import Any

import numpy as np

from .core import (
    DEFAULT_MARGIN,
    ActionCatalog,
    ContinuousAction,
    DiscreteAction,
    LinearClassifier,
    ThresholdClassifier,
)
from .errors import DataError

FORMAT_TAG = "recourse-forge/v1"


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def atomic_write_bytes(path, data: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str):
    atomic_write_bytes(path, text.encode("utf-8"))


def _num_list(arr: np.ndarray) -> list:
    # integral values print as ints so binary data stays compact
    return [int(v) if float(v).is_integer() and abs(v) < 2**53 else float(v) for v in np.asarray(arr).tolist()]


def classifier_to_dict(clf) -> dict:
    if isinstance(clf, LinearClassifier):
        return {"format": FORMAT_TAG, "variant": "linear", "weights": _num_list(clf.weights),
                "intercept": clf.intercept, "margin": clf.margin}
    if isinstance(clf, ThresholdClassifier):
        return {"format": FORMAT_TAG, "variant": "threshold", "t": _num_list(clf.t)}
    raise TypeError(f"unsupported classifier {type(clf).__name__}")


def _check_tag(d: dict, what: str):
    if not isinstance(d, dict):
        raise DataError(f"{what} document must be an object")
    tag = d.get("format", FORMAT_TAG)
    if tag != FORMAT_TAG:
        raise DataError(f"unsupported {what} format tag {tag!r}")


def classifier_from_dict(d: dict):
    _check_tag(d, "classifier")
    try:
        variant = d["variant"]
        if variant == "linear":
            return LinearClassifier(d["weights"], d.get("intercept", 0.0), d.get("margin", DEFAULT_MARGIN))
        if variant == "threshold":
            return ThresholdClassifier(d["t"])
    except (KeyError, ValueError, TypeError) as exc:
        raise DataError(f"bad classifier document: {exc}") from exc
    raise DataError(f"unknown classifier variant {variant!r}")


def catalog_to_dict(catalog: ActionCatalog) -> dict:
    key = "capabilities" if catalog.kind == "discrete" else "effect"
    actions = []
    for a in catalog.actions:
        rec = {key: _num_list(a.vector), "cost": a.cost}
        if a.name is not None:
            rec["name"] = a.name
        actions.append(rec)
    return {"format": FORMAT_TAG, "kind": catalog.kind, "actions": actions}


def catalog_from_dict(d: dict) -> ActionCatalog:
    _check_tag(d, "catalog")
    kind = d.get("kind")
    try:
        if kind == "discrete":
            acts = [DiscreteAction(a["capabilities"], a["cost"], a.get("name")) for a in d["actions"]]
        elif kind == "continuous":
            acts = [ContinuousAction(a["effect"], a["cost"], a.get("name")) for a in d["actions"]]
        else:
            raise DataError(f"unknown catalog kind {kind!r}")
        return ActionCatalog(kind, tuple(acts))
    except (KeyError, ValueError, TypeError) as exc:
        raise DataError(f"bad catalog document: {exc}") from exc


def classifier_hash(clf) -> str:
    return sha256_text(canonical_json(classifier_to_dict(clf)))


def catalog_hash(catalog: ActionCatalog) -> str:
    return sha256_text(canonical_json(catalog_to_dict(catalog)))


def read_json(path) -> Any:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from exc


def write_json(path, obj: Any):
    atomic_write_text(path, json.dumps(obj, sort_keys=True, indent=1) + "\n")


def load_classifier(path):
    return classifier_from_dict(read_json(path))


def save_classifier(path, clf):
    write_json(path, classifier_to_dict(clf))


def load_catalog(path) -> ActionCatalog:
    return catalog_from_dict(read_json(path))


def save_catalog(path, catalog: ActionCatalog):
    write_json(path, catalog_to_dict(catalog))
