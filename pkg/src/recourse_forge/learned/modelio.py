"""Model files: a JSON header followed by little-endian float64 parameter arrays."""

from __future__ import annotations

import io
import json
import struct

import numpy as np

from ..errors import DataError
from ..formats import atomic_write_bytes, canonical_json, catalog_from_dict, catalog_hash, catalog_to_dict
from .generators import GeneratorModel, TrainConfig
from .network import MLP

MODEL_TAG = "recourse-forge-model/v1"
_MAGIC = (MODEL_TAG + "\n").encode("ascii")


def _arrays(model: GeneratorModel) -> list:
    if model.variant == "knn":
        return [model.knn_X, model.knn_y]
    return list(model.net.params)


def model_header(model: GeneratorModel) -> dict:
    arrays = _arrays(model)
    return {
        "format": MODEL_TAG,
        "variant": model.variant,
        "n": model.n,
        "sizes": model.net.sizes if model.net is not None else None,
        "config": model.config.to_dict(),
        "catalog": catalog_to_dict(model.catalog) if model.catalog is not None else None,
        "catalog_hash": model.catalog_digest,
        "id_table": [[list(e) for e in entries] for entries in model.id_table] if model.id_table is not None else None,
        "signs": model.signs.tolist() if model.signs is not None else None,
        "shapes": [list(a.shape) for a in arrays],
        "history": model.history,
    }


def dumps_model(model: GeneratorModel) -> bytes:
    if not model.trained:
        raise DataError("cannot save an untrained model")
    header = canonical_json(model_header(model)).encode("utf-8")
    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write(struct.pack("<Q", len(header)))
    buf.write(header)
    for a in _arrays(model):
        buf.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
    return buf.getvalue()


def save_model(path, model: GeneratorModel):
    atomic_write_bytes(path, dumps_model(model))


def loads_model(data: bytes, source: str = "<model>") -> GeneratorModel:
    if not data.startswith(_MAGIC):
        raise DataError(f"{source}: not a {MODEL_TAG} file")
    pos = len(_MAGIC)
    if len(data) < pos + 8:
        raise DataError(f"{source}: truncated header")
    (hlen,) = struct.unpack("<Q", data[pos:pos + 8])
    pos += 8
    try:
        header = json.loads(data[pos:pos + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"{source}: bad header ({exc})") from None
    pos += hlen
    arrays = []
    for shape in header["shapes"]:
        count = int(np.prod(shape)) if shape else 1
        end = pos + 8 * count
        if end > len(data):
            raise DataError(f"{source}: truncated parameter block")
        arrays.append(np.frombuffer(data[pos:end], dtype="<f8").reshape(shape).astype(np.float64))
        pos = end
    if pos != len(data):
        raise DataError(f"{source}: {len(data) - pos} trailing bytes")
    catalog = catalog_from_dict(header["catalog"]) if header.get("catalog") is not None else None
    if catalog is not None and header.get("catalog_hash") not in (None, catalog_hash(catalog)):
        raise DataError(f"{source}: catalog hash mismatch")
    id_table = None
    if header.get("id_table") is not None:
        id_table = tuple(tuple((int(j), int(s)) for j, s in entries) for entries in header["id_table"])
    signs = np.array(header["signs"], dtype=np.int64) if header.get("signs") is not None else None
    cfg = TrainConfig.from_dict(header["config"])
    model = GeneratorModel(header["variant"], int(header["n"]), cfg, catalog=catalog, id_table=id_table,
                           signs=signs, history=header.get("history") or {},
                           catalog_digest=header.get("catalog_hash"))
    if model.variant == "knn":
        model.knn_X = arrays[0].astype(np.uint8)
        model.knn_y = arrays[1].astype(np.int64)
    else:
        sizes = header["sizes"]
        for k, a in enumerate(arrays):
            want = (sizes[k // 2], sizes[k // 2 + 1]) if k % 2 == 0 else (sizes[k // 2 + 1],)
            if a.shape != want:
                raise DataError(f"{source}: parameter {k} has shape {a.shape}, expected {want}")
        model.net = MLP(sizes, dtype=np.float64, params=arrays)
    return model


def load_model(path) -> GeneratorModel:
    with open(path, "rb") as fh:
        return loads_model(fh.read(), str(path))
