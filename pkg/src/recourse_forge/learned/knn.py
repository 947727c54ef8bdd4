"""Hamming-distance nearest-neighbour baseline over binary agent features."""

from __future__ import annotations

import numpy as np

from ..core import AgentState, Cfe
from ..errors import DimensionMismatch, EmptyDataset, EmptyModel
from ..formats import catalog_hash


def hamming_distance(a, b) -> int:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise DimensionMismatch(f"vectors of length {a.shape} and {b.shape}")
    return int(np.count_nonzero(a != b))


def fit_knn(train, k: int = 5):
    """Store the training agents with integer labels; builds an id table if missing."""
    from .generators import GeneratorModel, TrainConfig, helpful_signs

    X = train.features()
    if X.shape[0] == 0:
        raise EmptyDataset("training dataset has no pairs")
    if train.id_table is not None:
        table = train.id_table
        y = np.array([p.cfe.hl_id for p in train.pairs], dtype=np.int64)
    else:
        ids, table = {}, []
        y = np.empty(len(train.pairs), dtype=np.int64)
        for m, p in enumerate(train.pairs):
            if p.cfe.entries not in ids:
                ids[p.cfe.entries] = len(table)
                table.append(p.cfe.entries)
            y[m] = ids[p.cfe.entries]
        table = tuple(table)
    cat = train.catalog
    return GeneratorModel("knn", X.shape[1], TrainConfig(k=k), None, cat, table,
                          helpful_signs(cat, train.classifier) if cat is not None else None,
                          knn_X=(X > 0.5).astype(np.uint8), knn_y=y,
                          catalog_digest=catalog_hash(cat) if cat is not None else None)


def knn_labels(model, X: np.ndarray, chunk: int = 512) -> np.ndarray:
    """Majority label among the k nearest training agents; ties go to the smallest id."""
    if model.knn_X is None or model.knn_X.shape[0] == 0:
        raise EmptyModel("kNN model stores no training agents")
    T = model.knn_X.astype(np.int32)
    ones_T = T.sum(axis=1)
    k = min(model.config.k, T.shape[0])
    K = int(model.knn_y.max()) + 1
    out = np.empty(X.shape[0], dtype=np.int64)
    Q = (np.asarray(X) > 0.5).astype(np.int32)
    for s in range(0, Q.shape[0], chunk):
        q = Q[s:s + chunk]
        # |a xor b| = |a| + |b| - 2 a.b
        D = q.sum(axis=1)[:, None] + ones_T[None, :] - 2 * (q @ T.T)
        # stable sort keeps training order among equal distances
        near = np.argsort(D, axis=1, kind="stable")[:, :k]
        for r, row in enumerate(near):
            votes = np.bincount(model.knn_y[row], minlength=K)
            out[s + r] = int(np.argmax(votes))
    return out


def knn_predict(model, agent: AgentState) -> Cfe:
    from .generators import predict

    return predict(model, agent)
