"""Data-driven CFE generators: multi-label, categorical (hl-id) and action decoder."""

from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from ..core import ActionCatalog, AgentState, Cfe, LinearClassifier
from ..errors import CfeTooLarge, ConfigError, DimensionMismatch, EmptyDataset, KindMismatch, UntrainedModel
from ..formats import catalog_hash
from ..solvers.canonical import canonicalize_cfe
from .network import MLP, Adam, categorical_loss, l2_penalty, multilabel_loss, sigmoid

log = logging.getLogger(__name__)

VARIANTS = ("multilabel", "categorical", "decoder", "knn")


class UnseenLabelSpace(UserWarning):
    """Only one CFE label exists, so the categorical generator is constant."""


@dataclass(frozen=True)
class TrainConfig:
    hidden_layers: tuple = (256, 256)
    epochs: int = 300
    batch_size: int = 256
    learning_rate: float = 1e-3
    dropout_rate: float = 0.1
    l2_coefficient: float = 0.0
    loss_weight: float = 1.0
    l1_regularizer: float = 0.0
    early_stop_patience: int = 50
    validation_fraction: float = 0.1
    monitor: str = "val_loss"
    seed: int = 0
    dtype: str = "float32"
    threshold: float = 0.5
    s_max: int = 3
    k: int = 5

    def __post_init__(self):
        object.__setattr__(self, "hidden_layers", tuple(int(h) for h in self.hidden_layers))
        if any(h < 1 for h in self.hidden_layers):
            raise ConfigError("hidden layer widths must be positive")
        if not 0 < self.learning_rate <= 1:
            raise ConfigError("learning_rate must lie in (0, 1]")
        if not 0 <= self.dropout_rate < 1:
            raise ConfigError("dropout_rate must lie in [0, 1)")
        if not 0 < self.loss_weight <= 1:
            raise ConfigError("loss_weight must lie in (0, 1]")
        if not 0 <= self.l1_regularizer <= 1:
            raise ConfigError("l1_regularizer must lie in [0, 1]")
        if self.l2_coefficient < 0:
            raise ConfigError("l2_coefficient must be nonnegative")
        if not 0 <= self.validation_fraction < 1:
            raise ConfigError("validation_fraction must lie in [0, 1)")
        if self.monitor not in ("val_loss", "val_accuracy"):
            raise ConfigError("monitor must be val_loss or val_accuracy")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype must be float32 or float64")
        if self.epochs < 0 or self.batch_size < 1 or self.early_stop_patience < 1:
            raise ConfigError("epochs, batch_size and early_stop_patience must be positive")
        if not 0 < self.threshold < 1:
            raise ConfigError("threshold must lie in (0, 1)")
        if self.s_max < 1 or self.k < 1:
            raise ConfigError("s_max and k must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_layers"] = list(self.hidden_layers)
        return d

    @classmethod
    def from_dict(cls, d: Optional[dict]) -> "TrainConfig":
        d = dict(d or {})
        extra = set(d) - set(cls.__dataclass_fields__)
        if extra:
            raise ConfigError(f"unknown training config keys {sorted(extra)}")
        return cls(**d)


@dataclass
class GeneratorModel:
    """A trained generator. Networks output logits; ``variant`` fixes their meaning.

    multilabel: one sigmoid per catalog action. categorical: softmax over hl-ids.
    decoder: ``s_max`` heads of ``n`` sigmoids, each an action vector.
    knn: stored training agents and their hl-ids.
    """

    variant: str
    n: int
    config: TrainConfig
    net: Optional[MLP] = None
    catalog: Optional[ActionCatalog] = None
    id_table: Optional[tuple] = None
    signs: Optional[np.ndarray] = None
    knn_X: Optional[np.ndarray] = None
    knn_y: Optional[np.ndarray] = None
    history: dict = field(default_factory=dict)
    catalog_digest: Optional[str] = None

    @property
    def trained(self) -> bool:
        if self.variant == "knn":
            return self.knn_X is not None
        return self.net is not None

    @property
    def output_width(self) -> int:
        return self.net.sizes[-1] if self.net is not None else 0


# ----- targets -----

def _matrix(ds):
    X = ds.features()
    if X.shape[0] == 0:
        raise EmptyDataset("training dataset has no pairs")
    return X


def multilabel_targets(ds) -> np.ndarray:
    J = len(ds.catalog)
    Y = np.zeros((len(ds.pairs), J))
    for m, p in enumerate(ds.pairs):
        for j, _ in p.cfe.entries:
            Y[m, j] = 1.0
    return Y


def categorical_targets(ds):
    if ds.id_table is None:
        raise KindMismatch("categorical training needs an id-encoded dataset")
    y = np.array([p.cfe.hl_id for p in ds.pairs], dtype=np.int64)
    if y.size and (y.min() < 0 or y.max() >= len(ds.id_table)):
        raise ConfigError("hl_id labels fall outside the id table")
    return y


def decoder_targets(ds, s_max: int) -> np.ndarray:
    n = ds.catalog.n
    Y = np.zeros((len(ds.pairs), s_max * n))
    for m, p in enumerate(ds.pairs):
        if p.cfe.size > s_max:
            raise CfeTooLarge(f"record {m}: CFE has {p.cfe.size} actions, decoder capacity is {s_max}")
        # heads follow ascending catalog index (entries are already sorted)
        for h, (j, _) in enumerate(p.cfe.entries):
            Y[m, h * n:(h + 1) * n] = ds.catalog[j].capabilities
    return Y


def helpful_signs(catalog: ActionCatalog, clf) -> np.ndarray:
    if catalog.kind == "continuous" and isinstance(clf, LinearClassifier):
        w = catalog.matrix @ clf.weights
        return np.where(w < 0, -1, 1).astype(np.int64)
    return np.ones(len(catalog), dtype=np.int64)


# ----- training loop -----

def _split_validation(M, cfg: TrainConfig, rng):
    order = rng.permutation(M)
    n_val = int(round(cfg.validation_fraction * M)) if M >= 10 else 0
    if n_val == 0:
        return order, order[:0]
    return order[n_val:], order[:n_val]


def _fit(net: MLP, X, Y, loss_fn, acc_fn, cfg: TrainConfig, rng):
    """Mini-batch Adam with early stopping; restores the best weights."""
    dtype = net.dtype
    X = X.astype(dtype)
    Y = Y.astype(dtype) if Y.dtype.kind == "f" else Y
    tr, va = _split_validation(X.shape[0], cfg, rng)
    eval_idx = va if va.size else tr
    opt = Adam(net.params, lr=cfg.learning_rate)

    def data_loss(idx):
        total = 0.0
        for s in range(0, idx.size, 8192):
            part = idx[s:s + 8192]
            logits, _ = net.forward(X[part])
            total += loss_fn(logits, Y[part])[0] * part.size
        return total / max(1, idx.size)

    def score(idx):
        if cfg.monitor == "val_accuracy":
            return -acc_fn(net.predict_logits(X[idx]), Y[idx])
        return data_loss(idx)

    initial_train = data_loss(tr)
    best = score(eval_idx)
    best_params = net.copy_params()
    best_epoch, epochs_run, wait = 0, 0, 0
    history = {"initial_train_loss": initial_train, "train_loss": [], "monitor": []}
    for epoch in range(1, cfg.epochs + 1):
        perm = tr[rng.permutation(tr.size)]
        running = 0.0
        for s in range(0, perm.size, cfg.batch_size):
            b = perm[s:s + cfg.batch_size]
            logits, state = net.forward(X[b], cfg.dropout_rate, rng)
            value, dlog = loss_fn(logits, Y[b])
            grads = net.backward(dlog, state)
            pen, pgrads = l2_penalty(net, cfg.l2_coefficient)
            if pgrads is not None:
                grads = [g if pg is None else g + pg for g, pg in zip(grads, pgrads)]
            opt.step(net.params, grads)
            running += (value + pen) * b.size
        epochs_run = epoch
        cur = score(eval_idx)
        history["train_loss"].append(running / max(1, tr.size))
        history["monitor"].append(cur)
        if cur < best:
            best, best_params, best_epoch, wait = cur, net.copy_params(), epoch, 0
        else:
            wait += 1
            if wait >= cfg.early_stop_patience:
                break
    net.params = best_params
    history.update(best_epoch=best_epoch, epochs_run=epochs_run, best_monitor=best,
                   final_train_loss=data_loss(tr), n_train=int(tr.size), n_val=int(va.size))
    return history


def _new_net(n_in, n_out, cfg: TrainConfig, rng):
    return MLP([n_in, *cfg.hidden_layers, n_out], rng, dtype=np.dtype(cfg.dtype))


def train_multilabel(train, cfg: Optional[TrainConfig] = None) -> GeneratorModel:
    cfg = cfg or TrainConfig()
    X = _matrix(train)
    if train.catalog is None:
        raise KindMismatch("multi-label training needs an action catalog")
    if train.catalog.n != X.shape[1] and train.catalog.kind == "discrete":
        raise DimensionMismatch("catalog and agents differ in dimension")
    Y = multilabel_targets(train)
    rng = np.random.default_rng(cfg.seed)
    net = _new_net(X.shape[1], Y.shape[1], cfg, rng)
    loss = lambda z, y: multilabel_loss(z, y, cfg.loss_weight, cfg.l1_regularizer)
    acc = lambda z, y: float(np.mean(np.all((sigmoid(z.astype(np.float64)) > cfg.threshold) == (y > 0.5), axis=1)))
    hist = _fit(net, X, Y, loss, acc, cfg, rng)
    return GeneratorModel("multilabel", X.shape[1], cfg, net.astype(np.float64), train.catalog, train.id_table,
                          helpful_signs(train.catalog, train.classifier), history=hist,
                          catalog_digest=catalog_hash(train.catalog))


def train_categorical(train, cfg: Optional[TrainConfig] = None) -> GeneratorModel:
    cfg = cfg or TrainConfig()
    X = _matrix(train)
    y = categorical_targets(train)
    K = len(train.id_table)
    if K == 1:
        warnings.warn("only one CFE label; the generator will be constant", UnseenLabelSpace, stacklevel=2)
    rng = np.random.default_rng(cfg.seed)
    net = _new_net(X.shape[1], K, cfg, rng)
    acc = lambda z, lab: float(np.mean(np.argmax(z, axis=1) == lab))
    hist = _fit(net, X, y, categorical_loss, acc, cfg, rng)
    digest = catalog_hash(train.catalog) if train.catalog is not None else None
    signs = helpful_signs(train.catalog, train.classifier) if train.catalog is not None else None
    return GeneratorModel("categorical", X.shape[1], cfg, net.astype(np.float64), train.catalog, train.id_table,
                          signs, history=hist, catalog_digest=digest)


def train_decoder(train, cfg: Optional[TrainConfig] = None) -> GeneratorModel:
    cfg = cfg or TrainConfig()
    X = _matrix(train)
    if train.catalog is None or train.catalog.kind != "discrete":
        raise KindMismatch("the action decoder needs a discrete catalog")
    Y = decoder_targets(train, cfg.s_max)
    rng = np.random.default_rng(cfg.seed)
    net = _new_net(X.shape[1], Y.shape[1], cfg, rng)
    loss = lambda z, y: multilabel_loss(z, y, cfg.loss_weight, cfg.l1_regularizer)
    acc = lambda z, y: float(np.mean(np.all((sigmoid(z.astype(np.float64)) > cfg.threshold) == (y > 0.5), axis=1)))
    hist = _fit(net, X, Y, loss, acc, cfg, rng)
    return GeneratorModel("decoder", X.shape[1], cfg, net.astype(np.float64), train.catalog, train.id_table,
                          np.ones(len(train.catalog), dtype=np.int64), history=hist,
                          catalog_digest=catalog_hash(train.catalog))


# ----- prediction -----

def _entries_to_cfe(model: GeneratorModel, indices, hl_id=None) -> Cfe:
    idx = sorted(set(int(j) for j in indices))
    signs = model.signs if model.signs is not None else np.ones(max(idx, default=-1) + 1, dtype=np.int64)
    entries = tuple((j, int(signs[j])) for j in idx)
    cost = model.catalog.subset_cost(idx) if model.catalog is not None else 0.0
    return canonicalize_cfe([Cfe(entries, cost, hl_id)])


def _id_cfe(model: GeneratorModel, k: int) -> Cfe:
    entries = model.id_table[k]
    cost = model.catalog.subset_cost(j for j, _ in entries) if model.catalog is not None else 0.0
    return Cfe(tuple(entries), cost, int(k))


def _hl_id_lookup(model):
    if model.id_table is None:
        return {}
    return {entries: k for k, entries in enumerate(model.id_table)}


def nearest_actions(model: GeneratorModel, heads: np.ndarray) -> list:
    """Map each rounded head to the catalog action at least Hamming distance."""
    caps = model.catalog.matrix
    out = []
    for h in heads:
        if not h.any():
            continue
        d = np.abs(caps - h).sum(axis=1)
        out.append(int(np.argmin(d)))  # argmin returns the lowest index on ties
    return out


def decoder_raw(model: GeneratorModel, X: np.ndarray) -> np.ndarray:
    """Rounded head vectors, shape (agents, s_max, n)."""
    p = sigmoid(model.net.predict_logits(np.asarray(X, dtype=np.float64)))
    return (p > model.config.threshold).astype(np.float64).reshape(X.shape[0], model.config.s_max, model.n)


def predict_batch(model: GeneratorModel, X) -> list:
    if not model.trained:
        raise UntrainedModel(f"{model.variant} generator has not been trained")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.n:
        raise DimensionMismatch(f"model expects {model.n} features, got {X.shape[1]}")
    lookup = _hl_id_lookup(model)
    if model.variant == "knn":
        from .knn import knn_labels

        return [_id_cfe(model, k) for k in knn_labels(model, X)]
    if model.variant == "categorical":
        ids = np.argmax(model.net.predict_logits(X), axis=1)
        return [_id_cfe(model, int(k)) for k in ids]
    if model.variant == "multilabel":
        P = sigmoid(model.net.predict_logits(X))
        out = []
        for row in P:
            idx = np.flatnonzero(row > model.config.threshold)
            c = _entries_to_cfe(model, idx)
            out.append(c.with_hl_id(lookup.get(c.entries)))
        return out
    if model.variant == "decoder":
        out = []
        for heads in decoder_raw(model, X):
            c = _entries_to_cfe(model, nearest_actions(model, heads))
            out.append(c.with_hl_id(lookup.get(c.entries)))
        return out
    raise KindMismatch(f"unknown generator variant {model.variant!r}")


def predict(model: GeneratorModel, agent: AgentState) -> Cfe:
    return predict_batch(model, agent.features[None, :])[0]


def train_generator(variant: str, train, cfg: Optional[TrainConfig] = None) -> GeneratorModel:
    if variant == "multilabel":
        return train_multilabel(train, cfg)
    if variant == "categorical":
        return train_categorical(train, cfg)
    if variant == "decoder":
        return train_decoder(train, cfg)
    if variant == "knn":
        from .knn import fit_knn

        return fit_knn(train, (cfg or TrainConfig()).k)
    raise ConfigError(f"unknown generator {variant!r}; expected one of {VARIANTS}")
