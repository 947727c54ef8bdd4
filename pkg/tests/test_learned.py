import numpy as np
import pytest

from recourse_forge import ActionCatalog, AgentCfePair, AgentState, Cfe, LinearClassifier, ThresholdClassifier
from recourse_forge.errors import CfeTooLarge, EmptyDataset, EmptyModel, UntrainedModel
from recourse_forge.learned import (
    MLP,
    GeneratorModel,
    TrainConfig,
    UnseenLabelSpace,
    dumps_model,
    fit_knn,
    gradient_check,
    hamming_distance,
    knn_predict,
    loads_model,
    predict,
    predict_batch,
    train_categorical,
    train_decoder,
    train_multilabel,
)
from recourse_forge.learned.generators import decoder_targets
from recourse_forge.learned.network import log_sigmoid, multilabel_loss, sigmoid
from recourse_forge.synthdata import AgentCfeDataset, encode_hl_id, split_train_test

FAST = dict(hidden_layers=(32,), epochs=150, early_stop_patience=150, learning_rate=5e-3, dropout_rate=0.0,
            validation_fraction=0.0)


def _clusters(n=12, per=40, seed=0):
    """Two agent clusters far apart in Hamming distance, each with its own one-action CFE."""
    rng = np.random.default_rng(seed)
    cat = ActionCatalog.discrete([[1] * (n // 2) + [0] * (n - n // 2), [0] * (n // 2) + [1] * (n - n // 2)], [1, 1])
    clf = ThresholdClassifier(np.ones(n))
    pairs = []
    for k in range(2 * per):
        c = k % 2
        x = np.ones(n)
        half = slice(0, n // 2) if c == 0 else slice(n // 2, n)
        x[half] = (rng.random(n // 2) < 0.3).astype(float)
        x[half][0] = 0
        if x.min() == 1:
            x[half.start] = 0
        pairs.append(AgentCfePair(AgentState(x), Cfe(((c, 1),), 1.0)))
    return AgentCfeDataset(tuple(pairs), cat, clf)


@pytest.mark.parametrize("trainer", [train_multilabel, train_categorical, train_decoder])
def test_separable_clusters_are_learned(trainer):
    ds = encode_hl_id(_clusters())
    tr, te = split_train_test(ds, 0.75, 0)
    model = trainer(tr, TrainConfig(**FAST))
    preds = predict_batch(model, te.features())
    assert all(p == q.cfe for p, q in zip(preds, te.pairs))


def test_loss_reduces_to_plain_bce():
    rng = np.random.default_rng(0)
    z = rng.normal(size=(7, 5))
    y = (rng.random((7, 5)) < 0.5).astype(float)
    bce = -(y * log_sigmoid(z) + (1 - y) * log_sigmoid(-z)).sum() / 7
    assert multilabel_loss(z, y, 1.0, 0.0)[0] == pytest.approx(bce, rel=1e-15, abs=1e-15)


def test_weighted_loss_adds_l1_gap():
    rng = np.random.default_rng(1)
    z = rng.normal(size=(4, 3))
    y = (rng.random((4, 3)) < 0.5).astype(float)
    base = multilabel_loss(z, y, 1.0, 0.0)[0]
    gap = np.abs(sigmoid(z) - y).sum() / 4
    assert multilabel_loss(z, y, 0.5, 0.2)[0] == pytest.approx(0.5 * base + 0.2 * gap)


def test_single_label_space_warns_and_is_constant():
    ds = encode_hl_id(_clusters().replace(pairs=_clusters().pairs[0::2]))
    with pytest.warns(UnseenLabelSpace):
        model = train_categorical(ds, TrainConfig(**{**FAST, "epochs": 2}))
    assert all(p == q.cfe for p, q in zip(predict_batch(model, ds.features()), ds.pairs))


def _fixed_output_model(variant, probs, catalog, id_table=None):
    logits = np.log(np.asarray(probs)) if variant == "categorical" else np.log(np.asarray(probs) / (1 - np.asarray(probs)))
    n = catalog.n
    net = MLP([n, 2, len(probs)], params=[np.zeros((n, 2)), np.zeros(2), np.zeros((2, len(probs))), logits])
    return GeneratorModel(variant, n, TrainConfig(), net, catalog, id_table, np.ones(len(catalog), dtype=np.int64))


def test_prediction_rules():
    cat = ActionCatalog.discrete(np.eye(3, dtype=int), [1, 2, 3])
    m = _fixed_output_model("multilabel", [0.9, 0.2, 0.7], cat)
    c = predict(m, AgentState([0, 0, 0]))
    assert c.entries == ((0, 1), (2, 1)) and c.total_cost == 4
    table = (((0, 1),), ((1, 1),), ((0, 1), (2, 1)))
    m = _fixed_output_model("categorical", [0.01, 0.98, 0.01], cat, table)
    c = predict(m, AgentState([0, 0, 0]))
    assert c.entries == ((1, 1),) and c.hl_id == 1
    assert predict(m, AgentState([0, 0, 0])) == c


def test_multilabel_uses_helpful_sign_for_continuous_actions():
    cat = ActionCatalog.continuous([[1, 0], [-1, 0]], [1, 1])
    ds = AgentCfeDataset((AgentCfePair(AgentState([0, 0]), Cfe(((1, -1),), 1.0), "hl-continuous"),), cat,
                         LinearClassifier([1, 0], 0, 0.5), "hl-continuous")
    m = train_multilabel(ds, TrainConfig(**{**FAST, "epochs": 200}))
    assert predict(m, AgentState([0, 0])).entries == ((1, -1),)


def test_untrained_model_raises():
    cat = ActionCatalog.discrete(np.eye(2, dtype=int), [1, 1])
    with pytest.raises(UntrainedModel):
        predict(GeneratorModel("categorical", 2, TrainConfig(), None, cat), AgentState([0, 0]))


def test_empty_dataset():
    ds = _clusters().replace(pairs=())
    with pytest.raises(EmptyDataset):
        train_multilabel(ds, TrainConfig(**FAST))


def test_decoder_targets_and_capacity():
    ds = _clusters()
    cat = ActionCatalog.discrete(np.eye(4, dtype=int), [1, 1, 1, 1])
    empty = AgentCfeDataset((AgentCfePair(AgentState([1, 1, 1, 1]), Cfe()),), cat, ThresholdClassifier(np.ones(4)))
    assert not decoder_targets(empty, 3).any()
    big = AgentCfeDataset((AgentCfePair(AgentState([0, 0, 0, 0]), Cfe(tuple((j, 1) for j in range(4)), 4.0)),), cat,
                          ThresholdClassifier(np.ones(4)))
    with pytest.raises(CfeTooLarge):
        train_decoder(big, TrainConfig(**FAST))
    Y = decoder_targets(ds, 2)
    assert Y.shape == (len(ds.pairs), 2 * ds.catalog.n)


def test_memorization_of_small_training_set():
    rng = np.random.default_rng(3)
    n = 16
    cat = ActionCatalog.discrete((rng.random((10, n)) < 0.5).astype(int), np.ones(10))
    pairs = []
    for k in range(50):
        x = (rng.random(n) < 0.5).astype(float)
        pairs.append(AgentCfePair(AgentState(x), Cfe(((k % 10, 1),), 1.0)))
    ds = encode_hl_id(AgentCfeDataset(tuple(pairs), cat, ThresholdClassifier(np.ones(n))))
    model = train_categorical(ds, TrainConfig(hidden_layers=(128,), epochs=400, early_stop_patience=400,
                                              learning_rate=1e-2, dropout_rate=0.0, validation_fraction=0.0))
    assert all(p == q.cfe for p, q in zip(predict_batch(model, ds.features()), ds.pairs))
    h = model.history
    assert h["final_train_loss"] <= h["initial_train_loss"]


def test_training_is_bitwise_deterministic():
    ds = encode_hl_id(_clusters())
    cfg = TrainConfig(**{**FAST, "epochs": 20, "dropout_rate": 0.2, "validation_fraction": 0.1})
    a = dumps_model(train_categorical(ds, cfg))
    b = dumps_model(train_categorical(ds, cfg))
    assert a == b


def test_model_file_round_trip():
    ds = encode_hl_id(_clusters())
    for trainer in (train_multilabel, train_categorical, train_decoder):
        m = trainer(ds, TrainConfig(**{**FAST, "epochs": 5}))
        back = loads_model(dumps_model(m))
        assert predict_batch(back, ds.features()) == predict_batch(m, ds.features())
        assert dumps_model(back) == dumps_model(m)
    k = fit_knn(ds, 3)
    assert predict_batch(loads_model(dumps_model(k)), ds.features()) == predict_batch(k, ds.features())


# ----- kNN -----

X_TR = [1, 0, 1, 0, 1, 1, 0, 1, 0, 1, 0, 1, 1, 0, 1, 0, 1, 0, 1, 0]
X_TS = [1, 0, 1, 0, 0, 0, 1, 1, 0, 1, 0, 1, 0, 1, 1, 0, 0, 0, 1, 0]


def test_hamming_distance_worked_example():
    assert hamming_distance(X_TR, X_TS) == 6


def _knn_data(labels):
    cat = ActionCatalog.discrete(np.eye(4, dtype=int), [1, 1, 1, 1])
    rng = np.random.default_rng(0)
    pairs = [AgentCfePair(AgentState((rng.random(4) < 0.5).astype(float) * 0), Cfe(((j, 1),), 1.0)) for j in labels]
    pairs = [AgentCfePair(AgentState(np.eye(4)[k % 4] if k < 4 else np.zeros(4)), p.cfe) for k, p in enumerate(pairs)]
    return encode_hl_id(AgentCfeDataset(tuple(pairs), cat, ThresholdClassifier(np.ones(4))))


def test_knn_identical_agent_with_k1():
    ds = _knn_data([0, 1, 2, 3])
    m = fit_knn(ds, 1)
    for p in ds.pairs:
        assert knn_predict(m, p.agent) == p.cfe


def test_knn_whole_set_gives_majority_and_ties_to_smallest_id():
    ds = _knn_data([2, 1, 1, 2, 3])
    m = fit_knn(ds, len(ds.pairs))
    # ids follow first appearance: CFE {2} is id 0 and CFE {1} is id 1, both twice
    assert knn_predict(m, AgentState([1, 1, 1, 1])).entries == ((2, 1),)
    ds = _knn_data([2, 1, 1, 3, 1])
    assert knn_predict(fit_knn(ds, len(ds.pairs)), AgentState([0, 0, 0, 0])).entries == ((1, 1),)


def test_knn_distance_ties_follow_training_order():
    cat = ActionCatalog.discrete(np.eye(2, dtype=int), [1, 1])
    pairs = (AgentCfePair(AgentState([1, 0]), Cfe(((1, 1),), 1.0)), AgentCfePair(AgentState([0, 1]), Cfe(((0, 1),), 1.0)))
    ds = encode_hl_id(AgentCfeDataset(pairs, cat, ThresholdClassifier([1, 1])))
    assert knn_predict(fit_knn(ds, 1), AgentState([0, 0])).entries == ((1, 1),)


def test_knn_empty_model():
    cat = ActionCatalog.discrete(np.eye(2, dtype=int), [1, 1])
    m = GeneratorModel("knn", 2, TrainConfig(k=1), None, cat, (), knn_X=np.zeros((0, 2), np.uint8),
                       knn_y=np.zeros(0, np.int64))
    with pytest.raises(EmptyModel):
        knn_predict(m, AgentState([0, 0]))


# ----- gradient verification -----

def _small_model(variant, seed, n=5, out=4, alpha=0.0, p_w=1.0):
    rng = np.random.default_rng(seed)
    net = MLP([n, 6, 5, out], rng)
    cfg = TrainConfig(loss_weight=p_w, l1_regularizer=alpha, s_max=1)
    return GeneratorModel(variant, n, cfg, net), rng


@pytest.mark.parametrize("variant", ["multilabel", "categorical", "decoder"])
def test_gradient_check_fresh_nets(variant):
    for seed in range(3):
        model, rng = _small_model(variant, seed, alpha=0.3 if variant != "categorical" else 0.0, p_w=0.7)
        X = rng.normal(size=(6, 5))
        Y = rng.integers(0, 4, 6) if variant == "categorical" else (rng.random((6, 4)) < 0.5).astype(float)
        assert gradient_check(model, (X, Y)) < 1e-4


def test_output_bias_gradient_at_zero():
    # zero inputs and a zero output layer: every sigmoid sits at 0.5
    model, _ = _small_model("multilabel", 0, p_w=0.8)
    model.net.params[-2][:] = 0
    model.net.params[-1][:] = 0
    X = np.zeros((4, 5))
    Y = np.zeros((4, 4))
    logits, state = model.net.forward(X)
    _, dlog = multilabel_loss(logits, Y, 0.8, 0.0)
    grads = model.net.backward(dlog, state)
    # each agent contributes 0.5 * p_w / |batch|
    assert np.allclose(grads[-1], 4 * 0.5 * 0.8 / 4)
    h = 1e-5
    for j in range(4):
        up = model.net.params[-1].copy()
        up[j] += h
        dn = model.net.params[-1].copy()
        dn[j] -= h
        f = []
        for b in (up, dn):
            model.net.params[-1] = b
            f.append(multilabel_loss(model.net.forward(X)[0], Y, 0.8, 0.0)[0])
        model.net.params[-1] = np.zeros(4)
        assert (f[0] - f[1]) / (2 * h) == pytest.approx(grads[-1][j], rel=1e-6)


def test_symmetric_categorical_gradients():
    net = MLP([3, 4, 2], np.random.default_rng(0))
    W = net.params[2]
    W[:, 1] = W[:, 0]
    net.params[3][:] = 0
    X = np.random.default_rng(1).normal(size=(6, 3))
    from recourse_forge.learned.network import categorical_loss

    logits, state = net.forward(X)
    labels = np.array([0, 1, 0, 1, 0, 1])
    _, d = categorical_loss(logits, labels)
    g = net.backward(d, state)
    assert np.allclose(g[2][:, 0], -g[2][:, 1])
    assert np.allclose(g[3][0], -g[3][1])
