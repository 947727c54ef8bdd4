import warnings

import numpy as np
import pytest

from recourse_forge import ActionCatalog, AgentCfePair, AgentState, Cfe, ThresholdClassifier, is_valid_cfe
from recourse_forge.errors import ConfigError, DataError
from recourse_forge.solvers import brute_force_discrete, solve_hl_discrete
from recourse_forge.synthdata import (
    AgentCfeDataset,
    DegenerateCatalog,
    GroupSpec,
    SynthConfig,
    augment_dataset,
    build_dataset,
    encode_hl_id,
    encode_named,
    filter_by_frequency,
    gen_actions,
    gen_agents,
    gen_classifier,
    gen_variant_suite,
    generate_dataset,
    load_dataset,
    save_dataset,
    split_train_test,
    verify_dataset,
)
from recourse_forge.synthdata.dataset import dumps_dataset, loads_dataset
from recourse_forge.synthdata.generate import threshold_pattern
from recourse_forge.synthdata.transforms import overshoot_features


def test_agent_density_extremes_and_mean():
    assert all(a.features.sum() == 5 for a in gen_agents(SynthConfig(n=5, num_agents=20, p_f=1.0)))
    assert all(a.features.sum() == 0 for a in gen_agents(SynthConfig(n=5, num_agents=20, p_f=0.0)))
    X = np.array([a.features for a in gen_agents(SynthConfig(n=20, num_agents=10_000, seed=3))])
    assert abs(X.mean() - 0.68) <= 0.02


def test_action_generation():
    cfg = SynthConfig(n=6, num_agents=0, p_a=1.0, seed=1)
    cat = gen_actions(cfg)
    assert np.all(cat.matrix == 1)
    assert np.allclose(cat.costs, cat.costs[0])
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        cat = gen_actions(SynthConfig(n=6, num_agents=0, p_a=0.0))
        assert np.all(cat.matrix == 0)
        assert any(issubclass(x.category, DegenerateCatalog) for x in w)
    cat = gen_actions(SynthConfig(n=16, num_agents=0, num_actions=100, p_a=0.5, seed=4))
    assert abs(cat.matrix.sum(axis=1).mean() - 8) <= 1


def test_threshold_patterns():
    t = threshold_pattern("First5", 20)
    assert t[:5].tolist() == [1] * 5 and t[5:].sum() == 0
    t = threshold_pattern("Last10", 20)
    assert t[10:].tolist() == [1] * 10 and t[:10].sum() == 0
    assert threshold_pattern("Mid5", 20).tolist() == [0] * 7 + [1] * 5 + [0] * 8
    assert threshold_pattern("First10", 20).sum() == 10 and threshold_pattern("Last5", 20).sum() == 5


def test_all_positive_agents_give_empty_dataset():
    cfg = SynthConfig(n=5, num_agents=30, p_f=1.0, seed=0)
    ds = generate_dataset(cfg)
    assert len(ds.pairs) == 0 and ds.meta["already_positive"] == 30


def test_dataset_validity_and_size_profile():
    ds = generate_dataset(SynthConfig(n=20, num_agents=1500, seed=7))
    assert verify_dataset(ds) == []
    sizes = np.array([p.cfe.size for p in ds.pairs])
    assert (sizes <= 3).mean() >= 0.95
    assert 0.20 <= (sizes == 1).mean() <= 0.45


def test_dataset_matches_brute_force_on_small_catalog():
    cfg = SynthConfig(n=8, num_agents=60, num_actions=14, seed=9)
    ds = generate_dataset(cfg)
    for p in ds.pairs:
        assert p.cfe == brute_force_discrete(p.agent, ds.catalog, ds.classifier)


def _toy_dataset(counts):
    cat = ActionCatalog.discrete(np.eye(3, dtype=int), [1, 1, 1])
    clf = ThresholdClassifier([1, 1, 1])
    pairs = []
    for j, c in enumerate(counts):
        x = np.ones(3)
        x[j] = 0
        for _ in range(c):
            pairs.append(AgentCfePair(AgentState(x), Cfe(((j, 1),), 1.0)))
    return AgentCfeDataset(tuple(pairs), cat, clf)


def test_frequency_filter():
    ds = _toy_dataset([50, 12, 3])
    assert {p.cfe.indices for p in filter_by_frequency(ds, 40).pairs} == {(0,)}
    assert {p.cfe.indices for p in filter_by_frequency(ds, 10).pairs} == {(0,), (1,)}
    assert len(filter_by_frequency(ds, 0).pairs) == 65
    assert filter_by_frequency(ds, 10).frequency_filter == ">10"


def test_hl_id_encoding():
    ds = encode_hl_id(_toy_dataset([2, 1, 3]))
    ids = [p.cfe.hl_id for p in ds.pairs]
    assert ids == [0, 0, 1, 2, 2, 2]
    assert ds.id_table == (((0, 1),), ((1, 1),), ((2, 1),))
    assert encode_named(ds).encoding == "named"


def test_named_form_of_multi_action_cfe():
    cat = ActionCatalog.discrete([[0, 0, 1, 1, 0], [0, 1, 0, 0, 0], [1, 0, 0, 0, 0]], [1, 1, 1])
    clf = ThresholdClassifier([1] * 5)
    a = AgentState([0, 0, 0, 0, 1])
    ds = build_dataset([a], cat, clf)
    assert ds.pairs[0].cfe.indices == (0, 1, 2)
    enc = encode_hl_id(ds)
    assert enc.pairs[0].cfe.hl_id == 0 and enc.id_table[0] == ((0, 1), (1, 1), (2, 1))


def test_overshoot_candidate_and_augmentation():
    cat = ActionCatalog.discrete([[1, 0, 1], [0, 0, 1]], [1.0, 0.5])
    clf = ThresholdClassifier([1, 1, 1])
    a = AgentState([1, 1, 0])
    ds = build_dataset([a], cat, clf)
    assert ds.pairs[0].cfe.indices == (1,)
    cat2 = ActionCatalog.discrete([[1, 0, 1]], [1.0])
    ds2 = build_dataset([a], cat2, clf)
    assert overshoot_features(a, ds2.pairs[0].cfe.entries, ds2) == [0]
    aug = augment_dataset(ds2, "ag1")
    assert len(aug.pairs) == 2
    new = aug.pairs[1]
    assert new.agent.features.tolist() == [0, 1, 0]
    assert new.cfe == brute_force_discrete(new.agent, cat2, clf)


def test_augmentation_identity_when_frequent():
    ds = _toy_dataset([2, 3, 2])
    assert len(augment_dataset(ds, "ag1").pairs) == len(ds.pairs)


def test_augmentation_refuses_test_split():
    _, te = split_train_test(_toy_dataset([5, 5, 5]), 0.8, 0)
    with pytest.raises(ConfigError):
        augment_dataset(te, "ag2")


def test_augmented_pairs_are_optimal():
    ds = generate_dataset(SynthConfig(n=20, num_agents=300, seed=2))
    aug = augment_dataset(ds, "ag2", seed=1)
    assert len(aug.pairs) > len(ds.pairs)
    for p in aug.pairs[len(ds.pairs):]:
        assert solve_hl_discrete(p.agent, aug.catalog, aug.classifier).cfe == p.cfe


def test_split():
    ds = _toy_dataset([40, 40, 20])
    tr, te = split_train_test(ds, 0.8, 3)
    assert (len(tr.pairs), len(te.pairs)) == (80, 20)
    tr2, _ = split_train_test(ds, 0.8, 3)
    assert dumps_dataset(tr) == dumps_dataset(tr2)
    tr, te = split_train_test(ds, 1.0, 0)
    assert len(te.pairs) == 0


def test_first5_cfes_cover_only_first_features():
    ds = generate_dataset(SynthConfig(n=20, num_agents=300, threshold_spec="First5", seed=1))
    for p in ds.pairs:
        after = p.agent.features + sum(ds.catalog[j].capabilities for j in p.cfe.indices)
        assert np.all(after[:5] >= 1)
        # dropping any action breaks one of the first five features
        for j in p.cfe.indices:
            rest = after - ds.catalog[j].capabilities
            assert np.any(rest[:5] < 1)


def test_probabilistic_groups_weak_monotonicity():
    cfg = SynthConfig(n=20, num_agents=2000, group_spec=GroupSpec("probabilistic"), seed=5)
    ds = generate_dataset(cfg)
    sizes = {}
    for p in ds.pairs:
        sizes.setdefault(p.agent.group, []).append(p.cfe.size)
    groups = sorted(sizes)
    assert len(groups) == 5
    # group k draws its catalog at p_a = 0.4 + 0.1 k; richer actions need no more of them
    assert np.mean(sizes[groups[-1]]) <= np.mean(sizes[groups[0]])
    for p in ds.pairs[:200]:
        assert set(p.cfe.indices) <= set(ds.group_access[p.agent.group])


def test_manual_groups_respect_access():
    ds = gen_variant_suite("manual_groups", SynthConfig(n=20, num_agents=300, seed=3))[0]
    for p in ds.pairs:
        assert set(p.cfe.indices) <= set(ds.group_access[p.agent.group])


def test_variant_suites():
    cfgs = gen_variant_suite("feature_satisfiability", SynthConfig(n=20, num_agents=40, seed=1))
    assert [d.classifier.t.sum() for d in cfgs] == [5, 5, 10, 10, 5]
    with pytest.raises(ConfigError):
        gen_variant_suite("nope", SynthConfig(n=20, num_agents=1))


def test_generation_is_deterministic(tmp_path):
    cfg = SynthConfig(n=20, num_agents=200, seed=42)
    save_dataset(tmp_path / "a.jsonl", generate_dataset(cfg))
    save_dataset(tmp_path / "b.jsonl", generate_dataset(cfg))
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def test_dataset_round_trip(tmp_path):
    ds = encode_hl_id(generate_dataset(SynthConfig(n=10, num_agents=100, seed=1)))
    save_dataset(tmp_path / "d.jsonl", ds)
    back = load_dataset(tmp_path / "d.jsonl", validate=True)
    assert dumps_dataset(back) == dumps_dataset(ds)


def test_corrupt_record_names_index(tmp_path):
    ds = generate_dataset(SynthConfig(n=10, num_agents=20, seed=1))
    lines = dumps_dataset(ds).splitlines()
    lines[4] = lines[4].replace('"cfe"', '"cfx"')
    with pytest.raises(DataError, match="record 3"):
        loads_dataset(lines)
