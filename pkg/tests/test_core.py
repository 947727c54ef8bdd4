import numpy as np
import pytest

from recourse_forge import (
    ActionCatalog,
    AgentState,
    Cfe,
    ContinuousAction,
    DiscreteAction,
    Label,
    LinearClassifier,
    ThresholdClassifier,
    apply_cfe,
    apply_continuous_action,
    apply_discrete_action,
    classify,
    is_valid_cfe,
)
from recourse_forge.core import features_modified
from recourse_forge.errors import DimensionMismatch, IndexOutOfRange
from recourse_forge.formats import catalog_from_dict, catalog_to_dict, classifier_from_dict, classifier_to_dict


def test_threshold_met_exactly_is_positive():
    assert classify(AgentState([1, 1]), ThresholdClassifier([1, 1])) is Label.POSITIVE


def test_single_satisfied_feature_is_negative():
    assert classify(AgentState([0, 0, 0, 0, 1]), ThresholdClassifier([1] * 5)) is Label.NEGATIVE


def test_linear_margin():
    clf = LinearClassifier([1, 1], -3, 0.5)
    assert classify(AgentState([2, 2]), clf) is Label.POSITIVE
    assert classify(AgentState([1.5, 1.9]), clf) is Label.NEGATIVE


def test_classify_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        classify(AgentState([1, 1, 1]), ThresholdClassifier([1, 1]))


def test_discrete_action_counts_and_binary_render():
    s = apply_discrete_action(AgentState([0, 0, 0, 0, 1]), DiscreteAction([1, 1, 0, 0, 0], 1.0))
    assert s.features.tolist() == [1, 1, 0, 0, 1]
    s = apply_discrete_action(AgentState([1, 0]), DiscreteAction([1, 0], 1.0))
    assert s.features.tolist() == [2, 0]
    assert s.binary().tolist() == [1, 0]
    assert apply_discrete_action(AgentState([0, 0]), DiscreteAction([0, 0], 0.0)).features.tolist() == [0, 0]


def test_continuous_action_signs():
    a = ContinuousAction([3, 0], 1.0)
    assert apply_continuous_action(AgentState([1, 2]), a, 1).features.tolist() == [4, 2]
    assert apply_continuous_action(AgentState([1, 2]), a, -1).features.tolist() == [-2, 2]
    z = ContinuousAction([0, 0], 1.0)
    for s in (1, -1):
        assert apply_continuous_action(AgentState([0, 0]), z, s).features.tolist() == [0, 0]


def test_apply_cfe_folds_actions():
    cat = ActionCatalog.discrete([[1, 0, 0], [0, 1, 0]], [1, 1])
    assert apply_cfe(AgentState([0, 0, 1]), Cfe(((0, 1), (1, 1))), cat).features.tolist() == [1, 1, 1]
    assert apply_cfe(AgentState([0, 0, 1]), Cfe(), cat).features.tolist() == [0, 0, 1]
    ccat = ActionCatalog.continuous([[2, 0], [0, 2]], [1, 1])
    assert apply_cfe(AgentState([0, 0]), Cfe(((0, 1), (1, 1))), ccat).features.tolist() == [2, 2]


def test_validity():
    clf = ThresholdClassifier([1, 1, 1])
    cat = ActionCatalog.discrete([[1, 1, 0], [1, 1, 1]], [1, 2])
    assert is_valid_cfe(AgentState([1, 1, 1]), Cfe(), cat, clf)
    assert not is_valid_cfe(AgentState([0, 0, 0]), Cfe(((0, 1),)), cat, clf)
    assert is_valid_cfe(AgentState([0, 0, 0]), Cfe(((1, 1),)), cat, clf)


def test_catalog_index_errors():
    cat = ActionCatalog.discrete([[1, 0]], [1])
    with pytest.raises(IndexOutOfRange):
        cat[3]


def test_cfe_canonical_form_enforced():
    with pytest.raises(ValueError):
        Cfe(((2, 1), (0, 1)))
    with pytest.raises(ValueError):
        Cfe(((0, 1), (0, -1)))


def test_features_modified_tolerance():
    assert features_modified(AgentState([0, 0, 0]), AgentState([1e-12, 1, 0])) == 1


def test_round_trip_documents():
    cat = ActionCatalog.continuous([[0.5, -1], [2, 0]], [1.25, 3])
    back_cat = catalog_from_dict(catalog_to_dict(cat))
    assert back_cat.kind == cat.kind
    assert np.array_equal(back_cat.matrix, cat.matrix) and np.array_equal(back_cat.costs, cat.costs)
    clf = LinearClassifier([0.1, -2], 0.3, 0.5)
    back = classifier_from_dict(classifier_to_dict(clf))
    assert back.weights.tolist() == clf.weights.tolist() and back.intercept == clf.intercept
