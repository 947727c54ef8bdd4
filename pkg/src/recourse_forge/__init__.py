"""Optimal high-level counterfactual explanations and learned generators for them."""

from .core import (
    ActionCatalog,
    AgentCfePair,
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

__version__ = "0.1.0"
