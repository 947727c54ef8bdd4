"""Domain types and the semantics every other module relies on.

Discrete states use additive capability accounting: applying an action adds its
capability vector to the raw 0/1 state, so a feature covered twice reads 2.
Classification compares these counts to the thresholds; ``AgentState.binary()``
clamps back to a 0/1 profile for display.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .errors import DimensionMismatch, IndexOutOfRange, KindMismatch

DEFAULT_MARGIN = 1e-6


def _frozen_vector(values, dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class AgentState:
    features: np.ndarray
    group: Optional[str] = None

    def __post_init__(self):
        arr = _frozen_vector(self.features)
        if arr.size < 1:
            raise DimensionMismatch("agent state needs at least one feature")
        object.__setattr__(self, "features", arr)

    @property
    def n(self) -> int:
        return self.features.size

    def binary(self) -> np.ndarray:
        """0/1 rendering of a (possibly over-covered) discrete state."""
        return np.minimum(self.features, 1.0)

    def __eq__(self, other):
        if not isinstance(other, AgentState):
            return NotImplemented
        return self.group == other.group and np.array_equal(self.features, other.features)

    def __hash__(self):
        return hash((self.features.tobytes(), self.group))

    def __repr__(self):
        return f"AgentState({self.features.tolist()!r}, group={self.group!r})"


@dataclass(frozen=True, eq=False)
class DiscreteAction:
    capabilities: np.ndarray
    cost: float
    name: Optional[str] = None

    def __post_init__(self):
        caps = _frozen_vector(self.capabilities)
        if not np.all((caps == 0) | (caps == 1)):
            raise ValueError("capabilities must be 0/1")
        if not self.cost >= 0:
            raise ValueError(f"action cost must be nonnegative, got {self.cost}")
        object.__setattr__(self, "capabilities", caps)
        object.__setattr__(self, "cost", float(self.cost))

    @property
    def vector(self) -> np.ndarray:
        return self.capabilities


@dataclass(frozen=True, eq=False)
class ContinuousAction:
    effect: np.ndarray
    cost: float
    name: Optional[str] = None

    def __post_init__(self):
        if not self.cost >= 0:
            raise ValueError(f"action cost must be nonnegative, got {self.cost}")
        object.__setattr__(self, "effect", _frozen_vector(self.effect))
        object.__setattr__(self, "cost", float(self.cost))

    @property
    def vector(self) -> np.ndarray:
        return self.effect


Action = Union[DiscreteAction, ContinuousAction]


@dataclass(frozen=True, eq=False)
class ActionCatalog:
    kind: str
    actions: tuple

    def __post_init__(self):
        if self.kind not in ("discrete", "continuous"):
            raise ValueError(f"unknown catalog kind {self.kind!r}")
        actions = tuple(self.actions)
        expected = DiscreteAction if self.kind == "discrete" else ContinuousAction
        for j, a in enumerate(actions):
            if not isinstance(a, expected):
                raise KindMismatch(f"action {j} is not a {expected.__name__}")
        if actions and len({a.vector.size for a in actions}) != 1:
            raise DimensionMismatch("catalog actions have differing lengths")
        object.__setattr__(self, "actions", actions)

    @classmethod
    def discrete(cls, capabilities, costs, names=None) -> "ActionCatalog":
        names = names if names is not None else [None] * len(costs)
        return cls("discrete", tuple(DiscreteAction(v, c, nm) for v, c, nm in zip(capabilities, costs, names)))

    @classmethod
    def continuous(cls, effects, costs, names=None) -> "ActionCatalog":
        names = names if names is not None else [None] * len(costs)
        return cls("continuous", tuple(ContinuousAction(v, c, nm) for v, c, nm in zip(effects, costs, names)))

    def __len__(self):
        return len(self.actions)

    def __getitem__(self, j) -> Action:
        if not 0 <= j < len(self.actions):
            raise IndexOutOfRange(f"action index {j} outside catalog of size {len(self.actions)}")
        return self.actions[j]

    @property
    def n(self) -> int:
        return self.actions[0].vector.size if self.actions else 0

    @cached_property
    def matrix(self) -> np.ndarray:
        """Action vectors stacked row-wise, shape (|J|, n)."""
        if not self.actions:
            return np.zeros((0, 0))
        m = np.stack([a.vector for a in self.actions])
        m.setflags(write=False)
        return m

    @cached_property
    def costs(self) -> np.ndarray:
        c = np.array([a.cost for a in self.actions], dtype=np.float64)
        c.setflags(write=False)
        return c

    def subset_cost(self, indices: Iterable[int]) -> float:
        # ascending index order so identical sets always sum identically
        total = 0.0
        for j in sorted(indices):
            total += self[j].cost
        return total


class Label(str, enum.Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"


@dataclass(frozen=True, eq=False)
class LinearClassifier:
    """Positive iff ``weights . x + intercept >= margin``."""

    weights: np.ndarray
    intercept: float
    margin: float = DEFAULT_MARGIN

    def __post_init__(self):
        object.__setattr__(self, "weights", _frozen_vector(self.weights))
        object.__setattr__(self, "intercept", float(self.intercept))
        object.__setattr__(self, "margin", float(self.margin))
        if not self.margin > 0:
            raise ValueError("linear classifier margin must be positive")

    @property
    def n(self) -> int:
        return self.weights.size

    def score(self, x: np.ndarray) -> float:
        # exactly rounded sum, so every caller gets the same answer at the boundary
        return math.fsum(np.append(self.weights * x, self.intercept).tolist())

    def is_positive(self, x: np.ndarray) -> bool:
        return self.score(x) >= self.margin


@dataclass(frozen=True, eq=False)
class ThresholdClassifier:
    """Positive iff every feature reaches its threshold."""

    t: np.ndarray

    def __post_init__(self):
        t = _frozen_vector(self.t)
        if np.any(t < 0):
            raise ValueError("thresholds must be nonnegative")
        object.__setattr__(self, "t", t)

    @property
    def n(self) -> int:
        return self.t.size

    def is_positive(self, x: np.ndarray) -> bool:
        return bool(np.all(x >= self.t))

    def deficit(self, x: np.ndarray) -> np.ndarray:
        """Number of additional capabilities each feature still needs."""
        return np.maximum(np.ceil(self.t - x - 1e-12), 0).astype(np.int64)


Classifier = Union[LinearClassifier, ThresholdClassifier]


def _check_dims(n_state: int, n_other: int, what: str):
    if n_state != n_other:
        raise DimensionMismatch(f"agent has {n_state} features but {what} has {n_other}")


def classify(state: AgentState, clf: Classifier) -> Label:
    _check_dims(state.n, clf.n, "classifier")
    return Label.POSITIVE if clf.is_positive(state.features) else Label.NEGATIVE


@dataclass(frozen=True)
class Cfe:
    """A canonical set of catalog actions.

    ``entries`` holds ``(action_index, sign)`` pairs sorted by index. Low-level
    (feature-space) explanations carry per-feature amounts in ``deltas`` and use
    the feature index as the entry index.
    """

    entries: tuple = ()
    total_cost: float = field(default=0.0, compare=False)
    hl_id: Optional[int] = field(default=None, compare=False)
    deltas: Optional[tuple] = None

    def __post_init__(self):
        entries = tuple((int(j), int(s)) for j, s in self.entries)
        for _, s in entries:
            if s not in (1, -1):
                raise ValueError(f"entry sign must be +1 or -1, got {s}")
        if list(entries) != sorted(entries) or len({j for j, _ in entries}) != len(entries):
            raise ValueError(f"entries are not canonical: {entries}")
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "total_cost", float(self.total_cost))
        if self.deltas is not None:
            object.__setattr__(self, "deltas", tuple((int(i), float(d)) for i, d in self.deltas))

    @classmethod
    def from_indices(cls, indices: Iterable[int], catalog: ActionCatalog, hl_id=None) -> "Cfe":
        idx = sorted(set(int(j) for j in indices))
        for j in idx:
            catalog[j]
        return cls(tuple((j, 1) for j in idx), catalog.subset_cost(idx), hl_id)

    @classmethod
    def from_signed(cls, signed: Iterable[Sequence[int]], catalog: ActionCatalog, hl_id=None) -> "Cfe":
        entries = sorted((int(j), int(s)) for j, s in signed)
        return cls(tuple(entries), catalog.subset_cost(j for j, _ in entries), hl_id)

    @property
    def indices(self) -> tuple:
        return tuple(j for j, _ in self.entries)

    @property
    def size(self) -> int:
        return len(self.entries)

    @property
    def is_empty(self) -> bool:
        return not self.entries

    def sort_key(self) -> tuple:
        """Lexicographic key: index first, then +1 before -1."""
        return tuple((j, 0 if s > 0 else 1) for j, s in self.entries)

    def with_hl_id(self, hl_id: Optional[int]) -> "Cfe":
        return Cfe(self.entries, self.total_cost, hl_id, self.deltas)


@dataclass(frozen=True)
class AgentCfePair:
    agent: AgentState
    cfe: Cfe
    problem_kind: str = "hl-discrete"

    @classmethod
    def checked(cls, agent, cfe, catalog, clf, problem_kind="hl-discrete") -> "AgentCfePair":
        if not is_valid_cfe(agent, cfe, catalog, clf):
            raise ValueError(f"CFE {cfe.entries} does not flip the classifier for this agent")
        return cls(agent, cfe, problem_kind)


def apply_discrete_action(state: AgentState, action: DiscreteAction) -> AgentState:
    _check_dims(state.n, action.capabilities.size, "action")
    return AgentState(state.features + action.capabilities, state.group)


def apply_continuous_action(state: AgentState, action: ContinuousAction, sign: int = 1) -> AgentState:
    _check_dims(state.n, action.effect.size, "action")
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    return AgentState(state.features + sign * action.effect, state.group)


def apply_cfe(state: AgentState, cfe: Cfe, catalog: Optional[ActionCatalog] = None) -> AgentState:
    if cfe.deltas is not None:
        x = state.features.copy()
        for i, d in cfe.deltas:
            if not 0 <= i < state.n:
                raise IndexOutOfRange(f"feature index {i} outside state of size {state.n}")
            x[i] += d
        return AgentState(x, state.group)
    if cfe.is_empty:
        return state
    if catalog is None:
        raise KindMismatch("an action catalog is required to apply a high-level CFE")
    _check_dims(state.n, catalog.n, "catalog")
    x = state.features.copy()
    for j, s in cfe.entries:
        action = catalog[j]
        if catalog.kind == "discrete":
            if s != 1:
                raise KindMismatch("discrete actions cannot be negated")
            x += action.capabilities
        else:
            x += s * action.effect
    return AgentState(x, state.group)


def is_valid_cfe(state: AgentState, cfe: Cfe, catalog: Optional[ActionCatalog], clf: Classifier) -> bool:
    return classify(apply_cfe(state, cfe, catalog), clf) is Label.POSITIVE


def features_modified(before: AgentState, after: AgentState, tol: float = 1e-9) -> int:
    return int(np.sum(np.abs(after.features - before.features) > tol))
