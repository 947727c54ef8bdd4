"""Seeded generators for synthetic agents, discrete action catalogs and thresholds."""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from ..core import ActionCatalog, AgentState, DiscreteAction, ThresholdClassifier
from ..errors import ConfigError

PATTERNS = ("ones", "First5", "Last5", "First10", "Last10", "Mid5")

# stream ids, mixed into the seed so each generator gets an independent sequence
_AGENTS, _ACTIONS, _COSTS, _GROUPS, _ACCESS = 0, 1, 2, 3, 4


class DegenerateCatalog(UserWarning):
    """Some feature is covered by no action, so agents lacking it have no CFE."""


def stream(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng([int(seed) & (2**64 - 1), *keys])


_DIST_RE = re.compile(r"^\s*(uniform|exponential|randint)\s*\(([^)]*)\)\s*$")


def parse_cost_distribution(spec: str):
    """``uniform(lo,hi)``, ``exponential(scale)`` or ``randint(lo,hi)`` (inclusive)."""
    m = _DIST_RE.match(spec or "")
    if not m:
        raise ConfigError(f"unrecognised cost distribution {spec!r}")
    name = m.group(1)
    try:
        args = [float(a) for a in m.group(2).split(",") if a.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad cost distribution arguments in {spec!r}") from exc
    if name in ("uniform", "randint"):
        if len(args) != 2 or not 0 <= args[0] <= args[1]:
            raise ConfigError(f"{name} needs 0 <= lo <= hi, got {spec!r}")
    elif len(args) != 1 or args[0] <= 0:
        raise ConfigError(f"exponential needs one positive scale, got {spec!r}")
    return name, args


def draw_costs(spec: str, size: int, rng: np.random.Generator) -> np.ndarray:
    name, args = parse_cost_distribution(spec)
    if name == "uniform":
        return rng.uniform(args[0], args[1], size)
    if name == "randint":
        return rng.integers(int(args[0]), int(args[1]) + 1, size).astype(np.float64)
    return rng.exponential(args[0], size)


def threshold_pattern(spec, n: int) -> np.ndarray:
    """Named threshold vectors; a list is taken literally."""
    if not isinstance(spec, str):
        t = np.asarray(spec, dtype=np.float64)
        if t.shape != (n,):
            raise ConfigError(f"explicit threshold vector has length {t.size}, expected {n}")
        return t
    t = np.zeros(n)
    if spec == "ones":
        t[:] = 1
    elif spec in ("First5", "First10"):
        k = 5 if spec == "First5" else 10
        _need(n, k, spec)
        t[:k] = 1
    elif spec in ("Last5", "Last10"):
        k = 5 if spec == "Last5" else 10
        _need(n, k, spec)
        t[n - k:] = 1
    elif spec == "Mid5":
        _need(n, 5, spec)
        start = (n - 5) // 2
        t[start:start + 5] = 1
    else:
        raise ConfigError(f"unknown threshold pattern {spec!r}; expected one of {PATTERNS}")
    return t


def _need(n, k, spec):
    if n < k:
        raise ConfigError(f"pattern {spec} needs at least {k} features, got {n}")


@dataclass(frozen=True)
class GroupSpec:
    """``manual``: groups share one catalog, each limited to a random subset.
    ``probabilistic``: each group gets its own catalog drawn at its own p_a."""

    kind: str
    num_groups: int = 5
    subset_size: Optional[int] = None
    p_a: tuple = (0.4, 0.5, 0.6, 0.7, 0.8)

    def __post_init__(self):
        if self.kind not in ("manual", "probabilistic"):
            raise ConfigError(f"unknown group kind {self.kind!r}")
        if self.kind == "probabilistic":
            object.__setattr__(self, "p_a", tuple(float(p) for p in self.p_a))
            object.__setattr__(self, "num_groups", len(self.p_a))
            if any(not 0 <= p <= 1 for p in self.p_a):
                raise ConfigError("group p_a values must lie in [0, 1]")
        if self.num_groups < 1:
            raise ConfigError("num_groups must be positive")

    @classmethod
    def from_value(cls, v) -> Optional["GroupSpec"]:
        if v is None or isinstance(v, GroupSpec):
            return v
        if isinstance(v, str):
            return cls(v)
        return cls(**v)

    def names(self) -> list:
        return [f"g{k}" for k in range(self.num_groups)]


@dataclass(frozen=True)
class SynthConfig:
    n: int
    num_agents: int
    num_actions: int = 100
    p_f: float = 0.68
    p_a: float = 0.5
    feature_cost_distribution: str = "exponential(1.0)"
    threshold_spec: object = "ones"
    group_spec: Optional[GroupSpec] = None
    seed: int = 0
    dedupe: bool = False

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("n must be at least 1")
        if self.num_agents < 0 or self.num_actions < 0:
            raise ConfigError("agent and action counts must be nonnegative")
        for name in ("p_f", "p_a"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        parse_cost_distribution(self.feature_cost_distribution)
        if not isinstance(self.threshold_spec, str):
            object.__setattr__(self, "threshold_spec", tuple(float(v) for v in self.threshold_spec))
        threshold_pattern(self.threshold_spec if isinstance(self.threshold_spec, str) else list(self.threshold_spec), self.n)
        object.__setattr__(self, "group_spec", GroupSpec.from_value(self.group_spec))
        object.__setattr__(self, "seed", int(self.seed))

    def to_dict(self) -> dict:
        d = asdict(self)
        if not isinstance(self.threshold_spec, str):
            d["threshold_spec"] = list(self.threshold_spec)
        if self.group_spec is not None:
            d["group_spec"]["p_a"] = list(self.group_spec.p_a)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown synth config keys {sorted(extra)}")
        return cls(**d)


def gen_agents(cfg: SynthConfig) -> list:
    rng = stream(cfg.seed, _AGENTS)
    X = (rng.random((cfg.num_agents, cfg.n)) < cfg.p_f).astype(np.float64)
    groups = [None] * cfg.num_agents
    if cfg.group_spec is not None:
        names = cfg.group_spec.names()
        g = stream(cfg.seed, _GROUPS).integers(0, len(names), cfg.num_agents)
        groups = [names[k] for k in g]
    agents = [AgentState(X[k], groups[k]) for k in range(cfg.num_agents)]
    if cfg.dedupe:
        seen, kept = set(), []
        for a in agents:
            key = (a.features.tobytes(), a.group)
            if key not in seen:
                seen.add(key)
                kept.append(a)
        agents = kept
    return agents


def feature_costs(cfg: SynthConfig) -> np.ndarray:
    return draw_costs(cfg.feature_cost_distribution, cfg.n, stream(cfg.seed, _COSTS))


def _catalog_block(n, num_actions, p_a, fcost, rng, prefix="a"):
    caps = (rng.random((num_actions, n)) < p_a).astype(np.float64)
    actions = []
    for j in range(num_actions):
        cost = math.fsum(fcost[caps[j] > 0].tolist())
        actions.append(DiscreteAction(caps[j], cost, f"{prefix}{j}"))
    return actions


def gen_actions(cfg: SynthConfig) -> ActionCatalog:
    """Binary actions; an action costs the sum of the per-feature costs it covers.

    With probabilistic groups the catalog is the concatenation of one block per
    group, each drawn at that group's coverage probability.
    """
    fcost = feature_costs(cfg)
    gs = cfg.group_spec
    if gs is not None and gs.kind == "probabilistic":
        actions = []
        for k, p in enumerate(gs.p_a):
            actions += _catalog_block(cfg.n, cfg.num_actions, p, fcost, stream(cfg.seed, _ACTIONS, k), f"g{k}a")
    else:
        actions = _catalog_block(cfg.n, cfg.num_actions, cfg.p_a, fcost, stream(cfg.seed, _ACTIONS))
    catalog = ActionCatalog("discrete", tuple(actions))
    uncovered = np.flatnonzero(catalog.matrix.sum(axis=0) == 0) if len(catalog) else np.arange(cfg.n)
    if uncovered.size:
        warnings.warn(f"features {uncovered.tolist()} are covered by no action", DegenerateCatalog, stacklevel=2)
    return catalog


def group_access(cfg: SynthConfig) -> Optional[dict]:
    """Catalog indices each group may use, or None when access is unrestricted."""
    gs = cfg.group_spec
    if gs is None:
        return None
    J = cfg.num_actions
    if gs.kind == "probabilistic":
        return {name: list(range(k * J, (k + 1) * J)) for k, name in enumerate(gs.names())}
    size = gs.subset_size if gs.subset_size is not None else min(J, 2 * max(1, J // gs.num_groups))
    if not 0 < size <= J:
        raise ConfigError(f"group subset size {size} outside 1..{J}")
    rng = stream(cfg.seed, _ACCESS)
    return {name: sorted(rng.choice(J, size, replace=False).tolist()) for name in gs.names()}


def gen_classifier(cfg: SynthConfig) -> ThresholdClassifier:
    t = cfg.threshold_spec if isinstance(cfg.threshold_spec, str) else list(cfg.threshold_spec)
    return ThresholdClassifier(threshold_pattern(t, cfg.n))
