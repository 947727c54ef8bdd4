"""Feature-space recourse: one step per feature from an explicit grid.

Ties at the optimal cost go to the CFE touching fewer features, then to the
lexicographically smallest ``(feature, delta)`` list.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..core import AgentState, Cfe, LinearClassifier
from ..errors import ConfigError, DataError, DimensionMismatch, Infeasible, KindMismatch
from .canonical import pick_canonical
from .common import SolveResult, SolverConfig


@dataclass(frozen=True)
class LowLevelProblem:
    """Per-feature step grids: ``grids[i]`` is a tuple of ``(delta, cost)``."""

    grids: tuple
    immutable_mask: tuple = ()
    desired_label: str = "positive"

    def __post_init__(self):
        grids = []
        mask = tuple(bool(b) for b in self.immutable_mask) or (False,) * len(self.grids)
        if len(mask) != len(self.grids):
            raise DimensionMismatch("immutable mask and grids differ in length")
        for i, g in enumerate(self.grids):
            steps = tuple((float(d), float(c)) for d, c in g)
            if any(c < 0 for _, c in steps):
                raise ConfigError(f"feature {i} has a negative step cost")
            if mask[i]:
                steps = ((0.0, 0.0),)
            elif (0.0, 0.0) not in steps:
                steps = ((0.0, 0.0),) + steps
            grids.append(steps)
        object.__setattr__(self, "grids", tuple(grids))
        object.__setattr__(self, "immutable_mask", mask)
        if self.desired_label != "positive":
            raise ConfigError("only the positive label can be targeted")

    @property
    def n(self) -> int:
        return len(self.grids)

    @classmethod
    def from_dict(cls, d: dict) -> "LowLevelProblem":
        try:
            grids = [[(s["delta"], s["cost"]) for s in g] for g in d["grids"]]
            return cls(tuple(grids), tuple(d.get("immutable", ())))
        except (KeyError, TypeError) as exc:
            raise DataError(f"bad low-level problem document: {exc}") from exc

    def to_dict(self) -> dict:
        return {"grids": [[{"delta": dl, "cost": c} for dl, c in g] for g in self.grids],
                "immutable": list(self.immutable_mask)}


def low_level_cfe(steps, cost=None) -> Cfe:
    """Build a delta-map CFE from ``(feature, delta, step_cost)`` triples."""
    steps = sorted((int(i), float(d), float(c)) for i, d, c in steps if d != 0)
    total = 0.0
    for _, _, c in steps:
        total += c
    return Cfe(tuple((i, 1 if d > 0 else -1) for i, d, _ in steps), total if cost is None else cost,
               None, tuple((i, d) for i, d, _ in steps))


def low_level_key(steps) -> tuple:
    nz = sorted((int(i), float(d)) for i, d, _ in steps if d != 0)
    return (len(nz), tuple(nz))


def _check_inputs(agent, problem, clf):
    if not isinstance(clf, LinearClassifier):
        raise KindMismatch("low-level solving needs a linear classifier")
    if agent.n != clf.n or problem.n != agent.n:
        raise DimensionMismatch(f"agent has {agent.n} features, classifier {clf.n}, grids {problem.n}")


def _valid(x, clf, steps) -> bool:
    xp = np.array(x, dtype=np.float64, copy=True)
    for i, d, _ in steps:
        xp[i] += d
    return clf.is_positive(xp)


class _Stop(Exception):
    pass


def solve_low_level(agent: AgentState, problem: LowLevelProblem, clf: LinearClassifier,
                    config: Optional[SolverConfig] = None) -> SolveResult:
    config = config or SolverConfig()
    _check_inputs(agent, problem, clf)
    t0 = time.perf_counter()
    x = agent.features
    if clf.is_positive(x):
        return SolveResult(low_level_cfe(()), True, 0, time.perf_counter() - t0, already_positive=True)
    need0 = clf.margin - clf.score(x)
    c = clf.weights

    # a step that does not raise the score can only add cost or size, never win
    feats = []
    for i, g in enumerate(problem.grids):
        opts = sorted(((d, cost) for d, cost in g if c[i] * d > 0), key=lambda s: (s[1], s[0]))
        if not opts:
            continue
        rate = min(cost / (c[i] * d) for d, cost in opts)
        top = max(c[i] * d for d, _ in opts)
        feats.append((rate, i, opts, top))
    feats.sort(key=lambda f: (f[0], f[1]))
    rates = [f[0] for f in feats]
    tops = [f[3] for f in feats]
    nf = len(feats)
    if sum(tops) < need0 - 1e-9 * (abs(need0) + 1.0):
        raise Infeasible("no combination of grid steps flips the classifier")
    eps = 1e-9 * (abs(need0) + sum(tops) + 1.0)

    def frac_bound(k, need):
        lb = 0.0
        for q in range(k, nf):
            if need <= 0:
                break
            take = min(need, tops[q])
            lb += rates[q] * take
            need -= take
        return lb if need <= eps else math.inf

    state = {"best": math.inf, "nodes": 0, "complete": True}
    cands = []

    def visit(k, steps, need, cost):
        if state["nodes"] >= config.node_limit:
            raise _Stop
        if config.time_limit is not None and state["nodes"] % 1000 == 0 and time.perf_counter() - t0 > config.time_limit:
            raise _Stop
        state["nodes"] += 1
        if need <= eps and _valid(x, clf, steps):
            # leaving every remaining feature untouched is cheapest and smallest
            total = low_level_cfe(steps).total_cost
            if total <= state["best"] + config.tol(state["best"]):
                state["best"] = min(state["best"], total)
                cands.append((total, low_level_key(steps), list(steps)))
            return
        for q in range(k, nf):
            if cost + frac_bound(q, need) > state["best"] + config.tol(state["best"]):
                break
            _, i, opts, _ = feats[q]
            for d, sc in opts:
                visit(q + 1, steps + [(i, d, sc)], need - c[i] * d, cost + sc)

    try:
        visit(0, [], need0, 0.0)
    except _Stop:
        state["complete"] = False
    if not cands:
        if state["complete"]:
            raise Infeasible("no combination of grid steps flips the classifier")
        raise Infeasible("search limit reached before any valid CFE was found")
    total, _, steps = pick_canonical(cands, config.tol)
    return SolveResult(low_level_cfe(steps), state["complete"], state["nodes"], time.perf_counter() - t0)
