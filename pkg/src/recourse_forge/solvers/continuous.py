"""Exact minimum-cost signed action set for a linear classifier.

Each action is taken with sign +1, -1 or not at all. Its contribution to the
score is ``z_j * (c . v_j)`` and its cost does not depend on the sign. So with no
state constraints only the helpful sign matters, and the problem is a covering
knapsack: reach the missing score at least cost.
"""

from __future__ import annotations

import math
import time
from typing import Optional

import numpy as np

from ..core import ActionCatalog, AgentState, Cfe, LinearClassifier
from ..errors import DimensionMismatch, Infeasible, KindMismatch
from .canonical import entry_key, pick_canonical
from .common import SolveResult, SolverConfig


def _check_inputs(agent, catalog, clf):
    if catalog.kind != "continuous":
        raise KindMismatch("hl-continuous solving needs a continuous action catalog")
    if not isinstance(clf, LinearClassifier):
        raise KindMismatch("hl-continuous solving needs a linear classifier")
    if agent.n != clf.n:
        raise DimensionMismatch(f"agent has {agent.n} features but classifier has {clf.n}")
    if len(catalog) and catalog.n != agent.n:
        raise DimensionMismatch(f"agent has {agent.n} features but catalog actions have {catalog.n}")


def signed_state(x: np.ndarray, catalog: ActionCatalog, entries) -> np.ndarray:
    """Post-action state, summed in ascending index order."""
    out = np.array(x, dtype=np.float64, copy=True)
    for j, s in sorted(entries):
        out += s * catalog.actions[j].effect
    return out


def signed_valid(x, catalog, clf, entries, nonneg: bool) -> bool:
    xp = signed_state(x, catalog, entries)
    if nonneg and np.any(xp < 0):
        return False
    return clf.is_positive(xp)


def signed_irredundant(x, catalog, clf, entries, nonneg: bool) -> bool:
    entries = list(entries)
    for k in range(len(entries)):
        if signed_valid(x, catalog, clf, entries[:k] + entries[k + 1:], nonneg):
            return False
    return True


class _Stop(Exception):
    pass


def solve_hl_continuous(agent: AgentState, catalog: ActionCatalog, clf: LinearClassifier,
                        config: Optional[SolverConfig] = None, allowed=None) -> SolveResult:
    config = config or SolverConfig()
    _check_inputs(agent, catalog, clf)
    t0 = time.perf_counter()
    x = agent.features
    nonneg = config.enforce_nonnegative
    if clf.is_positive(x) and not (nonneg and np.any(x < 0)):
        return SolveResult(Cfe(), True, 0, time.perf_counter() - t0, already_positive=True)

    need0 = clf.margin - clf.score(x)
    w = catalog.matrix @ clf.weights if len(catalog) else np.zeros(0)
    idx = np.arange(len(catalog))
    if allowed is not None:
        idx = np.array(sorted(set(int(j) for j in allowed)), dtype=np.int64)
    if not nonneg:
        idx = idx[w[idx] != 0]
    benefit = np.abs(w[idx])
    costs = catalog.costs[idx]
    best_sign = np.where(w[idx] >= 0, 1, -1)
    if benefit.sum() < need0 - 1e-9 * (abs(need0) + 1.0):
        raise Infeasible("even every action at its helpful sign cannot reach the classifier margin")

    # cheapest benefit per unit first; zero-benefit actions (only kept under the
    # nonnegativity constraint) go last
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(benefit > 0, costs / np.where(benefit > 0, benefit, 1), np.inf)
    order = np.lexsort((idx, ratio))
    idx, benefit, costs, best_sign, ratio = idx[order], benefit[order], costs[order], best_sign[order], ratio[order]
    m = idx.size
    eps = 1e-9 * (abs(need0) + float(benefit.sum()) + 1.0)

    def frac_bound(k, need):
        lb = 0.0
        for q in range(k, m):
            if need <= 0:
                break
            if benefit[q] <= 0:
                return math.inf
            take = min(1.0, need / benefit[q])
            lb += take * costs[q]
            need -= take * benefit[q]
        return lb if need <= eps else math.inf

    state = {"best": math.inf, "nodes": 0, "complete": True}
    cands = []

    def record(path, cost):
        entries = sorted((int(idx[q]), int(s)) for q, s in path)
        if not signed_irredundant(x, catalog, clf, entries, nonneg):
            return
        cost = catalog.subset_cost(j for j, _ in entries)
        if cost <= state["best"] + config.tol(state["best"]):
            state["best"] = min(state["best"], cost)
            cands.append((cost, entry_key(entries), entries))

    def visit(k, path, need, cost):
        if state["nodes"] >= config.node_limit:
            raise _Stop
        if config.time_limit is not None and state["nodes"] % 1000 == 0 and time.perf_counter() - t0 > config.time_limit:
            raise _Stop
        state["nodes"] += 1
        if need <= eps:
            entries = [(int(idx[q]), int(s)) for q, s in path]
            if signed_valid(x, catalog, clf, entries, nonneg):
                record(path, cost)
                return
        # branch on the next included item; the fractional bound only grows with
        # the start position, so the first failing q ends the loop
        for q in range(k, m):
            if cost + frac_bound(q, need) > state["best"] + config.tol(state["best"]):
                break
            signs = (best_sign[q], -best_sign[q]) if nonneg else (best_sign[q],)
            for s in signs:
                gain = benefit[q] if s == best_sign[q] else -benefit[q]
                visit(q + 1, path + [(q, s)], need - gain, cost + costs[q])

    try:
        visit(0, [], need0, 0.0)
    except _Stop:
        state["complete"] = False
    if not cands:
        if state["complete"]:
            raise Infeasible("no signed action set reaches the classifier margin")
        raise Infeasible("search limit reached before any valid CFE was found")
    cost, _, entries = pick_canonical(cands, config.tol)
    return SolveResult(Cfe(tuple(entries), cost), state["complete"], state["nodes"], time.perf_counter() - t0)
