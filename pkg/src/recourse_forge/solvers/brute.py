"""Exhaustive oracles for the exact solvers (small instances only).

They share nothing with the search code beyond the tie rule: enumerate every
assignment, keep the valid irredundant ones, take the cheapest, break ties
lexicographically.
"""

from __future__ import annotations

import itertools
from typing import Optional

import numpy as np

from ..core import ActionCatalog, AgentState, Cfe, LinearClassifier, ThresholdClassifier
from ..errors import CatalogTooLarge, Infeasible, KindMismatch
from .canonical import entry_key, pick_canonical
from .common import SolverConfig
from .continuous import signed_valid
from .lowlevel import LowLevelProblem, low_level_cfe, low_level_key

MAX_DISCRETE = 20
MAX_CONTINUOUS = 12


def brute_force_discrete(agent: AgentState, catalog: ActionCatalog, clf: ThresholdClassifier,
                         config: Optional[SolverConfig] = None) -> Cfe:
    config = config or SolverConfig()
    if catalog.kind != "discrete" or not isinstance(clf, ThresholdClassifier):
        raise KindMismatch("discrete oracle needs a discrete catalog and a threshold classifier")
    J = len(catalog)
    if J > MAX_DISCRETE:
        raise CatalogTooLarge(f"catalog has {J} actions; exhaustive search allows at most {MAX_DISCRETE}")
    if clf.is_positive(agent.features):
        return Cfe()
    codes = np.arange(1 << J, dtype=np.int64)
    member = ((codes[:, None] >> np.arange(J)) & 1).astype(bool)
    state = np.tile(agent.features, (codes.size, 1))
    cost = np.zeros(codes.size)
    for j in range(J):
        state[member[:, j]] += catalog.actions[j].capabilities
        cost = cost + np.where(member[:, j], catalog.actions[j].cost, 0.0)
    valid = np.all(state >= clf.t, axis=1)
    irred = valid.copy()
    for j in range(J):
        has = member[:, j]
        irred[has] &= ~valid[codes[has] ^ (1 << j)]
    winners = np.flatnonzero(irred)
    if winners.size == 0:
        raise Infeasible("no subset of the catalog reaches every threshold")
    cands = []
    for code in winners:
        idx = np.flatnonzero(member[code]).tolist()
        cands.append((float(cost[code]), entry_key((j, 1) for j in idx), idx))
    c, _, idx = pick_canonical(cands, config.tol)
    return Cfe(tuple((j, 1) for j in idx), c)


def brute_force_continuous(agent: AgentState, catalog: ActionCatalog, clf: LinearClassifier,
                           config: Optional[SolverConfig] = None) -> Cfe:
    config = config or SolverConfig()
    if catalog.kind != "continuous" or not isinstance(clf, LinearClassifier):
        raise KindMismatch("continuous oracle needs a continuous catalog and a linear classifier")
    J = len(catalog)
    if J > MAX_CONTINUOUS:
        raise CatalogTooLarge(f"catalog has {J} actions; exhaustive search allows at most {MAX_CONTINUOUS}")
    nonneg = config.enforce_nonnegative
    x = agent.features
    if clf.is_positive(x) and not (nonneg and np.any(x < 0)):
        return Cfe()
    # digit j of the base-3 code: 0 absent, 1 plus, 2 minus. Tables grow one action
    # at a time: appending digit d to every code of the first j actions adds d * 3^j.
    score = np.array([float(np.dot(clf.weights, x)) + clf.intercept])
    cost = np.zeros(1)
    state = x[None, :].copy() if nonneg else None
    for j in range(J):
        a = catalog.actions[j]
        s = float(np.dot(clf.weights, a.effect))
        score = np.concatenate([score, score + s, score - s])
        cost = np.concatenate([cost, cost + a.cost, cost + a.cost])
        if nonneg:
            state = np.concatenate([state, state + a.effect, state - a.effect])
    codes = np.arange(3 ** J, dtype=np.int64)
    pow3 = 3 ** np.arange(J, dtype=np.int64)

    def entries_of(code):
        out = []
        for j in range(J):
            d = (int(code) // int(pow3[j])) % 3
            if d:
                out.append((j, 1 if d == 1 else -1))
        return out

    valid = score >= clf.margin
    if nonneg:
        valid &= np.all(state >= 0, axis=1)
    # near the margin the running sums may round differently; settle those exactly
    near = np.flatnonzero(np.abs(score - clf.margin) <= 1e-7 * (1.0 + np.abs(score)))
    for code in near:
        valid[code] = signed_valid(x, catalog, clf, entries_of(code), nonneg)
    irred = valid.copy()
    for j in range(J):
        d = (codes // pow3[j]) % 3
        has = d > 0
        irred[has] &= ~valid[codes[has] - d[has] * pow3[j]]
    winners = np.flatnonzero(irred)
    if winners.size == 0:
        raise Infeasible("no signed subset of the catalog reaches the classifier margin")
    cands = []
    for code in winners:
        entries = entries_of(code)
        cands.append((float(cost[code]), entry_key(entries), entries))
    c, _, entries = pick_canonical(cands, config.tol)
    return Cfe(tuple(entries), c)


def brute_force_low_level(agent: AgentState, problem: LowLevelProblem, clf: LinearClassifier,
                          config: Optional[SolverConfig] = None) -> Cfe:
    config = config or SolverConfig()
    x = agent.features
    if clf.is_positive(x):
        return low_level_cfe(())
    cands = []
    for combo in itertools.product(*[[(i, d, c) for d, c in g] for i, g in enumerate(problem.grids)]):
        xp = x.copy()
        for i, d, _ in combo:
            xp[i] += d
        if clf.is_positive(xp):
            steps = [s for s in combo if s[1] != 0]
            cfe = low_level_cfe(steps)
            cands.append((cfe.total_cost, low_level_key(steps), cfe))
    if not cands:
        raise Infeasible("no combination of grid steps flips the classifier")
    return pick_canonical(cands, config.tol)[2]
