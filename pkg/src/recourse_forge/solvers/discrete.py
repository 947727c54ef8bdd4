"""Exact minimum-cost cover of an agent's deficient features by discrete actions."""

from __future__ import annotations

import time
from typing import Iterable, Optional

import numpy as np

from ..core import ActionCatalog, AgentState, Cfe, ThresholdClassifier
from ..errors import DimensionMismatch, Infeasible, KindMismatch
from . import _kernel
from .canonical import entry_key, pick_canonical
from .common import SolveResult, SolverConfig

_BOUND_MODE = {"lp": 0, "ascent": 1, "maxmin": 2}
# _BYTE_BITS[v, k] is bit k of the byte v
_BYTE_BITS = ((np.arange(256)[:, None] >> np.arange(8)) & 1).astype(np.float64)


def _check_inputs(agent: AgentState, catalog: ActionCatalog, clf):
    if catalog.kind != "discrete":
        raise KindMismatch("hl-discrete solving needs a discrete action catalog")
    if not isinstance(clf, ThresholdClassifier):
        raise KindMismatch("hl-discrete solving needs a threshold classifier")
    if agent.n != clf.n:
        raise DimensionMismatch(f"agent has {agent.n} features but classifier has {clf.n}")
    if len(catalog) and catalog.n != agent.n:
        raise DimensionMismatch(f"agent has {agent.n} features but catalog actions have {catalog.n}")


def dual_bound_weights(A: np.ndarray, costs: np.ndarray, demand: np.ndarray, method: str) -> np.ndarray:
    """Nonnegative y with A^T y <= costs; sum(demand * y) bounds the cover cost from below.

    ``A`` is (features, actions) 0/1. Any such y is a valid bound for every
    sub-problem that has to cover the same features, so it is computed once.
    """
    nf, na = A.shape
    if method == "lp":
        from scipy.optimize import linprog

        res = linprog(costs, A_ub=-A, b_ub=-demand.astype(float), bounds=(0, None), method="highs")
        if res.status == 0 and res.ineqlin is not None:
            y = np.maximum(-np.asarray(res.ineqlin.marginals, dtype=float), 0.0)
        else:
            y = _ascent(A, costs, demand)
    else:
        y = _ascent(A, costs, demand)
    zero = costs <= 0
    if zero.any():
        y[A[:, zero].any(axis=1)] = 0.0
    load = A.T @ y
    pos = costs > 0
    ratio = np.max(load[pos] / costs[pos]) if pos.any() else 0.0
    if ratio > 1.0:
        y = y / ratio
    return y * (1.0 - 1e-9)


def _ascent(A: np.ndarray, costs: np.ndarray, demand: np.ndarray) -> np.ndarray:
    # raise each feature's dual as far as the tightest covering action allows
    nf = A.shape[0]
    y = np.zeros(nf)
    slack = costs.astype(float).copy()
    order = np.argsort(A.sum(axis=1), kind="stable")
    for i in order:
        cov = A[i] > 0
        if not cov.any():
            continue
        inc = max(0.0, slack[cov].min())
        y[i] = inc
        slack[cov] -= inc
    return y


def _greedy_cover(A: np.ndarray, costs: np.ndarray, demand: np.ndarray) -> Optional[list]:
    need = demand.astype(np.int64).copy()
    chosen: list = []
    avail = np.ones(A.shape[1], dtype=bool)
    while need.max(initial=0) > 0:
        gain = (A[need > 0] > 0).sum(axis=0).astype(float)
        gain[~avail] = 0
        if gain.max(initial=0) <= 0:
            return None
        eff = np.where(gain > 0, costs / np.maximum(gain, 1), np.inf)
        j = int(np.argmin(eff))
        chosen.append(j)
        avail[j] = False
        need = need - (A[:, j] > 0)
    # drop redundant picks, most expensive first
    for j in sorted(chosen, key=lambda k: -costs[k]):
        rest = [k for k in chosen if k != j]
        if np.all(A[:, rest].sum(axis=1) >= demand):
            chosen = rest
    return sorted(chosen)


class _Prepared:
    """Per-agent reduction: deficient features x useful, non-dominated actions."""

    def __init__(self, deficit, catalog, allowed, rtol):
        self.D = np.flatnonzero(deficit > 0)
        self.demand = deficit[self.D].astype(np.int64)
        M = catalog.matrix[:, self.D] > 0 if len(catalog) else np.zeros((0, self.D.size), bool)
        idx = np.arange(len(catalog))
        if allowed is not None:
            keep = np.zeros(len(catalog), dtype=bool)
            keep[list(allowed)] = True
            idx = idx[keep]
        idx = idx[M[idx].any(axis=1)]
        costs = catalog.costs[idx]
        A = M[idx].T  # (features, actions)
        if 1 < idx.size <= 2000 and np.all(self.demand == 1):
            # j is dominated if some k covers a superset of j's features strictly cheaper
            scale = max(1.0, float(costs.sum()))
            cover = A.T.astype(np.int32)
            sub = (cover @ cover.T) == cover.sum(axis=1)[:, None]  # sub[j, k]: j's features within k's
            cheaper = costs[None, :] + rtol * scale < costs[:, None]
            dominated = (sub & cheaper).any(axis=1)
            idx, costs, A = idx[~dominated], costs[~dominated], A[:, ~dominated]
        self.idx = idx
        self.costs = costs
        self.A = A.astype(np.float64)

    def infeasible_features(self):
        return self.D[self.A.sum(axis=1) < self.demand]


def solve_hl_discrete(agent: AgentState, catalog: ActionCatalog, clf: ThresholdClassifier,
                      config: Optional[SolverConfig] = None, allowed: Optional[Iterable[int]] = None,
                      upper_bound: Optional[float] = None) -> SolveResult:
    """Cheapest set of actions lifting every feature to its threshold.

    ``allowed`` restricts the usable catalog indices (group access limits).
    ``upper_bound``, when known to be attainable, only speeds up the search.
    """
    config = config or SolverConfig()
    _check_inputs(agent, catalog, clf)
    t0 = time.perf_counter()
    deficit = clf.deficit(agent.features)
    if not deficit.any():
        return SolveResult(Cfe(), True, 0, time.perf_counter() - t0, already_positive=True)
    prep = _Prepared(deficit, catalog, allowed, config.tie_rtol)
    bad = prep.infeasible_features()
    if bad.size:
        raise Infeasible(f"features {bad.tolist()} cannot reach their thresholds with the available actions")

    y = dual_bound_weights(prep.A, prep.costs, prep.demand, "lp" if config.bound == "lp" else "ascent")
    greedy = _greedy_cover(prep.A, prep.costs, prep.demand)
    ub = np.inf
    if greedy is not None:
        ub = float(sum(prep.costs[j] for j in greedy))
    if upper_bound is not None:
        ub = min(ub, float(upper_bound))

    use_kernel = (config.use_kernel and _kernel.HAVE_NUMBA and np.all(prep.demand == 1))
    if use_kernel:
        local_sets, complete, nodes = _run_kernel(prep, y, ub, config, t0)
    else:
        local_sets, complete, nodes = _run_python(prep, y, ub, config, t0)

    cands = []
    for s in local_sets:
        orig = [int(prep.idx[j]) for j in s]
        cands.append((catalog.subset_cost(orig), entry_key((j, 1) for j in orig), orig))
    if not cands:
        if complete or greedy is None:
            raise Infeasible("no combination of the available actions reaches every threshold")
        orig = [int(prep.idx[j]) for j in greedy]
        cands.append((catalog.subset_cost(orig), entry_key((j, 1) for j in orig), orig))
    cost, _, orig = pick_canonical(cands, config.tol)
    cfe = Cfe(tuple((j, 1) for j in orig), cost)
    return SolveResult(cfe, complete, nodes, time.perf_counter() - t0)


def _run_kernel(prep: _Prepared, y, ub, config: SolverConfig, t0):
    A = prep.A > 0
    nd, m = A.shape
    nw = max(1, -(-nd // 64))
    # masks[j, w]: bits of the features action j covers within word w
    padded = np.zeros((64 * nw, m), dtype=bool)
    padded[:nd] = A
    weights = np.uint64(1) << np.arange(64, dtype=np.uint64)
    masks = np.zeros((m, nw), dtype=np.uint64)
    for w in range(nw):
        block = padded[64 * w:64 * (w + 1)]
        masks[:, w] = np.bitwise_or.reduce(np.where(block.T, weights, np.uint64(0)), axis=1) if m else 0
    full = np.zeros(nw, dtype=np.uint64)
    for w in range(nw):
        k = min(64, nd - 64 * w)
        if k > 0:
            full[w] = np.bitwise_or.reduce(weights[:k])
    act_ptr = np.zeros(m + 1, dtype=np.int64)
    act_ptr[1:] = np.cumsum(A.sum(axis=0))
    act_feat = np.concatenate([np.flatnonzero(A[:, j]) for j in range(m)]).astype(np.int64) if m else np.zeros(0, np.int64)
    cov_lists = []
    for i in range(nd):
        js = np.flatnonzero(A[i])
        cov_lists.append(js[np.lexsort((js, prep.costs[js]))])
    cov_ptr = np.zeros(nd + 1, dtype=np.int64)
    cov_ptr[1:] = np.cumsum([len(c) for c in cov_lists])
    cov_idx = np.concatenate(cov_lists).astype(np.int64)
    yp = np.zeros(64 * nw)
    yp[:nd] = y
    # ytab[b, v]: dual weight of the features in byte b whose bits are set in v
    ytab = np.ascontiguousarray((_BYTE_BITS @ yp.reshape(8 * nw, 8).T).T)
    mincost = np.array([prep.costs[c[0]] for c in cov_lists])
    mode = _BOUND_MODE[config.bound]

    st_covered = np.zeros((nd + 1, nw), dtype=np.uint64)
    st_cost = np.zeros(nd + 1)
    st_feat = np.full(nd + 1, -1, dtype=np.int64)
    st_pos = np.zeros(nd + 1, dtype=np.int64)
    st_chosen = np.zeros(nd + 1, dtype=np.int64)
    st_banbase = np.zeros(nd + 1, dtype=np.int64)
    banned = np.zeros(m, dtype=np.uint8)
    ban_stack = np.zeros(m + 1, dtype=np.int64)
    cnt = A.sum(axis=1).astype(np.int64)
    ctl = np.zeros(4, dtype=np.int64)
    best = np.array([ub])
    cap = 16
    cand_sets = np.zeros((cap, nd), dtype=np.int64)
    cand_len = np.zeros(cap, dtype=np.int64)
    cand_cost = np.zeros(cap)

    complete = False
    while True:
        status = _kernel.cover_search(masks, prep.costs, act_ptr, act_feat, cov_ptr, cov_idx, ytab, mincost, mode,
                                      full, config.tie_rtol, st_covered, st_cost, st_feat, st_pos, st_chosen,
                                      st_banbase, banned, ban_stack, cnt, ctl, best, cand_sets, cand_len,
                                      cand_cost, config.node_limit, config.chunk_nodes)
        if status == _kernel.DONE:
            complete = True
            break
        if status == _kernel.NODE_LIMIT:
            break
        if status == _kernel.GROW:
            cap *= 2
            cand_sets = np.concatenate([cand_sets, np.zeros_like(cand_sets)])
            cand_len = np.concatenate([cand_len, np.zeros_like(cand_len)])
            cand_cost = np.concatenate([cand_cost, np.zeros_like(cand_cost)])
            continue
        if config.time_limit is not None and time.perf_counter() - t0 > config.time_limit:
            break
    n = int(ctl[_kernel.NCAND])
    sets = [cand_sets[c, :cand_len[c]].tolist() for c in range(n)]
    return sets, complete, int(ctl[_kernel.NODES])


class _Stop(Exception):
    pass


def _run_python(prep: _Prepared, y, ub, config: SolverConfig, t0):
    """Reference search with general (multi-unit) demands; mirrors the compiled kernel."""
    A = prep.A > 0
    nd, m = A.shape
    costs = prep.costs
    covers = [sorted(np.flatnonzero(A[i]).tolist(), key=lambda j: (costs[j], j)) for i in range(nd)]
    feats = [np.flatnonzero(A[:, j]) for j in range(m)]
    mincost = np.array([costs[c[0]] for c in covers])
    banned = np.zeros(m, dtype=bool)
    avail = A.sum(axis=1).astype(np.int64)
    state = {"best": ub, "nodes": 0, "complete": True}
    cands: list = []

    def lb_of(resid):
        hardest = float(mincost[resid > 0].max(initial=0.0))
        if config.bound == "maxmin":
            return hardest
        return max(hardest, float(resid @ y))

    def ban(j):
        banned[j] = True
        avail[feats[j]] -= 1

    def unban(j):
        banned[j] = False
        avail[feats[j]] += 1

    def irredundant(path):
        total = A[:, path].sum(axis=1)
        return all(np.any(total - A[:, j] < prep.demand) for j in path)

    def visit(path, resid, cost):
        if state["nodes"] >= config.node_limit:
            raise _Stop
        if config.time_limit is not None and state["nodes"] % 1000 == 0 and time.perf_counter() - t0 > config.time_limit:
            raise _Stop
        state["nodes"] += 1
        tol = config.tol(state["best"])
        if not resid.any():
            if irredundant(path) and cost <= state["best"] + tol:
                state["best"] = min(state["best"], cost)
                cands.append((cost, sorted(path)))
            return
        if cost + lb_of(resid) > state["best"] + tol:
            return
        open_ = np.flatnonzero(resid > 0)
        spare = avail[open_] - resid[open_]
        if spare.min() < 0:
            return
        f = int(open_[np.argmin(avail[open_])])
        local_bans = []
        for j in covers[f]:
            if banned[j] or j in path:
                continue
            nres = np.maximum(resid - A[:, j], 0)
            ccost = cost + costs[j]
            if ccost + lb_of(nres) > state["best"] + config.tol(state["best"]):
                ban(j)
                local_bans.append(j)
                continue
            visit(path + [j], nres, ccost)
            ban(j)
            local_bans.append(j)
        for j in local_bans:
            unban(j)

    try:
        visit([], prep.demand.astype(np.int64), 0.0)
    except _Stop:
        state["complete"] = False
    limit = state["best"] + config.tol(state["best"])
    return [s for c, s in cands if c <= limit], state["complete"], state["nodes"]
