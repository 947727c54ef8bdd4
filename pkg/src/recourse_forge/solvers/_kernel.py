"""Compiled depth-first search for unit-demand set cover.

Feature sets are bitmasks split into 64-bit words.

All search state lives in caller-owned arrays so a run can be paused (node
budget exhausted, candidate buffer full) and resumed exactly where it stopped.
"""

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap if not (args and callable(args[0])) else args[0]


DONE, NODE_LIMIT, BUDGET, GROW = 0, 1, 2, 3

# ctl slots
DEPTH, NODES, BAN_SP, NCAND = 0, 1, 2, 3


@njit(cache=True, nogil=True)
def _lower_bound(full, cov, ytab, mincost, mode):
    # cheapest coverer of the hardest remaining feature ...
    lb = 0.0
    s = 0.0
    for w in range(full.shape[0]):
        u = full[w] & ~cov[w]
        if u == 0:
            continue
        if mode != 2:
            for b in range(8):
                s += ytab[8 * w + b, np.int64((u >> np.uint64(8 * b)) & np.uint64(255))]
        i = 64 * w
        while u:
            if u & np.uint64(1):
                if mincost[i] > lb:
                    lb = mincost[i]
            u >>= np.uint64(1)
            i += 1
    # ... or the dual bound, whichever is larger
    if mode == 2:
        return lb
    return max(s, lb)


@njit(cache=True, nogil=True)
def _is_full(full, cov):
    for w in range(full.shape[0]):
        if cov[w] != full[w]:
            return False
    return True


@njit(cache=True, nogil=True)
def _ban(a, act_ptr, act_feat, banned, ban_stack, cnt, ctl):
    banned[a] = 1
    ban_stack[ctl[BAN_SP]] = a
    ctl[BAN_SP] += 1
    for p in range(act_ptr[a], act_ptr[a + 1]):
        cnt[act_feat[p]] -= 1


@njit(cache=True, nogil=True)
def _unwind(base, act_ptr, act_feat, banned, ban_stack, cnt, ctl):
    while ctl[BAN_SP] > base:
        ctl[BAN_SP] -= 1
        a = ban_stack[ctl[BAN_SP]]
        banned[a] = 0
        for p in range(act_ptr[a], act_ptr[a + 1]):
            cnt[act_feat[p]] += 1


@njit(cache=True, nogil=True)
def _compact(cand_len, cand_cost, cand_sets, ncand, limit):
    k = 0
    for c in range(ncand):
        if cand_cost[c] <= limit:
            if k != c:
                cand_cost[k] = cand_cost[c]
                cand_len[k] = cand_len[c]
                for q in range(cand_sets.shape[1]):
                    cand_sets[k, q] = cand_sets[c, q]
            k += 1
    return k


@njit(cache=True, nogil=True)
def cover_search(masks, costs, act_ptr, act_feat, cov_ptr, cov_idx, ytab, mincost, mode, full, rtol,
                 st_covered, st_cost, st_feat, st_pos, st_chosen, st_banbase,
                 banned, ban_stack, cnt, ctl, best,
                 cand_sets, cand_len, cand_cost, node_limit, budget):
    nd = cnt.shape[0]
    nw = full.shape[0]
    acc = np.zeros(nw, dtype=np.uint64)
    spent = 0
    while True:
        d = ctl[DEPTH]
        if d < 0:
            return DONE
        if st_feat[d] == -1:
            if ctl[NODES] >= node_limit:
                return NODE_LIMIT
            if spent >= budget:
                return BUDGET
            ctl[NODES] += 1
            spent += 1
            covered = st_covered[d]
            cost = st_cost[d]
            tol = rtol * max(1.0, abs(best[0]))
            descend = False
            if _is_full(full, covered):
                irredundant = True
                for e in range(d):
                    acc[:] = 0
                    for o in range(d):
                        if o != e:
                            for w in range(nw):
                                acc[w] |= masks[st_chosen[o], w]
                    if _is_full(full, acc):
                        irredundant = False
                        break
                if irredundant and cost <= best[0] + tol:
                    if cost < best[0]:
                        best[0] = cost
                        tol = rtol * max(1.0, abs(cost))
                    n = ctl[NCAND]
                    if n == cand_cost.shape[0]:
                        n = _compact(cand_len, cand_cost, cand_sets, n, best[0] + tol)
                        ctl[NCAND] = n
                    if n == cand_cost.shape[0]:
                        ctl[NODES] -= 1
                        return GROW
                    # record the path sorted ascending (local order == catalog order)
                    for q in range(d):
                        cand_sets[n, q] = st_chosen[q]
                    for q in range(1, d):
                        v = cand_sets[n, q]
                        r = q - 1
                        while r >= 0 and cand_sets[n, r] > v:
                            cand_sets[n, r + 1] = cand_sets[n, r]
                            r -= 1
                        cand_sets[n, r + 1] = v
                    cand_len[n] = d
                    cand_cost[n] = cost
                    ctl[NCAND] = n + 1
            else:
                lb = cost + _lower_bound(full, covered, ytab, mincost, mode)
                if lb <= best[0] + tol:
                    f = -1
                    fc = 1 << 62
                    for i in range(nd):
                        if ((full[i >> 6] & ~covered[i >> 6]) >> np.uint64(i & 63)) & np.uint64(1):
                            if cnt[i] < fc:
                                fc = cnt[i]
                                f = i
                    if fc > 0:
                        st_feat[d] = f
                        st_pos[d] = cov_ptr[f]
                        st_banbase[d] = ctl[BAN_SP]
                        descend = True
            if not descend:
                # leaf or pruned: go back to the parent and ban the action that led here
                st_feat[d] = -1
                ctl[DEPTH] = d - 1
                if d >= 1:
                    _ban(st_chosen[d - 1], act_ptr, act_feat, banned, ban_stack, cnt, ctl)
                    st_pos[d - 1] += 1
                continue
        # expand the next child of frame d
        f = st_feat[d]
        covered = st_covered[d]
        cost = st_cost[d]
        pushed = False
        while st_pos[d] < cov_ptr[f + 1]:
            a = cov_idx[st_pos[d]]
            if banned[a]:
                st_pos[d] += 1
                continue
            tol = rtol * max(1.0, abs(best[0]))
            ccost = cost + costs[a]
            ccov = st_covered[d + 1]
            for w in range(nw):
                ccov[w] = covered[w] | masks[a, w]
            lb = ccost + _lower_bound(full, ccov, ytab, mincost, mode)
            if lb > best[0] + tol:
                _ban(a, act_ptr, act_feat, banned, ban_stack, cnt, ctl)
                st_pos[d] += 1
                continue
            st_chosen[d] = a
            st_cost[d + 1] = ccost
            st_feat[d + 1] = -1
            ctl[DEPTH] = d + 1
            pushed = True
            break
        if not pushed:
            _unwind(st_banbase[d], act_ptr, act_feat, banned, ban_stack, cnt, ctl)
            st_feat[d] = -1
            ctl[DEPTH] = d - 1
            if d >= 1:
                _ban(st_chosen[d - 1], act_ptr, act_feat, banned, ban_stack, cnt, ctl)
                st_pos[d - 1] += 1
