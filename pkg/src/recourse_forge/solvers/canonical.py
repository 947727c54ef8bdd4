from __future__ import annotations

from typing import Iterable

from ..core import Cfe
from ..errors import EmptyCandidates


def entry_key(entries) -> tuple:
    """Ordering key for a sorted (index, sign) list: index first, +1 before -1."""
    return tuple((int(j), 0 if s > 0 else 1) for j, s in entries)


def canonicalize_cfe(candidates: Iterable[Cfe]) -> Cfe:
    """Pick the lexicographically smallest of a set of equally good CFEs."""
    best = None
    for c in candidates:
        if best is None or c.sort_key() < best.sort_key():
            best = c
    if best is None:
        raise EmptyCandidates("no candidate CFEs to choose from")
    return best


def pick_canonical(cands, tol_fn):
    """Two-phase tie rule over ``(cost, key, payload)`` triples.

    Find the minimum cost, keep everything within tolerance of it, return the
    entry with the smallest key.
    """
    cands = list(cands)
    if not cands:
        raise EmptyCandidates("no candidate CFEs to choose from")
    cstar = min(c[0] for c in cands)
    cutoff = cstar + tol_fn(cstar)
    return min((c for c in cands if c[0] <= cutoff), key=lambda c: c[1])
