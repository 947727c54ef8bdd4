"""Frequency filtering, information-access encodings, augmentation and splitting."""

from __future__ import annotations

import logging
import math
from collections import Counter

import numpy as np

from ..core import AgentCfePair, AgentState, ThresholdClassifier
from ..errors import ConfigError, Infeasible, KindMismatch
from ..solvers import SolverConfig, solve_hl_discrete
from .dataset import AgentCfeDataset, filter_name
from .generate import stream

log = logging.getLogger(__name__)

AUGMENT_TARGETS = {"ag1": 2, "ag2": 20}


def filter_by_frequency(ds: AgentCfeDataset, min_count: int) -> AgentCfeDataset:
    """Keep pairs whose CFE is shared by more than ``min_count`` agents."""
    if min_count < 0:
        raise ConfigError("min_count must be nonnegative")
    if ds.split_tag != "unsplit":
        log.warning("filtering a %s split; frequencies are counted within it", ds.split_tag)
    counts = ds.cfe_frequency_table
    pairs = tuple(p for p in ds.pairs if counts[p.cfe] > min_count)
    return ds.replace(pairs=pairs, frequency_filter=filter_name(min_count))


def encode_hl_id(ds: AgentCfeDataset) -> AgentCfeDataset:
    """Label each distinct CFE with an integer, in order of first appearance."""
    table, ids, pairs = [], {}, []
    for p in ds.pairs:
        key = p.cfe.entries
        if key not in ids:
            ids[key] = len(table)
            table.append(key)
        pairs.append(AgentCfePair(p.agent, p.cfe.with_hl_id(ids[key]), p.problem_kind))
    return ds.replace(pairs=tuple(pairs), encoding="id", id_table=tuple(table))


def encode_named(ds: AgentCfeDataset) -> AgentCfeDataset:
    """CFEs as catalog indices only; action effects are not written per record."""
    return ds.replace(encoding="named")


def encode_raw(ds: AgentCfeDataset) -> AgentCfeDataset:
    return ds.replace(encoding="raw")


def overshoot_features(agent: AgentState, entries, ds: AgentCfeDataset) -> list:
    """Features that stay at threshold even if the agent's own value drops by one."""
    after = agent.features.copy()
    for j, _ in entries:
        after += ds.catalog[j].capabilities
    t = ds.classifier.t
    return np.flatnonzero((agent.features >= 1) & (after - 1 >= t)).tolist()


def _candidate_subsets(ids, rng, limit):
    """Non-empty subsets of ``ids`` in a seeded order, at most ``limit`` of them."""
    k = len(ids)
    if k == 0:
        return
    if k <= 12:
        codes = np.arange(1, 1 << k)
        rng.shuffle(codes)
        for code in codes[:limit]:
            yield [ids[b] for b in range(k) if code >> b & 1]
        return
    seen = set()
    tries = 0
    while len(seen) < limit and tries < 4 * limit:
        tries += 1
        mask = rng.random(k) < 0.5
        if not mask.any():
            continue
        key = mask.tobytes()
        if key in seen:
            continue
        seen.add(key)
        yield [ids[b] for b in np.flatnonzero(mask)]


def augment_dataset(ds: AgentCfeDataset, mode: str, config: SolverConfig = None, seed: int = 0,
                    max_candidates_per_agent: int = 256) -> AgentCfeDataset:
    """Add worse-off copies of agents whose CFE is rare, keeping only copies that
    re-solve to the same canonical CFE.

    A copy lowers some overshoot features from 1 to 0. CFEs are topped up in order
    of first appearance until they reach the mode's target count.
    """
    mode = mode.lower()
    if mode not in AUGMENT_TARGETS:
        raise ConfigError(f"augmentation mode must be ag1 or ag2, got {mode!r}")
    if ds.problem_kind != "hl-discrete" or not isinstance(ds.classifier, ThresholdClassifier):
        raise KindMismatch("augmentation applies to hl-discrete datasets with a threshold classifier")
    if ds.split_tag == "test":
        raise ConfigError("refusing to augment a test split")
    config = config or SolverConfig()
    target = AUGMENT_TARGETS[mode]
    counts = ds.cfe_frequency_table
    by_cfe = {}
    for k, p in enumerate(ds.pairs):
        by_cfe.setdefault(p.cfe, []).append((k, p))
    added, tried, rejected = [], 0, 0
    for cfe, members in by_cfe.items():
        have = counts[cfe]
        if have >= target:
            continue
        seen = {p.agent.features.tobytes() for _, p in members}
        for k, src in members:
            if have >= target:
                break
            ids = overshoot_features(src.agent, cfe.entries, ds)
            rng = stream(seed, 7, k)
            allowed = ds.allowed_for(src.agent.group)
            for sub in _candidate_subsets(ids, rng, max_candidates_per_agent):
                x = src.agent.features.copy()
                x[sub] -= 1
                key = x.tobytes()
                if key in seen:
                    continue
                seen.add(key)
                cand = AgentState(x, src.agent.group)
                tried += 1
                try:
                    res = solve_hl_discrete(cand, ds.catalog, ds.classifier, config, allowed=allowed,
                                            upper_bound=cfe.total_cost * (1 + 1e-9) + 1e-12)
                except Infeasible:
                    rejected += 1
                    continue
                if res.optimal and res.cfe == cfe:
                    added.append(AgentCfePair(cand, res.cfe.with_hl_id(cfe.hl_id), src.problem_kind))
                    have += 1
                    if have >= target:
                        break
                else:
                    rejected += 1
    meta = dict(ds.meta)
    meta["augment"] = {"mode": mode, "target": target, "added": len(added), "candidates": tried,
                       "rejected": rejected, "seed": seed}
    log.info("augmentation %s added %d agents (%d candidates, %d rejected)", mode, len(added), tried, rejected)
    return ds.replace(pairs=ds.pairs + tuple(added), meta=meta)


def split_train_test(ds: AgentCfeDataset, ratio: float = 0.8, seed: int = 0):
    if not 0 <= ratio <= 1:
        raise ConfigError(f"split ratio must lie in [0, 1], got {ratio}")
    if ds.split_tag != "unsplit":
        raise ConfigError(f"dataset is already a {ds.split_tag} split")
    order = np.random.default_rng(seed).permutation(len(ds.pairs))
    cut = int(math.floor(ratio * len(ds.pairs) + 1e-9))
    meta = dict(ds.meta)
    meta["split"] = {"ratio": ratio, "seed": seed}
    train = ds.replace(pairs=tuple(ds.pairs[k] for k in order[:cut]), split_tag="train", meta=meta)
    test = ds.replace(pairs=tuple(ds.pairs[k] for k in order[cut:]), split_tag="test", meta=meta)
    return train, test
