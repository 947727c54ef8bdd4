"""Agent-CFE datasets: construction by exact solving, and JSONL persistence."""

from __future__ import annotations

import json
import logging
import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from ..core import ActionCatalog, AgentCfePair, AgentState, Cfe, LinearClassifier, ThresholdClassifier, is_valid_cfe
from ..errors import DataError, Infeasible, KindMismatch
from ..formats import (
    _num_list,
    atomic_write_text,
    catalog_from_dict,
    catalog_hash,
    catalog_to_dict,
    classifier_from_dict,
    classifier_hash,
    classifier_to_dict,
    canonical_json,
    sha256_text,
)
from ..solvers import LowLevelProblem, SolverConfig, solve_hl_continuous, solve_hl_discrete, solve_low_level

log = logging.getLogger(__name__)

DATASET_TAG = "recourse-forge-dataset/v1"
ENCODINGS = ("raw", "named", "id")
SPLITS = ("unsplit", "train", "test")


def filter_name(k: int) -> str:
    return "all" if k <= 0 else f">{k}"


@dataclass(frozen=True, eq=False)
class AgentCfeDataset:
    pairs: tuple
    catalog: Optional[ActionCatalog]
    classifier: object
    problem_kind: str = "hl-discrete"
    encoding: str = "raw"
    frequency_filter: str = "all"
    split_tag: str = "unsplit"
    id_table: Optional[tuple] = None
    group_access: Optional[dict] = None
    problem: Optional[LowLevelProblem] = None
    config: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(self.pairs))
        if self.encoding not in ENCODINGS:
            raise ValueError(f"unknown encoding {self.encoding!r}")
        if self.split_tag not in SPLITS:
            raise ValueError(f"unknown split tag {self.split_tag!r}")

    def __len__(self):
        return len(self.pairs)

    def replace(self, **kw) -> "AgentCfeDataset":
        return replace(self, **kw)

    @property
    def agents(self) -> list:
        return [p.agent for p in self.pairs]

    @property
    def cfes(self) -> list:
        return [p.cfe for p in self.pairs]

    def features(self) -> np.ndarray:
        if not self.pairs:
            n = self.classifier.n if self.classifier is not None else 0
            return np.zeros((0, n))
        return np.stack([p.agent.features for p in self.pairs])

    @property
    def cfe_frequency_table(self) -> Counter:
        return Counter(p.cfe for p in self.pairs)

    def allowed_for(self, group) -> Optional[list]:
        if self.group_access is None or group is None:
            return None
        if group not in self.group_access:
            raise DataError(f"group {group!r} has no action-access entry")
        return self.group_access[group]


def _solve_one(agent, catalog, clf, problem, config, allowed):
    if problem is not None:
        return solve_low_level(agent, problem, clf, config)
    if catalog.kind == "discrete":
        return solve_hl_discrete(agent, catalog, clf, config, allowed=allowed)
    return solve_hl_continuous(agent, catalog, clf, config, allowed=allowed)


def _problem_kind(catalog, clf, problem) -> str:
    if problem is not None:
        if not isinstance(clf, LinearClassifier):
            raise KindMismatch("low-level problems need a linear classifier")
        return "low-level"
    if catalog.kind == "discrete":
        if not isinstance(clf, ThresholdClassifier):
            raise KindMismatch("discrete catalogs pair with threshold classifiers")
        return "hl-discrete"
    if not isinstance(clf, LinearClassifier):
        raise KindMismatch("continuous catalogs pair with linear classifiers")
    return "hl-continuous"


def worker_count(threads: Optional[int] = None) -> int:
    if threads is None:
        threads = int(os.environ.get("RECOURSE_FORGE_THREADS", "1") or 1)
    return max(1, int(threads))


def build_dataset(agents, catalog: Optional[ActionCatalog], clf, *, problem: Optional[LowLevelProblem] = None,
                  config: Optional[SolverConfig] = None, group_access: Optional[dict] = None,
                  synth_config: Optional[dict] = None, threads: Optional[int] = None) -> AgentCfeDataset:
    """Solve every negatively classified agent and keep the certified-optimal pairs.

    The optimum depends only on what an agent lacks (and which actions it may
    use), so agents with the same shortfall share one solve.
    """
    config = config or SolverConfig()
    kind = _problem_kind(catalog, clf, problem)
    keys, jobs = [], {}
    positive = 0
    for a in agents:
        if clf.is_positive(a.features):
            keys.append(None)
            positive += 1
            continue
        if kind == "hl-discrete":
            key = (clf.deficit(a.features).tobytes(), a.group if group_access else None)
        else:
            key = (a.features.tobytes(), a.group if group_access else None)
        keys.append(key)
        if key not in jobs:
            jobs[key] = a

    def run(item):
        key, agent = item
        allowed = group_access.get(agent.group) if group_access and agent.group is not None else None
        try:
            return key, _solve_one(agent, catalog, clf, problem, config, allowed)
        except Infeasible as exc:
            return key, exc

    items = list(jobs.items())
    workers = worker_count(threads)
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = dict(pool.map(run, items))
    else:
        results = dict(map(run, items))

    pairs, infeasible, truncated = [], 0, 0
    for a, key in zip(agents, keys):
        if key is None:
            continue
        res = results[key]
        if isinstance(res, Infeasible):
            infeasible += 1
            continue
        if not res.optimal:
            truncated += 1
            continue
        pairs.append(AgentCfePair(a, res.cfe, kind))
    if infeasible or truncated:
        log.warning("%d agents infeasible, %d hit the search limit; excluded", infeasible, truncated)
    meta = {"agents_in": len(agents), "already_positive": positive, "infeasible": infeasible,
            "search_limited": truncated, "distinct_solves": len(items)}
    return AgentCfeDataset(tuple(pairs), catalog, clf, kind, group_access=group_access, problem=problem,
                           config=dict(synth_config or {}), meta=meta)


def verify_dataset(ds: AgentCfeDataset) -> list:
    """Indices of pairs whose CFE does not flip the classifier."""
    bad = []
    for k, p in enumerate(ds.pairs):
        if not is_valid_cfe(p.agent, p.cfe, ds.catalog, ds.classifier):
            bad.append(k)
    return bad


def header_dict(ds: AgentCfeDataset) -> dict:
    h = {
        "format": DATASET_TAG,
        "problem_kind": ds.problem_kind,
        "encoding": ds.encoding,
        "filter": ds.frequency_filter,
        "split_tag": ds.split_tag,
        "config": ds.config,
        "meta": ds.meta,
        "classifier": classifier_to_dict(ds.classifier),
        "classifier_hash": classifier_hash(ds.classifier),
        "catalog": catalog_to_dict(ds.catalog) if ds.catalog is not None else None,
        "catalog_hash": catalog_hash(ds.catalog) if ds.catalog is not None else None,
        "id_table": [[list(e) for e in entries] for entries in ds.id_table] if ds.id_table is not None else None,
        "group_access": ds.group_access,
        "problem": ds.problem.to_dict() if ds.problem is not None else None,
        "num_pairs": len(ds.pairs),
    }
    return h


def record_dict(pair: AgentCfePair, ds: AgentCfeDataset) -> dict:
    cfe = pair.cfe
    rec = {"x": _num_list(pair.agent.features), "cfe": [list(e) for e in cfe.entries], "cost": cfe.total_cost}
    if pair.agent.group is not None:
        rec["group"] = pair.agent.group
    if cfe.hl_id is not None:
        rec["hl_id"] = cfe.hl_id
    if cfe.deltas is not None:
        rec["deltas"] = [[i, d] for i, d in cfe.deltas]
    if ds.encoding == "raw" and ds.catalog is not None and cfe.deltas is None:
        rec["actions"] = [_num_list(ds.catalog[j].vector) for j, _ in cfe.entries]
    return rec


def dumps_dataset(ds: AgentCfeDataset) -> str:
    lines = [canonical_json(header_dict(ds))]
    lines += [canonical_json(record_dict(p, ds)) for p in ds.pairs]
    return "\n".join(lines) + "\n"


def save_dataset(path, ds: AgentCfeDataset):
    atomic_write_text(path, dumps_dataset(ds))


def dataset_digest(ds: AgentCfeDataset) -> str:
    return sha256_text(dumps_dataset(ds))


def load_dataset(path, validate: bool = False) -> AgentCfeDataset:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise DataError(f"{path}: empty dataset file")
    return loads_dataset(lines, str(path), validate)


def loads_dataset(lines, source: str = "<dataset>", validate: bool = False) -> AgentCfeDataset:
    try:
        h = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DataError(f"{source}: header is not valid JSON ({exc})") from exc
    if h.get("format") != DATASET_TAG:
        raise DataError(f"{source}: not a dataset file (format tag {h.get('format')!r})")
    clf = classifier_from_dict(h["classifier"])
    catalog = catalog_from_dict(h["catalog"]) if h.get("catalog") is not None else None
    if catalog is not None and h.get("catalog_hash") not in (None, catalog_hash(catalog)):
        raise DataError(f"{source}: catalog hash does not match the embedded catalog")
    problem = LowLevelProblem.from_dict(h["problem"]) if h.get("problem") else None
    kind = h.get("problem_kind", "hl-discrete")
    id_table = None
    if h.get("id_table") is not None:
        id_table = tuple(tuple((int(j), int(s)) for j, s in entries) for entries in h["id_table"])
    pairs = []
    for k, line in enumerate(lines[1:]):
        try:
            r = json.loads(line)
            agent = AgentState(r["x"], r.get("group"))
            entries = tuple((int(j), int(s)) for j, s in r["cfe"])
            if catalog is not None:
                for j, _ in entries:
                    catalog[j]
            deltas = tuple((int(i), float(d)) for i, d in r["deltas"]) if "deltas" in r else None
            cfe = Cfe(entries, float(r["cost"]), r.get("hl_id"), deltas)
        except (KeyError, ValueError, TypeError, IndexError, json.JSONDecodeError) as exc:
            raise DataError(f"{source}: record {k}: {exc}") from exc
        if agent.n != clf.n:
            raise DataError(f"{source}: record {k}: agent has {agent.n} features, classifier {clf.n}")
        if validate and not is_valid_cfe(agent, cfe, catalog, clf):
            raise DataError(f"{source}: record {k}: CFE does not flip the classifier")
        pairs.append(AgentCfePair(agent, cfe, kind))
    return AgentCfeDataset(tuple(pairs), catalog, clf, kind, h.get("encoding", "raw"), h.get("filter", "all"),
                           h.get("split_tag", "unsplit"), id_table, h.get("group_access"), problem,
                           h.get("config") or {}, h.get("meta") or {})
