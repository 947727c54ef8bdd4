"""File-based pipeline stages and the content-hash cached experiment runner.

Each stage reads named input files, writes named output files and returns a
small summary dict. The CLI and ``run_experiment`` share these functions.
"""

from __future__ import annotations

import json
import logging
import os
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .core import AgentState, Cfe
from .errors import ConfigError, DataError
from .formats import (
    atomic_write_text,
    canonical_json,
    load_catalog,
    load_classifier,
    read_json,
    sha256_file,
    sha256_text,
)
from .learned import TrainConfig, decoder_raw, load_model, predict_batch, save_model, train_generator
from .metrics import classify_mistakes, compare, rows_to_csv
from .solvers import LowLevelProblem, SolverConfig
from .synthdata import (
    GroupSpec,
    SynthConfig,
    augment_dataset,
    build_dataset,
    encode_hl_id,
    encode_named,
    encode_raw,
    filter_by_frequency,
    generate_dataset,
    load_dataset,
    save_dataset,
    split_train_test,
)
from .synthdata.dataset import DATASET_TAG

log = logging.getLogger(__name__)

PRED_TAG = "recourse-forge-pred/v1"
REPORT_TAG = "recourse-forge-report/v1"
EXP_TAG = "recourse-forge-exp/v1"
CACHE_DIR = ".recourse-forge-cache"


def _json_line(obj) -> str:
    return canonical_json(obj) + "\n"


def write_report(path, report: dict):
    atomic_write_text(path, json.dumps(report, sort_keys=True, indent=2, allow_nan=True) + "\n")


def load_agents(path) -> list:
    """Agents from a dataset file or from lines of {x, group?}."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        return []
    try:
        first = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: record 0: {exc}") from exc
    if isinstance(first, dict) and first.get("format") == DATASET_TAG:
        return load_dataset(path).agents
    agents = []
    for k, line in enumerate(lines):
        try:
            r = json.loads(line)
            if isinstance(r, list):
                agents.append(AgentState(r))
            else:
                agents.append(AgentState(r["x"], r.get("group")))
        except (KeyError, ValueError, TypeError, json.JSONDecodeError) as exc:
            raise DataError(f"{path}: record {k}: {exc}") from exc
    return agents


def save_agents(path, agents):
    lines = []
    for a in agents:
        rec = {"x": [int(v) if float(v).is_integer() else float(v) for v in a.features.tolist()]}
        if a.group is not None:
            rec["group"] = a.group
        lines.append(_json_line(rec))
    atomic_write_text(path, "".join(lines))


# ----- stages -----

def _ds_summary(ds) -> dict:
    return {"pairs": len(ds.pairs), "distinct_cfes": len(ds.cfe_frequency_table), "encoding": ds.encoding,
            "filter": ds.frequency_filter, "split": ds.split_tag}


def stage_gen_synth(p, inputs, outputs):
    groups = p.get("groups")
    gs = None
    if groups:
        gs = GroupSpec(groups, num_groups=int(p.get("num_groups", 5)))
    cfg = SynthConfig(n=int(p["dim"]), num_agents=int(p["agents"]), num_actions=int(p.get("actions", 100)),
                      p_f=float(p.get("pf", 0.68)), p_a=float(p.get("pa", 0.5)),
                      feature_cost_distribution=p.get("cost_dist", "exponential(1.0)"),
                      threshold_spec=p.get("threshold_spec", "ones"), group_spec=gs, seed=int(p.get("seed", 0)))
    ds = generate_dataset(cfg, SolverConfig(bound=p.get("bound", "ascent")))
    save_dataset(outputs["out"], ds)
    return {**_ds_summary(ds), **{k: v for k, v in ds.meta.items() if isinstance(v, int)}}


def stage_solve(p, inputs, outputs):
    agents = load_agents(inputs["agents"])
    problem = p.get("problem", "hl-discrete")
    clf = load_classifier(inputs["classifier"])
    catalog = None
    low = None
    if problem == "low-level":
        low = LowLevelProblem.from_dict(read_json(inputs["lowlevel"]))
    else:
        catalog = load_catalog(inputs["catalog"])
    access = read_json(inputs["group_access"]) if inputs.get("group_access") else None
    ds = build_dataset(agents, catalog, clf, problem=low, group_access=access,
                       config=SolverConfig(bound=p.get("bound", "ascent")))
    if problem != "low-level" and ds.problem_kind != problem:
        raise DataError(f"--problem {problem} does not match the catalog/classifier pair ({ds.problem_kind})")
    save_dataset(outputs["out"], ds)
    return {**_ds_summary(ds), "infeasible": ds.meta.get("infeasible", 0),
            "already_positive": ds.meta.get("already_positive", 0)}


def stage_filter_freq(p, inputs, outputs):
    ds = filter_by_frequency(load_dataset(inputs["in"]), int(p["min_count"]))
    save_dataset(outputs["out"], ds)
    return _ds_summary(ds)


def stage_augment(p, inputs, outputs):
    ds = augment_dataset(load_dataset(inputs["in"]), p.get("mode", "ag2"), seed=int(p.get("seed", 0)))
    save_dataset(outputs["out"], ds)
    return {**_ds_summary(ds), **ds.meta["augment"]}


def stage_encode(p, inputs, outputs):
    how = p.get("as", "id")
    fn = {"id": encode_hl_id, "named": encode_named, "raw": encode_raw}.get(how)
    if fn is None:
        raise ConfigError(f"unknown encoding {how!r}")
    ds = fn(load_dataset(inputs["in"]))
    save_dataset(outputs["out"], ds)
    return _ds_summary(ds)


def stage_split(p, inputs, outputs):
    tr, te = split_train_test(load_dataset(inputs["in"]), float(p.get("ratio", 0.8)), int(p.get("seed", 0)))
    save_dataset(outputs["out_train"], tr)
    save_dataset(outputs["out_test"], te)
    return {"train": len(tr.pairs), "test": len(te.pairs)}


def _train_config(p) -> TrainConfig:
    cfg = dict(p.get("train") or {})
    path = p.get("config")
    if path:
        text = Path(path).read_text(encoding="utf-8")
        loaded = _parse_structured(text, path)
        cfg = {**(loaded or {}), **cfg}
    if "seed" in p and "seed" not in cfg:
        cfg["seed"] = int(p["seed"])
    return TrainConfig.from_dict(cfg)


def stage_train(p, inputs, outputs):
    ds = load_dataset(inputs["in"])
    model = train_generator(p.get("generator", "categorical"), ds, _train_config(p))
    save_model(outputs["out_model"], model)
    h = model.history
    return {"variant": model.variant, "pairs": len(ds.pairs), "outputs": model.output_width,
            "epochs_run": h.get("epochs_run"), "best_epoch": h.get("best_epoch")}


def predictions_text(model, agents) -> str:
    X = np.array([a.features for a in agents]) if agents else np.zeros((0, model.n))
    preds = predict_batch(model, X) if agents else []
    raw = decoder_raw(model, X) if model.variant == "decoder" and agents else None
    lines = [_json_line({"format": PRED_TAG, "variant": model.variant, "catalog_hash": model.catalog_digest,
                         "count": len(preds)})]
    for k, c in enumerate(preds):
        rec = {"index": k, "cfe": [list(e) for e in c.entries], "cost": c.total_cost}
        if c.hl_id is not None:
            rec["hl_id"] = c.hl_id
        if raw is not None:
            rec["raw"] = [[int(v) for v in h] for h in raw[k]]
        lines.append(_json_line(rec))
    return "".join(lines)


def stage_predict(p, inputs, outputs):
    model = load_model(inputs["model"])
    agents = load_agents(inputs["agents"])
    atomic_write_text(outputs["out"], predictions_text(model, agents))
    return {"predictions": len(agents), "variant": model.variant}


def load_predictions(path):
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise DataError(f"{path}: empty predictions file")
    head = json.loads(lines[0])
    if head.get("format") != PRED_TAG:
        raise DataError(f"{path}: not a predictions file")
    preds, raws = [], []
    for k, line in enumerate(lines[1:]):
        try:
            r = json.loads(line)
            preds.append(Cfe(tuple((int(j), int(s)) for j, s in r["cfe"]), float(r["cost"]), r.get("hl_id")))
            raws.append(r.get("raw"))
        except (KeyError, ValueError, TypeError, json.JSONDecodeError) as exc:
            raise DataError(f"{path}: record {k}: {exc}") from exc
    return head, preds, raws


def raw_match_rate(raws, truth, catalog, s_max) -> Optional[float]:
    """Share of agents whose rounded decoder heads equal the true action vectors exactly."""
    if not raws or any(r is None for r in raws):
        return None
    hits = 0
    for r, t in zip(raws, truth):
        want = [catalog[j].vector.astype(int).tolist() for j, _ in t.entries]
        want += [[0] * catalog.n] * (len(r) - len(want))
        hits += r == want
    return hits / len(truth) if truth else None


def stage_eval(p, inputs, outputs):
    _, preds, raws = load_predictions(inputs["pred"])
    truth_ds = load_dataset(inputs["truth"])
    catalog = load_catalog(inputs["catalog"]) if inputs.get("catalog") else truth_ds.catalog
    clf = load_classifier(inputs["classifier"]) if inputs.get("classifier") else truth_ds.classifier
    truth = truth_ds.cfes
    if truth_ds.id_table is None:
        # predictions may carry ids the truth file lacks; compare entries only
        preds = [c.with_hl_id(None) for c in preds]
    rep = classify_mistakes(truth_ds.agents, preds, truth, catalog, clf)
    rep.raw_match_rate = raw_match_rate(raws, truth, catalog, None) if catalog is not None else None
    d = {"format": REPORT_TAG, "kind": "eval", "label": p.get("label", Path(inputs["pred"]).stem),
         "filter": truth_ds.frequency_filter, **rep.to_dict()}
    write_report(outputs["out_report"], d)
    return {"accuracy": rep.accuracy, "n": rep.n, "margin_of_error": rep.margin_of_error,
            "valid_mistakes": d["valid_mistakes"], "invalid_mistakes": d["invalid_mistakes"]}


def stage_compare(p, inputs, outputs):
    rep = compare(load_dataset(inputs["left"]), load_dataset(inputs["right"]), p.get("group_key", "group"))
    d = {"format": REPORT_TAG, "kind": "compare", **rep.to_dict(), "rows": rep.rows()}
    write_report(outputs["out_report"], d)
    return {"matched": rep.n_matched, **{f"delta_{k}": v for k, v in rep.deltas.items()}}


def report_rows(reports: list) -> list:
    rows = []
    for path, d in reports:
        if d.get("kind") == "eval":
            rows.append({"report": d.get("label", Path(path).stem), "filter": d.get("filter"), "n": d["n"],
                         "accuracy": d["accuracy"], "margin_of_error": d["margin_of_error"],
                         "valid_mistakes": d["valid_mistakes"], "invalid_mistakes": d["invalid_mistakes"],
                         "raw_match_rate": d.get("raw_match_rate")})
        elif d.get("kind") == "compare":
            rows.extend({"report": Path(path).stem, **r} for r in d["rows"])
        else:
            raise DataError(f"{path}: not a report file")
    return rows


def stage_report(p, inputs, outputs):
    paths = inputs["in"] if isinstance(inputs["in"], list) else [inputs["in"]]
    reports = []
    for path in paths:
        d = read_json(path)
        if not isinstance(d, dict) or d.get("format") != REPORT_TAG:
            raise DataError(f"{path}: not a report file")
        reports.append((path, d))
    rows = report_rows(reports)
    fmt = p.get("format", "csv")
    if fmt == "csv":
        text = rows_to_csv(rows)
    elif fmt == "json":
        text = "".join(_json_line(r) for r in rows)
    else:
        raise ConfigError(f"unknown report format {fmt!r}")
    atomic_write_text(outputs["out"], text)
    return {"rows": len(rows), "format": fmt}


@dataclass(frozen=True)
class Stage:
    fn: Callable
    inputs: tuple
    outputs: tuple
    optional_inputs: tuple = ()
    seeded: bool = False


STAGES = {
    "gen-synth": Stage(stage_gen_synth, (), ("out",), seeded=True),
    "solve": Stage(stage_solve, ("agents", "classifier"), ("out",), ("catalog", "lowlevel", "group_access")),
    "filter-freq": Stage(stage_filter_freq, ("in",), ("out",)),
    "augment": Stage(stage_augment, ("in",), ("out",), seeded=True),
    "encode": Stage(stage_encode, ("in",), ("out",)),
    "split": Stage(stage_split, ("in",), ("out_train", "out_test"), seeded=True),
    "train": Stage(stage_train, ("in",), ("out_model",), ("config",), seeded=True),
    "predict": Stage(stage_predict, ("model", "agents"), ("out",)),
    "eval": Stage(stage_eval, ("pred", "truth"), ("out_report",), ("catalog", "classifier")),
    "compare": Stage(stage_compare, ("left", "right"), ("out_report",)),
    "report": Stage(stage_report, ("in",), ("out",)),
}


def run_stage(op: str, params: dict, inputs: dict, outputs: dict) -> dict:
    stage = STAGES.get(op)
    if stage is None:
        raise ConfigError(f"unknown stage {op!r}")
    for role in stage.inputs:
        if role not in inputs:
            raise ConfigError(f"stage {op} needs input {role!r}")
    for role in stage.outputs:
        if role not in outputs:
            raise ConfigError(f"stage {op} needs output {role!r}")
    params = dict(params)
    if "config" in inputs:
        params["config"] = inputs["config"]
    return stage.fn(params, inputs, outputs)


# ----- experiments -----

def _parse_structured(text: str, source) -> dict:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    import yaml

    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{source}: cannot parse ({exc})") from exc


@dataclass
class ExperimentSpec:
    stages: list
    seed: int = 0
    base: Path = field(default_factory=Path.cwd)

    @classmethod
    def from_dict(cls, d: dict, base=None) -> "ExperimentSpec":
        if not isinstance(d, dict) or d.get("format") != EXP_TAG:
            raise ConfigError(f"experiment spec must carry format {EXP_TAG!r}")
        stages = d.get("stages") or []
        for k, s in enumerate(stages):
            if not isinstance(s, dict) or s.get("op") not in STAGES:
                raise ConfigError(f"stage {k}: unknown op {s.get('op') if isinstance(s, dict) else s!r}")
        return cls(list(stages), int(d.get("seed", 0)), Path(base) if base else Path.cwd())

    @classmethod
    def load(cls, path) -> "ExperimentSpec":
        path = Path(path)
        return cls.from_dict(_parse_structured(path.read_text(encoding="utf-8"), path), path.parent)


def _resolve(base: Path, v):
    if isinstance(v, list):
        return [str(base / x) for x in v]
    return str(base / v)


def _flat_paths(v):
    return v if isinstance(v, list) else [v]


def validate_spec(spec: ExperimentSpec, workdir: Path):
    """Every input must be produced by an earlier stage or already exist."""
    produced = set()
    for k, s in enumerate(spec.stages):
        st = STAGES[s["op"]]
        ins = s.get("inputs") or {}
        for role in st.inputs:
            if role not in ins:
                raise ConfigError(f"stage {k} ({s['op']}): missing input {role!r}")
        for role, v in ins.items():
            for path in _flat_paths(_resolve(workdir, v)):
                if path not in produced and not os.path.exists(path):
                    raise ConfigError(f"stage {k} ({s['op']}): input {path} is neither produced earlier nor on disk")
        outs = s.get("outputs") or {}
        for role in st.outputs:
            if role not in outs:
                raise ConfigError(f"stage {k} ({s['op']}): missing output {role!r}")
        for v in outs.values():
            path = _resolve(workdir, v)
            if path in produced:
                raise ConfigError(f"stage {k} ({s['op']}): output {path} is written twice")
            produced.add(path)


def stage_key(op: str, params: dict, input_hashes: dict) -> str:
    from . import __version__

    return sha256_text(canonical_json({"op": op, "params": params, "inputs": input_hashes, "version": __version__}))


def run_experiment(spec: ExperimentSpec, workdir=None, cache_dir=None, emit: Optional[Callable] = None) -> list:
    """Run stages in order; a stage whose config and input hashes were seen before is restored from cache."""
    workdir = Path(workdir) if workdir else spec.base
    cache = Path(cache_dir) if cache_dir else workdir / CACHE_DIR
    validate_spec(spec, workdir)
    summary = []
    for k, s in enumerate(spec.stages):
        op = s["op"]
        params = dict(s.get("params") or {})
        if STAGES[op].seeded and "seed" not in params:
            params["seed"] = spec.seed
        inputs = {r: _resolve(workdir, v) for r, v in (s.get("inputs") or {}).items()}
        outputs = {r: _resolve(workdir, v) for r, v in (s.get("outputs") or {}).items()}
        in_hashes = {r: [sha256_file(p) for p in _flat_paths(v)] for r, v in sorted(inputs.items())}
        key = stage_key(op, params, in_hashes)
        manifest = cache / "stages" / f"{key}.json"
        hit = False
        result = None
        if manifest.exists():
            entry = json.loads(manifest.read_text(encoding="utf-8"))
            blobs = {r: cache / "blobs" / h for r, h in entry["outputs"].items()}
            if set(blobs) == set(outputs) and all(b.exists() for b in blobs.values()):
                for r, b in blobs.items():
                    if not os.path.exists(outputs[r]) or sha256_file(outputs[r]) != entry["outputs"][r]:
                        Path(outputs[r]).parent.mkdir(parents=True, exist_ok=True)
                        shutil.copyfile(b, outputs[r])
                hit = True
                result = entry.get("result", {})
        if not hit:
            try:
                result = run_stage(op, params, inputs, outputs)
            except Exception as exc:
                raise StageFailed(k, op, exc) from exc
            out_hashes = {}
            (cache / "blobs").mkdir(parents=True, exist_ok=True)
            for r, path in outputs.items():
                h = sha256_file(path)
                out_hashes[r] = h
                blob = cache / "blobs" / h
                if not blob.exists():
                    shutil.copyfile(path, blob)
            manifest.parent.mkdir(parents=True, exist_ok=True)
            atomic_write_text(manifest, canonical_json({"op": op, "outputs": out_hashes, "result": result}))
        record = {"stage": k, "op": op, "cache": "hit" if hit else "miss", "key": key,
                  "artifacts": [{"path": os.path.relpath(p, workdir), "sha256": sha256_file(p)}
                                for p in outputs.values()],
                  "result": result}
        summary.append(record)
        if emit is not None:
            emit(record)
    return summary


class StageFailed(Exception):
    def __init__(self, index: int, op: str, cause: Exception):
        super().__init__(f"stage {index} ({op}) failed: {cause}")
        self.index, self.op, self.cause = index, op, cause
