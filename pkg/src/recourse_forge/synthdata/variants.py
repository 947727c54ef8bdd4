"""Whole-dataset recipes: one synthetic configuration in, one solved dataset out."""

from __future__ import annotations

from dataclasses import replace
from typing import Optional

from ..errors import ConfigError
from ..solvers import SolverConfig
from .dataset import AgentCfeDataset, build_dataset
from .generate import GroupSpec, SynthConfig, gen_actions, gen_agents, gen_classifier, group_access

VARIANT_KINDS = ("dimensions", "feature_satisfiability", "manual_groups", "probabilistic_groups")
SATISFIABILITY_PATTERNS = ("First5", "Last5", "First10", "Last10", "Mid5")


def generate_dataset(cfg: SynthConfig, solver: Optional[SolverConfig] = None,
                     threads: Optional[int] = None) -> AgentCfeDataset:
    agents = gen_agents(cfg)
    catalog = gen_actions(cfg)
    clf = gen_classifier(cfg)
    access = group_access(cfg)
    return build_dataset(agents, catalog, clf, config=solver, group_access=access,
                         synth_config=cfg.to_dict(), threads=threads)


def variant_configs(kind: str, cfg: SynthConfig) -> list:
    """The configurations making up one family of dataset variants.

    ``cfg`` supplies agent counts, cost distribution and seed; the family fixes
    the dimension, thresholds and groups.
    """
    if kind == "dimensions":
        return [replace(cfg, n=n, p_f=0.68, p_a=0.5, threshold_spec="ones", group_spec=None) for n in (20, 50, 100)]
    if kind == "feature_satisfiability":
        return [replace(cfg, n=20, threshold_spec=p, group_spec=None) for p in SATISFIABILITY_PATTERNS]
    if kind == "manual_groups":
        gs = cfg.group_spec if cfg.group_spec is not None and cfg.group_spec.kind == "manual" else GroupSpec("manual")
        return [replace(cfg, p_a=0.5, group_spec=gs)]
    if kind == "probabilistic_groups":
        return [replace(cfg, group_spec=GroupSpec("probabilistic"))]
    raise ConfigError(f"unknown variant kind {kind!r}; expected one of {VARIANT_KINDS}")


def gen_variant_suite(kind: str, cfg: SynthConfig, solver: Optional[SolverConfig] = None,
                      threads: Optional[int] = None) -> list:
    return [generate_dataset(c, solver, threads) for c in variant_configs(kind, cfg)]
