from .dataset import AgentCfeDataset, build_dataset, load_dataset, save_dataset, verify_dataset
from .generate import DegenerateCatalog, GroupSpec, SynthConfig, gen_actions, gen_agents, gen_classifier
from .transforms import (
    augment_dataset,
    encode_hl_id,
    encode_named,
    encode_raw,
    filter_by_frequency,
    split_train_test,
)
from .variants import gen_variant_suite, generate_dataset

__all__ = [
    "AgentCfeDataset",
    "DegenerateCatalog",
    "GroupSpec",
    "SynthConfig",
    "augment_dataset",
    "build_dataset",
    "encode_hl_id",
    "encode_named",
    "encode_raw",
    "filter_by_frequency",
    "gen_actions",
    "gen_agents",
    "gen_classifier",
    "gen_variant_suite",
    "generate_dataset",
    "load_dataset",
    "save_dataset",
    "split_train_test",
    "verify_dataset",
]
