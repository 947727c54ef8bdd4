"""Command-line entry point. Summaries go to stdout as one JSON record per line."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import ConfigError, DataError, RecourseError
from .formats import canonical_json
from .pipeline import STAGES, ExperimentSpec, StageFailed, run_experiment, run_stage

log = logging.getLogger("recourse_forge")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _emit(record: dict):
    sys.stdout.write(canonical_json(record) + "\n")
    sys.stdout.flush()


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="recourse-forge", description="Exact and data-driven counterfactual explanations.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("gen-synth", help="generate and solve a synthetic agent-CFE dataset")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--agents", type=int, required=True)
    p.add_argument("--actions", type=int, default=100)
    p.add_argument("--pf", type=float, default=0.68)
    p.add_argument("--pa", type=float, default=0.5)
    p.add_argument("--threshold-spec", default="ones")
    p.add_argument("--groups", choices=["manual", "probabilistic"])
    p.add_argument("--num-groups", type=int, default=5)
    p.add_argument("--cost-dist", default="exponential(1.0)")
    p.add_argument("--bound", choices=["lp", "ascent", "maxmin"], default="ascent")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("solve", help="solve every agent in a file exactly")
    p.add_argument("--problem", choices=["hl-discrete", "hl-continuous", "low-level"], required=True)
    p.add_argument("--agents", required=True)
    p.add_argument("--catalog")
    p.add_argument("--classifier", required=True)
    p.add_argument("--lowlevel", help="low-level grid problem file")
    p.add_argument("--group-access")
    p.add_argument("--bound", choices=["lp", "ascent", "maxmin"], default="ascent")
    p.add_argument("--out", required=True)

    p = sub.add_parser("filter-freq", help="keep CFEs shared by more than N agents")
    p.add_argument("--in", dest="in_", required=True)
    p.add_argument("--min-count", type=int, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("augment", help="add worse-off agents for rare CFEs")
    p.add_argument("--in", dest="in_", required=True)
    p.add_argument("--mode", choices=["ag1", "ag2"], required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("encode", help="choose how CFEs are exposed to learners")
    p.add_argument("--in", dest="in_", required=True)
    p.add_argument("--as", dest="as_", choices=["id", "named", "raw"], required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("split", help="seeded train/test split")
    p.add_argument("--in", dest="in_", required=True)
    p.add_argument("--ratio", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-train", required=True)
    p.add_argument("--out-test", required=True)

    p = sub.add_parser("train", help="train a CFE generator")
    p.add_argument("--in", dest="in_", required=True)
    p.add_argument("--generator", choices=["multilabel", "categorical", "decoder", "knn"], required=True)
    p.add_argument("--config", help="training config (JSON or YAML)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-model", required=True)

    p = sub.add_parser("predict", help="generate CFEs with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--agents", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="zero-one accuracy and mistake analysis")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--catalog")
    p.add_argument("--classifier")
    p.add_argument("--label")
    p.add_argument("--out-report", required=True)

    p = sub.add_parser("compare", help="compare two CFE kinds over shared agents")
    p.add_argument("--left", required=True)
    p.add_argument("--right", required=True)
    p.add_argument("--group-key", default="group")
    p.add_argument("--out-report", required=True)

    p = sub.add_parser("report", help="flatten reports into a table")
    p.add_argument("--in", dest="in_", nargs="+", required=True)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--out", required=True)

    p = sub.add_parser("run-experiment", help="run a cached multi-stage experiment spec")
    p.add_argument("--spec", required=True)
    p.add_argument("--workdir")
    p.add_argument("--cache-dir")
    return ap


# argparse dest -> stage role, for flags naming files
_INPUT_FLAGS = {"in_": "in", "agents": "agents", "catalog": "catalog", "classifier": "classifier",
                "lowlevel": "lowlevel", "group_access": "group_access", "config": "config", "model": "model",
                "pred": "pred", "truth": "truth", "left": "left", "right": "right"}
_OUTPUT_FLAGS = {"out": "out", "out_train": "out_train", "out_test": "out_test", "out_model": "out_model",
                 "out_report": "out_report"}


def _split_args(args) -> tuple:
    stage = STAGES[args.command]
    roles = stage.inputs + stage.optional_inputs
    params, inputs, outputs = {}, {}, {}
    for k, v in vars(args).items():
        if k in ("command", "verbose") or v is None:
            continue
        if k in _OUTPUT_FLAGS:
            outputs[_OUTPUT_FLAGS[k]] = v
        elif k in _INPUT_FLAGS and _INPUT_FLAGS[k] in roles:
            inputs[_INPUT_FLAGS[k]] = v
        else:
            params["as" if k == "as_" else k] = v
    return params, inputs, outputs


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        if args.command == "run-experiment":
            spec = ExperimentSpec.load(args.spec)
            summary = run_experiment(spec, args.workdir, args.cache_dir, emit=_emit)
            _emit({"command": "run-experiment", "stages": len(summary),
                   "cache_hits": sum(r["cache"] == "hit" for r in summary)})
            return EXIT_OK
        params, inputs, outputs = _split_args(args)
        if args.command == "solve":
            params["problem"] = args.problem
            if args.problem == "low-level" and "lowlevel" not in inputs:
                raise UsageError("solve --problem low-level needs --lowlevel")
            if args.problem != "low-level" and "catalog" not in inputs:
                raise UsageError(f"solve --problem {args.problem} needs --catalog")
        result = run_stage(args.command, params, inputs, outputs)
        _emit({"command": args.command, **result, "outputs": outputs})
        return EXIT_OK
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except StageFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE if isinstance(exc.cause, ConfigError) else EXIT_DATA
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, RecourseError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
