import json

import pytest

from recourse_forge import ActionCatalog, ThresholdClassifier
from recourse_forge.cli import main
from recourse_forge.formats import save_catalog, save_classifier


def _lines(capsys):
    return [json.loads(ln) for ln in capsys.readouterr().out.splitlines() if ln.strip()]


def test_gen_synth_is_byte_identical(tmp_path, capsys):
    args = ["gen-synth", "--dim", "8", "--agents", "60", "--actions", "12", "--seed", "3"]
    assert main(args + ["--out", str(tmp_path / "a.jsonl")]) == 0
    assert main(args + ["--out", str(tmp_path / "b.jsonl")]) == 0
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    out = _lines(capsys)
    assert out[0]["command"] == "gen-synth" and out[0]["agents_in"] == 60


def test_solve_already_positive_agent(tmp_path, capsys):
    save_catalog(tmp_path / "cat.json", ActionCatalog.discrete([[1, 0], [0, 1]], [1.0, 2.0]))
    save_classifier(tmp_path / "clf.json", ThresholdClassifier([1, 1]))
    (tmp_path / "agents.jsonl").write_text('{"x": [1, 1]}\n{"x": [0, 1]}\n')
    rc = main(["solve", "--problem", "hl-discrete", "--agents", str(tmp_path / "agents.jsonl"),
               "--catalog", str(tmp_path / "cat.json"), "--classifier", str(tmp_path / "clf.json"),
               "--out", str(tmp_path / "out.jsonl")])
    assert rc == 0
    summary = _lines(capsys)[0]
    assert summary["already_positive"] == 1 and summary["pairs"] == 1
    records = (tmp_path / "out.jsonl").read_text().splitlines()
    assert json.loads(records[1])["cfe"] == [[0, 1]]


def test_exit_codes(tmp_path, capsys):
    assert main([]) == 1
    assert main(["gen-synth", "--dim", "4"]) == 1
    assert main(["filter-freq", "--in", str(tmp_path / "missing.jsonl"), "--min-count", "2",
                 "--out", str(tmp_path / "x.jsonl")]) == 2
    (tmp_path / "junk.jsonl").write_text("not json\n")
    assert main(["encode", "--in", str(tmp_path / "junk.jsonl"), "--as", "id", "--out", str(tmp_path / "y.jsonl")]) == 2
    assert main(["solve", "--problem", "hl-discrete", "--agents", "a", "--classifier", "c", "--out", "o"]) == 1


def _write_spec(path, stages):
    path.write_text(json.dumps({"format": "recourse-forge-exp/v1", "seed": 1, "stages": stages}))


def test_empty_experiment(tmp_path, capsys):
    _write_spec(tmp_path / "exp.json", [])
    assert main(["run-experiment", "--spec", str(tmp_path / "exp.json")]) == 0
    assert _lines(capsys)[-1] == {"cache_hits": 0, "command": "run-experiment", "stages": 0}


def test_bad_experiment_spec(tmp_path, capsys):
    _write_spec(tmp_path / "exp.json", [{"op": "encode", "inputs": {"in": "nowhere.jsonl"}, "outputs": {"out": "o"}}])
    assert main(["run-experiment", "--spec", str(tmp_path / "exp.json")]) == 1


@pytest.fixture
def small_experiment(tmp_path):
    stages = [
        {"op": "gen-synth", "params": {"dim": 8, "agents": 120, "actions": 12}, "outputs": {"out": "d/all.jsonl"}},
        {"op": "encode", "params": {"as": "id"}, "inputs": {"in": "d/all.jsonl"}, "outputs": {"out": "d/id.jsonl"}},
        {"op": "split", "inputs": {"in": "d/id.jsonl"}, "outputs": {"out_train": "d/tr.jsonl", "out_test": "d/te.jsonl"}},
        {"op": "train", "params": {"generator": "knn", "train": {"k": 3}}, "inputs": {"in": "d/tr.jsonl"},
         "outputs": {"out_model": "m/knn.model"}},
        {"op": "predict", "inputs": {"model": "m/knn.model", "agents": "d/te.jsonl"}, "outputs": {"out": "p/knn.jsonl"}},
        {"op": "eval", "inputs": {"pred": "p/knn.jsonl", "truth": "d/te.jsonl"}, "outputs": {"out_report": "r/knn.json"}},
        {"op": "report", "inputs": {"in": ["r/knn.json"]}, "outputs": {"out": "r/table.csv"}},
    ]
    _write_spec(tmp_path / "exp.json", stages)
    return tmp_path


def test_rerun_is_served_from_cache(small_experiment, capsys):
    spec = str(small_experiment / "exp.json")
    assert main(["run-experiment", "--spec", spec]) == 0
    first = _lines(capsys)
    assert first[-1]["cache_hits"] == 0 and first[-1]["stages"] == 7
    table = (small_experiment / "r" / "table.csv").read_bytes()
    (small_experiment / "r" / "table.csv").unlink()
    assert main(["run-experiment", "--spec", spec]) == 0
    second = _lines(capsys)
    assert second[-1]["cache_hits"] == 7
    assert [r["artifacts"] for r in first[:-1]] == [r["artifacts"] for r in second[:-1]]
    assert (small_experiment / "r" / "table.csv").read_bytes() == table


def test_stage_chain_through_cli(tmp_path, capsys):
    d = str(tmp_path)
    assert main(["gen-synth", "--dim", "8", "--agents", "150", "--actions", "12", "--out", f"{d}/all.jsonl"]) == 0
    assert main(["encode", "--in", f"{d}/all.jsonl", "--as", "id", "--out", f"{d}/id.jsonl"]) == 0
    assert main(["split", "--in", f"{d}/id.jsonl", "--out-train", f"{d}/tr.jsonl", "--out-test", f"{d}/te.jsonl"]) == 0
    (tmp_path / "cfg.json").write_text(json.dumps({"hidden_layers": [16], "epochs": 5}))
    assert main(["train", "--in", f"{d}/tr.jsonl", "--generator", "categorical", "--config", f"{d}/cfg.json",
                 "--out-model", f"{d}/m.model"]) == 0
    assert main(["predict", "--model", f"{d}/m.model", "--agents", f"{d}/te.jsonl", "--out", f"{d}/p.jsonl"]) == 0
    assert main(["eval", "--pred", f"{d}/p.jsonl", "--truth", f"{d}/te.jsonl", "--out-report", f"{d}/r.json"]) == 0
    rep = json.loads((tmp_path / "r.json").read_text())
    assert 0 <= rep["accuracy"] <= 1 and rep["n"] > 0
    assert main(["compare", "--left", f"{d}/tr.jsonl", "--right", f"{d}/tr.jsonl", "--out-report", f"{d}/c.json"]) == 0
    assert main(["report", "--in", f"{d}/c.json", "--format", "csv", "--out", f"{d}/c.csv"]) == 0
    header = (tmp_path / "c.csv").read_text().splitlines()[0].split(",")
    assert set(header) == {"report", "scope", "variable", "left", "right", "delta"}
    (tmp_path / "bad.json").write_text(json.dumps({"epochs": 5, "nonsense": 1}))
    assert main(["train", "--in", f"{d}/tr.jsonl", "--generator", "categorical", "--config", f"{d}/bad.json",
                 "--out-model", f"{d}/m2.model"]) == 1
