"""Command-line tests: exit codes, config merging, the synth->ingest->
build-index->train->eval pipeline, and the demo report contract."""

import dataclasses
import json
from pathlib import Path

import pytest

from queryrec import cli
from queryrec import corpus as C
from queryrec.cli import main
from queryrec.synth import SynthConfig, generate_synthetic

SMALL_MODEL = {"word_dim": 6, "category_dim": 4, "user_dim": 4, "value_dim": 3,
               "hour_dim": 3, "x_dim": 10, "hidden": 6, "head_hidden": [12, 6]}
SMALL_SYNTH = {"n_users": 40, "n_items": 50, "n_queries": 30, "n_categories": 5,
               "n_scenarios": 2, "impressions_per_user": 3}


def write_config(path: Path, obj: dict) -> str:
    path.write_text(json.dumps(obj), encoding="utf-8")
    return str(path)


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Artifacts from one full CLI run: raw -> canonical -> indexes -> model."""
    root = tmp_path_factory.mktemp("pipeline")
    raw, data, idx = root / "raw", root / "data", root / "indexes"
    config = write_config(root / "config.json", {
        "synth": SMALL_SYNTH,
        "model": SMALL_MODEL,
        "train": {"epochs": 1, "lr": 3e-3},
    })
    assert main(["synth", "--out", str(raw), "--seed", "5",
                 "--config", config]) == 0
    assert main(["ingest", "--data", str(raw), "--out", str(data)]) == 0
    assert main(["build-index", "--data", str(data), "--out", str(idx)]) == 0
    assert main(["train", "--data", str(data),
                 "--instances", str(data / C.INSTANCES_FILE),
                 "--indexes", str(idx), "--out", str(root / "model.json"),
                 "--config", config]) == 0
    return root


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    assert main(["synth", "--help"]) == 0
    out = capsys.readouterr().out
    assert "synth" in out and "serve" in out


def test_missing_arguments_are_usage_errors(capsys):
    assert main([]) == 1
    assert main(["synth"]) == 1  # --out is required
    assert main(["no-such-command"]) == 1
    capsys.readouterr()


def test_pipeline_writes_expected_artifacts(pipeline):
    data, idx = pipeline / "data", pipeline / "indexes"
    for name in (C.ENTITIES_FILE, C.BEHAVIOR_FILE, C.SEARCH_FILE,
                 C.KNOWLEDGE_FILE, C.INSTANCES_FILE):
        assert (data / name).exists(), name
    for path_type in ("U2I2Q", "U2I2S2Q", "U2I2C2Q"):
        assert (idx / f"{path_type}.jsonl").exists()
    ckpt = json.loads((pipeline / "model.json").read_text(encoding="utf-8"))
    assert ckpt["kind"] == "ranking_model"


def test_eval_prints_report_json(pipeline, capsys):
    data, idx = pipeline / "data", pipeline / "indexes"
    rc = main(["eval", "--data", str(data),
               "--instances", str(data / C.INSTANCES_FILE),
               "--indexes", str(idx), "--model", str(pipeline / "model.json")])
    assert rc == 0
    report = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert set(report) == {"auc", "f1", "threshold", "n_instances"}
    assert 0.0 <= report["auc"] <= 1.0


def test_eval_single_class_instances_is_data_error(pipeline, tmp_path, capsys):
    data, idx = pipeline / "data", pipeline / "indexes"
    corpus = C.ingest_dir(data)
    insts = C.load_instances(data / C.INSTANCES_FILE, corpus)
    negatives = [i for i in insts if i.label == 0][:40]
    C.save_instances(negatives, tmp_path / "neg.jsonl")
    rc = main(["eval", "--data", str(data),
               "--instances", str(tmp_path / "neg.jsonl"),
               "--indexes", str(idx), "--model", str(pipeline / "model.json")])
    assert rc == 2
    assert "data error" in capsys.readouterr().err


def test_synth_is_deterministic_per_seed(tmp_path):
    config = write_config(tmp_path / "c.json", {"synth": SMALL_SYNTH})
    for d, seed in (("a", "7"), ("b", "7"), ("c", "8")):
        assert main(["synth", "--out", str(tmp_path / d), "--seed", seed,
                     "--config", config]) == 0
    same = (tmp_path / "a" / C.ENTITIES_FILE).read_bytes() == \
           (tmp_path / "b" / C.ENTITIES_FILE).read_bytes()
    assert same
    assert (tmp_path / "a" / C.BEHAVIOR_FILE).read_bytes() == \
           (tmp_path / "b" / C.BEHAVIOR_FILE).read_bytes()
    assert (tmp_path / "a" / C.BEHAVIOR_FILE).read_bytes() != \
           (tmp_path / "c" / C.BEHAVIOR_FILE).read_bytes()


def test_ingest_fills_missing_query_categories(tmp_path):
    cfg = SynthConfig(**SMALL_SYNTH)
    corpus, _ = generate_synthetic(cfg, seed=2)
    stripped = dataclasses.replace(corpus, queries=tuple(
        dataclasses.replace(q, top_categories=None) for q in corpus.queries))
    C.save_corpus(stripped, tmp_path / "raw")
    assert main(["ingest", "--data", str(tmp_path / "raw"),
                 "--out", str(tmp_path / "data")]) == 0
    filled = C.ingest_dir(tmp_path / "data")
    assert all(q.top_categories is not None and len(q.top_categories) == 3
               for q in filled.queries)


def test_config_file_merges_with_flags_winning(tmp_path):
    config = write_config(tmp_path / "c.json",
                          {"synth": {**SMALL_SYNTH, "n_users": 10}})
    assert main(["synth", "--out", str(tmp_path / "out"), "--seed", "1",
                 "--users", "12", "--config", config]) == 0
    corpus = C.ingest_dir(tmp_path / "out")
    assert corpus.n_users == 12


def test_config_file_problems_are_usage_errors(tmp_path, capsys):
    bad_key = write_config(tmp_path / "bad.json", {"synth": {"n_userz": 5}})
    assert main(["synth", "--out", str(tmp_path / "o1"),
                 "--config", bad_key]) == 1
    not_object = tmp_path / "list.json"
    not_object.write_text("[1, 2]", encoding="utf-8")
    assert main(["synth", "--out", str(tmp_path / "o2"),
                 "--config", str(not_object)]) == 1
    assert main(["synth", "--out", str(tmp_path / "o3"),
                 "--config", str(tmp_path / "missing.json")]) == 1
    err = capsys.readouterr().err
    assert err.count("usage error") == 3


def test_missing_inputs_are_data_errors(tmp_path, capsys):
    assert main(["ingest", "--data", str(tmp_path / "nowhere"),
                 "--out", str(tmp_path / "out")]) == 2
    # build-index needs knowledge.json next to the corpus files
    cfg = SynthConfig(**SMALL_SYNTH)
    corpus, _ = generate_synthetic(cfg, seed=3)
    C.save_corpus(corpus, tmp_path / "bare")
    assert main(["build-index", "--data", str(tmp_path / "bare"),
                 "--out", str(tmp_path / "idx")]) == 2
    capsys.readouterr()


def test_serve_wiring_and_port_env_override(pipeline, monkeypatch):
    import uvicorn

    captured = {}

    def fake_run(app, host, port, log_level):
        captured.update(app=app, host=host, port=port)

    monkeypatch.setattr(uvicorn, "run", fake_run)
    monkeypatch.setenv("QUERYREC_PORT", "9123")
    data, idx = pipeline / "data", pipeline / "indexes"
    rc = main(["serve", "--corpus", str(data), "--indexes", str(idx),
               "--model", str(pipeline / "model.json"), "--port", "8000"])
    assert rc == 0
    assert captured["port"] == 9123
    assert captured["host"] == "127.0.0.1"
    routes = {r.path for r in captured["app"].routes}
    assert {"/events", "/suggest", "/feedback", "/recommend"} <= routes


DEMO_CONFIG = {
    "synth": SMALL_SYNTH,
    "model": SMALL_MODEL,
    "train": {"epochs": 2, "lr": 3e-3},
}


def test_demo_report_contract_and_determinism(tmp_path, capsys):
    config = write_config(tmp_path / "c.json", DEMO_CONFIG)
    for d in ("a", "b"):
        assert main(["demo", "--out", str(tmp_path / d), "--seed", "9",
                     "--min-auc", "0.0", "--config", config]) == 0
    report_a = (tmp_path / "a" / "report.json").read_bytes()
    assert report_a == (tmp_path / "b" / "report.json").read_bytes()
    report = json.loads(report_a)
    assert set(report) == {"auc", "f1", "auc_random_baseline", "n_train",
                           "n_test", "seed", "epoch_losses"}
    assert len(report["epoch_losses"]) == 2
    assert report["n_train"] > report["n_test"] > 0
    last_line = capsys.readouterr().out.strip().splitlines()[-1]
    assert json.loads(last_line)["auc"] == report["auc"]


def test_demo_below_min_auc_is_acceptance_failure(tmp_path, capsys):
    config = write_config(tmp_path / "c.json", DEMO_CONFIG)
    rc = main(["demo", "--out", str(tmp_path / "d"), "--seed", "9",
               "--min-auc", "0.999", "--config", config])
    assert rc == 3
    assert "demo acceptance failed" in capsys.readouterr().err


def test_demo_unwritable_out_reports_setup_stage(tmp_path, capsys):
    blocker = tmp_path / "blocker"
    blocker.write_text("", encoding="utf-8")
    rc = main(["demo", "--out", str(blocker / "sub")])
    assert rc == 2
    failure = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert failure["stage"] == "setup"


def test_demo_defaults_documented():
    # the zero-config demo path must stay within the published gate
    assert cli.DEMO_MIN_AUC == 0.75
    parser = cli.build_parser()
    args = parser.parse_args(["demo", "--out", "x"])
    assert args.seed == 42 and args.min_auc == cli.DEMO_MIN_AUC
