"""Operator command line: synth, ingest, build-index, train, eval, serve,
and the one-command demo pipeline.

Exit codes: 0 ok, 1 usage, 2 data error, 3 acceptance failure. Each
subcommand takes flags plus an optional JSON --config file; flags win.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import corpus as C
from . import metapath as M
from . import ranker as R
from .metrics import SingleClassTestSet, rank_sum_auc
from .retrieval import fill_missing_query_categories
from .synth import SynthConfig, generate_synthetic

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_ACCEPTANCE = 3

DEMO_MIN_AUC = 0.75


class UsageError(Exception):
    pass


class StageFailure(Exception):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage}: {cause}")
        self.stage = stage
        self.cause = cause


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise UsageError(f"--config {path}: {e}") from None
    if not isinstance(obj, dict):
        raise UsageError(f"--config {path}: top level must be an object")
    return obj


def _dataclass_from(cls, base: dict, overrides: dict):
    """Build ``cls`` from config-file fields plus explicit flag overrides."""
    fields = {f.name for f in dataclasses.fields(cls)}
    unknown = set(base) - fields
    if unknown:
        raise UsageError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    merged = dict(base)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    for key in ("head_hidden", "title_len", "query_len", "events_per_user",
                "searches_per_query", "items_per_search", "action_weights"):
        if key in merged and isinstance(merged[key], list):
            merged[key] = tuple(merged[key])
    try:
        return cls(**merged)
    except (TypeError, ValueError) as e:
        raise UsageError(f"bad {cls.__name__} settings: {e}") from None


def _scenario_categories(data_dir: Path) -> dict[int, list[int]]:
    return C.load_knowledge(data_dir / C.KNOWLEDGE_FILE)


def _load_indexes(index_dir: Path, tables=None) -> dict[str, M.MetaPathIndex]:
    out = {}
    for path_type in M.PATH_TYPES:
        out[path_type] = M.load_index(index_dir / f"{path_type}.jsonl", tables)
    return out


# -- subcommands ---------------------------------------------------------------


def cmd_synth(args) -> int:
    config = _load_config(args.config)
    synth_cfg = _dataclass_from(SynthConfig, config.get("synth", {}), {
        "n_users": args.users, "n_items": args.items, "n_queries": args.queries,
        "n_categories": args.categories, "n_scenarios": args.scenarios,
        "impressions_per_user": args.impressions_per_user, "signal": args.signal,
    })
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    corpus, truth = generate_synthetic(synth_cfg, seed=args.seed)
    C.save_corpus(corpus, out)
    C.save_instances(truth.instances, out / C.INSTANCES_FILE)
    C.save_knowledge(truth.scenario_categories, out / C.KNOWLEDGE_FILE)
    print(f"wrote {corpus.n_users} users, {corpus.n_items} items, "
          f"{corpus.n_queries} queries, {len(truth.instances)} instances "
          f"to {out}")
    return EXIT_OK


def cmd_ingest(args) -> int:
    data = Path(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    corpus = C.ingest_dir(data)
    corpus = fill_missing_query_categories(corpus)
    C.save_corpus(corpus, out)
    knowledge = data / C.KNOWLEDGE_FILE
    if knowledge.exists() and knowledge.resolve() != (out / C.KNOWLEDGE_FILE).resolve():
        (out / C.KNOWLEDGE_FILE).write_text(
            knowledge.read_text(encoding="utf-8"), encoding="utf-8")
    instances = data / C.INSTANCES_FILE
    if instances.exists() and instances.resolve() != (out / C.INSTANCES_FILE).resolve():
        (out / C.INSTANCES_FILE).write_text(
            instances.read_text(encoding="utf-8"), encoding="utf-8")
    print(f"ingested {corpus.n_items} items, {corpus.n_queries} queries, "
          f"{len(corpus.events)} events, {len(corpus.search_log)} searches "
          f"into {out}")
    return EXIT_OK


def cmd_build_index(args) -> int:
    data = Path(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    corpus = C.ingest_dir(data)
    scenario_categories = _scenario_categories(data)
    tables = M.estimate_all_tables(corpus, scenario_categories,
                                   table_k=args.table_k)
    indexes = M.build_all_indexes(tables, index_k=args.index_k)
    for path_type, index in indexes.items():
        M.save_index(index, tables, out / f"{path_type}.jsonl")
    rows = sum(len(i.rows) for i in indexes.values())
    print(f"wrote 3 index snapshots ({rows} item rows) to {out}")
    return EXIT_OK


def _model_and_train_configs(args, config: dict):
    model_cfg = _dataclass_from(R.ModelConfig, config.get("model", {}), {
        "hidden": args.hidden, "variant": args.variant,
    })
    train_cfg = _dataclass_from(R.TrainConfig, config.get("train", {}), {
        "epochs": args.epochs, "lr": args.lr, "optimizer": args.optimizer,
        "batch_impressions": args.batch_impressions, "seed": args.seed,
    })
    return model_cfg, train_cfg


def cmd_train(args) -> int:
    config = _load_config(args.config)
    model_cfg, train_cfg = _model_and_train_configs(args, config)
    data = Path(args.data)
    corpus = C.ingest_dir(data)
    instances = C.load_instances(Path(args.instances), corpus)
    indexes = _load_indexes(Path(args.indexes))
    cache = R.FeatureCache(indexes)
    model = R.RankingModel(model_cfg, corpus, seed=train_cfg.seed)
    result = R.train(model, instances, cache, train_cfg)
    R.save_checkpoint(model, args.out)
    losses = " ".join(f"{x:.4f}" for x in result.epoch_losses)
    print(f"trained on {result.n_instances} instances "
          f"({result.n_steps} steps); epoch losses: {losses}")
    print(f"checkpoint written to {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    data = Path(args.data)
    corpus = C.ingest_dir(data)
    model = R.load_checkpoint(args.model, corpus)
    instances = C.load_instances(Path(args.instances), corpus)
    indexes = _load_indexes(Path(args.indexes))
    cache = R.FeatureCache(indexes)
    report = R.evaluate(model, instances, cache, threshold=args.threshold)
    print(json.dumps(report.to_json_obj(), sort_keys=True))
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    data = Path(args.corpus)
    corpus = C.ingest_dir(data)
    model = R.load_checkpoint(args.model, corpus)
    indexes = _load_indexes(Path(args.indexes))
    app = create_app(corpus, indexes=indexes, model=model,
                     instance_log=args.instance_log,
                     static_dir=args.static)
    port = int(os.environ.get("QUERYREC_PORT", args.port))
    uvicorn.run(app, host=args.host, port=port, log_level="warning")
    return EXIT_OK


DEMO_SYNTH = {
    "n_users": 150, "n_items": 180, "n_queries": 90, "n_categories": 8,
    "n_scenarios": 3, "impressions_per_user": 5,
}
DEMO_MODEL = {
    "word_dim": 8, "category_dim": 6, "user_dim": 6, "value_dim": 3,
    "hour_dim": 3, "x_dim": 12, "hidden": 10, "head_hidden": (24, 12),
}
DEMO_TRAIN = {"epochs": 4, "lr": 3e-3, "batch_impressions": 8}


def cmd_demo(args) -> int:
    config = _load_config(args.config)
    try:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("", encoding="utf-8")
        probe.unlink()
    except OSError as e:
        raise StageFailure("setup", e) from None

    synth_cfg = _dataclass_from(SynthConfig,
                                {**DEMO_SYNTH, **config.get("synth", {})}, {})
    model_cfg = _dataclass_from(R.ModelConfig,
                                {**DEMO_MODEL, **config.get("model", {})}, {})
    train_cfg = _dataclass_from(R.TrainConfig,
                                {**DEMO_TRAIN, **config.get("train", {})},
                                {"seed": args.seed})

    stage = "synth"
    try:
        data_dir = out / "data"
        data_dir.mkdir(exist_ok=True)
        corpus, truth = generate_synthetic(synth_cfg, seed=args.seed)
        C.save_corpus(corpus, data_dir)
        C.save_knowledge(truth.scenario_categories, data_dir / C.KNOWLEDGE_FILE)
        train_insts, test_insts = C.split_instances(truth.instances, 0.8,
                                                    seed=args.seed)
        C.save_instances(train_insts, data_dir / "train_instances.jsonl")
        C.save_instances(test_insts, data_dir / "test_instances.jsonl")
        train_insts = C.load_instances(data_dir / "train_instances.jsonl", corpus)
        test_insts = C.load_instances(data_dir / "test_instances.jsonl", corpus)

        stage = "build-index"
        index_dir = out / "indexes"
        index_dir.mkdir(exist_ok=True)
        tables = M.estimate_all_tables(corpus, truth.scenario_categories)
        indexes = M.build_all_indexes(tables)
        for path_type, index in indexes.items():
            M.save_index(index, tables, index_dir / f"{path_type}.jsonl")

        stage = "train"
        cache = R.FeatureCache(indexes)
        model = R.RankingModel(model_cfg, corpus, seed=train_cfg.seed)
        result = R.train(model, train_insts, cache, train_cfg)
        R.save_checkpoint(model, out / "model.json")

        stage = "eval"
        report = R.evaluate(model, test_insts, cache)
        rng = np.random.default_rng(args.seed)
        labels = np.array([i.label for i in test_insts])
        random_auc = rank_sum_auc(rng.random(len(test_insts)), labels)
    except Exception as e:
        raise StageFailure(stage, e) from e

    blob = {
        "auc": report.auc,
        "f1": report.f1,
        "auc_random_baseline": random_auc,
        "n_train": len(train_insts),
        "n_test": len(test_insts),
        "seed": args.seed,
        "epoch_losses": result.epoch_losses,
    }
    (out / "report.json").write_text(
        json.dumps(blob, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    print(json.dumps({"auc": report.auc, "f1": report.f1,
                      "auc_random_baseline": random_auc}, sort_keys=True))
    if report.auc < args.min_auc:
        print(f"demo acceptance failed: auc {report.auc:.4f} < {args.min_auc}",
              file=sys.stderr)
        return EXIT_ACCEPTANCE
    return EXIT_OK


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="queryrec",
        description="Query suggestion pipeline: data synthesis, index "
                    "construction, ranker training, evaluation, and serving.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config(p):
        p.add_argument("--config", help="JSON config file; flags win")

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--users", type=int)
    p.add_argument("--items", type=int)
    p.add_argument("--queries", type=int)
    p.add_argument("--categories", type=int)
    p.add_argument("--scenarios", type=int)
    p.add_argument("--impressions-per-user", type=int)
    p.add_argument("--signal", type=float)
    add_config(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="parse raw logs into a canonical corpus")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    add_config(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("build-index", help="estimate tables and build "
                                           "meta-path indexes")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--table-k", type=int, default=M.TABLE_K_DEFAULT)
    p.add_argument("--index-k", type=int, default=M.INDEX_K_DEFAULT)
    add_config(p)
    p.set_defaults(func=cmd_build_index)

    p = sub.add_parser("train", help="train the ranker")
    p.add_argument("--data", required=True)
    p.add_argument("--instances", required=True)
    p.add_argument("--indexes", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--optimizer", choices=["adam", "sgd"])
    p.add_argument("--batch-impressions", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--variant", choices=["modified", "plain", "gru_only"])
    p.add_argument("--seed", type=int)
    add_config(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on an instance file")
    p.add_argument("--data", required=True)
    p.add_argument("--instances", required=True)
    p.add_argument("--indexes", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    add_config(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--corpus", required=True)
    p.add_argument("--indexes", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--port", type=int, default=8000,
                   help="listen port (QUERYREC_PORT env var wins)")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--instance-log")
    p.add_argument("--static", help="directory of UI assets to serve at /")
    add_config(p)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("demo", help="synthetic end-to-end run with a report")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--min-auc", type=float, default=DEMO_MIN_AUC)
    add_config(p)
    p.set_defaults(func=cmd_demo)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except StageFailure as e:
        print(json.dumps({"stage": e.stage, "error": str(e.cause)}),
              file=sys.stderr)
        return EXIT_ACCEPTANCE if isinstance(e.cause, AssertionError) \
            else EXIT_DATA
    except (C.CorpusError, M.MetapathError, R.RankerError,
            SingleClassTestSet, FileNotFoundError, NotADirectoryError,
            PermissionError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
