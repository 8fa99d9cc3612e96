"""Command-line entry point: ``viralrank <command> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
import traceback
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from .configfile import ConfigError, file_digest, format_config, read_config, train_config_from
from .experiments import TEST, TRAIN, VALID, SplitSpec, run_ablation, split
from .features import FeatureMatrix, LexiconSentiment, extract
from .gbrt import Ensemble, TrainConfig, fit, predict
from .metrics import evaluate
from .store import DocumentStore, read_jsonl
from .synth import SynthSpec, generate_compliance, generate_records, write_jsonl

logger = logging.getLogger("viralrank")

PIPELINE_STAGES = ("ingest", "comply", "featurize", "train", "predict", "evaluate", "ablate")


class StageError(RuntimeError):
    pass


def _producer(command: str, config_hash: str | None = None) -> dict[str, Any]:
    return {"command": command, "config_hash": config_hash, "viralrank_version": __version__}


def _write_json(path: str | os.PathLike[str], data: dict[str, Any]) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")


def _meta_path(path: str | os.PathLike[str]) -> Path:
    p = Path(path)
    return p.with_name(p.name + ".meta.json")


def _load_train_config(path: str | None, seed: int | None) -> TrainConfig:
    values = read_config(path) if path else {}
    if seed is not None:
        values["seed"] = seed
    return train_config_from(values)


# -- commands ----------------------------------------------------------------


def cmd_generate(args: argparse.Namespace) -> dict[str, Any]:
    spec = SynthSpec(n_rows=args.n_rows, seed=args.seed or 0, zero_fraction=args.zero_fraction)
    result = generate_records(spec)
    n = write_jsonl(result.records, args.out)
    summary: dict[str, Any] = {
        "records": n,
        "zero_retweet_fraction": float(np.mean([r.retweet_total == 0 for r in result.records])),
        "intercept": result.intercept,
    }
    if args.compliance_out:
        requests = generate_compliance(
            result.records,
            status_fraction=args.delete_fraction,
            user_fraction=args.user_delete_fraction,
            seed=spec.seed,
        )
        summary["compliance_requests"] = write_jsonl(requests, args.compliance_out)
    _write_json(_meta_path(args.out), {"producer": _producer("generate"), "spec": spec.to_dict(), **summary})
    return summary


def cmd_ingest(args: argparse.Namespace) -> dict[str, Any]:
    if not Path(args.input).exists():
        raise StageError(f"input not found: {args.input}")
    with DocumentStore(args.store) as store:
        return store.ingest(read_jsonl(args.input)).to_dict()


def cmd_comply(args: argparse.Namespace) -> dict[str, Any]:
    if not Path(args.input).exists():
        raise StageError(f"input not found: {args.input}")
    with DocumentStore(args.store) as store:
        summary = store.apply_compliance(read_jsonl(args.input))
        if not args.no_compact:
            store.compact()
    return summary.to_dict()


def cmd_featurize(args: argparse.Namespace) -> dict[str, Any]:
    if not Path(args.store).is_dir():
        raise StageError(f"store not found: {args.store}")
    with DocumentStore(args.store) as store:
        snap = store.snapshot()
    matrix = extract(snap, LexiconSentiment())
    matrix.write(args.out, producer={**_producer("featurize"), "store_seq": snap.seq})
    return {"rows": len(matrix), "columns": len(matrix.columns), "rejected": len(matrix.rejected)}


def cmd_train(args: argparse.Namespace) -> dict[str, Any]:
    config = _load_train_config(args.config, args.seed)
    matrix = FeatureMatrix.read(args.features)
    if args.all_rows:
        ensemble = fit(matrix, config, track_loss=False)
    else:
        views = split(matrix, SplitSpec(seed=config.seed))
        valid = views.valid if config.early_stopping_rounds > 0 else None
        ensemble = fit(views.train, config, valid=valid, track_loss=False)
    producer = _producer("train", config.digest())
    producer["features_sha256"] = file_digest(args.features)
    producer["rows"] = "all" if args.all_rows else TRAIN
    ensemble.save(args.model_out, producer=producer)
    return {"trees": len(ensemble.trees), "best_iteration": ensemble.best_iteration}


def cmd_predict(args: argparse.Namespace) -> dict[str, Any]:
    ensemble = Ensemble.load(args.model)
    matrix = FeatureMatrix.read(args.features)
    raw, rate = predict(ensemble, matrix.select(ensemble.feature_names))
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["row_id", "raw_score", "lambda"])
        for row_id, f, lam in zip(matrix.row_ids, raw.tolist(), rate.tolist()):
            writer.writerow([row_id, repr(f), repr(lam)])
    _write_json(_meta_path(args.out), {
        "producer": _producer("predict", ensemble.config.digest()),
        "model_sha256": file_digest(args.model),
        "features_sha256": file_digest(args.features),
        "rows": len(matrix),
    })
    return {"rows": len(matrix)}


def cmd_evaluate(args: argparse.Namespace) -> dict[str, Any]:
    ensemble = Ensemble.load(args.model)
    matrix = FeatureMatrix.read(args.features).select(ensemble.feature_names)
    if args.rows != "all":
        views = split(matrix, SplitSpec(seed=ensemble.config.seed))
        matrix = {TRAIN: views.train, VALID: views.valid, TEST: views.test}[args.rows]
    _, rate = predict(ensemble, matrix)
    report = evaluate(rate, matrix.target, _modalities_of(matrix))
    out = report.to_dict()
    out["rows"] = args.rows
    out["producer"] = _producer("evaluate", ensemble.config.digest())
    out["model_sha256"] = file_digest(args.model)
    out["dataset_fingerprint"] = file_digest(args.features)
    _write_json(args.report, out)
    return {k: out[k] for k in ("spearman_r", "spearman_p", "r_squared", "rmse", "mape", "n_total")}


def _modalities_of(matrix: FeatureMatrix) -> list[str]:
    return sorted({c.modality for c in matrix.columns}, key="ACTL".index)


def _finite_or_none(value: float | None) -> float | None:
    return value if value is not None and math.isfinite(value) else None


def cmd_ablate(args: argparse.Namespace) -> dict[str, Any]:
    config = _load_train_config(args.config, args.seed)
    matrix = FeatureMatrix.read(args.features)
    report = run_ablation(
        matrix,
        SplitSpec(seed=config.seed),
        config,
        dataset_fingerprint=file_digest(args.features),
        workers=args.workers,
    )
    Path(args.report).write_text(report.to_json(_producer("ablate", config.digest())), encoding="utf-8")
    table_path = Path(args.report).with_suffix(".txt")
    table_path.write_text(report.render_table(), encoding="utf-8")
    return {
        "rows": len(report.rows),
        "partial": report.partial,
        "spearman": {r.name: _finite_or_none(r.report and r.report.spearman_r) for r in report.rows},
    }


# -- pipeline ----------------------------------------------------------------


PIPELINE_KEYS = {"records", "compliance", "workdir", "seed"}


def run_pipeline(config_path: str | os.PathLike[str], *, workers: int = 1) -> tuple[int, dict[str, Any]]:
    """Run every stage in order; returns (exit status, manifest)."""
    values = read_config(config_path)
    base = Path(config_path).parent
    workdir = Path(values.get("workdir", "pipeline-out"))
    workdir = workdir if workdir.is_absolute() else base / workdir
    workdir.mkdir(parents=True, exist_ok=True)

    def resolve(key: str) -> str | None:
        raw = values.get(key)
        if raw is None:
            return None
        p = Path(str(raw))
        return str(p if p.is_absolute() else base / p)

    train_values = {k: v for k, v in values.items() if k not in PIPELINE_KEYS}
    if "seed" in values:
        train_values["seed"] = values["seed"]
    train_cfg_path = workdir / "train.cfg"
    manifest: dict[str, Any] = {
        "version": 1,
        "config": str(Path(config_path).name),
        "config_sha256": file_digest(config_path),
        "stages": [],
    }
    paths = {
        "store": workdir / "store",
        "features": workdir / "features.csv",
        "model": workdir / "model.json",
        "predictions": workdir / "predictions.csv",
        "evaluation": workdir / "evaluation.json",
        "ablation": workdir / "ablation.json",
    }

    def ns(**kw: Any) -> argparse.Namespace:
        return argparse.Namespace(seed=None, **kw)

    compliance = resolve("compliance")
    if compliance is None:
        compliance = str(workdir / "no-requests.jsonl")
        Path(compliance).write_text("", encoding="utf-8")

    stages: list[tuple[str, Callable[[], dict[str, Any]], dict[str, str]]] = [
        ("ingest", lambda: cmd_ingest(ns(input=resolve("records") or "", store=paths["store"])),
         {"store": str(paths["store"])}),
        ("comply", lambda: cmd_comply(ns(input=compliance, store=paths["store"], no_compact=False)),
         {"store": str(paths["store"])}),
        ("featurize", lambda: cmd_featurize(ns(store=paths["store"], out=paths["features"])),
         {"features": str(paths["features"])}),
        ("train", lambda: cmd_train(ns(features=paths["features"], config=str(train_cfg_path),
                                       model_out=paths["model"], all_rows=False)),
         {"model": str(paths["model"])}),
        ("predict", lambda: cmd_predict(ns(model=paths["model"], features=paths["features"],
                                           out=paths["predictions"])),
         {"predictions": str(paths["predictions"])}),
        ("evaluate", lambda: cmd_evaluate(ns(model=paths["model"], features=paths["features"],
                                             report=paths["evaluation"], rows=TEST)),
         {"report": str(paths["evaluation"])}),
        ("ablate", lambda: cmd_ablate(ns(features=paths["features"], config=str(train_cfg_path),
                                         report=paths["ablation"], workers=workers)),
         {"report": str(paths["ablation"]), "table": str(paths["ablation"].with_suffix(".txt"))}),
    ]

    status = 0
    try:
        train_config_from(train_values)
        train_cfg_path.write_text(format_config(train_values), encoding="utf-8")
    except ConfigError as exc:
        manifest["stages"].append({"name": "config", "status": "failed", "error": str(exc), "outputs": {}})
        status = 1
        stages = []

    for name, run, outputs in stages:
        started = time.perf_counter()
        entry: dict[str, Any] = {"name": name, "outputs": outputs}
        try:
            entry["summary"] = run()
            entry["status"] = "succeeded"
        except Exception as exc:  # noqa: BLE001 - recorded in the manifest
            entry["status"] = "failed"
            entry["error"] = f"{type(exc).__name__}: {exc}"
            logger.debug("stage %s failed\n%s", name, traceback.format_exc())
            status = 1
        entry["seconds"] = round(time.perf_counter() - started, 3)
        manifest["stages"].append(entry)
        _write_json(workdir / "manifest.json", manifest)
        if status:
            logger.error("stage %s failed: %s", name, entry["error"])
            break
    _write_json(workdir / "manifest.json", manifest)
    return status, manifest


def cmd_pipeline(args: argparse.Namespace) -> dict[str, Any]:
    status, manifest = run_pipeline(args.config, workers=args.workers)
    args._exit_status = status
    return {"status": status, "stages": [(s["name"], s["status"]) for s in manifest["stages"]]}


# -- argument parsing --------------------------------------------------------


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--seed", type=int, default=default, help="random seed")
    parser.add_argument("--threads", type=int, default=argparse.SUPPRESS if suppress else 1,
                        help="worker threads, 0 = one per CPU")
    parser.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS if suppress else False)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="viralrank", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, func: Callable[[argparse.Namespace], dict[str, Any]], help_: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_)
        _global_flags(p, suppress=True)
        p.set_defaults(func=func)
        return p

    p = add("generate", cmd_generate, "write a synthetic tweet corpus as JSONL")
    p.add_argument("--out", required=True)
    p.add_argument("--n-rows", type=int, default=50_000)
    p.add_argument("--zero-fraction", type=float, default=0.85)
    p.add_argument("--compliance-out")
    p.add_argument("--delete-fraction", type=float, default=0.01)
    p.add_argument("--user-delete-fraction", type=float, default=0.005)

    p = add("ingest", cmd_ingest, "ingest JSONL tweet records into a store")
    p.add_argument("--input", required=True)
    p.add_argument("--store", required=True)

    p = add("comply", cmd_comply, "apply JSONL compliance requests to a store")
    p.add_argument("--input", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--no-compact", action="store_true", help="mask deletions without rewriting segments")

    p = add("featurize", cmd_featurize, "extract the feature matrix from a store snapshot")
    p.add_argument("--store", required=True)
    p.add_argument("--out", required=True)

    p = add("train", cmd_train, "train a Poisson boosting model")
    p.add_argument("--features", required=True)
    p.add_argument("--config")
    p.add_argument("--model-out", required=True)
    p.add_argument("--all-rows", action="store_true", help="train on every row, no validation split")

    p = add("predict", cmd_predict, "score a feature matrix")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)

    p = add("evaluate", cmd_evaluate, "write an evaluation report")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--rows", choices=[TRAIN, VALID, TEST, "all"], default=TEST)

    p = add("ablate", cmd_ablate, "run the modality ablation study")
    p.add_argument("--features", required=True)
    p.add_argument("--config")
    p.add_argument("--report", required=True)

    p = add("pipeline", cmd_pipeline, "run ingest through ablate from a run config")
    p.add_argument("--config", required=True)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    threads = args.threads if args.threads > 0 else (os.cpu_count() or 1)
    args.workers = threads
    try:
        summary = args.func(args)
    except (StageError, ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"viralrank {args.command}: error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(summary, sort_keys=True, allow_nan=False))
    return getattr(args, "_exit_status", 0)


if __name__ == "__main__":
    sys.exit(main())
