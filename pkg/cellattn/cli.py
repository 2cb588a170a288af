"""Command-line entry point.

Commands: ``gen``, ``train``, ``cv``, ``eval``, ``explain``, ``aggregate`` and
``stats``. Every run writes ``resolved_config.json`` into ``--out``. Exit
codes: 0 success, 2 configuration or usage error, 3 I/O error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any

import numpy as np

from cellattn import __version__
from cellattn.config import RunConfig, write_snapshot
from cellattn.core import load_tensor
from cellattn.data import (
    DEFAULT_FOLDS,
    DatasetManifest,
    ManifestEntry,
    build_training_set,
    generate_synthetic_dataset,
    resize_plane,
    stratified_kfold,
)
from cellattn.diagnostics import TrainingProfiler
from cellattn.evaluation import (
    METRIC_NAMES,
    TABLE_LABELS,
    CrossValidationReport,
    FoldResult,
    MetricsReport,
    cross_validate,
    evaluate_model,
    image_source,
    roc_curve,
    train_model,
    ttest_matrix,
    write_ttest_csv,
    write_ttest_long_csv,
)
from cellattn.explain import (
    channel_focus,
    correlation_image,
    gmean,
    gradcam,
    ratio_scores,
    save_correlation,
    save_map,
    save_saliency,
    shape_map,
    write_ratio_json,
)
from cellattn.models import AttentionClassifier, init_encoder
from cellattn.utils import (
    CLASS_NAMES,
    CellAttnError,
    ConfigurationError,
    InputError,
    configure_cli_logging,
    ensure_dir,
    read_json,
    write_json,
)


_logger = logging.getLogger("cellattn.cli")

CHECKPOINT_NAME = "model.tnsr"
METRICS_NAME = "metrics.json"


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key=value config file")
    common.add_argument(
        "--out", type=Path, default=Path("out"), help="output directory"
    )
    common.add_argument("--seed", type=int, help="master seed (default 0)")
    common.add_argument("--jobs", type=int, default=1, help="worker threads")
    common.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config key (repeatable)",
    )
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    return common


def _model_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--family", choices=["rgb", "mhl"])
    parser.add_argument("--backbone", choices=["plain_cnn", "residual", "dense_concat"])
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--lr", type=float)


def _data_flag(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--data", type=Path, required=True, help="dataset manifest.json"
    )


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="cellattn",
        description="Multi-attention channel classifiers for fluorescence cells",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", parents=[common], help="generate a synthetic dataset")
    gen.add_argument("--n-normal", type=int)
    gen.add_argument("--n-meta", type=int)
    gen.add_argument("--folds", type=int)

    train = sub.add_parser("train", parents=[common], help="train one model")
    _data_flag(train)
    _model_flags(train)
    train.add_argument(
        "--fold", type=int, help="hold out this fold and augment the rest"
    )

    cv = sub.add_parser("cv", parents=[common], help="stratified k-fold evaluation")
    _data_flag(cv)
    _model_flags(cv)

    ev = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    _data_flag(ev)
    ev.add_argument("--checkpoint", type=Path, required=True)
    ev.add_argument("--fold", type=int)

    explain = sub.add_parser("explain", parents=[common], help="GradCam saliency maps")
    _data_flag(explain)
    explain.add_argument("--checkpoint", type=Path, required=True)
    explain.add_argument("--fold", type=int)
    explain.add_argument("--limit", type=int, help="explain at most this many images")
    explain.add_argument(
        "--target",
        choices=["label", "predicted", *CLASS_NAMES],
        default="label",
        help="class to explain (default: the true label)",
    )
    explain.add_argument("--layers", help="fnmatch pattern over captured layer names")

    agg = sub.add_parser("aggregate", parents=[common], help="global explanations")
    _data_flag(agg)
    agg.add_argument("--saliency", type=Path, required=True, help="explain output dir")
    agg.add_argument("--halfwidth", type=int, default=2)
    agg.add_argument("--threshold", type=float, default=0.5)

    stats = sub.add_parser("stats", parents=[common], help="Welch t-test matrix")
    stats.add_argument("reports", nargs="*", type=Path, help="cv metrics.json files")
    stats.add_argument("--alpha", type=float, default=0.05)
    return parser


def _run_config(args: argparse.Namespace, extra: dict[str, str | None]) -> RunConfig:
    return RunConfig.build(
        command=args.command,
        out_dir=args.out,
        seed=args.seed,
        config_path=args.config,
        overrides=args.overrides,
        jobs=args.jobs,
        extra={k: v for k, v in extra.items() if v is not None},
    )


def _model_extra(args: argparse.Namespace) -> dict[str, str | None]:
    return {
        "family": args.family,
        "backbone.kind": args.backbone,
        "epochs": None if args.epochs is None else str(args.epochs),
        "lr": None if args.lr is None else repr(args.lr),
    }


def _load_manifest(
    path: Path, run: RunConfig, need_folds: bool = False
) -> DatasetManifest:
    manifest = DatasetManifest.load_file(path)
    if need_folds and not manifest.folds:
        k = run.get_int("folds", DEFAULT_FOLDS)
        _logger.info("Manifest has no folds; assigning %d stratified folds", k)
        manifest = stratified_kfold(manifest, k, run.seed)
    return manifest


def _select(manifest: DatasetManifest, fold: int | None) -> list[ManifestEntry]:
    if fold is None:
        return list(manifest.entries)
    if fold not in manifest.folds:
        msg = f"fold {fold} not in manifest folds {manifest.folds}"
        raise ConfigurationError(msg)
    return manifest.fold_entries(fold)


def _load_classifier(path: Path) -> AttentionClassifier:
    if not path.exists():
        msg = f"Checkpoint {path} does not exist"
        raise ConfigurationError(msg)
    return AttentionClassifier.load(path)


def cmd_gen(args: argparse.Namespace) -> int:
    extra = {
        "synthetic.n_normal": None if args.n_normal is None else str(args.n_normal),
        "synthetic.n_meta": None if args.n_meta is None else str(args.n_meta),
        "folds": None if args.folds is None else str(args.folds),
    }
    run = _run_config(args, extra)
    cfg = run.synthetic()
    k = run.get_int("folds", DEFAULT_FOLDS)
    write_snapshot(run, {"synthetic": cfg.to_dict(), "folds": k})
    manifest = generate_synthetic_dataset(cfg, run.out_dir, run.seed, run.jobs)
    manifest = stratified_kfold(manifest, k, run.seed)
    manifest.save(run.out_dir / "manifest.json")
    counts = manifest.class_counts()
    print(
        f"Generated {len(manifest)} images "
        f"({', '.join(f'{n} {c}' for c, n in counts.items())}) in {k} folds "
        f"-> {run.out_dir / 'manifest.json'}"
    )
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    run = _run_config(args, _model_extra(args))
    config, train_cfg = run.encoder(), run.train()
    write_snapshot(run, {"encoder": config.to_dict(), "train": train_cfg.to_dict()})
    manifest = _load_manifest(args.data, run, need_folds=args.fold is not None)
    load = image_source(manifest, config.image_side)
    if args.fold is None:
        entries = list(manifest.entries)
        images = np.stack([load(e) for e in entries])
        labels = manifest.labels(entries)
    else:
        pool = build_training_set(
            manifest,
            args.fold,
            augment_factor=train_cfg.augment_factor,
            seed=train_cfg.seed,
            kinds=train_cfg.augment_kinds,
            source=load,
        )
        images, labels = pool.images, pool.labels
    params = init_encoder(config, train_cfg.seed)
    with TrainingProfiler() as profiler:
        result = train_model(config, train_cfg, images, labels, params, profiler)
    model = AttentionClassifier(config, result.params)
    checkpoint = model.save(
        run.out_dir / CHECKPOINT_NAME, train=train_cfg.to_dict(), fold=args.fold
    )
    write_json(run.out_dir / "loss_trace.json", result.loss_trace)
    profiler.export_json(run.out_dir / "profile.json")
    print(
        f"Trained {config.name} for {train_cfg.epochs} epochs on {len(images)} images; "
        f"final loss {result.loss_trace[-1]:.5f} -> {checkpoint}"
    )
    return 0


def cmd_cv(args: argparse.Namespace) -> int:
    run = _run_config(args, _model_extra(args))
    config, train_cfg = run.encoder(), run.train()
    write_snapshot(run, {"encoder": config.to_dict(), "train": train_cfg.to_dict()})
    manifest = _load_manifest(args.data, run, need_folds=True)
    out = run.out_dir

    def write_fold(fold: FoldResult) -> None:
        fold_dir = ensure_dir(out / f"fold_{fold.fold}")
        write_json(fold_dir / METRICS_NAME, {"model": config.name, **fold.to_dict()})
        if fold.metrics.auc_defined:
            fold.roc(1).write_csv(fold_dir / "roc.csv")
        if fold.params is not None:
            AttentionClassifier(config, fold.params).save(
                fold_dir / CHECKPOINT_NAME, train=train_cfg.to_dict(), fold=fold.fold
            )

    report = cross_validate(
        config, train_cfg, manifest, jobs=run.jobs, on_fold=write_fold
    )
    report.save_json(out / METRICS_NAME)
    report.save_csv(out / "metrics.csv")
    print(report.format_table())
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    run = _run_config(args, {})
    model = _load_classifier(args.checkpoint)
    write_snapshot(run, {"encoder": model.config.to_dict(), "fold": args.fold})
    manifest = _load_manifest(args.data, run)
    entries = _select(manifest, args.fold)
    load = image_source(manifest, model.config.image_side)
    images = np.stack([load(e) for e in entries])
    labels = manifest.labels(entries)
    probs, _, metrics = evaluate_model(model.config, model.params, images, labels)
    write_json(
        run.out_dir / METRICS_NAME,
        {"model": model.config.name, "fold": args.fold, "metrics": metrics.to_dict()},
    )
    if metrics.auc_defined:
        roc_curve(probs, labels, 1).write_csv(run.out_dir / "roc.csv")
    _print_metrics(model.config.name, metrics)
    return 0


def _print_metrics(name: str, metrics: MetricsReport) -> None:
    print(f"{name} on {metrics.n_samples} images")
    for key in METRIC_NAMES:
        value = metrics.get(key)
        text = "undefined" if value is None else f"{value:.4f}"
        print(f"  {TABLE_LABELS[key]:<16} {text}")


def _target_class(mode: str, entry: ManifestEntry, probs: np.ndarray) -> int:
    if mode == "label":
        return entry.label_index
    if mode == "predicted":
        return int(np.argmax(probs))
    return CLASS_NAMES.index(mode)


def cmd_explain(args: argparse.Namespace) -> int:
    run = _run_config(args, {})
    model = _load_classifier(args.checkpoint)
    resolved = {"encoder": model.config.to_dict(), "target": args.target}
    write_snapshot(run, {**resolved, "layers": args.layers})
    manifest = _load_manifest(args.data, run)
    entries = _select(manifest, args.fold)[: args.limit]
    load = image_source(manifest, model.config.image_side)
    out = ensure_dir(run.out_dir / "saliency")

    def explain_one(entry: ManifestEntry) -> dict[str, Any]:
        image = load(entry)
        probs, _ = model.predict(image[None])
        target = _target_class(args.target, entry, probs[0])
        saliency = gradcam(
            model.config, model.params, image, target, args.layers, entry.image_id
        )
        save_saliency(saliency, out, entry.image_id, image=image)
        return {
            "image_id": entry.image_id,
            "label": entry.label,
            "target_class": target,
            "layers": saliency.layers,
            "channel_focus": channel_focus(model.config, model.params, image, target),
        }

    if run.jobs > 1:
        with ThreadPoolExecutor(max_workers=run.jobs) as pool:
            records = list(pool.map(explain_one, entries))
    else:
        records = [explain_one(e) for e in entries]
    write_json(out / "index.json", records)
    print(f"Wrote {len(records)} saliency maps to {out}")
    return 0


def cmd_aggregate(args: argparse.Namespace) -> int:
    run = _run_config(args, {})
    write_snapshot(run, {"halfwidth": args.halfwidth, "threshold": args.threshold})
    manifest = _load_manifest(args.data, run)
    index_path = args.saliency / "index.json"
    if not index_path.exists():
        msg = f"{index_path} not found; run 'explain' first"
        raise ConfigurationError(msg)
    explained = {r["image_id"] for r in read_json(index_path)}
    by_id = {e.image_id: e for e in manifest.entries}
    out = ensure_dir(run.out_dir)
    written = 0
    for cls_name in CLASS_NAMES:
        ids = sorted(i for i in explained if i in by_id and by_id[i].label == cls_name)
        if not ids:
            _logger.info("No explained images of class %s", cls_name)
            continue
        maps = [load_tensor(args.saliency / f"{i}.tnsr") for i in ids]
        side = maps[0].shape
        shapes = [_fit(shape_map(manifest.load(by_id[i])), side) for i in ids]
        g_cam, g_shape = gmean(maps), gmean(shapes)
        corr = correlation_image(g_shape, g_cam, args.halfwidth, args.threshold)
        scores = ratio_scores(corr)
        save_map(g_cam, out, f"gmean_gradcam_{cls_name}")
        save_map(g_shape, out, f"gmean_shape_{cls_name}")
        save_correlation(corr, out, f"correlation_{cls_name}")
        write_ratio_json(scores, out / f"ratio_{cls_name}.json")
        written += 1
        print(
            f"{cls_name}: {len(ids)} maps, positive {scores.positive_ratio:.3f}, "
            f"negative {scores.negative_ratio:.3f}"
        )
    if not written:
        msg = f"No explained images of a known class under {args.saliency}"
        raise InputError(msg)
    return 0


def _fit(plane: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if plane.shape == shape:
        return plane
    return resize_plane(plane, shape[0], shape[1])


def _report_name(report: CrossValidationReport, path: Path, seen: set[str]) -> str:
    name = f"{report.model}/{report.regime}" if report.regime else report.model
    if name in seen:
        name = f"{name}@{path.parent.name or path.stem}"
    seen.add(name)
    return name


def cmd_stats(args: argparse.Namespace) -> int:
    run = _run_config(args, {})
    if len(args.reports) < 2:
        msg = f"stats needs at least two metrics files, got {len(args.reports)}"
        raise InputError(msg)
    reports = [str(p) for p in args.reports]
    write_snapshot(run, {"reports": reports, "alpha": args.alpha})
    seen: set[str] = set()
    samples: dict[str, dict[str, list[float | None]]] = {}
    for path in args.reports:
        report = CrossValidationReport.load_json(path)
        name = _report_name(report, path, seen)
        samples[name] = {m: report.values(m) for m in METRIC_NAMES}
    rows = ttest_matrix(samples, METRIC_NAMES, args.alpha)
    names = list(samples)
    write_ttest_csv(rows, run.out_dir / "ttest.csv", names, METRIC_NAMES)
    write_ttest_long_csv(rows, run.out_dir / "ttest_long.csv")
    write_json(run.out_dir / "ttest.json", [r.to_dict() for r in rows])
    pairs = len(samples) * (len(samples) - 1) // 2
    print(f"{len(rows)} Welch tests, threshold p < {args.alpha / pairs:.4f}")
    for r in rows:
        mark = "*" if r.significant else " "
        print(f" {mark} {TABLE_LABELS[r.metric]:<16} {r.a} vs {r.b}: p={r.p:.4g}")
    return 0


COMMANDS: dict[str, Callable[[argparse.Namespace], int]] = {
    "gen": cmd_gen,
    "train": cmd_train,
    "cv": cmd_cv,
    "eval": cmd_eval,
    "explain": cmd_explain,
    "aggregate": cmd_aggregate,
    "stats": cmd_stats,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handler = configure_cli_logging(args.verbose)
    try:
        return COMMANDS[args.command](args)
    except CellAttnError as e:
        _logger.debug("Command %s failed", args.command, exc_info=True)
        print(f"cellattn {args.command}: error: {e}", file=sys.stderr)
        return e.exit_code
    finally:
        logging.getLogger("cellattn").removeHandler(handler)


__all__ = [
    "COMMANDS",
    "build_parser",
    "cmd_aggregate",
    "cmd_cv",
    "cmd_eval",
    "cmd_explain",
    "cmd_gen",
    "cmd_stats",
    "cmd_train",
    "main",
]
