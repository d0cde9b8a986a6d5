"""Pipeline entry point: preprocess, split, train, evaluate, report, grade.

Exit codes: 0 success, 1 usage error, 2 data error, 3 training divergence.
Every command persists its fully resolved configuration next to its outputs.
"""

from __future__ import annotations

import csv
import sys
from pathlib import Path
from typing import Optional, Tuple

import click

from . import dataset as ds
from . import evaluation as ev
from .preprocessing import (
    LocalizationFailed,
    NormalizationMethod,
    crop_resize,
    load_rgb,
    locate_fundus,
    save_rgb,
)
from .runconfig import RunConfig
from .synthetic import SyntheticSpec, generate_corpus
from .training import (
    NonFiniteLoss,
    load_checkpoint,
    predict_scores,
    train_ensemble,
    train_one,
)

EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGENCE = 3


class DataError(click.ClickException):
    exit_code = EXIT_DATA


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--seed", type=int, default=None, help="Override every seed in the run.")
@click.option("--deterministic", is_flag=True, default=False, help="Single-threaded bitwise-reproducible mode.")
@click.pass_context
def cli(ctx, config_path: Optional[Path], seed: Optional[int], deterministic: bool):
    ctx.ensure_object(dict)
    ctx.obj["config_path"] = config_path
    ctx.obj["seed"] = seed
    ctx.obj["deterministic"] = deterministic


def _run_config(ctx, overrides: Optional[dict] = None) -> RunConfig:
    rc = RunConfig.load(ctx.obj.get("config_path"), overrides)
    if ctx.obj.get("seed") is not None:
        for key in ("split.seed", "split.test_seed", "training.seed", "synthetic.seed"):
            rc.values[key] = str(ctx.obj["seed"])
    if ctx.obj.get("deterministic"):
        rc.values["training.deterministic"] = "true"
    return rc


@cli.command("generate-synthetic")
@click.option("--n-images", type=int, required=True)
@click.option("--positive-fraction", type=float, required=True)
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
@click.option("--image-size", type=int, default=None)
@click.pass_context
def cmd_generate_synthetic(ctx, n_images, positive_fraction, seed, out_dir, image_size):
    """Write a synthetic fundus-like corpus plus its grades CSV."""
    rc = _run_config(
        ctx,
        {
            "synthetic.n_images": n_images,
            "synthetic.positive_fraction": positive_fraction,
            "synthetic.seed": seed,
            "synthetic.image_size": image_size,
        },
    )
    spec = SyntheticSpec(
        n_images=rc.get_int("synthetic.n_images", n_images),
        positive_fraction=rc.get_float("synthetic.positive_fraction", positive_fraction),
        seed=rc.get_int("synthetic.seed", 0),
        image_size=rc.get_int("synthetic.image_size", 400),
    )
    csv_path, n_pos, n_neg = generate_corpus(spec, out_dir)
    rc.persist(out_dir)
    click.echo(f"wrote {n_pos} positives + {n_neg} negatives; grades at {csv_path}")


@cli.command("preprocess")
@click.option("--images", "images_dir", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--grades-csv", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
@click.option("--target-size", type=int, default=None)
@click.option("--max-failure-fraction", type=float, default=None)
@click.pass_context
def cmd_preprocess(ctx, images_dir, grades_csv, out_dir, target_size, max_failure_fraction):
    """Localize, crop, and resize every image named in the grades CSV."""
    rc = _run_config(
        ctx,
        {
            "preprocess.target_size": target_size,
            "preprocess.max_failure_fraction": max_failure_fraction,
        },
    )
    config = rc.preprocess_config()
    limit = rc.get_float("preprocess.max_failure_fraction", 0.1)
    out_dir = Path(out_dir)
    images_out = out_dir / "images"
    images_out.mkdir(parents=True, exist_ok=True)

    manifest, report = ds.ingest_grades(grades_csv, ds.Source.SYNTHETIC, images_dir)
    failures: list[Tuple[str, str]] = []
    circles: list[Tuple[str, float, float, float]] = []
    n_done = 0
    missing = set(report.missing_files)
    for entry in manifest.entries:
        if entry.image_id in missing:
            failures.append((entry.image_id, "MissingFile"))
            continue
        try:
            image = load_rgb(Path(entry.file_path))
            circle = locate_fundus(image, config.localization_threshold_fraction)
            out = crop_resize(image, circle, config)
        except LocalizationFailed as exc:
            failures.append((entry.image_id, f"LocalizationFailed: {exc}"))
            continue
        save_rgb(out, images_out / f"{entry.image_id}.png")
        circles.append((entry.image_id, circle.center_x, circle.center_y, circle.radius))
        n_done += 1

    with open(out_dir / "circles.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["image_id", "cx", "cy", "r"])
        for iid, cx, cy, r in circles:
            w.writerow([iid, f"{cx:.2f}", f"{cy:.2f}", f"{r:.2f}"])
    with open(out_dir / "failures.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["image_id", "reason"])
        w.writerows(failures)
    rc.persist(out_dir)

    total = n_done + len(failures)
    click.echo(f"preprocessed {n_done}/{total} images, {len(failures)} failures")
    if total and len(failures) / total > limit:
        raise DataError(f"failure fraction {len(failures)/total:.2%} exceeds {limit:.2%}")


@cli.command("split")
@click.option("--grades-csv", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--images", "images_dir", type=click.Path(path_type=Path), default=None)
@click.option("--source", type=click.Choice([s.value for s in ds.Source]), default="synthetic")
@click.option("--gradability-file", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--out", "out_path", type=click.Path(path_type=Path), required=True)
@click.option("--n-trainval", type=int, default=None)
@click.option("--n-test", type=int, default=None)
@click.option("--positive-fraction", type=float, default=None)
@click.option("--gradable-only", is_flag=True, default=False)
@click.pass_context
def cmd_split(ctx, grades_csv, images_dir, source, gradability_file, out_path,
              n_trainval, n_test, positive_fraction, gradable_only):
    """Ingest grades, sample balanced train/validation/test splits, write the manifest."""
    rc = _run_config(
        ctx,
        {
            "split.n_trainval": n_trainval,
            "split.n_test": n_test,
            "split.positive_fraction": positive_fraction,
            "split.gradable_only": gradable_only or None,
        },
    )
    manifest, report = ds.ingest_grades(grades_csv, ds.Source(source), images_dir)
    if report.malformed_rows:
        for row in report.malformed_rows[:10]:
            click.echo(f"row {row.row_number}: {row.reason}", err=True)
        raise DataError(f"{len(report.malformed_rows)} malformed rows in {grades_csv}")
    if gradability_file:
        manifest = ds.apply_quality_grades(manifest, ds.load_quality_grades(gradability_file))

    trainval = ds.SplitSpec(
        n_total=rc.get_int("split.n_trainval", 100),
        positive_fraction=rc.get_float("split.positive_fraction", 0.3),
        train_fraction=rc.get_float("split.train_fraction", 0.8),
        seed=rc.get_int("split.seed", 0),
        gradable_only=rc.get_bool("split.gradable_only", False),
    )
    try:
        manifest = ds.stratified_sample(manifest, trainval, assign="trainval")
        n_test_count = rc.get_int("split.n_test", 0)
        if n_test_count:
            test_spec = ds.SplitSpec(
                n_total=n_test_count,
                positive_fraction=rc.get_float(
                    "split.test_positive_fraction", trainval.positive_fraction
                ),
                seed=rc.get_int("split.test_seed", trainval.seed + 1),
                gradable_only=trainval.gradable_only,
            )
            manifest = ds.stratified_sample(manifest, test_spec, assign="test")
    except ds.InsufficientPool as exc:
        raise DataError(str(exc))
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    ds.write_manifest(manifest, out_path)
    rc.persist(out_path.parent)
    for split, counts in manifest.balance_summary().items():
        click.echo(f"{split}: {counts['positive']} pos / {counts['negative']} neg")


@cli.command("train")
@click.option("--manifest", "manifest_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--preprocessed", "preprocessed_dir", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--out", "run_dir", type=click.Path(path_type=Path), required=True)
@click.option("--backbone", type=click.Choice(["small_cnn", "inception_v3_like"]), default=None)
@click.option("--normalization", type=click.Choice([m.value for m in NormalizationMethod]), default=None)
@click.option("--max-epochs", type=int, default=None)
@click.pass_context
def cmd_train(ctx, manifest_path, preprocessed_dir, run_dir, backbone, normalization, max_epochs):
    """Train one model with AUC early stopping; emit the best-epoch checkpoint."""
    rc = _run_config(
        ctx,
        {
            "training.backbone": backbone,
            "training.normalization": normalization,
            "training.max_epochs": max_epochs,
        },
    )
    config = rc.training_config(deterministic=ctx.obj.get("deterministic", False))
    manifest = ds.read_manifest(manifest_path)
    rc.persist(run_dir)
    try:
        ckpt, state = train_one(manifest, config, Path(preprocessed_dir), Path(run_dir))
    except NonFiniteLoss as exc:
        click.echo(f"training diverged at epoch {exc.epoch}", err=True)
        sys.exit(EXIT_DIVERGENCE)
    click.echo(
        f"best validation AUC {state.best_auc:.4f} at epoch {state.best_epoch} "
        f"(stopped after epoch {state.epoch}); checkpoint {ckpt}"
    )


@cli.command("train-ensemble")
@click.option("--manifest", "manifest_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--preprocessed", "preprocessed_dir", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--out", "run_dir", type=click.Path(path_type=Path), required=True)
@click.option("--member-seeds", type=str, default=None, help="Comma-separated seeds, one per member.")
@click.pass_context
def cmd_train_ensemble(ctx, manifest_path, preprocessed_dir, run_dir, member_seeds):
    """Train one network per member seed on the same data."""
    rc = _run_config(ctx, {"ensemble.member_seeds": member_seeds})
    config = rc.training_config(deterministic=ctx.obj.get("deterministic", False))
    ensemble = rc.ensemble_spec(base_seed=config.seed)
    manifest = ds.read_manifest(manifest_path)
    rc.persist(run_dir)
    try:
        checkpoints = train_ensemble(
            manifest, config, ensemble, Path(preprocessed_dir), Path(run_dir)
        )
    except NonFiniteLoss as exc:
        click.echo(f"training diverged at epoch {exc.epoch}", err=True)
        sys.exit(EXIT_DIVERGENCE)
    for ckpt in checkpoints:
        click.echo(str(ckpt))


@cli.command("evaluate")
@click.option("--checkpoint", "checkpoint_paths", type=click.Path(path_type=Path), multiple=True, required=True)
@click.option("--manifest", "manifest_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--preprocessed", "preprocessed_dir", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--split", "split_name", type=click.Choice(["test", "validation", "train"]), default="test")
@click.option("--test-set-name", type=str, default="synthetic_test")
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
@click.pass_context
def cmd_evaluate(ctx, checkpoint_paths, manifest_path, preprocessed_dir, split_name, test_set_name, out_dir):
    """Fuse ensemble predictions on a split and write ROC, report, and prediction files."""
    rc = _run_config(ctx)
    manifest = ds.read_manifest(manifest_path)
    entries = manifest.split_entries(ds.Split(split_name))
    if not entries:
        raise DataError(f"manifest has no entries in split {split_name!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    per_member = []
    normalization = None
    for i, path in enumerate(checkpoint_paths):
        try:
            model, config, _ = load_checkpoint(path)
        except FileNotFoundError as exc:
            raise DataError(str(exc))
        if normalization is None:
            normalization = config.normalization
        elif normalization != config.normalization:
            raise DataError("checkpoints disagree on normalization method")
        model_id = f"member_{i:02d}"
        preds = predict_scores(
            model, entries, Path(preprocessed_dir), config.normalization,
            config.batch_size, model_id=model_id,
        )
        ev.write_predictions_csv(preds, out_dir / f"predictions_{model_id}.csv")
        per_member.append(preds)

    fused = ev.ensemble_mean(per_member) if len(per_member) > 1 else per_member[0]
    ev.write_predictions_csv(fused, out_dir / "predictions_ensemble.csv")
    labels = {e.image_id: e.grade_record.rdr for e in entries}
    try:
        report, curve = ev.build_report(
            test_set_name, fused, labels,
            normalization=normalization.value, ensemble_size=len(per_member),
        )
    except ev.DegenerateLabels as exc:
        raise DataError(str(exc))
    ev.write_report_json(report, out_dir / "report.json")
    ev.write_roc_csv(curve, out_dir / "roc.csv")
    (out_dir / "report.txt").write_text(ev.format_reference_table([report]))
    rc.persist(out_dir)
    click.echo(f"{test_set_name}: AUC {report.auc:.4f} over {report.n_images} images")


@cli.command("report")
@click.option("--report-json", "report_paths", type=click.Path(exists=True, path_type=Path), multiple=True)
@click.option("--out", "out_path", type=click.Path(path_type=Path), default=None)
def cmd_report(report_paths, out_path):
    """Render the benchmark comparison table, optionally with measured reports."""
    import json

    measured = [ev.report_from_dict(json.loads(Path(p).read_text())) for p in report_paths]
    table = ev.format_reference_table(measured)
    if out_path:
        Path(out_path).write_text(table)
    click.echo(table)


@cli.command("serve-grading")
@click.option("--manifest", "manifest_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--grades-file", type=click.Path(path_type=Path), required=True)
@click.option("--session-id", type=str, default="default")
@click.option("--grader-id", type=str, default="grader")
@click.option("--port", type=int, default=8011)
@click.option("--ui-dir", type=click.Path(path_type=Path), default=None)
def cmd_serve_grading(manifest_path, grades_file, session_id, grader_id, port, ui_dir):
    """Serve the grading backend (and the grading UI when a build is present)."""
    import uvicorn

    from .grading import GradingSession, build_app

    manifest = ds.read_manifest(manifest_path)
    session = GradingSession(session_id, grader_id, manifest, Path(grades_file))
    if ui_dir is None:
        bundled = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        ui_dir = bundled if bundled.is_dir() else None
    app = build_app(session, ui_dir=ui_dir)
    uvicorn.run(app, host="127.0.0.1", port=port)


def main() -> None:
    try:
        cli(standalone_mode=False)
    except click.exceptions.Exit as exc:
        sys.exit(exc.exit_code)
    except click.UsageError as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        sys.exit(EXIT_USAGE)
    except DataError as exc:
        click.echo(f"error: {exc.message}", err=True)
        sys.exit(EXIT_DATA)
    except click.ClickException as exc:
        exc.show()
        sys.exit(exc.exit_code)
    except (FileNotFoundError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_DATA)


if __name__ == "__main__":
    main()
