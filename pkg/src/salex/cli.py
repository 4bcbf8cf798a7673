"""Command-line front end.

Subcommands: saliency (generate maps), train, eval, correlate, overlay.
Every run writes a human-readable key:value manifest next to its outputs.
Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import os
import re
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click
import numpy as np

from . import __version__
from . import dataset as ds
from . import images, metrics, saliency as sal
from . import model as mdl
from . import training
from .errors import DataError, NumericError, ShapeError


def _load_dataset(spec_str: str) -> dict[str, ds.DatasetPartition]:
    """Parse a dataset locator: fer2013:<csv> or dir:<root>[:taxonomy]."""
    if spec_str.startswith("fer2013:"):
        return ds.parse_fer2013_csv(spec_str[len("fer2013:"):])
    if spec_str.startswith("dir:"):
        rest = spec_str[len("dir:"):]
        taxonomy = ds.CKPLUS_CLASSES
        if ":" in rest:
            rest, tax_name = rest.rsplit(":", 1)
            if tax_name == "fer2013":
                taxonomy = ds.FER2013_CLASSES
            elif tax_name == "ckplus":
                taxonomy = ds.CKPLUS_CLASSES
            else:
                raise click.UsageError(f"unknown taxonomy {tax_name!r}")
        part = ds.load_labeled_dir(rest, taxonomy)
        return {part.name: part}
    raise click.UsageError(
        f"dataset must be 'fer2013:<csv>' or 'dir:<root>[:taxonomy]', got {spec_str!r}"
    )


def _pick_partition(parts: dict[str, ds.DatasetPartition],
                    name: str | None) -> ds.DatasetPartition:
    if name is None:
        if len(parts) == 1:
            return next(iter(parts.values()))
        name = "Training"
    if name not in parts:
        raise DataError(f"partition {name!r} not in {sorted(parts)}")
    return parts[name]


def _sanitize(origin: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", origin)


def _write_manifest(out_dir: Path, entries: list[tuple[str, object]]) -> None:
    lines = [f"{k}: {v}" for k, v in entries]
    (out_dir / "manifest.txt").write_text("\n".join(lines) + "\n")


def _worker_count() -> int:
    raw = os.environ.get("SALEX_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return max(1, os.cpu_count() or 1)


def _apply_saliency_mode(parts: dict[str, ds.DatasetPartition]) -> None:
    """Replace every sample image by its spectral-residual saliency map."""
    params = sal.SpectralParams()
    for part in parts.values():
        for s in part.samples:
            s.image = sal.spectral_residual(s.image, params)


@click.group(name="salex")
@click.version_option(__version__)
def cli():
    """Facial expression classification from saliency maps."""


@cli.command("saliency")
@click.option("--input", "dataset_str", required=True,
              help="Dataset: fer2013:<csv> or dir:<root>[:taxonomy].")
@click.option("--backend", default="spectral", show_default=True,
              help="spectral (built-in) or external:<dir> of pre-made maps.")
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path),
              help="Output directory for PGM maps.")
@click.option("--partition", default=None,
              help="Partition to process (default: Training or the only one).")
def cmd_saliency(dataset_str, backend, out_dir, partition):
    """Generate one saliency map per sample as PGM files."""
    start = time.time()
    parts = _load_dataset(dataset_str)
    part = _pick_partition(parts, partition)
    out_dir.mkdir(parents=True, exist_ok=True)

    written = []
    if backend == "spectral":
        params = sal.SpectralParams()

        def make(sample):
            return sal.spectral_residual(sample.image, params)

        with ThreadPoolExecutor(max_workers=_worker_count()) as pool:
            maps = list(pool.map(make, part.samples))
    elif backend.startswith("external:"):
        src_dir = Path(backend[len("external:"):])
        maps = []
        for s in part.samples:
            candidates = [src_dir / f"{_sanitize(s.origin)}{ext}"
                          for ext in (".pgm", ".png")]
            path = next((p for p in candidates if p.exists()), None)
            if path is None:
                raise DataError(
                    f"no external map for sample {s.origin!r} under {src_dir}"
                )
            maps.append(sal.ingest_external_map(path, (48, 48)))
    else:
        raise click.UsageError(f"unknown backend {backend!r}")

    for s, m in zip(part.samples, maps):
        name = f"{_sanitize(s.origin)}.pgm"
        images.write_pgm(out_dir / name, m)
        written.append(name)
    _write_manifest(out_dir, [
        ("command", "saliency"),
        ("version", __version__),
        ("input", dataset_str),
        ("backend", backend),
        ("partition", part.name),
        ("maps_written", len(written)),
        ("outputs", " ".join(written)),
        ("wall_clock_s", f"{time.time() - start:.2f}"),
    ])
    click.echo(f"wrote {len(written)} saliency maps to {out_dir}")


@cli.command("train")
@click.option("--dataset", "dataset_str", required=True,
              help="Dataset: fer2013:<csv> or dir:<root>[:taxonomy].")
@click.option("--mode", type=click.Choice(["faces", "saliency"]),
              default="faces", show_default=True)
@click.option("--arch", type=click.Choice(["vgg19", "tiny"]),
              default="tiny", show_default=True)
@click.option("--lr", default=0.01, show_default=True)
@click.option("--epochs", default=20, show_default=True)
@click.option("--batch-size", default=128, show_default=True)
@click.option("--momentum", default=0.9, show_default=True)
@click.option("--dropout", default=0.5, show_default=True)
@click.option("--crops-per-sample", default=1, show_default=True,
              help="Random 44x44 crops per sample per epoch (full-scale protocol: 10).")
@click.option("--seed", default=0, show_default=True)
@click.option("--partition", default=None,
              help="Training partition (default: Training or the only one).")
@click.option("--limit", default=0, show_default=True,
              help="Use only the first N samples (0 = all).")
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path),
              help="Output directory for checkpoint + epoch log.")
def cmd_train(dataset_str, mode, arch, lr, epochs, batch_size, momentum,
              dropout, crops_per_sample, seed, partition, limit, out_dir):
    """Train a classifier on faces or on their saliency maps."""
    start = time.time()
    parts = _load_dataset(dataset_str)
    if mode == "saliency":
        _apply_saliency_mode(parts)
    part = _pick_partition(parts, partition)
    if limit:
        part = ds.DatasetPartition(part.name, part.taxonomy, part.samples[:limit])
    num_classes = len(part.taxonomy)
    builder = mdl.build_vgg19_custom if arch == "vgg19" else mdl.build_tiny
    spec = builder(num_classes=num_classes, dropout_rate=dropout)
    config = training.TrainConfig(
        learning_rate=lr, epochs=epochs, batch_size=batch_size,
        momentum=momentum, dropout_rate=dropout, seed=seed,
        input_mode=mode, crops_per_sample=crops_per_sample,
    )
    ckpt, logs = training.train(spec, part, config, progress=True)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_path = out_dir / "model.ckpt"
    mdl.save_checkpoint(ckpt, ckpt_path)
    (out_dir / "epochs.csv").write_text(training.epoch_log_csv(logs))
    _write_manifest(out_dir, [
        ("command", "train"),
        ("version", __version__),
        ("dataset", dataset_str),
        ("partition", part.name),
        ("samples", len(part)),
        ("input_mode", mode),
        ("arch", arch),
        ("learning_rate", lr),
        ("epochs", epochs),
        ("batch_size", batch_size),
        ("momentum", momentum),
        ("dropout_rate", dropout),
        ("crops_per_sample", crops_per_sample),
        ("seed", seed),
        ("final_loss", f"{ckpt.loss:.6f}"),
        ("outputs", "model.ckpt epochs.csv"),
        ("wall_clock_s", f"{time.time() - start:.2f}"),
    ])
    click.echo(f"trained {epochs} epochs, final loss {ckpt.loss:.4f}; "
               f"checkpoint at {ckpt_path}")


@cli.command("eval")
@click.option("--ckpt", "ckpt_path", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--dataset", "dataset_str", required=True)
@click.option("--partition", default=None)
@click.option("--mode", type=click.Choice(["faces", "saliency"]),
              default="faces", show_default=True,
              help="Must match the mode the checkpoint was trained in.")
@click.option("--tencrop/--no-tencrop", default=True, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
def cmd_eval(ckpt_path, dataset_str, partition, mode, tencrop, out_dir):
    """Evaluate a checkpoint; writes confusion matrices and a summary."""
    start = time.time()
    ckpt = mdl.load_checkpoint(ckpt_path)
    parts = _load_dataset(dataset_str)
    if mode == "saliency":
        _apply_saliency_mode(parts)
    part = _pick_partition(parts, partition)
    report = training.evaluate(ckpt, part, tencrop=tencrop)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "confusion.csv").write_text(metrics.confusion_csv(report.confusion))
    (out_dir / "normalized.csv").write_text(
        metrics.confusion_csv(report.confusion, normalized=True))
    (out_dir / "summary.txt").write_text(metrics.summary_text(report))
    _write_manifest(out_dir, [
        ("command", "eval"),
        ("version", __version__),
        ("checkpoint", ckpt_path),
        ("dataset", dataset_str),
        ("partition", part.name),
        ("mode", mode),
        ("tencrop", tencrop),
        ("samples", report.confusion.total),
        ("accuracy", f"{report.accuracy:.6f}"),
        ("chance_level", f"{report.chance_level:.6f}"),
        ("outputs", "confusion.csv normalized.csv summary.txt"),
        ("wall_clock_s", f"{time.time() - start:.2f}"),
    ])
    click.echo(f"accuracy {report.accuracy:.4f} "
               f"(chance {report.chance_level:.4f}) on {report.confusion.total} samples")


def _read_report(report_dir: Path) -> metrics.EvalReport:
    path = report_dir / "confusion.csv"
    if not path.exists():
        raise DataError(f"{report_dir}: no confusion.csv found")
    lines = path.read_text().strip().splitlines()
    taxonomy = tuple(lines[0].split(","))
    counts = np.array([[int(v) for v in ln.split(",")] for ln in lines[1:]],
                      dtype=np.int64)
    if counts.shape != (len(taxonomy), len(taxonomy)):
        raise DataError(f"{path}: confusion matrix is not square")
    return metrics.EvalReport(metrics.ConfusionMatrix(counts, taxonomy))


@cli.command("correlate")
@click.option("--report-a", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--report-b", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--out", "out_path", default=None, type=click.Path(path_type=Path),
              help="Where to write the result (default: <report-a>/correlation.txt).")
def cmd_correlate(report_a, report_b, out_path):
    """Pearson correlation of the two reports' per-class recall diagonals."""
    ra = _read_report(report_a)
    rb = _read_report(report_b)
    r = metrics.correlate_diagonals(ra, rb)
    click.echo(f"pearson_r: {r:.4f}")
    out_path = out_path or (report_a / "correlation.txt")
    out_path.write_text(f"pearson_r: {r:.6f}\n"
                        f"report_a: {report_a}\nreport_b: {report_b}\n")


@cli.command("overlay")
@click.option("--face", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--map", "map_path", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--alpha", default=0.5, show_default=True,
              help="Blend weight of the saliency map, in [0,1].")
@click.option("--out", "out_path", required=True, type=click.Path(path_type=Path))
def cmd_overlay(face, map_path, alpha, out_path):
    """Blend a face with its saliency map and write a PGM."""
    face_img = images.read_image(face)
    map_img = images.read_image(map_path)
    images.write_pgm(out_path, images.overlay(face_img, map_img, alpha))
    click.echo(f"wrote {out_path}")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:  # --help / --version
        return exc.exit_code
    except (click.UsageError, ShapeError) as exc:
        click.echo(f"usage error: {exc}", err=True)
        return 1
    except DataError as exc:
        click.echo(f"data error: {exc}", err=True)
        return 2
    except NumericError as exc:
        click.echo(f"numeric error: {exc}", err=True)
        return 3


if __name__ == "__main__":
    sys.exit(main())
