"""
Evaluation commands: step metrics, spectra and climatology.
"""

import logging
from pathlib import Path

import click

from mswt.errors import DimensionError, ValidationError
from mswt.metrics import climatology, ensemble_mean_climatology, field_spectrum, metric_summary, step_metrics
from mswt.utils.csv_utils import (
    write_climatology_csv,
    write_metrics_csv,
    write_spectrum_csv,
    write_summary_csv,
    write_zonal_csv,
)
from mswt.utils.field_utils import read_trajectory, write_field

logger = logging.getLogger(__name__)

KINDS = ("enstrophy", "kinetic_energy")


def parse_steps(text):
    try:
        steps = [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise ValidationError(f"steps must be comma-separated integers, got '{text}'") from exc
    if not steps:
        raise ValidationError("no steps requested")
    return steps


def evaluation_rows(pred, truth, steps, channel=0):
    """One metrics row per step; steps after an instability marker carry only the step."""
    if pred.states.shape[1:] != truth.states.shape[1:]:
        raise DimensionError(f"prediction grid {pred.states.shape[1:]} differs from truth {truth.states.shape[1:]}")
    rows = []
    for step in steps:
        if step < 0 or step >= len(truth):
            raise ValidationError(f"step {step} outside the truth trajectory (0..{len(truth) - 1})")
        if step >= len(pred):
            if pred.unstable_at is not None and step >= pred.unstable_at:
                rows.append({"step": step})
                continue
            raise ValidationError(f"step {step} outside the predicted trajectory (0..{len(pred) - 1})")
        rows.append({"step": step, **step_metrics(pred.states[step], truth.states[step], channel)})
    return rows


@click.command("evaluate")
@click.argument("pred_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("truth_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--steps", "steps_text", required=True, help="Comma-separated steps, e.g. 1,30,64.")
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Metrics CSV to write.")
@click.option("--channel", type=int, default=0, show_default=True, help="Vorticity channel for the spectra.")
@click.option("--spectra-dir", type=click.Path(file_okay=False), default=None, help="Also dump both spectra per step.")
def evaluate(pred_path, truth_path, steps_text, out, channel, spectra_dir):
    """Rel L2 and spectral scores of a rollout against the truth at selected steps."""
    pred, truth = read_trajectory(pred_path), read_trajectory(truth_path)
    rows = evaluation_rows(pred, truth, parse_steps(steps_text), channel)
    write_metrics_csv(out, rows)

    if spectra_dir:
        spectra_dir = Path(spectra_dir)
        for row in rows:
            step = row["step"]
            for kind in KINDS:
                truth_spectrum = field_spectrum(truth.states[step][..., channel], kind)
                write_spectrum_csv(spectra_dir / f"truth_{kind}_{step:04d}.csv", truth_spectrum)
                if len(row) > 1:
                    pred_spectrum = field_spectrum(pred.states[step][..., channel], kind)
                    write_spectrum_csv(spectra_dir / f"pred_{kind}_{step:04d}.csv", pred_spectrum)

    logger.info("=" * 60)
    for row in rows:
        if len(row) == 1:
            logger.info(f"step {row['step']}: unstable")
        else:
            logger.info(f"step {row['step']}: rel_l2={row['rel_l2']:.4e} emlr={row['emlr']:.4e}")
    logger.info("=" * 60)
    click.echo(f"rows={len(rows)}")


@click.command("evaluate-set")
@click.argument("pred_dir", type=click.Path(exists=True, file_okay=False))
@click.argument("truth_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--steps", "steps_text", required=True, help="Comma-separated steps, e.g. 1,30,64.")
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Summary CSV to write.")
@click.option("--channel", type=int, default=0, show_default=True, help="Vorticity channel for the spectra.")
def evaluate_set(pred_dir, truth_dir, steps_text, out, channel):
    """Mean and std of the step metrics over every rollout in PRED_DIR.

    Each prediction is scored against the file of the same name in TRUTH_DIR.
    """
    steps = parse_steps(steps_text)
    pred_paths = sorted(Path(pred_dir).glob("*.mswf"))
    if not pred_paths:
        raise ValidationError(f"no trajectories found in {pred_dir}")

    row_sets = []
    for pred_path in pred_paths:
        truth_path = Path(truth_dir) / pred_path.name
        if not truth_path.is_file():
            raise ValidationError(f"no truth trajectory {truth_path} for {pred_path.name}")
        row_sets.append(evaluation_rows(read_trajectory(pred_path), read_trajectory(truth_path), steps, channel))
    summary = metric_summary(row_sets)
    write_summary_csv(out, summary)

    logger.info("=" * 60)
    logger.info(f"Summary over {len(row_sets)} trajectories")
    for entry in summary:
        if entry["count"]:
            logger.info(
                f"step {entry['step']}: rel_l2={entry['rel_l2_mean']:.4e}+-{entry['rel_l2_std']:.4e} "
                f"emlr={entry['emlr_mean']:.4e}+-{entry['emlr_std']:.4e} ({entry['count']} stable)"
            )
        else:
            logger.info(f"step {entry['step']}: no stable trajectory")
    logger.info("=" * 60)
    click.echo(f"trajectories={len(row_sets)} rows={len(summary)}")


@click.command("spectrum")
@click.argument("trajectory_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--step", type=int, required=True, help="Snapshot index.")
@click.option("--kind", type=click.Choice(KINDS), default="enstrophy", show_default=True)
@click.option("--channel", type=int, default=0, show_default=True, help="Vorticity channel.")
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Spectrum CSV to write.")
def spectrum(trajectory_path, step, kind, channel, out):
    """Radially binned spectrum (k, power) of one snapshot."""
    trajectory = read_trajectory(trajectory_path)
    if step < 0 or step >= len(trajectory):
        raise ValidationError(f"step {step} outside the trajectory (0..{len(trajectory) - 1})")
    result = field_spectrum(trajectory.states[step][..., channel], kind)
    write_spectrum_csv(out, result)
    logger.info(f"{kind} spectrum of step {step}: total {result.total():.6e}, peak at k={int(result.power.argmax())}")
    click.echo(f"shells={result.power.shape[0]}")


@click.command("climatology")
@click.argument("reference_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("member_paths", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(file_okay=False), required=True, help="Output directory.")
@click.option("--names", default=None, help="Comma-separated variable names (default var0, var1, ...).")
def climatology_command(reference_path, member_paths, out, names):
    """Time-mean bias report of one or more model trajectories against a reference."""
    reference = read_trajectory(reference_path)
    members = [read_trajectory(path) for path in member_paths]
    if len(members) == 1:
        report = climatology(members[0], reference)
    else:
        report = ensemble_mean_climatology(members, reference)

    variables = report.variables
    labels = [n.strip() for n in names.split(",")] if names else [f"var{v}" for v in range(variables)]
    if len(labels) != variables:
        raise ValidationError(f"{len(labels)} names given for {variables} variables")

    out = Path(out)
    write_climatology_csv(out / "climatology.csv", report, labels)
    write_zonal_csv(out / "zonal.csv", report, labels)
    write_field(out / "bias.mswf", report.bias)

    logger.info("=" * 60)
    logger.info(f"Climatology over {report.members} member(s)")
    for v, label in enumerate(labels):
        logger.info(
            f"{label}: min={report.min_bias[v]:.4e} max={report.max_bias[v]:.4e} "
            f"mean={report.mean_bias[v]:.4e} rmse={report.rmse[v]:.4e}"
        )
    logger.info("=" * 60)
    click.echo(f"variables={variables}")
