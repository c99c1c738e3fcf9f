"""
Utilities for CSV export.

Every table has a fixed column order. Floats are written with ``repr`` (the
shortest text that reads back to the same double); a missing value is an
empty cell.
"""

import csv
import io
import logging

from mswt.utils.field_utils import atomic_write

logger = logging.getLogger(__name__)

METRIC_COLUMNS = ("step", "rel_l2", "smae", "smlr", "emae", "emlr")
SUMMARY_COLUMNS = ("step", "count") + tuple(
    f"{name}_{stat}" for name in METRIC_COLUMNS[1:] for stat in ("mean", "std")
)
LOSS_COLUMNS = ("iteration", "lr", "train_loss")
SPECTRUM_COLUMNS = ("k", "power")
CLIMATOLOGY_COLUMNS = ("variable", "min_bias", "max_bias", "mean_bias", "rmse")
ZONAL_COLUMNS = ("row", "variable", "model", "reference")
PAIR_COLUMNS = ("pair", "trajectory", "step")
NORMALIZATION_COLUMNS = ("channel", "mean", "std")


def format_cell(value):
    if value is None:
        return ""
    if isinstance(value, float) or hasattr(value, "dtype") and value.dtype.kind == "f":
        return repr(float(value))
    return str(value)


def render_csv(columns, rows):
    """Render rows under a header; returns the CSV text."""
    output = io.StringIO()
    writer = csv.writer(output, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_cell(value) for value in row])
    return output.getvalue()


def write_csv(path, columns, rows):
    text = render_csv(columns, rows)
    with atomic_write(path, mode="w") as handle:
        handle.write(text)
    logger.debug(f"Wrote {path}")
    return path


def read_csv(path):
    """Rows as dicts keyed by column name, all values as text."""
    with open(path, newline="", encoding="utf-8") as handle:
        return list(csv.DictReader(handle))


def write_metrics_csv(path, rows):
    """``rows`` are dicts keyed by METRIC_COLUMNS; absent metrics become empty cells."""
    return write_csv(path, METRIC_COLUMNS, ([row.get(column) for column in METRIC_COLUMNS] for row in rows))


def write_summary_csv(path, summary):
    """Per-step mean and std columns; steps with no stable trajectory keep only step and count."""
    return write_csv(path, SUMMARY_COLUMNS, ([entry.get(column) for column in SUMMARY_COLUMNS] for entry in summary))


def write_loss_csv(path, loss_history, lr_history):
    rows = ((iteration, lr, loss) for iteration, (lr, loss) in enumerate(zip(lr_history, loss_history)))
    return write_csv(path, LOSS_COLUMNS, rows)


def write_spectrum_csv(path, spectrum):
    return write_csv(path, SPECTRUM_COLUMNS, zip(spectrum.wavenumbers.tolist(), spectrum.power.tolist()))


def write_climatology_csv(path, report, names):
    rows = (
        (names[v], report.min_bias[v], report.max_bias[v], report.mean_bias[v], report.rmse[v])
        for v in range(report.variables)
    )
    return write_csv(path, CLIMATOLOGY_COLUMNS, rows)


def write_zonal_csv(path, report, names):
    rows = (
        (row, names[v], report.zonal_model[row, v], report.zonal_reference[row, v])
        for row in range(report.zonal_model.shape[0])
        for v in range(report.variables)
    )
    return write_csv(path, ZONAL_COLUMNS, rows)


def write_pairs_csv(path, trajectory_lengths):
    """One row per training pair: its index, source trajectory and starting step."""
    rows = []
    for trajectory, length in enumerate(trajectory_lengths):
        for step in range(length - 1):
            rows.append((len(rows), trajectory, step))
    return write_csv(path, PAIR_COLUMNS, rows)


def write_normalization_csv(path, normalizer):
    rows = ((c, float(m), float(s)) for c, (m, s) in enumerate(zip(normalizer.mean, normalizer.std)))
    return write_csv(path, NORMALIZATION_COLUMNS, rows)


def read_normalization_csv(path):
    rows = read_csv(path)
    return [float(row["mean"]) for row in rows], [float(row["std"]) for row in rows]
