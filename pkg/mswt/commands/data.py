"""
Dataset generation command.
"""

import logging
from pathlib import Path

import click

from mswt.solver import generate
from mswt.utils.csv_utils import write_normalization_csv, write_pairs_csv
from mswt.utils.field_utils import atomic_write, write_trajectory
from mswt.utils.settings_utils import describe_run_config, dump_run_config, load_run_config, with_seed

logger = logging.getLogger(__name__)

RUN_CONFIG_NAME = "run.ini"


def trajectory_path(root, split, index):
    return Path(root) / split / f"traj_{index:04d}.mswf"


def write_dataset(out, config, data):
    """Lay a generated dataset out under ``out``."""
    out = Path(out)
    for split, trajectories in (("train", data.train), ("test", data.test)):
        for index, trajectory in enumerate(trajectories):
            write_trajectory(trajectory_path(out, split, index), trajectory)
    write_pairs_csv(out / "pairs.csv", [len(t) for t in data.train])
    write_normalization_csv(out / "normalization.csv", data.pairs.normalizer)
    with atomic_write(out / RUN_CONFIG_NAME, mode="w") as handle:
        handle.write(dump_run_config(config))


@click.command("generate-data")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), help="Run configuration (INI).")
@click.option("--seed", type=int, default=None, help="Override the solver and training seeds.")
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory (default: [paths] data_dir).")
@click.option("--workers", type=int, default=1, show_default=True, help="Trajectories integrated in parallel.")
def generate_data(config_path, seed, out, workers):
    """Generate training and test trajectories plus the pair index."""
    config = with_seed(load_run_config(config_path), seed)
    describe_run_config(config)
    out = Path(out or config.paths.data_dir)

    data = generate(config, workers=workers)
    write_dataset(out, config, data)

    logger.info("=" * 60)
    logger.info(f"Problem: {config.data.problem}")
    logger.info(f"Train trajectories: {len(data.train)} x {len(data.train[0])} snapshots")
    logger.info(f"Test trajectories: {len(data.test)} x {len(data.test[0])} snapshots")
    logger.info(f"Training pairs: {len(data.pairs)}")
    logger.info(f"Written to: {out}")
    logger.info("=" * 60)
    click.echo(f"pairs={len(data.pairs)} train={len(data.train)} test={len(data.test)}")
