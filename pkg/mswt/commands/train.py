"""
Training and rollout commands.
"""

import logging
from pathlib import Path

import click

from mswt.commands.data import RUN_CONFIG_NAME
from mswt.errors import DimensionError, InstabilityError, ValidationError
from mswt.models import Normalizer, PairDataset
from mswt.network import MSWT
from mswt.rollout import model_predictor, rollout
from mswt.solver import coordinate_channels
from mswt.training import train as run_training
from mswt.utils.checkpoint_utils import Checkpoint, load_checkpoint, save_checkpoint
from mswt.utils.csv_utils import read_normalization_csv, write_loss_csv
from mswt.utils.field_utils import read_state, read_trajectory, write_trajectory
from mswt.utils.settings_utils import describe_run_config, load_run_config, with_seed

logger = logging.getLogger(__name__)

LATEST_CHECKPOINT = "checkpoint.mswc"


def load_training_pairs(data_dir):
    """Pairs from every training trajectory under ``data_dir``, with the stored normalisation."""
    data_dir = Path(data_dir)
    paths = sorted((data_dir / "train").glob("traj_*.mswf"))
    if not paths:
        raise ValidationError(f"no training trajectories in {data_dir / 'train'}")
    trajectories = [read_trajectory(path) for path in paths]
    normalizer = None
    statistics = data_dir / "normalization.csv"
    if statistics.exists():
        mean, std = read_normalization_csv(statistics)
        normalizer = Normalizer(mean=mean, std=std)
    return PairDataset.from_trajectories(trajectories, normalizer=normalizer)


def checkpoint_name(iteration):
    return f"checkpoint_{iteration:06d}.mswc"


@click.command("train")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), help="Run configuration (INI).")
@click.option("--seed", type=int, default=None, help="Override the training seed.")
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Run directory (default: [paths] run_dir).")
@click.option("--data", "data_dir", type=click.Path(file_okay=False), default=None, help="Dataset directory.")
@click.option("--resume", type=click.Path(exists=True, dir_okay=False), default=None, help="Continue from a checkpoint.")
def train(config_path, seed, out, data_dir, resume):
    """Train the operator on one-step pairs; writes checkpoints and loss.csv."""
    if resume:
        checkpoint = load_checkpoint(resume)
        config = checkpoint.config
        model = MSWT(config.model, checkpoint.parameters)
        state = checkpoint.state
    else:
        if config_path is None and data_dir and (Path(data_dir) / RUN_CONFIG_NAME).exists():
            config_path = Path(data_dir) / RUN_CONFIG_NAME
        config = with_seed(load_run_config(config_path), seed)
        model = MSWT.initialize(config.model, seed=config.train.seed)
        state = None
    describe_run_config(config)
    out = Path(out or config.paths.run_dir)
    dataset = load_training_pairs(data_dir or config.paths.data_dir)
    if resume:
        dataset.normalizer = checkpoint.normalizer
    if dataset.inputs.shape[1:] != (config.model.height, config.model.width, config.model.out_channels):
        raise DimensionError(
            f"dataset states {dataset.inputs.shape[1:]} do not match the model grid and channels"
        )

    def write(model_, state_, name):
        save_checkpoint(out / name, Checkpoint(config, model_.parameters, dataset.normalizer, state_))

    def on_checkpoint(model_, state_):
        write(model_, state_, checkpoint_name(state_.iteration))
        write(model_, state_, LATEST_CHECKPOINT)
        write_loss_csv(out / "loss.csv", state_.loss_history, state_.lr_history)

    try:
        state = run_training(model, dataset, config.train, state=state, on_checkpoint=on_checkpoint)
    except InstabilityError:
        logger.error(f"Training aborted; last good checkpoint kept in {out}")
        raise
    write(model, state, LATEST_CHECKPOINT)
    write_loss_csv(out / "loss.csv", state.loss_history, state.lr_history)

    logger.info("=" * 60)
    logger.info(f"Iterations: {state.iteration}")
    if state.loss_history:
        logger.info(f"Loss: first {state.loss_history[0]:.6e}, last {state.loss_history[-1]:.6e}")
    logger.info(f"Run directory: {out}")
    logger.info("=" * 60)
    click.echo(f"iterations={state.iteration}")


@click.command("rollout")
@click.argument("checkpoint_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("initial_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--steps", type=click.IntRange(min=0), required=True, help="Number of model steps K.")
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Trajectory file to write.")
def rollout_command(checkpoint_path, initial_path, steps, out):
    """Iterate a trained model from an initial state; writes K+1 snapshots."""
    checkpoint = load_checkpoint(checkpoint_path)
    model = MSWT(checkpoint.config.model, checkpoint.parameters)
    state = read_state(initial_path)
    cfg = model.config
    if state.shape != (cfg.height, cfg.width, cfg.out_channels):
        raise DimensionError(
            f"initial state {state.shape} does not match the checkpoint grid "
            f"({cfg.height}, {cfg.width}, {cfg.out_channels})"
        )
    trajectory = rollout(
        model_predictor(model),
        state,
        coordinate_channels(cfg.height, cfg.width),
        steps,
        checkpoint.normalizer,
        dt=checkpoint.config.solver.snapshot_interval,
    )
    write_trajectory(out, trajectory)
    logger.info(f"Rollout of {len(trajectory)} snapshots written to {out}")
    if trajectory.unstable_at is not None:
        raise InstabilityError(f"rollout unstable at step {trajectory.unstable_at}", index=trajectory.unstable_at)
    click.echo(f"snapshots={len(trajectory)}")
