"""
Autoregressive rollout of a one-step operator.
"""

import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from mswt.errors import DimensionError, ValidationError
from mswt.models import Trajectory, with_coords

logger = logging.getLogger(__name__)


def model_predictor(model):
    """Wrap a model as a numpy-in, numpy-out step function on normalised inputs."""
    return model.predict


def rollout(predict, u_init, coords, steps, normalizer, dt=1.0):
    """Iterate ``predict`` ``steps`` times from ``u_init``.

    Every step normalises the current physical state, re-attaches the same
    coordinate channels, predicts and denormalises. The result holds
    ``steps + 1`` states including the initial one. When step k yields a
    non-finite state the trajectory stops at k states and ``unstable_at = k``.
    """
    if steps < 0:
        raise ValidationError(f"rollout steps must be non-negative, got {steps}")
    state = np.asarray(u_init, dtype=np.float64)
    if state.ndim != 3:
        raise DimensionError(f"initial state must be H x W x C, got {state.shape}")
    if coords.shape[:2] != state.shape[:2]:
        raise DimensionError(f"coordinates {coords.shape} do not match the state grid {state.shape}")

    states = [state]
    unstable_at = None
    for step in range(1, steps + 1):
        prediction = predict(with_coords(normalizer.normalize(state), coords))
        state = normalizer.denormalize(np.asarray(prediction, dtype=np.float64))
        if state.shape != states[0].shape:
            raise DimensionError(f"step {step} produced shape {state.shape}, expected {states[0].shape}")
        if not np.all(np.isfinite(state)):
            unstable_at = step
            logger.warning(f"Rollout became unstable at step {step}; keeping {len(states)} states")
            break
        states.append(state)
    return Trajectory(states=np.stack(states), coords=coords, dt=dt, unstable_at=unstable_at)


def rollout_many(predict, initial_states, coords, steps, normalizer, dt=1.0, workers=1):
    """Roll out several initial conditions; results keep the input order."""
    initial_states = list(initial_states)
    if workers <= 1:
        return [rollout(predict, u0, coords, steps, normalizer, dt) for u0 in initial_states]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(rollout, predict, u0, coords, steps, normalizer, dt) for u0 in initial_states]
        return [future.result() for future in futures]
