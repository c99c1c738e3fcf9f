"""
One-step supervised training: relative L2 loss, Adam and a step-decay schedule.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from mswt.errors import DimensionError, InstabilityError, ValidationError
from mswt.metrics import rel_l2_metric
from mswt.models import with_coords
from mswt.network import mswt_forward
from mswt.tensor import Tape, Tensor, backward, div, l2_norm, mean, sub

logger = logging.getLogger(__name__)


def relative_l2_loss(pred, target, eps=1e-8):
    """Batch mean of ||pred - target|| / (||target|| + eps), norms over each whole sample.

    Unbatched H x W x C inputs count as a batch of one.
    """
    if pred.shape != target.shape:
        raise DimensionError(f"prediction {pred.shape} and target {target.shape} differ")
    if eps < 0:
        raise ValidationError(f"loss eps must be non-negative, got {eps}")
    if pred.ndim < 2:
        raise DimensionError(f"loss needs at least a batch and one field axis, got {pred.shape}")
    sample_axes = tuple(range(1, pred.ndim)) if pred.ndim == 4 else tuple(range(pred.ndim))
    numerator = l2_norm(sub(pred, target), sample_axes)
    denominator = Tensor(np.sqrt(np.sum(target.data * target.data, axis=sample_axes)) + eps)
    return mean(div(numerator, denominator))


@dataclass
class AdamState:
    """First and second moments per parameter name, plus the step counter."""

    first: dict
    second: dict
    step: int = 0

    @classmethod
    def zeros(cls, params):
        return cls(
            first={name: np.zeros_like(t.data) for name, t in params.items()},
            second={name: np.zeros_like(t.data) for name, t in params.items()},
        )


def adam_step(params, grads, state, lr, cfg):
    """Bias-corrected Adam update applied to ``params`` in place; returns (params, state)."""
    for name, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            raise InstabilityError(f"non-finite gradient for parameter '{name}'", index=state.step, parameter=name)
        if state.first[name].shape != grad.shape:
            raise DimensionError(f"optimizer moments for '{name}' do not match its gradient")

    state.step += 1
    correction1 = 1.0 - cfg.beta1 ** state.step
    correction2 = 1.0 - cfg.beta2 ** state.step
    for name, tensor in params.items():
        grad = grads[name]
        state.first[name] = cfg.beta1 * state.first[name] + (1.0 - cfg.beta1) * grad
        state.second[name] = cfg.beta2 * state.second[name] + (1.0 - cfg.beta2) * grad * grad
        m_hat = state.first[name] / correction1
        v_hat = state.second[name] / correction2
        tensor.data = tensor.data - lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
    return params, state


def lr_at(iteration, cfg):
    """lr0 * gamma ** (number of milestones <= iteration)."""
    if iteration < 0:
        raise ValidationError(f"iteration must be non-negative, got {iteration}")
    decays = sum(1 for milestone in cfg.milestones if milestone <= iteration)
    return cfg.learning_rate * cfg.gamma ** decays


@dataclass
class TrainingState:
    """Everything needed to continue a run bit-exactly."""

    iteration: int
    optimizer: AdamState
    rng_state: dict
    loss_history: list = field(default_factory=list)
    lr_history: list = field(default_factory=list)

    @classmethod
    def start(cls, params, cfg):
        rng = np.random.Generator(np.random.PCG64(cfg.seed))
        return cls(iteration=0, optimizer=AdamState.zeros(params), rng_state=rng.bit_generator.state)


def model_inputs(dataset):
    """Normalised state channels with the raw coordinate channels appended, and normalised targets."""
    normalizer = dataset.normalizer
    inputs = with_coords(normalizer.normalize(dataset.inputs), dataset.coords)
    targets = normalizer.normalize(dataset.targets)
    return inputs, targets


def train(model, dataset, cfg, state=None, on_checkpoint=None):
    """Run iterations ``state.iteration .. cfg.iterations - 1``.

    ``on_checkpoint(model, state)`` is called every ``cfg.checkpoint_every``
    iterations. A non-finite loss raises InstabilityError with the iteration
    index; the parameters are left as they were before that iteration.
    """
    cfg.validate()
    if len(dataset) == 0:
        raise ValidationError("training dataset is empty")
    params = model.parameters
    state = state or TrainingState.start(params, cfg)
    inputs, targets = model_inputs(dataset)
    batch_size = min(cfg.batch_size, len(dataset))

    rng = np.random.Generator(np.random.PCG64())
    rng.bit_generator.state = state.rng_state

    logger.info(
        f"Training from iteration {state.iteration} to {cfg.iterations} "
        f"on {len(dataset)} pairs, batch {batch_size}"
    )
    for iteration in range(state.iteration, cfg.iterations):
        lr = lr_at(iteration, cfg)
        picks = rng.choice(len(dataset), size=batch_size, replace=False)
        batch_x, batch_y = Tensor(inputs[picks]), Tensor(targets[picks])

        with Tape() as tape:
            tape.watch(params)
            loss = relative_l2_loss(mswt_forward(batch_x, model.config, params), batch_y, cfg.loss_eps)
        loss_value = loss.item()
        if not np.isfinite(loss_value):
            raise InstabilityError(f"non-finite loss at iteration {iteration}", index=iteration)
        grads = backward(tape, loss)
        adam_step(params, grads, state.optimizer, lr, cfg)

        state.loss_history.append(loss_value)
        state.lr_history.append(lr)
        state.iteration = iteration + 1
        state.rng_state = rng.bit_generator.state
        logger.debug(f"iteration {iteration}: lr={lr:.3e} loss={loss_value:.6e}")

        if on_checkpoint and cfg.checkpoint_every and state.iteration % cfg.checkpoint_every == 0:
            on_checkpoint(model, state)
    return state


def one_step_error(model, dataset, chunk=16):
    """Mean relative L2 error of single predictions, in physical units."""
    inputs, _ = model_inputs(dataset)
    errors = []
    for start in range(0, len(dataset), chunk):
        predictions = dataset.normalizer.denormalize(model.predict(inputs[start:start + chunk]))
        for prediction, target in zip(predictions, dataset.targets[start:start + chunk]):
            errors.append(rel_l2_metric(prediction, target))
    return float(np.mean(errors))
