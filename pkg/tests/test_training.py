import dataclasses

import numpy as np
import pytest

from mswt.errors import ConfigError, DimensionError, InstabilityError
from mswt.models import Normalizer, PairDataset, TrainConfig
from mswt.network import MSWT
from mswt.solver import coordinate_channels
from mswt.tensor import Tensor, grad_check
from mswt.training import AdamState, TrainingState, adam_step, lr_at, relative_l2_loss, train


def test_loss_closed_forms(rng):
    u = rng.standard_normal((2, 4, 4, 1))
    unit = u / np.linalg.norm(u[0])
    assert relative_l2_loss(Tensor(u), Tensor(u)).item() == 0.0
    assert relative_l2_loss(Tensor(np.zeros((1, 4, 4, 1))), Tensor(unit[:1]), eps=0.0).item() == pytest.approx(1.0)
    assert relative_l2_loss(Tensor(2 * unit[:1]), Tensor(unit[:1]), eps=0.0).item() == pytest.approx(1.0)


def test_loss_is_scale_aware(rng):
    u = rng.standard_normal((1, 4, 4, 2))
    for alpha in (1e-3, 1.0, 1e3):
        assert relative_l2_loss(Tensor(alpha * u), Tensor(alpha * u)).item() == 0.0
        assert relative_l2_loss(Tensor(np.zeros_like(u)), Tensor(alpha * u)).item() < 1.0


def test_loss_averages_over_batch():
    target = np.ones((2, 2, 2, 1))
    pred = target.copy()
    pred[1] = 0.0
    assert relative_l2_loss(Tensor(pred), Tensor(target), eps=0.0).item() == pytest.approx(0.5)


def test_loss_shape_mismatch():
    with pytest.raises(DimensionError):
        relative_l2_loss(Tensor(np.ones((1, 2, 2, 1))), Tensor(np.ones((1, 2, 2, 2))))


def test_loss_gradient_vanishes_at_target(rng):
    from mswt.tensor import value_and_grad

    u = rng.standard_normal((2, 4, 4, 1))
    _, grads = value_and_grad(lambda p: relative_l2_loss(p["pred"], Tensor(u)), {"pred": Tensor(u.copy())})
    assert np.array_equal(grads["pred"], np.zeros_like(u))


def test_loss_grad_check(rng):
    params = {"pred": Tensor(rng.standard_normal((2, 4, 4, 1)))}
    target = Tensor(rng.standard_normal((2, 4, 4, 1)))
    assert grad_check(lambda p: relative_l2_loss(p["pred"], target), params) <= 1e-5


def test_lr_schedule():
    cfg = TrainConfig(learning_rate=1e-3, milestones=(10, 20), gamma=0.5)
    assert lr_at(0, cfg) == 1e-3
    assert lr_at(9, cfg) == 1e-3
    assert lr_at(15, cfg) == 5e-4
    assert lr_at(25, cfg) == 2.5e-4


def test_default_milestones_and_validation():
    assert TrainConfig(iterations=100).milestones == (50, 75)
    with pytest.raises(ConfigError):
        TrainConfig(milestones=(20, 10)).validate()
    with pytest.raises(ConfigError):
        TrainConfig(gamma=0.0).validate()


def _scalar_params(value):
    return {"w": Tensor(np.array([value]))}


def test_adam_first_step_is_about_lr_times_sign():
    cfg = TrainConfig()
    params = _scalar_params(1.0)
    state = AdamState.zeros(params)
    adam_step(params, {"w": np.array([0.3])}, state, 1e-2, cfg)
    assert params["w"].data[0] == pytest.approx(1.0 - 1e-2, rel=1e-6)
    assert state.step == 1


def test_adam_zero_gradient_keeps_parameters():
    cfg = TrainConfig()
    params = _scalar_params(2.0)
    state = AdamState.zeros(params)
    adam_step(params, {"w": np.array([1.0])}, state, 1e-3, cfg)
    before, first = params["w"].data.copy(), state.first["w"].copy()
    state_moment = state.second["w"].copy()
    adam_step(params, {"w": np.array([0.0])}, state, 0.0, cfg)
    assert np.array_equal(params["w"].data, before)
    assert abs(state.first["w"][0]) < abs(first[0])
    assert state.second["w"][0] < state_moment[0]


def test_adam_is_invariant_to_gradient_scale():
    cfg = TrainConfig()
    updates = []
    for factor in (1.0, 10.0):
        params = _scalar_params(0.0)
        adam_step(params, {"w": np.array([0.7 * factor])}, AdamState.zeros(params), 1e-3, cfg)
        updates.append(params["w"].data[0])
    assert updates[1] == pytest.approx(updates[0], rel=1e-6)


def test_adam_names_non_finite_parameter():
    params = _scalar_params(1.0)
    with pytest.raises(InstabilityError) as info:
        adam_step(params, {"w": np.array([np.nan])}, AdamState.zeros(params), 1e-3, TrainConfig())
    assert info.value.parameter == "w"


def test_normalizer_round_trip(rng):
    states = rng.standard_normal((5, 4, 4, 2)) * 3 + 1
    normalizer = Normalizer.fit(states)
    assert np.max(np.abs(normalizer.denormalize(normalizer.normalize(states)) - states)) <= 1e-12


def single_pair_dataset(rng, cfg):
    u0 = rng.standard_normal((1, cfg.height, cfg.width, 1))
    u1 = np.roll(u0, 1, axis=1)
    return PairDataset(
        inputs=u0, targets=u1,
        coords=coordinate_channels(cfg.height, cfg.width),
        normalizer=Normalizer.identity(1),
    )


def test_single_pair_overfit(rng, tiny_config):
    dataset = single_pair_dataset(rng, tiny_config)
    cfg = TrainConfig(learning_rate=1e-2, batch_size=1, iterations=500, milestones=(300, 400), checkpoint_every=0)
    model = MSWT.initialize(tiny_config, seed=0)
    state = train(model, dataset, cfg)
    assert len(state.loss_history) == 500
    assert state.loss_history[-1] <= 0.1 * state.loss_history[0]


def test_training_is_deterministic_and_resumable(rng, tiny_config):
    inputs = rng.standard_normal((6, 8, 8, 1))
    dataset = PairDataset(
        inputs=inputs, targets=np.roll(inputs, 1, axis=2),
        coords=coordinate_channels(8, 8),
    )
    cfg = TrainConfig(batch_size=2, iterations=6, milestones=(3,), checkpoint_every=3, seed=5)

    snapshots = []

    def keep(model, state):
        snapshots.append((model.parameters.copy(), state.iteration, dict(state.rng_state),
                          AdamState({k: v.copy() for k, v in state.optimizer.first.items()},
                                    {k: v.copy() for k, v in state.optimizer.second.items()},
                                    state.optimizer.step),
                          list(state.loss_history), list(state.lr_history)))

    first = MSWT.initialize(tiny_config, seed=1)
    full = train(first, dataset, cfg, on_checkpoint=keep)
    second = MSWT.initialize(tiny_config, seed=1)
    repeat = train(second, dataset, cfg)
    assert full.loss_history == repeat.loss_history
    assert len(full.loss_history) == 6

    params, iteration, rng_state, optimizer, losses, lrs = snapshots[0]
    assert iteration == 3
    resumed_model = MSWT(tiny_config, params)
    resumed = train(
        resumed_model, dataset, cfg,
        state=TrainingState(iteration, optimizer, rng_state, losses, lrs),
    )
    assert resumed.loss_history == full.loss_history
    assert all(np.array_equal(resumed_model.parameters[n].data, first.parameters[n].data) for n in params)


def test_training_aborts_on_non_finite_loss(rng, tiny_config):
    dataset = single_pair_dataset(rng, tiny_config)
    model = MSWT.initialize(tiny_config, seed=0)
    model.parameters["detokenizer.bias"].data[:] = np.nan
    with pytest.raises(InstabilityError) as info:
        train(model, dataset, dataclasses.replace(TrainConfig(), iterations=3, batch_size=1))
    assert info.value.index == 0
