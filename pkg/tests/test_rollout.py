import numpy as np
import pytest

from mswt.errors import DimensionError, ValidationError
from mswt.models import Normalizer, with_coords
from mswt.network import MSWT
from mswt.rollout import model_predictor, rollout, rollout_many
from mswt.solver import coordinate_channels

COORDS = coordinate_channels(8, 8)


def identity(x):
    return x[..., :-2]


def test_identity_predictor_keeps_state(rng):
    u0 = rng.standard_normal((8, 8, 1))
    normalizer = Normalizer(mean=np.array([0.3]), std=np.array([2.0]))
    trajectory = rollout(identity, u0, COORDS, 4, normalizer)
    assert len(trajectory) == 5
    assert trajectory.unstable_at is None
    assert np.allclose(trajectory.states, u0[None], atol=1e-14)


def test_zero_steps_returns_initial_state(rng):
    u0 = rng.standard_normal((8, 8, 1))
    trajectory = rollout(identity, u0, COORDS, 0, Normalizer.identity(1), dt=0.25)
    assert len(trajectory) == 1
    assert trajectory.dt == 0.25
    assert np.array_equal(trajectory.states[0], u0)
    with pytest.raises(ValidationError):
        rollout(identity, u0, COORDS, -1, Normalizer.identity(1))


def test_one_step_equals_one_forward(rng, tiny_config):
    model = MSWT.initialize(tiny_config, seed=4)
    u0 = rng.standard_normal((8, 8, 1))
    normalizer = Normalizer(mean=np.array([0.1]), std=np.array([1.5]))
    trajectory = rollout(model_predictor(model), u0, COORDS, 1, normalizer)
    expected = normalizer.denormalize(model.predict(with_coords(normalizer.normalize(u0), COORDS)))
    assert np.array_equal(trajectory.states[1], expected)


def test_rollout_stops_at_first_non_finite_step(rng):
    calls = []

    def blows_up(x):
        calls.append(1)
        state = x[..., :-2] * 2.0
        if len(calls) == 3:
            state[0, 0, 0] = np.nan
        return state

    trajectory = rollout(blows_up, rng.standard_normal((8, 8, 1)), COORDS, 10, Normalizer.identity(1))
    assert trajectory.unstable_at == 3
    assert len(trajectory) == 3
    assert np.all(np.isfinite(trajectory.states))


def test_rollout_shape_checks(rng):
    with pytest.raises(DimensionError):
        rollout(identity, rng.standard_normal((8, 8)), COORDS, 1, Normalizer.identity(1))
    with pytest.raises(DimensionError):
        rollout(identity, rng.standard_normal((4, 8, 1)), COORDS, 1, Normalizer.identity(1))
    with pytest.raises(DimensionError):
        rollout(lambda x: x, rng.standard_normal((8, 8, 1)), COORDS, 1, Normalizer.identity(1))


def test_rollout_many_keeps_order_and_is_deterministic(rng, tiny_config):
    model = MSWT.initialize(tiny_config, seed=2)
    initial = [rng.standard_normal((8, 8, 1)) for _ in range(4)]
    normalizer = Normalizer.identity(1)
    serial = rollout_many(model_predictor(model), initial, COORDS, 2, normalizer)
    threaded = rollout_many(model_predictor(model), initial, COORDS, 2, normalizer, workers=3)
    for u0, a, b in zip(initial, serial, threaded):
        assert np.array_equal(a.states[0], u0)
        assert np.array_equal(a.states, b.states)
