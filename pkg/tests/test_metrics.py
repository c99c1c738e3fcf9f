import numpy as np
import pytest

from mswt.errors import DimensionError, ValidationError
from mswt.metrics import (
    POWER_FLOOR,
    climatology,
    curl,
    energy_spectrum,
    enstrophy_spectrum,
    ensemble_mean_climatology,
    fft2,
    metric_summary,
    rel_l2_metric,
    shell_index,
    spectrum_mae,
    spectrum_mlr,
    step_metrics,
    trajectory_spectra,
    velocity_from_vorticity,
)
from mswt.models import SpectrumSeries, Trajectory
from mswt.solver import coordinate_channels, grid_points


def naive_dft2(x):
    height, width = x.shape
    out = np.zeros((height, width), dtype=complex)
    for kx in range(height):
        for ky in range(width):
            for i in range(height):
                for j in range(width):
                    out[kx, ky] += x[i, j] * np.exp(-2j * np.pi * (kx * i / height + ky * j / width))
    return out


def series(power, kind="enstrophy", k_max=None):
    power = np.asarray(power, dtype=float)
    return SpectrumSeries(power=power, kind=kind, k_max=len(power) - 1 if k_max is None else k_max)


def test_rel_l2_examples(rng):
    truth = rng.standard_normal((4, 4, 2))
    assert rel_l2_metric(truth, truth) == 0.0
    assert rel_l2_metric(np.zeros_like(truth), truth) == pytest.approx(1.0)
    assert rel_l2_metric(1.5 * truth, truth) == pytest.approx(0.5)
    assert rel_l2_metric(np.zeros_like(truth), truth, per_channel=True) == pytest.approx([1.0, 1.0])


def test_rel_l2_rejects_zero_truth_and_shape_mismatch():
    with pytest.raises(ValidationError):
        rel_l2_metric(np.ones((2, 2)), np.zeros((2, 2)))
    with pytest.raises(DimensionError):
        rel_l2_metric(np.ones((2, 2)), np.ones((2, 3)))


def test_fft_of_constant_and_cosine():
    n = 8
    X, _ = grid_points(n)
    coefficients = fft2(np.full((n, n), 2.0))
    assert coefficients[0, 0] == pytest.approx(2.0 * n * n)
    assert np.allclose(np.delete(coefficients.ravel(), 0), 0.0, atol=1e-12)

    wave = np.cos(3 * X)
    coefficients = fft2(wave)
    assert abs(coefficients[3, 0]) == pytest.approx(n * n / 2)
    assert abs(coefficients[n - 3, 0]) == pytest.approx(n * n / 2)


def test_fft_matches_naive_dft_and_parseval(rng):
    x = rng.standard_normal((4, 6))
    coefficients = fft2(x)
    assert np.allclose(coefficients, naive_dft2(x), atol=1e-12)
    assert np.sum(np.abs(coefficients) ** 2) / x.size == pytest.approx(np.sum(x ** 2), rel=1e-12)


def test_velocity_of_single_mode():
    n = 16
    X, Y = grid_points(n)
    # omega = sin(x) has psi = sin(x), u = (dpsi/dy, -dpsi/dx) = (0, -cos x).
    u_x, u_y = velocity_from_vorticity(np.sin(X))
    assert np.allclose(u_x, 0.0, atol=1e-13)
    assert np.allclose(u_y, -np.cos(X), atol=1e-13)
    assert np.allclose(curl(*velocity_from_vorticity(np.sin(X) + np.cos(2 * Y))), np.sin(X) + np.cos(2 * Y), atol=1e-12)


def test_curl_round_trip_removes_mean(rng):
    omega = rng.standard_normal((16, 16)) + 3.0
    recovered = curl(*velocity_from_vorticity(omega))
    assert np.allclose(recovered, omega - omega.mean(), atol=1e-12)


def test_shell_index_rounds_radius():
    shells = shell_index(8, 8)
    assert shells[0, 0] == 0
    assert shells[1, 1] == 1
    assert shells[2, 1] == 2
    assert shells[3, 3] == 4
    assert shells[7, 0] == 1


def test_enstrophy_spectrum_single_mode():
    n = 16
    X, _ = grid_points(n)
    spectrum = enstrophy_spectrum(np.cos(3 * X))
    assert spectrum.power[3] == pytest.approx(0.5)
    assert spectrum.total() == pytest.approx(0.5)
    assert spectrum.k_max == 7


def test_spectra_satisfy_parseval(rng):
    omega = rng.standard_normal((16, 16))
    u_x, u_y = velocity_from_vorticity(omega)
    assert enstrophy_spectrum(omega).total() == pytest.approx(np.mean(omega ** 2), rel=1e-12)
    energy = energy_spectrum(u_x, u_y)
    assert energy.total() == pytest.approx(0.5 * np.mean(u_x ** 2 + u_y ** 2), rel=1e-12)
    assert energy.power.shape == enstrophy_spectrum(omega).power.shape


def test_enstrophy_is_twice_k_squared_energy_on_exact_shells():
    n = 32
    X, Y = grid_points(n)
    omega = np.cos(2 * X) + 0.5 * np.sin(5 * Y) + 0.25 * np.cos(3 * X + 4 * Y)
    energy = energy_spectrum(*velocity_from_vorticity(omega))
    enstrophy = enstrophy_spectrum(omega)
    for k in (2, 5):
        assert enstrophy.power[k] == pytest.approx(2 * k * k * energy.power[k], rel=1e-10)


def test_spectrum_shape_checks():
    with pytest.raises(DimensionError):
        energy_spectrum(np.ones((4, 4)), np.ones((4, 5)))
    with pytest.raises(DimensionError):
        enstrophy_spectrum(np.ones((4, 4, 1)))


def test_mae_and_mlr_examples():
    truth = series([1.0, 2.0, 4.0])
    assert spectrum_mae(truth, truth).value == 0.0
    assert spectrum_mlr(truth, truth).value == 0.0
    doubled = series([2.0, 4.0, 8.0])
    assert spectrum_mae(doubled, truth).value == pytest.approx(1.0)
    assert spectrum_mlr(doubled, truth).value == pytest.approx(np.log(2.0))
    halved = series([0.5, 1.0, 2.0])
    assert spectrum_mae(halved, truth).value == pytest.approx(0.5)
    assert spectrum_mlr(halved, truth).value == pytest.approx(np.log(2.0))


def test_scores_skip_empty_truth_shells():
    truth = series([1.0, POWER_FLOOR / 2, 4.0, 9.0], k_max=2)
    pred = series([2.0, 5.0, 4.0, 0.0], k_max=2)
    score = spectrum_mae(pred, truth)
    assert score.included == 2
    assert score.excluded == (1,)
    assert float(score) == pytest.approx(0.5)


def test_scores_reject_mismatched_spectra():
    with pytest.raises(ValidationError):
        spectrum_mae(series([1.0, 1.0], kind="kinetic_energy"), series([1.0, 1.0]))
    with pytest.raises(DimensionError):
        spectrum_mae(series([1.0, 1.0, 1.0]), series([1.0, 1.0]))
    with pytest.raises(ValidationError):
        spectrum_mlr(series([0.0, 1.0]), series([1.0, 1.0]))
    with pytest.raises(ValidationError):
        spectrum_mae(series([1.0]), series([0.0]))


def test_step_metrics_are_zero_for_identical_states(rng):
    state = rng.standard_normal((16, 16, 1))
    scores = step_metrics(state, state)
    assert scores == {"rel_l2": 0.0, "smae": 0.0, "smlr": 0.0, "emae": 0.0, "emlr": 0.0}


def test_spectral_scores_ignore_phase(rng):
    state = rng.standard_normal((16, 16, 1))
    shifted = np.roll(state, (3, 5), axis=(0, 1))
    scores = step_metrics(shifted, state)
    assert scores["rel_l2"] > 0.5
    for name in ("smae", "smlr", "emae", "emlr"):
        assert scores[name] <= 1e-10


def _trajectory(states):
    states = np.asarray(states, dtype=float)
    return Trajectory(states=states, coords=coordinate_channels(*states.shape[1:3]))


def test_climatology_of_shifted_rollout(rng):
    reference = _trajectory(rng.standard_normal((5, 4, 6, 2)))
    shift = np.array([0.5, -2.0])
    report = climatology(_trajectory(reference.states + shift), reference)
    assert np.allclose(report.bias, np.broadcast_to(shift, (4, 6, 2)))
    assert np.allclose(report.mean_bias, shift)
    assert np.allclose(report.min_bias, shift)
    assert np.allclose(report.max_bias, shift)
    assert np.allclose(report.rmse, np.abs(shift))
    assert report.zonal_model.shape == (4, 2)
    assert np.allclose(report.zonal_model - report.zonal_reference, shift)
    assert report.variables == 2


def test_ensemble_mean_cancels_opposite_members(rng):
    reference = _trajectory(rng.standard_normal((3, 4, 4, 1)))
    members = [_trajectory(reference.states + 1.0), _trajectory(reference.states - 1.0)]
    report = ensemble_mean_climatology(members, reference)
    assert np.allclose(report.bias, 0.0, atol=1e-14)
    assert report.members == 2
    single = climatology(members[0], reference)
    assert np.allclose(single.rmse, 1.0)


def test_ensemble_mean_rmse_never_exceeds_member_average(rng):
    reference = _trajectory(rng.standard_normal((4, 6, 6, 1)))
    members = [_trajectory(reference.states + rng.standard_normal((4, 6, 6, 1))) for _ in range(4)]
    ensemble = ensemble_mean_climatology(members, reference).rmse[0]
    average = np.mean([climatology(m, reference).rmse[0] for m in members])
    assert ensemble <= average + 1e-12


def test_climatology_rejects_mismatched_grids_and_empty_ensembles(rng):
    reference = _trajectory(rng.standard_normal((2, 4, 4, 1)))
    with pytest.raises(DimensionError):
        climatology(_trajectory(rng.standard_normal((2, 4, 6, 1))), reference)
    with pytest.raises(ValidationError):
        ensemble_mean_climatology([], reference)


def test_trajectory_spectra_cover_every_step(rng):
    trajectory = _trajectory(rng.standard_normal((3, 8, 8, 2)))
    spectra = trajectory_spectra(trajectory, "enstrophy", channel=1)
    assert len(spectra) == 3
    assert spectra[2].total() == pytest.approx(np.mean(trajectory.states[2, ..., 1] ** 2), rel=1e-12)


def _scored(step, value):
    return {"step": step, "rel_l2": value, "smae": 2 * value, "smlr": 3 * value, "emae": 4 * value, "emlr": 5 * value}


def test_metric_summary_mean_and_population_std():
    summary = metric_summary([
        [_scored(1, 0.1), _scored(5, 1.0)],
        [_scored(1, 0.3), {"step": 5}],
    ])
    first, second = summary
    assert first["count"] == 2
    assert first["rel_l2_mean"] == pytest.approx(0.2, abs=1e-15)
    assert first["rel_l2_std"] == pytest.approx(0.1, abs=1e-15)
    assert first["emlr_mean"] == pytest.approx(1.0, abs=1e-15)
    assert first["emlr_std"] == pytest.approx(0.5, abs=1e-15)
    assert second["count"] == 1
    assert second["smae_mean"] == 2.0
    assert second["smae_std"] == 0.0


def test_metric_summary_without_stable_rows():
    assert metric_summary([[{"step": 3}], [{"step": 3}]]) == [{"step": 3, "count": 0}]


def test_metric_summary_rejects_mismatched_steps():
    with pytest.raises(ValidationError):
        metric_summary([])
    with pytest.raises(ValidationError):
        metric_summary([[_scored(1, 0.1)], [_scored(2, 0.1)]])
