"""
Evaluation metrics: relative L2 error, Fourier spectra of 2-D flow fields,
spectral error scores and climatology statistics.

Fields live on the periodic square [0, 2pi)^2 sampled with axis 0 along x
and axis 1 along y, so Fourier wavenumbers are plain integers.
"""

import logging
from dataclasses import dataclass

import numpy as np

from mswt.errors import DimensionError, ValidationError
from mswt.models import ClimatologyReport, SpectrumSeries

logger = logging.getLogger(__name__)

# Truth shells at or below this power are left out of the ratio scores.
POWER_FLOOR = 1e-30


def _array(x):
    return np.asarray(getattr(x, "data", x), dtype=np.float64)


def rel_l2_metric(pred, truth, per_channel=False):
    """||pred - truth|| / ||truth|| over the whole sample, or one value per channel."""
    pred, truth = _array(pred), _array(truth)
    if pred.shape != truth.shape:
        raise DimensionError(f"prediction {pred.shape} and truth {truth.shape} differ")
    axes = tuple(range(truth.ndim - 1)) if per_channel else None
    error = np.sqrt(np.sum((pred - truth) ** 2, axis=axes))
    reference = np.sqrt(np.sum(truth ** 2, axis=axes))
    if np.any(reference == 0):
        raise ValidationError("relative error undefined for an all-zero truth field")
    return error / reference if per_channel else float(error / reference)


def fft2(x):
    """Unnormalised forward DFT over the two leading axes."""
    return np.fft.fft2(_array(x), axes=(0, 1))


def ifft2(coefficients):
    """Inverse of ``fft2`` (carries the 1/(HW) factor)."""
    return np.fft.ifft2(coefficients, axes=(0, 1))


def wavenumbers(height, width):
    """Integer wavenumber grids (k_x, k_y) for an H x W field on [0, 2pi)^2."""
    kx = np.fft.fftfreq(height, d=1.0 / height)
    ky = np.fft.fftfreq(width, d=1.0 / width)
    return np.meshgrid(kx, ky, indexing="ij")


def velocity_from_vorticity(omega):
    """Velocity (u_x, u_y) of a vorticity field via the streamfunction.

    Solves -lap(psi) = omega with the mean mode projected out, then
    u = (d psi/dy, -d psi/dx), so that omega = d u_y/dx - d u_x/dy.
    """
    omega = _array(omega)
    if omega.ndim != 2:
        raise DimensionError(f"vorticity must be H x W, got {omega.shape}")
    kx, ky = wavenumbers(*omega.shape)
    return spectral_velocity(fft2(omega), kx, ky)


def spectral_velocity(omega_hat, kx, ky):
    """Velocity from the Fourier modes of the vorticity; the mean mode is ignored."""
    k2 = kx ** 2 + ky ** 2
    psi_hat = np.where(k2 > 0, omega_hat / np.where(k2 > 0, k2, 1.0), 0.0)
    return ifft2(1j * ky * psi_hat).real, ifft2(-1j * kx * psi_hat).real


def curl(u_x, u_y):
    """Spectral scalar curl d u_y/dx - d u_x/dy."""
    u_x, u_y = _array(u_x), _array(u_y)
    kx, ky = wavenumbers(*u_x.shape)
    return ifft2(1j * kx * fft2(u_y) - 1j * ky * fft2(u_x)).real


def shell_index(height, width):
    """Radial shell of every mode: round(sqrt(k_x^2 + k_y^2))."""
    kx, ky = wavenumbers(height, width)
    return np.rint(np.sqrt(kx ** 2 + ky ** 2)).astype(np.int64)


def default_k_max(height, width):
    return min(height, width) // 2 - 1


def _binned(mode_power, kind, k_max):
    height, width = mode_power.shape
    shells = shell_index(height, width)
    power = np.bincount(shells.ravel(), weights=mode_power.ravel(), minlength=int(shells.max()) + 1)
    k_max = default_k_max(height, width) if k_max is None else k_max
    return SpectrumSeries(power=power, kind=kind, k_max=k_max)


def energy_spectrum(u_x, u_y, k_max=None):
    """Kinetic energy per shell, 0.5 (|F u_x|^2 + |F u_y|^2) / N^2 with N = H W."""
    u_x, u_y = _array(u_x), _array(u_y)
    if u_x.shape != u_y.shape or u_x.ndim != 2:
        raise DimensionError(f"velocity components must share an H x W shape, got {u_x.shape} and {u_y.shape}")
    n = u_x.size
    mode_power = 0.5 * (np.abs(fft2(u_x)) ** 2 + np.abs(fft2(u_y)) ** 2) / n ** 2
    return _binned(mode_power, "kinetic_energy", k_max)


def enstrophy_spectrum(omega, k_max=None):
    """Enstrophy per shell, |F omega|^2 / N^2."""
    omega = _array(omega)
    if omega.ndim != 2:
        raise DimensionError(f"vorticity must be H x W, got {omega.shape}")
    mode_power = np.abs(fft2(omega)) ** 2 / omega.size ** 2
    return _binned(mode_power, "enstrophy", k_max)


def field_spectrum(omega, kind, k_max=None):
    """Spectrum of one vorticity field; kinetic energy goes through the recovered velocity."""
    if kind == "enstrophy":
        return enstrophy_spectrum(omega, k_max)
    if kind == "kinetic_energy":
        return energy_spectrum(*velocity_from_vorticity(omega), k_max=k_max)
    raise ValidationError(f"unknown spectrum kind '{kind}'")


def trajectory_spectra(trajectory, kind, channel=0):
    """Spectrum of every stored step, treating ``channel`` as vorticity."""
    return [field_spectrum(state[..., channel], kind) for state in trajectory.states]


@dataclass
class SpectrumScore:
    """A shell-averaged spectral error and the retained shells it had to skip."""

    value: float
    included: int
    excluded: tuple

    def __float__(self):
        return self.value


def _included_shells(pred, truth):
    if pred.kind != truth.kind:
        raise ValidationError(f"cannot compare a {pred.kind} spectrum with a {truth.kind} spectrum")
    if pred.k_max != truth.k_max or pred.power.shape != truth.power.shape:
        raise DimensionError("spectra cover different shell ranges")
    shells = np.arange(truth.k_max + 1)
    keep = truth.retained > POWER_FLOOR
    excluded = tuple(int(k) for k in shells[~keep])
    if not keep.any():
        raise ValidationError("no retained shell has positive truth power")
    if excluded:
        logger.debug(f"Excluded {len(excluded)} shells with truth power <= {POWER_FLOOR}: {excluded}")
    return keep, excluded


def spectrum_mae(pred, truth):
    """Mean over retained shells of |(P_pred - P_truth) / P_truth|."""
    keep, excluded = _included_shells(pred, truth)
    p, t = pred.retained[keep], truth.retained[keep]
    return SpectrumScore(float(np.mean(np.abs((p - t) / t))), int(keep.sum()), excluded)


def spectrum_mlr(pred, truth):
    """Mean over retained shells of |log(P_pred / P_truth)|."""
    keep, excluded = _included_shells(pred, truth)
    p, t = pred.retained[keep], truth.retained[keep]
    if np.any(p <= 0):
        raise ValidationError("predicted spectrum has non-positive power on an included shell")
    return SpectrumScore(float(np.mean(np.abs(np.log(p / t)))), int(keep.sum()), excluded)


def step_metrics(pred_state, truth_state, channel=0):
    """Relative L2 plus energy (s*) and enstrophy (e*) spectral scores for one snapshot."""
    pred_omega, truth_omega = pred_state[..., channel], truth_state[..., channel]
    energy_pred, energy_truth = field_spectrum(pred_omega, "kinetic_energy"), field_spectrum(truth_omega, "kinetic_energy")
    ens_pred, ens_truth = field_spectrum(pred_omega, "enstrophy"), field_spectrum(truth_omega, "enstrophy")
    return {
        "rel_l2": rel_l2_metric(pred_state, truth_state),
        "smae": spectrum_mae(energy_pred, energy_truth).value,
        "smlr": spectrum_mlr(energy_pred, energy_truth).value,
        "emae": spectrum_mae(ens_pred, ens_truth).value,
        "emlr": spectrum_mlr(ens_pred, ens_truth).value,
    }


STEP_METRICS = ("rel_l2", "smae", "smlr", "emae", "emlr")


def metric_summary(row_sets):
    """Per-step mean and population std of every step metric across trajectories.

    ``row_sets`` holds one list of ``evaluation_rows`` per trajectory, all over
    the same steps. Rows without metrics (rollout already unstable) are left
    out and ``count`` says how many trajectories remain; with none left the
    statistics are omitted.
    """
    if not row_sets:
        raise ValidationError("no trajectories to summarise")
    steps = [row["step"] for row in row_sets[0]]
    if any([row["step"] for row in rows] != steps for rows in row_sets):
        raise ValidationError("trajectories were evaluated at different steps")
    summary = []
    for index, step in enumerate(steps):
        scored = [rows[index] for rows in row_sets if "rel_l2" in rows[index]]
        entry = {"step": step, "count": len(scored)}
        if scored:
            for name in STEP_METRICS:
                values = np.array([row[name] for row in scored])
                entry[f"{name}_mean"] = float(values.mean())
                entry[f"{name}_std"] = float(values.std())
        summary.append(entry)
    return summary


# --- climatology ------------------------------------------------------------

def _report(model_mean, reference_mean, members):
    bias = model_mean - reference_mean
    return ClimatologyReport(
        time_mean_model=model_mean,
        time_mean_reference=reference_mean,
        bias=bias,
        min_bias=bias.min(axis=(0, 1)),
        max_bias=bias.max(axis=(0, 1)),
        mean_bias=bias.mean(axis=(0, 1)),
        rmse=np.sqrt((bias ** 2).mean(axis=(0, 1))),
        zonal_model=model_mean.mean(axis=1),
        zonal_reference=reference_mean.mean(axis=1),
        members=members,
    )


def _check_grid(trajectory, reference):
    if trajectory.states.shape[1:] != reference.states.shape[1:]:
        raise DimensionError(
            f"trajectory grid {trajectory.states.shape[1:]} differs from reference {reference.states.shape[1:]}"
        )


def climatology(model_trajectory, reference_trajectory):
    """Time-mean bias statistics of one rollout against the reference."""
    _check_grid(model_trajectory, reference_trajectory)
    return _report(
        model_trajectory.states.mean(axis=0),
        reference_trajectory.states.mean(axis=0),
        members=1,
    )


def ensemble_mean_climatology(members, reference_trajectory):
    """Average the members' time means first, then compare the ensemble mean to the reference."""
    members = list(members)
    if not members:
        raise ValidationError("ensemble has no members")
    for member in members:
        _check_grid(member, reference_trajectory)
    ensemble_mean = np.mean([member.states.mean(axis=0) for member in members], axis=0)
    return _report(ensemble_mean, reference_trajectory.states.mean(axis=0), members=len(members))
