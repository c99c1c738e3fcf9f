"""
Data generation: a pseudo-spectral solver for two-dimensional Kolmogorov flow
and an exactly solvable periodic advection problem.

The vorticity equation on [0, 2pi)^2,

    d omega/dt + u . grad omega = nu lap omega + f(y),

is advanced in Fourier space with classical RK4. Products are formed in
physical space and truncated with the 2/3 rule; the mean mode is held at zero.
The forcing is applied to the vorticity directly as
``forcing_amplitude * cos(forcing_wavenumber * y)``, the curl of the usual
Kolmogorov velocity forcing.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from mswt.errors import InstabilityError, ValidationError
from mswt.metrics import fft2, ifft2, spectral_velocity, wavenumbers
from mswt.models import PairDataset, Trajectory

logger = logging.getLogger(__name__)

SPLITS = {"train": 0, "test": 1}


def coordinate_channels(height, width):
    """Static H x W x 2 channels holding the grid coordinates scaled to [0, 1)."""
    x, y = np.meshgrid(np.arange(height) / height, np.arange(width) / width, indexing="ij")
    return np.stack([x, y], axis=-1)


def grid_points(n):
    """Physical coordinates (x, y) of an n x n grid on [0, 2pi)^2."""
    axis = 2.0 * math.pi * np.arange(n) / n
    return np.meshgrid(axis, axis, indexing="ij")


class KolmogorovSolver:
    """Spectral operators for one grid size and parameter set."""

    def __init__(self, cfg):
        self.cfg = cfg.validate()
        n = cfg.grid
        self.kx, self.ky = wavenumbers(n, n)
        self.k2 = self.kx ** 2 + self.ky ** 2
        cutoff = cfg.dealias * n / 2.0
        self.mask = (np.abs(self.kx) <= cutoff) & (np.abs(self.ky) <= cutoff)
        _, y = grid_points(n)
        self.forcing = cfg.forcing_amplitude * np.cos(cfg.forcing_wavenumber * y)
        self.forcing_hat = self.dealias(fft2(self.forcing))
        self.viscosity = cfg.viscosity

    def dealias(self, omega_hat):
        """Zero the modes outside the 2/3 band; idempotent."""
        return np.where(self.mask, omega_hat, 0.0)

    def velocity(self, omega_hat):
        return spectral_velocity(omega_hat, self.kx, self.ky)

    def rhs(self, omega_hat):
        """Spectral tendency: -(u . grad omega) + nu lap omega + f, mean mode held fixed."""
        omega_hat = self.dealias(omega_hat)
        u_x, u_y = self.velocity(omega_hat)
        d_omega_dx = ifft2(1j * self.kx * omega_hat).real
        d_omega_dy = ifft2(1j * self.ky * omega_hat).real
        advection_hat = self.dealias(fft2(u_x * d_omega_dx + u_y * d_omega_dy))
        tendency = -advection_hat - self.viscosity * self.k2 * omega_hat + self.forcing_hat
        tendency[0, 0] = 0.0
        return tendency

    def step(self, omega_hat, dt=None):
        """One RK4 step, then dealiasing and zeroing of the mean mode."""
        dt = self.cfg.dt if dt is None else dt
        k1 = self.rhs(omega_hat)
        k2 = self.rhs(omega_hat + 0.5 * dt * k1)
        k3 = self.rhs(omega_hat + 0.5 * dt * k2)
        k4 = self.rhs(omega_hat + dt * k3)
        updated = self.dealias(omega_hat + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
        updated[0, 0] = 0.0
        return updated

    def cfl(self, omega_hat, dt=None):
        """Advective CFL number max|u| dt / dx."""
        dt = self.cfg.dt if dt is None else dt
        u_x, u_y = self.velocity(omega_hat)
        speed = float(np.sqrt(u_x ** 2 + u_y ** 2).max())
        return speed * dt / (2.0 * math.pi / self.cfg.grid)

    def integrate(self, omega0, label="trajectory"):
        """Spin up, then record ``horizon`` snapshots every ``snapshot_interval``.

        Raises InstabilityError with the solver step index when a mode turns
        non-finite.
        """
        cfg = self.cfg
        omega_hat = self.dealias(fft2(omega0))
        omega_hat[0, 0] = 0.0
        per_snapshot = cfg.steps_per_snapshot
        spin_up_steps = int(round(cfg.spin_up / cfg.dt))

        step_index = 0
        for _ in range(spin_up_steps):
            omega_hat = self._checked_step(omega_hat, step_index)
            step_index += 1

        snapshots = []
        peak_cfl = 0.0
        for snapshot in range(cfg.horizon):
            if snapshot:
                for _ in range(per_snapshot):
                    omega_hat = self._checked_step(omega_hat, step_index)
                    step_index += 1
            peak_cfl = max(peak_cfl, self.cfl(omega_hat))
            snapshots.append(ifft2(omega_hat).real)

        if peak_cfl > 1.0:
            logger.warning(f"{label}: CFL estimate {peak_cfl:.3f} exceeds 1")
        else:
            logger.info(f"{label}: CFL estimate {peak_cfl:.3f} over {step_index} steps")
        states = np.stack(snapshots)[..., None]
        return Trajectory(states=states, coords=coordinate_channels(cfg.grid, cfg.grid), dt=cfg.snapshot_interval)

    def _checked_step(self, omega_hat, index):
        updated = self.step(omega_hat)
        if not np.all(np.isfinite(updated)):
            raise InstabilityError(f"solver produced non-finite modes at step {index}", index=index)
        return updated


def random_field(height, width, peak, rng):
    """Zero-mean, unit-RMS Gaussian field with shell spectrum k^4 exp(-(k/peak)^2)."""
    noise = rng.standard_normal((height, width))
    kx, ky = wavenumbers(height, width)
    k = np.sqrt(kx ** 2 + ky ** 2)
    # Per-mode amplitude sqrt(E(k) / k) so the shell sum follows E(k).
    amplitude = np.where(k > 0, k ** 1.5 * np.exp(-0.5 * (k / peak) ** 2), 0.0)
    field = ifft2(fft2(noise) * amplitude).real
    field -= field.mean()
    rms = math.sqrt(float(np.mean(field ** 2)))
    if rms == 0.0:
        raise ValidationError("random field collapsed to zero; grid too small for the spectrum peak")
    return field / rms


def random_initial_vorticity(cfg, seed):
    """Initial vorticity for the solver grid; ``seed`` is an int or a seed sequence entry list."""
    rng = np.random.default_rng(seed)
    return random_field(cfg.grid, cfg.grid, cfg.ic_peak, rng)


def trajectory_seed(cfg, split, index, attempt):
    """Seeds differ by split so training and test trajectories never share one."""
    return [cfg.seed, SPLITS[split], index, attempt]


def generate_trajectory(solver, split, index):
    """Integrate one trajectory, drawing a fresh initial condition on instability."""
    cfg = solver.cfg
    for attempt in range(cfg.max_retries + 1):
        omega0 = random_initial_vorticity(cfg, trajectory_seed(cfg, split, index, attempt))
        try:
            return solver.integrate(omega0, label=f"{split}[{index}]")
        except InstabilityError as exc:
            logger.warning(f"{split}[{index}] attempt {attempt} unstable at step {exc.index}; regenerating")
    raise InstabilityError(
        f"{split}[{index}] stayed unstable after {cfg.max_retries + 1} attempts", index=index
    )


@dataclass
class GeneratedData:
    """Training pairs plus the whole trajectories of both splits."""

    train: list
    test: list
    pairs: PairDataset

    @property
    def coords(self):
        return self.pairs.coords


def generate_dataset(cfg, n_train, n_test, workers=1):
    """Kolmogorov trajectories for both splits; pairs come from the training split only."""
    if n_train < 1 or n_test < 1:
        raise ValidationError("n_train and n_test must be at least 1")
    solver = KolmogorovSolver(cfg)
    if cfg.forcing_amplitude:
        logger.info(
            f"Vorticity forcing {cfg.forcing_amplitude} * cos({cfg.forcing_wavenumber} y), "
            f"Re={cfg.reynolds}, grid {cfg.grid}x{cfg.grid}"
        )
    jobs = [("train", i) for i in range(n_train)] + [("test", i) for i in range(n_test)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trajectories = list(pool.map(lambda job: generate_trajectory(solver, *job), jobs))
    else:
        trajectories = [generate_trajectory(solver, *job) for job in jobs]
    train, test = trajectories[:n_train], trajectories[n_train:]
    return GeneratedData(train=train, test=test, pairs=PairDataset.from_trajectories(train))


def advection_trajectory(u0, offset, steps):
    """Exact periodic advection: state t is ``u0`` rolled by ``t * offset`` grid cells."""
    u0 = np.asarray(u0, dtype=np.float64)
    if u0.ndim == 2:
        u0 = u0[..., None]
    states = [u0]
    for _ in range(steps):
        states.append(np.roll(states[-1], shift=tuple(offset), axis=(0, 1)))
    return Trajectory(states=np.stack(states), coords=coordinate_channels(*u0.shape[:2]))


def synthetic_advection(model_cfg, data_cfg, solver_cfg):
    """Circularly translated smooth random fields on the model grid."""
    data_cfg.validate()
    height, width = model_cfg.height, model_cfg.width
    trajectories = {}
    for split, count in (("train", data_cfg.n_train), ("test", data_cfg.n_test)):
        trajectories[split] = []
        for index in range(count):
            rng = np.random.default_rng(trajectory_seed(solver_cfg, split, index, 0))
            fields = [random_field(height, width, solver_cfg.ic_peak, rng) for _ in range(model_cfg.out_channels)]
            u0 = np.stack(fields, axis=-1)
            trajectories[split].append(advection_trajectory(u0, data_cfg.advection_offset, solver_cfg.horizon - 1))
    logger.info(
        f"Synthetic advection: {data_cfg.n_train} train / {data_cfg.n_test} test trajectories, "
        f"offset {data_cfg.advection_offset}"
    )
    return GeneratedData(
        train=trajectories["train"],
        test=trajectories["test"],
        pairs=PairDataset.from_trajectories(trajectories["train"]),
    )


def generate(run_cfg, workers=1):
    """Dispatch on the configured problem."""
    if run_cfg.data.problem == "advection":
        return synthetic_advection(run_cfg.model, run_cfg.data, run_cfg.solver)
    return generate_dataset(run_cfg.solver, run_cfg.data.n_train, run_cfg.data.n_test, workers)
