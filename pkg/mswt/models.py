"""
Data records shared across the pipeline: configurations, datasets,
trajectories, spectra and climatology reports.
"""

import logging
from dataclasses import dataclass, field, fields

import numpy as np

from mswt.config import DATA_DIR, RUN_DIR
from mswt.errors import ConfigError, ValidationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModelConfig:
    """
    Architecture hyperparameters of the operator network.

    Token extents at scale l are H / (p * 2**l) x W / (p * 2**l). Attention
    runs at every scale on the half-resolution wavelet grid, in windows of
    ``window`` x ``window`` tokens (clamped to that grid when it is smaller).
    """
    height: int = 64
    width: int = 64
    in_channels: int = 3
    out_channels: int = 1
    patch_size: int = 2
    scales: int = 3
    widths: tuple = (32, 64, 128)
    window: int = 4
    ffn_ratio: int = 2
    heads: int = 4
    conv_kernel: int = 3
    block_repeats: int = 1
    layernorm_eps: float = 1e-5

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))

    def grid_at(self, scale):
        factor = self.patch_size * 2 ** scale
        return self.height // factor, self.width // factor

    def window_at(self, scale):
        height, width = self.grid_at(scale)
        return min(self.window, height // 2), min(self.window, width // 2)

    def validate(self):
        """Raise ConfigError when the shape algebra does not close exactly."""
        if min(self.height, self.width, self.in_channels, self.out_channels) < 1:
            raise ConfigError("grid extents and channel counts must be positive")
        if self.patch_size < 1 or self.scales < 1 or self.window < 1 or self.heads < 1:
            raise ConfigError("patch_size, scales, window and heads must be positive")
        if self.conv_kernel < 1 or self.conv_kernel % 2 == 0:
            raise ConfigError(f"conv_kernel must be a positive odd number, got {self.conv_kernel}")
        if self.ffn_ratio < 1 or self.block_repeats < 1:
            raise ConfigError("ffn_ratio and block_repeats must be at least 1")
        if self.layernorm_eps <= 0:
            raise ConfigError("layernorm_eps must be positive")
        if len(self.widths) != self.scales:
            raise ConfigError(f"expected {self.scales} widths, got {len(self.widths)}")
        if self.height % self.patch_size or self.width % self.patch_size:
            raise ConfigError(
                f"grid {self.height}x{self.width} is not divisible by patch size {self.patch_size}"
            )
        for scale, width in enumerate(self.widths):
            if width % 4 or width % self.heads:
                raise ConfigError(f"width {width} at scale {scale} must be divisible by 4 and by heads={self.heads}")
            factor = self.patch_size * 2 ** scale
            if self.height % factor or self.width % factor:
                raise ConfigError(f"grid does not divide into tokens at scale {scale}")
            height, width_tokens = self.grid_at(scale)
            if height % 2 or width_tokens % 2:
                raise ConfigError(f"token grid {height}x{width_tokens} at scale {scale} must have even extents")
            window_h, window_w = self.window_at(scale)
            if (window_h, window_w) != (self.window, self.window):
                logger.debug(f"window {self.window} clamped to {window_h}x{window_w} at scale {scale}")
            if (height // 2) % window_h or (width_tokens // 2) % window_w:
                raise ConfigError(
                    f"attention grid {height // 2}x{width_tokens // 2} at scale {scale} "
                    f"is not divisible by window {window_h}x{window_w}"
                )
        return self


@dataclass(frozen=True)
class TrainConfig:
    """
    Optimiser and schedule settings. Empty ``milestones`` means 50% and 75%
    of ``iterations``.
    """
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 16
    iterations: int = 5000
    milestones: tuple = ()
    gamma: float = 0.5
    loss_eps: float = 1e-8
    seed: int = 0
    checkpoint_every: int = 500

    def __post_init__(self):
        milestones = tuple(int(m) for m in self.milestones)
        if not milestones:
            milestones = tuple(sorted({self.iterations // 2, (3 * self.iterations) // 4} - {0}))
        object.__setattr__(self, "milestones", milestones)

    def validate(self):
        if any(b >= a for a, b in zip(self.milestones[1:], self.milestones)):
            raise ConfigError(f"milestones must be strictly increasing, got {self.milestones}")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.loss_eps <= 0 or self.adam_eps <= 0:
            raise ConfigError("loss_eps and adam_eps must be positive")
        if self.batch_size < 1 or self.iterations < 0 or self.learning_rate <= 0:
            raise ConfigError("batch_size must be >= 1, iterations >= 0 and learning_rate > 0")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError("Adam betas must lie in [0, 1)")
        return self


@dataclass(frozen=True)
class SolverConfig:
    """
    Pseudo-spectral Kolmogorov-flow solver on [0, 2pi]^2.

    The vorticity forcing is ``forcing_amplitude * cos(forcing_wavenumber * y)``.
    Snapshots are taken every ``snapshot_interval`` after ``spin_up`` time units;
    ``horizon`` snapshots per trajectory.
    """
    grid: int = 64
    reynolds: float = 500.0
    forcing_amplitude: float = -4.0
    forcing_wavenumber: int = 4
    dt: float = 0.5 / 64 / 4
    snapshot_interval: float = 0.5 / 64
    horizon: int = 65
    spin_up: float = 0.0
    dealias: float = 2.0 / 3.0
    ic_peak: float = 4.0
    seed: int = 0
    max_retries: int = 3

    @property
    def viscosity(self):
        return 1.0 / self.reynolds

    @property
    def steps_per_snapshot(self):
        return max(1, int(round(self.snapshot_interval / self.dt)))

    def validate(self):
        if self.grid < 4 or self.grid & (self.grid - 1):
            raise ConfigError(f"solver grid must be a power of two >= 4, got {self.grid}")
        if self.dt <= 0 or self.snapshot_interval <= 0:
            raise ConfigError("dt and snapshot_interval must be positive")
        if self.reynolds <= 0:
            raise ConfigError("reynolds must be positive")
        if self.horizon < 1 or self.spin_up < 0 or self.max_retries < 0:
            raise ConfigError("horizon must be >= 1, spin_up >= 0 and max_retries >= 0")
        if not 0.0 < self.dealias <= 1.0:
            raise ConfigError(f"dealias fraction must lie in (0, 1], got {self.dealias}")
        return self


@dataclass(frozen=True)
class DataConfig:
    """Which problem to generate and how many trajectories of each split."""
    problem: str = "kolmogorov"
    n_train: int = 64
    n_test: int = 8
    advection_offset: tuple = (1, 0)

    def __post_init__(self):
        object.__setattr__(self, "advection_offset", tuple(int(v) for v in self.advection_offset))

    def validate(self):
        if self.problem not in ("kolmogorov", "advection"):
            raise ConfigError(f"unknown problem '{self.problem}'")
        if self.n_train < 1 or self.n_test < 1:
            raise ConfigError("n_train and n_test must be at least 1")
        if len(self.advection_offset) != 2:
            raise ConfigError("advection_offset needs two integers")
        return self


@dataclass(frozen=True)
class PathsConfig:
    data_dir: str = DATA_DIR
    run_dir: str = RUN_DIR

    def validate(self):
        return self


@dataclass(frozen=True)
class RunConfig:
    """One run's complete configuration, one section per record."""
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    data: DataConfig = field(default_factory=DataConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)

    def validate(self):
        for section in fields(self):
            getattr(self, section.name).validate()
        if self.data.problem == "kolmogorov":
            if (self.model.height, self.model.width) != (self.solver.grid, self.solver.grid):
                raise ConfigError(
                    f"model grid {self.model.height}x{self.model.width} differs from solver grid {self.solver.grid}"
                )
        if self.model.in_channels != self.model.out_channels + 2:
            raise ConfigError("in_channels must equal out_channels plus the two coordinate channels")
        return self


@dataclass
class Normalizer:
    """Per-channel z-score statistics of the state channels (training split only)."""
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if np.any(self.std <= 0):
            raise ValidationError("normalisation std must be positive for every channel")

    @classmethod
    def fit(cls, states):
        states = np.asarray(states, dtype=np.float64)
        axes = tuple(range(states.ndim - 1))
        return cls(mean=states.mean(axis=axes), std=states.std(axis=axes))

    @classmethod
    def identity(cls, channels):
        return cls(mean=np.zeros(channels), std=np.ones(channels))

    def normalize(self, states):
        return (states - self.mean) / self.std

    def denormalize(self, states):
        return states * self.std + self.mean


def with_coords(states, coords):
    """Append the coordinate channels to one state (H x W x C) or a stack of them."""
    states = np.asarray(states, dtype=np.float64)
    coords = np.broadcast_to(coords, states.shape[:-1] + coords.shape[-1:])
    return np.concatenate([states, coords], axis=-1)


@dataclass
class Trajectory:
    """
    Time-ordered states (T x H x W x C_u) with the static coordinate channels.

    ``unstable_at`` is the step at which a rollout produced a non-finite state;
    the states stop before it.
    """
    states: np.ndarray
    coords: np.ndarray
    dt: float = 1.0
    unstable_at: int = None

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.float64)
        if self.states.ndim != 4 or self.states.shape[0] < 1:
            raise ValidationError(f"trajectory states must be T x H x W x C with T >= 1, got {self.states.shape}")

    def __len__(self):
        return self.states.shape[0]

    @property
    def grid(self):
        return self.states.shape[1:3]

    @property
    def channels(self):
        return self.states.shape[3]


@dataclass
class PairDataset:
    """
    One-step training pairs (U_t, U_{t+1}) with the shared coordinate channels
    and the normalisation statistics of the training states.
    """
    inputs: np.ndarray
    targets: np.ndarray
    coords: np.ndarray
    normalizer: Normalizer = None

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        if self.inputs.shape != self.targets.shape or self.inputs.ndim != 4:
            raise ValidationError(
                f"inputs {self.inputs.shape} and targets {self.targets.shape} must share an N x H x W x C shape"
            )
        if self.inputs.shape[0] < 1:
            raise ValidationError("dataset is empty")
        if self.coords.shape[:2] != self.inputs.shape[1:3]:
            raise ValidationError("coordinate channels do not match the grid")
        if self.normalizer is None:
            self.normalizer = Normalizer.fit(self.inputs)

    def __len__(self):
        return self.inputs.shape[0]

    @classmethod
    def from_trajectories(cls, trajectories, normalizer=None):
        """All consecutive snapshot pairs of every trajectory, in trajectory order."""
        trajectories = list(trajectories)
        if not trajectories:
            raise ValidationError("no trajectories to build pairs from")
        inputs = np.concatenate([t.states[:-1] for t in trajectories])
        targets = np.concatenate([t.states[1:] for t in trajectories])
        if normalizer is None:
            normalizer = Normalizer.fit(np.concatenate([t.states for t in trajectories]))
        return cls(inputs=inputs, targets=targets, coords=trajectories[0].coords, normalizer=normalizer)


@dataclass
class SpectrumSeries:
    """
    Radially binned power per integer wavenumber shell, shells 0 .. len-1.

    Every Fourier mode falls in exactly one shell. ``k_max`` bounds the
    retained set used by the ratio metrics.
    """
    power: np.ndarray
    kind: str
    k_max: int

    def __post_init__(self):
        self.power = np.asarray(self.power, dtype=np.float64)
        if self.kind not in ("kinetic_energy", "enstrophy"):
            raise ValidationError(f"unknown spectrum kind '{self.kind}'")
        if np.any(self.power < 0):
            raise ValidationError("spectral power must be non-negative")

    @property
    def wavenumbers(self):
        return np.arange(self.power.shape[0])

    @property
    def retained(self):
        return self.power[:self.k_max + 1]

    def total(self):
        return float(self.power.sum())


@dataclass
class ClimatologyReport:
    """
    Time-mean statistics of a rollout against a reference, per variable.

    Field arrays are H x W x C; per-variable summaries have length C; zonal
    profiles are H x C (mean over axis 1 for every row).
    """
    time_mean_model: np.ndarray
    time_mean_reference: np.ndarray
    bias: np.ndarray
    min_bias: np.ndarray
    max_bias: np.ndarray
    mean_bias: np.ndarray
    rmse: np.ndarray
    zonal_model: np.ndarray
    zonal_reference: np.ndarray
    members: int = 1

    @property
    def variables(self):
        return self.bias.shape[-1]
