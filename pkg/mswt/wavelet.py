"""
Haar wavelet transforms.

The 2-D single-level transform is built on the generic ``conv2d`` with circular
padding so it is differentiable and shares the tensor engine's arithmetic. The
1-D multilevel transform runs the pairwise recursion directly on numpy arrays
and is independent of the 2-D path, which lets the two check each other.

Subband channel order is fixed everywhere as (LL, LH, HL, HH).
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from mswt.errors import DimensionError, ValidationError
from mswt.tensor import Tensor, conv2d, conv2d_transpose, crop

logger = logging.getLogger(__name__)

SUBBANDS = ("LL", "LH", "HL", "HH")

_ROOT_HALF = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True)
class HaarFilters:
    """Normalised Haar analysis filters.

    ``g`` averages adjacent samples, ``h`` differences them; the 2-D filters
    are their outer products, stacked in ``SUBBANDS`` order as a 4 x 2 x 2 array.
    """

    g: np.ndarray
    h: np.ndarray
    psi: np.ndarray

    @classmethod
    def create(cls):
        g = np.array([_ROOT_HALF, _ROOT_HALF])
        h = np.array([_ROOT_HALF, -_ROOT_HALF])
        psi = np.stack([
            np.outer(g, g),  # LL
            np.outer(g, h),  # LH
            np.outer(h, g),  # HL
            np.outer(h, h),  # HH
        ])
        for array in (g, h, psi):
            array.setflags(write=False)
        return cls(g=g, h=h, psi=psi)

    def filter(self, name):
        return self.psi[SUBBANDS.index(name)]


HAAR = HaarFilters.create()


def analysis_kernel(channels):
    """Depthwise 2 x 2 x C x 4C kernel; output channel ``s*C + c`` is subband ``s`` of channel ``c``."""
    kernel = np.zeros((2, 2, channels, 4 * channels), dtype=np.float64)
    for s in range(4):
        for c in range(channels):
            kernel[:, :, c, s * channels + c] = HAAR.psi[s]
    return Tensor(kernel)


@dataclass
class SubbandStack:
    """Four Haar subbands stacked on the channel axis as (LL, LH, HL, HH).

    ``values`` is H' x W' x 4C, optionally with a leading batch axis, and
    ``original_extents`` is the (H, W) of the field it came from.
    """

    values: Tensor
    original_extents: tuple

    def __post_init__(self):
        if self.values.shape[-1] % 4 != 0:
            raise DimensionError(f"subband stack needs a channel count divisible by 4, got {self.values.shape[-1]}")
        height, width = self.original_extents
        if -(-height // 2) != self.values.shape[-3] or -(-width // 2) != self.values.shape[-2]:
            raise ValidationError(
                f"original extents {self.original_extents} inconsistent with subband grid {self.values.shape[-3:-1]}"
            )

    @property
    def channels(self):
        return self.values.shape[-1] // 4

    def subband(self, name):
        """Return one subband as a numpy array (inspection only, not recorded)."""
        s = SUBBANDS.index(name)
        c = self.channels
        return self.values.data[..., s * c:(s + 1) * c]


def dwt2(x, pad="circular"):
    """Single-level 2-D Haar transform of an H x W x C field.

    Odd extents are wrapped by one row/column taken from row/column 0 before
    the transform, which is what stride-2 circular correlation does.
    """
    if pad != "circular":
        raise ValidationError(f"only circular padding is supported, got '{pad}'")
    if x.size == 0:
        raise ValidationError("cannot transform an empty tensor")
    height, width, channels = x.shape[-3:]
    values = conv2d(x, analysis_kernel(channels), stride=2, pad="circular")
    return SubbandStack(values=values, original_extents=(height, width))


def idwt2(stack):
    """Inverse of ``dwt2``: transposed stride-2 correlation, then crop to the original extents."""
    height, width = stack.original_extents
    channels = stack.channels
    field = conv2d_transpose(stack.values, analysis_kernel(channels), stride=2)
    if field.shape[-3] != height or field.shape[-2] != width:
        field = crop(field, height, width)
    return field


_H_MATRIX = np.array([[_ROOT_HALF, _ROOT_HALF], [_ROOT_HALF, -_ROOT_HALF]])


def _levels_for(n):
    levels = int(round(math.log2(n))) if n > 0 else -1
    if n < 1 or 2 ** levels != n:
        raise ValidationError(f"signal length must be a power of two, got {n}")
    return levels


def haar_dwt1d_multilevel(f, levels=None):
    """Multilevel 1-D Haar transform by pairwise recursion.

    ``f`` has length N = 2**J along axis 0 (extra axes are channels). Returns the
    coarsest approximation (one value per channel) and the detail vectors
    ``[d_1, ..., d_J]``, finest first.
    """
    signal = np.asarray(f, dtype=np.float64)
    total_levels = _levels_for(signal.shape[0])
    levels = total_levels if levels is None else levels
    if levels != total_levels:
        raise ValidationError(f"{signal.shape[0]} samples need {total_levels} levels, got {levels}")

    alpha = signal
    details = []
    for _ in range(levels):
        even, odd = alpha[0::2], alpha[1::2]
        pairs = np.stack([even, odd])
        mixed = np.tensordot(_H_MATRIX, pairs, axes=(1, 0))
        alpha, detail = mixed[0], mixed[1]
        details.append(detail)
    return alpha[0], details


def haar_idwt1d_multilevel(alpha, details):
    """Invert ``haar_dwt1d_multilevel``; H is orthogonal and symmetric, so it is its own inverse."""
    current = np.asarray(alpha, dtype=np.float64)[None]
    for level, detail in enumerate(reversed(details)):
        detail = np.asarray(detail, dtype=np.float64)
        if detail.shape != current.shape:
            raise ValidationError(
                f"detail level {len(details) - level} has shape {detail.shape}, expected {current.shape}"
            )
        pairs = np.tensordot(_H_MATRIX.T, np.stack([current, detail]), axes=(1, 0))
        merged = np.empty((2 * current.shape[0],) + current.shape[1:], dtype=np.float64)
        merged[0::2], merged[1::2] = pairs[0], pairs[1]
        current = merged
    _levels_for(current.shape[0])
    return current
