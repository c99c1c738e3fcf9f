"""
Binary field files and trajectory persistence.

A field file is

    magic   b"MSWF"
    version u32 little-endian (currently 1)
    rank    u32
    extents rank x u64
    dtype   u8 (0 = float64)
    payload row-major float64 values, little-endian

Writes go to a temporary file in the target directory and are renamed into
place, so a reader never sees a partial file.
"""

import contextlib
import json
import logging
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from mswt.errors import DimensionError, FieldFormatError
from mswt.models import Trajectory
from mswt.solver import coordinate_channels

logger = logging.getLogger(__name__)

MAGIC = b"MSWF"
VERSION = 1
DTYPE_F64 = 0

_PREFIX = struct.Struct("<4sII")
_EXTENT = struct.Struct("<Q")
_DTYPE = struct.Struct("<B")


@contextlib.contextmanager
def atomic_write(path, mode="wb"):
    """Yield a file handle whose content replaces ``path`` only on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    handle = tempfile.NamedTemporaryFile(
        mode=mode, dir=path.parent, prefix=f".{path.name}.", suffix=".tmp", delete=False,
        **({} if "b" in mode else {"newline": "", "encoding": "utf-8"}),
    )
    try:
        with handle:
            yield handle
        os.replace(handle.name, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(handle.name)
        raise


def encode_field(array):
    """Serialise an array to field-file bytes."""
    array = np.asarray(array)
    if array.dtype != np.float64:
        if not np.issubdtype(array.dtype, np.floating) and not np.issubdtype(array.dtype, np.integer):
            raise FieldFormatError(f"cannot store dtype {array.dtype}", code="unsupported-dtype")
        array = array.astype(np.float64)
    if 0 in array.shape:
        raise FieldFormatError(f"refusing to store an empty extent: shape {array.shape}", code="empty-extent")
    header = _PREFIX.pack(MAGIC, VERSION, array.ndim)
    header += b"".join(_EXTENT.pack(extent) for extent in array.shape)
    header += _DTYPE.pack(DTYPE_F64)
    return header + np.ascontiguousarray(array, dtype="<f8").tobytes()


def decode_field(buffer, offset=0):
    """Parse one field starting at ``offset``; returns (array, offset after the field)."""
    view = memoryview(buffer)
    if len(view) - offset < _PREFIX.size:
        raise FieldFormatError("file too short for a field header", code="truncated-payload")
    magic, version, rank = _PREFIX.unpack_from(view, offset)
    if magic != MAGIC:
        raise FieldFormatError(f"bad magic {bytes(magic)!r}", code="bad-magic")
    if version != VERSION:
        raise FieldFormatError(f"unsupported field version {version}", code="unsupported-version")
    offset += _PREFIX.size
    if len(view) - offset < rank * _EXTENT.size + _DTYPE.size:
        raise FieldFormatError("file too short for the field extents", code="truncated-payload")
    extents = tuple(_EXTENT.unpack_from(view, offset + i * _EXTENT.size)[0] for i in range(rank))
    offset += rank * _EXTENT.size
    (dtype,) = _DTYPE.unpack_from(view, offset)
    offset += _DTYPE.size
    if dtype != DTYPE_F64:
        raise FieldFormatError(f"unsupported dtype code {dtype}", code="unsupported-dtype")
    if 0 in extents:
        raise FieldFormatError(f"field has an empty extent {extents}", code="empty-extent")
    nbytes = 8 * int(np.prod(extents, dtype=np.int64))
    if len(view) - offset < nbytes:
        raise FieldFormatError(
            f"payload holds {len(view) - offset} bytes, expected {nbytes}", code="truncated-payload"
        )
    array = np.frombuffer(view[offset:offset + nbytes], dtype="<f8").astype(np.float64).reshape(extents)
    return array, offset + nbytes


def write_field(path, array):
    data = encode_field(array)
    with atomic_write(path) as handle:
        handle.write(data)
    logger.debug(f"Wrote field {np.shape(array)} to {path}")


def read_field(path):
    array, _ = decode_field(Path(path).read_bytes())
    return array


# --- trajectories -------------------------------------------------------------

def sidecar_path(path):
    return Path(path).with_suffix(".json")


def write_trajectory(path, trajectory):
    """States as a T x H x W x C field plus a JSON sidecar with dt and the instability marker."""
    write_field(path, trajectory.states)
    meta = {"steps": len(trajectory), "dt": trajectory.dt, "unstable_at": trajectory.unstable_at}
    with atomic_write(sidecar_path(path), mode="w") as handle:
        json.dump(meta, handle, indent=2, sort_keys=True)
        handle.write("\n")


def read_trajectory(path):
    """Inverse of ``write_trajectory``; a missing sidecar means dt=1 and no marker."""
    states = read_field(path)
    if states.ndim == 3:
        states = states[None]
    if states.ndim != 4:
        raise DimensionError(f"trajectory must be T x H x W x C, got rank {states.ndim}")
    meta = {}
    sidecar = sidecar_path(path)
    if sidecar.exists():
        meta = json.loads(sidecar.read_text(encoding="utf-8"))
    return Trajectory(
        states=states,
        coords=coordinate_channels(*states.shape[1:3]),
        dt=meta.get("dt", 1.0),
        unstable_at=meta.get("unstable_at"),
    )


def read_state(path):
    """An H x W x C state, or the first snapshot of a trajectory file."""
    array = read_field(path)
    if array.ndim == 4:
        return array[0]
    if array.ndim == 2:
        return array[..., None]
    return array
