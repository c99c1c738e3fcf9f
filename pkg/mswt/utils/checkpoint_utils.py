"""
Checkpoint files.

Layout (little-endian):

    magic        b"MSWC"
    version      u32
    header       u64 byte length, then UTF-8 JSON: run config, iteration,
                 optimizer step, RNG state, normaliser, loss and lr history
    tensors      u32 count, then per tensor: u32 name length, UTF-8 name,
                 one field block as written by ``field_utils.encode_field``

Parameter tensors are stored under their own names, Adam moments under
``adam.first.<name>`` and ``adam.second.<name>``.
"""

import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from mswt.errors import FieldFormatError, ValidationError
from mswt.models import Normalizer
from mswt.network import ModelParameters
from mswt.tensor import Tensor
from mswt.training import AdamState, TrainingState
from mswt.utils.field_utils import atomic_write, decode_field, encode_field
from mswt.utils.settings_utils import run_config_from_dict, run_config_to_dict

logger = logging.getLogger(__name__)

MAGIC = b"MSWC"
VERSION = 1

_PREFIX = struct.Struct("<4sIQ")
_COUNT = struct.Struct("<I")

FIRST_MOMENT = "adam.first."
SECOND_MOMENT = "adam.second."


@dataclass
class Checkpoint:
    config: object
    parameters: ModelParameters
    normalizer: Normalizer
    state: TrainingState = None


def encode_checkpoint(checkpoint):
    state = checkpoint.state
    header = {
        "config": run_config_to_dict(checkpoint.config),
        "normalizer": {
            "mean": [float(v) for v in checkpoint.normalizer.mean],
            "std": [float(v) for v in checkpoint.normalizer.std],
        },
        "training": None,
    }
    tensors = [(name, tensor.data) for name, tensor in checkpoint.parameters.items()]
    if state is not None:
        header["training"] = {
            "iteration": state.iteration,
            "optimizer_step": state.optimizer.step,
            "rng_state": state.rng_state,
            "loss_history": [float(v) for v in state.loss_history],
            "lr_history": [float(v) for v in state.lr_history],
        }
        tensors += [(FIRST_MOMENT + name, m) for name, m in state.optimizer.first.items()]
        tensors += [(SECOND_MOMENT + name, v) for name, v in state.optimizer.second.items()]

    names = [name for name, _ in tensors]
    if len(set(names)) != len(names):
        raise ValidationError("checkpoint tensor names must be unique")

    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [_PREFIX.pack(MAGIC, VERSION, len(header_bytes)), header_bytes, _COUNT.pack(len(tensors))]
    for name, array in tensors:
        encoded_name = name.encode("utf-8")
        parts += [_COUNT.pack(len(encoded_name)), encoded_name, encode_field(array)]
    return b"".join(parts)


def decode_checkpoint(buffer):
    view = memoryview(buffer)
    if len(view) < _PREFIX.size:
        raise FieldFormatError("file too short for a checkpoint header", code="truncated-payload")
    magic, version, header_length = _PREFIX.unpack_from(view, 0)
    if magic != MAGIC:
        raise FieldFormatError(f"bad checkpoint magic {bytes(magic)!r}", code="bad-magic")
    if version != VERSION:
        raise FieldFormatError(f"unsupported checkpoint version {version}", code="unsupported-version")
    offset = _PREFIX.size
    if len(view) < offset + header_length + _COUNT.size:
        raise FieldFormatError("checkpoint header is truncated", code="truncated-payload")
    header = json.loads(bytes(view[offset:offset + header_length]).decode("utf-8"))
    offset += header_length
    (count,) = _COUNT.unpack_from(view, offset)
    offset += _COUNT.size

    tensors = {}
    for _ in range(count):
        if len(view) < offset + _COUNT.size:
            raise FieldFormatError("checkpoint tensor table is truncated", code="truncated-payload")
        (name_length,) = _COUNT.unpack_from(view, offset)
        offset += _COUNT.size
        if len(view) < offset + name_length:
            raise FieldFormatError("checkpoint tensor name is truncated", code="truncated-payload")
        name = bytes(view[offset:offset + name_length]).decode("utf-8")
        offset += name_length
        if name in tensors:
            raise ValidationError(f"duplicate tensor '{name}' in checkpoint")
        tensors[name], offset = decode_field(view, offset)

    parameters = ModelParameters(
        (name, Tensor(array)) for name, array in tensors.items() if not name.startswith("adam.")
    )
    normalizer = Normalizer(mean=header["normalizer"]["mean"], std=header["normalizer"]["std"])
    state = None
    training = header.get("training")
    if training is not None:
        optimizer = AdamState(
            first={name: tensors[FIRST_MOMENT + name] for name in parameters},
            second={name: tensors[SECOND_MOMENT + name] for name in parameters},
            step=training["optimizer_step"],
        )
        state = TrainingState(
            iteration=training["iteration"],
            optimizer=optimizer,
            rng_state=training["rng_state"],
            loss_history=list(training["loss_history"]),
            lr_history=list(training["lr_history"]),
        )
    return Checkpoint(
        config=run_config_from_dict(header["config"]),
        parameters=parameters,
        normalizer=normalizer,
        state=state,
    )


def save_checkpoint(path, checkpoint):
    data = encode_checkpoint(checkpoint)
    with atomic_write(path) as handle:
        handle.write(data)
    iteration = checkpoint.state.iteration if checkpoint.state else 0
    logger.info(f"Checkpoint at iteration {iteration} written to {path}")


def load_checkpoint(path):
    checkpoint = decode_checkpoint(Path(path).read_bytes())
    logger.info(f"Loaded checkpoint {path} ({checkpoint.parameters.count()} parameters)")
    return checkpoint


def parameters_equal(a, b):
    """Bit-exact comparison of two parameter maps."""
    return list(a) == list(b) and all(np.array_equal(a[name].data, b[name].data) for name in a)
