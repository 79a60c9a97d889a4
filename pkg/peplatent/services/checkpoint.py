"""Binary checkpoint format for denoiser models"""
from pathlib import Path
from typing import Union
import json
import logging
import struct

import numpy as np
from pydantic import ValidationError

from peplatent.errors import CheckpointFormatError, ConfigurationError
from peplatent.models.denoiser import DenoiserConfig, DenoiserModel, NormStats
from peplatent.services.denoiser import parameter_shapes
from peplatent.utils.workspace import atomic_write_bytes

logger = logging.getLogger(__name__)

MAGIC = b"PEPD"
VERSION = 1
_HEADER = struct.Struct("<4sIQ")


def encode_checkpoint(model: DenoiserModel) -> bytes:
    """
    Serializes a model: magic, u32 version, u64 metadata length, JSON
    metadata, then float32 little-endian tensors in directory order.
    """
    directory = []
    payloads = []
    offset = 0
    for name, value in model.parameters.items():
        data = np.ascontiguousarray(value, dtype="<f4").tobytes()
        directory.append({"name": name, "shape": list(value.shape), "offset": offset, "nbytes": len(data)})
        payloads.append(data)
        offset += len(data)

    metadata = {
        "config": model.config.model_dump(mode="json"),
        "trained_epochs": model.trained_epochs,
        "tensors": directory,
        "norm_stats": {
            "mean": [float(v) for v in np.asarray(model.norm_stats.mean, dtype=np.float32)],
            "std": [float(v) for v in np.asarray(model.norm_stats.std, dtype=np.float32)],
        },
    }
    meta_bytes = json.dumps(metadata, sort_keys=True).encode("utf-8")
    return _HEADER.pack(MAGIC, VERSION, len(meta_bytes)) + meta_bytes + b"".join(payloads)


def decode_checkpoint(blob: bytes) -> DenoiserModel:
    """
    Parses a checkpoint produced by encode_checkpoint.

    Raises:
        CheckpointFormatError: On bad magic, version mismatch, truncation or
            invariant violations (including zero norm_stats std)
    """
    if len(blob) < _HEADER.size:
        raise CheckpointFormatError("checkpoint truncated before header end")
    magic, version, meta_len = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise CheckpointFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {version} (expected {VERSION})")
    meta_end = _HEADER.size + meta_len
    if meta_end > len(blob):
        raise CheckpointFormatError("checkpoint truncated inside metadata")

    try:
        metadata = json.loads(blob[_HEADER.size:meta_end].decode("utf-8"))
        config = DenoiserConfig.model_validate(metadata["config"])
        norm_stats = NormStats(
            mean=np.asarray(metadata["norm_stats"]["mean"], dtype=np.float32),
            std=np.asarray(metadata["norm_stats"]["std"], dtype=np.float32),
        )
        norm_stats.check()
        directory = list(metadata["tensors"])
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValidationError, ConfigurationError) as e:
        logger.error(f"Invalid checkpoint metadata: {e}")
        raise CheckpointFormatError(f"invalid checkpoint metadata: {e}") from e

    payload = memoryview(blob)[meta_end:]
    expected = parameter_shapes(config)
    parameters = {}
    for position, entry in enumerate(directory):
        try:
            name = str(entry["name"])
            shape = tuple(int(n) for n in entry["shape"])
            start, nbytes = int(entry["offset"]), int(entry["nbytes"])
        except (KeyError, TypeError, ValueError) as e:
            raise CheckpointFormatError(f"malformed tensor entry #{position}: {e!r}") from e
        if name not in expected:
            raise CheckpointFormatError(f"unexpected tensor '{name}'")
        if shape != expected[name]:
            raise CheckpointFormatError(f"tensor '{name}' has shape {shape}, config needs {expected[name]}")
        if start < 0 or nbytes != 4 * int(np.prod(shape, dtype=np.int64)):
            raise CheckpointFormatError(f"tensor '{name}' has a bad offset or size")
        if start + nbytes > len(payload):
            raise CheckpointFormatError(f"checkpoint truncated inside tensor '{name}'")
        values = np.frombuffer(payload[start:start + nbytes], dtype="<f4").reshape(shape)
        if not np.all(np.isfinite(values)):
            raise CheckpointFormatError(f"tensor '{name}' holds non-finite values")
        parameters[name] = values.astype(np.float32)

    missing = [name for name in expected if name not in parameters]
    if missing:
        raise CheckpointFormatError(f"checkpoint lacks tensors: {', '.join(missing)}")

    if norm_stats.mean.shape != (config.d_emb,):
        raise CheckpointFormatError("norm_stats length disagrees with d_emb")
    return DenoiserModel(
        config=config,
        parameters=parameters,
        norm_stats=norm_stats,
        trained_epochs=int(metadata.get("trained_epochs", 0)),
    )


def save_checkpoint(model: DenoiserModel, path: Union[str, Path]) -> Path:
    """Writes `model` to `path` atomically"""
    path = atomic_write_bytes(path, encode_checkpoint(model))
    logger.info(f"Checkpoint saved to {path}")
    return path


def load_checkpoint(path: Union[str, Path]) -> DenoiserModel:
    """
    Reads a checkpoint file.

    Raises:
        CheckpointFormatError: If the file is malformed
        OSError: If the file cannot be read
    """
    blob = Path(path).read_bytes()
    model = decode_checkpoint(blob)
    logger.info(f"Loaded checkpoint {path} ({model.parameter_count()} parameters)")
    return model
