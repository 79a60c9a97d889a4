"""Container format for precomputed embedding matrices"""
from pathlib import Path
from typing import Dict, Mapping, Union
import logging
import struct

import numpy as np

from peplatent.errors import EmbeddingFormatError, ShapeError
from peplatent.utils.workspace import atomic_write_bytes

logger = logging.getLogger(__name__)

MAGIC = b"PEPE"
VERSION = 1
_HEADER = struct.Struct("<4sII")
_ID_LEN = struct.Struct("<H")
_SHAPE = struct.Struct("<II")


def encode_embeddings(embeddings: Mapping[str, np.ndarray]) -> bytes:
    """
    Serializes id -> matrix pairs: magic, u32 version, u32 count, then per
    record u16 id length, UTF-8 id, u32 rows, u32 cols and row-major
    float32 little-endian values.
    """
    parts = [_HEADER.pack(MAGIC, VERSION, len(embeddings))]
    for record_id, matrix in embeddings.items():
        matrix = np.asarray(matrix)
        if matrix.ndim != 2:
            raise ShapeError(f"embedding '{record_id}' must be a matrix, got shape {matrix.shape}")
        id_bytes = record_id.encode("utf-8")
        parts.append(_ID_LEN.pack(len(id_bytes)))
        parts.append(id_bytes)
        parts.append(_SHAPE.pack(*matrix.shape))
        parts.append(np.ascontiguousarray(matrix, dtype="<f4").tobytes())
    return b"".join(parts)


def decode_embeddings(blob: bytes) -> Dict[str, np.ndarray]:
    """
    Parses a container produced by encode_embeddings.

    Raises:
        EmbeddingFormatError: On bad magic, unknown version, truncation or a
            payload that disagrees with its declared shape
    """
    try:
        magic, version, count = _HEADER.unpack_from(blob, 0)
    except struct.error as e:
        raise EmbeddingFormatError("embedding container truncated before header end") from e
    if magic != MAGIC:
        raise EmbeddingFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise EmbeddingFormatError(f"unsupported container version {version}")

    offset = _HEADER.size
    result: Dict[str, np.ndarray] = {}
    for k in range(count):
        try:
            (id_len,) = _ID_LEN.unpack_from(blob, offset)
            offset += _ID_LEN.size
            id_bytes = blob[offset:offset + id_len]
            if len(id_bytes) != id_len:
                raise EmbeddingFormatError(f"record {k}: truncated id")
            record_id = id_bytes.decode("utf-8")
            offset += id_len
            rows, cols = _SHAPE.unpack_from(blob, offset)
            offset += _SHAPE.size
        except (struct.error, UnicodeDecodeError) as e:
            raise EmbeddingFormatError(f"record {k}: malformed header") from e
        nbytes = 4 * rows * cols
        payload = blob[offset:offset + nbytes]
        if len(payload) != nbytes:
            raise EmbeddingFormatError(
                f"record '{record_id}': header declares {rows}x{cols} values but payload is short"
            )
        offset += nbytes
        result[record_id] = np.frombuffer(payload, dtype="<f4").reshape(rows, cols).astype(np.float32)

    if offset != len(blob):
        raise EmbeddingFormatError(f"{len(blob) - offset} trailing bytes after {count} records")
    return result


def write_embeddings(embeddings: Mapping[str, np.ndarray], path: Union[str, Path]) -> Path:
    """Writes the container atomically"""
    path = atomic_write_bytes(path, encode_embeddings(embeddings))
    logger.info(f"Wrote {len(embeddings)} embeddings to {path}")
    return path


def load_embeddings(path: Union[str, Path]) -> Dict[str, np.ndarray]:
    """Reads a container file into an id -> matrix map"""
    embeddings = decode_embeddings(Path(path).read_bytes())
    logger.info(f"Loaded {len(embeddings)} embeddings from {path}")
    return embeddings


def require_width(embeddings: Mapping[str, np.ndarray], d_emb: int) -> None:
    """
    Raises:
        ShapeError: If any matrix width differs from d_emb
    """
    for record_id, matrix in embeddings.items():
        if matrix.shape[1] != d_emb:
            raise ShapeError(
                f"embedding '{record_id}' has width {matrix.shape[1]}, model expects {d_emb}"
            )
