"""Workspace, cache directory and atomic file output utilities"""
from pathlib import Path
from typing import Optional, Union
import logging
import os
import tempfile

from peplatent.config import settings

logger = logging.getLogger(__name__)


def ensure_workspace_exists() -> Path:
    """
    Ensures the workspace directory exists and returns its path.

    Returns:
        Path: The workspace directory path

    Raises:
        OSError: If directory cannot be created
    """
    workspace = settings.workspace_path
    try:
        workspace.mkdir(parents=True, exist_ok=True)
        logger.debug(f"Workspace directory: {workspace}")
        return workspace
    except OSError as e:
        logger.error(f"Failed to create workspace directory: {e}")
        raise


def get_cache_dir(override: Optional[Union[str, Path]] = None) -> Path:
    """
    Resolves the sequence cache directory and creates it.

    Precedence: explicit override (the --cache-dir flag), then the
    PEPLATENT_CACHE_DIR environment variable through settings.

    Args:
        override: Optional directory that wins over settings

    Returns:
        Path: The cache directory path
    """
    cache = Path(override).expanduser().resolve() if override else settings.cache_path
    cache.mkdir(parents=True, exist_ok=True)
    return cache


def atomic_write_bytes(path: Union[str, Path], payload: bytes) -> Path:
    """
    Writes `payload` to `path` through a temporary file and a rename, so an
    interrupted run never leaves a truncated artifact behind.

    Args:
        path: Destination file
        payload: Bytes to write

    Returns:
        Path: The destination path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp_name, path)
    except Exception:
        Path(tmp_name).unlink(missing_ok=True)
        raise
    logger.debug(f"Wrote {len(payload)} bytes to {path}")
    return path


def atomic_write_text(path: Union[str, Path], text: str) -> Path:
    """Text counterpart of atomic_write_bytes (UTF-8)"""
    return atomic_write_bytes(path, text.encode("utf-8"))
