"""Checkpoint container: a zip archive of little-endian ``.npy`` arrays plus ``meta.json``.

Layout::

    meta.json          format version, precision, array names/shapes, model metadata
    arrays/<name>.npy  one entry per parameter or buffer

Zip entries carry a fixed timestamp and are written in sorted order, so saving
the same arrays twice yields byte-identical files.
"""

from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path
from typing import Any

import numpy as np
from packaging.version import InvalidVersion, Version

from colorflow.errors import CheckpointError

FORMAT_VERSION = "1.0"
_FIXED_TIMESTAMP = (1980, 1, 1, 0, 0, 0)


def _entry(name: str) -> zipfile.ZipInfo:
    info = zipfile.ZipInfo(name, date_time=_FIXED_TIMESTAMP)
    info.compress_type = zipfile.ZIP_DEFLATED
    info.external_attr = 0o644 << 16
    return info


def save_checkpoint(path: str | Path, arrays: dict[str, np.ndarray], meta: dict[str, Any]) -> int:
    """Write a checkpoint.

    Args:
        path: Output file
        arrays: Named arrays (parameters and buffers)
        meta: JSON-serializable metadata merged into ``meta.json``

    Returns:
        Size of the written file in bytes
    """
    path = Path(path)
    header = {
        "format_version": FORMAT_VERSION,
        "arrays": {name: {"shape": list(a.shape), "dtype": a.dtype.str} for name, a in sorted(arrays.items())},
        **meta,
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(path, "w") as archive:
        archive.writestr(_entry("meta.json"), json.dumps(header, indent=2, sort_keys=True))
        for name, array in sorted(arrays.items()):
            buffer = io.BytesIO()
            little = np.ascontiguousarray(array, dtype=array.dtype.newbyteorder("<"))
            np.lib.format.write_array(buffer, little, allow_pickle=False)
            archive.writestr(_entry(f"arrays/{name}.npy"), buffer.getvalue())
    return path.stat().st_size


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    """Read a checkpoint written by :func:`save_checkpoint`.

    Raises:
        CheckpointError: missing file, corrupt archive or unsupported version
    """
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        with zipfile.ZipFile(path) as archive:
            meta = json.loads(archive.read("meta.json"))
            _check_version(meta.get("format_version"))
            arrays = {}
            for name in meta.get("arrays", {}):
                with archive.open(f"arrays/{name}.npy") as handle:
                    arrays[name] = np.lib.format.read_array(io.BytesIO(handle.read()), allow_pickle=False)
    except (zipfile.BadZipFile, KeyError, json.JSONDecodeError, ValueError) as e:
        if isinstance(e, CheckpointError):
            raise
        raise CheckpointError(f"unreadable checkpoint {path}: {e}") from None
    return arrays, meta


def _check_version(raw: Any) -> None:
    try:
        found = Version(str(raw))
    except InvalidVersion:
        raise CheckpointError(f"invalid checkpoint format version {raw!r}") from None
    if found.major != Version(FORMAT_VERSION).major:
        raise CheckpointError(f"unsupported checkpoint format version {found} (this build reads {FORMAT_VERSION})")
