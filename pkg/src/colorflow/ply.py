"""PLY reading and writing.

Reads ASCII and binary PLY files with ``x``/``y``/``z`` and optional
``red``/``green``/``blue`` vertex properties. Positions are shifted so each
axis starts at 0, floored onto the integer grid, and points sharing a voxel are
merged by averaging their colors. Files are written as binary little-endian
with float32 positions and 8-bit colors.
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
from plyfile import PlyData, PlyElement, PlyHeaderParseError, PlyParseError

from colorflow.errors import AttributeMissingError, EmptyCloudError, PlyFormatError
from colorflow.geometry import PointCloud, deduplicate

logger = logging.getLogger(__name__)

POSITION_PROPERTIES = ("x", "y", "z")
COLOR_PROPERTIES = ("red", "green", "blue")


def read_ply_arrays(path: str | Path) -> tuple[np.ndarray, np.ndarray | None]:
    """Raw vertex positions (float64) and colors in [0, 1] (or None).

    Raises:
        PlyFormatError: unreadable file or malformed content
        AttributeMissingError: no x/y/z properties
        EmptyCloudError: the vertex element has no rows
    """
    path = Path(path)
    if not path.is_file():
        raise PlyFormatError(f"no such PLY file: {path}")
    try:
        ply = PlyData.read(str(path))
    except PlyHeaderParseError as e:
        raise PlyFormatError(f"{path}: {e.message}", line=e.line) from None
    except (PlyParseError, ValueError, EOFError) as e:
        raise PlyFormatError(f"{path}: {e}") from None

    if "vertex" not in ply:
        raise PlyFormatError(f"{path}: no vertex element")
    vertices = ply["vertex"].data
    names = vertices.dtype.names or ()
    missing = [p for p in POSITION_PROPERTIES if p not in names]
    if missing:
        raise AttributeMissingError(f"{path}: vertex element lacks {', '.join(missing)}")
    if len(vertices) == 0:
        raise EmptyCloudError(f"{path}: vertex element is empty")

    positions = np.stack([np.asarray(vertices[p], dtype=np.float64) for p in POSITION_PROPERTIES], axis=1)
    if not np.all(np.isfinite(positions)):
        raise PlyFormatError(f"{path}: non-finite vertex position")

    colors = None
    if all(p in names for p in COLOR_PROPERTIES):
        raw = np.stack([np.asarray(vertices[p]) for p in COLOR_PROPERTIES], axis=1)
        if np.issubdtype(raw.dtype, np.integer):
            colors = raw.astype(np.float64) / np.iinfo(raw.dtype).max
        else:
            colors = raw.astype(np.float64)
        colors = np.clip(colors, 0.0, 1.0)
    return positions, colors


def read_ply(
    path: str | Path,
    extent: int | None = None,
    require_colors: bool = False,
    recenter: bool = True,
) -> PointCloud:
    """Load a PLY file as a voxelized cloud.

    Args:
        path: PLY file
        extent: grid size S; inferred from the largest coordinate when None
        require_colors: raise if the file has no color properties
        recenter: shift each axis so its minimum is 0 before flooring

    Returns:
        PointCloud with duplicate voxels merged by color mean
    """
    positions, colors = read_ply_arrays(path)
    if require_colors and colors is None:
        raise AttributeMissingError(f"{path}: vertex element lacks red, green, blue")
    if recenter:
        positions = positions - positions.min(axis=0)
    coords = np.floor(positions).astype(np.int64)
    if extent is None:
        extent = int(coords.max()) + 1
    cloud = deduplicate(coords, colors, extent)
    merged = len(coords) - len(cloud)
    if merged:
        logger.warning("%s: merged %d point(s) sharing a voxel", path, merged)
    return cloud


def to_bytes(colors: np.ndarray) -> np.ndarray:
    """[0, 1] colors to 8-bit, rounding half up."""
    return np.floor(np.clip(colors, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def write_ply(cloud: PointCloud, path: str | Path, ascii: bool = False, origin: np.ndarray | None = None) -> None:
    """Write ``cloud`` as a PLY vertex list (colors only if the cloud has them).

    ``origin`` is added to every coordinate, restoring a frame removed on read.
    """
    fields = [("x", "f4"), ("y", "f4"), ("z", "f4")]
    if cloud.colors is not None:
        fields += [("red", "u1"), ("green", "u1"), ("blue", "u1")]
    vertices = np.empty(len(cloud), dtype=fields)
    coords = cloud.coords if origin is None else cloud.coords + np.asarray(origin, dtype=np.int64)
    for axis, name in enumerate(POSITION_PROPERTIES):
        vertices[name] = coords[:, axis]
    if cloud.colors is not None:
        quantized = to_bytes(cloud.colors)
        for channel, name in enumerate(COLOR_PROPERTIES):
            vertices[name] = quantized[:, channel]

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    PlyData([PlyElement.describe(vertices, "vertex")], text=ascii, byte_order="<").write(str(path))


def read_upsampling_pair(lr_path: str | Path, hr_path: str | Path, v: int) -> tuple[PointCloud, PointCloud, np.ndarray]:
    """Load an LR cloud (in LR voxel units) and HR coordinates that belong together.

    Both are shifted by the same whole number of LR voxels so the HR cloud
    starts near the origin while ``floor(hr / v)`` still lands on LR voxels.

    Returns:
        Tuple of (lr, hr, origin) where ``origin`` is the HR-unit shift that
        was removed (pass it to :func:`write_ply` to restore the input frame)
    """
    lr_positions, lr_colors = read_ply_arrays(lr_path)
    if lr_colors is None:
        raise AttributeMissingError(f"{lr_path}: vertex element lacks red, green, blue")
    hr_positions, _ = read_ply_arrays(hr_path)

    hr_coords = np.floor(hr_positions).astype(np.int64)
    lr_origin = np.floor_divide(hr_coords.min(axis=0), v)
    hr_coords -= v * lr_origin
    lr_coords = np.floor(lr_positions).astype(np.int64) - lr_origin

    extent = max(int(hr_coords.max()) + 1, v * (int(lr_coords.max()) + 1), v + 1)
    hr = deduplicate(hr_coords, None, extent)
    lr = deduplicate(lr_coords, lr_colors, -(-extent // v))
    return lr, hr, v * lr_origin
