"""Voxel-grid geometry for color upsampling.

Quantization, voxelization with color averaging, LR->HR mapping recovery,
normalized offsets and devoxelization. All arrays handed out by the types in
this module are read-only, so values can be shared between threads freely.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from colorflow.errors import (
    DegenerateGridError,
    DuplicateCoordinateError,
    InvalidRatioError,
    MappingError,
    ShapeError,
)
from colorflow.sparse.hashmap import CoordinateHashMap

logger = logging.getLogger(__name__)


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Voxelized point cloud on an integer grid of ``extent`` voxels per axis.

    Attributes:
        coords: (N, 3) int64 voxel coordinates, each in [0, extent)
        colors: optional (N, 3) float64 RGB in [0, 1]
        extent: grid size S (the cloud lives in S^3)
    """

    coords: np.ndarray
    colors: np.ndarray | None
    extent: int

    def __post_init__(self) -> None:
        coords = np.asarray(self.coords)
        if coords.ndim != 2 or coords.shape[1] != 3:
            raise ShapeError(f"coords must have shape (N, 3), got {coords.shape}")
        if coords.size and not np.issubdtype(coords.dtype, np.integer):
            if not np.all(np.floor(coords) == coords):
                raise ShapeError("coords must be integer voxel coordinates")
        coords = coords.astype(np.int64)
        if self.extent < 1:
            raise DegenerateGridError(f"extent must be positive, got {self.extent}")
        if coords.size and (coords.min() < 0 or coords.max() >= self.extent):
            raise ShapeError(
                f"coords must lie in [0, {self.extent}), got range [{coords.min()}, {coords.max()}]"
            )
        if len(coords) > 1 and len(np.unique(coords, axis=0)) != len(coords):
            raise DuplicateCoordinateError("point cloud contains duplicate voxel coordinates")
        object.__setattr__(self, "coords", _frozen(coords))

        if self.colors is not None:
            colors = np.asarray(self.colors, dtype=np.float64)
            if colors.shape != coords.shape:
                raise ShapeError(f"colors must have shape {coords.shape}, got {colors.shape}")
            if colors.size and (colors.min() < 0.0 or colors.max() > 1.0):
                raise ShapeError("color channels must lie in [0, 1]")
            object.__setattr__(self, "colors", _frozen(colors))

    def __len__(self) -> int:
        return len(self.coords)

    @property
    def has_colors(self) -> bool:
        return self.colors is not None

    @classmethod
    def from_arrays(
        cls,
        coords: np.ndarray,
        colors: np.ndarray | None = None,
        extent: int | None = None,
    ) -> PointCloud:
        """Build a cloud, inferring the extent from the largest coordinate when not given."""
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, 3)
        if extent is None:
            extent = int(coords.max()) + 1 if len(coords) else 1
        return cls(coords=coords, colors=colors, extent=extent)

    def with_colors(self, colors: np.ndarray | None) -> PointCloud:
        return PointCloud(coords=self.coords, colors=colors, extent=self.extent)

    def without_colors(self) -> PointCloud:
        return PointCloud(coords=self.coords, colors=None, extent=self.extent)

    def recentered(self) -> PointCloud:
        """Shift the cloud so its per-axis minimum sits at 0 (extent unchanged)."""
        if not len(self):
            return self
        return PointCloud(coords=self.coords - self.coords.min(axis=0), colors=self.colors, extent=self.extent)


@dataclass(frozen=True, eq=False)
class LrHrMapping:
    """Surjection from HR point index to the LR point whose voxel contains it.

    ``map[j] = i`` means HR point ``j`` lies in the voxel of LR point ``i``.
    """

    map: np.ndarray
    voxel_size: int
    n_lr: int
    _counts: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        validate_ratio(self.voxel_size)
        mapping = np.asarray(self.map, dtype=np.int64).reshape(-1)
        if mapping.size and (mapping.min() < 0 or mapping.max() >= self.n_lr):
            raise MappingError(f"mapping entries must lie in [0, {self.n_lr})")
        counts = np.bincount(mapping, minlength=self.n_lr)
        if self.n_lr and counts.min() == 0:
            missing = int(np.count_nonzero(counts == 0))
            raise MappingError(f"mapping is not surjective: {missing} LR point(s) have no HR point")
        object.__setattr__(self, "map", _frozen(mapping))
        object.__setattr__(self, "_counts", _frozen(counts))

    @property
    def n_hr(self) -> int:
        return len(self.map)

    @property
    def children_per_lr(self) -> np.ndarray:
        """Number of HR points per LR point."""
        return self._counts


def validate_ratio(v: int, extent: int | None = None) -> int:
    """Check an upsampling ratio and return it as ``int``.

    Raises:
        InvalidRatioError: v is not an integer >= 2
        DegenerateGridError: v >= extent
    """
    if isinstance(v, bool) or int(v) != v:
        raise InvalidRatioError(f"voxel ratio must be an integer, got {v!r}")
    v = int(v)
    if v < 2:
        raise InvalidRatioError(f"voxel ratio must be >= 2, got {v}")
    if extent is not None and v >= extent:
        raise DegenerateGridError(f"voxel ratio {v} must be smaller than the grid extent {extent}")
    return v


def group_mean(keys: np.ndarray, values: np.ndarray | None) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """Group integer rows and average ``values`` per group.

    Groups are ordered lexicographically by (x, y, z).

    Returns:
        Tuple of (unique_keys, inverse, group_means)
    """
    unique, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    if values is None:
        return unique, inverse, None
    counts = np.bincount(inverse, minlength=len(unique)).astype(np.float64)
    sums = np.stack(
        [np.bincount(inverse, weights=values[:, c], minlength=len(unique)) for c in range(values.shape[1])],
        axis=1,
    )
    means = np.clip(sums / counts[:, None], 0.0, 1.0)
    return unique, inverse, means


def deduplicate(coords: np.ndarray, colors: np.ndarray | None, extent: int) -> PointCloud:
    """Merge points that share a voxel, averaging their colors."""
    coords = np.asarray(coords, dtype=np.int64).reshape(-1, 3)
    unique, _, means = group_mean(coords, None if colors is None else np.asarray(colors, dtype=np.float64))
    merged = len(coords) - len(unique)
    if merged:
        logger.debug("merged %d duplicate voxel(s)", merged)
    return PointCloud(coords=unique, colors=means, extent=extent)


def voxelize(hr: PointCloud, v: int) -> tuple[PointCloud, LrHrMapping]:
    """Downsample an HR cloud by merging all points of each v^3 voxel.

    Args:
        hr: HR cloud (colors optional)
        v: HR voxels per LR voxel per axis

    Returns:
        Tuple of (lr_cloud, mapping). LR points are ordered lexicographically;
        LR colors are the mean of their member HR colors.
    """
    v = validate_ratio(v, hr.extent)
    quantized = hr.coords // v
    lr_coords, inverse, means = group_mean(quantized, hr.colors)
    lr_extent = -(-hr.extent // v)
    lr = PointCloud(coords=lr_coords, colors=means, extent=lr_extent)
    return lr, LrHrMapping(map=inverse, voxel_size=v, n_lr=len(lr_coords))


def recover_mapping(lr: PointCloud, hr: PointCloud, v: int) -> LrHrMapping:
    """Rebuild the LR->HR mapping by re-quantizing HR coordinates.

    Works for any LR point ordering.

    Raises:
        MappingError: an HR point falls in a voxel without an LR point, or an
            LR point receives no HR point
    """
    v = validate_ratio(v)
    index = CoordinateHashMap.from_coords(lr.coords)
    rows = index.lookup(hr.coords // v)
    orphans = int(np.count_nonzero(rows < 0))
    if orphans:
        raise MappingError(f"{orphans} HR point(s) fall in voxels with no LR point at ratio {v}")
    return LrHrMapping(map=rows, voxel_size=v, n_lr=len(lr))


def compute_offsets(hr: PointCloud, lr: PointCloud, mapping: LrHrMapping) -> np.ndarray:
    """Normalized position of each HR point inside its LR voxel, in [-1, 1]^3."""
    v = mapping.voxel_size
    if mapping.n_hr != len(hr) or mapping.n_lr != len(lr):
        raise ShapeError(
            f"mapping covers {mapping.n_hr} HR / {mapping.n_lr} LR points, "
            f"clouds have {len(hr)} HR / {len(lr)} LR points"
        )
    origin = v * lr.coords[mapping.map]
    local = hr.coords - origin
    if local.size and (local.min() < 0 or local.max() >= v):
        raise MappingError(f"HR coordinates are not inside their LR voxels at ratio {v}")
    return 2.0 * local.astype(np.float64) / (v - 1) - 1.0


def devoxelize(lr_colors: np.ndarray, mapping: LrHrMapping) -> np.ndarray:
    """Give every HR point the color of its LR point."""
    lr_colors = np.asarray(lr_colors)
    if lr_colors.ndim != 2 or lr_colors.shape[0] != mapping.n_lr:
        raise ShapeError(f"expected {mapping.n_lr} LR color rows, got shape {lr_colors.shape}")
    return lr_colors[mapping.map]


def voxel_centers(lr_coords: np.ndarray, v: int) -> np.ndarray:
    """LR voxel centers expressed in HR units."""
    return v * np.asarray(lr_coords, dtype=np.float64) + (v - 1) / 2.0
