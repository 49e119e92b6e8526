"""Sparse tensors: 4D integer coordinates with per-point feature rows."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from colorflow.autograd.tensor import Tensor
from colorflow.errors import AttributeMissingError, ShapeError
from colorflow.sparse.hashmap import CoordinateHashMap, as_coords4

if TYPE_CHECKING:
    from colorflow.geometry import PointCloud


@dataclass(frozen=True, eq=False)
class SparseTensor:
    """Coordinates (x, y, z, batch) with one feature row per coordinate.

    ``index`` maps each coordinate back to its row. Layers that keep the
    coordinate set share the index through :meth:`with_features`.
    """

    coords: np.ndarray
    features: Tensor
    index: CoordinateHashMap

    def __post_init__(self) -> None:
        if self.features.data.ndim != 2 or self.features.shape[0] != len(self.coords):
            raise ShapeError(
                f"features must have one row per coordinate: {self.features.shape} vs {len(self.coords)} coords"
            )

    @classmethod
    def from_coords(cls, coords: np.ndarray, features: Tensor) -> SparseTensor:
        coords4 = np.array(as_coords4(coords), copy=True)
        coords4.setflags(write=False)
        return cls(coords=coords4, features=features, index=CoordinateHashMap.from_coords(coords4))

    @classmethod
    def from_clouds(cls, clouds: Sequence[PointCloud], dtype: np.dtype | str = "float32") -> SparseTensor:
        """Batch colored clouds into one tensor; cloud ``n`` gets batch index ``n``."""
        if not clouds:
            raise ShapeError("from_clouds needs at least one cloud")
        coords, colors = [], []
        for n, cloud in enumerate(clouds):
            if cloud.colors is None:
                raise AttributeMissingError(f"cloud {n} has no colors")
            batch = np.full((len(cloud), 1), n, dtype=np.int64)
            coords.append(np.concatenate([cloud.coords, batch], axis=1))
            colors.append(cloud.colors)
        return cls.from_coords(np.concatenate(coords), Tensor(np.concatenate(colors), dtype=dtype))

    def __len__(self) -> int:
        return len(self.coords)

    @property
    def channels(self) -> int:
        return self.features.shape[1]

    @property
    def batch_size(self) -> int:
        return int(self.coords[:, 3].max()) + 1 if len(self) else 0

    def with_features(self, features: Tensor) -> SparseTensor:
        """Same coordinates and index, new features."""
        return SparseTensor(coords=self.coords, features=features, index=self.index)
