"""Classical color upsampling baselines: devoxelization, KNN and WAAN.

Neighbors are searched among LR voxel centers expressed in HR units
(``v * p + (v - 1) / 2``). When several LR points are equally distant the one
with the lower index is preferred.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from colorflow.errors import AttributeMissingError, ConfigError, EmptyCloudError, ShapeError
from colorflow.geometry import PointCloud, devoxelize, recover_mapping, validate_ratio, voxel_centers

logger = logging.getLogger(__name__)

METHODS = ("devox", "knn", "waan")
WAAN_EPSILON = 1e-8
WAAN_RADIUS_FACTOR = 1.5


@dataclass(frozen=True)
class BaselineSpec:
    """Baseline selection.

    Attributes:
        method: "devox", "knn" or "waan"
        k: neighbor count for knn
        radius: ball radius in HR units for waan; None means 1.5 LR voxel lengths
    """

    method: str = "devox"
    k: int = 3
    radius: float | None = None

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"unknown baseline {self.method!r}, expected one of {', '.join(METHODS)}")
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.radius is not None and self.radius <= 0:
            raise ConfigError(f"radius must be positive, got {self.radius}")


def _lr_colors(lr: PointCloud) -> np.ndarray:
    if not len(lr):
        raise EmptyCloudError("LR cloud is empty")
    if lr.colors is None:
        raise AttributeMissingError("LR cloud has no colors")
    return lr.colors


def _squared_distances(centers: np.ndarray, queries: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    diff = queries[rows] - centers[cols]
    return np.einsum("ij,ij->i", diff, diff)


def upsample_devox(lr: PointCloud, hr: PointCloud, v: int) -> np.ndarray:
    """Every HR point takes the color of the LR point whose voxel contains it."""
    colors = _lr_colors(lr)
    return devoxelize(colors, recover_mapping(lr, hr, v))


def nearest_indices(centers: np.ndarray, queries: np.ndarray, k: int) -> np.ndarray:
    """Indices (N_q, k) of the k nearest centers per query, ties by lower index."""
    tree = cKDTree(centers)
    n = len(centers)
    probe = min(k + 1, n)
    _, idx = tree.query(queries, k=probe)
    idx = idx.reshape(len(queries), probe)
    if probe == k:
        # every center is a neighbor; order does not matter for an unweighted mean
        return idx

    rows = np.arange(len(queries))
    kth = _squared_distances(centers, queries, rows, idx[:, k - 1])
    next_d = _squared_distances(centers, queries, rows, idx[:, k])
    result = idx[:, :k].copy()
    ambiguous = np.flatnonzero(next_d <= kth)
    if ambiguous.size:
        radii = np.sqrt(kth[ambiguous]) * (1 + 1e-9) + 1e-9
        for row, candidates in zip(ambiguous, tree.query_ball_point(queries[ambiguous], radii), strict=True):
            candidates = np.asarray(candidates, dtype=np.int64)
            d2 = _squared_distances(centers, queries, np.full(len(candidates), row), candidates)
            order = np.lexsort((candidates, d2))
            result[row] = candidates[order[:k]]
    return result


def upsample_knn(lr: PointCloud, hr: PointCloud, v: int, k: int = 3) -> np.ndarray:
    """Unweighted mean color of the k nearest LR voxel centers."""
    colors = _lr_colors(lr)
    v = validate_ratio(v)
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    if k > len(lr):
        logger.warning("k=%d exceeds the %d LR points; using k=%d", k, len(lr), len(lr))
        k = len(lr)
    centers = voxel_centers(lr.coords, v)
    idx = nearest_indices(centers, hr.coords.astype(np.float64), k)
    return colors[idx].mean(axis=1)


def upsample_waan(lr: PointCloud, hr: PointCloud, v: int, radius: float | None = None) -> np.ndarray:
    """Inverse-distance weighted mean of LR colors within ``radius``.

    HR points with an empty ball take the color of the nearest LR point.
    """
    colors = _lr_colors(lr)
    v = validate_ratio(v)
    radius = WAAN_RADIUS_FACTOR * v if radius is None else float(radius)
    if radius <= 0:
        raise ConfigError(f"radius must be positive, got {radius}")
    centers = voxel_centers(lr.coords, v)
    queries = hr.coords.astype(np.float64)
    tree = cKDTree(centers)

    neighborhoods = tree.query_ball_point(queries, radius * (1 + 1e-9))
    counts = np.fromiter((len(n) for n in neighborhoods), dtype=np.int64, count=len(queries))
    rows = np.repeat(np.arange(len(queries)), counts)
    cols = np.fromiter((i for n in neighborhoods for i in n), dtype=np.int64, count=int(counts.sum()))
    d2 = _squared_distances(centers, queries, rows, cols)
    inside = d2 <= radius * radius
    rows, cols, d2 = rows[inside], cols[inside], d2[inside]

    weights = 1.0 / (WAAN_EPSILON + np.sqrt(d2))
    total = np.bincount(rows, weights=weights, minlength=len(queries))
    out = np.stack(
        [np.bincount(rows, weights=weights * colors[cols, c], minlength=len(queries)) for c in range(3)], axis=1
    )
    empty = total == 0
    out[~empty] /= total[~empty, None]
    if empty.any():
        out[empty] = colors[nearest_indices(centers, queries[empty], 1)[:, 0]]
    return np.clip(out, 0.0, 1.0)


def upsample(spec: BaselineSpec, lr: PointCloud, hr: PointCloud, v: int) -> np.ndarray:
    """Run the baseline selected by ``spec``."""
    if spec.method == "devox":
        return upsample_devox(lr, hr, v)
    if spec.method == "knn":
        return upsample_knn(lr, hr, v, k=spec.k)
    return upsample_waan(lr, hr, v, radius=spec.radius)


def _pairwise_squared(centers: np.ndarray, queries: np.ndarray) -> np.ndarray:
    diff = queries[:, None, :] - centers[None, :, :]
    return np.sum(diff * diff, axis=-1)


def knn_bruteforce(centers: np.ndarray, colors: np.ndarray, queries: np.ndarray, k: int) -> np.ndarray:
    """O(N_q * N) reference for :func:`upsample_knn`."""
    centers, queries = np.asarray(centers, dtype=np.float64), np.asarray(queries, dtype=np.float64)
    if len(colors) != len(centers):
        raise ShapeError("one color per center required")
    k = min(k, len(centers))
    order = np.argsort(_pairwise_squared(centers, queries), axis=1, kind="stable")[:, :k]
    return np.asarray(colors)[order].mean(axis=1)


def ball_query_bruteforce(
    centers: np.ndarray, colors: np.ndarray, queries: np.ndarray, radius: float, eps: float = WAAN_EPSILON
) -> np.ndarray:
    """O(N_q * N) reference for :func:`upsample_waan`."""
    centers, queries = np.asarray(centers, dtype=np.float64), np.asarray(queries, dtype=np.float64)
    colors = np.asarray(colors, dtype=np.float64)
    d2 = _pairwise_squared(centers, queries)
    out = np.empty((len(queries), 3))
    for q in range(len(queries)):
        inside = np.flatnonzero(d2[q] <= radius * radius)
        if inside.size == 0:
            out[q] = colors[np.argsort(d2[q], kind="stable")[0]]
            continue
        w = 1.0 / (eps + np.sqrt(d2[q, inside]))
        out[q] = (w[:, None] * colors[inside]).sum(axis=0) / w.sum()
    return np.clip(out, 0.0, 1.0)
