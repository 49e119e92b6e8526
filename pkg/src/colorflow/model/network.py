"""Forward pass of the color upsampling network.

LR colors go through the sparse feature extractor, each HR point takes its LR
point's feature plus its normalized offset inside the voxel, a small MLP turns
that into a color residual, and the residual is added to the devoxelized
coarse color.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from colorflow.autograd.tensor import Tensor, add, add_bias, concat_cols, gather_rows, matmul, relu
from colorflow.errors import AttributeMissingError, ShapeError
from colorflow.geometry import LrHrMapping, PointCloud, compute_offsets, devoxelize, recover_mapping
from colorflow.model.params import LinearParams, ModelParams
from colorflow.sparse.conv import feature_extractor
from colorflow.sparse.kernel_map import KernelMap, build_kernel_map
from colorflow.sparse.tensor import SparseTensor


def encode_offsets(offsets: np.ndarray, levels: int) -> np.ndarray:
    """Offsets followed by sin/cos of ``2^l * pi * offset`` for ``l < levels``."""
    offsets = np.asarray(offsets, dtype=np.float64)
    if levels <= 0:
        return offsets
    bands = [offsets]
    for level in range(levels):
        scaled = (2.0**level) * np.pi * offsets
        bands.extend([np.sin(scaled), np.cos(scaled)])
    return np.concatenate(bands, axis=1)


def expand_features(
    lr_features: Tensor,
    mapping: LrHrMapping,
    offsets: np.ndarray,
    positional_encoding: int = 0,
) -> Tensor:
    """Row j = [lr_features[map[j]], offsets[j]] (offsets optionally encoded).

    Differentiable with respect to ``lr_features``.
    """
    offsets = np.asarray(offsets)
    if offsets.shape != (mapping.n_hr, 3):
        raise ShapeError(f"offsets must have shape ({mapping.n_hr}, 3), got {offsets.shape}")
    if lr_features.data.ndim != 2 or lr_features.shape[0] != mapping.n_lr:
        raise ShapeError(f"expected {mapping.n_lr} LR feature rows, got shape {lr_features.shape}")
    gathered = gather_rows(lr_features, mapping.map)
    query = Tensor(encode_offsets(offsets, positional_encoding), dtype=lr_features.dtype)
    return concat_cols([gathered, query])


def predict_residuals(hr_features: Tensor, mlp: Sequence[LinearParams]) -> Tensor:
    """Affine layers with ReLU between them and no activation after the last."""
    if hr_features.data.ndim != 2 or hr_features.shape[1] != mlp[0].weight.shape[0]:
        raise ShapeError(f"MLP expects width {mlp[0].weight.shape[0]}, got shape {hr_features.shape}")
    h = hr_features
    for i, layer in enumerate(mlp):
        h = add_bias(matmul(h, layer.weight), layer.bias)
        if i < len(mlp) - 1:
            h = relu(h)
    return h


@dataclass(frozen=True, eq=False)
class UpsampleBatch:
    """One or more LR/HR pairs packed for a single network pass.

    ``mapping`` indexes the concatenated LR rows; ``hr_bounds[n]:hr_bounds[n+1]``
    are the HR rows of object ``n``.
    """

    lr: SparseTensor
    kmap: KernelMap
    mapping: LrHrMapping
    offsets: np.ndarray
    coarse: np.ndarray
    hr_bounds: np.ndarray

    def split(self, rows: np.ndarray) -> list[np.ndarray]:
        return [rows[a:b] for a, b in zip(self.hr_bounds[:-1], self.hr_bounds[1:], strict=True)]


def assemble_batch(
    items: Sequence[tuple[PointCloud, PointCloud, LrHrMapping]],
    kernel_size: int = 3,
    dtype: np.dtype | str = "float32",
) -> UpsampleBatch:
    """Pack (lr, hr, mapping) triples; LR cloud ``n`` gets batch index ``n``."""
    if not items:
        raise ShapeError("cannot assemble an empty batch")
    ratios = {mapping.voxel_size for _, _, mapping in items}
    if len(ratios) != 1:
        raise ShapeError(f"all objects in a batch must share one ratio, got {sorted(ratios)}")
    lr_clouds = []
    maps, offsets, coarse = [], [], []
    lr_start = 0
    for lr, hr, mapping in items:
        if lr.colors is None:
            raise AttributeMissingError("LR cloud has no colors")
        lr_clouds.append(lr)
        maps.append(mapping.map + lr_start)
        offsets.append(compute_offsets(hr, lr, mapping))
        coarse.append(devoxelize(lr.colors, mapping))
        lr_start += len(lr)
    st = SparseTensor.from_clouds(lr_clouds, dtype=dtype)
    hr_sizes = [mapping.n_hr for _, _, mapping in items]
    return UpsampleBatch(
        lr=st,
        kmap=build_kernel_map(st, kernel_size),
        mapping=LrHrMapping(map=np.concatenate(maps), voxel_size=ratios.pop(), n_lr=lr_start),
        offsets=np.concatenate(offsets),
        coarse=np.concatenate(coarse),
        hr_bounds=np.cumsum([0, *hr_sizes]),
    )


def predict_batch(
    batch: UpsampleBatch,
    params: ModelParams,
    training: bool = False,
    update_running: bool = True,
) -> tuple[Tensor, Tensor]:
    """Unclamped HR colors and the residual that produced them."""
    lr_features = feature_extractor(
        batch.lr, params.extractor, batch.kmap, training=training, update_running=update_running
    ).features
    hr_features = expand_features(lr_features, batch.mapping, batch.offsets, params.positional_encoding)
    residual = predict_residuals(hr_features, params.mlp)
    return add(Tensor(batch.coarse, dtype=residual.dtype), residual), residual


def predict(lr: PointCloud, hr: PointCloud, params: ModelParams, v: int | None = None) -> Tensor:
    """Unclamped HR colors for one object (eval mode)."""
    v = params.v_train if v is None else v
    batch = assemble_batch([(lr, hr, recover_mapping(lr, hr, v))], params.kernel_size, params.dtype)
    return predict_batch(batch, params)[0]


def _compose(batch: UpsampleBatch, residual: Tensor) -> np.ndarray:
    # coarse path stays in float64 so a zero residual reproduces devoxelization exactly
    return np.clip(batch.coarse + residual.data.astype(np.float64), 0.0, 1.0)


def forward(
    lr: PointCloud,
    hr: PointCloud,
    params: ModelParams,
    v: int | None = None,
    mapping: LrHrMapping | None = None,
) -> np.ndarray:
    """Predict HR colors in [0, 1] for the coordinates of ``hr``.

    Args:
        lr: LR cloud with colors
        hr: HR coordinates (colors ignored)
        params: trained network
        v: upsampling ratio; defaults to the training ratio
        mapping: precomputed LR->HR mapping, recovered from coordinates when omitted

    Returns:
        (N_h, 3) float64 colors
    """
    v = params.v_train if v is None else v
    if mapping is None:
        mapping = recover_mapping(lr, hr, v)
    batch = assemble_batch([(lr, hr, mapping)], params.kernel_size, params.dtype)
    _, residual = predict_batch(batch, params)
    return _compose(batch, residual)


def forward_batch(
    pairs: Sequence[tuple[PointCloud, PointCloud]],
    params: ModelParams,
    v: int | None = None,
) -> list[np.ndarray]:
    """Run several objects through one sparse tensor; one color array per object."""
    v = params.v_train if v is None else v
    items = [(lr, hr, recover_mapping(lr, hr, v)) for lr, hr in pairs]
    batch = assemble_batch(items, params.kernel_size, params.dtype)
    _, residual = predict_batch(batch, params)
    return batch.split(_compose(batch, residual))
