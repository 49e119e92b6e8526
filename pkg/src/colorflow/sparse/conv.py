"""Submanifold sparse convolution and the residual feature extractor.

Convolution is computed per kernel offset as gather -> matmul -> scatter over
the kernel map, so cost is linear in the number of neighbor pairs. Output
coordinates always equal input coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from colorflow.autograd.init import kaiming_uniform
from colorflow.autograd.tensor import Tensor, add, batchnorm, parameter, relu
from colorflow.errors import ShapeError
from colorflow.sparse.kernel_map import KernelMap, build_kernel_map
from colorflow.sparse.tensor import SparseTensor

DEFAULT_BLOCKS = 4
DEFAULT_KERNEL_SIZE = 3


@dataclass
class ConvParams:
    """Kernel weights of shape (k^3, C_in, C_out); no bias (batch norm follows)."""

    weight: Tensor

    @classmethod
    def init(
        cls, rng: np.random.Generator, in_channels: int, out_channels: int, kernel_size: int, dtype: np.dtype
    ) -> ConvParams:
        volume = kernel_size**3
        shape = (volume, in_channels, out_channels)
        return cls(weight=parameter(kaiming_uniform(rng, shape, volume * in_channels, dtype)))

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]

    @property
    def out_channels(self) -> int:
        return self.weight.shape[2]

    def parameters(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.weight": self.weight}


@dataclass
class BatchNormParams:
    gamma: Tensor
    beta: Tensor
    running_mean: np.ndarray
    running_var: np.ndarray

    @classmethod
    def init(cls, channels: int, dtype: np.dtype) -> BatchNormParams:
        return cls(
            gamma=parameter(np.ones(channels, dtype=dtype)),
            beta=parameter(np.zeros(channels, dtype=dtype)),
            running_mean=np.zeros(channels, dtype=np.float64),
            running_var=np.ones(channels, dtype=np.float64),
        )

    def parameters(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.gamma": self.gamma, f"{prefix}.beta": self.beta}

    def buffers(self, prefix: str) -> dict[str, np.ndarray]:
        return {f"{prefix}.running_mean": self.running_mean, f"{prefix}.running_var": self.running_var}


@dataclass
class ResidualBlockParams:
    conv1: ConvParams
    bn1: BatchNormParams
    conv2: ConvParams
    bn2: BatchNormParams

    @classmethod
    def init(cls, rng: np.random.Generator, channels: int, kernel_size: int, dtype: np.dtype) -> ResidualBlockParams:
        return cls(
            conv1=ConvParams.init(rng, channels, channels, kernel_size, dtype),
            bn1=BatchNormParams.init(channels, dtype),
            conv2=ConvParams.init(rng, channels, channels, kernel_size, dtype),
            bn2=BatchNormParams.init(channels, dtype),
        )

    def parameters(self, prefix: str) -> dict[str, Tensor]:
        return {
            **self.conv1.parameters(f"{prefix}.conv1"),
            **self.bn1.parameters(f"{prefix}.bn1"),
            **self.conv2.parameters(f"{prefix}.conv2"),
            **self.bn2.parameters(f"{prefix}.bn2"),
        }

    def buffers(self, prefix: str) -> dict[str, np.ndarray]:
        return {**self.bn1.buffers(f"{prefix}.bn1"), **self.bn2.buffers(f"{prefix}.bn2")}


@dataclass
class FeatureExtractorParams:
    """Stem (conv 3->K, BN, ReLU) followed by residual blocks at K channels."""

    stem_conv: ConvParams
    stem_bn: BatchNormParams
    blocks: list[ResidualBlockParams] = field(default_factory=list)

    @classmethod
    def init(
        cls,
        rng: np.random.Generator,
        channels: int,
        blocks: int = DEFAULT_BLOCKS,
        kernel_size: int = DEFAULT_KERNEL_SIZE,
        in_channels: int = 3,
        dtype: np.dtype = np.dtype(np.float32),
    ) -> FeatureExtractorParams:
        return cls(
            stem_conv=ConvParams.init(rng, in_channels, channels, kernel_size, dtype),
            stem_bn=BatchNormParams.init(channels, dtype),
            blocks=[ResidualBlockParams.init(rng, channels, kernel_size, dtype) for _ in range(blocks)],
        )

    @property
    def channels(self) -> int:
        return self.stem_conv.out_channels

    @property
    def kernel_size(self) -> int:
        return round(self.stem_conv.weight.shape[0] ** (1 / 3))

    def parameters(self, prefix: str = "extractor") -> dict[str, Tensor]:
        params = {**self.stem_conv.parameters(f"{prefix}.stem.conv"), **self.stem_bn.parameters(f"{prefix}.stem.bn")}
        for i, block in enumerate(self.blocks):
            params.update(block.parameters(f"{prefix}.blocks.{i}"))
        return params

    def buffers(self, prefix: str = "extractor") -> dict[str, np.ndarray]:
        buffers = self.stem_bn.buffers(f"{prefix}.stem.bn")
        for i, block in enumerate(self.blocks):
            buffers.update(block.buffers(f"{prefix}.blocks.{i}"))
        return buffers


def conv_features(features: Tensor, weight: Tensor, kmap: KernelMap) -> Tensor:
    """out[o] = sum over offsets d and pairs (i, o) of features[i] @ weight[d]."""
    if weight.data.ndim != 3 or weight.shape[0] != kmap.volume:
        raise ShapeError(f"weight must have shape ({kmap.volume}, C_in, C_out), got {weight.shape}")
    if features.shape[1] != weight.shape[1]:
        raise ShapeError(f"feature channels {features.shape[1]} do not match kernel input channels {weight.shape[1]}")

    f, w = features.data, weight.data
    out = np.zeros((f.shape[0], w.shape[2]), dtype=f.dtype)
    for d in range(kmap.volume):
        rows_in, rows_out = kmap.pairs(d)
        if len(rows_in):
            # rows_out has no repeats within one offset, so plain fancy-index += is exact
            out[rows_out] += f[rows_in] @ w[d]

    def backward(g: np.ndarray):
        g_f = np.zeros_like(f)
        g_w = np.zeros_like(w)
        for d in range(kmap.volume):
            rows_in, rows_out = kmap.pairs(d)
            if len(rows_in):
                g_out = g[rows_out]
                g_f[rows_in] += g_out @ w[d].T
                g_w[d] = f[rows_in].T @ g_out
        return g_f, g_w

    return Tensor.from_op(out, (features, weight), backward)


def sparse_conv(st: SparseTensor, weight: Tensor, kmap: KernelMap | None = None) -> SparseTensor:
    """Submanifold convolution; coordinates are unchanged."""
    if kmap is None:
        kmap = build_kernel_map(st, round(weight.shape[0] ** (1 / 3)))
    return st.with_features(conv_features(st.features, weight, kmap))


def _bn(x: Tensor, bn: BatchNormParams, training: bool, update_running: bool) -> Tensor:
    return batchnorm(x, bn.gamma, bn.beta, bn.running_mean, bn.running_var, training, update_running=update_running)


def residual_block(
    st: SparseTensor,
    params: ResidualBlockParams,
    kmap: KernelMap | None = None,
    training: bool = False,
    update_running: bool = True,
) -> SparseTensor:
    """ReLU(BN(Conv(ReLU(BN(Conv(x))))) + x)."""
    if st.channels != params.conv1.in_channels or params.conv2.out_channels != st.channels:
        raise ShapeError(f"block expects {params.conv1.in_channels} channels, got {st.channels}")
    if kmap is None:
        kmap = build_kernel_map(st, round(params.conv1.weight.shape[0] ** (1 / 3)))
    h = relu(_bn(conv_features(st.features, params.conv1.weight, kmap), params.bn1, training, update_running))
    h = _bn(conv_features(h, params.conv2.weight, kmap), params.bn2, training, update_running)
    return st.with_features(relu(add(h, st.features)))


def feature_extractor(
    st: SparseTensor,
    params: FeatureExtractorParams,
    kmap: KernelMap | None = None,
    training: bool = False,
    update_running: bool = True,
) -> SparseTensor:
    """Lift colors (C=3) to K-channel features at the same coordinates.

    The kernel map is built once and shared by every layer.
    """
    if st.channels != params.stem_conv.in_channels:
        raise ShapeError(f"extractor expects {params.stem_conv.in_channels} input channels, got {st.channels}")
    if kmap is None:
        kmap = build_kernel_map(st, params.kernel_size)
    h = conv_features(st.features, params.stem_conv.weight, kmap)
    out = st.with_features(relu(_bn(h, params.stem_bn, training, update_running)))
    for block in params.blocks:
        out = residual_block(out, block, kmap, training=training, update_running=update_running)
    return out
