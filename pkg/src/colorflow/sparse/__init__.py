"""Hash-indexed sparse tensors and submanifold sparse convolution."""

from colorflow.sparse.conv import (
    BatchNormParams,
    ConvParams,
    FeatureExtractorParams,
    ResidualBlockParams,
    conv_features,
    feature_extractor,
    residual_block,
    sparse_conv,
)
from colorflow.sparse.hashmap import CoordinateHashMap, build_index
from colorflow.sparse.kernel_map import KernelMap, build_kernel_map, kernel_offsets
from colorflow.sparse.tensor import SparseTensor

__all__ = [
    # Index
    "CoordinateHashMap",
    "build_index",
    # Tensors
    "SparseTensor",
    "KernelMap",
    "build_kernel_map",
    "kernel_offsets",
    # Layers
    "BatchNormParams",
    "ConvParams",
    "FeatureExtractorParams",
    "ResidualBlockParams",
    "conv_features",
    "feature_extractor",
    "residual_block",
    "sparse_conv",
]
