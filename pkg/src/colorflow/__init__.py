"""Point cloud color upsampling.

Predicts the colors of a dense (high-resolution) voxelized point cloud from a
sparse colored (low-resolution) one. Includes a sparse-convolution color
network trained with a small reverse-mode autodiff engine, the classical
devoxelization / KNN / weighted-average baselines, PLY I/O, a synthetic
dataset generator and PSNR / latency evaluation.
"""

try:
    from importlib.metadata import version

    __version__ = version("colorflow")
except Exception:
    __version__ = "0.0.0.dev"

from colorflow.baselines import (
    BaselineSpec,
    knn_bruteforce,
    nearest_indices,
    upsample,
    upsample_devox,
    upsample_knn,
    upsample_waan,
)
from colorflow.bench import LinearFit, ScalingReport, bench_scaling, fit_linear, synthetic_case
from colorflow.dataset import (
    DatasetManifest,
    ObjectEntry,
    TaskPair,
    build_pairs,
    generate_dataset,
    load_object,
    load_pairs,
)
from colorflow.errors import (
    AttributeMissingError,
    CheckpointError,
    ColorflowError,
    ConfigError,
    DatasetError,
    DegenerateBatchError,
    DegenerateGridError,
    DuplicateCoordinateError,
    EmptyCloudError,
    InsufficientDataError,
    InvalidKernelError,
    InvalidRatioError,
    MappingError,
    PlyFormatError,
    RecipeError,
    ShapeError,
)
from colorflow.evaluation import EvalReport, ObjectResult, evaluate, make_runner
from colorflow.geometry import (
    LrHrMapping,
    PointCloud,
    compute_offsets,
    devoxelize,
    recover_mapping,
    validate_ratio,
    voxelize,
)
from colorflow.metrics import channel_mse, psnr
from colorflow.model import ModelParams, TrainConfig, forward, forward_batch, train
from colorflow.ply import read_ply, write_ply
from colorflow.synthetic import SyntheticRecipe, generate_synthetic

__all__ = [
    "__version__",
    # Geometry
    "PointCloud",
    "LrHrMapping",
    "validate_ratio",
    "voxelize",
    "recover_mapping",
    "compute_offsets",
    "devoxelize",
    # Model
    "ModelParams",
    "TrainConfig",
    "forward",
    "forward_batch",
    "train",
    # Baselines
    "BaselineSpec",
    "upsample",
    "upsample_devox",
    "upsample_knn",
    "upsample_waan",
    "nearest_indices",
    "knn_bruteforce",
    # Data
    "read_ply",
    "write_ply",
    "SyntheticRecipe",
    "generate_synthetic",
    "DatasetManifest",
    "ObjectEntry",
    "TaskPair",
    "build_pairs",
    "generate_dataset",
    "load_object",
    "load_pairs",
    # Evaluation
    "channel_mse",
    "psnr",
    "EvalReport",
    "ObjectResult",
    "evaluate",
    "make_runner",
    "LinearFit",
    "ScalingReport",
    "bench_scaling",
    "fit_linear",
    "synthetic_case",
    # Errors
    "ColorflowError",
    "AttributeMissingError",
    "CheckpointError",
    "ConfigError",
    "DatasetError",
    "DegenerateBatchError",
    "DegenerateGridError",
    "DuplicateCoordinateError",
    "EmptyCloudError",
    "InsufficientDataError",
    "InvalidKernelError",
    "InvalidRatioError",
    "MappingError",
    "PlyFormatError",
    "RecipeError",
    "ShapeError",
]
