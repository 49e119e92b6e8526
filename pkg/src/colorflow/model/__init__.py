"""The color upsampling network: parameters, forward pass and training."""

from colorflow.model.network import (
    UpsampleBatch,
    assemble_batch,
    encode_offsets,
    expand_features,
    forward,
    forward_batch,
    predict,
    predict_batch,
    predict_residuals,
)
from colorflow.model.params import RATIO_PRESETS, LinearParams, ModelParams, TrainConfig, mlp_widths
from colorflow.model.train import EpochRecord, TrainingResult, train, validation_psnr

__all__ = [
    # Parameters
    "LinearParams",
    "ModelParams",
    "RATIO_PRESETS",
    "TrainConfig",
    "mlp_widths",
    # Network
    "UpsampleBatch",
    "assemble_batch",
    "encode_offsets",
    "expand_features",
    "forward",
    "forward_batch",
    "predict",
    "predict_batch",
    "predict_residuals",
    # Training
    "EpochRecord",
    "TrainingResult",
    "train",
    "validation_psnr",
]
