"""Minimal reverse-mode autodiff used to train the upsampling network."""

from colorflow.autograd.checkpoint import FORMAT_VERSION, load_checkpoint, save_checkpoint
from colorflow.autograd.init import kaiming_uniform, make_rng
from colorflow.autograd.optim import Adam, AdamState, adam_step
from colorflow.autograd.tensor import (
    Tensor,
    add,
    add_bias,
    batchnorm,
    concat_cols,
    gather_rows,
    gradcheck,
    matmul,
    mse_loss,
    parameter,
    relu,
    resolve_dtype,
    scatter_add_rows,
)

__all__ = [
    # Tensor
    "Tensor",
    "parameter",
    "resolve_dtype",
    "gradcheck",
    # Ops
    "add",
    "add_bias",
    "batchnorm",
    "concat_cols",
    "gather_rows",
    "matmul",
    "mse_loss",
    "relu",
    "scatter_add_rows",
    # Optimizer
    "Adam",
    "AdamState",
    "adam_step",
    # Init
    "kaiming_uniform",
    "make_rng",
    # Checkpoint
    "FORMAT_VERSION",
    "load_checkpoint",
    "save_checkpoint",
]
