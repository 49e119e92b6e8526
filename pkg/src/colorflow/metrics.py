"""Color quality metrics on the [0, 1] scale."""

from __future__ import annotations

import math

import numpy as np

from colorflow.errors import ShapeError


def _check_pair(pred: np.ndarray, gt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction shape {pred.shape} does not match ground truth {gt.shape}")
    if pred.ndim != 2 or pred.shape[1] != 3 or pred.shape[0] < 1:
        raise ShapeError(f"colors must have shape (N, 3) with N >= 1, got {pred.shape}")
    return pred, gt


def channel_mse(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """Mean squared error per RGB channel, shape (3,)."""
    pred, gt = _check_pair(pred, gt)
    diff = pred - gt
    return np.mean(diff * diff, axis=0)


def psnr(pred: np.ndarray, gt: np.ndarray) -> float:
    """10 * log10(1 / MSE) over all points and channels; ``inf`` when MSE is 0."""
    pred, gt = _check_pair(pred, gt)
    diff = pred - gt
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)
