"""Training loop: MSE on unclamped HR colors, Adam with step decay."""

from __future__ import annotations

import json
import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np

from colorflow.autograd.init import make_rng
from colorflow.autograd.optim import Adam, AdamState
from colorflow.autograd.tensor import mse_loss
from colorflow.errors import DatasetError
from colorflow.metrics import psnr
from colorflow.model.network import UpsampleBatch, assemble_batch, forward, predict_batch
from colorflow.model.params import ModelParams, TrainConfig

if TYPE_CHECKING:
    from colorflow.dataset import TaskPair

logger = logging.getLogger(__name__)


@dataclass
class EpochRecord:
    """One line of the training log. Epoch 0 is the state before any update."""

    epoch: int
    loss: float
    val_psnr: float | None
    lr: float

    def to_dict(self) -> dict[str, Any]:
        record = asdict(self)
        # JSON has no infinity
        if record["val_psnr"] is not None and math.isinf(record["val_psnr"]):
            record["val_psnr"] = "inf"
        return record


@dataclass
class TrainingResult:
    params: ModelParams
    log: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0

    def write_log(self, path: str | Path, header: dict[str, Any] | None = None) -> None:
        """Write the log as JSON lines, preceded by an optional header record."""
        lines = []
        if header is not None:
            lines.append(json.dumps({"config": header}, sort_keys=True))
        lines.extend(json.dumps(record.to_dict(), sort_keys=True) for record in self.log)
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _check_pairs(pairs: Sequence[TaskPair], ratio: int, label: str) -> None:
    for pair in pairs:
        if pair.mapping.voxel_size != ratio:
            raise DatasetError(
                f"{label} object {pair.object_id} was built at ratio {pair.mapping.voxel_size}, config ratio is {ratio}"
            )
        if pair.hr.colors is None:
            raise DatasetError(f"{label} object {pair.object_id} has no ground-truth colors")


def _batch_for(pairs: Sequence[TaskPair], params: ModelParams) -> tuple[UpsampleBatch, np.ndarray]:
    batch = assemble_batch([(p.lr, p.hr, p.mapping) for p in pairs], params.kernel_size, params.dtype)
    target = np.concatenate([p.hr.colors for p in pairs])
    return batch, target


def validation_psnr(pairs: Sequence[TaskPair], params: ModelParams) -> float:
    """Mean PSNR of the clamped network output over ``pairs``."""
    scores = [psnr(forward(p.lr, p.hr, params, mapping=p.mapping), p.hr.colors) for p in pairs]
    return float(np.mean(scores))


def train(
    pairs: Sequence[TaskPair],
    config: TrainConfig | None = None,
    val_pairs: Sequence[TaskPair] | None = None,
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> TrainingResult:
    """Fit a fresh network to LR/HR training pairs.

    Each optimization step packs ``config.batch_size`` objects into one sparse
    tensor. The loss is the MSE between unclamped predictions and ground-truth
    HR colors.

    Args:
        pairs: training pairs, all built at ``config.ratio``
        config: hyper-parameters (defaults when omitted)
        val_pairs: optional validation pairs, scored after every epoch
        on_epoch: called with each log record as it is produced

    Returns:
        TrainingResult with the final (or best validation) parameters

    Raises:
        DatasetError: empty training set or a pair built at another ratio
    """
    config = config or TrainConfig()
    if not pairs:
        raise DatasetError("training set is empty")
    _check_pairs(pairs, config.ratio, "training")
    val_pairs = list(val_pairs or [])
    _check_pairs(val_pairs, config.ratio, "validation")

    init_seed, order_seed = np.random.SeedSequence(config.seed).spawn(2)
    params = ModelParams.from_config(config, seed=init_seed)
    params.metadata = {"train_config": config.to_dict()}
    order_rng = make_rng(order_seed)
    optimizer = Adam(
        params.parameters(),
        AdamState(
            base_lr=config.learning_rate,
            weight_decay=config.weight_decay,
            decay_factor=config.decay_factor,
            decay_period=config.decay_period,
        ),
    )
    logger.info(
        "training on %d object(s), %d parameter(s), ratio %d, K=%d",
        len(pairs),
        params.num_parameters(),
        config.ratio,
        config.channels,
    )

    result = TrainingResult(params=params)
    best_score = -math.inf
    best_state: dict[str, np.ndarray] | None = None

    def record(epoch: int, loss: float, lr: float) -> None:
        nonlocal best_score, best_state
        score = validation_psnr(val_pairs, params) if val_pairs else None
        entry = EpochRecord(epoch=epoch, loss=loss, val_psnr=score, lr=lr)
        result.log.append(entry)
        logger.info("epoch %d loss %.6g val_psnr %s lr %.3g", epoch, loss, score, lr)
        if score is not None and config.keep_best and score > best_score:
            best_score = score
            best_state = params.state_arrays()
            result.best_epoch = epoch
        if on_epoch is not None:
            on_epoch(entry)

    batch_size = config.batch_size
    initial = []
    for start in range(0, len(pairs), batch_size):
        batch, target = _batch_for(pairs[start : start + batch_size], params)
        pred, _ = predict_batch(batch, params, training=True, update_running=False)
        initial.append(float(mse_loss(pred, target).item()))
    record(0, float(np.mean(initial)), optimizer.state.lr)

    for epoch in range(1, config.epochs + 1):
        order = order_rng.permutation(len(pairs))
        losses = []
        for start in range(0, len(pairs), batch_size):
            batch, target = _batch_for([pairs[i] for i in order[start : start + batch_size]], params)
            optimizer.zero_grad()
            pred, _ = predict_batch(batch, params, training=True)
            loss = mse_loss(pred, target)
            loss.backward()
            optimizer.step()
            losses.append(float(loss.item()))
        record(epoch, float(np.mean(losses)), optimizer.state.lr)
        optimizer.end_epoch()

    if best_state is not None:
        params.load_state(best_state)
    else:
        result.best_epoch = config.epochs
    return result

