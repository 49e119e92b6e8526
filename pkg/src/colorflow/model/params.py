"""Training configuration and the trainable state of the upsampling network."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from colorflow.autograd.checkpoint import load_checkpoint, save_checkpoint
from colorflow.autograd.init import kaiming_uniform, make_rng, zeros
from colorflow.autograd.tensor import DTYPES, Tensor, parameter, resolve_dtype
from colorflow.errors import CheckpointError, ConfigError, InvalidRatioError
from colorflow.sparse.conv import DEFAULT_BLOCKS, DEFAULT_KERNEL_SIZE, FeatureExtractorParams

logger = logging.getLogger(__name__)

# (channels K, batch size B) per upsampling ratio
RATIO_PRESETS: dict[int, tuple[int, int]] = {
    2: (32, 16),
    5: (64, 8),
    10: (64, 4),
}


@dataclass
class TrainConfig:
    """Hyper-parameters of one training run.

    Attributes:
        learning_rate: initial Adam learning rate
        decay_factor: learning rate multiplier applied every ``decay_period`` epochs
        decay_period: epochs between learning rate decays
        epochs: number of training epochs
        weight_decay: L2 coefficient added to gradients
        batch_size: objects per optimization step
        channels: feature channels K of the extractor
        ratio: upsampling ratio v used to build training pairs
        seed: seed for weight init and data order
        precision: "float32" or "float64"
        blocks: residual blocks in the extractor
        kernel_size: sparse convolution kernel size
        positional_encoding: sine/cosine frequency bands appended to offsets (0 = off)
        zero_init_output: zero the last MLP layer so training starts at devoxelization
        keep_best: return the epoch with the best validation PSNR
    """

    learning_rate: float = 1e-3
    decay_factor: float = 0.1
    decay_period: int = 10
    epochs: int = 25
    weight_decay: float = 1e-4
    batch_size: int = 16
    channels: int = 32
    ratio: int = 2
    seed: int = 0
    precision: str = "float32"
    blocks: int = DEFAULT_BLOCKS
    kernel_size: int = DEFAULT_KERNEL_SIZE
    positional_encoding: int = 0
    zero_init_output: bool = False
    keep_best: bool = True

    def __post_init__(self) -> None:
        self.validate()

    @classmethod
    def for_ratio(cls, ratio: int, **overrides: Any) -> TrainConfig:
        """Defaults for an upsampling ratio (K and B follow the per-ratio presets)."""
        eligible = [k for k in RATIO_PRESETS if k <= ratio] or [min(RATIO_PRESETS)]
        channels, batch_size = RATIO_PRESETS[max(eligible)]
        values = {"ratio": ratio, "channels": channels, "batch_size": batch_size}
        values.update(overrides)
        return cls.from_dict(values)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> TrainConfig:
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown training option(s): {', '.join(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def validate(self) -> None:
        if isinstance(self.ratio, bool) or int(self.ratio) != self.ratio or self.ratio < 2:
            raise InvalidRatioError(f"ratio must be an integer >= 2, got {self.ratio!r}")
        positive = {
            "learning_rate": self.learning_rate,
            "decay_factor": self.decay_factor,
            "decay_period": self.decay_period,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "channels": self.channels,
        }
        for name, value in positive.items():
            if value <= 0:
                raise ConfigError(f"{name} must be positive, got {value!r}")
        for name in ("weight_decay", "blocks", "positional_encoding"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative, got {getattr(self, name)!r}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ConfigError(f"kernel_size must be a positive odd integer, got {self.kernel_size}")
        if self.precision not in DTYPES:
            raise ConfigError(f"precision must be one of {sorted(DTYPES)}, got {self.precision!r}")


def mlp_widths(channels: int, positional_encoding: int = 0) -> list[int]:
    """Layer widths of the color MLP: input, two halvings, then 3."""
    width = channels + 3 + 6 * positional_encoding
    return [width, max(width // 2, 1), max(width // 4, 1), 3]


@dataclass
class LinearParams:
    weight: Tensor
    bias: Tensor

    @classmethod
    def init(cls, rng: np.random.Generator, fan_in: int, fan_out: int, dtype: np.dtype) -> LinearParams:
        return cls(
            weight=parameter(kaiming_uniform(rng, (fan_in, fan_out), fan_in, dtype)),
            bias=parameter(zeros((fan_out,), dtype)),
        )

    def parameters(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.weight": self.weight, f"{prefix}.bias": self.bias}


@dataclass
class ModelParams:
    """Everything needed to run the network: extractor, color MLP and metadata."""

    extractor: FeatureExtractorParams
    mlp: list[LinearParams]
    v_train: int
    positional_encoding: int = 0
    metadata: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def init(
        cls,
        channels: int,
        v_train: int,
        seed: int | np.random.SeedSequence | None = 0,
        precision: str = "float32",
        blocks: int = DEFAULT_BLOCKS,
        kernel_size: int = DEFAULT_KERNEL_SIZE,
        positional_encoding: int = 0,
        zero_init_output: bool = False,
    ) -> ModelParams:
        dtype = resolve_dtype(precision)
        rng = make_rng(seed)
        extractor = FeatureExtractorParams.init(rng, channels, blocks=blocks, kernel_size=kernel_size, dtype=dtype)
        widths = mlp_widths(channels, positional_encoding)
        mlp = [LinearParams.init(rng, a, b, dtype) for a, b in zip(widths[:-1], widths[1:], strict=True)]
        params = cls(extractor=extractor, mlp=mlp, v_train=int(v_train), positional_encoding=positional_encoding)
        if zero_init_output:
            params.zero_output_layer()
        return params

    @classmethod
    def from_config(cls, config: TrainConfig, seed: int | np.random.SeedSequence | None = None) -> ModelParams:
        return cls.init(
            config.channels,
            config.ratio,
            seed=config.seed if seed is None else seed,
            precision=config.precision,
            blocks=config.blocks,
            kernel_size=config.kernel_size,
            positional_encoding=config.positional_encoding,
            zero_init_output=config.zero_init_output,
        )

    @property
    def channels(self) -> int:
        return self.extractor.channels

    @property
    def kernel_size(self) -> int:
        return self.extractor.kernel_size

    @property
    def dtype(self) -> np.dtype:
        return self.mlp[0].weight.dtype

    @property
    def precision(self) -> str:
        return self.dtype.name

    def zero_output_layer(self) -> None:
        last = self.mlp[-1]
        last.weight.data[...] = 0
        last.bias.data[...] = 0

    def parameters(self) -> dict[str, Tensor]:
        params = self.extractor.parameters("extractor")
        for i, layer in enumerate(self.mlp):
            params.update(layer.parameters(f"mlp.{i}"))
        return params

    def buffers(self) -> dict[str, np.ndarray]:
        return self.extractor.buffers("extractor")

    def num_parameters(self) -> int:
        return int(sum(p.data.size for p in self.parameters().values()))

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Copies of every parameter and buffer, keyed by name."""
        arrays = {name: p.data.copy() for name, p in self.parameters().items()}
        arrays.update({name: b.copy() for name, b in self.buffers().items()})
        return arrays

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        """Overwrite parameters and buffers in place.

        Raises:
            CheckpointError: a name is missing or a shape differs
        """
        params, buffers = self.parameters(), self.buffers()
        expected = set(params) | set(buffers)
        missing = sorted(expected - set(arrays))
        if missing:
            raise CheckpointError(f"checkpoint is missing array(s): {', '.join(missing[:5])}")
        for name, target in [*((n, p.data) for n, p in params.items()), *buffers.items()]:
            source = arrays[name]
            if source.shape != target.shape:
                raise CheckpointError(f"array {name} has shape {source.shape}, expected {target.shape}")
            target[...] = source

    def save(self, path: str | Path, extra: dict[str, Any] | None = None) -> int:
        """Write a checkpoint and return its size in bytes."""
        meta = {
            "model": {
                "channels": self.channels,
                "blocks": len(self.extractor.blocks),
                "kernel_size": self.kernel_size,
                "v_train": self.v_train,
                "positional_encoding": self.positional_encoding,
                "precision": self.precision,
                "num_parameters": self.num_parameters(),
            },
            **self.metadata,
            **(extra or {}),
        }
        size = save_checkpoint(path, self.state_arrays(), meta)
        logger.info("saved checkpoint %s (%d bytes, %d parameters)", path, size, self.num_parameters())
        return size

    @classmethod
    def load(cls, path: str | Path) -> ModelParams:
        arrays, meta = load_checkpoint(path)
        model = meta.get("model")
        if not isinstance(model, dict):
            raise CheckpointError(f"checkpoint {path} has no model section")
        try:
            params = cls.init(
                int(model["channels"]),
                int(model["v_train"]),
                seed=0,
                precision=str(model["precision"]),
                blocks=int(model["blocks"]),
                kernel_size=int(model["kernel_size"]),
                positional_encoding=int(model.get("positional_encoding", 0)),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise CheckpointError(f"checkpoint {path} has invalid model metadata: {e}") from None
        params.load_state(arrays)
        params.metadata = {k: v for k, v in meta.items() if k not in ("model", "arrays", "format_version")}
        return params
