"""PSNR evaluation of upsampling methods over a dataset split.

Reports hold one row per object and serialize to the CSV schema
``method, object_id, v_train, v_test, psnr_db, wall_ms, n_lr, n_hr`` plus a
JSON summary carrying the run configuration.
"""

from __future__ import annotations

import json
import logging
import math
import time
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from threadpoolctl import threadpool_limits

from colorflow.baselines import METHODS as BASELINE_METHODS
from colorflow.baselines import BaselineSpec, upsample
from colorflow.dataset import DatasetManifest, TaskPair, build_pairs, load_object
from colorflow.errors import AttributeMissingError, CheckpointError, ConfigError
from colorflow.geometry import PointCloud, validate_ratio
from colorflow.metrics import channel_mse, psnr
from colorflow.model.network import forward
from colorflow.model.params import ModelParams

logger = logging.getLogger(__name__)

METHODS = (*BASELINE_METHODS, "cunet")
CSV_COLUMNS = ["method", "object_id", "v_train", "v_test", "psnr_db", "wall_ms", "n_lr", "n_hr"]

Runner = Callable[[TaskPair], np.ndarray]

__all__ = [
    "CSV_COLUMNS",
    "METHODS",
    "EvalReport",
    "ObjectResult",
    "channel_mse",
    "evaluate",
    "make_runner",
    "psnr",
    "write_report_csv",
    "write_summary_json",
]


def json_float(value: float | None) -> float | str | None:
    """Floats for JSON; infinities become strings."""
    if value is None or math.isfinite(value):
        return value
    return "inf" if value > 0 else "-inf"


@dataclass
class ObjectResult:
    object_id: str
    psnr_db: float
    mse: np.ndarray
    wall_ms: float
    n_lr: int
    n_hr: int


@dataclass
class EvalReport:
    """Results of one method at one test ratio."""

    method: str
    v_test: int
    v_train: int | None = None
    objects: list[ObjectResult] = field(default_factory=list)
    threads: int = 1
    config: dict[str, Any] = field(default_factory=dict)

    @property
    def mean_psnr(self) -> float:
        if not self.objects:
            return math.nan
        return float(np.mean([o.psnr_db for o in self.objects]))

    @property
    def channel_mse(self) -> np.ndarray:
        """Per-channel MSE pooled over all HR points."""
        if not self.objects:
            return np.full(3, math.nan)
        weights = np.array([o.n_hr for o in self.objects], dtype=np.float64)
        return np.average(np.stack([o.mse for o in self.objects]), axis=0, weights=weights)

    @property
    def timings(self) -> list[tuple[int, float]]:
        """(N_h, seconds) per object."""
        return [(o.n_hr, o.wall_ms / 1000.0) for o in self.objects]

    def to_rows(self) -> list[dict[str, Any]]:
        return [
            {
                "method": self.method,
                "object_id": o.object_id,
                "v_train": self.v_train if self.v_train is not None else "",
                "v_test": self.v_test,
                "psnr_db": o.psnr_db,
                "wall_ms": o.wall_ms,
                "n_lr": o.n_lr,
                "n_hr": o.n_hr,
            }
            for o in self.objects
        ]

    def summary(self) -> dict[str, Any]:
        return {
            "method": self.method,
            "v_train": self.v_train,
            "v_test": self.v_test,
            "objects": len(self.objects),
            "mean_psnr_db": json_float(self.mean_psnr),
            "channel_mse": [float(x) for x in self.channel_mse],
            "threads": self.threads,
        }


def make_runner(
    method: str,
    v: int,
    params: ModelParams | None = None,
    baseline: BaselineSpec | None = None,
) -> Runner:
    """Callable mapping a task pair to predicted HR colors."""
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}, expected one of {', '.join(METHODS)}")
    if method == "cunet":
        if params is None:
            raise CheckpointError("method cunet needs a checkpoint")

        def run_network(pair: TaskPair) -> np.ndarray:
            return forward(pair.lr, pair.hr, params, v=v, mapping=pair.mapping)

        return run_network

    spec = baseline if baseline is not None and baseline.method == method else BaselineSpec(method=method)

    def run_baseline(pair: TaskPair) -> np.ndarray:
        return upsample(spec, pair.lr, pair.hr, v)

    return run_baseline


def _clouds(dataset: DatasetManifest | Sequence[tuple[str, PointCloud]], split: str) -> list[tuple[str, PointCloud]]:
    if isinstance(dataset, DatasetManifest):
        return [(entry.object_id, load_object(entry, dataset)) for entry in dataset.split(split)]
    return list(dataset)


def evaluate(
    method: str,
    dataset: DatasetManifest | Sequence[tuple[str, PointCloud]],
    v: int,
    params: ModelParams | None = None,
    threads: int = 1,
    split: str = "test",
    baseline: BaselineSpec | None = None,
    on_object: Callable[[ObjectResult], None] | None = None,
) -> EvalReport:
    """Upsample every object of a split and score it against its ground truth.

    Args:
        method: devox, knn, waan or cunet
        dataset: manifest (objects of ``split`` are used) or (object_id, HR cloud) pairs
        v: test ratio; may differ from the checkpoint's training ratio
        params: network for cunet
        threads: worker threads over objects; native BLAS/OpenMP pools are pinned to one thread per worker
        split: manifest split to evaluate
        baseline: knn/waan options
        on_object: called with each finished object, in dataset order

    Returns:
        EvalReport with one result per object
    """
    v = validate_ratio(v)
    runner = make_runner(method, v, params, baseline)
    v_train = params.v_train if method == "cunet" and params is not None else None
    if v_train is not None and v_train != v:
        logger.warning("checkpoint was trained at ratio %d, evaluating at ratio %d", v_train, v)

    clouds = _clouds(dataset, split)
    for object_id, hr in clouds:
        if hr.colors is None:
            raise AttributeMissingError(f"object {object_id} has no ground-truth colors")

    def score(item: tuple[str, PointCloud]) -> ObjectResult:
        object_id, hr = item
        pair = build_pairs(hr, v, object_id)
        start = time.perf_counter()
        pred = runner(pair)
        wall_ms = (time.perf_counter() - start) * 1000.0
        return ObjectResult(
            object_id=object_id,
            psnr_db=psnr(pred, hr.colors),
            mse=channel_mse(pred, hr.colors),
            wall_ms=wall_ms,
            n_lr=pair.n_lr,
            n_hr=pair.n_hr,
        )

    report = EvalReport(method=method, v_test=v, v_train=v_train, threads=threads)
    with threadpool_limits(limits=1), ThreadPoolExecutor(max_workers=max(threads, 1)) as executor:
        for result in executor.map(score, clouds):
            report.objects.append(result)
            logger.debug("%s %s: %.3f dB", method, result.object_id, result.psnr_db)
            if on_object is not None:
                on_object(result)
    logger.info("%s at ratio %d: mean PSNR %.3f dB over %d object(s)", method, v, report.mean_psnr, len(clouds))
    return report


def write_report_csv(reports: Sequence[EvalReport], path: str | Path) -> None:
    rows = [row for report in reports for row in report.to_rows()]
    frame = pd.DataFrame(rows, columns=CSV_COLUMNS)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)


def write_summary_json(reports: Sequence[EvalReport], path: str | Path, config: dict[str, Any] | None = None) -> None:
    """Per-report summaries plus the effective configuration for provenance."""
    data = {"config": config or {}, "reports": [report.summary() for report in reports]}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
