"""Latency scaling benchmark.

Times a method on clouds of growing size and fits ``latency = a * N_h + b`` by
ordinary least squares. A linear method should give R^2 close to 1.
"""

from __future__ import annotations

import json
import logging
import statistics
import time
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from scipy import stats
from threadpoolctl import threadpool_limits

from colorflow.autograd.init import make_rng
from colorflow.dataset import TaskPair, build_pairs
from colorflow.errors import InsufficientDataError
from colorflow.geometry import PointCloud

logger = logging.getLogger(__name__)

MIN_SIZES = 4
MIN_SPAN = 8.0
DEFAULT_SIZES = (50_000, 100_000, 200_000, 400_000, 800_000)
SCALING_COLUMNS = ["method", "n_hr", "n_lr", "median_ms", "fitted_ms", "repeats", "threads"]
PLOT_COLUMNS = ("n_hr", "median_ms", "fitted_ms")


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    r_squared: float
    n: int

    def predict(self, x: np.ndarray | float) -> np.ndarray | float:
        return self.slope * np.asarray(x, dtype=np.float64) + self.intercept

    def to_dict(self) -> dict[str, float]:
        return {"slope": self.slope, "intercept": self.intercept, "r_squared": self.r_squared, "n": self.n}


def fit_linear(x: Sequence[float], y: Sequence[float]) -> LinearFit:
    """Least-squares line through (x, y); R^2 is 0 when y is constant.

    Raises:
        InsufficientDataError: fewer than two distinct x values
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) != len(y):
        raise InsufficientDataError(f"x and y differ in length: {len(x)} vs {len(y)}")
    if len(np.unique(x)) < 2:
        raise InsufficientDataError("a line fit needs at least two distinct sizes")
    if np.ptp(y) == 0:
        return LinearFit(slope=0.0, intercept=float(y[0]), r_squared=0.0, n=len(x))
    result = stats.linregress(x, y)
    return LinearFit(
        slope=float(result.slope),
        intercept=float(result.intercept),
        r_squared=float(np.clip(result.rvalue**2, 0.0, 1.0)),
        n=len(x),
    )


def synthetic_case(n_h: int, v: int = 5, seed: int = 0) -> TaskPair:
    """A wavy sheet of exactly ``n_h`` colored points at constant surface density."""
    side = int(np.ceil(np.sqrt(n_h)))
    flat = np.arange(n_h)
    x, y = flat % side, flat // side
    z = v + np.round(v * np.sin(2.0 * np.pi * x / 64.0)).astype(np.int64)
    coords = np.stack([x, y, z], axis=1)
    rng = make_rng(seed)
    base = rng.uniform(0.1, 0.9, (2, 3))
    t = (x / max(side - 1, 1))[:, None]
    colors = (1.0 - t) * base[0] + t * base[1]
    colors[(x // 16 + y // 16) % 2 == 1] *= 0.5
    extent = max(side, 2 * v + 1) + 2 * v
    hr = PointCloud(coords=coords, colors=np.clip(colors, 0.0, 1.0), extent=extent)
    return build_pairs(hr, v, object_id=f"sheet_{n_h}")


@dataclass
class ScalingSample:
    n_hr: int
    n_lr: int
    samples_s: list[float]

    @property
    def median_s(self) -> float:
        return float(statistics.median(self.samples_s))


@dataclass
class ScalingReport:
    method: str
    samples: list[ScalingSample]
    fit: LinearFit
    repeats: int
    warmup: int
    threads: int = 1
    config: dict[str, Any] = field(default_factory=dict)

    def to_rows(self) -> list[dict[str, Any]]:
        return [
            {
                "method": self.method,
                "n_hr": s.n_hr,
                "n_lr": s.n_lr,
                "median_ms": s.median_s * 1000.0,
                "fitted_ms": float(self.fit.predict(s.n_hr)) * 1000.0,
                "repeats": self.repeats,
                "threads": self.threads,
            }
            for s in self.samples
        ]

    def summary(self) -> dict[str, Any]:
        return {
            "method": self.method,
            "sizes": [s.n_hr for s in self.samples],
            "fit": self.fit.to_dict(),
            "repeats": self.repeats,
            "warmup": self.warmup,
            "threads": self.threads,
            "config": self.config,
        }


def check_sizes(sizes: Sequence[int]) -> list[int]:
    """Distinct sizes, ascending.

    Raises:
        InsufficientDataError: fewer than 4 distinct sizes or a span below 8x
    """
    distinct = sorted({int(s) for s in sizes})
    if len(distinct) < MIN_SIZES:
        raise InsufficientDataError(f"need at least {MIN_SIZES} distinct sizes, got {len(distinct)}")
    if distinct[0] < 1 or distinct[-1] / distinct[0] < MIN_SPAN:
        raise InsufficientDataError(
            f"sizes must span at least {MIN_SPAN:g}x, got {distinct[0]}..{distinct[-1]}"
        )
    return distinct


def bench_scaling(
    run: Callable[[TaskPair], Any],
    sizes: Sequence[int] = DEFAULT_SIZES,
    repeats: int = 3,
    warmup: int = 2,
    method: str = "custom",
    case_factory: Callable[[int], TaskPair] | None = None,
    clock: Callable[[], float] = time.perf_counter,
    threads: int = 1,
    on_size: Callable[[ScalingSample], None] | None = None,
) -> ScalingReport:
    """Median wall-clock of ``run`` per size and a linear fit over N_h.

    Args:
        run: the method under test, called with one task pair
        sizes: HR point counts
        repeats: timed runs per size
        warmup: untimed runs per size before timing
        method: label for the report
        case_factory: builds the task pair for a size (default: :func:`synthetic_case`)
        clock: time source in seconds
        threads: native (BLAS/OpenMP) thread count pinned while timing and recorded in the report
        on_size: called after each size is measured
    """
    distinct = check_sizes(sizes)
    if repeats < 1:
        raise InsufficientDataError(f"repeats must be >= 1, got {repeats}")
    if threads < 1:
        raise InsufficientDataError(f"threads must be >= 1, got {threads}")
    case_factory = case_factory or synthetic_case

    samples = []
    with threadpool_limits(limits=threads):
        for size in distinct:
            pair = case_factory(size)
            for _ in range(warmup):
                run(pair)
            timings = []
            for _ in range(repeats):
                start = clock()
                run(pair)
                timings.append(clock() - start)
            sample = ScalingSample(n_hr=pair.n_hr, n_lr=pair.n_lr, samples_s=timings)
            samples.append(sample)
            logger.info("%s: N_h=%d median %.3f ms", method, sample.n_hr, sample.median_s * 1000.0)
            if on_size is not None:
                on_size(sample)

    fit = fit_linear([s.n_hr for s in samples], [s.median_s for s in samples])
    logger.info("%s: slope %.3g s/point, R^2 %.4f", method, fit.slope, fit.r_squared)
    return ScalingReport(method=method, samples=samples, fit=fit, repeats=repeats, warmup=warmup, threads=threads)


def write_scaling_csv(report: ScalingReport, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(report.to_rows(), columns=SCALING_COLUMNS).to_csv(path, index=False)


def write_scaling_json(report: ScalingReport, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report.summary(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_plot_data(csv_path: str | Path, out_path: str | Path) -> LinearFit:
    """Turn a scaling CSV into whitespace-separated ``n_hr median_ms fitted_ms`` columns.

    The fit is recomputed from the CSV so hand-edited files stay consistent.
    """
    frame = pd.read_csv(csv_path)
    missing = [c for c in ("n_hr", "median_ms") if c not in frame.columns]
    if missing:
        raise InsufficientDataError(f"{csv_path} lacks column(s) {', '.join(missing)}")
    frame = frame.sort_values("n_hr")
    fit = fit_linear(frame["n_hr"], frame["median_ms"])
    frame["fitted_ms"] = fit.predict(frame["n_hr"].to_numpy())
    header = (
        f"# slope_ms_per_point={fit.slope:.9g} intercept_ms={fit.intercept:.9g} r_squared={fit.r_squared:.6f}\n"
        f"# {' '.join(PLOT_COLUMNS)}\n"
    )
    body = frame.to_csv(sep=" ", columns=list(PLOT_COLUMNS), header=False, index=False)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(header + body, encoding="utf-8")
    return fit
