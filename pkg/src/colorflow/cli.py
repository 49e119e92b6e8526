"""Command-line interface for colorflow.

Provides commands for generating datasets, training the upsampling network,
upsampling PLY files, evaluating methods and benchmarking latency scaling.
"""

from __future__ import annotations

import functools
import logging
import sys
from collections.abc import Callable
from pathlib import Path
from typing import Any

import click

from colorflow import __version__
from colorflow.baselines import BaselineSpec
from colorflow.bench import (
    DEFAULT_SIZES,
    bench_scaling,
    synthetic_case,
    write_plot_data,
    write_scaling_csv,
    write_scaling_json,
)
from colorflow.config import THREADS_ENV, load_config, merge, pick
from colorflow.dataset import DEFAULT_COUNT, DEFAULT_EXTENT, DatasetManifest, TaskPair, generate_dataset, load_pairs
from colorflow.errors import ColorflowError, ConfigError
from colorflow.evaluation import METHODS, evaluate, make_runner, write_report_csv, write_summary_json
from colorflow.geometry import recover_mapping
from colorflow.model.params import ModelParams, TrainConfig
from colorflow.model.train import train
from colorflow.ply import read_upsampling_pair, write_ply

logger = logging.getLogger(__name__)

GEN_OPTIONS = ("count", "extent", "seed", "budget", "files")
EVAL_OPTIONS = ("methods", "ratios", "split", "k", "radius", "threads")
BENCH_OPTIONS = ("method", "sizes", "ratio", "repeats", "warmup", "seed", "threads", "k", "radius")


def create_progress_bar(
    total: int,
    label: str = "Processing",
    enabled: bool = True,
) -> tuple[Callable[..., None], Callable[[], None]]:
    """Create a progress bar and return update/close callbacks.

    Args:
        total: Total number of items
        label: Progress bar label
        enabled: When False both callbacks do nothing

    Returns:
        Tuple of (update_callback, close_callback)
    """
    if not enabled:
        return (lambda *_: None), (lambda: None)
    bar = click.progressbar(length=total, label=label, show_eta=True, show_percent=True, file=sys.stderr)
    bar.__enter__()

    def update(*_: Any) -> None:
        bar.update(1)

    def close() -> None:
        bar.__exit__(None, None, None)

    return update, close


def handle_errors(func: Callable[..., Any]) -> Callable[..., Any]:
    """Report library errors as ``Error[<category>]: <message>`` and exit 1."""

    @functools.wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        try:
            return func(*args, **kwargs)
        except (click.ClickException, click.exceptions.Exit, click.exceptions.Abort):
            raise
        except ColorflowError as e:
            click.echo(f"Error[{e.category}]: {e}", err=True)
            sys.exit(1)
        except Exception as e:
            logger.debug("unexpected failure", exc_info=True)
            click.echo(f"Error[internal]: {type(e).__name__}: {e}", err=True)
            sys.exit(1)

    return wrapper


def _parse_list(value: str | list | None, convert: Callable[[str], Any], label: str) -> list[Any] | None:
    if value is None:
        return None
    items = value if isinstance(value, list) else [part for part in str(value).split(",") if part.strip()]
    try:
        return [convert(str(item).strip()) for item in items]
    except ValueError:
        raise ConfigError(f"invalid {label} list: {value!r}") from None


def _threads(flag: int | None, section: dict[str, Any]) -> int:
    threads = flag if flag is not None else section.get("threads", 1)
    if int(threads) < 1:
        raise ConfigError(f"threads must be >= 1, got {threads}")
    return int(threads)


@click.group()
@click.version_option(version=__version__, prog_name="colorflow")
@click.option("-v", "--verbose", count=True, help="Log progress (-v) or debug details (-vv) to stderr")
def main(verbose: int) -> None:
    """Point cloud color upsampling.

    Predicts colors for a dense (HR) point cloud from a sparse colored (LR)
    cloud with a sparse-convolution network, and compares it against
    classical baselines.
    """
    level = logging.WARNING if verbose == 0 else logging.INFO if verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)


@main.command()
@click.argument("out_dir", type=click.Path(file_okay=False, path_type=Path))
@click.option("--count", type=click.IntRange(min=1), help=f"Number of objects (default: {DEFAULT_COUNT})")
@click.option("--extent", type=click.IntRange(min=2), help=f"Grid size S (default: {DEFAULT_EXTENT})")
@click.option("--seed", type=int, help="Seed for recipes and splits (default: 0)")
@click.option("--budget", type=click.IntRange(min=1), help="Surface samples per object (default: 4*S^2)")
@click.option("--files/--no-files", default=None, help="Write PLY files (default) or store recipes only")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--progress", is_flag=True, help="Show a progress bar")
@handle_errors
def gen(
    out_dir: Path,
    count: int | None,
    extent: int | None,
    seed: int | None,
    budget: int | None,
    files: bool | None,
    config_path: Path | None,
    progress: bool,
) -> None:
    """Generate a synthetic dataset and its manifest.

    Example:

        colorflow gen data/desk --count 200 --extent 250 --seed 0
    """
    sections = load_config(config_path)
    options = merge(
        {"count": DEFAULT_COUNT, "extent": DEFAULT_EXTENT, "seed": 0, "budget": None, "files": True},
        pick(sections["gen"], GEN_OPTIONS, "gen"),
        {"count": count, "extent": extent, "seed": seed, "budget": budget, "files": files},
    )
    update, close = create_progress_bar(options["count"], "Generating", enabled=progress)
    try:
        manifest = generate_dataset(
            out_dir,
            count=options["count"],
            extent=options["extent"],
            seed=options["seed"],
            budget=options["budget"],
            write_files=options["files"],
            on_object=update,
        )
    finally:
        close()
    sizes = {tag: len(manifest.split(tag)) for tag in ("train", "val", "test")}
    click.echo(
        f"Generated {len(manifest.objects)} objects in {out_dir} "
        f"(train {sizes['train']}, val {sizes['val']}, test {sizes['test']})"
    )


@main.command("train")
@click.argument("manifest_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("-o", "--output", type=click.Path(dir_okay=False, path_type=Path), required=True, help="Checkpoint")
@click.option("--ratio", type=int, help="Upsampling ratio v (default: 2)")
@click.option("--epochs", type=int)
@click.option("--lr", "learning_rate", type=float, help="Initial learning rate")
@click.option("--batch-size", type=int, help="Objects per step (default depends on the ratio)")
@click.option("--channels", type=int, help="Feature channels K (default depends on the ratio)")
@click.option("--weight-decay", type=float)
@click.option("--seed", type=int)
@click.option("--precision", type=click.Choice(["float32", "float64"]))
@click.option("--positional-encoding", type=int, help="Sine/cosine bands on offsets (0 = off)")
@click.option("--zero-init-output", is_flag=True, default=None, help="Start from the devoxelized colors")
@click.option("--log", "log_path", type=click.Path(dir_okay=False, path_type=Path), help="JSON-lines training log")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--progress", is_flag=True, help="Show a progress bar")
@handle_errors
def train_cmd(
    manifest_path: Path,
    output: Path,
    ratio: int | None,
    epochs: int | None,
    learning_rate: float | None,
    batch_size: int | None,
    channels: int | None,
    weight_decay: float | None,
    seed: int | None,
    precision: str | None,
    positional_encoding: int | None,
    zero_init_output: bool | None,
    log_path: Path | None,
    config_path: Path | None,
    progress: bool,
) -> None:
    """Train the network on the train split of a manifest.

    Example:

        colorflow train data/desk/manifest.json -o model.ckpt --ratio 5
    """
    sections = load_config(config_path)
    values = merge(
        {},
        sections["train"],
        {
            "ratio": ratio,
            "epochs": epochs,
            "learning_rate": learning_rate,
            "batch_size": batch_size,
            "channels": channels,
            "weight_decay": weight_decay,
            "seed": seed,
            "precision": precision,
            "positional_encoding": positional_encoding,
            "zero_init_output": zero_init_output,
        },
    )
    config = TrainConfig.for_ratio(int(values.pop("ratio", 2)), **values)

    manifest = DatasetManifest.load(manifest_path)
    pairs = load_pairs(manifest, "train", config.ratio)
    val_pairs = load_pairs(manifest, "val", config.ratio)
    click.echo(f"Training on {len(pairs)} objects ({len(val_pairs)} validation), ratio {config.ratio}", err=True)

    update, close = create_progress_bar(config.epochs + 1, "Training", enabled=progress)
    try:
        result = train(pairs, config, val_pairs=val_pairs, on_epoch=update)
    finally:
        close()

    size = result.params.save(output, extra={"best_epoch": result.best_epoch})
    log_path = log_path or output.with_name(output.name + ".log.jsonl")
    result.write_log(log_path, header=config.to_dict())

    final = result.log[-1]
    click.echo(f"Saved {output} ({size} bytes, {result.params.num_parameters()} parameters)")
    click.echo(f"Epochs: {config.epochs}, best epoch: {result.best_epoch}, final loss: {final.loss:.6g}")
    if final.val_psnr is not None:
        best = result.log[result.best_epoch]
        click.echo(f"Validation PSNR at best epoch: {best.val_psnr:.3f} dB")
    click.echo(f"Log: {log_path}")


@main.command()
@click.argument("lr_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.argument("hr_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("-o", "--output", type=click.Path(dir_okay=False, path_type=Path), required=True)
@click.option("--ratio", type=click.IntRange(min=2), required=True, help="Upsampling ratio v")
@click.option("--method", type=click.Choice(list(METHODS)), default="devox", show_default=True)
@click.option("--checkpoint", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--k", type=click.IntRange(min=1), default=3, show_default=True, help="Neighbors for knn")
@click.option("--radius", type=float, help="Ball radius in HR voxels for waan (default: 1.5 * ratio)")
@click.option("--ascii", "write_ascii", is_flag=True, help="Write an ASCII PLY")
@handle_errors
def upsample(
    lr_path: Path,
    hr_path: Path,
    output: Path,
    ratio: int,
    method: str,
    checkpoint: Path | None,
    k: int,
    radius: float | None,
    write_ascii: bool,
) -> None:
    """Color the points of HR_PATH from the colored LR cloud LR_PATH.

    LR coordinates are in LR voxel units, HR coordinates in HR voxel units.

    Example:

        colorflow upsample lr.ply hr.ply -o out.ply --ratio 5 --method cunet --checkpoint model.ckpt
    """
    params = ModelParams.load(checkpoint) if checkpoint is not None else None
    if params is not None and params.v_train != ratio:
        logger.warning("checkpoint was trained at ratio %d, upsampling at ratio %d", params.v_train, ratio)

    lr, hr, origin = read_upsampling_pair(lr_path, hr_path, ratio)
    pair = TaskPair(object_id=hr_path.stem, lr=lr, hr=hr, mapping=recover_mapping(lr, hr, ratio))
    baseline = BaselineSpec(method=method, k=k, radius=radius) if method != "cunet" else None
    runner = make_runner(method, ratio, params, baseline)
    colors = runner(pair)
    write_ply(hr.with_colors(colors), output, ascii=write_ascii, origin=origin)
    click.echo(f"Wrote {len(hr)} points to {output} ({method}, ratio {ratio})")


@main.command("eval")
@click.argument("manifest_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--methods", help="Comma-separated methods (default: devox,knn,waan and cunet with --checkpoint)")
@click.option("--ratios", help="Comma-separated test ratios (default: the checkpoint ratio or 2)")
@click.option("--checkpoint", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--split", type=click.Choice(["train", "val", "test"]), help="Split to evaluate (default: test)")
@click.option("--k", type=click.IntRange(min=1), help="Neighbors for knn (default: 3)")
@click.option("--radius", type=float, help="Ball radius for waan (default: 1.5 * ratio)")
@click.option("--report", type=click.Path(dir_okay=False, path_type=Path), help="CSV report path")
@click.option("--summary", type=click.Path(dir_okay=False, path_type=Path), help="JSON summary path")
@click.option("--threads", type=click.IntRange(min=1), envvar=THREADS_ENV, help="Worker threads over objects")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--progress", is_flag=True, help="Show a progress bar")
@handle_errors
def eval_cmd(
    manifest_path: Path,
    methods: str | None,
    ratios: str | None,
    checkpoint: Path | None,
    split: str | None,
    k: int | None,
    radius: float | None,
    report: Path | None,
    summary: Path | None,
    threads: int | None,
    config_path: Path | None,
    progress: bool,
) -> None:
    """Score methods on a dataset split by PSNR.

    Example:

        colorflow eval data/desk/manifest.json --methods devox,knn,waan,cunet \\
            --checkpoint model.ckpt --ratios 2,5 --report eval.csv
    """
    sections = load_config(config_path)
    section = pick(sections["eval"], EVAL_OPTIONS, "eval")
    params = ModelParams.load(checkpoint) if checkpoint is not None else None

    default_methods = ["devox", "knn", "waan"] + (["cunet"] if params is not None else [])
    options = merge(
        {"methods": default_methods, "ratios": [params.v_train if params else 2], "split": "test", "k": 3},
        {key: value for key, value in section.items() if key != "threads"},
        {"methods": methods, "ratios": ratios, "split": split, "k": k, "radius": radius},
    )
    method_list = _parse_list(options["methods"], str, "method")
    ratio_list = _parse_list(options["ratios"], int, "ratio")
    worker_threads = _threads(threads, section)
    unknown = [m for m in method_list if m not in METHODS]
    if unknown:
        raise ConfigError(f"unknown method(s): {', '.join(unknown)}")

    manifest = DatasetManifest.load(manifest_path)
    clouds_split = manifest.split(options["split"])
    if not clouds_split:
        raise ConfigError(f"split {options['split']!r} of {manifest_path} is empty")

    reports = []
    update, close = create_progress_bar(len(method_list) * len(ratio_list) * len(clouds_split), "Evaluating", progress)
    try:
        for ratio in ratio_list:
            for method in method_list:
                baseline = None
                if method != "cunet":
                    baseline = BaselineSpec(method=method, k=options["k"], radius=options.get("radius"))
                reports.append(
                    evaluate(
                        method,
                        manifest,
                        ratio,
                        params=params,
                        threads=worker_threads,
                        split=options["split"],
                        baseline=baseline,
                        on_object=update,
                    )
                )
    finally:
        close()

    provenance = {
        **options,
        "methods": method_list,
        "ratios": ratio_list,
        "threads": worker_threads,
        "manifest": str(manifest_path),
        "checkpoint": str(checkpoint) if checkpoint else None,
    }
    for item in reports:
        item.config = provenance
    if report is not None:
        write_report_csv(reports, report)
    if summary is not None:
        write_summary_json(reports, summary, config=provenance)

    click.echo(f"{'method':<8} {'v_train':>7} {'v_test':>6} {'objects':>7} {'mean PSNR (dB)':>15}")
    for item in reports:
        v_train = item.v_train if item.v_train is not None else "-"
        click.echo(f"{item.method:<8} {v_train!s:>7} {item.v_test:>6} {len(item.objects):>7} {item.mean_psnr:>15.3f}")


@main.command()
@click.option("--method", type=click.Choice(list(METHODS)), help="Method to time (default: cunet)")
@click.option("--sizes", help=f"Comma-separated HR point counts (default: {','.join(map(str, DEFAULT_SIZES))})")
@click.option("--ratio", type=click.IntRange(min=2), help="Upsampling ratio (default: checkpoint ratio or 5)")
@click.option("--checkpoint", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--repeats", type=click.IntRange(min=1), help="Timed runs per size (default: 3)")
@click.option("--warmup", type=click.IntRange(min=0), help="Untimed runs per size (default: 2)")
@click.option("--seed", type=int, help="Seed for the synthetic clouds (default: 0)")
@click.option("--k", type=click.IntRange(min=1), help="Neighbors for knn (default: 3)")
@click.option("--radius", type=float, help="Ball radius for waan")
@click.option("--report", type=click.Path(dir_okay=False, path_type=Path), help="CSV report path")
@click.option("--summary", type=click.Path(dir_okay=False, path_type=Path), help="JSON summary path")
@click.option("--threads", type=click.IntRange(min=1), envvar=THREADS_ENV, help="Native thread count pinned while timing")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@handle_errors
def bench(
    method: str | None,
    sizes: str | None,
    ratio: int | None,
    checkpoint: Path | None,
    repeats: int | None,
    warmup: int | None,
    seed: int | None,
    k: int | None,
    radius: float | None,
    report: Path | None,
    summary: Path | None,
    threads: int | None,
    config_path: Path | None,
) -> None:
    """Time a method over growing clouds and fit latency = a * N_h + b.

    Example:

        colorflow bench --method cunet --checkpoint model.ckpt --sizes 50000,100000,200000,400000,800000
    """
    sections = load_config(config_path)
    section = pick(sections["bench"], BENCH_OPTIONS, "bench")
    params = ModelParams.load(checkpoint) if checkpoint is not None else None
    options = merge(
        {
            "method": "cunet",
            "sizes": list(DEFAULT_SIZES),
            "ratio": params.v_train if params else 5,
            "repeats": 3,
            "warmup": 2,
            "seed": 0,
            "k": 3,
        },
        {key: value for key, value in section.items() if key != "threads"},
        {
            "method": method,
            "sizes": sizes,
            "ratio": ratio,
            "repeats": repeats,
            "warmup": warmup,
            "seed": seed,
            "k": k,
            "radius": radius,
        },
    )
    size_list = _parse_list(options["sizes"], int, "size")
    worker_threads = _threads(threads, section)
    v = int(options["ratio"])
    baseline = None
    if options["method"] != "cunet":
        baseline = BaselineSpec(method=options["method"], k=options["k"], radius=options.get("radius"))
    runner = make_runner(options["method"], v, params, baseline)

    result = bench_scaling(
        runner,
        size_list,
        repeats=options["repeats"],
        warmup=options["warmup"],
        method=options["method"],
        case_factory=lambda n: synthetic_case(n, v, options["seed"]),
        threads=worker_threads,
        on_size=lambda s: click.echo(f"  N_h={s.n_hr:>8}  median {s.median_s * 1000.0:10.2f} ms", err=True),
    )
    result.config = {**options, "sizes": size_list, "threads": worker_threads}
    if report is not None:
        write_scaling_csv(result, report)
    if summary is not None:
        write_scaling_json(result, summary)
    fit = result.fit
    click.echo(f"slope: {fit.slope * 1e9:.3f} ns/point  intercept: {fit.intercept * 1000.0:.3f} ms  R^2: {fit.r_squared:.4f}")


@main.command("plot-data")
@click.argument("csv_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.argument("out_path", type=click.Path(dir_okay=False, path_type=Path))
@handle_errors
def plot_data(csv_path: Path, out_path: Path) -> None:
    """Write gnuplot-ready columns (n_hr median_ms fitted_ms) from a bench CSV.

    Example:

        colorflow plot-data bench.csv bench.dat
    """
    fit = write_plot_data(csv_path, out_path)
    click.echo(f"Wrote {out_path} (R^2 {fit.r_squared:.4f})")


if __name__ == "__main__":
    main()
