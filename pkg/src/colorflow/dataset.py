"""Dataset manifests, train/val/test splits and LR/HR task pairs."""

from __future__ import annotations

import json
import logging
from collections.abc import Callable, Iterator, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from packaging.version import InvalidVersion, Version

from colorflow.autograd.init import make_rng
from colorflow.errors import DatasetError, RecipeError
from colorflow.geometry import LrHrMapping, PointCloud, voxelize
from colorflow.ply import read_ply, to_bytes, write_ply
from colorflow.synthetic import SHAPES, TEXTURES, SyntheticRecipe, generate_synthetic

logger = logging.getLogger(__name__)

MANIFEST_VERSION = "1.0"
SPLITS = ("train", "val", "test")
DEFAULT_EXTENT = 250
DEFAULT_COUNT = 200


@dataclass
class ObjectEntry:
    """One object: a PLY path (relative to the manifest), a recipe, or both."""

    object_id: str
    split: str
    path: str | None = None
    recipe: SyntheticRecipe | None = None

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {"id": self.object_id, "split": self.split}
        if self.path is not None:
            data["path"] = self.path
        if self.recipe is not None:
            data["recipe"] = self.recipe.to_dict()
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ObjectEntry:
        try:
            recipe = data.get("recipe")
            return cls(
                object_id=str(data["id"]),
                split=str(data["split"]),
                path=data.get("path"),
                recipe=SyntheticRecipe.from_dict(recipe) if recipe is not None else None,
            )
        except KeyError as e:
            raise DatasetError(f"manifest object entry lacks {e.args[0]!r}") from None
        except (RecipeError, TypeError) as e:
            raise DatasetError(f"manifest object {data.get('id')!r}: {e}") from None


@dataclass
class DatasetManifest:
    """Objects with their split tags, the grid extent and the generator seed."""

    extent: int
    seed: int = 0
    objects: list[ObjectEntry] = field(default_factory=list)
    version: str = MANIFEST_VERSION
    root: Path | None = None

    def __post_init__(self) -> None:
        seen = set()
        for entry in self.objects:
            if entry.split not in SPLITS:
                raise DatasetError(f"object {entry.object_id} has unknown split {entry.split!r}")
            if entry.object_id in seen:
                raise DatasetError(f"duplicate object id {entry.object_id}")
            if entry.path is None and entry.recipe is None:
                raise DatasetError(f"object {entry.object_id} has neither a path nor a recipe")
            seen.add(entry.object_id)

    def split(self, tag: str) -> list[ObjectEntry]:
        if tag not in SPLITS:
            raise DatasetError(f"unknown split {tag!r}, expected one of {', '.join(SPLITS)}")
        return [entry for entry in self.objects if entry.split == tag]

    def to_dict(self) -> dict[str, Any]:
        return {
            "version": self.version,
            "extent": self.extent,
            "seed": self.seed,
            "objects": [entry.to_dict() for entry in self.objects],
        }

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")
        self.root = path.parent

    @classmethod
    def load(cls, path: str | Path) -> DatasetManifest:
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise DatasetError(f"manifest not found: {path}") from None
        except json.JSONDecodeError as e:
            raise DatasetError(f"manifest {path} is not valid JSON: {e}") from None
        if not isinstance(data, dict):
            raise DatasetError(f"manifest {path} must contain a JSON object")
        version = str(data.get("version", MANIFEST_VERSION))
        try:
            if Version(version).major != Version(MANIFEST_VERSION).major:
                raise DatasetError(f"unsupported manifest version {version}")
        except InvalidVersion:
            raise DatasetError(f"invalid manifest version {version!r}") from None
        if "extent" not in data:
            raise DatasetError(f"manifest {path} lacks 'extent'")
        return cls(
            extent=int(data["extent"]),
            seed=int(data.get("seed", 0)),
            objects=[ObjectEntry.from_dict(entry) for entry in data.get("objects", [])],
            version=version,
            root=path.parent,
        )


def split_objects(object_ids: Sequence[str], seed: int) -> dict[str, str]:
    """Assign each id to train/val/test, 80/10/10, by a seeded shuffle."""
    n = len(object_ids)
    order = make_rng(seed).permutation(n)
    n_val = max(1, n // 10) if n >= 3 else 0
    n_test = max(1, n // 10) if n >= 3 else 0
    n_train = n - n_val - n_test
    tags = {}
    for rank, i in enumerate(order):
        tags[object_ids[i]] = "train" if rank < n_train else "val" if rank < n_train + n_val else "test"
    return tags


def _stored(cloud: PointCloud) -> PointCloud:
    """The cloud as it reads back from disk: shifted to the origin, 8-bit colors."""
    cloud = cloud.recentered()
    if cloud.colors is None:
        return cloud
    return cloud.with_colors(to_bytes(cloud.colors) / 255.0)


def _recipes(count: int, seed: int, budget: int) -> list[SyntheticRecipe]:
    rng = make_rng(seed)
    recipes = []
    for _ in range(count):
        recipes.append(
            SyntheticRecipe(
                shape=SHAPES[int(rng.integers(len(SHAPES)))],
                texture=TEXTURES[int(rng.integers(len(TEXTURES)))],
                texture_scale=float(np.round(rng.uniform(2.0, 8.0), 3)),
                budget=budget,
                seed=int(rng.integers(2**31)),
            )
        )
    return recipes


def generate_dataset(
    out_dir: str | Path,
    count: int = DEFAULT_COUNT,
    extent: int = DEFAULT_EXTENT,
    seed: int = 0,
    budget: int | None = None,
    write_files: bool = True,
    on_object: Callable[[ObjectEntry], None] | None = None,
) -> DatasetManifest:
    """Generate ``count`` synthetic objects and write ``manifest.json`` under ``out_dir``.

    Args:
        out_dir: output directory
        count: number of objects
        extent: grid size S
        seed: seed for recipes and split assignment
        budget: surface samples per object; defaults to 4 * S^2
        write_files: write one PLY per object; otherwise objects are regenerated on load
        on_object: called after each object is produced

    Returns:
        The saved manifest
    """
    if count < 1:
        raise DatasetError(f"object count must be >= 1, got {count}")
    out_dir = Path(out_dir)
    budget = 4 * extent * extent if budget is None else budget
    recipes = _recipes(count, seed, budget)
    ids = [f"obj_{i:04d}" for i in range(count)]
    splits = split_objects(ids, seed)

    manifest = DatasetManifest(extent=extent, seed=seed)
    for object_id, recipe in zip(ids, recipes, strict=True):
        entry = ObjectEntry(object_id=object_id, split=splits[object_id], recipe=recipe)
        if write_files:
            entry.path = f"objects/{object_id}.ply"
            write_ply(_stored(generate_synthetic(recipe, extent)), out_dir / entry.path)
        manifest.objects.append(entry)
        logger.debug("generated %s (%s/%s)", object_id, recipe.shape, recipe.texture)
        if on_object is not None:
            on_object(entry)
    manifest.save(out_dir / "manifest.json")
    logger.info("wrote %d object(s) to %s", count, out_dir)
    return manifest


def load_object(entry: ObjectEntry, manifest: DatasetManifest) -> PointCloud:
    """Read an object's PLY file, or regenerate it from its recipe when the file is absent."""
    if entry.path is not None:
        path = Path(entry.path)
        if not path.is_absolute() and manifest.root is not None:
            path = manifest.root / path
        if path.is_file():
            return read_ply(path, extent=manifest.extent, require_colors=True)
        if entry.recipe is None:
            raise DatasetError(f"object {entry.object_id}: file {path} not found")
    return _stored(generate_synthetic(entry.recipe, manifest.extent))


@dataclass(frozen=True, eq=False)
class TaskPair:
    """An HR ground-truth cloud with its voxelized LR input."""

    object_id: str
    lr: PointCloud
    hr: PointCloud
    mapping: LrHrMapping

    def __iter__(self) -> Iterator[Any]:
        return iter((self.lr, self.hr, self.mapping))

    @property
    def ratio(self) -> int:
        return self.mapping.voxel_size

    @property
    def n_lr(self) -> int:
        return len(self.lr)

    @property
    def n_hr(self) -> int:
        return len(self.hr)

    @property
    def point_ratio(self) -> float:
        """N_h / N_l; for surfaces this is well below v^3."""
        return self.n_hr / self.n_lr if self.n_lr else 0.0

    def describe(self) -> dict[str, Any]:
        return {
            "object_id": self.object_id,
            "extent": self.hr.extent,
            "lr_extent": self.lr.extent,
            "v": self.ratio,
            "n_lr": self.n_lr,
            "n_hr": self.n_hr,
            "point_ratio": self.point_ratio,
        }


def build_pairs(hr: PointCloud, v: int, object_id: str = "") -> TaskPair:
    """Voxelize ``hr`` at ratio ``v`` into an LR/HR training or evaluation pair."""
    lr, mapping = voxelize(hr, v)
    pair = TaskPair(object_id=object_id, lr=lr, hr=hr, mapping=mapping)
    logger.debug("pair %s: %s", object_id, pair.describe())
    return pair


def load_pairs(manifest: DatasetManifest, split: str, v: int) -> list[TaskPair]:
    """Task pairs for every object of one split."""
    return [build_pairs(load_object(entry, manifest), v, entry.object_id) for entry in manifest.split(split)]
