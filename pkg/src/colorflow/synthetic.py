"""Procedural textured objects standing in for scanned colored point clouds.

A recipe picks a surface (sphere, torus, box or a sphere/box blend) and a
texture. Points are sampled uniformly by area in a unit frame, colored there,
scaled into the grid and voxelized with color averaging.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Any

import numpy as np

from colorflow.autograd.init import make_rng
from colorflow.errors import RecipeError
from colorflow.geometry import PointCloud, deduplicate

SHAPES = ("sphere", "torus", "box", "blended")
TEXTURES = ("checker", "gradient", "value-noise", "stripes")

FILL = 0.45
TORUS_MAJOR = 0.7
TORUS_MINOR = 0.3
BOX_HALF = np.array([1.0, 0.75, 0.5])
BLEND_SPHERE = (np.array([-0.4, 0.0, 0.0]), 0.55)
BLEND_BOX = (np.array([0.45, 0.0, 0.0]), np.array([0.4, 0.4, 0.4]))


@dataclass(frozen=True)
class SyntheticRecipe:
    shape: str = "sphere"
    texture: str = "checker"
    texture_scale: float = 4.0
    budget: int = 100_000
    seed: int = 0

    def __post_init__(self) -> None:
        if self.shape not in SHAPES:
            raise RecipeError(f"unknown shape {self.shape!r}, expected one of {', '.join(SHAPES)}")
        if self.texture not in TEXTURES:
            raise RecipeError(f"unknown texture {self.texture!r}, expected one of {', '.join(TEXTURES)}")
        if self.budget < 1:
            raise RecipeError(f"point budget must be >= 1, got {self.budget}")
        if not self.texture_scale > 0:
            raise RecipeError(f"texture scale must be positive, got {self.texture_scale}")

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> SyntheticRecipe:
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise RecipeError(f"unknown recipe field(s): {', '.join(unknown)}")
        return cls(**data)


def _sphere(rng: np.random.Generator, n: int, center: np.ndarray, radius: float) -> np.ndarray:
    directions = rng.standard_normal((n, 3))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    return center + radius * directions


def _torus(rng: np.random.Generator, n: int) -> np.ndarray:
    # rejection on the tube angle gives uniform density per unit area
    chunks, have = [], 0
    while have < n:
        u = rng.uniform(0, 2 * np.pi, 2 * n)
        w = rng.uniform(0, 2 * np.pi, 2 * n)
        keep = rng.uniform(0, 1, 2 * n) < (TORUS_MAJOR + TORUS_MINOR * np.cos(w)) / (TORUS_MAJOR + TORUS_MINOR)
        u, w = u[keep], w[keep]
        ring = TORUS_MAJOR + TORUS_MINOR * np.cos(w)
        chunks.append(np.stack([ring * np.cos(u), ring * np.sin(u), TORUS_MINOR * np.sin(w)], axis=1))
        have += len(u)
    return np.concatenate(chunks)[:n]


def _box(rng: np.random.Generator, n: int, center: np.ndarray, half: np.ndarray) -> np.ndarray:
    areas = np.array([half[1] * half[2], half[0] * half[2], half[0] * half[1]])
    face_axis = rng.choice(3, size=n, p=areas / areas.sum())
    points = rng.uniform(-1, 1, (n, 3)) * half
    side = np.where(rng.uniform(0, 1, n) < 0.5, -1.0, 1.0)
    rows = np.arange(n)
    points[rows, face_axis] = side * half[face_axis]
    return center + points


def _box_area(half: np.ndarray) -> float:
    return 8.0 * (half[0] * half[1] + half[1] * half[2] + half[0] * half[2])


def sample_surface(recipe: SyntheticRecipe, rng: np.random.Generator) -> np.ndarray:
    """``recipe.budget`` points uniformly distributed over the surface, in [-1, 1]^3."""
    n = recipe.budget
    if recipe.shape == "sphere":
        return _sphere(rng, n, np.zeros(3), 1.0)
    if recipe.shape == "torus":
        return _torus(rng, n)
    if recipe.shape == "box":
        return _box(rng, n, np.zeros(3), BOX_HALF)
    sphere_center, sphere_radius = BLEND_SPHERE
    box_center, box_half = BLEND_BOX
    sphere_area = 4.0 * np.pi * sphere_radius**2
    n_sphere = int(rng.binomial(n, sphere_area / (sphere_area + _box_area(box_half))))
    return np.concatenate(
        [_sphere(rng, n_sphere, sphere_center, sphere_radius), _box(rng, n - n_sphere, box_center, box_half)]
    )


def _smoothstep(t: np.ndarray) -> np.ndarray:
    return t * t * (3.0 - 2.0 * t)


def _value_noise(rng: np.random.Generator, points: np.ndarray, scale: float, channels: int) -> np.ndarray:
    """Trilinearly interpolated lattice noise in [0, 1]."""
    cells = int(np.ceil(scale)) + 1
    lattice = rng.uniform(0, 1, (cells + 1, cells + 1, cells + 1, channels))
    grid = (points + 1.0) / 2.0 * (cells - 1)
    base = np.clip(np.floor(grid).astype(np.int64), 0, cells - 1)
    frac = _smoothstep(np.clip(grid - base, 0.0, 1.0))
    out = np.zeros((len(points), channels))
    for corner in np.ndindex(2, 2, 2):
        offset = np.array(corner)
        weight = np.prod(np.where(offset == 1, frac, 1.0 - frac), axis=1)
        idx = base + offset
        out += weight[:, None] * lattice[idx[:, 0], idx[:, 1], idx[:, 2]]
    return out


def apply_texture(recipe: SyntheticRecipe, points: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Colors in [0, 1] for unit-frame surface points.

    Checker is two flat colors. The other families mix smooth variation with
    at least one hard color boundary.
    """
    palette = rng.uniform(0.05, 0.95, (4, 3))
    direction = rng.standard_normal(3)
    direction /= np.linalg.norm(direction)
    scale = recipe.texture_scale

    if recipe.texture == "checker":
        parity = np.floor((points + 1.0) * scale).astype(np.int64).sum(axis=1) % 2
        return np.where(parity[:, None] == 0, palette[0], palette[1])

    t = np.clip((points @ direction + 1.0) / 2.0, 0.0, 1.0)[:, None]
    if recipe.texture == "gradient":
        seam = rng.standard_normal(3)
        seam -= seam @ direction * direction
        seam /= np.linalg.norm(seam)
        upper = (1.0 - t) * palette[0] + t * palette[1]
        lower = (1.0 - t) * palette[2] + t * palette[3]
        return np.where((points @ seam)[:, None] > 0, upper, lower)

    if recipe.texture == "stripes":
        phase = np.sin(scale * np.pi * (points @ direction))
        stripe = np.where(phase[:, None] > 0, palette[0], palette[1])
        shade = 0.6 + 0.4 * (points[:, 2:3] + 1.0) / 2.0
        return np.clip(stripe * shade, 0.0, 1.0)

    colors = _value_noise(rng, points, scale, 3)
    spots = _value_noise(rng, points, 2.0 * scale, 1)[:, 0] > 0.65
    colors[spots] = palette[2]
    return np.clip(colors, 0.0, 1.0)


def to_grid(points: np.ndarray, extent: int) -> np.ndarray:
    """Map unit-frame points into [0, extent) and floor them."""
    half = (extent - 1) / 2.0
    return np.floor(half + FILL * (extent - 1) * points).astype(np.int64)


def generate_synthetic(recipe: SyntheticRecipe, extent: int) -> PointCloud:
    """Sample, texture and voxelize one object. Same recipe, same cloud.

    Raises:
        RecipeError: the grid is too small to hold a surface
    """
    if extent < 2:
        raise RecipeError(f"grid extent {extent} leaves no room for a surface")
    rng = make_rng(recipe.seed)
    points = sample_surface(recipe, rng)
    colors = apply_texture(recipe, points, rng)
    return deduplicate(to_grid(points, extent), colors, extent)


def expected_sphere_occupancy(extent: int, budget: int) -> float:
    """Expected occupied voxel count for the sphere recipe.

    A surface of area A crosses about 1.5 * A unit voxels (the mean of
    |n_x| + |n_y| + |n_z| over a sphere); ``budget`` uniform samples hit
    ``N * (1 - exp(-budget / N))`` of N equally sized cells.
    """
    radius = FILL * (extent - 1)
    cells = 1.5 * 4.0 * np.pi * radius**2
    return float(cells * (1.0 - np.exp(-budget / cells)))
