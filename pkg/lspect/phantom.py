"""
Analytic emission phantoms
Spheres and z-aligned cylinders with uniform activity, Monte Carlo emission
sampling in fixed-size blocks so any index range can be reproduced on its own.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Iterator, Sequence, Tuple

import numpy as np

from utils.errors import DomainError
from utils.validators import validate_positive, validate_vector3

Vec3 = Tuple[float, float, float]

# emission indices are drawn in blocks of this size; changing it changes every stream
EMISSION_BLOCK = 65536

# spawn-key tag separating emission positions from other RNG streams
EMISSION_STREAM = 0


class ShapeKind(str, Enum):
    SPHERE = "sphere"
    CYLINDER = "cylinder"


@dataclass(frozen=True)
class Shape:
    """One uniformly active sphere or z-aligned cylinder"""

    kind: ShapeKind
    center: Vec3
    radius: float
    half_height: float = 0.0
    activity_weight: float = 1.0

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", ShapeKind(self.kind))
        except ValueError:
            raise DomainError(f"Unknown shape kind '{self.kind}'. Valid kinds: sphere, cylinder")
        object.__setattr__(self, "center", validate_vector3(self.center, "shape center"))
        validate_positive(self.radius, "shape radius")
        validate_positive(self.activity_weight, "activity weight")
        if self.kind is ShapeKind.CYLINDER:
            validate_positive(self.half_height, "cylinder half height")

    @property
    def volume(self) -> float:
        if self.kind is ShapeKind.SPHERE:
            return 4.0 / 3.0 * math.pi * self.radius ** 3
        return math.pi * self.radius ** 2 * 2.0 * self.half_height

    def bounding_box(self) -> Tuple[np.ndarray, np.ndarray]:
        c = np.asarray(self.center)
        half_z = self.radius if self.kind is ShapeKind.SPHERE else self.half_height
        half = np.array([self.radius, self.radius, half_z])
        return c - half, c + half

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Inside-predicate (boundary included) for points of shape (..., 3)"""
        rel = np.asarray(points, dtype=np.float64) - np.asarray(self.center)
        if self.kind is ShapeKind.SPHERE:
            return np.einsum("...i,...i->...", rel, rel) <= self.radius ** 2
        radial = rel[..., 0] ** 2 + rel[..., 1] ** 2
        return (radial <= self.radius ** 2) & (np.abs(rel[..., 2]) <= self.half_height)

    def to_dict(self) -> Dict[str, Any]:
        data = {
            "kind": self.kind.value,
            "center": list(self.center),
            "radius": self.radius,
            "activity": self.activity_weight,
        }
        if self.kind is ShapeKind.CYLINDER:
            data["half_height"] = self.half_height
        return data


@dataclass(frozen=True)
class Phantom:
    """Set of emitting shapes with a total emission budget"""

    shapes: Tuple[Shape, ...]
    total_emissions: int = 1_000_000

    def __post_init__(self):
        object.__setattr__(self, "shapes", tuple(self.shapes))
        if not self.shapes:
            raise DomainError("Phantom has no shapes")
        if int(self.total_emissions) != self.total_emissions or self.total_emissions < 0:
            raise DomainError(f"total emissions must be a non-negative integer, got {self.total_emissions}")

    def selection_weights(self) -> np.ndarray:
        """Probability of each shape: activity weight times volume, normalized"""
        if not self.shapes:
            raise DomainError("Phantom has no shapes")
        w = np.array([s.activity_weight * s.volume for s in self.shapes], dtype=np.float64)
        return w / w.sum()

    def bounding_box(self) -> Tuple[np.ndarray, np.ndarray]:
        if not self.shapes:
            raise DomainError("Phantom has no shapes")
        boxes = [s.bounding_box() for s in self.shapes]
        return np.min([b[0] for b in boxes], axis=0), np.max([b[1] for b in boxes], axis=0)

    def contains(self, points: np.ndarray) -> np.ndarray:
        inside = np.zeros(np.asarray(points).shape[:-1], dtype=bool)
        for shape in self.shapes:
            inside |= shape.contains(points)
        return inside

    def to_dict(self) -> Dict[str, Any]:
        return {
            "shapes": [s.to_dict() for s in self.shapes],
            "total_emissions": int(self.total_emissions),
        }


def point_source(radius: float = 0.2, total_emissions: int = 1_000_000) -> Phantom:
    """Small sphere at the origin used as a point source"""
    return Phantom((Shape(ShapeKind.SPHERE, (0.0, 0.0, 0.0), radius),), total_emissions)


def sphere_phantom(radius: float = 5.0, total_emissions: int = 1_000_000) -> Phantom:
    return Phantom((Shape(ShapeKind.SPHERE, (0.0, 0.0, 0.0), radius),), total_emissions)


def three_spheres_phantom(radius: float = 3.0, spacing: float = 8.0,
                          total_emissions: int = 1_000_000) -> Phantom:
    """Three equal spheres on the x axis at -spacing, 0 and +spacing"""
    centers = [(-spacing, 0.0, 0.0), (0.0, 0.0, 0.0), (spacing, 0.0, 0.0)]
    return Phantom(tuple(Shape(ShapeKind.SPHERE, c, radius) for c in centers), total_emissions)


def cylinder_phantom(radius: float = 4.0, half_height: float = 8.0,
                     total_emissions: int = 1_000_000) -> Phantom:
    return Phantom((Shape(ShapeKind.CYLINDER, (0.0, 0.0, 0.0), radius, half_height),), total_emissions)


PRESETS = {
    "point_source": point_source,
    "sphere": sphere_phantom,
    "three_spheres": three_spheres_phantom,
    "cylinder": cylinder_phantom,
}


def block_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for one (stream, ..., block) key"""
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key)))


def _sample_shape(shape: Shape, count: int, rng: np.random.Generator) -> np.ndarray:
    """Rejection-sample `count` uniform points inside the shape's bounding box"""
    lo, hi = shape.bounding_box()
    acceptance = math.pi / 6.0 if shape.kind is ShapeKind.SPHERE else math.pi / 4.0
    out = np.empty((count, 3))
    filled = 0
    while filled < count:
        batch = int((count - filled) / acceptance * 1.1) + 16
        candidates = rng.uniform(lo, hi, size=(batch, 3))
        kept = candidates[shape.contains(candidates)][:count - filled]
        out[filled:filled + len(kept)] = kept
        filled += len(kept)
    return out


def sample_block(phantom: Phantom, block_index: int, seed: int) -> np.ndarray:
    """All EMISSION_BLOCK points of one block of the emission stream"""
    weights = phantom.selection_weights()
    rng = block_rng(seed, EMISSION_STREAM, block_index)
    choice = rng.choice(len(phantom.shapes), size=EMISSION_BLOCK, p=weights)
    points = np.empty((EMISSION_BLOCK, 3))
    for i, shape in enumerate(phantom.shapes):
        slots = np.flatnonzero(choice == i)
        if len(slots):
            points[slots] = _sample_shape(shape, len(slots), rng)
    return points


def iter_emission_blocks(phantom: Phantom, start: int, stop: int,
                         seed: int) -> Iterator[Tuple[int, int, np.ndarray]]:
    """
    Yield (block_index, first_global_index, points) covering [start, stop).

    Points of a global index never depend on which range asked for them.
    """
    if not phantom.shapes:
        raise DomainError("Phantom has no shapes")
    if start < 0 or stop < start:
        raise DomainError(f"invalid emission range [{start}, {stop})")
    first_block = start // EMISSION_BLOCK
    last_block = (stop - 1) // EMISSION_BLOCK if stop > start else first_block - 1
    for b in range(first_block, last_block + 1):
        block_start = b * EMISSION_BLOCK
        lo = max(start, block_start) - block_start
        hi = min(stop, block_start + EMISSION_BLOCK) - block_start
        yield b, block_start + lo, sample_block(phantom, b, seed)[lo:hi]


def sample_emission_points(phantom: Phantom, count: int, seed: int, start: int = 0) -> np.ndarray:
    """Emission points with global indices [start, start + count), shape (count, 3)"""
    if count < 0:
        raise DomainError(f"count must be >= 0, got {count}")
    if not phantom.shapes:
        raise DomainError("Phantom has no shapes")
    if count == 0:
        return np.empty((0, 3))
    parts = [pts for _, _, pts in iter_emission_blocks(phantom, start, start + count, seed)]
    return np.concatenate(parts, axis=0)


def check_within(phantom: Phantom, lo: Sequence[float], hi: Sequence[float]) -> None:
    """Raise when any shape pokes out of the axis-aligned box [lo, hi]"""
    for shape in phantom.shapes:
        s_lo, s_hi = shape.bounding_box()
        if np.any(s_lo < np.asarray(lo) - 1e-9) or np.any(s_hi > np.asarray(hi) + 1e-9):
            raise DomainError(
                f"{shape.kind.value} at {list(shape.center)} extends beyond the reconstruction cube"
            )


def voxelize(phantom: Phantom, centers: Tuple[np.ndarray, np.ndarray, np.ndarray]) -> np.ndarray:
    """Boolean occupancy on a grid given voxel-centre coordinates per axis"""
    xs, ys, zs = centers
    grid = np.stack(np.meshgrid(xs, ys, zs, indexing="ij"), axis=-1)
    return phantom.contains(grid)
