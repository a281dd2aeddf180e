"""
Siddon ray traversal
Exact intersection lengths of a ray segment with a regular voxel grid.

The walk merges the three per-axis plane-crossing sequences in parametric
order and classifies every sub-segment by its midpoint. A sub-segment lying on
a shared voxel face therefore belongs to the voxel with the larger index on
that axis (clamped to the last voxel on the grid's far face).
"""

import math
import time
from dataclasses import dataclass
from typing import Any, Dict, List, Sequence, Tuple, Union

import numpy as np
from numba import njit

from utils.errors import DomainError
from utils.validators import validate_positive, validate_positive_int, validate_vector3

Vec3 = Tuple[float, float, float]
VoxelIndex = Tuple[int, int, int]

# sub-segments shorter than this fraction of the ray are dropped
PARAM_TOL = 1e-12


@dataclass(frozen=True)
class VoxelGrid:
    """Axis-aligned grid; origin is the minimum corner"""

    dims: Tuple[int, int, int]
    origin: Vec3
    voxel_size: Vec3

    def __post_init__(self):
        dims = tuple(validate_positive_int(n, "grid dimension") for n in self.dims)
        if len(dims) != 3:
            raise DomainError(f"grid dims must have 3 entries, got {self.dims}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "origin", validate_vector3(self.origin, "grid origin"))
        size = validate_vector3(self.voxel_size, "voxel size")
        for v in size:
            validate_positive(v, "voxel size")
        object.__setattr__(self, "voxel_size", size)

    @classmethod
    def centered(cls, dims: Sequence[int], extent: Union[float, Sequence[float]]) -> "VoxelGrid":
        """Grid of the given dims spanning `extent` mm per axis, centred on the origin"""
        extent = np.broadcast_to(np.asarray(extent, dtype=np.float64), (3,))
        size = extent / np.asarray(dims, dtype=np.float64)
        return cls(tuple(int(n) for n in dims), tuple(-extent / 2.0), tuple(size))

    @property
    def dims_array(self) -> np.ndarray:
        return np.asarray(self.dims, dtype=np.int64)

    @property
    def origin_array(self) -> np.ndarray:
        return np.asarray(self.origin, dtype=np.float64)

    @property
    def voxel_array(self) -> np.ndarray:
        return np.asarray(self.voxel_size, dtype=np.float64)

    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        lo = self.origin_array
        return lo, lo + self.dims_array * self.voxel_array

    @property
    def center(self) -> np.ndarray:
        lo, hi = self.bounds()
        return (lo + hi) / 2.0

    def axis_centers(self, axis: int) -> np.ndarray:
        return self.origin[axis] + (np.arange(self.dims[axis]) + 0.5) * self.voxel_size[axis]

    def centers(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.axis_centers(0), self.axis_centers(1), self.axis_centers(2)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "dims": list(self.dims),
            "origin": list(self.origin),
            "voxel_size": list(self.voxel_size),
        }


@dataclass(frozen=True)
class RaySegment:
    start: Vec3
    end: Vec3

    def __post_init__(self):
        start = validate_vector3(self.start, "ray start")
        end = validate_vector3(self.end, "ray end")
        if start == end:
            raise DomainError("degenerate ray: start and end coincide")
        object.__setattr__(self, "start", start)
        object.__setattr__(self, "end", end)

    @property
    def length(self) -> float:
        return float(np.linalg.norm(np.subtract(self.end, self.start)))


@njit(cache=True, nogil=True)
def _index(coord, origin, size, n):
    i = int(math.floor((coord - origin) / size))
    if i < 0:
        return 0
    if i >= n:
        return n - 1
    return i


@njit(cache=True, nogil=True)
def _walk(start, end, origin, voxel_size, dims, out_idx, out_len):
    """Fill out_idx/out_len with crossed voxels in traversal order; return the count"""
    delta = end - start
    seg_len = math.sqrt(delta[0] * delta[0] + delta[1] * delta[1] + delta[2] * delta[2])

    # clip to the grid box
    a_min = 0.0
    a_max = 1.0
    for ax in range(3):
        lo = origin[ax]
        hi = origin[ax] + dims[ax] * voxel_size[ax]
        if delta[ax] == 0.0:
            if start[ax] < lo or start[ax] > hi:
                return 0
        else:
            a0 = (lo - start[ax]) / delta[ax]
            a1 = (hi - start[ax]) / delta[ax]
            if a0 > a1:
                a0, a1 = a1, a0
            if a0 > a_min:
                a_min = a0
            if a1 < a_max:
                a_max = a1
    if a_max - a_min <= PARAM_TOL:
        return 0

    # first plane crossing after entry on every moving axis
    nxt = np.empty(3)
    plane = np.zeros(3, dtype=np.int64)
    step = np.zeros(3, dtype=np.int64)
    for ax in range(3):
        if delta[ax] == 0.0:
            nxt[ax] = np.inf
            continue
        pos = (start[ax] + a_min * delta[ax] - origin[ax]) / voxel_size[ax]
        if delta[ax] > 0.0:
            step[ax] = 1
            plane[ax] = int(math.floor(pos)) + 1
        else:
            step[ax] = -1
            plane[ax] = int(math.ceil(pos)) - 1
        nxt[ax] = (origin[ax] + plane[ax] * voxel_size[ax] - start[ax]) / delta[ax]

    cap = out_len.shape[0]
    count = 0
    alpha = a_min
    while True:
        a_next = min(nxt[0], min(nxt[1], nxt[2]))
        if a_next > a_max:
            a_next = a_max
        if a_next - alpha > PARAM_TOL:
            mid = 0.5 * (alpha + a_next)
            i = _index(start[0] + mid * delta[0], origin[0], voxel_size[0], dims[0])
            j = _index(start[1] + mid * delta[1], origin[1], voxel_size[1], dims[1])
            k = _index(start[2] + mid * delta[2], origin[2], voxel_size[2], dims[2])
            length = (a_next - alpha) * seg_len
            if count > 0 and out_idx[count - 1, 0] == i and out_idx[count - 1, 1] == j \
                    and out_idx[count - 1, 2] == k:
                out_len[count - 1] += length
            else:
                if count == cap:
                    return count
                out_idx[count, 0] = i
                out_idx[count, 1] = j
                out_idx[count, 2] = k
                out_len[count] = length
                count += 1
        if a_next >= a_max:
            break
        for ax in range(3):
            if nxt[ax] <= a_next:
                plane[ax] += step[ax]
                nxt[ax] = (origin[ax] + plane[ax] * voxel_size[ax] - start[ax]) / delta[ax]
        if a_next > alpha:
            alpha = a_next
    return count


@njit(cache=True, nogil=True)
def _backproject_kernel(starts, ends, weights, origin, voxel_size, dims, volume):
    cap = dims[0] + dims[1] + dims[2] + 3
    idx = np.empty((cap, 3), dtype=np.int64)
    lens = np.empty(cap)
    for r in range(starts.shape[0]):
        n = _walk(starts[r], ends[r], origin, voxel_size, dims, idx, lens)
        w = weights[r]
        for q in range(n):
            volume[idx[q, 0], idx[q, 1], idx[q, 2]] += lens[q] * w


def _buffers(grid: VoxelGrid) -> Tuple[np.ndarray, np.ndarray]:
    cap = int(sum(grid.dims)) + 3
    return np.empty((cap, 3), dtype=np.int64), np.empty(cap)


def trace(ray: RaySegment, grid: VoxelGrid) -> List[Tuple[VoxelIndex, float]]:
    """Voxels crossed by the segment with their intersection lengths, in traversal order"""
    idx, lens = _buffers(grid)
    n = _walk(
        np.asarray(ray.start, dtype=np.float64),
        np.asarray(ray.end, dtype=np.float64),
        grid.origin_array,
        grid.voxel_array,
        grid.dims_array,
        idx,
        lens,
    )
    return [((int(idx[q, 0]), int(idx[q, 1]), int(idx[q, 2])), float(lens[q])) for q in range(n)]


def backproject_rays(starts: np.ndarray, ends: np.ndarray, weights: np.ndarray,
                     grid: VoxelGrid, volume: np.ndarray) -> np.ndarray:
    """Add weight * intersection length of every ray into `volume` (in place, ray order)"""
    starts = np.ascontiguousarray(starts, dtype=np.float64)
    ends = np.ascontiguousarray(ends, dtype=np.float64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    if starts.shape != ends.shape or starts.ndim != 2 or starts.shape[1] != 3:
        raise DomainError(f"ray arrays must be (R, 3), got {starts.shape} and {ends.shape}")
    if len(weights) != len(starts):
        raise DomainError(f"{len(weights)} weights for {len(starts)} rays")
    if volume.shape != tuple(grid.dims):
        raise DomainError(f"volume shape {volume.shape} does not match grid {grid.dims}")
    if np.any(np.all(starts == ends, axis=1)):
        raise DomainError("degenerate ray: start and end coincide")
    if len(starts):
        _backproject_kernel(starts, ends, weights, grid.origin_array, grid.voxel_array,
                            grid.dims_array, volume)
    return volume


def benchmark(grid: VoxelGrid, num_rays: int = 100_000, seed: int = 0) -> Dict[str, Any]:
    """Trace random chords of the grid's circumscribed sphere and report throughput"""
    rng = np.random.default_rng(seed)
    lo, hi = grid.bounds()
    radius = float(np.linalg.norm(hi - lo))
    directions = rng.normal(size=(2, num_rays, 3))
    directions /= np.linalg.norm(directions, axis=-1, keepdims=True)
    starts = grid.center + radius * directions[0]
    ends = grid.center + radius * directions[1]
    volume = np.zeros(grid.dims)
    weights = np.ones(num_rays)

    # first call compiles
    backproject_rays(starts[:1], ends[:1], weights[:1], grid, volume)
    begin = time.perf_counter()
    backproject_rays(starts, ends, weights, grid, volume)
    elapsed = time.perf_counter() - begin
    return {
        "rays": num_rays,
        "grid_dims": list(grid.dims),
        "seconds": elapsed,
        "rays_per_second": num_rays / elapsed if elapsed > 0 else float("inf"),
    }
