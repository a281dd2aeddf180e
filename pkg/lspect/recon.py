"""
Backprojection reconstruction
Each non-zero detector pixel sends a ray through the centre of the pinhole that
owns it; Siddon lengths times the pixel count are added to the volume. Views
are backprojected into private partial volumes that are summed in view order.
"""

from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, Sequence

import numpy as np

from utils.errors import DomainError, FingerprintMismatchError, PreconditionError

from .geometry import ModuleSpec, ScanPlan
from .projector import ProjectionImage, ProjectionSet, projection_fingerprint
from .siddon import VoxelGrid, backproject_rays


@dataclass(eq=False)
class VoxelVolume:
    grid: VoxelGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != tuple(self.grid.dims):
            raise DomainError(f"volume shape {self.values.shape} does not match grid {self.grid.dims}")
        if np.any(self.values < 0):
            raise DomainError("volume values must be non-negative")

    @classmethod
    def zeros(cls, grid: VoxelGrid) -> "VoxelVolume":
        return cls(grid, np.zeros(grid.dims))

    def __add__(self, other: "VoxelVolume") -> "VoxelVolume":
        if other.grid != self.grid:
            raise DomainError("cannot add volumes on different grids")
        return VoxelVolume(self.grid, self.values + other.values)

    @property
    def max(self) -> float:
        return float(self.values.max())

    def argmax_index(self) -> tuple:
        return tuple(int(i) for i in np.unravel_index(np.argmax(self.values), self.values.shape))


@dataclass(frozen=True, eq=False)
class PixelGridAssignment:
    """Owning pinhole (row-major index within the module) of every detector pixel"""

    owner: np.ndarray

    @classmethod
    def for_module(cls, module: ModuleSpec) -> "PixelGridAssignment":
        L = module.pinhole_array.pitch_L
        m = module.width_multiplier_m
        rows = module.pinhole_array.num_rows
        u, v = module.pixel_centers()
        col = np.clip(np.floor((u + (m - 1) / 2.0 * L) / L + 0.5), 0, m - 1).astype(np.int64)
        row = np.clip(np.floor((v + (rows - 1) / 2.0 * L) / L + 0.5), 0, rows - 1).astype(np.int64)
        return cls(row[:, None] * m + col[None, :])


def _view_rays(images: Sequence[ProjectionImage], plan: ScanPlan, grid: VoxelGrid):
    """
    Ray segments and weights for every non-zero pixel of one view.

    Each ray follows the line from the pixel centre through its owning pinhole
    centre; it starts at the pinhole (nothing behind the plate is imaged) and
    ends beyond the far side of the grid.
    """
    module = plan.module
    poses = plan.poses_for_view(images[0].view_index)
    owner = PixelGridAssignment.for_module(module).owner
    offsets = module.pinhole_offsets()
    u, v = module.pixel_centers()
    lo, hi = grid.bounds()
    half_diag = float(np.linalg.norm(hi - lo)) / 2.0

    starts, ends, weights = [], [], []
    for img in images:
        rows, cols = np.nonzero(img.counts)
        if len(rows) == 0:
            continue
        pose = poses[img.module_index]
        pixel = pose.to_lab(np.column_stack([u[cols], v[rows], np.full(len(rows), -module.detector_gap_h)]))
        pin_uv = offsets[owner[rows, cols]]
        pinhole = pose.to_lab(np.column_stack([pin_uv, np.zeros(len(rows))]))
        direction = pinhole - pixel
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        reach = np.linalg.norm(pinhole - grid.center, axis=1) + half_diag
        starts.append(pinhole)
        ends.append(pinhole + direction * reach[:, None])
        weights.append(img.counts[rows, cols].astype(np.float64))

    if not starts:
        return np.empty((0, 3)), np.empty((0, 3)), np.empty(0)
    return np.concatenate(starts), np.concatenate(ends), np.concatenate(weights)


def _check_view_images(images: Sequence[ProjectionImage], plan: ScanPlan, view_index: int) -> None:
    for img in images:
        if img.view_index != view_index:
            raise DomainError(f"image of view {img.view_index} passed for view {view_index}")
        if img.plan_fingerprint != plan.fingerprint:
            raise FingerprintMismatchError(
                f"image (view {img.view_index}, module {img.module_index}) was simulated for plan "
                f"{img.plan_fingerprint or '<none>'}, not {plan.fingerprint}"
            )
        if img.counts.shape != (plan.module.detector_rows, plan.module.detector_cols):
            raise DomainError(f"image shape {img.counts.shape} does not match the module detector")


def _view_partial(images: Sequence[ProjectionImage], plan: ScanPlan, grid: VoxelGrid) -> np.ndarray:
    partial = np.zeros(grid.dims)
    if images:
        starts, ends, weights = _view_rays(images, plan, grid)
        backproject_rays(starts, ends, weights, grid, partial)
    return partial


def backproject_view(images: Sequence[ProjectionImage], plan: ScanPlan, view_index: int,
                     volume: VoxelVolume) -> VoxelVolume:
    """Volume plus the backprojection of one view's images"""
    plan.poses_for_view(view_index)
    _check_view_images(images, plan, view_index)
    partial = _view_partial(images, plan, volume.grid)
    return VoxelVolume(volume.grid, volume.values + partial)


def reconstruct(proj: ProjectionSet, plan: ScanPlan, grid: VoxelGrid, workers: int = 1,
                verbose: bool = False) -> VoxelVolume:
    """Sum of all view backprojections, accumulated in ascending view order"""
    expected = projection_fingerprint(plan, proj.seed)
    if proj.plan_fingerprint != expected:
        raise FingerprintMismatchError(
            f"projection set {proj.plan_fingerprint} does not belong to plan {plan.fingerprint} "
            f"(expected {expected})"
        )

    present = {(img.view_index, img.module_index) for img in proj.images}
    for k in range(plan.num_views):
        for j in range(plan.num_modules):
            if (k, j) not in present:
                raise PreconditionError(f"missing projection image for view {k}, module {j}")

    def run(view_index: int) -> np.ndarray:
        images = proj.for_view(view_index)
        _check_view_images(images, plan, view_index)
        partial = _view_partial(images, plan, grid)
        if verbose:
            print(f"📊 backprojected view {view_index + 1}/{plan.num_views}")
        return partial

    total = np.zeros(grid.dims)
    views = range(plan.num_views)
    if workers > 1:
        # at most `workers` partial volumes alive; results are consumed in view order
        with ThreadPoolExecutor(max_workers=workers) as pool:
            pending = deque()
            for k in views:
                pending.append(pool.submit(run, k))
                if len(pending) >= workers:
                    total += pending.popleft().result()
            while pending:
                total += pending.popleft().result()
    else:
        for k in views:
            total += run(k)
    return VoxelVolume(grid, total)


def threshold_half_max(volume: VoxelVolume) -> np.ndarray:
    """Boolean mask of voxels at or above half the volume maximum"""
    peak = volume.max
    if not peak > 0:
        raise DomainError("cannot threshold an all-zero volume")
    return volume.values >= peak / 2.0


def central_slices(volume: VoxelVolume) -> Dict[str, np.ndarray]:
    """XY slice at the central z and XZ slice at the central y"""
    nx, ny, nz = volume.values.shape
    return {
        "xy": volume.values[:, :, nz // 2],
        "xz": volume.values[:, ny // 2, :],
    }
