"""
Monte Carlo forward projection
Emission points are split evenly across the views of a ScanPlan. Each point
sends one ray through a uniformly chosen pinhole of the view, aimed at a
uniform point of that pinhole's aperture disk; rays steeper than the pinhole's
half FOV are rejected, the rest increment the detector pixel they hit.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from utils.errors import DomainError
from utils.fingerprint import fingerprint

from .geometry import ModulePose, ModuleSpec, ScanPlan
from .phantom import EMISSION_BLOCK, Phantom, block_rng, iter_emission_blocks

# spawn-key tag for the per-view ray choices (pinhole, aperture point)
RAY_STREAM = 1

# absolute slack on the culling frustum, keeps culling strictly conservative
_CULL_SLACK = 1e-9


@dataclass(eq=False)
class ProjectionImage:
    """Count grid of one module for one view"""

    view_index: int
    module_index: int
    counts: np.ndarray
    pixel_pitch: float
    plan_fingerprint: str = ""

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(eq=False)
class ProjectionSet:
    """Every (view, module) image of one simulated acquisition"""

    plan_fingerprint: str
    seed: int
    num_views: int
    num_modules: int
    images: List[ProjectionImage] = field(default_factory=list)

    def image(self, view_index: int, module_index: int) -> ProjectionImage:
        idx = view_index * self.num_modules + module_index
        if 0 <= idx < len(self.images):
            img = self.images[idx]
            if img.view_index == view_index and img.module_index == module_index:
                return img
        for img in self.images:
            if img.view_index == view_index and img.module_index == module_index:
                return img
        raise DomainError(f"no projection image for view {view_index}, module {module_index}")

    def for_view(self, view_index: int) -> List[ProjectionImage]:
        return [self.image(view_index, j) for j in range(self.num_modules)]

    def total_counts(self) -> int:
        return int(sum(img.total for img in self.images))


def projection_fingerprint(plan: ScanPlan, seed: int) -> str:
    """Identity of a projection set: the plan plus the seed that drove it"""
    return fingerprint({"plan": plan.fingerprint, "seed": int(seed)})


def view_emission_range(plan: ScanPlan, phantom: Phantom, view_index: int) -> Tuple[int, int]:
    """Global emission indices acquired during one view"""
    E = int(phantom.total_emissions)
    n = plan.num_views
    return view_index * E // n, (view_index + 1) * E // n


def visibility_mask(points: np.ndarray, poses: Sequence[ModulePose], module: ModuleSpec) -> np.ndarray:
    """
    True for points inside at least one module's bounding frustum.

    The frustum widens the pinhole lattice by w * tan(alpha/2) + d/2 at depth w,
    which contains every ray the FOV cutoff could accept.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    pinholes = module.pinhole_array
    offsets = module.pinhole_offsets()
    u_max = np.abs(offsets[:, 0]).max()
    v_max = np.abs(offsets[:, 1]).max()
    radius = pinholes.diameter_d / 2.0

    visible = np.zeros(len(points), dtype=bool)
    for pose in poses:
        local = pose.to_local(points)
        w = local[:, 2]
        margin = w * pinholes.tan_half_fov + radius + _CULL_SLACK
        visible |= (w > 0) & (np.abs(local[:, 0]) <= u_max + margin) & (np.abs(local[:, 1]) <= v_max + margin)
    return visible


def cull_emissions(points: np.ndarray, poses: Sequence[ModulePose], module: ModuleSpec) -> np.ndarray:
    """Drop emission points no pinhole of the view can accept"""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    return points[visibility_mask(points, poses, module)]


def project_rays(emission_local: np.ndarray, aperture_uv: np.ndarray, gap_h: float,
                 tan_half_fov: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Carry rays from emission points (plate frame) through aperture points to the detector.

    Returns detector (u, v) and the acceptance mask; a ray is rejected when the
    emission is not in front of the plate or its angle to the plate normal
    exceeds the half FOV.
    """
    u_e, v_e, w_e = emission_local[:, 0], emission_local[:, 1], emission_local[:, 2]
    lat_u = aperture_uv[:, 0] - u_e
    lat_v = aperture_uv[:, 1] - v_e
    in_front = w_e > 0
    safe_w = np.where(in_front, w_e, 1.0)
    accepted = in_front & (np.hypot(lat_u, lat_v) <= safe_w * tan_half_fov)
    scale = gap_h / safe_w
    return aperture_uv[:, 0] + lat_u * scale, aperture_uv[:, 1] + lat_v * scale, accepted


def _pixel_index(u_d: np.ndarray, v_d: np.ndarray, module: ModuleSpec) -> np.ndarray:
    """Flat row-major pixel index of detector hits; -1 for misses"""
    pp = module.pixel_pitch
    rows, cols = module.detector_rows, module.detector_cols
    col = np.floor((u_d + cols * pp / 2.0) / pp).astype(np.int64)
    row = np.floor((v_d + rows * pp / 2.0) / pp).astype(np.int64)
    hit = (col >= 0) & (col < cols) & (row >= 0) & (row < rows)
    return np.where(hit, row * cols + col, -1)


def _ray_choices(seed: int, view_index: int, block_index: int, n_total: int,
                 radius: float) -> Tuple[np.ndarray, np.ndarray]:
    """Pinhole choice and aperture offset for every slot of one emission block"""
    rng = block_rng(seed, RAY_STREAM, view_index, block_index)
    pick = rng.integers(0, n_total, size=EMISSION_BLOCK)
    r = radius * np.sqrt(rng.random(EMISSION_BLOCK))
    phase = 2.0 * np.pi * rng.random(EMISSION_BLOCK)
    return pick, np.column_stack([r * np.cos(phase), r * np.sin(phase)])


def simulate_view(plan: ScanPlan, phantom: Phantom, view_index: int, seed: int,
                  cull: bool = True) -> List[ProjectionImage]:
    """Count images of every module for one view"""
    poses = plan.poses_for_view(view_index)
    module = plan.module
    pinholes = module.pinhole_array
    offsets = module.pinhole_offsets()
    n_pin = len(offsets)
    N = plan.num_modules
    rows, cols = module.detector_rows, module.detector_cols
    counts = np.zeros((N, rows * cols), dtype=np.int64)

    start, stop = view_emission_range(plan, phantom, view_index)
    for block, first, points in iter_emission_blocks(phantom, start, stop, seed):
        pick, aperture = _ray_choices(seed, view_index, block, N * n_pin, pinholes.diameter_d / 2.0)
        lo = first - block * EMISSION_BLOCK
        pick = pick[lo:lo + len(points)]
        aperture = aperture[lo:lo + len(points)]

        keep = visibility_mask(points, poses, module) if cull else np.ones(len(points), dtype=bool)
        module_of = pick // n_pin
        pin_of = pick % n_pin
        for j, pose in enumerate(poses):
            sel = keep & (module_of == j)
            if not sel.any():
                continue
            local = pose.to_local(points[sel])
            aperture_uv = offsets[pin_of[sel]] + aperture[sel]
            u_d, v_d, accepted = project_rays(local, aperture_uv, module.detector_gap_h,
                                              pinholes.tan_half_fov)
            flat = _pixel_index(u_d[accepted], v_d[accepted], module)
            flat = flat[flat >= 0]
            counts[j] += np.bincount(flat, minlength=rows * cols)

    return [
        ProjectionImage(view_index, j, counts[j].reshape(rows, cols), module.pixel_pitch, plan.fingerprint)
        for j in range(N)
    ]


def simulate_all(plan: ScanPlan, phantom: Phantom, seed: int, workers: int = 1,
                 verbose: bool = False) -> ProjectionSet:
    """Simulate every view; output depends only on (plan, phantom, seed)"""

    def run(view_index: int) -> List[ProjectionImage]:
        images = simulate_view(plan, phantom, view_index, seed)
        if verbose:
            total = sum(img.total for img in images)
            print(f"📊 view {view_index + 1}/{plan.num_views}: {total} counts")
        return images

    views = range(plan.num_views)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_view = list(pool.map(run, views))
    else:
        per_view = [run(k) for k in views]

    return ProjectionSet(
        plan_fingerprint=projection_fingerprint(plan, seed),
        seed=int(seed),
        num_views=plan.num_views,
        num_modules=plan.num_modules,
        images=[img for images in per_view for img in images],
    )
