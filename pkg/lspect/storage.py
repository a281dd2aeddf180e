"""
On-disk artifacts
Raw little-endian grids with JSON sidecars, PGM previews, CSV tables and the
per-stage manifest that makes every output directory reproducible.
"""

import csv
import json
import os
from datetime import datetime
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from utils.errors import DomainError, PreconditionError
from utils.responses import json_default

from . import __version__
from .geometry import ScanPlan
from .projector import ProjectionImage, ProjectionSet
from .recon import VoxelVolume
from .siddon import VoxelGrid

TOOL_NAME = "lspect"
MANIFEST = "manifest.json"
PROJECTION_DIR = "projections"
PREVIEW_DIR = "previews"

UINT16_MAX = np.iinfo(np.uint16).max


def projection_stem(view_index: int, module_index: int) -> str:
    return f"proj_v{view_index:04d}_m{module_index:03d}"


def write_json(path: str, payload: Dict[str, Any]) -> str:
    with open(path, "w", encoding="utf-8") as file:
        json.dump(payload, file, indent=2, default=json_default)
        file.write("\n")
    return path


def read_json(path: str) -> Dict[str, Any]:
    if not os.path.exists(path):
        raise PreconditionError(f"Required file not found: {path}")
    with open(path, "r", encoding="utf-8") as file:
        return json.load(file)


def _require(path: str) -> str:
    if not os.path.exists(path):
        raise PreconditionError(f"Required file not found: {path}")
    return path


def write_pgm(path: str, image: np.ndarray) -> str:
    """8-bit binary PGM, scaled so the image maximum maps to 255"""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise DomainError(f"PGM images must be 2D, got shape {image.shape}")
    peak = image.max() if image.size else 0.0
    scaled = np.zeros(image.shape, dtype=np.uint8)
    if peak > 0:
        scaled = np.clip(np.rint(image / peak * 255.0), 0, 255).astype(np.uint8)
    rows, cols = scaled.shape
    with open(path, "wb") as file:
        file.write(f"P5\n{cols} {rows}\n255\n".encode("ascii"))
        file.write(scaled.tobytes())
    return path


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    with open(path, "w", encoding="utf-8", newline="") as file:
        writer = csv.writer(file)
        writer.writerow(header)
        for row in rows:
            writer.writerow([f"{v:.10g}" if isinstance(v, float) else v for v in row])
    return path


def read_csv(path: str) -> Tuple[List[str], np.ndarray]:
    with open(_require(path), "r", encoding="utf-8", newline="") as file:
        reader = csv.reader(file)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader]
    return header, np.asarray(rows, dtype=np.float64).reshape(-1, len(header))


# --- projections ---------------------------------------------------------------

def write_projection_image(out_dir: str, image: ProjectionImage, plan: ScanPlan, seed: int,
                           projection_fingerprint: str) -> List[str]:
    if image.counts.size and image.counts.max() > UINT16_MAX:
        raise DomainError(
            f"view {image.view_index} module {image.module_index} has {int(image.counts.max())} counts "
            f"in one pixel, more than 16-bit raw files hold; raise geometry.binning or lower emissions"
        )
    stem = os.path.join(out_dir, projection_stem(image.view_index, image.module_index))
    image.counts.astype("<u2").tofile(stem + ".raw")
    pose = plan.poses_for_view(image.view_index)[image.module_index]
    write_json(stem + ".json", {
        "dims": list(image.counts.shape),
        "dtype": "uint16",
        "byte_order": "little",
        "pixel_pitch": image.pixel_pitch,
        "binning": plan.module.binning,
        "view_index": image.view_index,
        "module_index": image.module_index,
        "view_angle_deg": plan.view_angles[image.view_index],
        "pose": pose.to_dict(),
        "seed": int(seed),
        "plan_fingerprint": image.plan_fingerprint,
        "projection_fingerprint": projection_fingerprint,
    })
    return [stem + ".raw", stem + ".json"]


def read_projection_image(out_dir: str, view_index: int, module_index: int) -> ProjectionImage:
    stem = os.path.join(out_dir, projection_stem(view_index, module_index))
    meta = read_json(stem + ".json")
    rows, cols = meta["dims"]
    counts = np.fromfile(_require(stem + ".raw"), dtype="<u2")
    if counts.size != rows * cols:
        raise PreconditionError(f"{stem}.raw holds {counts.size} values, expected {rows * cols}")
    return ProjectionImage(
        view_index=meta["view_index"],
        module_index=meta["module_index"],
        counts=counts.reshape(rows, cols).astype(np.int64),
        pixel_pitch=meta["pixel_pitch"],
        plan_fingerprint=meta["plan_fingerprint"],
    )


def write_projection_set(out_dir: str, proj: ProjectionSet, plan: ScanPlan,
                         previews: bool = False) -> List[str]:
    """Write every image plus sidecars; returns the written file names relative to out_dir"""
    os.makedirs(out_dir, exist_ok=True)
    files: List[str] = []
    for image in proj.images:
        files += write_projection_image(out_dir, image, plan, proj.seed, proj.plan_fingerprint)
    if previews:
        preview_dir = os.path.join(out_dir, PREVIEW_DIR)
        os.makedirs(preview_dir, exist_ok=True)
        for k in range(proj.num_views):
            strip = np.concatenate([img.counts for img in proj.for_view(k)], axis=1)
            files.append(write_pgm(os.path.join(preview_dir, f"view_{k:04d}.pgm"), strip))
    return [os.path.relpath(f, out_dir) for f in files]


def read_projection_set(out_dir: str) -> ProjectionSet:
    """Load a projection directory written by write_projection_set"""
    manifest = read_manifest(out_dir)
    layout = manifest.get("projections")
    if not layout:
        raise PreconditionError(f"{os.path.join(out_dir, MANIFEST)} does not describe a projection set")
    images = [
        read_projection_image(out_dir, k, j)
        for k in range(layout["num_views"])
        for j in range(layout["num_modules"])
    ]
    return ProjectionSet(
        plan_fingerprint=layout["projection_fingerprint"],
        seed=layout["seed"],
        num_views=layout["num_views"],
        num_modules=layout["num_modules"],
        images=images,
    )


# --- volumes -----------------------------------------------------------------

def write_volume(path_stem: str, values: np.ndarray, grid: VoxelGrid, plan_fingerprint: str,
                 dtype: str = "float32") -> List[str]:
    """Raw [ix, iy, iz] C-order grid (float32 or uint8) plus sidecar"""
    if dtype == "float32":
        data = np.asarray(values).astype("<f4")
    elif dtype == "uint8":
        data = np.asarray(values).astype(np.uint8)
    else:
        raise DomainError(f"unsupported volume dtype {dtype}")
    if data.shape != tuple(grid.dims):
        raise DomainError(f"volume shape {data.shape} does not match grid {grid.dims}")
    directory = os.path.dirname(path_stem)
    if directory:
        os.makedirs(directory, exist_ok=True)
    data.tofile(path_stem + ".raw")
    meta = grid.to_dict()
    meta.update({"dtype": dtype, "byte_order": "little", "plan_fingerprint": plan_fingerprint})
    write_json(path_stem + ".json", meta)
    return [path_stem + ".raw", path_stem + ".json"]


def read_volume(path_stem: str) -> Tuple[VoxelVolume, Dict[str, Any]]:
    """Load a float32 volume; returns the volume and its sidecar"""
    meta = read_json(path_stem + ".json")
    grid = VoxelGrid(tuple(meta["dims"]), tuple(meta["origin"]), tuple(meta["voxel_size"]))
    dtype = "<f4" if meta.get("dtype", "float32") == "float32" else np.uint8
    values = np.fromfile(_require(path_stem + ".raw"), dtype=dtype)
    if values.size != int(np.prod(grid.dims)):
        raise PreconditionError(f"{path_stem}.raw holds {values.size} values, expected {int(np.prod(grid.dims))}")
    return VoxelVolume(grid, values.reshape(grid.dims).astype(np.float64)), meta


def write_slices(out_dir: str, slices: Dict[str, np.ndarray]) -> List[str]:
    """PGM per slice; rows run along the second in-plane axis"""
    return [write_pgm(os.path.join(out_dir, f"slice_{name}.pgm"), image.T[::-1]) for name, image in slices.items()]


# --- manifests ---------------------------------------------------------------

def write_manifest(out_dir: str, stage: str, echo: Dict[str, Any], seed: Optional[int],
                   plan_fingerprint: Optional[str], files: Sequence[str],
                   extra: Optional[Dict[str, Any]] = None) -> str:
    os.makedirs(out_dir, exist_ok=True)
    manifest = {
        "tool": TOOL_NAME,
        "version": __version__,
        "stage": stage,
        "created_at": datetime.now().isoformat(timespec="seconds"),
        "seed": seed,
        "plan_fingerprint": plan_fingerprint,
        **echo,
        "files": sorted(files),
    }
    if extra:
        manifest.update(extra)
    return write_json(os.path.join(out_dir, MANIFEST), manifest)


def read_manifest(out_dir: str) -> Dict[str, Any]:
    return read_json(os.path.join(out_dir, MANIFEST))
