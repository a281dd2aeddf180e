"""
Reconstruct tool
Backprojects a stored projection set into the configured cube
"""

import os
import time
from typing import Any, Dict, Optional

from utils.errors import EXIT_FAILURE, FingerprintMismatchError, LSpectError
from utils.responses import create_error_response, create_success_response

from ..config import ExperimentConfig
from ..recon import central_slices, reconstruct, threshold_half_max
from ..storage import (
    PROJECTION_DIR,
    read_manifest,
    read_projection_set,
    write_manifest,
    write_slices,
    write_volume,
)

RECON_DIR = "recon"
VOLUME_STEM = "volume"
MASK_STEM = "volume_halfmax"


def run_reconstruct_stage(config: ExperimentConfig, out_dir: str, workers: Optional[int] = None,
                          verbose: bool = False) -> Dict[str, Any]:
    plan = config.scan_plan()
    grid = config.voxel_grid()
    recon_cfg = config.get_section("recon")
    workers = workers or config.workers

    proj_dir = os.path.join(out_dir, PROJECTION_DIR)
    manifest = read_manifest(proj_dir)
    if manifest.get("plan_fingerprint") != plan.fingerprint:
        raise FingerprintMismatchError(
            f"projections in {proj_dir} were simulated for plan {manifest.get('plan_fingerprint')}, "
            f"the configured plan is {plan.fingerprint}"
        )
    proj = read_projection_set(proj_dir)

    print(f"🚀 Backprojecting {len(proj.images)} images into {list(grid.dims)} voxels ({workers} workers)")
    start = time.perf_counter()
    volume = reconstruct(proj, plan, grid, workers=workers, verbose=verbose)
    elapsed = time.perf_counter() - start

    stage_dir = os.path.join(out_dir, RECON_DIR)
    files = write_volume(os.path.join(stage_dir, VOLUME_STEM), volume.values, grid, plan.fingerprint)
    if recon_cfg.get("threshold_halfmax"):
        files += write_volume(os.path.join(stage_dir, MASK_STEM), threshold_half_max(volume), grid,
                              plan.fingerprint, dtype="uint8")
    if recon_cfg.get("slices"):
        files += write_slices(stage_dir, central_slices(volume))

    files = [os.path.basename(f) for f in files]
    write_manifest(
        stage_dir, "reconstruct", config.manifest_echo(), config.seed, plan.fingerprint, files,
        extra={"projection_fingerprint": proj.plan_fingerprint, "volume_max": volume.max},
    )
    print(f"📊 Reconstructed in {elapsed:.1f}s, peak {volume.max:.4g} at voxel {volume.argmax_index()}")
    return {
        "volume_max": volume.max,
        "argmax_voxel": list(volume.argmax_index()),
        "seconds": elapsed,
        "files": files,
        "directory": stage_dir,
    }


def reconstruct_tool(config: ExperimentConfig):
    """Create reconstruct tool function"""

    def reconstruct_volume(out_dir: str, workers: Optional[int] = None, verbose: bool = False) -> str:
        """Reconstruct the volume from the projections stored under out_dir."""
        try:
            return create_success_response(run_reconstruct_stage(config, out_dir, workers, verbose))
        except LSpectError as e:
            return create_error_response("Reconstruction failed", str(e), exit_code=e.exit_code)
        except Exception as e:
            return create_error_response("Reconstruction failed", str(e), exit_code=EXIT_FAILURE)

    return reconstruct_volume
