"""
Phantom voxelize tool
Writes the ground-truth occupancy of the configured phantom on the reconstruction grid
"""

import os
from typing import Any, Dict

from utils.errors import EXIT_FAILURE, LSpectError
from utils.responses import create_error_response, create_success_response

from ..config import ExperimentConfig
from ..phantom import voxelize
from ..storage import write_manifest, write_volume

PHANTOM_DIR = "phantom"
TRUTH_STEM = "truth"


def run_phantom_stage(config: ExperimentConfig, out_dir: str) -> Dict[str, Any]:
    grid = config.voxel_grid()
    truth = voxelize(config.phantom(), grid.centers())
    plan_fingerprint = config.scan_plan().fingerprint

    stage_dir = os.path.join(out_dir, PHANTOM_DIR)
    files = write_volume(os.path.join(stage_dir, TRUTH_STEM), truth, grid, plan_fingerprint, dtype="uint8")
    write_manifest(
        stage_dir, "phantom", config.manifest_echo(), config.seed, plan_fingerprint,
        [os.path.basename(f) for f in files],
        extra={"occupied_voxels": int(truth.sum())},
    )
    print(f"✅ Voxelized phantom: {int(truth.sum())} of {truth.size} voxels occupied")
    return {"occupied_voxels": int(truth.sum()), "grid": grid.to_dict(), "files": files}


def voxelize_tool(config: ExperimentConfig):
    """Create phantom voxelize tool function"""

    def phantom_voxelize(out_dir: str) -> str:
        """Write the phantom ground-truth occupancy volume."""
        try:
            return create_success_response(run_phantom_stage(config, out_dir))
        except LSpectError as e:
            return create_error_response("Failed to voxelize phantom", str(e), exit_code=e.exit_code)
        except Exception as e:
            return create_error_response("Failed to voxelize phantom", str(e), exit_code=EXIT_FAILURE)

    return phantom_voxelize
