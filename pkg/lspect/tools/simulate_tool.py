"""
Simulate tool
Monte Carlo projection of the configured phantom over every view of the scan plan
"""

import os
import time
from typing import Any, Dict, Optional

from utils.errors import EXIT_FAILURE, LSpectError
from utils.responses import create_error_response, create_success_response

from ..config import ExperimentConfig
from ..projector import simulate_all
from ..storage import PROJECTION_DIR, write_manifest, write_projection_set


def run_simulate_stage(config: ExperimentConfig, out_dir: str, workers: Optional[int] = None,
                       verbose: bool = False) -> Dict[str, Any]:
    plan = config.scan_plan()
    phantom = config.phantom()
    workers = workers or config.workers

    print(f"🚀 Simulating {phantom.total_emissions} emissions over {plan.num_views} views "
          f"x {plan.num_modules} modules ({workers} workers)")
    start = time.perf_counter()
    proj = simulate_all(plan, phantom, config.seed, workers=workers, verbose=verbose)
    elapsed = time.perf_counter() - start

    stage_dir = os.path.join(out_dir, PROJECTION_DIR)
    previews = config.get_section("run").get("previews", False)
    files = write_projection_set(stage_dir, proj, plan, previews=previews)
    total = proj.total_counts()
    write_manifest(
        stage_dir, "simulate", config.manifest_echo(), config.seed, plan.fingerprint, files,
        extra={
            "projections": {
                "num_views": proj.num_views,
                "num_modules": proj.num_modules,
                "seed": proj.seed,
                "projection_fingerprint": proj.plan_fingerprint,
                "total_counts": total,
                "detector_dims": [plan.module.detector_rows, plan.module.detector_cols],
                "binning": plan.module.binning,
            }
        },
    )
    print(f"📊 {total} counts recorded in {elapsed:.1f}s")
    return {
        "num_images": len(proj.images),
        "total_counts": total,
        "projection_fingerprint": proj.plan_fingerprint,
        "plan_fingerprint": plan.fingerprint,
        "seconds": elapsed,
        "directory": stage_dir,
    }


def simulate_tool(config: ExperimentConfig):
    """Create simulate tool function"""

    def simulate(out_dir: str, workers: Optional[int] = None, verbose: bool = False) -> str:
        """Simulate all projections and write them as raw grids with sidecars."""
        try:
            return create_success_response(run_simulate_stage(config, out_dir, workers, verbose))
        except LSpectError as e:
            return create_error_response("Simulation failed", str(e), exit_code=e.exit_code)
        except Exception as e:
            return create_error_response("Simulation failed", str(e), exit_code=EXIT_FAILURE)

    return simulate
