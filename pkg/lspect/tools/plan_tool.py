"""
Plan tool
Prints and stores the design figures (phi, n, theta, h, alpha) of the configured system
"""

import os
from typing import Any, Dict, Optional

from utils.errors import EXIT_FAILURE, LSpectError
from utils.responses import create_error_response, create_success_response

from ..config import ExperimentConfig
from ..geometry import describe_plan
from ..storage import write_csv, write_manifest

PLAN_DIR = "plan"

# rows of the printed table: (label, key, format)
PLAN_ROWS = [
    ("coverage phi (deg)", "coverage_phi_deg", "{:.4f}"),
    ("view angles n", "num_views_n", "{}"),
    ("module step theta (deg)", "step_theta_deg", "{:.4f}"),
    ("detector gap h (mm)", "detector_gap_h_mm", "{:.4f}"),
    ("gap bound L*t/(2d) (mm)", "gap_bound_mm", "{:.4f}"),
    ("pinhole FOV alpha (deg)", "pinhole_fov_alpha_deg", "{:.4f}"),
    ("modules N", "num_modules_N", "{}"),
    ("module width P (mm)", "module_width_P_mm", "{:.4f}"),
    ("object gap g (mm)", "object_gap_g_mm", "{:.4f}"),
    ("center shift s (mm)", "center_shift_s_mm", "{:.4f}"),
    ("pinholes per module", "pinholes_per_module", "{}"),
    ("detector pixels (rows x cols)", "detector_pixels", "{0[0]} x {0[1]}"),
    ("plan fingerprint", "plan_fingerprint", "{}"),
]


def format_plan_table(table: Dict[str, Any]) -> str:
    width = max(len(label) for label, _, _ in PLAN_ROWS)
    return "\n".join(f"{label:<{width}}  {fmt.format(table[key])}" for label, key, fmt in PLAN_ROWS)


def run_plan_stage(config: ExperimentConfig, out_dir: Optional[str] = None) -> Dict[str, Any]:
    """Build the scan plan, print its table and optionally write plan.txt/plan.csv"""
    plan = config.scan_plan()
    table = describe_plan(plan)
    text = format_plan_table(table)
    print(text)

    result = {"plan": table, "files": []}
    if out_dir:
        stage_dir = os.path.join(out_dir, PLAN_DIR)
        os.makedirs(stage_dir, exist_ok=True)
        with open(os.path.join(stage_dir, "plan.txt"), "w", encoding="utf-8") as f:
            f.write(text + "\n")
        write_csv(
            os.path.join(stage_dir, "plan.csv"),
            ["quantity", "value"],
            [(key, table[key]) for _, key, _ in PLAN_ROWS if key != "detector_pixels"],
        )
        files = ["plan.txt", "plan.csv"]
        write_manifest(stage_dir, "plan", config.manifest_echo(), config.seed, plan.fingerprint, files)
        result["files"] = [os.path.join(stage_dir, f) for f in files]
    return result


def plan_tool(config: ExperimentConfig):
    """Create plan tool function"""

    def plan(out_dir: Optional[str] = None) -> str:
        """Describe the scan plan of the configured system."""
        try:
            return create_success_response(run_plan_stage(config, out_dir))
        except LSpectError as e:
            return create_error_response("Failed to build scan plan", str(e), exit_code=e.exit_code)
        except Exception as e:
            return create_error_response("Failed to build scan plan", str(e), exit_code=EXIT_FAILURE)

    return plan
