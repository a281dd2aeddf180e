"""
Pipeline runner
Runs the requested stages in order through their tools and turns the first
failure into a process exit status.
"""

import json
from typing import Any, Callable, Dict, List, Optional, Sequence

from utils.errors import EXIT_CONFIG, EXIT_FAILURE, EXIT_OK

from ..config import ExperimentConfig
from .analyze_tool import analyze_tool
from .phantom_tool import voxelize_tool
from .plan_tool import plan_tool
from .reconstruct_tool import reconstruct_tool
from .simulate_tool import simulate_tool

STAGES = ("plan", "phantom", "simulate", "reconstruct", "analyze")


def _stage_calls(config: ExperimentConfig, out_dir: str, workers: Optional[int],
                 verbose: bool) -> Dict[str, Callable[[], str]]:
    plan = plan_tool(config)
    voxelize = voxelize_tool(config)
    simulate = simulate_tool(config)
    reconstruct = reconstruct_tool(config)
    analyze = analyze_tool(config)
    return {
        "plan": lambda: plan(out_dir),
        "phantom": lambda: voxelize(out_dir),
        "simulate": lambda: simulate(out_dir, workers, verbose),
        "reconstruct": lambda: reconstruct(out_dir, workers, verbose),
        "analyze": lambda: analyze(out_dir),
    }


def run_pipeline(config: ExperimentConfig, out_dir: str, stages: Sequence[str] = STAGES,
                 workers: Optional[int] = None, verbose: bool = False,
                 results: Optional[List[Dict[str, Any]]] = None) -> int:
    """
    Execute stages in pipeline order and return the exit status.

    Every stage writes a manifest into its own directory under out_dir; a later
    stage run alone reads the earlier stage's outputs and fails with a
    precondition error when they are missing or belong to another plan.
    """
    unknown = [s for s in stages if s not in STAGES]
    if unknown:
        print(f"❌ Unknown stage(s): {', '.join(unknown)}. Valid stages: {', '.join(STAGES)}")
        return EXIT_CONFIG

    calls = _stage_calls(config, out_dir, workers, verbose)
    for stage in (s for s in STAGES if s in stages):
        print(f"🚀 Stage {stage}")
        response = json.loads(calls[stage]())
        if results is not None:
            results.append({"stage": stage, **response})
        if "error" in response:
            print(f"❌ {response['error']}: {response.get('details', '')}")
            return int(response.get("exit_code", EXIT_FAILURE))
        print(f"✅ Stage {stage} complete")
    return EXIT_OK
