"""
Stage tools registration
"""

from .plan_tool import plan_tool, run_plan_stage
from .phantom_tool import voxelize_tool, run_phantom_stage
from .simulate_tool import simulate_tool, run_simulate_stage
from .reconstruct_tool import reconstruct_tool, run_reconstruct_stage
from .analyze_tool import analyze_tool, run_analyze_stage
from .bench_tool import trace_bench_tool
from .pipeline import STAGES, run_pipeline


def get_stage_tools(config):
    """Return all stage tools keyed by command name"""
    return {
        "plan": plan_tool(config),
        "phantom voxelize": voxelize_tool(config),
        "simulate": simulate_tool(config),
        "reconstruct": reconstruct_tool(config),
        "analyze": analyze_tool(config),
        "trace-bench": trace_bench_tool(config),
    }
