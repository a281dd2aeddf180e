"""
Trace benchmark tool
Rays per second of the backprojection kernel on the configured grid
"""

from utils.errors import EXIT_FAILURE, LSpectError
from utils.responses import create_error_response, create_success_response

from ..config import ExperimentConfig
from ..siddon import benchmark


def trace_bench_tool(config: ExperimentConfig):
    """Create trace-bench tool function"""

    def trace_bench(rays: int = 100_000, seed: int = 0) -> str:
        """Time random chords through the reconstruction grid."""
        try:
            result = benchmark(config.voxel_grid(), num_rays=rays, seed=seed)
            print(f"📊 {result['rays_per_second']:.0f} rays/s over {result['rays']} rays")
            return create_success_response(result)
        except LSpectError as e:
            return create_error_response("Trace benchmark failed", str(e), exit_code=e.exit_code)
        except Exception as e:
            return create_error_response("Trace benchmark failed", str(e), exit_code=EXIT_FAILURE)

    return trace_bench
