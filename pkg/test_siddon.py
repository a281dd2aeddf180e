#!/usr/bin/env python3
"""
Test the Siddon traversal kernel against exact cases and a sampling oracle
"""

import numpy as np
import pytest

from lspect.siddon import RaySegment, VoxelGrid, backproject_rays, benchmark, trace
from utils.errors import DomainError

ORACLE_SAMPLES = 100_000


def _clipped_length(ray: RaySegment, grid: VoxelGrid) -> float:
    start, end = np.asarray(ray.start), np.asarray(ray.end)
    delta = end - start
    lo, hi = grid.bounds()
    a0, a1 = 0.0, 1.0
    for ax in range(3):
        if delta[ax] == 0:
            if not lo[ax] <= start[ax] <= hi[ax]:
                return 0.0
            continue
        t0, t1 = sorted(((lo[ax] - start[ax]) / delta[ax], (hi[ax] - start[ax]) / delta[ax]))
        a0, a1 = max(a0, t0), min(a1, t1)
    return max(0.0, a1 - a0) * float(np.linalg.norm(delta))


def _sampling_oracle(ray: RaySegment, grid: VoxelGrid):
    """Per-voxel lengths from equidistant midpoint samples along the segment"""
    start, end = np.asarray(ray.start), np.asarray(ray.end)
    t = (np.arange(ORACLE_SAMPLES) + 0.5) / ORACLE_SAMPLES
    points = start + t[:, None] * (end - start)
    idx = np.floor((points - grid.origin_array) / grid.voxel_array).astype(int)
    inside = np.all((idx >= 0) & (idx < grid.dims_array), axis=1)
    step = ray.length / ORACLE_SAMPLES
    flat = np.ravel_multi_index(idx[inside].T, grid.dims)
    cells, counts = np.unique(flat, return_counts=True)
    lengths = {
        tuple(int(i) for i in np.unravel_index(cell, grid.dims)): n * step
        for cell, n in zip(cells, counts)
    }
    return lengths, step


def _random_rays(grid: VoxelGrid, count: int, seed: int):
    rng = np.random.default_rng(seed)
    lo, hi = grid.bounds()
    span = hi - lo
    starts = rng.uniform(lo - 0.5 * span, hi + 0.5 * span, size=(count, 3))
    ends = rng.uniform(lo - 0.5 * span, hi + 0.5 * span, size=(count, 3))
    return [RaySegment(tuple(s), tuple(e)) for s, e in zip(starts, ends)]


def test_axis_aligned_ray_through_unit_grid():
    grid = VoxelGrid((4, 4, 4), (0.0, 0.0, 0.0), (1.0, 1.0, 1.0))
    result = trace(RaySegment((-1.0, 1.5, 1.5), (5.0, 1.5, 1.5)), grid)
    assert [voxel for voxel, _ in result] == [(0, 1, 1), (1, 1, 1), (2, 1, 1), (3, 1, 1)]
    for _, length in result:
        assert length == pytest.approx(1.0, abs=1e-12)


def test_main_diagonal_of_single_voxel():
    grid = VoxelGrid((1, 1, 1), (0.0, 0.0, 0.0), (1.0, 1.0, 1.0))
    result = trace(RaySegment((-1.0, -1.0, -1.0), (2.0, 2.0, 2.0)), grid)
    assert len(result) == 1
    assert result[0][0] == (0, 0, 0)
    assert result[0][1] == pytest.approx(np.sqrt(3.0), abs=1e-12)


def test_ray_missing_grid_is_empty():
    grid = VoxelGrid((4, 4, 4), (0.0, 0.0, 0.0), (1.0, 1.0, 1.0))
    assert trace(RaySegment((-1.0, 10.0, 1.0), (5.0, 10.0, 1.0)), grid) == []


def test_degenerate_ray_rejected():
    with pytest.raises(DomainError):
        RaySegment((1.0, 2.0, 3.0), (1.0, 2.0, 3.0))


def test_face_grazing_ray_takes_larger_index():
    grid = VoxelGrid((4, 4, 4), (0.0, 0.0, 0.0), (1.0, 1.0, 1.0))
    result = trace(RaySegment((-1.0, 2.0, 1.5), (5.0, 2.0, 1.5)), grid)
    assert [voxel for voxel, _ in result] == [(i, 2, 1) for i in range(4)]
    assert sum(length for _, length in result) == pytest.approx(4.0, abs=1e-9)


def test_far_face_grazing_ray_clamps_to_last_voxel():
    grid = VoxelGrid((4, 4, 4), (0.0, 0.0, 0.0), (1.0, 1.0, 1.0))
    result = trace(RaySegment((-1.0, 4.0, 4.0), (5.0, 4.0, 4.0)), grid)
    assert [voxel for voxel, _ in result] == [(i, 3, 3) for i in range(4)]


def test_random_rays_conserve_length_without_duplicates():
    grid = VoxelGrid.centered((32, 32, 32), 32.0)
    for ray in _random_rays(grid, 1000, seed=2):
        result = trace(ray, grid)
        voxels = [voxel for voxel, _ in result]
        assert len(voxels) == len(set(voxels))
        assert sum(length for _, length in result) == pytest.approx(_clipped_length(ray, grid), abs=1e-9)


def test_random_rays_match_sampling_oracle():
    grid = VoxelGrid.centered((32, 32, 32), 32.0)
    for ray in _random_rays(grid, 1000, seed=3):
        oracle, step = _sampling_oracle(ray, grid)
        traced = dict(trace(ray, grid))
        tolerance = 2.5 * step
        for voxel in set(oracle) | set(traced):
            expected = oracle.get(voxel, 0.0)
            got = traced.get(voxel, 0.0)
            assert abs(got - expected) <= max(1e-3 * expected, tolerance)


def test_trace_is_symmetric():
    grid = VoxelGrid.centered((16, 16, 16), 16.0)
    for ray in _random_rays(grid, 200, seed=4):
        forward = dict(trace(ray, grid))
        backward = dict(trace(RaySegment(ray.end, ray.start), grid))
        assert forward.keys() == backward.keys()
        for voxel, length in forward.items():
            assert backward[voxel] == pytest.approx(length, abs=1e-12)


def test_anisotropic_grid_conserves_length():
    grid = VoxelGrid((5, 7, 3), (-1.0, 2.0, 0.5), (0.5, 0.3, 2.0))
    for ray in _random_rays(grid, 200, seed=6):
        total = sum(length for _, length in trace(ray, grid))
        assert total == pytest.approx(_clipped_length(ray, grid), abs=1e-9)


def test_backproject_rays_matches_trace():
    grid = VoxelGrid.centered((8, 8, 8), 8.0)
    rays = _random_rays(grid, 50, seed=5)
    weights = np.arange(1, 51, dtype=np.float64)
    volume = np.zeros(grid.dims)
    backproject_rays(np.array([r.start for r in rays]), np.array([r.end for r in rays]), weights, grid, volume)

    expected = np.zeros(grid.dims)
    for ray, w in zip(rays, weights):
        for voxel, length in trace(ray, grid):
            expected[voxel] += w * length
    np.testing.assert_allclose(volume, expected, rtol=1e-12, atol=1e-12)


def test_backproject_rays_validates_shapes():
    grid = VoxelGrid.centered((4, 4, 4), 4.0)
    with pytest.raises(DomainError):
        backproject_rays(np.zeros((2, 3)), np.ones((2, 3)), np.ones(3), grid, np.zeros(grid.dims))
    with pytest.raises(DomainError):
        backproject_rays(np.zeros((1, 3)), np.zeros((1, 3)), np.ones(1), grid, np.zeros(grid.dims))


def test_grid_validation():
    with pytest.raises(DomainError):
        VoxelGrid((0, 4, 4), (0, 0, 0), (1, 1, 1))
    with pytest.raises(DomainError):
        VoxelGrid((4, 4, 4), (0, 0, 0), (1, 0, 1))


def test_benchmark_reports_throughput():
    result = benchmark(VoxelGrid.centered((16, 16, 16), 16.0), num_rays=2000)
    assert result["rays"] == 2000
    assert result["rays_per_second"] > 0


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
