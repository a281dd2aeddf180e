#!/usr/bin/env python3
"""
Test phantom shapes, presets and Monte Carlo emission sampling
"""

import numpy as np
import pytest
from scipy.stats import chisquare

from lspect.phantom import (
    EMISSION_BLOCK,
    Phantom,
    Shape,
    ShapeKind,
    check_within,
    cylinder_phantom,
    point_source,
    sample_emission_points,
    three_spheres_phantom,
    voxelize,
)
from lspect.siddon import VoxelGrid
from utils.errors import DomainError


def test_point_source_preset():
    phantom = point_source(0.2)
    (shape,) = phantom.shapes
    assert shape.kind is ShapeKind.SPHERE
    assert shape.center == (0.0, 0.0, 0.0)
    assert shape.radius == 0.2
    assert point_source(1.0).shapes[0].radius == 1.0


def test_point_source_containment():
    points = sample_emission_points(point_source(0.2), 100_000, seed=1)
    assert points.shape == (100_000, 3)
    assert np.all(np.linalg.norm(points, axis=1) <= 0.2)


def test_zero_count_is_empty():
    assert sample_emission_points(point_source(), 0, seed=1).shape == (0, 3)


def test_shape_validation():
    with pytest.raises(DomainError):
        Shape(ShapeKind.SPHERE, (0, 0, 0), 0.0)
    with pytest.raises(DomainError):
        Shape(ShapeKind.CYLINDER, (0, 0, 0), 1.0, half_height=0.0)
    with pytest.raises(DomainError):
        Shape(ShapeKind.SPHERE, (0, 0, 0), 1.0, activity_weight=0.0)
    with pytest.raises(DomainError):
        Shape("cube", (0, 0, 0), 1.0)
    with pytest.raises(DomainError):
        Phantom(())


def test_unit_sphere_moments():
    points = sample_emission_points(Phantom((Shape("sphere", (0, 0, 0), 1.0),)), 1_000_000, seed=3)
    np.testing.assert_allclose(points.mean(axis=0), 0.0, atol=0.01)
    r = np.linalg.norm(points, axis=1)
    assert np.mean(r ** 3) == pytest.approx(0.5, rel=0.01)


def test_activity_weighted_shape_selection():
    phantom = Phantom((
        Shape("sphere", (-5, 0, 0), 1.0, activity_weight=1.0),
        Shape("sphere", (5, 0, 0), 1.0, activity_weight=3.0),
    ))
    points = sample_emission_points(phantom, 1_000_000, seed=5)
    share = np.mean(points[:, 0] > 0)
    assert 0.745 <= share <= 0.755


def test_octant_uniformity():
    points = sample_emission_points(Phantom((Shape("sphere", (0, 0, 0), 2.0),)), 1_000_000, seed=9)
    octant = (points[:, 0] > 0) * 4 + (points[:, 1] > 0) * 2 + (points[:, 2] > 0)
    counts = np.bincount(octant, minlength=8)
    assert chisquare(counts).pvalue > 0.001


def test_every_point_inside_its_phantom():
    phantom = Phantom((
        Shape("sphere", (3, 0, 0), 1.5),
        Shape("cylinder", (-3, 0, 0), 1.0, half_height=4.0, activity_weight=2.0),
    ))
    points = sample_emission_points(phantom, 50_000, seed=4)
    assert np.all(phantom.contains(points))


def test_sampling_is_deterministic():
    a = sample_emission_points(three_spheres_phantom(), 10_000, seed=42)
    b = sample_emission_points(three_spheres_phantom(), 10_000, seed=42)
    c = sample_emission_points(three_spheres_phantom(), 10_000, seed=43)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_index_ranges_partition_the_stream():
    phantom = cylinder_phantom()
    total = EMISSION_BLOCK + 5000
    whole = sample_emission_points(phantom, total, seed=8)
    split = np.concatenate([
        sample_emission_points(phantom, 1234, seed=8),
        sample_emission_points(phantom, EMISSION_BLOCK - 1234 + 10, seed=8, start=1234),
        sample_emission_points(phantom, total - EMISSION_BLOCK - 10, seed=8, start=EMISSION_BLOCK + 10),
    ])
    np.testing.assert_array_equal(whole, split)


def test_check_within_cube():
    check_within(three_spheres_phantom(), (-16, -16, -16), (16, 16, 16))
    with pytest.raises(DomainError):
        check_within(three_spheres_phantom(spacing=14.0), (-16, -16, -16), (16, 16, 16))


def test_voxelize_sphere():
    grid = VoxelGrid.centered((20, 20, 20), 20.0)
    truth = voxelize(Phantom((Shape("sphere", (0, 0, 0), 5.0),)), grid.centers())
    assert truth.shape == (20, 20, 20)
    assert truth[10, 10, 10]
    assert not truth[0, 0, 0]
    # voxel-centre sampling of an r = 5 voxel sphere lands within 10% of its volume
    assert truth.sum() == pytest.approx(4 / 3 * np.pi * 125, rel=0.1)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
