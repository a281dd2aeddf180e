#!/usr/bin/env python3
"""
Test backprojection reconstruction, pixel ownership and half-maximum thresholding
"""

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

import lspect.recon
from lspect.config import load_config
from lspect.geometry import ModuleSpec, PinholeArraySpec, RingSpec, build_scan_plan
from lspect.phantom import Phantom, Shape, ShapeKind, point_source
from lspect.projector import ProjectionImage, ProjectionSet, projection_fingerprint, simulate_all
from lspect.recon import (
    PixelGridAssignment,
    VoxelVolume,
    backproject_view,
    central_slices,
    reconstruct,
    threshold_half_max,
)
from lspect.siddon import VoxelGrid
from utils.errors import DomainError, FingerprintMismatchError, PreconditionError

SEED = 11

ROOT = os.path.dirname(os.path.abspath(__file__))


def _tiny_plan():
    """One module, one pinhole, a 3x3 detector of 0.25 mm pixels"""
    arr = PinholeArraySpec(0.75, 0.15, plate_thickness_t=1.0, plate_height=0.75)
    module = ModuleSpec(1, arr, detector_gap_h=2.5, sensor_pitch=0.25)
    return build_scan_plan(RingSpec(1, 25.0), module)


def _blank_set(plan, seed=SEED):
    images = [
        ProjectionImage(k, j, np.zeros((plan.module.detector_rows, plan.module.detector_cols), dtype=np.int64),
                        plan.module.pixel_pitch, plan.fingerprint)
        for k in range(plan.num_views)
        for j in range(plan.num_modules)
    ]
    return ProjectionSet(projection_fingerprint(plan, seed), seed, plan.num_views, plan.num_modules, images)


def _half_max_centroid(volume):
    """Value-weighted centre (mm) of the voxels at or above half the maximum"""
    weights = np.where(threshold_half_max(volume), volume.values, 0.0)
    xs, ys, zs = np.meshgrid(*volume.grid.centers(), indexing="ij")
    return np.array([(weights * c).sum() for c in (xs, ys, zs)]) / weights.sum()


class _CountingPool(ThreadPoolExecutor):
    """Thread pool that records how many submitted results are still unread"""

    outstanding = 0
    peak = 0

    def submit(self, fn, *args, **kwargs):
        future = super().submit(fn, *args, **kwargs)
        cls = type(self)
        cls.outstanding += 1
        cls.peak = max(cls.peak, cls.outstanding)
        read = future.result

        def result(timeout=None):
            cls.outstanding -= 1
            return read(timeout)

        future.result = result
        return future


def _small_plan():
    module = ModuleSpec(1, PinholeArraySpec(0.96, 0.192, plate_height=4.8))
    return build_scan_plan(RingSpec(4, 25.0), module)


@pytest.fixture(scope="module")
def point_reconstruction():
    plan = _small_plan()
    proj = simulate_all(plan, point_source(0.2, total_emissions=200_000), seed=SEED)
    grid = VoxelGrid.centered((16, 16, 16), 8.0)
    return plan, proj, grid, reconstruct(proj, plan, grid)


class TestSinglePixel:
    def test_centre_pixel_lights_the_axis(self):
        plan = _tiny_plan()
        assert plan.module.detector_rows == 3 and plan.module.detector_cols == 3
        grid = VoxelGrid.centered((4, 4, 4), 4.0)

        counts = np.zeros((3, 3), dtype=np.int64)
        counts[1, 1] = 1
        image = ProjectionImage(0, 0, counts, 0.25, plan.fingerprint)
        volume = backproject_view([image], plan, 0, VoxelVolume.zeros(grid))

        # the ray runs along x through y = z = 0, a shared face of the central voxels
        along_x = volume.values[:, 1:3, 1:3].sum(axis=(1, 2))
        np.testing.assert_allclose(along_x, 1.0, atol=1e-9)
        assert volume.values.sum() == pytest.approx(4.0, abs=1e-9)

        counts[1, 1] = 5
        scaled = backproject_view([ProjectionImage(0, 0, counts, 0.25, plan.fingerprint)], plan, 0,
                                  VoxelVolume.zeros(grid))
        np.testing.assert_allclose(scaled.values, 5 * volume.values, rtol=1e-12)

    def test_backproject_view_accumulates(self):
        plan = _tiny_plan()
        grid = VoxelGrid.centered((4, 4, 4), 4.0)
        counts = np.zeros((3, 3), dtype=np.int64)
        counts[1, 1] = 2
        image = ProjectionImage(0, 0, counts, 0.25, plan.fingerprint)
        once = backproject_view([image], plan, 0, VoxelVolume.zeros(grid))
        twice = backproject_view([image], plan, 0, once)
        np.testing.assert_allclose(twice.values, 2 * once.values, rtol=1e-12)

    def test_full_set_matches_single_view(self):
        plan = _tiny_plan()
        grid = VoxelGrid.centered((4, 4, 4), 4.0)
        proj = _blank_set(plan)
        proj.image(0, 0).counts[1, 1] = 3
        volume = reconstruct(proj, plan, grid)
        expected = backproject_view(proj.for_view(0), plan, 0, VoxelVolume.zeros(grid))
        np.testing.assert_allclose(volume.values, expected.values, rtol=1e-12)


class TestPreconditions:
    def test_all_zero_images_give_zero_volume(self):
        plan = _tiny_plan()
        grid = VoxelGrid.centered((4, 4, 4), 4.0)
        volume = reconstruct(_blank_set(plan), plan, grid)
        assert volume.max == 0.0

    def test_missing_image(self):
        plan = _tiny_plan()
        proj = _blank_set(plan)
        del proj.images[5]
        with pytest.raises(PreconditionError):
            reconstruct(proj, plan, VoxelGrid.centered((4, 4, 4), 4.0))

    def test_projection_set_of_other_plan(self):
        plan = _tiny_plan()
        proj = _blank_set(plan)
        proj.plan_fingerprint = "0" * 16
        with pytest.raises(FingerprintMismatchError):
            reconstruct(proj, plan, VoxelGrid.centered((4, 4, 4), 4.0))

    def test_image_of_other_plan(self):
        plan = _tiny_plan()
        image = ProjectionImage(0, 0, np.ones((3, 3), dtype=np.int64), 0.25, "not-this-plan")
        with pytest.raises(FingerprintMismatchError):
            backproject_view([image], plan, 0, VoxelVolume.zeros(VoxelGrid.centered((4, 4, 4), 4.0)))

    def test_image_of_other_view(self):
        plan = _tiny_plan()
        image = ProjectionImage(1, 0, np.ones((3, 3), dtype=np.int64), 0.25, plan.fingerprint)
        with pytest.raises(DomainError):
            backproject_view([image], plan, 0, VoxelVolume.zeros(VoxelGrid.centered((4, 4, 4), 4.0)))

    def test_volume_validation(self):
        grid = VoxelGrid.centered((2, 2, 2), 2.0)
        with pytest.raises(DomainError):
            VoxelVolume(grid, -np.ones((2, 2, 2)))
        with pytest.raises(DomainError):
            VoxelVolume(grid, np.zeros((2, 2, 3)))


class TestPointSource:
    def test_peak_at_the_source(self, point_reconstruction):
        _, _, grid, volume = point_reconstruction
        assert volume.max > 0
        # the backprojected peak is a plateau a few voxels wide; its centre sits on the source
        centre = _half_max_centroid(volume)
        assert np.all(np.abs(centre) <= np.asarray(grid.voxel_size))

    def test_linear_in_counts(self, point_reconstruction):
        plan, proj, grid, volume = point_reconstruction
        doubled = ProjectionSet(proj.plan_fingerprint, proj.seed, proj.num_views, proj.num_modules, [
            ProjectionImage(img.view_index, img.module_index, img.counts * 2, img.pixel_pitch,
                            img.plan_fingerprint)
            for img in proj.images
        ])
        np.testing.assert_allclose(reconstruct(doubled, plan, grid).values, 2 * volume.values, rtol=1e-12)

    def test_workers_do_not_change_the_volume(self, point_reconstruction):
        plan, proj, grid, volume = point_reconstruction
        parallel = reconstruct(proj, plan, grid, workers=4)
        np.testing.assert_array_equal(parallel.values, volume.values)

    def test_parallel_views_are_bounded_by_workers(self, point_reconstruction, monkeypatch):
        plan, proj, grid, volume = point_reconstruction
        assert plan.num_views > 3
        monkeypatch.setattr(lspect.recon, "ThreadPoolExecutor", _CountingPool)
        _CountingPool.outstanding = 0
        _CountingPool.peak = 0
        parallel = reconstruct(proj, plan, grid, workers=3)
        assert _CountingPool.peak <= 3
        assert _CountingPool.outstanding == 0
        np.testing.assert_array_equal(parallel.values, volume.values)

    def test_image_order_does_not_matter(self, point_reconstruction):
        plan, proj, grid, volume = point_reconstruction
        shuffled = ProjectionSet(proj.plan_fingerprint, proj.seed, proj.num_views, proj.num_modules,
                                 list(reversed(proj.images)))
        np.testing.assert_array_equal(reconstruct(shuffled, plan, grid).values, volume.values)

    def test_view_order_does_not_matter(self, point_reconstruction):
        plan, proj, grid, volume = point_reconstruction
        backwards = VoxelVolume.zeros(grid)
        for k in reversed(range(plan.num_views)):
            backwards = backproject_view(proj.for_view(k), plan, k, backwards)
        np.testing.assert_allclose(backwards.values, volume.values, rtol=1e-12, atol=1e-12 * volume.max)

    def test_central_slices(self, point_reconstruction):
        _, _, _, volume = point_reconstruction
        slices = central_slices(volume)
        assert slices["xy"].shape == (16, 16)
        assert slices["xz"].shape == (16, 16)
        np.testing.assert_array_equal(slices["xy"], volume.values[:, :, 8])


@pytest.mark.slow
class TestOffCentreSource:
    """A voxel-sized source away from the centre reconstructs inside its own neighbourhood"""

    VOXEL = (40, 26, 34)

    @pytest.mark.parametrize("shift", [0.0, 10.0])
    def test_peak_stays_next_to_the_source_voxel(self, shift):
        config = load_config(os.path.join(ROOT, "config", "desk_scale.yaml")).with_overrides(shift=shift)
        grid = config.voxel_grid()
        centre = tuple(float(c[i]) for c, i in zip(grid.centers(), self.VOXEL))
        radius = float(min(grid.voxel_size)) / 2.0
        phantom = Phantom((Shape(ShapeKind.SPHERE, centre, radius),), config.phantom().total_emissions)
        plan = config.scan_plan()
        workers = max(1, min(8, os.cpu_count() or 1))
        proj = simulate_all(plan, phantom, config.seed, workers=workers)
        volume = reconstruct(proj, plan, grid, workers=workers)
        offset = np.abs(np.array(volume.argmax_index()) - np.array(self.VOXEL))
        assert np.all(offset <= 1), volume.argmax_index()


class TestPixelOwnership:
    def test_two_column_module(self):
        module = ModuleSpec(2, PinholeArraySpec(0.96, 0.192))
        owner = PixelGridAssignment.for_module(module).owner
        assert owner.shape == (module.detector_rows, module.detector_cols)
        assert owner[0, 0] == 0
        assert owner[-1, -1] == module.pinholes_per_module - 1
        assert np.all(owner[:, :20] % 2 == 0)
        assert np.all(owner[:, 20:] % 2 == 1)

    def test_owner_is_the_nearest_pinhole(self):
        module = ModuleSpec(3, PinholeArraySpec(0.96, 0.192, plate_height=9.6))
        owner = PixelGridAssignment.for_module(module).owner
        offsets = module.pinhole_offsets()
        u, v = module.pixel_centers()
        uu, vv = np.meshgrid(u, v)
        pixels = np.stack([uu.ravel(), vv.ravel()], axis=1)
        dist = np.abs(pixels[:, None, :] - offsets[None, :, :]).max(axis=2)
        nearest = dist.min(axis=1)
        np.testing.assert_allclose(dist[np.arange(len(pixels)), owner.ravel()], nearest, atol=1e-12)


class TestThreshold:
    def test_half_max_mask(self):
        grid = VoxelGrid((4, 1, 1), (0.0, 0.0, 0.0), (1.0, 1.0, 1.0))
        volume = VoxelVolume(grid, np.array([0.0, 1.0, 2.0, 4.0]).reshape(4, 1, 1))
        assert threshold_half_max(volume).ravel().tolist() == [False, False, True, True]

    def test_all_zero_volume(self):
        with pytest.raises(DomainError):
            threshold_half_max(VoxelVolume.zeros(VoxelGrid.centered((4, 4, 4), 4.0)))

    def test_gaussian_ball(self):
        grid = VoxelGrid.centered((41, 41, 41), 41.0)
        x, y, z = np.meshgrid(*grid.centers(), indexing="ij")
        sigma = 5.0
        r2 = x ** 2 + y ** 2 + z ** 2
        mask = threshold_half_max(VoxelVolume(grid, np.exp(-r2 / (2 * sigma ** 2))))
        radius = sigma * np.sqrt(2 * np.log(2))
        np.testing.assert_array_equal(mask, r2 <= radius ** 2)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
