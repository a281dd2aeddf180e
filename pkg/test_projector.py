#!/usr/bin/env python3
"""
Test the Monte Carlo projector: acceptance cone, culling, determinism and counts
"""

import numpy as np
import pytest

from lspect.geometry import ModuleSpec, PinholeArraySpec, RingSpec, build_scan_plan
from lspect.phantom import Phantom, Shape, cylinder_phantom, point_source, three_spheres_phantom
from lspect.projector import (
    cull_emissions,
    project_rays,
    projection_fingerprint,
    simulate_all,
    simulate_view,
    view_emission_range,
)
from utils.errors import DomainError


def _plan(N=4, shift=0.0, plate_height=4.8, L=0.96, m=1, g=25.0):
    module = ModuleSpec(m, PinholeArraySpec(L, 0.192, plate_height=plate_height))
    return build_scan_plan(RingSpec(N, g, shift), module)


def test_zero_emissions_give_empty_images():
    plan = _plan()
    images = simulate_view(plan, point_source(total_emissions=0), 0, seed=1)
    assert len(images) == plan.num_modules
    assert all(img.total == 0 for img in images)


def test_single_pinhole_point_source_projection():
    plan = _plan(N=1, plate_height=0.96)
    assert plan.module.pinholes_per_module == 1
    per_view = 2000
    phantom = point_source(0.2, total_emissions=per_view * plan.num_views)
    (image,) = simulate_view(plan, phantom, 0, seed=3)

    # every ray is far inside the acceptance cone and lands on the detector
    assert image.total == per_view

    u, v = plan.module.pixel_centers()
    rows, cols = np.nonzero(image.counts)
    reach = 0.096 * 1.1 + 0.2 * 0.1 + plan.module.pixel_pitch * 0.75
    assert np.all(np.hypot(u[cols], v[rows]) <= reach)

    half = image.counts.shape[1] // 2
    left = image.counts[:, :half].sum()
    right = image.counts[:, half:].sum()
    assert abs(left - right) <= 3 * np.sqrt(left + right)


def test_acceptance_cone_boundary():
    tan_half = 0.192
    emission = np.array([[0.0, 0.0, 10.0], [0.0, 0.0, 10.0]])
    edge = 10.0 * tan_half
    aperture = np.array([[edge * (1 - 1e-6), 0.0], [edge * (1 + 1e-6), 0.0]])
    _, _, accepted = project_rays(emission, aperture, 2.5, tan_half)
    assert accepted.tolist() == [True, False]


def test_emissions_behind_plate_are_rejected():
    emission = np.array([[0.0, 0.0, -1.0]])
    _, _, accepted = project_rays(emission, np.zeros((1, 2)), 2.5, 0.192)
    assert not accepted[0]


def test_rays_invert_through_pinhole():
    emission = np.array([[1.0, -0.5, 25.0]])
    u_d, v_d, accepted = project_rays(emission, np.zeros((1, 2)), 2.5, 0.192)
    assert accepted[0]
    assert u_d[0] == pytest.approx(-0.1)
    assert v_d[0] == pytest.approx(0.05)


def test_cull_emissions():
    plan = _plan()
    poses = plan.poses_for_view(0)
    pose = poses[0]
    on_axis = pose.origin + pose.normal * 25.0
    behind = pose.origin - pose.normal * 5.0
    kept = cull_emissions(np.array([on_axis, behind]), poses, plan.module)
    np.testing.assert_allclose(kept, [on_axis])


def test_culling_never_changes_images():
    plan = _plan(shift=5.0)
    phantom = cylinder_phantom(6.0, 10.0, total_emissions=100_000)
    for view in (0, plan.num_views // 2):
        with_cull = simulate_view(plan, phantom, view, seed=12, cull=True)
        without = simulate_view(plan, phantom, view, seed=12, cull=False)
        for a, b in zip(with_cull, without):
            np.testing.assert_array_equal(a.counts, b.counts)


def test_emissions_split_across_views():
    plan = _plan()
    phantom = point_source(total_emissions=1000)
    ranges = [view_emission_range(plan, phantom, k) for k in range(plan.num_views)]
    assert ranges[0][0] == 0
    assert ranges[-1][1] == 1000
    for (_, stop), (start, _) in zip(ranges, ranges[1:]):
        assert stop == start


def test_simulate_all_image_layout():
    plan = _plan(N=1, L=2.88, m=3, g=15.0, plate_height=2.88)
    proj = simulate_all(plan, point_source(total_emissions=20_000), seed=1)
    assert len(proj.images) == plan.num_views * plan.num_modules
    assert proj.plan_fingerprint == projection_fingerprint(plan, 1)
    assert proj.image(plan.num_views - 1, 0).view_index == plan.num_views - 1


def test_counts_never_exceed_emissions():
    plan = _plan()
    phantom = three_spheres_phantom(total_emissions=50_000)
    proj = simulate_all(plan, phantom, seed=2)
    assert 0 < proj.total_counts() <= phantom.total_emissions
    assert all(np.all(img.counts >= 0) for img in proj.images)


def test_same_seed_is_bit_identical_across_workers():
    plan = _plan()
    phantom = three_spheres_phantom(total_emissions=80_000)
    serial = simulate_all(plan, phantom, seed=7, workers=1)
    parallel = simulate_all(plan, phantom, seed=7, workers=4)
    again = simulate_all(plan, phantom, seed=7, workers=8)
    for a, b, c in zip(serial.images, parallel.images, again.images):
        np.testing.assert_array_equal(a.counts, b.counts)
        np.testing.assert_array_equal(a.counts, c.counts)
    other = simulate_all(plan, phantom, seed=8)
    assert any(not np.array_equal(a.counts, b.counts) for a, b in zip(serial.images, other.images))


def test_shift_changes_projections():
    phantom = three_spheres_phantom(total_emissions=100_000)
    plain = simulate_view(_plan(shift=0.0), phantom, 0, seed=4)
    shifted = simulate_view(_plan(shift=10.0), phantom, 0, seed=4)
    assert any(not np.array_equal(a.counts, b.counts) for a, b in zip(plain, shifted))


def test_view_index_out_of_range():
    plan = _plan()
    with pytest.raises(DomainError):
        simulate_view(plan, point_source(), plan.num_views, seed=1)


def test_off_axis_shape_projects_to_one_side():
    plan = _plan(N=1)
    pose = plan.poses_for_view(0)[0]
    # source displaced along +tangent projects to -u on the detector
    centre = tuple(pose.origin + pose.normal * 25.0 + pose.tangent * 1.5)
    phantom = Phantom((Shape("sphere", centre, 0.2),), total_emissions=5000 * plan.num_views)
    (image,) = simulate_view(plan, phantom, 0, seed=5)
    u, _ = plan.module.pixel_centers()
    cols = np.nonzero(image.counts)[1]
    assert image.total > 0
    assert np.all(u[cols] < 0)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
