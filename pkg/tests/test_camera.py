import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from igae.camera import (CameraPose, RaySet, focal_length, generate_rays, heldout_mask, look_at,
                         sample_poses_on_sphere, sample_stratified)
from igae.tensor import Rng


def pose_at(eye, extent=(5, 5), fov=np.deg2rad(40)):
    return CameraPose(look_at(eye), eye, fov, *extent)


def test_principal_ray_is_forward_axis():
    pose = pose_at([3.0, 1.0, 2.0], (7, 9))
    rays = generate_rays(pose, (7, 9))
    centre = rays.directions[(rays.pixels[:, 0] == 3) & (rays.pixels[:, 1] == 4)][0]
    np.testing.assert_allclose(centre, pose.forward, atol=1e-12)


def test_directions_unit_norm_and_count():
    rays = generate_rays(pose_at([0.0, -4.0, 1.0]), (6, 10))
    assert len(rays) == 60
    np.testing.assert_allclose(np.linalg.norm(rays.directions, axis=1), 1.0, atol=1e-6)


def test_corner_ray_matches_pinhole_oracle():
    eye = np.array([2.0, 3.0, 1.5])
    h, w, fov = 8, 12, np.deg2rad(50)
    rays = generate_rays(CameraPose(look_at(eye), eye, fov, h, w), (h, w))
    # independent look-at basis
    fwd = -eye / np.linalg.norm(eye)
    right = np.cross(fwd, [0, 0, 1.0])
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    f = (h / 2) / np.tan(fov / 2)
    d = fwd + right * (0.5 - w / 2) / f + down * (0.5 - h / 2) / f
    d /= np.linalg.norm(d)
    np.testing.assert_allclose(rays.directions[0], d, atol=1e-6)


def test_near_far_from_bounding_sphere():
    rays = generate_rays(pose_at([0, 4.0, 0]), (2, 2), scene_radius=1.0, eps=1e-3)
    assert rays.near == pytest.approx(3.0 - 1e-3) and rays.far == pytest.approx(5.0 + 1e-3)


def test_non_finite_pose_rejected():
    pose = pose_at([1.0, 2.0, 3.0])
    pose.translation[0] = np.nan
    with pytest.raises(ValueError, match="non-finite"):
        generate_rays(pose, (2, 2))


def test_generate_rays_deterministic():
    p = pose_at([1.0, -2.0, 0.5])
    a, b = generate_rays(p, (4, 4)), generate_rays(p, (4, 4))
    assert a.directions.tobytes() == b.directions.tobytes()


def unit_rays(n=1, near=0.0, far=1.0):
    return RaySet(np.zeros((n, 3)), np.tile([0, 0, 1.0], (n, 1)), near, far,
                  np.zeros((n, 2), int), (1, n))


def test_midpoint_samples():
    ds = sample_stratified(unit_rays(), 4)
    np.testing.assert_allclose(ds.t[0], [0.125, 0.375, 0.625, 0.875])
    np.testing.assert_allclose(ds.deltas[0], [0.25, 0.25, 0.25, 0.125])


def test_jittered_samples_stay_in_bins():
    rays = unit_rays(1000, 2.0, 6.0)
    ds = sample_stratified(rays, 8, Rng(0), jitter=True)
    lo = 2.0 + 0.5 * np.arange(8)
    assert np.all(ds.t >= lo) and np.all(ds.t <= lo + 0.5)
    assert np.all(np.diff(ds.t, axis=1) > 0)
    assert np.all(ds.deltas > 0)


def test_jittered_bin_means_near_midpoints():
    n = 10_000
    ds = sample_stratified(unit_rays(n), 4, Rng(1), jitter=True)
    sigma = 0.25 / np.sqrt(12) / np.sqrt(n)
    mids = np.array([0.125, 0.375, 0.625, 0.875])
    assert np.all(np.abs(ds.t.mean(axis=0) - mids) < 3 * sigma)


def test_too_few_samples():
    with pytest.raises(ValueError):
        sample_stratified(unit_rays(), 1)


def test_poses_on_sphere_radius_and_look_at():
    poses = sample_poses_on_sphere(50, 3.5, Rng(2))
    for p in poses:
        p.check()
        assert np.linalg.norm(p.translation) == pytest.approx(3.5, abs=1e-6)
        fwd = p.rotation @ np.array([0, 0, 1.0])
        np.testing.assert_allclose(fwd, -p.translation / 3.5, atol=1e-6)
        elev = np.degrees(np.arcsin(p.translation[2] / 3.5))
        assert -30 - 1e-9 <= elev <= 85 + 1e-9


def test_azimuth_uniform_chi_square():
    poses = sample_poses_on_sphere(10_000, 1.0, Rng(3))
    az = np.array([np.arctan2(p.translation[1], p.translation[0]) for p in poses])
    counts, _ = np.histogram(az, bins=20, range=(-np.pi, np.pi))
    assert stats.chisquare(counts).pvalue > 0.01


def test_pose_matrix_round_trip():
    p = pose_at([1.0, 2.0, -0.5], (16, 20))
    q = CameraPose.from_matrix(p.matrix(), p.fov_y, 16, 20)
    np.testing.assert_array_equal(q.rotation, p.rotation)
    np.testing.assert_array_equal(q.translation, p.translation)


def test_heldout_every_eighth():
    m = heldout_mask(20)
    assert list(np.nonzero(m)[0]) == [0, 8, 16]


@settings(max_examples=25, deadline=None)
@given(h=st.integers(1, 12), w=st.integers(1, 12), l=st.sampled_from([1, 2, 4]))
def test_ray_count_is_pixel_count(h, w, l):
    rays = generate_rays(pose_at([0.0, 3.0, 1.0]), (h * l, w * l))
    assert len(rays) == h * w * l * l
    assert rays.near < rays.far


def test_focal_length():
    assert focal_length(np.pi / 2, 10) == pytest.approx(5.0)
