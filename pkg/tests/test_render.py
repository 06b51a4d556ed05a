import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from igae import tensor as T
from igae.camera import CameraPose, focal_length, look_at
from igae.fields import make_field
from igae.gradcheck import check_gradients
from igae.render import (BackgroundModel, QueryCounter, composite_ray, render_batch,
                         render_image)
from igae.tensor import Rng, Tensor


def test_empty_space_returns_background():
    out = composite_ray(np.zeros(8), np.random.default_rng(0).uniform(size=(8, 3)), np.full(8, 0.1),
                        Tensor([0.2, 0.4, 0.6]))
    np.testing.assert_allclose(out.data, [0.2, 0.4, 0.6], atol=1e-7)


def test_homogeneous_medium_analytic():
    S, L, sigma = 256, 1.0, 2.0
    c, bg = np.array([0.9, 0.3, 0.1]), np.array([1.0, 1.0, 1.0])
    with T.precision("float64"):
        out = composite_ray(np.full(S, sigma), np.tile(c, (S, 1)), np.full(S, L / S), Tensor(bg))
    expect = c * (1 - np.exp(-sigma * L)) + bg * np.exp(-sigma * L)
    np.testing.assert_allclose(out.data, expect, atol=1e-4)


def test_opaque_first_sample_saturates():
    ch = np.random.default_rng(1).uniform(size=(5, 3))
    with T.precision("float64"):
        out = composite_ray(np.array([400.0, 1, 1, 1, 1]), ch, np.full(5, 0.1), Tensor(np.ones(3)))
    np.testing.assert_allclose(out.data, ch[0], atol=1e-6)


def test_negative_density_rejected():
    with pytest.raises(ValueError, match="negative"):
        composite_ray(np.array([1.0, -0.1]), np.zeros((2, 3)), np.ones(2), Tensor(np.ones(3)))


def test_nonpositive_delta_rejected():
    with pytest.raises(ValueError, match="deltas"):
        composite_ray(np.array([1.0, 1.0]), np.zeros((2, 3)), np.array([0.1, 0.0]), Tensor(np.ones(3)))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 100_000), S=st.integers(1, 64))
def test_partition_of_unity(seed, S):
    rng = np.random.default_rng(seed)
    sigma = rng.exponential(2.0, size=(4, S))
    deltas = rng.uniform(0.001, 0.5, size=(4, S))
    w, t_final = T.composite_weights(sigma, deltas)
    np.testing.assert_allclose(w.sum(axis=1) + t_final, 1.0, atol=1e-5)
    assert np.all(w >= 0)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 100_000), idx=st.integers(0, 15), bump=st.floats(0.0, 10.0))
def test_more_density_never_more_transmittance(seed, idx, bump):
    rng = np.random.default_rng(seed)
    sigma = rng.exponential(1.0, size=16)
    deltas = rng.uniform(0.01, 0.2, size=16)
    _, t0 = T.composite_weights(sigma, deltas)
    sigma[idx] += bump
    _, t1 = T.composite_weights(sigma, deltas)
    assert t1 <= t0


def test_composite_ray_gradients():
    rng = np.random.default_rng(2)
    with T.precision("float64"):
        inputs = [Tensor(rng.uniform(0.1, 3.0, 24), requires_grad=True),
                  Tensor(rng.normal(size=(24, 4)), requires_grad=True),
                  Tensor(rng.uniform(0.02, 0.2, 24)),
                  Tensor(rng.normal(size=4), requires_grad=True)]
        w = rng.normal(size=4)
        fn = lambda xs: T.sum_(T.mul(composite_ray(*xs), Tensor(w)))  # noqa: E731
        assert check_gradients(fn, inputs) <= 1e-4


class ZeroField:
    backend = "test"

    def __init__(self, channels, kind, bounds=1.0):
        self.channels, self.kind, self.bounds = channels, kind, bounds

    def query(self, pts):
        n = len(pts)
        return Tensor(np.zeros(n)), Tensor(np.zeros((n, self.channels)))


class SphereField(ZeroField):
    """Opaque ball of radius r (very dense inside)."""

    def __init__(self, r):
        super().__init__(3, "rgb")
        self.r = r

    def query(self, pts):
        pts = np.asarray(pts.data if isinstance(pts, Tensor) else pts)
        inside = np.linalg.norm(pts, axis=1) < self.r
        return Tensor(np.where(inside, 1e4, 0.0)), Tensor(np.zeros((len(pts), 3)))


def pose(dist=4.0, extent=(64, 64)):
    eye = np.array([dist, 0.3, 0.8])
    eye *= dist / np.linalg.norm(eye)
    return CameraPose(look_at(eye), eye, np.deg2rad(40), *extent)


def test_zero_field_renders_white():
    img = render_image(ZeroField(3, "rgb"), pose(extent=(8, 8)), (8, 8), 16, BackgroundModel("rgb", 3))
    assert np.all(img.values.data == 1.0)
    assert np.all(img.acc == 0)


def test_latent_render_extent_and_query_count():
    f = QueryCounter(make_field("triplane", 8, "latent", Rng(0), features=4, resolution=8, width=8))
    S = 12
    img = render_image(f, pose(), (64 // 4, 64 // 4), S, BackgroundModel("latent", 8))
    assert img.values.shape == (16, 16, 8)
    assert f.points == 16 * 16 * S and f.rays == 256


def test_silhouette_area_matches_projected_disk():
    r, dist, H = 0.6, 4.0, 64
    img = render_image(SphereField(r), pose(dist, (H, H)), (H, H), 128, BackgroundModel("rgb", 3))
    covered = (img.acc > 0.5).sum()
    f = focal_length(np.deg2rad(40), H)
    # projected radius of a sphere: f * tan(asin(r / dist))
    rho = f * np.tan(np.arcsin(r / dist))
    assert abs(covered - np.pi * rho**2) / (np.pi * rho**2) < 0.10


def test_render_batch_matches_individual_renders():
    f = make_field("triplane", 8, "latent", Rng(3), features=4, resolution=8, width=8)
    bg = BackgroundModel("latent", 8, np.linspace(-1, 1, 8))
    poses = [pose(), pose(4.0, (64, 64))]
    poses[1] = CameraPose(look_at([0.5, -4.0, 1.0]), [0.5, -4.0, 1.0], np.deg2rad(40), 64, 64)
    with T.no_grad():
        batch = render_batch(f, poses, (8, 8), 16, bg).data
        for i, p in enumerate(poses):
            one = render_image(f, p, (8, 8), 16, bg).values.data.transpose(2, 0, 1)
            np.testing.assert_allclose(batch[i], one, atol=1e-5)


def test_latent_background_is_trainable():
    bg = BackgroundModel("latent", 4, [0.1, 0.2, 0.3, 0.4])
    img = render_image(ZeroField(4, "latent"), pose(extent=(4, 4)), (4, 4), 8, bg)
    T.backward(T.sum_(img.values))
    np.testing.assert_allclose(bg.vector.grad, 16.0)
    assert BackgroundModel("rgb", 3).parameters() == []


def test_channel_mismatch_between_background_and_field():
    with pytest.raises(ValueError, match="channels"):
        render_image(ZeroField(3, "rgb"), pose(extent=(4, 4)), (4, 4), 8, BackgroundModel("latent", 8))
