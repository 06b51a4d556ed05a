import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from igae.autoencoder import Autoencoder, AutoencoderSpec
from igae.camera import CameraPose, focal_length, look_at
from igae.scenes import (FOV_Y, Primitive, ProceduralScene, build_latent_cache, build_view_set,
                         encode_images, ensure_latent_cache, make_scene, quantize8,
                         read_latent_cache, read_view_set, real_surrogate_stream, render_gt_view,
                         shade, trace, write_latent_cache, write_view_set)
from igae.tensor import Rng


def pose_at(eye, extent=(32, 32)):
    eye = np.asarray(eye, float)
    return CameraPose(look_at(eye), eye, FOV_Y, *extent)


def test_make_scene_deterministic():
    a, b = make_scene(17, 2), make_scene(17, 2)
    assert a.to_dict() == b.to_dict()
    assert make_scene(18, 2).to_dict() != a.to_dict()


def test_min_difficulty_is_centred_sphere():
    s = make_scene(5, 0)
    assert len(s.primitives) == 1
    p = s.primitives[0]
    assert p.kind == "sphere" and np.all(p.center == 0)


def test_primitive_count_and_bounds_over_seeds():
    for seed in range(100):
        s = make_scene(seed, 1)
        assert 2 <= len(s.primitives) <= 8
        for p in s.primitives:
            assert np.linalg.norm(p.center) + p.extent() <= s.radius + 1e-9
            assert np.all((p.albedo >= 0) & (p.albedo <= 1))
        alb = np.array([p.albedo for p in s.primitives])
        assert len(np.unique(alb.round(6), axis=0)) == len(alb)


def test_scene_dict_round_trip():
    s = make_scene(3, 1)
    assert ProceduralScene.from_dict(s.to_dict()).to_dict() == s.to_dict()


def test_empty_scene_is_white():
    img = render_gt_view(ProceduralScene([]), pose_at([0, 4.0, 0]), (8, 8))
    assert np.all(img == 1.0)


def test_principal_ray_hits_sphere_albedo():
    s = make_scene(0, 0)
    eye = np.array([0.0, -4.0, 0.5])
    img = render_gt_view(s, pose_at(eye, (9, 9)), (9, 9), supersample=1)
    # the centre pixel hits the sphere where the normal points back at the camera
    t, n, a = trace(s, eye[None], (-eye / np.linalg.norm(eye))[None])
    np.testing.assert_allclose(n[0], eye / np.linalg.norm(eye), atol=1e-9)
    np.testing.assert_allclose(img[4, 4], shade(n, a)[0], atol=1e-9)


def test_silhouette_matches_projected_disk():
    r, dist, H = 0.6, 4.0, 128
    s = ProceduralScene([Primitive("sphere", np.zeros(3), [r, 0, 0], [0.5, 0.5, 0.5])])
    img = render_gt_view(s, pose_at([dist, 0, 0], (H, H)), (H, H), supersample=1)
    covered = np.any(img < 1.0, axis=-1).sum()
    rho = focal_length(FOV_Y, H) * np.tan(np.arcsin(r / dist))
    assert abs(covered - np.pi * rho**2) / (np.pi * rho**2) < 0.05


@pytest.mark.parametrize("kind,size", [("box", [0.3, 0.4, 0.2]), ("torus", [0.5, 0.15, 0])])
def test_other_primitives_hit_at_centre(kind, size):
    s = ProceduralScene([Primitive(kind, np.zeros(3), size, [0.2, 0.7, 0.4])])
    eye = np.array([0.0, 0.0, 4.0]) if kind == "box" else np.array([0.5, -4.0, 0.0])
    d = -eye / np.linalg.norm(eye)
    if kind == "torus":
        d = np.array([0.0, 1.0, 0.0])
    t, n, _ = trace(s, eye[None], d[None])
    assert np.isfinite(t[0])
    np.testing.assert_allclose(np.linalg.norm(n[0]), 1.0, atol=1e-9)
    assert n[0] @ d < 0


def test_view_set_split():
    vs = build_view_set(make_scene(1, 1), 20, (16, 16), 0)
    assert len(vs.train_indices) + len(vs.heldout_indices) == 20
    assert len(vs.heldout_indices) == int(np.ceil(20 / 8))
    assert vs.images.shape == (20, 16, 16, 3)


def test_view_set_disk_round_trip_is_eq4_consistent(tmp_path):
    vs = build_view_set(make_scene(2, 1), 10, (16, 16), 3)
    back = read_view_set(write_view_set(tmp_path, vs))
    assert back.images.tobytes() == vs.images.tobytes()
    assert np.array_equal(back.heldout, vs.heldout)
    for i in (0, 5, 9):
        again = quantize8(render_gt_view(back.scene, back.poses[i], (16, 16)))
        assert again.tobytes() == vs.images[i].tobytes()


@pytest.fixture(scope="module")
def tiny_ae():
    return Autoencoder.create(AutoencoderSpec(l=4, c=3, channels=(4, 4)), Rng(0))


def test_latent_cache_matches_fresh_encode(tiny_ae):
    vs = build_view_set(make_scene(4, 1), 16, (16, 16), 0)
    cache = build_latent_cache(tiny_ae, vs)
    assert len(cache) == len(vs.train_indices)
    assert cache.latents.shape == (len(cache), 4, 4, 3)
    fresh = encode_images(tiny_ae, vs.images[vs.train_indices])
    assert cache.latents.tobytes() == fresh.tobytes()


def test_stale_cache_rebuilt(tiny_ae):
    vs = build_view_set(make_scene(4, 1), 8, (16, 16), 0)
    cache = build_latent_cache(tiny_ae, vs)
    assert ensure_latent_cache(cache, tiny_ae, vs) is cache
    other = tiny_ae.copy()
    other.encoder[0].weight.data += 0.1
    assert not cache.is_valid(other)
    rebuilt = ensure_latent_cache(cache, other, vs)
    assert rebuilt is not cache and rebuilt.is_valid(other)


def test_latent_cache_file_round_trip(tmp_path, tiny_ae):
    vs = build_view_set(make_scene(6, 1), 8, (16, 16), 0)
    cache = build_latent_cache(tiny_ae, vs)
    write_latent_cache(tmp_path, cache)
    raw = (tmp_path / "latents.bin").read_bytes()
    assert raw[:4] == b"IGLC"
    assert len(raw) == 12 + len(cache) * (4 + 4 * 4 * 3 * 4)
    back = read_latent_cache(tmp_path)
    assert back.latents.tobytes() == cache.latents.tobytes()
    assert list(back.indices) == list(cache.indices) and back.fingerprint == cache.fingerprint
    (tmp_path / "latents.bin").write_bytes(raw[:-3])
    with pytest.raises(ValueError, match="truncated"):
        read_latent_cache(tmp_path)


def test_surrogate_stream_deterministic_and_in_range():
    a, b = real_surrogate_stream(6, 32, seed=4), real_surrogate_stream(6, 32, seed=4)
    assert a.images.tobytes() == b.images.tobytes()
    assert a.images.shape == (6, 32, 32, 3)
    assert a.images.min() >= 0 and a.images.max() <= 1
    assert real_surrogate_stream(6, 32, seed=5).images.tobytes() != a.images.tobytes()


def test_directory_mode_crop_and_downscale(tmp_path):
    arr = np.random.default_rng(0).integers(0, 256, size=(200, 300, 3), dtype=np.uint8)
    Image.fromarray(arr).save(tmp_path / "a.png")
    out = real_surrogate_stream(0, 40, directory=tmp_path).images[0]
    crop = arr[:, 50:250].astype(np.float64) / 255
    ref = crop.reshape(40, 5, 40, 5, 3).mean(axis=(1, 3))
    np.testing.assert_allclose(out, ref, atol=1e-6)


def test_directory_mode_empty(tmp_path):
    with pytest.raises(ValueError, match="no images"):
        real_surrogate_stream(4, 16, directory=tmp_path)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_gt_images_in_unit_range(seed):
    s = make_scene(seed, 1)
    img = render_gt_view(s, pose_at([2.0, -3.0, 1.5], (12, 12)), (12, 12))
    assert img.min() >= 0 and img.max() <= 1
