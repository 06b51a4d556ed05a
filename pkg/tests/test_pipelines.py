import json

import numpy as np
import pytest

from igae import pipelines as P
from igae import tensor as T
from igae.autoencoder import Autoencoder, AutoencoderSpec
from igae.checkpoint import file_hash, save_autoencoder
from igae.config import FieldConfig, RunConfig
from igae.optim import Schedule
from igae.scenes import (RealImageSet, build_latent_cache, build_view_set, make_scene,
                         real_surrogate_stream)
from igae.tensor import Rng


def tiny_config(**train):
    cfg = RunConfig()
    cfg.ae = AutoencoderSpec(l=4, c=4, channels=(8, 8))
    cfg.fields = FieldConfig(features=4, resolution=8, decoder_width=8, mlp_width=16,
                             mlp_hidden=1, pe_order=2)
    tc = cfg.train
    tc.samples_train, tc.samples_eval = 8, 12
    tc.batch_views, tc.batch_real, tc.nerf_batch = 2, 1, 2
    tc.pretrain_epochs, tc.joint_epochs = 1, 1
    tc.ls_iters, tc.align_iters = 4, 4
    tc.log_every = 1
    for k, v in train.items():
        setattr(tc, k, v)
    return cfg


@pytest.fixture(scope="module")
def world():
    cfg = tiny_config()
    views = [build_view_set(make_scene(i, 1), 8, (16, 16), i) for i in range(2)]
    real = real_surrogate_stream(6, 16, seed=0)
    ae = Autoencoder.create(cfg.ae, Rng(0))
    return cfg, views, real, ae


def params_bytes(params):
    return [p.data.tobytes() for p in params]


def test_pretrain_leaves_ae_untouched(world):
    cfg, views, _, ae = world
    before = ae.fingerprint()
    caches = [build_latent_cache(ae, v) for v in views]
    bank, rep = P.pretrain_latent_scenes(ae, views, caches, cfg, Rng(1))
    assert ae.fingerprint() == before
    assert len(bank.triplanes) == 2 and len(rep.losses("pretrain")) > 0


def test_pretrain_loss_decreases_on_sphere():
    cfg = tiny_config(pretrain_epochs=30)
    cfg.fields = FieldConfig(features=8, resolution=32, decoder_width=32)
    cfg.train.samples_train = 16
    cfg.train.rates.triplane = Schedule(2e-2, 0.988)
    vs = build_view_set(make_scene(0, 0), 16, (32, 32), 0)
    ae = Autoencoder.create(cfg.ae, Rng(0))
    _, rep = P.pretrain_latent_scenes(ae, [vs], [build_latent_cache(ae, vs)], cfg, Rng(1))
    losses = rep.losses()[:100]
    windows = losses.reshape(5, 20).mean(axis=1)
    assert np.all(np.diff(windows) < 0)


def test_pretrain_rejects_stale_cache(world):
    cfg, views, _, ae = world
    caches = [build_latent_cache(ae, v) for v in views]
    other = ae.copy()
    other.encoder[0].bias.data += 1
    with pytest.raises(P.StaleCacheError):
        P.pretrain_latent_scenes(other, views, caches, cfg, Rng(1))


def test_no_3d_and_no_pr_together_rejected(world):
    cfg, views, real, ae = world
    bad = tiny_config(no_3d=True, no_pr=True)
    with pytest.raises(ValueError, match="degenerates to no training"):
        P.train_igae(ae.copy(), views, real, bad, Rng(0))


def test_ablations_consume_identical_randomness(world):
    cfg, views, real, ae = world
    caches = [build_latent_cache(ae, v) for v in views]
    states = {}
    for name, flags in {"full": {}, "no_3d": {"no_3d": True}, "no_pr": {"no_pr": True}}.items():
        c = tiny_config(**flags)
        bank = None
        if not c.train.no_3d:
            bank, _ = P.pretrain_latent_scenes(ae, views, caches, c, Rng(3))
        _, _, rep, sampler = P.train_igae(ae.copy(), views, real, c, Rng(3), bank)
        states[name] = (sampler.calls, json.dumps(sampler._gen.bit_generator.state, default=str),
                        len(rep.losses("igae")))
    assert states["full"] == states["no_3d"] == states["no_pr"]
    assert states["full"][0] > 0


def test_igae_updates_every_group(world):
    cfg, views, real, ae = world
    caches = [build_latent_cache(ae, v) for v in views]
    bank, _ = P.pretrain_latent_scenes(ae, views, caches, cfg, Rng(1))
    bank_before = params_bytes(bank.parameters())
    trained, bank, rep, _ = P.train_igae(ae.copy(), views, real, cfg, Rng(2), bank)
    assert params_bytes(trained.encoder_parameters()) != params_bytes(ae.encoder_parameters())
    assert params_bytes(trained.decoder_parameters()) != params_bytes(ae.decoder_parameters())
    assert params_bytes(bank.parameters()) != bank_before
    assert all(np.isfinite(rep.losses()))


def test_no_pr_leaves_decoder_alone_without_rgb_path(world):
    cfg, views, real, ae = world
    c = tiny_config(no_pr=True)
    c.train.weights.rgb = 0.0
    caches = [build_latent_cache(ae, v) for v in views]
    bank, _ = P.pretrain_latent_scenes(ae, views, caches, c, Rng(1))
    trained, *_ = P.train_igae(ae.copy(), views, real, c, Rng(2), bank)
    assert params_bytes(trained.decoder_parameters()) == params_bytes(ae.decoder_parameters())
    assert params_bytes(trained.encoder_parameters()) != params_bytes(ae.encoder_parameters())


def test_divergence_aborts_with_batch_dump(world):
    cfg, views, _, ae = world
    broken = ae.copy()
    broken.encoder[0].weight.data[...] = np.nan
    c = tiny_config(no_3d=True)
    with pytest.raises(P.TrainingDiverged, match="last batch"):
        P.train_igae(broken, views, RealImageSet(np.zeros((0, 16, 16, 3), np.float32)), c, Rng(0))


def test_latent_nerf_stage_contracts(world, tmp_path):
    cfg, views, _, ae = world
    vs = views[0]
    ae_hash = save_autoencoder(tmp_path / "ae.ckpt", ae)
    shared_before = ae.fingerprint()
    state, rep = P.train_latent_nerf(ae, vs, "triplane", cfg, Rng(4), stage="ls")
    # Stage 1 never touches the private decoder copy
    assert params_bytes(state.decoder.decoder_parameters()) == params_bytes(ae.decoder_parameters())
    field_ls = params_bytes(state.field.parameters())
    state, rep = P.train_latent_nerf(ae, vs, "triplane", cfg, Rng(4), stage="align", state=state,
                                     report=rep)
    assert params_bytes(state.decoder.decoder_parameters()) != params_bytes(ae.decoder_parameters())
    assert params_bytes(state.field.parameters()) != field_ls
    assert ae.fingerprint() == shared_before
    assert save_autoencoder(tmp_path / "ae2.ckpt", ae) == ae_hash == file_hash(tmp_path / "ae.ckpt")
    assert "ls_eval" in rep.summary and "align_eval" in rep.summary
    assert {r["stage"] for r in rep.rows} == {"ls", "align"}


def test_split_stages_equal_both(world):
    cfg, views, _, ae = world
    vs = views[1]
    a, _ = P.train_latent_nerf(ae, vs, "mlp", cfg, Rng(5), stage="both")
    b, _ = P.train_latent_nerf(ae, vs, "mlp", cfg, Rng(5), stage="ls")
    b, _ = P.train_latent_nerf(ae, vs, "mlp", cfg, Rng(5), stage="align", state=b)
    assert params_bytes(a.field.parameters()) == params_bytes(b.field.parameters())
    assert params_bytes(a.decoder.decoder_parameters()) == params_bytes(b.decoder.decoder_parameters())


def test_latent_nerf_rejects_bad_extent_and_stage(world):
    cfg, views, _, ae = world
    odd = build_view_set(make_scene(0, 0), 2, (18, 18), 0)
    with pytest.raises(ValueError, match="divisible"):
        P.train_latent_nerf(ae, odd, "triplane", cfg, Rng(0))
    with pytest.raises(ValueError, match="stage"):
        P.train_latent_nerf(ae, views[0], "triplane", cfg, Rng(0), stage="all")
    with pytest.raises(ValueError, match="backend"):
        P.train_latent_nerf(ae, views[0], "voxels", cfg, Rng(0))


def test_nerf_checkpoint_resume_matches_uninterrupted(world, tmp_path):
    cfg, views, _, ae = world
    vs = views[0]
    full, _ = P.train_latent_nerf(ae, vs, "triplane", cfg, Rng(6))
    part, _ = P.train_latent_nerf(ae, vs, "triplane", cfg, Rng(6), stage="ls")
    P.save_latent_nerf(tmp_path / "n.ckpt", part, ae, cfg, vs.scene_id, vs.scene.radius)
    loaded, ae2, cfg2, meta = P.load_latent_nerf(tmp_path / "n.ckpt")
    assert meta["ls_done"] == cfg.train.ls_iters and meta["backend"] == "triplane"
    assert ae2.encoder_fingerprint() == ae.encoder_fingerprint()
    resumed, _ = P.train_latent_nerf(ae, vs, "triplane", cfg2, Rng(6), stage="align", state=loaded)
    assert params_bytes(resumed.field.parameters()) == params_bytes(full.field.parameters())
    assert params_bytes(resumed.decoder.decoder_parameters()) == params_bytes(
        full.decoder.decoder_parameters())


def test_scene_bank_round_trip(world, tmp_path):
    cfg, views, _, ae = world
    bank, _ = P.pretrain_latent_scenes(ae, views, [build_latent_cache(ae, v) for v in views],
                                       cfg, Rng(1))
    P.save_scene_bank(tmp_path / "b.ckpt", bank)
    back = P.load_scene_bank(tmp_path / "b.ckpt")
    assert back.scene_ids == bank.scene_ids
    assert params_bytes(back.parameters()) == params_bytes(bank.parameters())


def test_run_report_csv(tmp_path):
    rep = P.RunReport()
    rep.add(0, "ls", 0.5, 1e-3)
    rep.add(1, "ls", latent_psnr=30.0, rgb_psnr=25.0, ssim=0.9)
    text = rep.metrics_csv(deterministic=True)
    lines = text.strip().split("\n")
    assert lines[0] == ",".join(P.METRIC_COLUMNS)
    assert lines[1] == "0,ls,0.5,,,,0.001,0.0"
    assert all(r["stage"] and r["step"] is not None for r in rep.rows)
    rep.write(tmp_path, deterministic=True)
    assert (tmp_path / "metrics.csv").read_text() == text
    assert json.loads((tmp_path / "report.json").read_text())["rows"] == 2


def test_baseline_autoencoder_trains(world):
    cfg, views, real, _ = world
    ae = Autoencoder.create(cfg.ae, Rng(0))
    images = np.concatenate([views[0].images, real.images])
    before = P.reconstruction_psnr(ae, images)
    rep = P.train_autoencoder(ae, images, 60, 4, Schedule(3e-3), Rng(1), log_every=10)
    assert P.reconstruction_psnr(ae, images) > before + 3
    assert rep.losses("ae")[-1] < rep.losses("ae")[0]


def test_white_latent_is_constant_background(world):
    _, _, _, ae = world
    w = P.white_latent(ae, 16)
    with T.no_grad():
        z = ae.encode(np.ones((1, 3, 16, 16), np.float32)).data
    np.testing.assert_allclose(w, z.mean(axis=(0, 2, 3)), rtol=1e-5, atol=1e-7)
