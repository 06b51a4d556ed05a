"""Desk-scale experiment drivers shared by the acceptance tests and scripts/.

Two experiments live here. The sphere fixture trains one latent NeRF on a
single-sphere scene and reports decoded held-out PSNR after each stage. The
central-claim run fine-tunes the baseline AE into an IG-AE (plus its two
ablations) and compares latent 3D-consistency and real-image reconstruction.
"""

from __future__ import annotations

import copy
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import pipelines as P
from .autoencoder import Autoencoder
from .config import RunConfig
from .evaluation import fit_latent_field, latent_nvs_eval, mean_psnr
from .metrics import latent_stats
from .scenes import build_view_set, encode_images, make_scene
from .tensor import Rng


@dataclass
class BaselineSettings:
    ae_steps: int = 1500
    seed: int = 0


def baseline_config(bs: BaselineSettings | None = None) -> RunConfig:
    bs = bs or BaselineSettings()
    cfg = RunConfig()
    cfg.train.ae_steps = bs.ae_steps
    cfg.train.seed = bs.seed
    cfg.train.log_every = 250
    return cfg


def train_baseline(bs: BaselineSettings | None = None,
                   data: P.Datasets | None = None) -> tuple[Autoencoder, P.Datasets]:
    cfg = baseline_config(bs)
    data = data or P.build_datasets(cfg)
    ae, _ = P.pretrain_baseline(cfg, data, Rng(cfg.train.seed))
    return ae, data


# ---------------------------------------------------------------------------
# single-sphere fixture


@dataclass
class SphereFixture:
    extent: int = 64
    views: int = 60
    seed: int = 0
    samples_train: int = 32
    samples_eval: int = 96
    ls_iters: int = 2000
    align_iters: int = 3000
    eval_every: int = 500
    backend: str = "triplane"


def run_sphere_fixture(ae: Autoencoder, fx: SphereFixture | None = None) -> dict:
    """Train a latent NeRF on the sphere scene. Returns per-stage decoded PSNR."""
    fx = fx or SphereFixture()
    cfg = RunConfig()
    tc = cfg.train
    tc.samples_train, tc.samples_eval = fx.samples_train, fx.samples_eval
    tc.ls_iters, tc.align_iters = fx.ls_iters, fx.align_iters
    tc.log_every = 250
    views = build_view_set(make_scene(fx.seed, 0), fx.views, (fx.extent, fx.extent), fx.seed)
    t0 = time.perf_counter()
    _, rep = P.train_latent_nerf(ae, views, fx.backend, cfg, Rng(fx.seed), eval_every=fx.eval_every)
    return {
        "stage1_rgb_psnr": rep.summary["ls_eval"]["rgb_psnr"],
        "stage2_rgb_psnr": rep.summary["align_eval"]["rgb_psnr"],
        "stage1_latent_psnr": rep.summary["ls_eval"]["latent_psnr"],
        "stage2_latent_psnr": rep.summary["align_eval"]["latent_psnr"],
        "seconds": time.perf_counter() - t0,
        "report": rep,
    }


# ---------------------------------------------------------------------------
# IG-AE versus baseline and ablations


@dataclass
class ClaimSettings:
    pretrain_epochs: int = 5
    joint_epochs: int = 10
    samples_train: int = 32
    samples_eval: int = 64
    probe_iters: int = 200
    # the MLP field is ~3.5x slower per step than tri-planes
    mlp_iters: int = 100
    backends: tuple = ("triplane", "mlp")
    variants: tuple = ("full", "no_pr", "no_3d")
    seed: int = 0
    extra: dict = field(default_factory=dict)


def claim_config(cs: ClaimSettings) -> RunConfig:
    cfg = baseline_config()
    tc = cfg.train
    tc.pretrain_epochs, tc.joint_epochs = cs.pretrain_epochs, cs.joint_epochs
    tc.samples_train, tc.samples_eval = cs.samples_train, cs.samples_eval
    tc.probe_iters = cs.probe_iters
    tc.seed = cs.seed
    for k, v in cs.extra.items():
        setattr(tc, k, v)
    return cfg


def nvs_scores(ae, view_sets: list, cfg: RunConfig, backend: str, iters: int,
               seed: int = 0) -> np.ndarray:
    """Per-scene mean held-out latent PSNR of a fresh ``backend`` field fit to the
    train-view encodings. Its triplane mean is exactly ``consistency_probe``."""
    out = []
    for s, views in enumerate(view_sets):
        latents = encode_images(ae, views.images)
        fld, bg, _ = fit_latent_field(ae, views, backend, cfg, Rng(seed, (77, s)), iters, latents)
        std, _ = latent_stats(latents)
        out.append(mean_psnr(latent_nvs_eval(ae, fld, bg, views, cfg.train.samples_eval, std=std)))
    return np.array(out)


@dataclass
class EncoderScores:
    name: str
    real_psnr: float
    scene_psnr: float
    nvs: dict = field(default_factory=dict)  # backend -> per-scene PSNR
    train_seconds: float = 0.0

    @property
    def probe(self) -> float:
        return float(np.mean(self.nvs["triplane"]))

    def row(self) -> dict:
        d = asdict(self)
        d["nvs"] = {k: float(np.mean(v)) for k, v in self.nvs.items()}
        d["probe"] = self.probe
        return d


def score_encoder(name: str, ae, data: P.Datasets, cfg: RunConfig, cs: ClaimSettings,
                  backends=None) -> EncoderScores:
    held = [v.images[v.heldout_indices] for v in data.scenes]
    sc = EncoderScores(name, P.reconstruction_psnr(ae, data.real_heldout.images),
                       float(np.mean([P.reconstruction_psnr(ae, h) for h in held])))
    for b in backends or cs.backends:
        iters = cs.probe_iters if b == "triplane" else cs.mlp_iters
        sc.nvs[b] = nvs_scores(ae, data.scenes, cfg, b, iters, cs.seed)
    return sc


def run_claim(base: Autoencoder, data: P.Datasets, cs: ClaimSettings | None = None,
              log=print) -> dict:
    """Score the baseline, then each IG-AE variant from the same seed.

    Only the full IG-AE is scored on every backend; the ablations only need the
    probe (triplane) and real-image reconstruction.
    """
    cs = cs or ClaimSettings()
    cfg = claim_config(cs)
    results = {"baseline": score_encoder("baseline", base, data, cfg, cs)}
    log(results["baseline"].row())
    models = {}
    for variant in cs.variants:
        c = copy.deepcopy(cfg)
        c.train.no_pr = variant == "no_pr"
        c.train.no_3d = variant == "no_3d"
        t0 = time.perf_counter()
        ae, *_ = P.run_igae(c, base, data, Rng(cs.seed))
        took = time.perf_counter() - t0
        sc = score_encoder(variant, ae, data, cfg, cs,
                           None if variant == "full" else ("triplane",))
        sc.train_seconds = took
        results[variant] = sc
        models[variant] = ae
        log(sc.row())
    results["models"] = models
    return results
