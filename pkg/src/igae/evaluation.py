"""Latent NVS evaluation, the 3-D consistency probe and the render benchmark."""

from __future__ import annotations

import csv
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import losses as L
from . import tensor as T
from .config import RunConfig
from .fields import make_field
from .metrics import MetricRow, latent_psnr, latent_ssim, latent_stats
from .optim import Adam
from .render import BackgroundModel, QueryCounter, render_batch, render_image
from .scenes import PosedViewSet, encode_images
from .tensor import Rng, Tensor


@dataclass
class BenchRow:
    backend: str
    space: str  # "rgb" | "latent"
    render_ms: float
    decode_ms: float
    pixels: int
    rays: int
    train_minutes: float | None = None


class IdentityEncoder:
    """Area-pools RGB by l: a trivially 3-D consistent "latent" space."""

    def __init__(self, l: int):
        self.spec = _Spec(l, 3)

    def encode(self, x) -> Tensor:
        x = x if isinstance(x, Tensor) else Tensor(x)
        return T.avgpool(x, self.spec.l)

    def encoder_fingerprint(self) -> str:
        return f"identity-{self.spec.l}"


@dataclass
class _Spec:
    l: int
    c: int


def _render_np(field, bg, poses, extent, S, batch=4) -> np.ndarray:
    out = []
    with T.no_grad():
        for i in range(0, len(poses), batch):
            z = render_batch(field, poses[i : i + batch], extent, S, bg, None, False)
            out.append(z.data.transpose(0, 2, 3, 1))
    return np.concatenate(out)


def latent_nvs_eval(ae, field, background, views: PosedViewSet, S: int = 96, indices=None,
                    std=None) -> list[MetricRow]:
    """Rendered latents vs encoded ground-truth latents, one row per pose.

    ``std`` (per channel) defaults to the spread of the encoded latents of all views.
    """
    idx = views.heldout_indices if indices is None else np.asarray(indices)
    l = ae.spec.l
    H, W = views.extent
    encoded = encode_images(ae, views.images)
    if std is None:
        std, drange = latent_stats(encoded)
    else:
        drange = float(np.ptp((encoded / std).mean(axis=-1))) or 1.0
    rendered = _render_np(field, background, [views.poses[i] for i in idx], (H // l, W // l), S)
    rows = []
    for j, i in enumerate(idx):
        z_r, z_e = rendered[j], encoded[i]
        rows.append(MetricRow(views.scene_id, int(i), "latent", latent_psnr(z_r, z_e, std),
                              latent_ssim(z_r, z_e, std, drange)))
    return rows


def mean_psnr(rows) -> float:
    return float(np.mean([r.psnr for r in rows]))


def fit_latent_field(ae, views: PosedViewSet, backend: str, cfg: RunConfig, rng: Rng,
                     iters: int, latents: np.ndarray | None = None):
    """Fit a fresh latent field to the encodings of the training views only
    (latent supervision without a decoder). Returns (field, background, losses)."""
    fc = cfg.fields
    tc = cfg.train
    c = ae.spec.c
    l = ae.spec.l
    H, W = views.extent
    if latents is None:
        latents = encode_images(ae, views.images)
    kw = (dict(features=fc.features, resolution=fc.resolution, width=fc.decoder_width)
          if backend == "triplane" else
          dict(pe_order=fc.pe_order, width=fc.mlp_width, hidden=fc.mlp_hidden))
    field = make_field(backend, c, "latent", rng.spawn("field"), bounds=views.scene.radius, **kw)
    white = encode_images(ae, np.ones((1, H, W, 3), np.float32))[0].reshape(-1, c).mean(0)
    bg = BackgroundModel("latent", c, white)
    params = field.parameters() + bg.parameters()
    adam = Adam(params)
    sched = tc.rates.nerf_triplane if backend == "triplane" else tc.rates.nerf_mlp
    xi = getattr(tc.xi, backend)[0]
    lr = sched.base * xi
    train = views.train_indices
    sel = rng.spawn("fit")
    losses = []
    for it in range(iters):
        idx = train[sel.choice(len(train), min(tc.nerf_batch, len(train)), replace=False)]
        target = Tensor(np.ascontiguousarray(latents[idx].transpose(0, 3, 1, 2)))
        z = render_batch(field, [views.poses[i] for i in idx], (H // l, W // l),
                         tc.samples_train, bg, rng.spawn("fit-jitter", it), True)
        loss = L.objective_ls(target, z)
        if not np.isfinite(loss.item()):
            raise FloatingPointError(f"non-finite loss while fitting {views.scene_id} at {it}")
        T.zero_grad(params)
        T.backward(loss)
        adam.step(lr, params)
        losses.append(loss.item())
    return field, bg, np.array(losses)


def consistency_probe(ae, view_sets: list, cfg: RunConfig, seed: int = 0,
                      iters: int | None = None, backend: str = "triplane") -> float:
    """Mean held-out latent PSNR of fresh fields fit to train-view encodings.

    A 3-D consistent latent space is one a 3-D model can explain: held-out
    views are then predicted well. Higher is more consistent.
    """
    iters = cfg.train.probe_iters if iters is None else iters
    scores = []
    for s, views in enumerate(view_sets):
        latents = encode_images(ae, views.images)
        field, bg, _ = fit_latent_field(ae, views, backend, cfg, Rng(seed, (77, s)), iters, latents)
        std, _ = latent_stats(latents)
        rows = latent_nvs_eval(ae, field, bg, views, cfg.train.samples_eval, std=std)
        scores.append(mean_psnr(rows))
    return float(np.mean(scores))


# ---------------------------------------------------------------------------
# benchmark


def bench_render(field, poses, extent: tuple[int, int], S: int, repeats: int = 1000, ae=None,
                 train_minutes: float | None = None) -> BenchRow:
    """Mean wall-clock render time over ``repeats`` renders (cycling through poses);
    latent fields also time decoding with ``ae``."""
    counter = QueryCounter(field)
    bg = BackgroundModel(field.kind, field.channels)
    render_t = decode_t = 0.0
    with T.no_grad():
        for r in range(repeats):
            pose = poses[r % len(poses)]
            t0 = time.perf_counter()
            img = render_image(counter, pose, extent, S, bg)
            t1 = time.perf_counter()
            render_t += t1 - t0
            if ae is not None and field.kind == "latent":
                z = img.values.data.transpose(2, 0, 1)[None]
                ae.decode(Tensor(np.ascontiguousarray(z)))
                decode_t += time.perf_counter() - t1
    return BenchRow(field.backend, field.kind, 1000 * render_t / repeats,
                    1000 * decode_t / repeats, extent[0] * extent[1], counter.rays // repeats,
                    train_minutes)


def bench_pair(backend: str, ae, poses, extent: tuple[int, int], S: int, repeats: int,
               cfg: RunConfig, seed: int = 0) -> tuple[BenchRow, BenchRow]:
    """RGB field at full extent vs latent field at extent / l, same backend and S."""
    fc = cfg.fields
    kw = (dict(features=fc.features, resolution=fc.resolution, width=fc.decoder_width)
          if backend == "triplane" else
          dict(pe_order=fc.pe_order, width=fc.mlp_width, hidden=fc.mlp_hidden))
    rng = Rng(seed, (91,))
    rgb = make_field(backend, 3, "rgb", rng.spawn("rgb"), **kw)
    lat = make_field(backend, ae.spec.c, "latent", rng.spawn("latent"), **kw)
    l = ae.spec.l
    row_rgb = bench_render(rgb, poses, extent, S, repeats)
    row_lat = bench_render(lat, poses, (extent[0] // l, extent[1] // l), S, repeats, ae)
    return row_rgb, row_lat


def write_rows_csv(path, rows) -> None:
    rows = list(rows)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = [f.name for f in fields(rows[0])]
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(asdict(r))
