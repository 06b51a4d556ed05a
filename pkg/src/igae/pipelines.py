"""Training procedures: baseline AE pretraining, latent-scene pretraining,
joint IG-AE training (with ablation switches) and two-stage latent NeRF training.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from . import losses as L
from . import tensor as T
from .autoencoder import Autoencoder
from .config import FieldConfig, RunConfig
from .fields import FeatureDecoder, TriPlane, TriPlaneField, make_field
from .metrics import latent_psnr, latent_ssim, latent_stats, psnr, ssim
from .optim import Adam, Schedule
from .render import BackgroundModel, render_batch
from .scenes import LatentCache, PosedViewSet, RealImageSet, build_latent_cache, encode_images
from .tensor import Rng, Tensor

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("step", "stage", "loss", "latent_psnr", "rgb_psnr", "ssim", "lr", "wall_ms")


class TrainingDiverged(RuntimeError):
    pass


class StaleCacheError(RuntimeError):
    pass


@dataclass
class RunReport:
    rows: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    checkpoint: str | None = None
    _t0: float = field(default_factory=time.perf_counter, repr=False)

    def add(self, step: int, stage: str, loss=None, lr=None, latent_psnr=None, rgb_psnr=None,
            ssim=None):
        self.rows.append({
            "step": int(step), "stage": stage,
            "loss": None if loss is None else float(loss),
            "latent_psnr": latent_psnr, "rgb_psnr": rgb_psnr, "ssim": ssim,
            "lr": None if lr is None else float(lr),
            "wall_ms": (time.perf_counter() - self._t0) * 1000.0,
        })

    def losses(self, stage: str | None = None) -> np.ndarray:
        return np.array([r["loss"] for r in self.rows
                         if r["loss"] is not None and (stage is None or r["stage"] == stage)])

    def evals(self, stage: str | None = None) -> list:
        return [r for r in self.rows if r["rgb_psnr"] is not None or r["latent_psnr"] is not None
                if stage is None or r["stage"] == stage]

    def metrics_csv(self, deterministic: bool = False) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for r in self.rows:
            row = []
            for col in METRIC_COLUMNS:
                v = r[col]
                if col == "wall_ms" and deterministic:
                    v = 0.0
                row.append("" if v is None else (repr(float(v)) if isinstance(v, float) else v))
            w.writerow(row)
        return buf.getvalue()

    def write(self, out_dir, deterministic: bool = False):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_text(out / "metrics.csv", self.metrics_csv(deterministic))
        doc = {"summary": self.summary, "timings": self.timings, "checkpoint": self.checkpoint,
               "rows": len(self.rows)}
        _write_text(out / "report.json", json.dumps(doc, indent=2, default=_json_default))


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def _write_text(path: Path, text: str):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _check_finite(loss: Tensor, where: str, dump: dict):
    if not np.isfinite(loss.item()):
        raise TrainingDiverged(f"non-finite loss in {where}; last batch: {dump}")


def _step_params(adam: Adam, params, lr: float):
    live = [p for p in params if p.grad is not None]
    if live:
        adam.step(lr, live)


def _nchw(images: np.ndarray) -> Tensor:
    return Tensor(np.ascontiguousarray(images.transpose(0, 3, 1, 2)))


# ---------------------------------------------------------------------------
# baseline autoencoder


def train_autoencoder(ae: Autoencoder, images: np.ndarray, steps: int, batch: int,
                      schedule: Schedule, rng: Rng, report: RunReport | None = None,
                      log_every: int = 50) -> RunReport:
    """Plain reconstruction training (mse) of a standard autoencoder."""
    report = report or RunReport()
    params = ae.parameters()
    adam = Adam(params)
    for step in range(steps):
        idx = rng.choice(len(images), batch, replace=False)
        x = _nchw(images[idx])
        loss = L.mse(ae.decode(ae.encode(x)), x)
        _check_finite(loss, "train_autoencoder", {"step": step, "images": idx.tolist()})
        T.zero_grad(params)
        T.backward(loss)
        lr = schedule.rate(step, max(len(images) // batch, 1))
        adam.step(lr, params)
        if step % log_every == 0 or step == steps - 1:
            report.add(step, "ae", loss.item(), lr)
    return report


def reconstruction_psnr(ae: Autoencoder, images: np.ndarray, batch: int = 8) -> float:
    out = []
    with T.no_grad():
        for i in range(0, len(images), batch):
            x = images[i : i + batch]
            xh = ae.decode(ae.encode(_nchw(x))).data.transpose(0, 2, 3, 1)
            out += [psnr(a, b) for a, b in zip(x, xh)]
    return float(np.mean(out))


def white_latent(ae: Autoencoder, extent: int) -> np.ndarray:
    """Mean encoding of an all-white image (initial latent background)."""
    white = np.ones((1, extent, extent, 3), dtype=np.float32)
    return encode_images(ae, white)[0].reshape(-1, ae.spec.c).mean(axis=0)


# ---------------------------------------------------------------------------
# latent scene bank (Tri-Planes with a shared feature decoder)


@dataclass
class SceneBank:
    scene_ids: list
    triplanes: list  # one TriPlane per scene
    decoder: FeatureDecoder
    background: BackgroundModel

    def field(self, i: int) -> TriPlaneField:
        return TriPlaneField(self.triplanes[i], self.decoder)

    def parameters(self) -> list[Tensor]:
        ps = [p for tp in self.triplanes for p in tp.parameters()]
        return ps + self.decoder.parameters() + self.background.parameters()

    @classmethod
    def create(cls, scene_ids, channels: int, fc: FieldConfig, rng: Rng, bg_init=None,
               bounds: float = 1.0) -> "SceneBank":
        tps = [TriPlane.create(fc.features, fc.resolution, bounds, rng.spawn("tp", i))
               for i in range(len(scene_ids))]
        dec = FeatureDecoder(fc.features, channels, "latent", rng.spawn("fdec"),
                             width=fc.decoder_width)
        return cls(list(scene_ids), tps, dec, BackgroundModel("latent", channels, bg_init))


def _render_pairs(bank: SceneBank, view_sets, pairs, extent, S, rng: Rng) -> Tensor:
    """Render (scene, view) pairs with their latent scenes -> [B, c, h, w] (pair order kept)."""
    outs = []
    order = []
    for s in sorted({p[0] for p in pairs}):
        sel = [k for k, p in enumerate(pairs) if p[0] == s]
        poses = [view_sets[s].poses[pairs[k][1]] for k in sel]
        outs.append(render_batch(bank.field(s), poses, extent, S, bank.background, rng, True))
        order += sel
    out = T.concat(outs, axis=0) if len(outs) > 1 else outs[0]
    inv = np.argsort(order)
    if np.all(inv == np.arange(len(inv))):
        return out
    return out[inv]


def _all_pairs(view_sets) -> list:
    return [(s, int(v)) for s, vs in enumerate(view_sets) for v in vs.train_indices]


def pretrain_latent_scenes(ae: Autoencoder, view_sets: list, caches: list, cfg: RunConfig,
                           rng: Rng, report: RunReport | None = None,
                           bank: SceneBank | None = None) -> tuple[SceneBank, RunReport]:
    """Fit Tri-Planes (and their shared decoder) to cached latents of a frozen AE."""
    tc = cfg.train
    report = report or RunReport()
    for vs, cache in zip(view_sets, caches):
        if not cache.is_valid(ae) or cache.scene_id != vs.scene_id:
            raise StaleCacheError(f"latent cache for {vs.scene_id} does not match the encoder")
    extent = view_sets[0].extent[0] // ae.spec.l
    if bank is None:
        bank = SceneBank.create([v.scene_id for v in view_sets], ae.spec.c, cfg.fields,
                                rng.spawn("bank"), white_latent(ae, view_sets[0].extent[0]))
    lookup = {}
    for s, cache in enumerate(caches):
        for j, idx in enumerate(cache.indices):
            lookup[(s, int(idx))] = cache.latents[j]
    pairs = _all_pairs(view_sets)
    spe = max(len(pairs) // tc.batch_views, 1)
    steps = tc.pretrain_epochs * spe
    params = bank.parameters()
    adam = Adam(params)
    sel_rng = rng.spawn("pretrain")
    for step in range(steps):
        batch = [pairs[i] for i in sel_rng.choice(len(pairs), tc.batch_views, replace=False)]
        target = Tensor(np.stack([lookup[p] for p in batch]).transpose(0, 3, 1, 2))
        zt = _render_pairs(bank, view_sets, batch, (extent, extent), tc.samples_train,
                           rng.spawn("pretrain-jitter", step))
        loss = L.mse(target, zt)
        tps = [bank.triplanes[s] for s in sorted({p[0] for p in batch})]
        if tc.weights.tv3d:
            tv = None
            for tp in tps:
                t = L.tv_triplane(tp)
                tv = t if tv is None else T.add(tv, t)
            loss = T.add(loss, T.scale(tv, tc.weights.tv3d))
        _check_finite(loss, "pretrain_latent_scenes", {"step": step, "batch": batch})
        T.zero_grad(params)
        T.backward(loss)
        lr = tc.rates.triplane.base
        _step_params(adam, params, lr)
        if step % tc.log_every == 0 or step == steps - 1:
            report.add(step, "pretrain", loss.item(), lr)
    return bank, report


# ---------------------------------------------------------------------------
# joint IG-AE training


def train_igae(ae: Autoencoder, view_sets: list, real: RealImageSet | None, cfg: RunConfig,
               rng: Rng, bank: SceneBank | None = None, report: RunReport | None = None,
               proxy: L.PerceptualProxy | None = None):
    """Jointly train the AE and the latent scenes under 3-D regularization + AE preservation.

    ``no_3d`` drops the 3-D regularization objective and ``no_pr`` the AE
    preservation objective; minibatch sampling is identical in every variant.
    Returns (ae, bank, report, sampler_rng).
    """
    tc = cfg.train
    if tc.no_3d and tc.no_pr:
        raise ValueError("no_3d and no_pr together remove every objective: "
                         "training degenerates to no training")
    report = report or RunReport()
    w = tc.weights
    use_3d = not tc.no_3d
    use_ae = not tc.no_pr
    if use_3d and bank is None:
        raise ValueError("3-D regularization needs pretrained latent scenes (a SceneBank)")
    if use_ae and real is not None and w.perceptual and proxy is None:
        proxy = L.PerceptualProxy(seed=tc.seed + 7)
    H = view_sets[0].extent[0]
    extent = (H // ae.spec.l, H // ae.spec.l)
    pairs = _all_pairs(view_sets)
    spe = max(len(pairs) // tc.batch_views, 1)
    steps = tc.joint_epochs * spe
    enc_p, dec_p = ae.encoder_parameters(), ae.decoder_parameters()
    bank_p = bank.parameters() if bank is not None else []
    adam = Adam(enc_p + dec_p + bank_p)
    sampler = rng.spawn("igae")
    n_real = len(real) if real is not None else 0
    for step in range(steps):
        # all randomness is drawn up front so every ablation consumes the same stream
        batch = [pairs[i] for i in sampler.choice(len(pairs), tc.batch_views, replace=False)]
        ridx = sampler.choice(n_real, min(tc.batch_real, n_real), replace=False) if n_real else []
        jitter = rng.spawn("igae-jitter", step)

        x_np = np.stack([view_sets[s].images[v] for s, v in batch])
        x = _nchw(x_np)
        z = ae.encode(x)
        l3d = lae = None
        if use_3d:
            zt = _render_pairs(bank, view_sets, batch, extent, tc.samples_train, jitter)
            xt = ae.decode(zt)
            tps = [bank.triplanes[s] for s in sorted({p[0] for p in batch})]
            l3d = L.objective_3d(x, z, zt, xt, tps, w)
        if use_ae:
            synth = (x, ae.decode(z))
            real_terms = None
            if n_real:
                I = _nchw(real.images[ridx])
                k = ae.encode(I)
                real_terms = (I, ae.decode(k), k)
            lae = L.objective_ae(synth, real_terms, w, proxy)
        loss = L.objective_igae(l3d, lae)
        _check_finite(loss, "train_igae", {"step": step, "batch": batch,
                                           "real": list(map(int, ridx))})
        T.zero_grad(adam.params)
        T.backward(loss)
        lr_e = tc.rates.encoder.rate(step, spe)
        lr_d = tc.rates.decoder.rate(step, spe)
        lr_t = tc.rates.triplane.rate(step, spe)
        _step_params(adam, enc_p, lr_e)
        _step_params(adam, dec_p, lr_d)
        _step_params(adam, bank_p, lr_t)
        if step % tc.log_every == 0 or step == steps - 1:
            report.add(step, "igae", loss.item(), lr_e)
    return ae, bank, report, sampler


# ---------------------------------------------------------------------------
# two-stage latent NeRF training


@dataclass
class LatentNerfState:
    backend: str
    field: object
    background: BackgroundModel
    decoder: Autoencoder  # scene-private copy; only its decoder is trained
    adam: Adam
    step: int = 0
    ls_done: int = 0
    align_done: int = 0

    def field_parameters(self) -> list[Tensor]:
        return self.field.parameters() + self.background.parameters()

    def named_tensors(self) -> dict[str, tuple[str, Tensor]]:
        role = "triplane" if self.backend == "triplane" else "mlp_field"
        out = {}
        for name, t in self.field.named_parameters().items():
            r = "feature_decoder" if name.startswith("feature_decoder") else role
            out[name] = (r, t)
        out["background"] = ("background", self.background.vector)
        for name, (r, t) in self.decoder.named_parameters().items():
            if r == "decoder":
                out[name] = ("decoder", t)
        return out


def init_latent_nerf(ae: Autoencoder, views: PosedViewSet, backend: str, cfg: RunConfig,
                     rng: Rng) -> LatentNerfState:
    fc = cfg.fields
    c = ae.spec.c
    if backend == "triplane":
        f = make_field("triplane", c, "latent", rng.spawn("field"), features=fc.features,
                       resolution=fc.resolution, width=fc.decoder_width,
                       bounds=views.scene.radius)
    elif backend == "mlp":
        f = make_field("mlp", c, "latent", rng.spawn("field"), pe_order=fc.pe_order,
                       width=fc.mlp_width, hidden=fc.mlp_hidden, bounds=views.scene.radius)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    bg = BackgroundModel("latent", c, white_latent(ae, views.extent[0]))
    dec = ae.copy()
    params = f.parameters() + bg.parameters() + dec.decoder_parameters()
    return LatentNerfState(backend, f, bg, dec, Adam(params))


def _nerf_rate(cfg: RunConfig, backend: str) -> Schedule:
    r = cfg.train.rates
    return r.nerf_triplane if backend == "triplane" else r.nerf_mlp


def _xi(cfg: RunConfig, backend: str) -> tuple:
    return tuple(getattr(cfg.train.xi, backend))


def train_latent_nerf(ae: Autoencoder, views: PosedViewSet, backend: str, cfg: RunConfig,
                      rng: Rng, stage: str = "both", state: LatentNerfState | None = None,
                      report: RunReport | None = None, cache: LatentCache | None = None,
                      eval_every: int = 0):
    """Latent Supervision (fit the field to cached latents) then RGB Alignment
    (fine-tune field + a private decoder copy against RGB). The shared AE is
    never modified. Returns (state, report)."""
    if stage not in ("ls", "align", "both"):
        raise ValueError(f"stage must be ls, align or both, got {stage!r}")
    H, W = views.extent
    l = ae.spec.l
    if H % l or W % l:
        raise ValueError(f"image extent {H}x{W} is not divisible by l={l}")
    tc = cfg.train
    report = report or RunReport()
    state = state or init_latent_nerf(ae, views, backend, cfg, rng)
    extent = (H // l, W // l)
    train_idx = views.train_indices
    sched = _nerf_rate(cfg, backend)
    xi_ls, xi_align = _xi(cfg, backend)
    dec_sched = tc.rates.nerf_decoder
    spe = max(len(train_idx) // tc.nerf_batch, 1)

    if stage in ("ls", "both"):
        cache = cache if cache is not None and cache.is_valid(ae) else build_latent_cache(ae, views)
        pos = {int(i): j for j, i in enumerate(cache.indices)}
        sel = rng.spawn("ls")
        params = state.field_parameters()
        for it in range(state.ls_done, tc.ls_iters):
            idx = train_idx[_pick(sel, len(train_idx), tc.nerf_batch)]
            target = Tensor(cache.nchw()[[pos[int(i)] for i in idx]])
            zt = render_batch(state.field, [views.poses[i] for i in idx], extent,
                              tc.samples_train, state.background, rng.spawn("ls-jitter", it), True)
            loss = L.objective_ls(target, zt)
            _check_finite(loss, "latent supervision", {"iter": it, "views": idx.tolist()})
            T.zero_grad(params)
            T.backward(loss)
            lr = Schedule(sched.base, sched.gamma, xi_ls).rate(state.step, spe)
            state.adam.step(lr, params)
            state.step += 1
            state.ls_done = it + 1
            if it % tc.log_every == 0 or it == tc.ls_iters - 1:
                report.add(state.step, "ls", loss.item(), lr)
            if eval_every and (it + 1) % eval_every == 0:
                _report_eval(report, state, ae, views, cfg, "ls")
        if tc.ls_iters and not (eval_every and tc.ls_iters % eval_every == 0):
            _report_eval(report, state, ae, views, cfg, "ls")

    if stage in ("align", "both"):
        sel = rng.spawn("align")
        fparams = state.field_parameters()
        dparams = state.decoder.decoder_parameters()
        for it in range(state.align_done, tc.align_iters):
            idx = train_idx[_pick(sel, len(train_idx), tc.nerf_batch)]
            x = _nchw(views.images[idx])
            zt = render_batch(state.field, [views.poses[i] for i in idx], extent,
                              tc.samples_train, state.background, rng.spawn("align-jitter", it),
                              True)
            loss = L.objective_align(x, state.decoder.decode(zt))
            _check_finite(loss, "RGB alignment", {"iter": it, "views": idx.tolist()})
            T.zero_grad(fparams + dparams)
            T.backward(loss)
            lr = Schedule(sched.base, sched.gamma, xi_align).rate(state.step, spe)
            lr_dec = dec_sched.rate(it, spe)
            state.adam.step(lr, fparams)
            state.adam.step(lr_dec, dparams)
            state.step += 1
            state.align_done = it + 1
            if it % tc.log_every == 0 or it == tc.align_iters - 1:
                report.add(state.step, "align", loss.item(), lr)
            if eval_every and (it + 1) % eval_every == 0:
                _report_eval(report, state, ae, views, cfg, "align")
        if tc.align_iters and not (eval_every and tc.align_iters % eval_every == 0):
            _report_eval(report, state, ae, views, cfg, "align")
    return state, report


def _pick(rng: Rng, n: int, k: int) -> np.ndarray:
    return rng.choice(n, min(k, n), replace=False)


def render_latents(field, background, poses, extent, S: int, batch: int = 4) -> np.ndarray:
    """Midpoint-sampled latent renders without a graph -> [n, h, w, c]."""
    out = []
    with T.no_grad():
        for i in range(0, len(poses), batch):
            z = render_batch(field, poses[i : i + batch], extent, S, background, None, False)
            out.append(z.data.transpose(0, 2, 3, 1))
    return np.concatenate(out)


def decode_latents(dec: Autoencoder, latents: np.ndarray, batch: int = 4) -> np.ndarray:
    out = []
    with T.no_grad():
        for i in range(0, len(latents), batch):
            z = Tensor(np.ascontiguousarray(latents[i : i + batch].transpose(0, 3, 1, 2)))
            out.append(dec.decode(z).data.transpose(0, 2, 3, 1))
    return np.concatenate(out)


def evaluate_latent_nerf(state: LatentNerfState, ae: Autoencoder, views: PosedViewSet,
                         cfg: RunConfig, indices=None) -> dict:
    """Held-out decoded RGB PSNR/SSIM (private decoder) and latent PSNR/SSIM vs encodings."""
    idx = views.heldout_indices if indices is None else np.asarray(indices)
    H, W = views.extent
    l = ae.spec.l
    z_r = render_latents(state.field, state.background, [views.poses[i] for i in idx],
                         (H // l, W // l), cfg.train.samples_eval)
    x_r = decode_latents(state.decoder, z_r)
    z_e = encode_images(ae, views.images[idx])
    std, rng_ = latent_stats(encode_images(ae, views.images))
    gt = views.images[idx]
    return {
        "rgb_psnr": float(np.mean([psnr(a, b) for a, b in zip(x_r, gt)])),
        "rgb_ssim": float(np.mean([ssim(a, b) for a, b in zip(x_r, gt)])),
        "latent_psnr": float(np.mean([latent_psnr(a, b, std) for a, b in zip(z_r, z_e)])),
        "latent_ssim": float(np.mean([latent_ssim(a, b, std, rng_) for a, b in zip(z_r, z_e)])),
    }


def _report_eval(report: RunReport, state, ae, views, cfg, stage: str):
    m = evaluate_latent_nerf(state, ae, views, cfg)
    report.add(state.step, stage, latent_psnr=m["latent_psnr"], rgb_psnr=m["rgb_psnr"],
               ssim=m["rgb_ssim"])
    report.summary[f"{stage}_eval"] = m


# ---------------------------------------------------------------------------
# checkpoints


def _nerf_tensors(state: LatentNerfState, ae: Autoencoder) -> dict:
    named = state.named_tensors()
    # the shared encoder rides along so evaluation needs nothing else
    for name, (role, t) in ae.named_parameters().items():
        if role == "encoder":
            named[name] = ("encoder", t)
    return named


def save_latent_nerf(path, state: LatentNerfState, ae: Autoencoder, cfg: RunConfig,
                     scene_id: str, bounds: float, meta: dict | None = None) -> str:
    named = _nerf_tensors(state, ae)
    arrays = {k: t.data for k, (r, t) in named.items()}
    roles = {k: r for k, (r, t) in named.items()}
    trainable = {id(t): k for k, (r, t) in named.items() if r != "encoder"}
    moments = state.adam.state_arrays(trainable)
    arrays.update(moments)
    roles.update({k: "optimizer" for k in moments})
    m = {
        "kind": "latent_nerf", "backend": state.backend, "scene_id": scene_id,
        "bounds": float(bounds), "step": state.step, "ls_done": state.ls_done,
        "align_done": state.align_done, "adam_steps": state.adam.steps,
        "adam_counts": state.adam.step_counts(trainable), "ae_spec": ae.spec.to_dict(),
        "ae_fingerprint": ae.fingerprint(), "config": cfg.to_dict(),
    }
    m.update(meta or {})
    return ckpt.save_checkpoint(path, arrays, roles, m)


def load_latent_nerf(path):
    """-> (state, encoder-only Autoencoder, RunConfig, meta)."""
    from .config import config_from_dict

    ck = ckpt.load_checkpoint(path)
    meta = ck.meta
    if meta.get("kind") != "latent_nerf":
        raise ckpt.CheckpointError(f"{path} is not a latent NeRF checkpoint")
    cfg = config_from_dict(meta["config"])
    spec = cfg.ae
    ae = Autoencoder.create(spec, Rng(0))
    ckpt.assign({k: v for k, v in ae.named_parameters().items() if v[0] == "encoder"}, ck)
    dummy = _BoundsOnly(meta["bounds"])
    state = init_latent_nerf(ae, dummy, meta["backend"], cfg, Rng(0))
    named = _nerf_tensors(state, ae)
    ckpt.assign({k: v for k, v in named.items() if v[0] != "encoder"}, ck)
    params = {k: t for k, (r, t) in named.items() if r != "encoder"}
    state.adam.load_state(ck.arrays, meta["adam_counts"], params)
    state.adam.steps = meta["adam_steps"]
    state.step, state.ls_done, state.align_done = meta["step"], meta["ls_done"], meta["align_done"]
    return state, ae, cfg, meta


@dataclass
class _BoundsOnly:
    """Stand-in view set carrying only what init_latent_nerf reads."""
    bounds: float
    extent: tuple = (8, 8)

    @property
    def scene(self):
        return self

    @property
    def radius(self):
        return self.bounds


def save_scene_bank(path, bank: SceneBank, meta: dict | None = None) -> str:
    arrays, roles = {}, {}
    for i, tp in enumerate(bank.triplanes):
        for name, t in tp.named_parameters(f"scene{i}.triplane").items():
            arrays[name], roles[name] = t.data, "triplane"
    for name, t in bank.decoder.named_parameters().items():
        arrays[name], roles[name] = t.data, "feature_decoder"
    arrays["background"], roles["background"] = bank.background.vector.data, "background"
    m = {"kind": "scene_bank", "scene_ids": bank.scene_ids,
         "bounds": [tp.bounds for tp in bank.triplanes],
         "features": bank.decoder.features, "channels": bank.decoder.channels,
         "resolution": bank.triplanes[0].resolution if bank.triplanes else 0,
         "decoder_width": bank.decoder.mlp.sizes[1]}
    m.update(meta or {})
    return ckpt.save_checkpoint(path, arrays, roles, m)


def load_scene_bank(path) -> SceneBank:
    ck = ckpt.load_checkpoint(path)
    m = ck.meta
    if m.get("kind") != "scene_bank":
        raise ckpt.CheckpointError(f"{path} is not a scene-bank checkpoint")
    fc = FieldConfig(features=m["features"], resolution=m["resolution"],
                     decoder_width=m["decoder_width"])
    bank = SceneBank.create(m["scene_ids"], m["channels"], fc, Rng(0))
    for tp, b in zip(bank.triplanes, m["bounds"]):
        tp.bounds = b
    named = {}
    for i, tp in enumerate(bank.triplanes):
        named.update(tp.named_parameters(f"scene{i}.triplane"))
    named.update(bank.decoder.named_parameters())
    named["background"] = bank.background.vector
    ckpt.assign(named, ck)
    return bank


# ---------------------------------------------------------------------------
# end-to-end orchestration


@dataclass
class Datasets:
    scenes: list  # PosedViewSets for IG-AE training / evaluation
    ae_scenes: list  # disjoint scenes for the baseline AE
    real: RealImageSet
    real_heldout: RealImageSet


def build_datasets(cfg: RunConfig, real_heldout: int = 64) -> Datasets:
    from .scenes import build_view_set, make_scene, real_surrogate_stream

    d = cfg.data
    ext = (d.extent, d.extent)
    scenes = [build_view_set(make_scene(d.scene_seed + i, d.difficulty), d.views, ext,
                             d.scene_seed + i) for i in range(d.n_scenes)]
    ae_scenes = [build_view_set(make_scene(d.ae_scene_seed + i, d.difficulty), d.views, ext,
                                d.ae_scene_seed + i) for i in range(d.ae_scenes)]
    pool = real_surrogate_stream(d.real_count + real_heldout, d.extent, cfg.train.seed,
                                 d.real_dir)
    real = RealImageSet(pool.images[: d.real_count], pool.source)
    held = RealImageSet(pool.images[d.real_count :], pool.source)
    return Datasets(scenes, ae_scenes, real, held)


def pretrain_baseline(cfg: RunConfig, data: Datasets, rng: Rng,
                      report: RunReport | None = None) -> tuple[Autoencoder, RunReport]:
    """The standard (not 3-D aware) AE: mse on real images and disjoint scene views."""
    ae = Autoencoder.create(cfg.ae, rng.spawn("ae-init"))
    parts = [v.images for v in data.ae_scenes] + [data.real.images]
    images = np.concatenate(parts) if parts else data.real.images
    tc = cfg.train
    report = train_autoencoder(ae, images, tc.ae_steps, tc.ae_batch, tc.rates.ae_pretrain,
                               rng.spawn("ae-train"), report, log_every=tc.log_every)
    return ae, report


def run_igae(cfg: RunConfig, base: Autoencoder, data: Datasets, rng: Rng,
             report: RunReport | None = None):
    """Fine-tune a copy of ``base`` into an IG-AE (or an ablation of it).

    Latent scenes are pretrained on the frozen ``base`` encodings first; the
    no_3d variant has no use for them and skips that phase. Returns
    (ae, bank, report, sampler_rng).
    """
    report = report or RunReport()
    ae = base.copy()
    bank = None
    if not cfg.train.no_3d:
        caches = [build_latent_cache(ae, v) for v in data.scenes]
        bank, report = pretrain_latent_scenes(ae, data.scenes, caches, cfg, rng, report)
    return train_igae(ae, data.scenes, data.real, cfg, rng, bank, report)
