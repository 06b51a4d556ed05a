"""Command-line entry point: ``python -m igae <subcommand> ...``.

Exit codes: 0 success, 1 runtime failure, 2 bad flags or invalid config.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from . import pipelines as P
from .config import ConfigError, RunConfig, load_config
from .evaluation import (IdentityEncoder, bench_pair, consistency_probe, latent_nvs_eval,
                         write_rows_csv)
from .render import render_image
from .scenes import (read_dataset, read_view_set, save_png, write_real_images,
                     write_view_set)
from .tensor import Rng

log = logging.getLogger("igae")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    # the subcommand copy must not overwrite values given before the subcommand
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    g = _Parser(add_help=False)
    g.add_argument("--config", default=d(None), help="RunConfig JSON file")
    g.add_argument("--seed", type=int, default=d(None), help="overrides train.seed")
    g.add_argument("--deterministic", action="store_true", default=d(False),
                   help="synchronous, wall-clock free outputs")
    g.add_argument("--out-dir", default=d("runs/default"))
    g.add_argument("--data-dir", default=d(None), help="dataset root (default: <out-dir>/data)")
    g.add_argument("-v", "--verbose", action="store_true", default=d(False))
    return g


def build_parser() -> argparse.ArgumentParser:
    g = _global_flags(suppress=True)
    p = _Parser(prog="igae", description="3-D aware latent autoencoders and latent NeRFs",
                parents=[_global_flags(suppress=False)])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def cmd(name, help):
        return sub.add_parser(name, help=help, parents=[g])

    cmd("gen-data", "render the procedural scenes and real-image surrogates")
    cmd("train-ae", "pretrain the baseline autoencoder")
    c = cmd("pretrain-scenes", "fit latent Tri-Planes to a frozen encoder")
    c.add_argument("--ae", required=True)
    c = cmd("train-igae", "joint IG-AE training")
    c.add_argument("--ae", required=True, help="initial autoencoder checkpoint")
    c.add_argument("--scenes", help="pretrained scene bank (otherwise pretrained here)")
    c.add_argument("--no-3d", action="store_true")
    c.add_argument("--no-pr", action="store_true")
    c = cmd("train-nerf", "two-stage latent NeRF on one scene")
    c.add_argument("--backend", choices=("triplane", "mlp"), default="triplane")
    c.add_argument("--ae", required=True)
    c.add_argument("--stage", choices=("ls", "align", "both"), default="both")
    c.add_argument("--scene", type=int, default=0, help="scene index in the dataset")
    c.add_argument("--resume", help="latent NeRF checkpoint to continue from")
    c = cmd("render", "render one pose of a latent NeRF checkpoint")
    c.add_argument("--ckpt", required=True)
    c.add_argument("--pose-index", type=int, default=0)
    mode = c.add_mutually_exclusive_group()
    mode.add_argument("--latent", action="store_true")
    mode.add_argument("--rgb", action="store_true")
    c.add_argument("--out", required=True)
    c = cmd("eval", "evaluate a checkpoint on held-out views")
    c.add_argument("--ckpt", required=True)
    c = cmd("bench", "RGB vs latent render timing")
    c.add_argument("--ae", required=True)
    c.add_argument("--backend", choices=("triplane", "mlp"), default="triplane")
    c.add_argument("--repeats", type=int, default=1000)
    c.add_argument("--samples", type=int, default=64)
    c = cmd("probe-consistency", "3-D consistency of an encoder's latent space")
    src = c.add_mutually_exclusive_group(required=True)
    src.add_argument("--ae")
    src.add_argument("--identity", action="store_true", help="area-pooled RGB as latents")
    c.add_argument("--iters", type=int)
    return p


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.train.seed = args.seed
    if getattr(args, "no_3d", False):
        cfg.train.no_3d = True
    if getattr(args, "no_pr", False):
        cfg.train.no_pr = True
    if cfg.train.no_3d and cfg.train.no_pr:
        raise ConfigError("no_3d and no_pr together: training degenerates to no training")
    return cfg


def _data_dir(args) -> Path:
    return Path(args.data_dir) if args.data_dir else Path(args.out_dir) / "data"


def _load_scenes(args) -> list:
    root = _data_dir(args) / "scenes"
    if not root.exists():
        raise FileNotFoundError(f"no dataset under {root}; run gen-data first")
    return read_dataset(root)


def _write_config(out: Path, cfg: RunConfig):
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2))


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_data(args, cfg: RunConfig) -> int:
    data = P.build_datasets(cfg)
    root = _data_dir(args)
    for v in data.scenes:
        write_view_set(root / "scenes", v)
    for v in data.ae_scenes:
        write_view_set(root / "ae_scenes", v)
    write_real_images(root / "real", data.real)
    write_real_images(root / "real_heldout", data.real_heldout)
    print(f"wrote {len(data.scenes)} scenes, {len(data.ae_scenes)} AE scenes, "
          f"{len(data.real)} + {len(data.real_heldout)} real images to {root}")
    return 0


def _datasets_from_disk(args, cfg: RunConfig) -> P.Datasets:
    from .scenes import RealImageSet, load_png

    root = _data_dir(args)

    def reals(d):
        paths = sorted((root / d).glob("*.png"))
        return RealImageSet(np.stack([load_png(p) for p in paths]) if paths
                            else np.zeros((0, cfg.data.extent, cfg.data.extent, 3), np.float32))

    ae_root = root / "ae_scenes"
    return P.Datasets(_load_scenes(args), read_dataset(ae_root) if ae_root.exists() else [],
                      reals("real"), reals("real_heldout"))


def cmd_train_ae(args, cfg: RunConfig) -> int:
    out = Path(args.out_dir)
    data = _datasets_from_disk(args, cfg)
    report = P.RunReport()
    ae, report = P.pretrain_baseline(cfg, data, Rng(cfg.train.seed), report)
    path = out / "ae.ckpt"
    ckpt.save_autoencoder(path, ae, {"kind": "autoencoder", "variant": "baseline"})
    report.checkpoint = str(path)
    report.summary["real_heldout_psnr"] = P.reconstruction_psnr(ae, data.real_heldout.images)
    report.write(out, args.deterministic)
    print(f"baseline AE -> {path} (held-out real PSNR "
          f"{report.summary['real_heldout_psnr']:.2f} dB)")
    return 0


def cmd_pretrain_scenes(args, cfg: RunConfig) -> int:
    from .scenes import build_latent_cache

    out = Path(args.out_dir)
    ae, _ = ckpt.load_autoencoder(args.ae)
    scenes = _load_scenes(args)
    caches = [build_latent_cache(ae, v) for v in scenes]
    bank, report = P.pretrain_latent_scenes(ae, scenes, caches, cfg, Rng(cfg.train.seed))
    path = out / "scenes.ckpt"
    P.save_scene_bank(path, bank, {"ae_fingerprint": ae.fingerprint()})
    report.checkpoint = str(path)
    report.write(out, args.deterministic)
    print(f"scene bank ({len(scenes)} scenes) -> {path}")
    return 0


def cmd_train_igae(args, cfg: RunConfig) -> int:
    from .scenes import build_latent_cache

    out = Path(args.out_dir)
    base, _ = ckpt.load_autoencoder(args.ae)
    data = _datasets_from_disk(args, cfg)
    rng = Rng(cfg.train.seed)
    report = P.RunReport()
    ae = base.copy()
    bank = None
    if not cfg.train.no_3d:
        if args.scenes:
            bank = P.load_scene_bank(args.scenes)
        else:
            caches = [build_latent_cache(ae, v) for v in data.scenes]
            bank, report = P.pretrain_latent_scenes(ae, data.scenes, caches, cfg, rng, report)
    ae, bank, report, sampler = P.train_igae(ae, data.scenes, data.real, cfg, rng, bank, report)
    variant = "no_3d" if cfg.train.no_3d else "no_pr" if cfg.train.no_pr else "full"
    path = out / "igae.ckpt"
    ckpt.save_autoencoder(path, ae, {"kind": "autoencoder", "variant": variant,
                                     "config": cfg.to_dict()})
    if bank is not None:
        P.save_scene_bank(out / "scenes.ckpt", bank)
    report.checkpoint = str(path)
    report.summary.update({"variant": variant, "sampler_calls": sampler.calls,
                           "real_heldout_psnr": P.reconstruction_psnr(ae, data.real_heldout.images)})
    report.write(out, args.deterministic)
    print(f"IG-AE ({variant}) -> {path}")
    return 0


def _nerf_path(out: Path, backend: str, scene_id: str) -> Path:
    return out / f"nerf_{backend}_{scene_id}.ckpt"


def cmd_train_nerf(args, cfg: RunConfig) -> int:
    out = Path(args.out_dir)
    ae, _ = ckpt.load_autoencoder(args.ae)
    scenes = _load_scenes(args)
    if not 0 <= args.scene < len(scenes):
        raise ConfigError(f"--scene {args.scene} out of range (dataset has {len(scenes)})")
    views = scenes[args.scene]
    path = _nerf_path(out, args.backend, views.scene_id)
    state = None
    resume = args.resume or (path if args.stage == "align" else None)
    if resume:
        if not Path(resume).exists():
            raise FileNotFoundError(f"--stage align needs a latent supervision checkpoint at {resume}")
        state, _, _, meta = P.load_latent_nerf(resume)
        if meta["backend"] != args.backend:
            raise ConfigError(f"checkpoint backend {meta['backend']} != --backend {args.backend}")
    state, report = P.train_latent_nerf(ae, views, args.backend, cfg, Rng(cfg.train.seed),
                                        args.stage, state)
    P.save_latent_nerf(path, state, ae, cfg, views.scene_id, views.scene.radius)
    report.checkpoint = str(path)
    report.summary["final"] = P.evaluate_latent_nerf(state, ae, views, cfg)
    report.write(out, args.deterministic)
    f = report.summary["final"]
    print(f"latent NeRF ({args.backend}, {args.stage}) -> {path}: held-out RGB PSNR "
          f"{f['rgb_psnr']:.3f} dB, latent PSNR {f['latent_psnr']:.3f} dB")
    return 0


def _views_for(args, meta) -> object:
    d = _data_dir(args) / "scenes" / meta["scene_id"]
    if not (d / "meta.json").exists():
        raise FileNotFoundError(f"scene {meta['scene_id']} not found under {d.parent}")
    return read_view_set(d)


def cmd_render(args, cfg: RunConfig) -> int:
    state, ae, ncfg, meta = P.load_latent_nerf(args.ckpt)
    views = _views_for(args, meta)
    if not 0 <= args.pose_index < len(views):
        raise ConfigError(f"--pose-index {args.pose_index} out of range ({len(views)} poses)")
    l = ncfg.ae.l
    H, W = views.extent
    img = render_image(state.field, views.poses[args.pose_index], (H // l, W // l),
                       ncfg.train.samples_eval, state.background)
    z = img.values.data
    if args.latent:
        # per-channel normalized grid of the latent channels
        lo, hi = z.min(axis=(0, 1)), z.max(axis=(0, 1))
        zn = (z - lo) / np.where(hi > lo, hi - lo, 1.0)
        np.save(Path(args.out).with_suffix(".npy"), z)
        tiles = [np.repeat(zn[:, :, c : c + 1], 3, axis=2) for c in range(z.shape[2])]
        save_png(args.out, np.concatenate(tiles, axis=1))
        print(f"latent {z.shape[0]}x{z.shape[1]}x{z.shape[2]} -> {args.out}")
    else:
        x = P.decode_latents(state.decoder, z[None])[0]
        save_png(args.out, x)
        print(f"rgb {x.shape[0]}x{x.shape[1]} -> {args.out}")
    return 0


def cmd_eval(args, cfg: RunConfig) -> int:
    out = Path(args.out_dir)
    ck = ckpt.load_checkpoint(args.ckpt)
    kind = ck.meta.get("kind")
    report = P.RunReport()
    if kind == "latent_nerf":
        state, ae, ncfg, meta = P.load_latent_nerf(args.ckpt)
        views = _views_for(args, meta)
        m = P.evaluate_latent_nerf(state, ae, views, ncfg)
        rows = latent_nvs_eval(ae, state.field, state.background, views, ncfg.train.samples_eval)
        write_rows_csv(out / "eval_rows.csv", rows)
        report.summary.update(m)
    elif kind == "autoencoder":
        ae, _ = ckpt.load_autoencoder(args.ckpt)
        held = sorted((_data_dir(args) / "real_heldout").glob("*.png"))
        from .scenes import load_png
        imgs = np.stack([load_png(p) for p in held])
        report.summary["real_heldout_psnr"] = P.reconstruction_psnr(ae, imgs)
        scenes = _load_scenes(args)
        report.summary["scene_psnr"] = float(np.mean([
            P.reconstruction_psnr(ae, v.images[v.heldout_indices]) for v in scenes]))
    else:
        raise ckpt.CheckpointError(f"cannot evaluate a checkpoint of kind {kind!r}")
    report.write(out, args.deterministic)
    print(json.dumps(report.summary, indent=2))
    return 0


def cmd_bench(args, cfg: RunConfig) -> int:
    ae, _ = ckpt.load_autoencoder(args.ae)
    scenes = _load_scenes(args)
    views = scenes[0]
    rows = bench_pair(args.backend, ae, views.poses, views.extent, args.samples, args.repeats,
                      cfg, cfg.train.seed)
    if args.deterministic:
        for r in rows:
            r.render_ms = r.decode_ms = 0.0
    write_rows_csv(Path(args.out_dir) / "bench.csv", rows)
    for r in rows:
        print(f"{r.backend:8s} {r.space:6s} {r.pixels:6d} px {r.rays:6d} rays "
              f"render {r.render_ms:8.2f} ms decode {r.decode_ms:6.2f} ms")
    return 0


def cmd_probe(args, cfg: RunConfig) -> int:
    scenes = _load_scenes(args)
    enc = IdentityEncoder(cfg.ae.l) if args.identity else ckpt.load_autoencoder(args.ae)[0]
    score = consistency_probe(enc, scenes, cfg, cfg.train.seed, args.iters)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "probe.json").write_text(json.dumps({"probe_psnr": score,
                                                "encoder": args.ae or "identity"}))
    print(f"consistency probe: {score:.3f} dB")
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data, "train-ae": cmd_train_ae, "pretrain-scenes": cmd_pretrain_scenes,
    "train-igae": cmd_train_igae, "train-nerf": cmd_train_nerf, "render": cmd_render,
    "eval": cmd_eval, "bench": cmd_bench, "probe-consistency": cmd_probe,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = resolve_config(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    _write_config(Path(args.out_dir), cfg)
    t0 = time.perf_counter()
    try:
        code = COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        log.debug("failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    log.info("%s finished in %.1fs", args.command, time.perf_counter() - t0)
    return code


if __name__ == "__main__":
    sys.exit(main())
