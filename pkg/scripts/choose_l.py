"""Reconstruction quality against latent render cost for several downscale factors."""

import argparse
import time

from igae.autoencoder import AutoencoderSpec
from igae.experiments import baseline_config
from igae.pipelines import build_datasets, pretrain_baseline, reconstruction_psnr
from igae.tensor import Rng


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--factors", type=int, nargs="+", default=[2, 4, 8])
    ap.add_argument("--steps", type=int, default=600)
    args = ap.parse_args()
    cfg = baseline_config()
    cfg.train.ae_steps = args.steps
    data = build_datasets(cfg)
    held = data.real_heldout.images
    print("l,channels,latent_pixels,real_psnr,train_s")
    for l in args.factors:
        cfg.ae = AutoencoderSpec(l=l, channels=(32, 64, 128)[: l.bit_length() - 1])
        t0 = time.perf_counter()
        ae, _ = pretrain_baseline(cfg, data, Rng(0))
        took = time.perf_counter() - t0
        side = cfg.data.extent // l
        print(f"{l},{cfg.ae.c},{side * side},{reconstruction_psnr(ae, held):.2f},{took:.0f}")


if __name__ == "__main__":
    main()
