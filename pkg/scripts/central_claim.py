"""Baseline AE vs IG-AE vs the no_pr / no_3d ablations, printed as a table."""

import argparse
import csv
import sys

import numpy as np

from igae.checkpoint import load_autoencoder, save_autoencoder
from igae.experiments import (BaselineSettings, ClaimSettings, baseline_config, run_claim,
                              train_baseline)
from igae.pipelines import build_datasets


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--ae", help="trained baseline checkpoint (trained here if omitted)")
    ap.add_argument("--pretrain-epochs", type=int, default=ClaimSettings.pretrain_epochs)
    ap.add_argument("--joint-epochs", type=int, default=ClaimSettings.joint_epochs)
    ap.add_argument("--probe-iters", type=int, default=ClaimSettings.probe_iters)
    ap.add_argument("--mlp-iters", type=int, default=ClaimSettings.mlp_iters)
    ap.add_argument("--save-dir", help="store each trained encoder here")
    args = ap.parse_args()
    data = build_datasets(baseline_config())
    if args.ae:
        base, _ = load_autoencoder(args.ae)
    else:
        base, _ = train_baseline(BaselineSettings(), data)
    cs = ClaimSettings(args.pretrain_epochs, args.joint_epochs, probe_iters=args.probe_iters,
                       mlp_iters=args.mlp_iters)
    res = run_claim(base, data, cs, log=lambda r: print(r, file=sys.stderr, flush=True))
    models = res.pop("models")
    if args.save_dir:
        for name, ae in models.items():
            save_autoencoder(f"{args.save_dir}/ae_{name}.ckpt", ae)
    out = csv.writer(sys.stdout)
    out.writerow(["encoder", "probe_db", "nvs_mlp_db", "real_psnr", "scene_psnr", "train_s"])
    for name, sc in res.items():
        mlp = np.mean(sc.nvs["mlp"]) if "mlp" in sc.nvs else float("nan")
        out.writerow([name, f"{sc.probe:.2f}", f"{mlp:.2f}", f"{sc.real_psnr:.2f}",
                      f"{sc.scene_psnr:.2f}", f"{sc.train_seconds:.0f}"])


if __name__ == "__main__":
    main()
