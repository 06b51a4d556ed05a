"""Train the baseline AE, then a tri-plane latent NeRF on the single-sphere scene."""

import argparse
import json
from dataclasses import asdict

from igae.checkpoint import load_autoencoder, save_autoencoder
from igae.experiments import BaselineSettings, SphereFixture, run_sphere_fixture, train_baseline


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--ae", help="reuse a trained baseline checkpoint")
    ap.add_argument("--save-ae", help="where to store the freshly trained baseline")
    ap.add_argument("--samples", type=int, default=SphereFixture.samples_train)
    ap.add_argument("--ls-iters", type=int, default=SphereFixture.ls_iters)
    ap.add_argument("--align-iters", type=int, default=SphereFixture.align_iters)
    args = ap.parse_args()
    if args.ae:
        ae, _ = load_autoencoder(args.ae)
    else:
        ae, _ = train_baseline(BaselineSettings())
        if args.save_ae:
            save_autoencoder(args.save_ae, ae)
    fx = SphereFixture(samples_train=args.samples, ls_iters=args.ls_iters,
                       align_iters=args.align_iters)
    res = run_sphere_fixture(ae, fx)
    for row in res.pop("report").evals():
        print(row)
    print(json.dumps({"fixture": asdict(fx), **res}, indent=2))


if __name__ == "__main__":
    main()
