"""Latent vs RGB render cost for both backends at equal sample count."""

import argparse

from igae.autoencoder import Autoencoder, AutoencoderSpec
from igae.config import RunConfig
from igae.evaluation import bench_pair, write_rows_csv
from igae.scenes import build_view_set, make_scene
from igae.tensor import Rng


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--extent", type=int, default=64)
    ap.add_argument("--l", type=int, default=4)
    ap.add_argument("--samples", type=int, default=32)
    ap.add_argument("--repeats", type=int, default=20)
    ap.add_argument("--out", default="bench.csv")
    args = ap.parse_args()
    ae = Autoencoder.create(AutoencoderSpec(l=args.l), Rng(0))
    views = build_view_set(make_scene(0, 0), 4, (args.extent, args.extent), 0)
    rows = []
    for backend in ("triplane", "mlp"):
        rows += bench_pair(backend, ae, views.poses, views.extent, args.samples, args.repeats,
                           RunConfig())
    write_rows_csv(args.out, rows)
    for r in rows:
        print(f"{r.backend:8s} {r.space:6s} rays={r.rays:5d} render={r.render_ms:8.2f} ms "
              f"decode={r.decode_ms:6.2f} ms")


if __name__ == "__main__":
    main()
