"""Distance maps and standardized log-ratio maps from a query point, per toy dataset.

    python3 scripts/distance_maps.py --kinds two_moons concentric_rings --out results/maps
"""

import argparse
import json
import os

import numpy as np

from laminar.datasets import KINDS, DatasetSpec, generate
from laminar.flow import TrainConfig, train
from laminar.pipeline import euclidean_distances, laminar_distances
from laminar.viz import distance_map, ratio_map, ratio_values


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--kinds", nargs="+", default=["two_moons", "concentric_rings", "anisotropic_blobs",
                                                  "filament_clusters"], choices=KINDS)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--epochs", type=int, default=TrainConfig.epochs)
    p.add_argument("--query", type=int, help="query index (default: a seeded random point)")
    p.add_argument("--out", default="results/maps")
    args = p.parse_args()
    os.makedirs(args.out, exist_ok=True)

    summary = {}
    for kind in args.kinds:
        cloud = generate(DatasetSpec(kind, args.n, seed=args.seed))
        q = args.query if args.query is not None else int(np.random.default_rng(args.seed).integers(len(cloud)))
        model = train(cloud.points, TrainConfig(seed=args.seed, epochs=args.epochs))
        _, _, _, D = laminar_distances(cloud.points, model, args.k, sources=[q])
        E = euclidean_distances(cloud.points, [q])
        out = lambda name: os.path.join(args.out, f"{kind}_{name}.svg")  # noqa: E731
        distance_map(cloud.points, D[0], out("laminar"), query=q, title="LAMINAR")
        distance_map(cloud.points, E[0], out("euclidean"), query=q, title="Euclidean")
        ratio_map(cloud.points, D[0], E[0], out("ratio"), query=q)
        entry = {"query": q, "unreachable": int(np.isinf(D[0]).sum())}
        if cloud.labels is not None and np.isfinite(D[0]).all():
            v = ratio_values(D[0], E[0], query=q)
            same = cloud.labels == cloud.labels[q]
            entry["mean_ratio_own_mode"] = float(np.nanmean(v[same]))
            entry["mean_ratio_other_modes"] = float(np.nanmean(v[~same]))
        summary[kind] = entry
        print(kind, entry, flush=True)
    with open(os.path.join(args.out, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2)


if __name__ == "__main__":
    main()
