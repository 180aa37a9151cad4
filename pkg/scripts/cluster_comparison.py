"""k-medoids with learned vs Euclidean distances, best-match Jaccard over seeds.

    python3 scripts/cluster_comparison.py --n 600 --seeds 0 1 2 3 4 --out results/kmedoids.csv
"""

import argparse
import csv
import os
import time

import numpy as np

from laminar.clustering import jaccard_best_match, k_medoids
from laminar.datasets import DatasetSpec, generate
from laminar.flow import TrainConfig, train
from laminar.graph import ConnectivityError
from laminar.pipeline import euclidean_distances, laminar_distances


def mean_jaccard(truth, D, k, seed):
    return float(np.mean(list(jaccard_best_match(truth, k_medoids(D, k, seed=seed).assignment).values())))


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--kinds", nargs="+", default=["two_moons", "anisotropic_blobs", "filament_clusters",
                                                  "concentric_rings"])
    p.add_argument("--n", type=int, default=600)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    p.add_argument("--k", type=int, default=20, help="graph neighbours")
    p.add_argument("--epochs", type=int, default=TrainConfig.epochs)
    p.add_argument("--out", default="results/kmedoids.csv")
    args = p.parse_args()
    os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)

    rows = []
    for kind in args.kinds:
        for seed in args.seeds:
            started = time.perf_counter()
            cloud = generate(DatasetSpec(kind, args.n, seed=seed))
            n_clusters = len(np.unique(cloud.labels))
            model = train(cloud.points, TrainConfig(seed=seed, epochs=args.epochs))
            try:
                _, _, _, D = laminar_distances(cloud.points, model, args.k, require_connected=True)
                learned = mean_jaccard(cloud.labels, D, n_clusters, seed)
            except ConnectivityError as exc:
                print(f"{kind} seed {seed}: {exc}")
                learned = float("nan")
            euclid = mean_jaccard(cloud.labels, euclidean_distances(cloud.points), n_clusters, seed)
            rows.append({"kind": kind, "seed": seed, "laminar": learned, "euclidean": euclid})
            print(f"{kind:18s} seed {seed}  laminar {learned:.3f}  euclidean {euclid:.3f}  "
                  f"({time.perf_counter() - started:.0f} s)", flush=True)

    with open(args.out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["kind", "seed", "laminar", "euclidean"])
        writer.writeheader()
        writer.writerows(rows)
    for kind in args.kinds:
        sub = [r for r in rows if r["kind"] == kind]
        print(f"{kind:18s} mean laminar {np.nanmean([r['laminar'] for r in sub]):.3f}  "
              f"euclidean {np.mean([r['euclidean'] for r in sub]):.3f}")


if __name__ == "__main__":
    main()
