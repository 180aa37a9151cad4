"""Learn the metric of a transformed disk and score it against the analytic one.

    python3 scripts/metric_recovery.py --transform shear --out results/shear
"""

import argparse
import json
import os

import numpy as np

from laminar.cli import NAMED_TRANSFORMS
from laminar.datasets import DatasetSpec, generate
from laminar.flow import TrainConfig, save_checkpoint, train
from laminar.metric import GroundTruthTransform, align_scale, ground_truth_metric, metric_field
from laminar.viz import colour_wheel, metric_comparison


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--transform", default="shear", choices=sorted(NAMED_TRANSFORMS))
    p.add_argument("--n", type=int, default=3000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=TrainConfig.epochs)
    p.add_argument("--out", default="results/shear")
    args = p.parse_args()
    os.makedirs(args.out, exist_ok=True)

    spec = NAMED_TRANSFORMS[args.transform]
    cloud = generate(DatasetSpec("transformed_disk", args.n, seed=args.seed, transform=spec))
    model = train(cloud.points, TrainConfig(seed=args.seed, epochs=args.epochs))
    save_checkpoint(model, os.path.join(args.out, "model.npz"))

    _, field = metric_field(cloud.points, model)
    truth = ground_truth_metric(cloud.points, GroundTruthTransform.from_dict(spec))
    scale, learned = align_scale(field.tensors, truth)
    _, identity = align_scale(np.broadcast_to(np.eye(2), truth.shape), truth)

    summary = {
        "transform": args.transform,
        "scale": scale,
        "median_w2_learned": float(np.median(learned)),
        "median_w2_identity": float(np.median(identity)),
        "improvement": float(np.median(identity) / np.median(learned)),
        "final_loss": model.loss_history[-1],
    }
    with open(os.path.join(args.out, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
    metric_comparison(cloud.points, scale * field.tensors, truth, os.path.join(args.out, "comparison.svg"), learned)
    colour_wheel(os.path.join(args.out, "colour_wheel.svg"))
    print(json.dumps(summary, indent=2))


if __name__ == "__main__":
    main()
