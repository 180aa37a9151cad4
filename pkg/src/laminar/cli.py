"""``laminar`` command line: generate, train, distances, cluster, viz, compare, run.

Exit codes: 0 success, 1 runtime or data error, 2 usage error.
"""

import argparse
import json
import logging
import os
import sys
import warnings

import numpy as np

from . import clustering, datasets, flow, graph, metric, pipeline, viz
from .viz import atomic_path

log = logging.getLogger("laminar")

NAMED_TRANSFORMS = {
    "identity": {"kind": "identity"},
    "shear": {"kind": "linear", "matrix": [[1.0, 1.0], [0.0, 1.0]]},
    "stretch": {"kind": "linear", "matrix": [[3.0, 0.0], [0.0, 1.0]]},
    "swirl": {"kind": "swirl"},
    "bend": {"kind": "bend"},
}


class CommandError(Exception):
    """Runtime failure reported with exit code 1."""


def _transform(value):
    if value in NAMED_TRANSFORMS:
        return NAMED_TRANSFORMS[value]
    try:
        spec = json.loads(value)
    except json.JSONDecodeError:
        raise argparse.ArgumentTypeError(
            f"transform must be one of {sorted(NAMED_TRANSFORMS)} or a JSON object") from None
    metric.GroundTruthTransform.from_dict(spec)
    return spec


def _load_cloud(path):
    if not os.path.exists(path):
        raise CommandError(f"no such file: {path}")
    return datasets.load_csv(path)


def _write_csv(path, header, table, fmt="%.17g"):
    with atomic_path(path) as tmp:
        np.savetxt(tmp, table, delimiter=",", header=header, comments="", fmt=fmt)


def cmd_generate(args):
    spec = datasets.DatasetSpec(kind=args.kind, n_points=args.n, seed=args.seed, noise=args.noise,
                                transform=args.transform)
    cloud = datasets.generate(spec)
    with atomic_path(args.out) as tmp:
        datasets.save_csv(cloud, tmp)
    with atomic_path(args.out + ".json") as tmp, open(tmp, "w") as fh:
        fh.write(spec.to_json() + "\n")
    print(f"wrote {len(cloud)} points to {args.out}")


def _train_config(args):
    cfg = {}
    if args.config:
        with open(args.config) as fh:
            cfg.update(json.load(fh).get("flow", {}))
    for name in ("epochs", "lr", "n_units", "hidden_width", "train_steps", "n_steps", "seed"):
        value = getattr(args, name)
        if value is not None:
            cfg[name] = value
    return flow.TrainConfig(**cfg)


def cmd_train(args):
    cloud = _load_cloud(args.data)
    config = _train_config(args)
    try:
        model = flow.train(cloud.points, config,
                           callback=lambda e, loss: log.info("epoch %d loss %.6f", e, loss))
    except flow.TrainingDiverged as exc:
        raise CommandError(f"{exc}; last finite loss {exc.model.loss_history[-1:]}, "
                           "try a smaller learning rate or more integration steps") from exc
    with atomic_path(args.out) as tmp:
        flow.save_checkpoint(model, tmp)
    pipeline.save_loss_log(model.loss_history, args.out + ".loss.csv")
    print(f"final loss {model.loss_history[-1]:.6f}; checkpoint {args.out}")


def cmd_distances(args):
    cloud = _load_cloud(args.data)
    if not os.path.exists(args.checkpoint):
        raise CommandError(f"no such file: {args.checkpoint}")
    model = flow.load_checkpoint(args.checkpoint)
    if model.dim != cloud.dim:
        raise CommandError(f"dimension mismatch: checkpoint has d={model.dim}, data has d={cloud.dim}")
    sources = args.source if args.source else None
    if sources is not None and any(not 0 <= s < len(cloud) for s in sources):
        raise CommandError(f"source index out of range for {len(cloud)} points")
    pseudo, tensors, g, D = pipeline.laminar_distances(cloud.points, model, args.k, sources)
    _, sizes = g.components()
    if len(sizes) > 1:
        print(f"warning: graph is disconnected, component sizes {sorted(sizes.tolist(), reverse=True)}",
              file=sys.stderr)
    os.makedirs(args.out_dir, exist_ok=True)
    out = lambda name: os.path.join(args.out_dir, name)  # noqa: E731
    pipeline.save_pseudo(pseudo, out("pseudo_cdf.csv"))
    with atomic_path(out("metric_field.csv")) as tmp:
        tensors.save(tmp)
    _write_csv(out("graph_edges.csv"), "i,j,weight", np.column_stack([g.rows, g.cols, g.weights]),
               fmt=["%d", "%d", "%.17g"])
    with atomic_path(out("distances.bin")) as tmp:
        graph.save_matrix(D, tmp)
    with atomic_path(out("distances.csv")) as tmp:
        graph.export_csv(D, tmp, sources)
    print(f"{g.n_edges} edges, {int((~np.isfinite(D)).sum())} unreachable pairs; outputs in {args.out_dir}")


def _print_jaccard(scores, label):
    print(f"{label}: " + "  ".join(f"cluster {g}: J={s:.3f}" for g, s in scores.items())
          + f"  (mean {np.mean(list(scores.values())):.3f})")


def cmd_cluster(args):
    D = graph.load_matrix(args.distances)
    if D.shape[0] != D.shape[1]:
        raise CommandError("clustering needs the full square distance matrix (run distances without --source)")
    truth = None
    if args.labels:
        truth = _load_cloud(args.labels).labels
        if truth is None:
            raise CommandError(f"{args.labels} has no label column")
        if len(truth) != len(D):
            raise CommandError(f"length mismatch: {len(truth)} labels for {len(D)} points")
    result = clustering.k_medoids(D, args.k, seed=args.seed)
    with atomic_path(args.out) as tmp:
        clustering.save_labels(result.assignment, tmp, truth)
    print(f"medoids {result.medoids.tolist()}, total cost {result.total_cost:.6g}")
    if truth is not None:
        _print_jaccard(clustering.jaccard_best_match(truth, result.assignment), "Jaccard")


def cmd_viz(args):
    cloud = _load_cloud(args.data)
    os.makedirs(args.out_dir, exist_ok=True)
    written = []
    if "metric" in args.figure:
        if not args.field:
            raise CommandError("the metric figure needs --field")
        tf = metric.MetricTensorField.load(args.field)
        if len(tf) != len(cloud):
            raise CommandError(f"length mismatch: {len(tf)} tensors for {len(cloud)} points")
        written.append(viz.metric_field_map(cloud.points, tf.tensors, os.path.join(args.out_dir, "metric_field.svg"),
                                            glyph_every=args.glyph_every))
        written.append(viz.colour_wheel(os.path.join(args.out_dir, "colour_wheel.svg")))
    if "distance" in args.figure or "ratio" in args.figure:
        if not args.distances:
            raise CommandError("distance and ratio figures need --distances")
        D = graph.load_matrix(args.distances)
        row = D[args.query] if D.shape[0] == len(cloud) else D[0]
        if len(row) != len(cloud):
            raise CommandError(f"length mismatch: {len(row)} distances for {len(cloud)} points")
        if "distance" in args.figure:
            written.append(viz.distance_map(cloud.points, row, os.path.join(args.out_dir, "distance_map.svg"),
                                            query=args.query, k_contour=args.k_contour))
            euc = pipeline.euclidean_distances(cloud.points, [args.query])[0]
            written.append(viz.distance_map(cloud.points, euc, os.path.join(args.out_dir, "distance_map_euclid.svg"),
                                            query=args.query, k_contour=args.k_contour))
        if "ratio" in args.figure:
            euc = pipeline.euclidean_distances(cloud.points, [args.query])[0]
            written.append(viz.ratio_map(cloud.points, row, euc, os.path.join(args.out_dir, "ratio_map.svg"),
                                         query=args.query))
    for path in written:
        print(path)


def cmd_compare(args):
    cloud = _load_cloud(args.data)
    model = flow.load_checkpoint(args.checkpoint)
    if model.dim != cloud.dim:
        raise CommandError(f"dimension mismatch: checkpoint has d={model.dim}, data has d={cloud.dim}")
    transform = metric.GroundTruthTransform.from_dict(args.transform)
    truth = metric.ground_truth_metric(cloud.points, transform)
    _, tf = metric.metric_field(cloud.points, model)
    scale, scores = metric.align_scale(tf.tensors, truth)
    _write_csv(args.out, "index,wasserstein", np.column_stack([np.arange(len(scores)), scores]),
               fmt=["%d", "%.17g"])
    print(f"scale {scale:.6g}  median {np.median(scores):.6g}  p90 {np.percentile(scores, 90):.6g}")
    if args.figure:
        viz.metric_comparison(cloud.points, scale * tf.tensors, truth, args.figure, scores)


def cmd_run(args):
    config = pipeline.PipelineConfig.load(args.config)
    if args.output_dir:
        config.output_dir = args.output_dir
    for name, path in pipeline.run(config).items():
        print(f"{name}: {path}")


def build_parser():
    p = argparse.ArgumentParser(prog="laminar", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="sample a toy dataset to CSV")
    g.add_argument("--kind", required=True, choices=datasets.KINDS)
    g.add_argument("--n", type=int, default=2000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--noise", type=float, default=0.1)
    g.add_argument("--transform", type=_transform, default={"kind": "identity"},
                   help=f"for transformed_disk: {', '.join(NAMED_TRANSFORMS)} or a JSON object")
    g.add_argument("--out", default="data.csv")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="fit the flow to a CSV point cloud")
    t.add_argument("--data", required=True)
    t.add_argument("--out", default="model.npz")
    t.add_argument("--config", help="JSON file with a 'flow' section")
    t.add_argument("--epochs", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--n-units", dest="n_units", type=int)
    t.add_argument("--hidden-width", dest="hidden_width", type=int)
    t.add_argument("--train-steps", dest="train_steps", type=int)
    t.add_argument("--n-steps", dest="n_steps", type=int)
    t.add_argument("--seed", type=int)
    t.set_defaults(func=cmd_train)

    d = sub.add_parser("distances", help="metric field, kNN graph and geodesic distances")
    d.add_argument("--checkpoint", required=True)
    d.add_argument("--data", required=True)
    d.add_argument("--k", type=int, default=20)
    d.add_argument("--source", type=int, action="append", help="source index (repeatable; default all)")
    d.add_argument("--out-dir", default="distances")
    d.set_defaults(func=cmd_distances)

    c = sub.add_parser("cluster", help="k-medoids on a stored distance matrix")
    c.add_argument("--distances", required=True)
    c.add_argument("--k", type=int, default=2)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--labels", help="CSV with a label column for Jaccard scores")
    c.add_argument("--out", default="labels.csv")
    c.set_defaults(func=cmd_cluster)

    v = sub.add_parser("viz", help="render figures to SVG")
    v.add_argument("--data", required=True)
    v.add_argument("--figure", action="append", choices=("metric", "distance", "ratio"), required=True)
    v.add_argument("--field")
    v.add_argument("--distances")
    v.add_argument("--query", type=int, default=0)
    v.add_argument("--k-contour", dest="k_contour", type=int, default=25)
    v.add_argument("--glyph-every", dest="glyph_every", type=int, default=0)
    v.add_argument("--out-dir", default="figures")
    v.set_defaults(func=cmd_viz)

    m = sub.add_parser("compare", help="Wasserstein scores against a ground-truth transform")
    m.add_argument("--checkpoint", required=True)
    m.add_argument("--data", required=True)
    m.add_argument("--transform", type=_transform, required=True)
    m.add_argument("--out", default="wasserstein.csv")
    m.add_argument("--figure", help="optional SVG path for the three-panel comparison")
    m.set_defaults(func=cmd_compare)

    r = sub.add_parser("run", help="full pipeline from a JSON config")
    r.add_argument("--config", required=True)
    r.add_argument("--output-dir", dest="output_dir")
    r.set_defaults(func=cmd_run)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    warnings.simplefilter("default")
    try:
        args.func(args)
    except (CommandError, ValueError, OSError, ArithmeticError, RuntimeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
