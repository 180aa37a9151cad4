"""End-to-end orchestration: data -> flow -> metric field -> graph -> distances -> clusters."""

from dataclasses import asdict, dataclass, field
import json
import logging
import os

import numpy as np

from . import clustering, datasets, flow, graph, metric
from .viz import atomic_path

log = logging.getLogger(__name__)


@dataclass
class PipelineConfig:
    dataset: dict | None = field(default_factory=lambda: {"kind": "two_moons", "n_points": 1000})
    input_csv: str | None = None
    flow: dict = field(default_factory=dict)
    k: int = 20
    n_clusters: int = 2
    seed: int = 0
    output_dir: str = "laminar-run"

    def __post_init__(self):
        if (self.dataset is None) == (self.input_csv is None):
            raise ValueError("give exactly one of dataset or input_csv")
        unknown = set(self.flow) - set(flow.TrainConfig.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown flow settings: {sorted(unknown)}")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls(**json.load(fh))

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def stage_seeds(seed):
    """Independent integer seeds for the data, flow and clustering stages."""
    state = np.random.SeedSequence(seed).generate_state(3)
    return dict(zip(("data", "flow", "cluster"), (int(s) for s in state)))


def fit_metric(points, model):
    """Pseudo-cdf coordinates and metric tensor field for ``points``."""
    return metric.metric_field(points, model)


def laminar_distances(points, model, k=20, sources=None, require_connected=False):
    """Return ``(pseudo, field, graph, distances)`` for ``points`` under ``model``."""
    pseudo, tensors = fit_metric(points, model)
    g = graph.build_graph(points, pseudo, tensors, k)
    labels, sizes = g.components()
    if len(sizes) > 1:
        log.warning("distance graph has %d components (sizes %s)", len(sizes), sorted(sizes.tolist(), reverse=True))
    D = graph.distance_matrix(g, sources, require_connected=require_connected)
    return pseudo, tensors, g, D


def euclidean_distances(points, sources=None):
    points = np.asarray(points, dtype=float)
    src = points if sources is None else points[np.asarray(sources)]
    diff = src[:, None, :] - points[None, :, :]
    return np.sqrt((diff * diff).sum(axis=-1))


def save_loss_log(history, path):
    with atomic_path(path) as tmp:
        with open(tmp, "w") as fh:
            fh.write("epoch,loss\n")
            for e, loss in enumerate(history):
                fh.write(f"{e},{loss!r}\n")


def save_pseudo(pseudo, path):
    d = pseudo.shape[1]
    with atomic_path(path) as tmp:
        np.savetxt(tmp, pseudo, delimiter=",", header=",".join(f"b{i + 1}" for i in range(d)),
                   comments="", fmt="%.17g")


def run(config):
    """Execute the full pipeline, writing every artifact under ``config.output_dir``."""
    out = config.output_dir
    os.makedirs(out, exist_ok=True)
    seeds = stage_seeds(config.seed)
    paths = {name: os.path.join(out, name) for name in (
        "config.json", "data.csv", "model.npz", "loss.csv", "pseudo_cdf.csv",
        "metric_field.csv", "distances.bin", "distances.csv", "labels.csv", "jaccard.json")}

    if config.input_csv is not None:
        cloud = datasets.load_csv(config.input_csv)
        spec = None
    else:
        spec = datasets.DatasetSpec.from_dict({**config.dataset, "seed": seeds["data"]})
        cloud = datasets.generate(spec)
    with atomic_path(paths["data.csv"]) as tmp:
        datasets.save_csv(cloud, tmp)
    if spec is not None:
        with atomic_path(paths["data.csv"] + ".json") as tmp, open(tmp, "w") as fh:
            fh.write(spec.to_json() + "\n")

    train_cfg = flow.TrainConfig(**{**config.flow, "seed": seeds["flow"]})
    model = flow.train(cloud.points, train_cfg)
    with atomic_path(paths["model.npz"]) as tmp:
        flow.save_checkpoint(model, tmp)
    save_loss_log(model.loss_history, paths["loss.csv"])

    pseudo, tensors, g, D = laminar_distances(cloud.points, model, config.k)
    save_pseudo(pseudo, paths["pseudo_cdf.csv"])
    with atomic_path(paths["metric_field.csv"]) as tmp:
        tensors.save(tmp)
    with atomic_path(paths["distances.bin"]) as tmp:
        graph.save_matrix(D, tmp)
    with atomic_path(paths["distances.csv"]) as tmp:
        graph.export_csv(D, tmp)

    result = clustering.k_medoids(D, config.n_clusters, seed=seeds["cluster"])
    with atomic_path(paths["labels.csv"]) as tmp:
        clustering.save_labels(result.assignment, tmp, cloud.labels)
    if cloud.labels is not None:
        scores = clustering.jaccard_best_match(cloud.labels, result.assignment)
        with atomic_path(paths["jaccard.json"]) as tmp, open(tmp, "w") as fh:
            json.dump({str(k): v for k, v in scores.items()}, fh, indent=2, sort_keys=True)
    else:
        del paths["jaccard.json"]
    with atomic_path(paths["config.json"]) as tmp, open(tmp, "w") as fh:
        fh.write(config.to_json() + "\n")
    return paths
