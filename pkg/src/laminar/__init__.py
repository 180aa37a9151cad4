"""Locally adaptive metrics from a continuous normalizing flow onto the unit ball."""

from .clustering import jaccard_best_match, k_medoids
from .datasets import DatasetSpec, PointCloud, generate
from .flow import FlowModel, TrainConfig, integrate, load_checkpoint, log_likelihood, save_checkpoint, train
from .graph import DensityGraph, build_graph, distance_matrix, knn, shortest_paths
from .metric import (
    GroundTruthTransform,
    MetricTensorField,
    ground_truth_metric,
    mahalanobis,
    metric_field,
    metric_tensor,
    wasserstein_gaussian,
)
from .pipeline import PipelineConfig, laminar_distances
from .sphere import radial_cdf, to_ball, to_ball_jacobian

__version__ = "0.1.0"
