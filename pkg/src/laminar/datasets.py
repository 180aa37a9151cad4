"""Seeded toy point clouds.

All sampling goes through ``numpy.random.Generator(PCG64(seed))`` so the
same spec reproduces the same array on any platform numpy supports.
"""

from dataclasses import asdict, dataclass, field
import json

import numpy as np

from .metric import GroundTruthTransform

KINDS = (
    "uniform_disk",
    "transformed_disk",
    "two_moons",
    "concentric_rings",
    "anisotropic_blobs",
    "filament_clusters",
)


@dataclass
class PointCloud:
    points: np.ndarray
    labels: np.ndarray | None = None
    transform: GroundTruthTransform | None = None

    def __len__(self):
        return len(self.points)

    @property
    def dim(self):
        return self.points.shape[1]


@dataclass
class DatasetSpec:
    kind: str
    n_points: int = 2000
    seed: int = 0
    noise: float = 0.1
    transform: dict = field(default_factory=lambda: {"kind": "identity"})
    radii: tuple = (1.0, 2.5)
    centers: tuple = ((0.0, 0.0), (3.0, 0.5), (0.5, 3.0))
    covariances: tuple = (
        ((2.0, 1.4), (1.4, 1.1)),
        ((0.15, 0.0), (0.0, 1.5)),
        ((1.2, -0.6), (-0.6, 0.4)),
    )

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown dataset kind {self.kind!r}; choose from {KINDS}")
        if self.n_points < 1:
            raise ValueError("n_points must be at least 1")
        if self.noise < 0:
            raise ValueError("noise must be non-negative")

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, spec):
        spec = dict(spec)
        for key in ("radii", "centers", "covariances"):
            if key in spec:
                spec[key] = _tuplify(spec[key])
        return cls(**spec)


def _tuplify(v):
    return tuple(_tuplify(x) for x in v) if isinstance(v, (list, tuple)) else v


def _split(n, k):
    """Sizes of ``k`` near-equal groups summing to ``n``."""
    return [n // k + (i < n % k) for i in range(k)]


def uniform_disk(n, rng):
    r = np.sqrt(rng.uniform(size=n))
    theta = rng.uniform(0.0, 2 * np.pi, size=n)
    return np.column_stack([r * np.cos(theta), r * np.sin(theta)])


def two_moons(n, noise, rng):
    n_a, n_b = _split(n, 2)
    ta = rng.uniform(0.0, np.pi, n_a)
    tb = rng.uniform(0.0, np.pi, n_b)
    a = np.column_stack([np.cos(ta), np.sin(ta)])
    b = np.column_stack([1.0 - np.cos(tb), 0.5 - np.sin(tb)])
    pts = np.vstack([a, b]) + noise * rng.standard_normal((n, 2))
    return pts, np.repeat([0, 1], [n_a, n_b])


def concentric_rings(n, radii, noise, rng):
    sizes = _split(n, len(radii))
    pts, labels = [], []
    for i, (r, m) in enumerate(zip(radii, sizes)):
        theta = rng.uniform(0.0, 2 * np.pi, m)
        pts.append(np.column_stack([r * np.cos(theta), r * np.sin(theta)]))
        labels.append(np.full(m, i))
    return np.vstack(pts) + noise * rng.standard_normal((n, 2)), np.concatenate(labels)


def anisotropic_blobs(n, centers, covariances, rng):
    if len(centers) != len(covariances):
        raise ValueError("need one covariance per center")
    sizes = _split(n, len(centers))
    pts, labels = [], []
    for i, (c, cov, m) in enumerate(zip(centers, covariances, sizes)):
        pts.append(rng.multivariate_normal(np.asarray(c, float), np.asarray(cov, float), size=m, method="cholesky"))
        labels.append(np.full(m, i))
    return np.vstack(pts), np.concatenate(labels)


def filament_clusters(n, noise, rng):
    """A long curved filament running between two compact clusters."""
    n_fil, n_a, n_b = _split(n, 3)
    t = rng.uniform(-1.0, 1.0, n_fil)
    fil = np.column_stack([3.0 * t, 1.2 * (1.0 - t * t) + 1.0])
    fil += noise * rng.standard_normal((n_fil, 2))
    a = rng.standard_normal((n_a, 2)) * 0.35 + [-1.2, -0.6]
    b = rng.standard_normal((n_b, 2)) * 0.35 + [1.2, -0.6]
    return np.vstack([fil, a, b]), np.repeat([0, 1, 2], [n_fil, n_a, n_b])


def generate(spec):
    """Sample the point cloud described by ``spec``."""
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    n = spec.n_points
    if spec.kind == "uniform_disk":
        return PointCloud(uniform_disk(n, rng))
    if spec.kind == "transformed_disk":
        transform = GroundTruthTransform.from_dict(spec.transform)
        return PointCloud(transform.forward(uniform_disk(n, rng)), transform=transform)
    if spec.kind == "two_moons":
        return PointCloud(*two_moons(n, spec.noise, rng))
    if spec.kind == "concentric_rings":
        return PointCloud(*concentric_rings(n, spec.radii, spec.noise, rng))
    if spec.kind == "anisotropic_blobs":
        return PointCloud(*anisotropic_blobs(n, spec.centers, spec.covariances, rng))
    return PointCloud(*filament_clusters(n, spec.noise, rng))


def save_csv(cloud, path, spec=None):
    """Write ``x1..xd[,label]`` with a header and a ``.json`` sidecar holding ``spec``."""
    d = cloud.dim
    header = [f"x{i + 1}" for i in range(d)]
    table = cloud.points
    fmt = ["%.17g"] * d
    if cloud.labels is not None:
        header.append("label")
        table = np.column_stack([table, cloud.labels])
        fmt.append("%d")
    np.savetxt(path, table, delimiter=",", header=",".join(header), comments="", fmt=fmt)
    if spec is not None:
        with open(f"{path}.json", "w") as fh:
            fh.write(spec.to_json() + "\n")


def load_csv(path):
    """Read a CSV written by :func:`save_csv` (or any numeric CSV with a header row)."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if table.shape[1] != len(header):
        raise ValueError(f"{path}: header has {len(header)} columns, rows have {table.shape[1]}")
    if header[-1] == "label":
        return PointCloud(table[:, :-1], table[:, -1].astype(int))
    return PointCloud(table)
