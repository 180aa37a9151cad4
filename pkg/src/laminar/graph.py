"""kNN graph in pseudo-cdf space with Mahalanobis edge weights, and geodesic distances."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import heapq
import struct

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, dijkstra as _csgraph_dijkstra
from scipy.spatial import cKDTree

from .metric import mahalanobis

LEAF_SIZE = 16
MATRIX_MAGIC = b"LAMDIST1"


class ConnectivityError(RuntimeError):
    def __init__(self, component_sizes):
        sizes = ", ".join(map(str, component_sizes))
        super().__init__(
            f"graph has {len(component_sizes)} connected components (sizes {sizes}); "
            "some distances are unreachable, try a larger k"
        )
        self.component_sizes = list(component_sizes)


def knn(pseudo, k):
    """Indices of the ``k`` nearest distinct neighbours of every row, ties to lower index."""
    pts = np.asarray(pseudo, dtype=float)
    n = len(pts)
    if not 1 <= k < n:
        raise ValueError(f"k must satisfy 1 <= k < N (N={n}), got k={k}")
    tree = cKDTree(pts, leafsize=LEAF_SIZE, balanced_tree=True)
    dist, idx = tree.query(pts, k=k + 1)
    # radius of the k-th neighbour other than self; everything inside it is a candidate
    self_found = (idx == np.arange(n)[:, None]).any(axis=1)
    kth = np.where(self_found, dist[:, k], dist[:, k - 1])
    balls = tree.query_ball_point(pts, kth * (1 + 1e-12) + 1e-300)
    out = np.empty((n, k), dtype=np.int64)
    for i in range(n):
        cand = np.union1d(np.asarray(balls[i], dtype=np.int64), idx[i])
        cand = cand[cand != i]
        d2 = ((pts[cand] - pts[i]) ** 2).sum(axis=1)
        order = np.lexsort((cand, d2))
        out[i] = cand[order[:k]]
    return out


@dataclass
class DensityGraph:
    """Undirected graph stored once per edge with ``rows < cols``."""

    n_nodes: int
    rows: np.ndarray
    cols: np.ndarray
    weights: np.ndarray
    k: int = 0

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.int64)
        self.cols = np.asarray(self.cols, dtype=np.int64)
        self.weights = np.asarray(self.weights, dtype=float)
        if not (len(self.rows) == len(self.cols) == len(self.weights)):
            raise ValueError("edge arrays must have equal length")
        if np.any(self.rows >= self.cols):
            raise ValueError("edges must be stored with row < col")
        if np.any(~np.isfinite(self.weights)) or np.any(self.weights < 0):
            raise ValueError("edge weights must be finite and non-negative")
        self._adj = None

    @classmethod
    def from_edges(cls, n_nodes, edges, k=0):
        """Build from ``(i, j, w)`` triples; each undirected edge given once."""
        edges = list(edges)
        if not edges:
            return cls(n_nodes, [], [], [], k)
        i, j, w = map(np.asarray, zip(*edges))
        lo, hi = np.minimum(i, j), np.maximum(i, j)
        return cls(n_nodes, lo, hi, w, k)

    @property
    def n_edges(self):
        return len(self.weights)

    def to_sparse(self):
        n = self.n_nodes
        both = np.concatenate([self.rows, self.cols]), np.concatenate([self.cols, self.rows])
        return csr_matrix((np.concatenate([self.weights, self.weights]), both), shape=(n, n))

    def adjacency(self):
        """Per-node ``(neighbors, weights)`` arrays, neighbours in ascending order."""
        if self._adj is None:
            m = self.to_sparse()
            m.sort_indices()
            self._adj = [
                (m.indices[m.indptr[i]:m.indptr[i + 1]].tolist(), m.data[m.indptr[i]:m.indptr[i + 1]].tolist())
                for i in range(self.n_nodes)
            ]
        return self._adj

    def components(self):
        """Component label per node and the component sizes."""
        n, labels = connected_components(self.to_sparse(), directed=False)
        return labels, np.bincount(labels, minlength=n)


def build_graph(points, pseudo, field, k):
    """Union-symmetrized kNN graph (found in ``pseudo``) weighted in data space."""
    points = np.asarray(points, dtype=float)
    if len(points) != len(pseudo) or len(points) != len(field.tensors):
        raise ValueError("points, pseudo-cdf and metric field must be index aligned")
    nbrs = knn(pseudo, k)
    i = np.repeat(np.arange(len(points)), k)
    j = nbrs.ravel()
    pairs = np.unique(np.column_stack([np.minimum(i, j), np.maximum(i, j)]), axis=0)
    rows, cols = pairs[:, 0], pairs[:, 1]
    tensors = field.tensors
    w = mahalanobis(points[rows], points[cols], tensors[rows], tensors[cols])
    return DensityGraph(len(points), rows, cols, w, k)


@dataclass
class DistanceResult:
    source: int
    distances: np.ndarray  # inf where unreachable
    predecessors: np.ndarray  # -1 for the source and unreachable nodes

    @property
    def reachable(self):
        return np.isfinite(self.distances)

    def path_to(self, target):
        if not self.reachable[target]:
            return None
        path = [target]
        while path[-1] != self.source:
            path.append(int(self.predecessors[path[-1]]))
        return path[::-1]


def shortest_paths(graph, source):
    """Single-source Dijkstra with a binary heap."""
    n = graph.n_nodes
    if not 0 <= source < n:
        raise IndexError(f"source {source} out of range for {n} nodes")
    adj = graph.adjacency()
    dist = [float("inf")] * n
    pred = [-1] * n
    done = [False] * n
    dist[source] = 0.0
    heap = [(0.0, source)]
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        nbrs, ws = adj[u]
        for v, w in zip(nbrs, ws):
            nd = d + w
            if nd < dist[v]:
                dist[v] = nd
                pred[v] = u
                heapq.heappush(heap, (nd, v))
    return DistanceResult(source, np.array(dist), np.array(pred, dtype=np.int64))


def distance_matrix(graph, sources=None, require_connected=False, method="scipy", n_jobs=1):
    """Rows of geodesic distances, one per source (all nodes by default).

    ``method="heap"`` runs :func:`shortest_paths` per source (optionally on a
    thread pool); ``"scipy"`` uses ``scipy.sparse.csgraph.dijkstra``.
    """
    n = graph.n_nodes
    sources = np.arange(n) if sources is None else np.asarray(sources, dtype=np.int64)
    if np.any((sources < 0) | (sources >= n)):
        raise IndexError("source index out of range")
    if method == "heap":
        if n_jobs > 1:
            graph.adjacency()
            with ThreadPoolExecutor(n_jobs) as pool:
                rows = list(pool.map(lambda s: shortest_paths(graph, int(s)).distances, sources))
        else:
            rows = [shortest_paths(graph, int(s)).distances for s in sources]
        out = np.array(rows).reshape(len(sources), n)
    elif method == "scipy":
        out = _csgraph_dijkstra(graph.to_sparse(), directed=False, indices=sources)
        out = np.asarray(out, dtype=float).reshape(len(sources), n)
    else:
        raise ValueError(f"unknown method {method!r}")
    if require_connected and not np.all(np.isfinite(out)):
        raise ConnectivityError(graph.components()[1].tolist())
    return out


def save_matrix(matrix, path):
    """Binary layout: magic ``LAMDIST1``, rows and cols as little-endian uint64,
    rows*cols little-endian float64 row-major (unreachable stored as +inf),
    then the row-major unreachable bitmap packed MSB-first, zero padded."""
    m = np.asarray(matrix, dtype="<f8")
    rows, cols = m.shape
    with open(path, "wb") as fh:
        fh.write(MATRIX_MAGIC)
        fh.write(struct.pack("<QQ", rows, cols))
        fh.write(np.where(np.isfinite(m), m, np.inf).astype("<f8").tobytes())
        fh.write(np.packbits(~np.isfinite(m).ravel()).tobytes())


def load_matrix(path):
    with open(path, "rb") as fh:
        if fh.read(len(MATRIX_MAGIC)) != MATRIX_MAGIC:
            raise ValueError(f"{path} is not a distance matrix file")
        rows, cols = struct.unpack("<QQ", fh.read(16))
        values = np.frombuffer(fh.read(8 * rows * cols), dtype="<f8").reshape(rows, cols).astype(float)
        bits = np.frombuffer(fh.read(), dtype=np.uint8)
    unreachable = np.unpackbits(bits)[:rows * cols].reshape(rows, cols).astype(bool)
    values[unreachable] = np.inf
    return values


def export_csv(matrix, path, sources=None):
    """Distance rows as CSV; unreachable entries are left empty."""
    m = np.asarray(matrix, dtype=float)
    sources = range(len(m)) if sources is None else sources
    with open(path, "w") as fh:
        fh.write(",".join(["source"] + [f"d{j}" for j in range(m.shape[1])]) + "\n")
        for s, row in zip(sources, m):
            cells = [repr(float(v)) if np.isfinite(v) else "" for v in row]
            fh.write(f"{s}," + ",".join(cells) + "\n")
