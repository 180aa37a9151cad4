"""k-medoids (PAM) on a precomputed distance matrix, and best-match Jaccard scores."""

from dataclasses import dataclass

import numpy as np


@dataclass
class ClusteringResult:
    medoids: np.ndarray  # point indices, ascending
    assignment: np.ndarray  # position of the assigned medoid in ``medoids``
    total_cost: float
    n_swaps: int = 0


def _check_matrix(D):
    D = np.asarray(D, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ValueError(f"distance matrix must be square, got shape {D.shape}")
    if not np.all(np.isfinite(D)):
        raise ValueError(
            "distance matrix has non-finite entries; the distance graph is probably "
            "disconnected, rebuild it with a larger k"
        )
    if not np.allclose(D, D.T, rtol=1e-10, atol=1e-12):
        raise ValueError("distance matrix must be symmetric")
    if np.any(np.diag(D) != 0):
        raise ValueError("distance matrix must have a zero diagonal")
    return D


def assign(D, medoids):
    """Nearest-medoid labels; ties go to the medoid with the lower point index."""
    medoids = np.sort(np.asarray(medoids))
    labels = np.argmin(D[medoids], axis=0)
    return medoids, labels, float(D[medoids].min(axis=0).sum())


def _build(D, k, rng):
    n = len(D)
    order = rng.permutation(n)  # candidate order only matters for exact ties
    first = order[np.argmin(D[order].sum(axis=1))]
    medoids = [first]
    nearest = D[first].copy()
    for _ in range(1, k):
        gain = np.maximum(nearest[None, :] - D, 0.0).sum(axis=1)
        gain[medoids] = -np.inf
        pick = order[np.argmax(gain[order])]
        medoids.append(pick)
        nearest = np.minimum(nearest, D[pick])
    return medoids


def k_medoids(D, k, seed=0, max_swaps=10_000):
    """PAM: greedy BUILD seeding followed by best-improvement SWAP."""
    D = _check_matrix(D)
    n = len(D)
    if not 1 <= k <= n:
        raise ValueError(f"k must satisfy 1 <= k <= N (N={n}), got k={k}")
    rng = np.random.Generator(np.random.PCG64(seed))
    medoids = np.array(_build(D, k, rng))
    cost = D[medoids].min(axis=0).sum()
    swaps = 0
    while swaps < max_swaps and k < n:
        dm = D[medoids]
        near_pos = np.argmin(dm, axis=0)
        near = dm[near_pos, np.arange(n)]
        if k > 1:
            second = np.partition(dm, 1, axis=0)[1]
        else:
            second = np.full(n, np.inf)
        is_medoid = np.zeros(n, dtype=bool)
        is_medoid[medoids] = True
        best = (cost, None, None)
        for pos in range(k):
            # cost when medoid ``pos`` is replaced by each candidate row of D
            fallback = np.where(near_pos == pos, second, near)
            trial = np.minimum(fallback[None, :], D).sum(axis=1)
            trial[is_medoid] = np.inf
            o = int(np.argmin(trial))
            if trial[o] < best[0]:
                best = (trial[o], pos, o)
        new_cost, pos, o = best
        if pos is None or new_cost >= cost - 1e-12 * max(1.0, abs(cost)):
            break
        medoids[pos] = o
        cost = D[medoids].min(axis=0).sum()
        swaps += 1
    medoids, labels, cost = assign(D, medoids)
    return ClusteringResult(medoids, labels, cost, swaps)


def jaccard_index(a, b):
    """``|A & B| / |A | B|`` for two boolean membership masks."""
    a, b = np.asarray(a, dtype=bool), np.asarray(b, dtype=bool)
    union = (a | b).sum()
    if union == 0:
        raise ValueError("Jaccard index of two empty sets is undefined")
    return float((a & b).sum() / union)


def jaccard_best_match(truth_labels, predicted_labels):
    """For each ground-truth cluster, the best Jaccard index over predicted clusters."""
    truth = np.asarray(truth_labels)
    pred = np.asarray(predicted_labels)
    if truth.shape != pred.shape:
        raise ValueError("label arrays must have equal length")
    if truth.size == 0:
        raise ValueError("no ground-truth clusters to score")
    scores = {}
    for g in np.unique(truth):
        in_g = truth == g
        best = max(jaccard_index(in_g, pred == p) for p in np.unique(pred))
        scores[g.item() if hasattr(g, "item") else g] = best
    return scores


def save_labels(labels, path, truth=None):
    """CSV ``index,label[,truth]`` in input row order."""
    labels = np.asarray(labels)
    cols = [np.arange(len(labels)), labels]
    header = "index,label"
    if truth is not None:
        cols.append(np.asarray(truth))
        header += ",truth"
    np.savetxt(path, np.column_stack(cols), delimiter=",", header=header, comments="", fmt="%d")
