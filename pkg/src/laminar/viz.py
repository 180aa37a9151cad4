"""Figures: colour-wheel metric fields, distance maps with out-of-distribution
contours, and standardized log-ratio maps.

Every renderer writes its image atomically and drops a ``<file>.json``
manifest next to it describing inputs and parameters.
"""

from contextlib import contextmanager
from dataclasses import dataclass
import colorsys
import json
import os
import tempfile

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.colors import TwoSlopeNorm  # noqa: E402
from matplotlib.patches import Ellipse  # noqa: E402
import numpy as np  # noqa: E402
from scipy.spatial import cKDTree  # noqa: E402

from .metric import NotSPDError, wasserstein_gaussian  # noqa: E402

UNREACHABLE_COLOR = "#ff00ff"
GRID_SIZE = 200
GRID_PAD = 0.1


@contextmanager
def atomic_path(path):
    """Yield a temporary path in the target directory, renamed over ``path`` on success."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    suffix = os.path.splitext(path)[1]
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=suffix)
    os.close(fd)
    try:
        yield tmp
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def write_manifest(path, **info):
    with atomic_path(f"{path}.json") as tmp, open(tmp, "w") as fh:
        json.dump({"file": os.path.basename(path), **info}, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.generic):
        return v.item()
    return str(v)


def _save(fig, path, **info):
    fmt = os.path.splitext(path)[1].lstrip(".") or "svg"
    with atomic_path(path) as tmp:
        fig.savefig(tmp, format=fmt, bbox_inches="tight")
    plt.close(fig)
    write_manifest(path, format=fmt, **info)
    return path


# -- tensor glyphs -------------------------------------------------------------

@dataclass
class TensorGlyph:
    center: np.ndarray
    angle: float  # major-axis orientation in [0, pi)
    axis_ratio: float  # minor / major in (0, 1]
    major: float = 1.0  # sqrt of the largest eigenvalue


def tensor_glyph(sigma, center=(0.0, 0.0)):
    """Ellipse of unit Mahalanobis length: axes along the eigenvectors, lengths ``sqrt(eig)``."""
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape != (2, 2) or not np.allclose(sigma, sigma.T):
        raise NotSPDError("glyphs need a symmetric 2 x 2 tensor")
    vals, vecs = np.linalg.eigh(sigma)
    if vals[0] <= 0:
        raise NotSPDError("tensor is not positive definite")
    vx, vy = vecs[:, 1]
    angle = float(np.arctan2(vy, vx) % np.pi)
    if np.isclose(angle, np.pi):
        angle = 0.0
    return TensorGlyph(np.asarray(center, dtype=float), angle, float(np.sqrt(vals[0] / vals[1])),
                       float(np.sqrt(vals[1])))


def tensor_to_color(sigma):
    """``(hue, saturation)`` on the orientation wheel.

    ``hue = 2 * angle / (2 pi)`` so a headless ellipse maps to one colour;
    0 is a horizontal major axis (red), 0.5 vertical (blue).
    ``saturation = 1 - minor/major``.
    """
    g = tensor_glyph(sigma)
    hue = (2.0 * g.angle / (2.0 * np.pi)) % 1.0
    return hue, 1.0 - g.axis_ratio


def wheel_rgb(hue, saturation):
    """RGB for a wheel position; red at 0, blue at 0.5, continuous around 1."""
    hue = float(hue) % 1.0
    if hue < 0.5:
        hsv_hue = hue / 0.5 * (240.0 / 360.0)
    else:
        hsv_hue = 240.0 / 360.0 + (hue - 0.5) / 0.5 * (120.0 / 360.0)
    return colorsys.hsv_to_rgb(hsv_hue % 1.0, float(np.clip(saturation, 0.0, 1.0)), 1.0)


def field_colors(tensors):
    return np.array([wheel_rgb(*tensor_to_color(s)) for s in tensors])


def _draw_field(ax, points, tensors, glyph_every=0, title=None):
    ax.scatter(points[:, 0], points[:, 1], c=field_colors(tensors), s=6, edgecolors="none")
    if glyph_every:
        scale = 0.04 * np.ptp(points, axis=0).max()
        for p, s in zip(points[::glyph_every], tensors[::glyph_every]):
            g = tensor_glyph(s, p)
            ax.add_patch(Ellipse(p, 2 * scale, 2 * scale * g.axis_ratio, angle=np.degrees(g.angle),
                                 fill=False, lw=0.5, color="k"))
    ax.set_aspect("equal")
    ax.set_facecolor("0.85")
    if title:
        ax.set_title(title)


def metric_field_map(points, tensors, path, glyph_every=0, title=None):
    fig, ax = plt.subplots(figsize=(5, 5))
    _draw_field(ax, np.asarray(points), np.asarray(tensors), glyph_every, title)
    return _save(fig, path, figure="metric_field", n_points=len(points), glyph_every=glyph_every)


def colour_wheel(path, n=200):
    """Reference wheel: angle around the disk is ellipse orientation, radius is anisotropy."""
    y, x = np.mgrid[-1:1:n * 1j, -1:1:n * 1j]
    r = np.hypot(x, y)
    theta = np.arctan2(y, x) % (2 * np.pi)
    img = np.ones((n, n, 4))
    for i in range(n):
        for j in range(n):
            if r[i, j] <= 1:
                img[i, j, :3] = wheel_rgb(theta[i, j] / (2 * np.pi), r[i, j])
            else:
                img[i, j, 3] = 0
    fig, ax = plt.subplots(figsize=(3, 3))
    ax.imshow(img, origin="lower", extent=(-1, 1, -1, 1))
    ax.axis("off")
    return _save(fig, path, figure="colour_wheel")


def metric_comparison(points, estimated, truth, path, scores=None):
    """Three panels: ground truth, learned field, point-wise Wasserstein difference."""
    points = np.asarray(points)
    if scores is None:
        scores = wasserstein_gaussian(estimated, truth)
    fig, axes = plt.subplots(1, 3, figsize=(15, 5))
    _draw_field(axes[0], points, truth, title="ground truth")
    _draw_field(axes[1], points, estimated, title="learned")
    sc = axes[2].scatter(points[:, 0], points[:, 1], c=scores, s=6, cmap="magma", edgecolors="none")
    axes[2].set_aspect("equal")
    axes[2].set_title("Wasserstein difference")
    fig.colorbar(sc, ax=axes[2], shrink=0.8)
    return _save(fig, path, figure="metric_comparison", n_points=len(points),
                 median_score=float(np.median(scores)))


# -- distance maps -------------------------------------------------------------

def contour_grid(points, size=GRID_SIZE, pad=GRID_PAD):
    points = np.asarray(points, dtype=float)
    lo, hi = points.min(axis=0), points.max(axis=0)
    span = hi - lo
    lo, hi = lo - pad * span, hi + pad * span
    xs = np.linspace(lo[0], hi[0], size)
    ys = np.linspace(lo[1], hi[1], size)
    return np.meshgrid(xs, ys)


def contour_field(points, distances, query_points, k=25):
    """Mean distance value of the ``k`` Euclidean nearest reachable data points."""
    points = np.asarray(points, dtype=float)
    distances = np.asarray(distances, dtype=float)
    ok = np.isfinite(distances)
    k = min(k, int(ok.sum()))
    tree = cKDTree(points[ok])
    _, idx = tree.query(np.asarray(query_points, dtype=float), k=k)
    idx = np.asarray(idx).reshape(len(query_points), k)
    return distances[ok][idx].mean(axis=1)


def distance_map(points, distances, path, query=None, k_contour=25, levels=10, title=None):
    """Scatter coloured by distance (bright = near) over out-of-distribution contours."""
    points = np.asarray(points, dtype=float)
    distances = np.asarray(distances, dtype=float)
    ok = np.isfinite(distances)
    gx, gy = contour_grid(points)
    field = contour_field(points, distances, np.column_stack([gx.ravel(), gy.ravel()]), k_contour)
    field = field.reshape(gx.shape)
    fig, ax = plt.subplots(figsize=(5, 5))
    if np.ptp(field) > 0:
        ax.contour(gx, gy, field, levels=levels, cmap="Greys", linewidths=0.8)
    vmin, vmax = (distances[ok].min(), distances[ok].max()) if ok.any() else (0, 1)
    ax.scatter(points[ok, 0], points[ok, 1], c=distances[ok], cmap="viridis_r", vmin=vmin,
               vmax=vmax if vmax > vmin else vmin + 1, s=6, edgecolors="none")
    if (~ok).any():
        ax.scatter(points[~ok, 0], points[~ok, 1], c=UNREACHABLE_COLOR, s=6, marker="x", lw=0.5)
    if query is not None:
        ax.plot(*points[query], "r+", ms=12, mew=2)
    ax.set_aspect("equal")
    if title:
        ax.set_title(title)
    return _save(fig, path, figure="distance_map", query=query, k_contour=k_contour,
                 grid=GRID_SIZE, pad=GRID_PAD, n_unreachable=int((~ok).sum()))


def _standardize(v):
    sd = v.std()
    return v - v.mean() if sd == 0 else (v - v.mean()) / sd


def ratio_values(laminar, euclid, query=None):
    """``standardize(log d_lam) - standardize(log d_euc)``; NaN at the excluded query."""
    lam = np.asarray(laminar, dtype=float)
    euc = np.asarray(euclid, dtype=float)
    if lam.shape != euc.shape:
        raise ValueError("distance arrays must have the same length")
    keep = np.ones(len(lam), dtype=bool)
    if query is not None:
        keep[query] = False
    keep &= np.isfinite(lam) & np.isfinite(euc)
    if np.any(lam[keep] <= 0) or np.any(euc[keep] <= 0):
        raise ValueError("distances must be strictly positive once the query point is excluded")
    out = np.full(len(lam), np.nan)
    out[keep] = _standardize(np.log(lam[keep])) - _standardize(np.log(euc[keep]))
    return out


def ratio_map(points, laminar, euclid, path, query=None, title=None):
    """Blue where the learned distance is relatively smaller than the Euclidean one."""
    points = np.asarray(points, dtype=float)
    v = ratio_values(laminar, euclid, query)
    ok = np.isfinite(v)
    lim = max(np.abs(v[ok]).max(), 1e-12) if ok.any() else 1.0
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.scatter(points[ok, 0], points[ok, 1], c=v[ok], cmap="RdBu_r",
               norm=TwoSlopeNorm(0.0, -lim, lim), s=6, edgecolors="none")
    if query is not None:
        ax.plot(*points[query], "g+", ms=12, mew=2)
    ax.set_aspect("equal")
    if title:
        ax.set_title(title)
    return _save(fig, path, figure="ratio_map", query=query, mean=float(np.nanmean(v)) if ok.any() else None)
