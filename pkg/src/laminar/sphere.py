"""Radial map from a standard normal to the uniform distribution in the unit ball.

A point ``z`` is sent to ``z / |z| * F(|z|)`` with
``F(r) = P(d/2, r**2/2) ** (1/d)``, so that ``|to_ball(z)| ** d`` is
uniform on ``[0, 1]`` when ``z ~ N(0, I_d)``.
"""

from dataclasses import dataclass
import math

import numpy as np

from .special import _continued_fraction, gammainc, scaled_series

R_ORIGIN = 1e-8
R_CLAMP = 40.0
F_CLAMP = 1.0 - 1e-16


def radial_cdf(r, d):
    """Ball radius ``F(r)`` for a Gaussian radius ``r`` in ``d`` dimensions."""
    if r < 0:
        raise ValueError(f"radius must be non-negative, got {r}")
    if d < 1:
        raise ValueError(f"dimension must be positive, got {d}")
    if r > R_CLAMP:
        return F_CLAMP
    return min(gammainc(0.5 * d, 0.5 * r * r) ** (1.0 / d), F_CLAMP)


def _radial_terms(r, d):
    """Return ``(g, h, fprime)`` with ``g = F(r)/r``, ``h = g'(r)/r`` and ``F'(r)``.

    The Jacobian is ``g I + h z z^T``; in the tail it is assembled from ``fprime``
    directly because ``g + h r**2`` cancels to a value far below ``g``.
    """
    a = 0.5 * d
    if r < R_ORIGIN:
        g = (1.0 / (math.gamma(a + 1.0) * 2.0 ** a)) ** (1.0 / d)
        return g, 0.0, g
    x = 0.5 * r * r
    if x < a + 1.0:
        s, ds = scaled_series(a, x)
        g = (s / 2.0 ** a) ** (1.0 / d)
        h = g * ds / (d * s)
        return g, h, g + h * r * r
    if r > R_CLAMP:
        f, fp = F_CLAMP, 0.0
    else:
        q = _continued_fraction(a, x)
        p = 1.0 - q
        f = min(p ** (1.0 / d), F_CLAMP)
        dp_dr = math.exp((a - 1.0) * math.log(x) - x - math.lgamma(a)) * r
        fp = f / (d * p) * dp_dr
    return f / r, (fp * r - f) / r ** 3, fp


def _as_points(z):
    z = np.asarray(z, dtype=float)
    if z.ndim not in (1, 2):
        raise ValueError(f"expected a vector or an N x d array, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ValueError("input contains non-finite values")
    return z


def to_ball(z):
    """Map Gaussian-space points (``d`` or ``N x d``) into the unit ball."""
    z = _as_points(z)
    pts = np.atleast_2d(z)
    d = pts.shape[1]
    radii = np.linalg.norm(pts, axis=1)
    out = np.empty_like(pts)
    for i, (p, r) in enumerate(zip(pts, radii)):
        out[i] = p * _radial_terms(r, d)[0]
    return out[0] if z.ndim == 1 else out


def to_ball_jacobian(z):
    """Analytic Jacobian ``g(r) I + (g'(r)/r) z z^T`` of :func:`to_ball`."""
    z = _as_points(z)
    pts = np.atleast_2d(z)
    d = pts.shape[1]
    radii = np.linalg.norm(pts, axis=1)
    out = np.empty((len(pts), d, d))
    eye = np.eye(d)
    for i, (p, r) in enumerate(zip(pts, radii)):
        g, h, fp = _radial_terms(r, d)
        if 0.5 * r * r < 0.5 * d + 1.0:
            out[i] = g * eye + h * np.outer(p, p)
        else:
            radial = np.outer(p, p) / (r * r)
            out[i] = g * (eye - radial) + fp * radial
    return out[0] if z.ndim == 1 else out


@dataclass(frozen=True)
class SphereMap:
    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dimension must be positive, got {self.dim}")

    def __call__(self, z):
        return to_ball(z)

    def jacobian(self, z):
        return to_ball_jacobian(z)

    def radial_cdf(self, r):
        return radial_cdf(r, self.dim)
