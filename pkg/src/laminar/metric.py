"""Metric tensors from the data-to-ball Jacobian and the distances built on them."""

from dataclasses import dataclass, field
import warnings

import numpy as np

from .flow import flow_jacobian
from .sphere import to_ball, to_ball_jacobian

COND_LIMIT = 1e12
EIG_FLOOR = 1e-12


class NotSPDError(ValueError):
    pass


class IllConditionedWarning(RuntimeWarning):
    pass


@dataclass
class MetricTensorField:
    points: np.ndarray
    tensors: np.ndarray
    flagged: np.ndarray = None  # points that needed the Tikhonov fallback

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.tensors = np.asarray(self.tensors, dtype=float)
        n, d = self.points.shape
        if self.tensors.shape != (n, d, d):
            raise ValueError(f"tensors have shape {self.tensors.shape}, expected {(n, d, d)}")
        if self.flagged is None:
            self.flagged = np.zeros(n, dtype=bool)

    def __len__(self):
        return len(self.points)

    @property
    def dim(self):
        return self.points.shape[1]

    def save(self, path):
        """Columnar text: ``x_1..x_d, s_11, s_12, ..., s_dd, flagged`` per row.

        Values are written with 17 significant digits so reloading is exact.
        """
        d = self.dim
        header = [f"x{i + 1}" for i in range(d)]
        header += [f"s{i + 1}{j + 1}" for i in range(d) for j in range(d)] + ["flagged"]
        table = np.column_stack([self.points, self.tensors.reshape(len(self), d * d),
                                 self.flagged.astype(float)])
        np.savetxt(path, table, delimiter=",", header=",".join(header), comments="", fmt="%.17g")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            header = fh.readline().strip().split(",")
        d = sum(1 for name in header if name.startswith("x"))
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(table[:, :d], table[:, d:d + d * d].reshape(-1, d, d), table[:, -1].astype(bool))


def _symmetrize(m):
    return 0.5 * (m + np.swapaxes(m, -1, -2))


def enforce_spd(sigma):
    """Symmetrize and floor eigenvalues at ``EIG_FLOOR * max_eigenvalue``."""
    sigma = _symmetrize(np.asarray(sigma, dtype=float))
    vals, vecs = np.linalg.eigh(sigma)
    top = vals[..., -1:]
    if np.any(top <= 0):
        raise NotSPDError("matrix has no positive eigenvalue")
    if np.all(vals >= EIG_FLOOR * top):
        return sigma
    vals = np.maximum(vals, EIG_FLOOR * top)
    return _symmetrize((vecs * vals[..., None, :]) @ np.swapaxes(vecs, -1, -2))


def tensor_from_jacobian(jac):
    """``(J^T J)^{-1}`` for one ``d x d`` or a stack of Jacobians.

    Returns ``(sigma, flagged)``; ill-conditioned ``J^T J`` (condition > 1e12)
    is regularized with ``1e-10 * trace / d`` on the diagonal and flagged.
    """
    jac = np.asarray(jac, dtype=float)
    single = jac.ndim == 2
    jac = np.atleast_3d(jac) if not single else jac[None]
    d = jac.shape[-1]
    gram = _symmetrize(np.swapaxes(jac, -1, -2) @ jac)
    cond = np.linalg.cond(gram)
    flagged = ~np.isfinite(cond) | (cond > COND_LIMIT)
    if np.any(flagged):
        eps = 1e-10 * np.trace(gram[flagged], axis1=-2, axis2=-1) / d
        gram[flagged] += eps[:, None, None] * np.eye(d)
        warnings.warn(f"{int(flagged.sum())} ill-conditioned Jacobian(s) regularized", IllConditionedWarning)
    sigma = enforce_spd(np.linalg.inv(gram))
    return (sigma[0], bool(flagged[0])) if single else (sigma, flagged)


def pseudo_cdf_and_jacobian(x, model):
    """Ball coordinates of ``x`` and the total Jacobian ``J_to_ball @ J_flow``."""
    z, j_flow = flow_jacobian(x, model)
    return to_ball(z), to_ball_jacobian(z) @ j_flow


def metric_tensor(x, model):
    sigma, _ = tensor_from_jacobian(pseudo_cdf_and_jacobian(x, model)[1])
    return sigma


def metric_field(x, model):
    """Pseudo-cdf coordinates and the :class:`MetricTensorField` for all of ``x``."""
    x = np.asarray(x, dtype=float)
    ball, jac = pseudo_cdf_and_jacobian(x, model)
    sigma, flagged = tensor_from_jacobian(jac)
    return ball, MetricTensorField(x, sigma, flagged)


def _cholesky(m):
    if not np.allclose(m, np.swapaxes(m, -1, -2), rtol=1e-10, atol=1e-14):
        raise NotSPDError("metric tensor is not symmetric")
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NotSPDError("metric tensor is not positive definite") from exc


def mahalanobis(xi, xj, sigma_i, sigma_j):
    """Scale-free Mahalanobis length ``sqrt(|S|^(1/d) D^T S^-1 D)`` with ``S`` the mean tensor.

    Broadcasts over leading axes so a batch of edges can be evaluated at once.
    """
    delta = np.asarray(xi, dtype=float) - np.asarray(xj, dtype=float)
    mean = 0.5 * (np.asarray(sigma_i, dtype=float) + np.asarray(sigma_j, dtype=float))
    d = delta.shape[-1]
    chol = _cholesky(mean)
    # S = L L^T so D^T S^-1 D = |L^-1 D|^2 and |S|^(1/d) = prod(diag L)^(2/d)
    y = np.linalg.solve(chol, delta[..., None])[..., 0]
    log_det = 2.0 * np.log(np.diagonal(chol, axis1=-2, axis2=-1)).sum(axis=-1)
    s2 = np.exp(log_det / d) * (y * y).sum(axis=-1)
    return np.sqrt(s2)


def _sqrtm_spd(m):
    vals, vecs = np.linalg.eigh(m)
    if np.any(vals <= 0):
        raise NotSPDError("matrix is not positive definite")
    return (vecs * np.sqrt(vals)[..., None, :]) @ np.swapaxes(vecs, -1, -2)


def wasserstein_gaussian(sigma_a, sigma_b):
    """2-Wasserstein distance between ``N(0, sigma_a)`` and ``N(0, sigma_b)``."""
    a = np.asarray(sigma_a, dtype=float)
    b = np.asarray(sigma_b, dtype=float)
    for m in (a, b):
        _cholesky(m)
    root_b = _sqrtm_spd(_symmetrize(b))
    cross = _sqrtm_spd(_symmetrize(root_b @ a @ root_b))
    w2 = (np.trace(a, axis1=-2, axis2=-1) + np.trace(b, axis1=-2, axis2=-1)
          - 2.0 * np.trace(cross, axis1=-2, axis2=-1))
    return np.sqrt(np.maximum(w2, 0.0))


# -- ground truth --------------------------------------------------------------

@dataclass(frozen=True)
class GroundTruthTransform:
    """Analytic warps of the unit disk with known Jacobians.

    ``linear`` uses ``matrix``; ``swirl`` rotates by ``strength * (1 - r)``;
    ``bend`` adds ``amplitude * sin(frequency * x1)`` to the second coordinate.
    """

    kind: str = "identity"
    matrix: tuple = ((1.0, 0.0), (0.0, 1.0))
    strength: float = 1.5
    amplitude: float = 0.3
    frequency: float = 3.0

    KINDS = ("identity", "linear", "swirl", "bend")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown transform kind {self.kind!r}; choose from {self.KINDS}")
        if self.kind == "linear":
            a = np.asarray(self.matrix, dtype=float)
            if a.ndim != 2 or a.shape[0] != a.shape[1] or abs(np.linalg.det(a)) < 1e-12:
                raise ValueError("linear transform needs an invertible square matrix")

    @classmethod
    def linear(cls, matrix):
        return cls("linear", matrix=tuple(map(tuple, np.asarray(matrix, dtype=float).tolist())))

    def to_dict(self):
        out = {"kind": self.kind}
        if self.kind == "linear":
            out["matrix"] = [list(r) for r in self.matrix]
        elif self.kind == "swirl":
            out["strength"] = self.strength
        elif self.kind == "bend":
            out.update(amplitude=self.amplitude, frequency=self.frequency)
        return out

    @classmethod
    def from_dict(cls, spec):
        spec = dict(spec)
        if "matrix" in spec:
            spec["matrix"] = tuple(map(tuple, spec["matrix"]))
        return cls(**spec)

    @staticmethod
    def _rotate(x, angle):
        c, s = np.cos(angle), np.sin(angle)
        return np.stack([c * x[..., 0] - s * x[..., 1], s * x[..., 0] + c * x[..., 1]], axis=-1)

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "identity":
            return x.copy()
        if self.kind == "linear":
            return x @ np.asarray(self.matrix).T
        if self.kind == "swirl":
            r = np.linalg.norm(x, axis=-1)
            return self._rotate(x, self.strength * (1.0 - r))
        y = x.copy()
        y[..., 1] = x[..., 1] + self.amplitude * np.sin(self.frequency * x[..., 0])
        return y

    def inverse(self, y):
        y = np.asarray(y, dtype=float)
        if self.kind == "identity":
            return y.copy()
        if self.kind == "linear":
            return np.linalg.solve(np.asarray(self.matrix), y.T).T if y.ndim > 1 else \
                np.linalg.solve(np.asarray(self.matrix), y)
        if self.kind == "swirl":
            r = np.linalg.norm(y, axis=-1)
            return self._rotate(y, -self.strength * (1.0 - r))
        x = y.copy()
        x[..., 1] = y[..., 1] - self.amplitude * np.sin(self.frequency * y[..., 0])
        return x

    def jacobian(self, x):
        """``d forward / dx`` at disk points ``x``."""
        x = np.asarray(x, dtype=float)
        d = x.shape[-1]
        if self.kind == "identity":
            return np.broadcast_to(np.eye(d), x.shape + (d,)).copy()
        if self.kind == "linear":
            return np.broadcast_to(np.asarray(self.matrix), x.shape + (d,)).copy()
        if self.kind == "swirl":
            r = np.linalg.norm(x, axis=-1)
            angle = self.strength * (1.0 - r)
            c, s = np.cos(angle), np.sin(angle)
            rot = np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)
            safe_r = np.where(r > 0, r, 1.0)
            # y = R(angle(r)) x; dy/dx = R + (dR/dangle x) (dangle/dr) (x/r)^T
            perp = np.stack([-s * x[..., 0] - c * x[..., 1], c * x[..., 0] - s * x[..., 1]], -1)
            grad_angle = -self.strength * x / safe_r[..., None]
            return rot + perp[..., :, None] * grad_angle[..., None, :]
        jac = np.broadcast_to(np.eye(2), x.shape + (2,)).copy()
        jac[..., 1, 0] = self.amplitude * self.frequency * np.cos(self.frequency * x[..., 0])
        return jac


def ground_truth_metric(y, transform, tol=1e-9):
    """``J_T J_T^T`` at the disk pre-image of data point(s) ``y``."""
    x = transform.inverse(y)
    if np.any(np.linalg.norm(np.atleast_2d(x), axis=-1) > 1.0 + tol):
        raise ValueError("point lies outside the image of the unit disk")
    jac = transform.jacobian(x)
    return jac @ np.swapaxes(jac, -1, -2)


def align_scale(estimated, reference):
    """Scalar ``c`` minimizing the median Wasserstein score of ``c * estimated`` vs ``reference``.

    Returns ``(c, per_point_scores)``.
    """
    from scipy.optimize import minimize_scalar

    estimated = np.asarray(estimated, dtype=float)
    reference = np.asarray(reference, dtype=float)
    start = np.log(np.median(np.trace(reference, axis1=-2, axis2=-1) / np.trace(estimated, axis1=-2, axis2=-1)))

    def objective(log_c):
        return np.median(wasserstein_gaussian(np.exp(log_c) * estimated, reference))

    res = minimize_scalar(objective, bracket=(start - 1.0, start + 1.0))
    c = float(np.exp(res.x))
    return c, wasserstein_gaussian(c * estimated, reference)
