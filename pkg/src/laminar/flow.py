"""Continuous planar flow driven by a time-conditioned hypernetwork.

The velocity field is a sum of ``M`` planar units,

    dz/dt = sum_m u_m(t) tanh(w_m(t) . z + b_m(t)),

whose divergence is analytic, so the log-density change and the full
Jacobian ``dz(T)/dz(0)`` can be carried along a fixed-step RK4 solve.
Training backpropagates through the unrolled solver.
"""

from dataclasses import dataclass, field
import logging
import math

import numpy as np
import torch

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = "laminar-flow/1"
DTYPE = torch.float64


class InvalidModelError(ValueError):
    pass


class FlowDivergenceError(FloatingPointError):
    def __init__(self, step, n_steps):
        super().__init__(f"non-finite flow state at integration step {step} of {n_steps}")
        self.step = step


class TrainingDiverged(RuntimeError):
    """Raised on a non-finite loss; ``model`` holds the last finite parameters."""

    def __init__(self, epoch, model):
        super().__init__(f"loss became non-finite at epoch {epoch}")
        self.epoch = epoch
        self.model = model


@dataclass
class PlanarUnitParams:
    u: np.ndarray
    w: np.ndarray
    b: float


@dataclass
class HyperNetwork:
    """Single hidden layer MLP ``t -> (u, w, b)`` for ``n_units`` planar units."""

    weights_in: np.ndarray  # (H, 1)
    bias_in: np.ndarray  # (H,)
    weights_out: np.ndarray  # (M * (2d + 1), H)
    bias_out: np.ndarray  # (M * (2d + 1),)
    n_units: int
    dim: int

    PARAM_NAMES = ("weights_in", "bias_in", "weights_out", "bias_out")

    def __post_init__(self):
        h = self.hidden_width
        out = self.n_units * (2 * self.dim + 1)
        shapes = {
            "weights_in": (h, 1),
            "bias_in": (h,),
            "weights_out": (out, h),
            "bias_out": (out,),
        }
        for name, shape in shapes.items():
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != shape:
                raise InvalidModelError(f"{name} has shape {arr.shape}, expected {shape}")
            setattr(self, name, arr)

    @property
    def hidden_width(self):
        return len(self.bias_in)

    @classmethod
    def init(cls, dim, n_units=32, hidden_width=32, seed=0, out_scale=0.1):
        rng = np.random.Generator(np.random.PCG64(seed))
        out = n_units * (2 * dim + 1)
        return cls(
            weights_in=rng.uniform(-1.0, 1.0, (hidden_width, 1)),
            bias_in=rng.uniform(-1.0, 1.0, hidden_width),
            weights_out=rng.uniform(-out_scale, out_scale, (out, hidden_width)),
            bias_out=rng.uniform(-out_scale, out_scale, out),
            n_units=n_units,
            dim=dim,
        )

    def arrays(self):
        return [getattr(self, name) for name in self.PARAM_NAMES]

    def flat(self):
        return np.concatenate([a.ravel() for a in self.arrays()])

    def with_flat(self, theta):
        theta = np.asarray(theta, dtype=float)
        parts, i = {}, 0
        for name, arr in zip(self.PARAM_NAMES, self.arrays()):
            parts[name] = theta[i:i + arr.size].reshape(arr.shape)
            i += arr.size
        if i != theta.size:
            raise InvalidModelError(f"flat vector has {theta.size} entries, expected {i}")
        return HyperNetwork(**parts, n_units=self.n_units, dim=self.dim)

    def __call__(self, t):
        """Decode the planar units at time ``t``."""
        u, w, b = _decode(_torch_params(self), torch.tensor(float(t), dtype=DTYPE), self.n_units, self.dim)
        return [PlanarUnitParams(u[m].numpy(), w[m].numpy(), float(b[m])) for m in range(self.n_units)]


@dataclass
class FlowModel:
    hypernet: HyperNetwork
    data_shift: np.ndarray
    data_scale: np.ndarray
    n_steps: int = 64
    t_start: float = 0.0
    t_end: float = 1.0
    loss_history: list = field(default_factory=list)

    def __post_init__(self):
        self.data_shift = np.asarray(self.data_shift, dtype=float)
        self.data_scale = np.asarray(self.data_scale, dtype=float)
        if self.data_shift.shape != (self.dim,) or self.data_scale.shape != (self.dim,):
            raise InvalidModelError("standardization vectors must have length d")
        if not np.all(self.data_scale > 0):
            raise InvalidModelError("data_scale entries must be strictly positive")
        if self.n_steps < 1:
            raise InvalidModelError("n_steps must be at least 1")
        if not self.t_end > self.t_start:
            raise InvalidModelError("t_end must exceed t_start")

    @property
    def dim(self):
        return self.hypernet.dim

    @property
    def n_units(self):
        return self.hypernet.n_units

    def standardize(self, x):
        return (np.asarray(x, dtype=float) - self.data_shift) / self.data_scale


@dataclass
class FlowState:
    z: np.ndarray
    delta_logp: np.ndarray
    J: np.ndarray | None = None


# -- torch core ---------------------------------------------------------------

def _torch_params(hypernet, requires_grad=False):
    return [torch.tensor(a, dtype=DTYPE, requires_grad=requires_grad) for a in hypernet.arrays()]


def _decode(params, t, n_units, dim):
    w_in, b_in, w_out, b_out = params
    hidden = torch.tanh(w_in[:, 0] * t + b_in)
    out = w_out @ hidden + b_out
    if not torch.isfinite(out).all():
        raise InvalidModelError(f"hypernetwork produced non-finite parameters at t={float(t)}")
    out = out.reshape(n_units, 2 * dim + 1)
    return out[:, :dim], out[:, dim:2 * dim], out[:, 2 * dim]


def _field(z, t, params, n_units, dim):
    """Velocity, log-density rate and per-unit ``tanh'`` for a batch ``z``."""
    u, w, b = _decode(params, t, n_units, dim)
    act = torch.tanh(z @ w.T + b)
    slope = 1.0 - act * act
    dz = act @ u
    dlogp = -(slope @ (u * w).sum(dim=1))
    return dz, dlogp, slope, u, w


def _field_jacobian(slope, u, w):
    return torch.einsum("nm,mi,mj->nij", slope, u, w)


def _rk4(z, params, model_shape, t0, t1, n_steps, with_jacobian):
    n_units, dim = model_shape
    dt = (t1 - t0) / n_steps
    logp = torch.zeros(z.shape[0], dtype=DTYPE)
    jac = torch.eye(dim, dtype=DTYPE).expand(z.shape[0], dim, dim).clone() if with_jacobian else None

    def f(zz, jj, t):
        dz, dlogp, slope, u, w = _field(zz, torch.tensor(t, dtype=DTYPE), params, n_units, dim)
        dj = _field_jacobian(slope, u, w) @ jj if with_jacobian else None
        return dz, dlogp, dj

    for step in range(n_steps):
        t = t0 + step * dt
        k1 = f(z, jac, t)
        k2 = f(z + 0.5 * dt * k1[0], jac + 0.5 * dt * k1[2] if with_jacobian else None, t + 0.5 * dt)
        k3 = f(z + 0.5 * dt * k2[0], jac + 0.5 * dt * k2[2] if with_jacobian else None, t + 0.5 * dt)
        k4 = f(z + dt * k3[0], jac + dt * k3[2] if with_jacobian else None, t + dt)
        z = z + dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        logp = logp + dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        if with_jacobian:
            jac = jac + dt / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        if not (torch.isfinite(z).all() and torch.isfinite(logp).all()):
            raise FlowDivergenceError(step + 1, n_steps)
    return z, logp, jac


def _gaussian_logpdf(z):
    dim = z.shape[-1]
    return -0.5 * (z * z).sum(dim=-1) - 0.5 * dim * math.log(2 * math.pi)


def _nll(params, model, x, n_steps):
    z0 = (x - torch.as_tensor(model.data_shift)) / torch.as_tensor(model.data_scale)
    z, dlogp, _ = _rk4(z0, params, (model.n_units, model.dim), model.t_start, model.t_end, n_steps, False)
    ll = _gaussian_logpdf(z) - dlogp - float(np.log(model.data_scale).sum())
    return -ll.mean()


# -- public numpy surface -----------------------------------------------------

def _batch(x, dim):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got {x.shape[1]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("input contains non-finite values")
    return torch.as_tensor(x, dtype=DTYPE), single


def dynamics(z, t, model):
    """Velocity ``dz/dt`` and log-density rate ``dlogp/dt`` at ``(z, t)``."""
    zz, single = _batch(z, model.dim)
    with torch.no_grad():
        dz, dlogp, *_ = _field(zz, torch.tensor(float(t), dtype=DTYPE), _torch_params(model.hypernet),
                               model.n_units, model.dim)
    dz, dlogp = dz.numpy(), dlogp.numpy()
    return (dz[0], float(dlogp[0])) if single else (dz, dlogp)


def dynamics_jacobian(z, t, model):
    """Spatial Jacobian of the velocity, a sum of rank-one terms ``tanh' u w^T``."""
    zz, single = _batch(z, model.dim)
    with torch.no_grad():
        _, _, slope, u, w = _field(zz, torch.tensor(float(t), dtype=DTYPE), _torch_params(model.hypernet),
                                   model.n_units, model.dim)
        jac = _field_jacobian(slope, u, w).numpy()
    return jac[0] if single else jac


def integrate(x, model, with_jacobian=False, n_steps=None):
    """Push data-space points through standardization and the flow.

    ``FlowState.J`` is ``dz(t_end)/dz(t_start)`` for the standardized input;
    use :func:`flow_jacobian` for the derivative with respect to ``x``.
    """
    xx, single = _batch(x, model.dim)
    z0 = (xx - torch.as_tensor(model.data_shift)) / torch.as_tensor(model.data_scale)
    with torch.no_grad():
        z, dlogp, jac = _rk4(z0, _torch_params(model.hypernet), (model.n_units, model.dim),
                             model.t_start, model.t_end, n_steps or model.n_steps, with_jacobian)
    z, dlogp = z.numpy(), dlogp.numpy()
    jac = jac.numpy() if with_jacobian else None
    if single:
        return FlowState(z[0], float(dlogp[0]), None if jac is None else jac[0])
    return FlowState(z, dlogp, jac)


def flow_jacobian(x, model, n_steps=None):
    """Return ``(z(t_end), dz(t_end)/dx)`` including the standardization affine."""
    state = integrate(x, model, with_jacobian=True, n_steps=n_steps)
    return state.z, state.J / model.data_scale


def log_likelihood(x, model, n_steps=None):
    """Change-of-variables log-density of ``x`` under the model."""
    state = integrate(x, model, n_steps=n_steps)
    z = np.atleast_2d(state.z)
    ll = -0.5 * (z * z).sum(axis=1) - 0.5 * model.dim * math.log(2 * math.pi)
    ll = ll - np.atleast_1d(state.delta_logp) - np.log(model.data_scale).sum()
    return float(ll[0]) if np.ndim(x) == 1 else ll


# -- training ----------------------------------------------------------------

@dataclass
class TrainConfig:
    n_units: int = 32
    hidden_width: int = 32
    epochs: int = 400
    lr: float = 1e-2
    train_steps: int = 32
    n_steps: int = 64
    full_batch_max: int = 4096
    batch_size: int = 1024
    min_points: int = 32
    seed: int = 0


def init_model(data, config):
    """Untrained model with standardization fitted to ``data``."""
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[1] < 1:
        raise ValueError(f"data must be an N x d array, got shape {data.shape}")
    if len(data) < config.min_points:
        raise ValueError(f"need at least {config.min_points} points to train, got {len(data)}")
    if not np.all(np.isfinite(data)):
        raise ValueError("data contains non-finite values")
    scale = data.std(axis=0)
    scale[scale == 0] = 1.0
    return FlowModel(
        HyperNetwork.init(data.shape[1], config.n_units, config.hidden_width, config.seed),
        data_shift=data.mean(axis=0),
        data_scale=scale,
        n_steps=config.n_steps,
    )


def loss_and_grad(model, data, n_steps=None):
    """Mean negative log-likelihood and its gradient, flattened like ``hypernet.flat()``."""
    params = _torch_params(model.hypernet, requires_grad=True)
    loss = _nll(params, model, torch.as_tensor(np.asarray(data, dtype=float)), n_steps or model.n_steps)
    loss.backward()
    return float(loss.detach()), np.concatenate([p.grad.numpy().ravel() for p in params])


def mean_nll(model, data, n_steps=None):
    with torch.no_grad():
        return float(_nll(_torch_params(model.hypernet), model, torch.as_tensor(np.asarray(data, dtype=float)),
                          n_steps or model.n_steps))


def _snapshot(model, params, history):
    hypernet = HyperNetwork(*[p.detach().numpy().copy() for p in params],
                            n_units=model.n_units, dim=model.dim)
    return FlowModel(hypernet, model.data_shift, model.data_scale, model.n_steps,
                     model.t_start, model.t_end, list(history))


def train(data, config=None, callback=None):
    """Fit the flow by maximum likelihood with Adam on the hypernetwork weights.

    ``loss_history[e]`` is the training loss before update ``e``; the last
    entry is the loss of the returned parameters.
    """
    config = config or TrainConfig()
    model = init_model(data, config)
    x = torch.as_tensor(np.asarray(data, dtype=float))
    params = _torch_params(model.hypernet, requires_grad=True)
    opt = torch.optim.Adam(params, lr=config.lr)
    rng = np.random.Generator(np.random.PCG64(config.seed))
    n = len(x)
    history = []
    last_good = None
    for epoch in range(config.epochs):
        if n <= config.full_batch_max:
            batches = [None]
        else:
            order = rng.permutation(n)
            batches = [torch.as_tensor(order[i:i + config.batch_size]) for i in range(0, n, config.batch_size)]
        epoch_loss = 0.0
        for idx in batches:
            xb = x if idx is None else x[idx]
            opt.zero_grad()
            try:
                loss = _nll(params, model, xb, config.train_steps)
            except FlowDivergenceError:
                loss = torch.tensor(float("nan"))
            if not torch.isfinite(loss):
                raise TrainingDiverged(epoch, last_good or _snapshot(model, params, history))
            epoch_loss += float(loss.detach()) * len(xb) / n
            if idx is None:
                last_good = _snapshot(model, params, history + [float(loss.detach())])
            loss.backward()
            opt.step()
        history.append(epoch_loss)
        if callback is not None:
            callback(epoch, epoch_loss)
        log.debug("epoch %d loss %.6f", epoch, epoch_loss)
    final = _snapshot(model, params, history)
    try:
        final_loss = mean_nll(final, x.numpy(), config.train_steps)
    except FlowDivergenceError:
        final_loss = float("nan")
    if not math.isfinite(final_loss):
        raise TrainingDiverged(config.epochs, last_good)
    final.loss_history.append(final_loss)
    return final


# -- checkpoint ---------------------------------------------------------------

def save_checkpoint(model, path):
    """Write ``model`` as an ``.npz`` archive.

    Layout: ``version`` (str), ``dim``, ``n_units``, ``hidden_width``,
    ``n_steps`` (int64 scalars), ``t_span`` (2,), ``data_shift`` (d,),
    ``data_scale`` (d,), ``params`` (flat float64 vector in the order
    weights_in (H,1), bias_in (H,), weights_out (M(2d+1),H),
    bias_out (M(2d+1),), each row-major) and ``loss_history``.
    """
    with open(path, "wb") as fh:
        np.savez(
            fh,
            version=np.array(CHECKPOINT_VERSION),
            dim=np.int64(model.dim),
            n_units=np.int64(model.n_units),
            hidden_width=np.int64(model.hypernet.hidden_width),
            n_steps=np.int64(model.n_steps),
            t_span=np.array([model.t_start, model.t_end]),
            data_shift=model.data_shift,
            data_scale=model.data_scale,
            params=model.hypernet.flat(),
            loss_history=np.asarray(model.loss_history, dtype=float),
        )


def load_checkpoint(path):
    with np.load(path, allow_pickle=False) as f:
        version = str(f["version"])
        if version != CHECKPOINT_VERSION:
            raise InvalidModelError(f"unsupported checkpoint version {version!r}")
        dim, n_units, hidden = int(f["dim"]), int(f["n_units"]), int(f["hidden_width"])
        template = HyperNetwork.init(dim, n_units, hidden)
        t0, t1 = f["t_span"]
        return FlowModel(
            template.with_flat(f["params"]),
            data_shift=f["data_shift"],
            data_scale=f["data_scale"],
            n_steps=int(f["n_steps"]),
            t_start=float(t0),
            t_end=float(t1),
            loss_history=f["loss_history"].tolist(),
        )
