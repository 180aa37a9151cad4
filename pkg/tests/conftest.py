import numpy as np
import pytest

from laminar.flow import FlowModel, HyperNetwork, TrainConfig, train

ACCEPTANCE_LINES = []


def constant_model(u, w, b, n_steps=16):
    """Model whose hypernetwork ignores time and emits fixed planar units."""
    u = np.atleast_2d(np.asarray(u, dtype=float))
    w = np.atleast_2d(np.asarray(w, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    m, d = u.shape
    hidden = 2
    out = np.column_stack([u, w, b]).ravel()
    net = HyperNetwork(np.zeros((hidden, 1)), np.zeros(hidden), np.zeros((out.size, hidden)), out, m, d)
    return FlowModel(net, np.zeros(d), np.ones(d), n_steps=n_steps)


def random_model(seed, dim=2, n_units=8, hidden_width=8, out_scale=0.5, n_steps=32):
    rng = np.random.default_rng(seed)
    net = HyperNetwork.init(dim, n_units, hidden_width, seed=seed, out_scale=out_scale)
    return FlowModel(net, rng.normal(size=dim), rng.uniform(0.5, 2.0, dim), n_steps=n_steps)


@pytest.fixture(scope="session")
def blob_data():
    rng = np.random.default_rng(3)
    cov = np.array([[1.0, 0.6], [0.6, 0.5]])
    pts = rng.multivariate_normal([1.0, -2.0], cov, size=300)
    pts[:, 1] += 0.3 * (pts[:, 0] - 1.0) ** 2  # mild banana so the flow has something to learn
    return pts


@pytest.fixture(scope="session")
def trained_small(blob_data):
    cfg = TrainConfig(n_units=8, hidden_width=16, epochs=60, train_steps=16, n_steps=32, seed=5)
    return train(blob_data, cfg)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
