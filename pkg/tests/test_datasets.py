import json

import numpy as np
import pytest
from scipy import stats

from laminar.datasets import KINDS, DatasetSpec, generate, load_csv, save_csv


def test_uniform_disk():
    pts = generate(DatasetSpec("uniform_disk", 10_000, seed=1)).points
    r2 = (pts ** 2).sum(axis=1)
    assert r2.max() <= 1.0
    assert stats.kstest(r2, "uniform").statistic < 0.02


def test_identity_transform_matches_disk():
    a = generate(DatasetSpec("uniform_disk", 500, seed=4)).points
    cloud = generate(DatasetSpec("transformed_disk", 500, seed=4))
    assert a.tobytes() == cloud.points.tobytes()
    assert cloud.transform.kind == "identity"


def test_shear_ships_transform():
    spec = DatasetSpec("transformed_disk", 100, transform={"kind": "linear", "matrix": [[1, 1], [0, 1]]})
    cloud = generate(spec)
    disk = generate(DatasetSpec("uniform_disk", 100)).points
    np.testing.assert_allclose(cloud.points, disk @ np.array([[1, 1], [0, 1]]).T)
    np.testing.assert_allclose(cloud.transform.inverse(cloud.points), disk, atol=1e-14)


def test_two_moons_balanced():
    cloud = generate(DatasetSpec("two_moons", 2000, noise=0.1, seed=7))
    assert cloud.points.shape == (2000, 2)
    assert np.bincount(cloud.labels).tolist() == [1000, 1000]


@pytest.mark.parametrize("kind", KINDS)
def test_determinism(kind):
    a = generate(DatasetSpec(kind, 301, seed=12))
    b = generate(DatasetSpec(kind, 301, seed=12))
    c = generate(DatasetSpec(kind, 301, seed=13))
    assert a.points.tobytes() == b.points.tobytes()
    assert a.points.tobytes() != c.points.tobytes()
    assert len(a) == 301
    if kind in ("uniform_disk", "transformed_disk"):
        assert a.labels is None
    else:
        assert a.labels is not None and len(a.labels) == 301


def test_rng_is_pcg64_stream():
    # the disk radius comes from the first PCG64 uniform draw
    u = np.random.Generator(np.random.PCG64(0)).uniform(size=3)
    pts = generate(DatasetSpec("uniform_disk", 3, seed=0)).points
    np.testing.assert_allclose(np.linalg.norm(pts, axis=1), np.sqrt(u), rtol=1e-14)


def test_invalid_specs():
    with pytest.raises(ValueError):
        DatasetSpec("spiral")
    with pytest.raises(ValueError):
        DatasetSpec("two_moons", n_points=0)
    with pytest.raises(ValueError):
        generate(DatasetSpec("anisotropic_blobs", 10, centers=((0, 0),)))


def test_csv_roundtrip(tmp_path):
    spec = DatasetSpec("concentric_rings", 50, seed=2)
    cloud = generate(spec)
    path = tmp_path / "rings.csv"
    save_csv(cloud, path, spec)
    back = load_csv(path)
    assert back.points.tobytes() == cloud.points.tobytes()
    assert np.array_equal(back.labels, cloud.labels)
    assert path.read_text().splitlines()[0] == "x1,x2,label"
    sidecar = json.loads((tmp_path / "rings.csv.json").read_text())
    assert DatasetSpec.from_dict(sidecar) == spec
