import itertools
import math

import numpy as np
import pytest

from mmot import bench, regmot
from mmot import tensor as tz


def test_synthetic_image():
    r, loc = bench.gen_synthetic_image(10, seed=4)
    assert r.shape == (100,) and loc.shape == (100, 2)
    assert r.sum() == pytest.approx(1, abs=1e-14) and r.min() > 0
    assert loc.min() == 0 and loc.max() == 1
    r2, _ = bench.gen_synthetic_image(10, seed=4)
    assert r.tobytes() == r2.tobytes()
    assert not np.array_equal(r, bench.gen_synthetic_image(10, seed=5)[0])
    with pytest.raises(ValueError):
        bench.gen_synthetic_image(1, seed=0)


def test_foreground_square():
    assert bench.square_side(10) == 3
    assert bench.square_side(5) == 2
    assert bench.square_side(2) == 1
    for seed in range(5):
        img, (top, left, s) = bench.synthetic_intensities(10, seed)
        assert s == 3 and 0 <= top <= 7 and 0 <= left <= 7
        mask = np.zeros((10, 10), bool)
        mask[top:top + s, left:left + s] = True
        assert img[~mask].max() <= 1 and img[mask].max() <= 50
        r, _ = bench.gen_synthetic_image(10, seed)
        np.testing.assert_allclose(r, img.reshape(-1) / img.sum(), rtol=1e-15)
    # over many seeds the square carries most of the mass
    frac = [bench.synthetic_intensities(10, s)[0] for s in range(20)]
    assert np.mean([f.max() > 1 for f in frac]) == 1


def test_philox_stream_pinned():
    # fixed-seed output of the counter-based generator; any change breaks saved traces
    img, square = bench.synthetic_intensities(3, seed=0)
    assert square == (0, 0, 1)
    assert img.reshape(-1)[:3].tolist() == [39.093805035669945, 0.47156538101528966, 0.0914196711073687]
    assert isinstance(bench.rng_for(0).bit_generator, np.random.Philox)


def brute_cost(pts, lam):
    m, n = len(pts), len(pts[0])
    C = np.zeros((n,) * m)
    for idx in itertools.product(range(n), repeat=m):
        xs = [np.atleast_1d(pts[k][idx[k]]) for k in range(m)]
        A = sum(lam[k] * xs[k] for k in range(m))
        C[idx] = sum(lam[k] / 2 * np.sum((xs[k] - A) ** 2) for k in range(m))
    return C


def test_barycenter_cost_examples(rng):
    same = [np.zeros((3, 2))] * 3
    np.testing.assert_array_equal(bench.barycenter_cost(same, [0.2, 0.3, 0.5]), 0)
    C = bench.barycenter_cost([[0.0], [1.0]], [0.5, 0.5])
    assert C.shape == (1, 1) and C[0, 0] == pytest.approx(1 / 8)
    pts = [rng.random((3, 2)) for _ in range(3)]
    lam = np.array([0.2, 0.5, 0.3])
    np.testing.assert_allclose(bench.barycenter_cost(pts, lam), brute_cost(pts, lam), atol=1e-14)
    shift = np.array([3.0, -1.0])
    np.testing.assert_allclose(bench.barycenter_cost([p + shift for p in pts], lam),
                               bench.barycenter_cost(pts, lam), atol=1e-12)
    with pytest.raises(ValueError):
        bench.barycenter_cost(pts, [0.5, 0.5, 0.5])


def test_barycenter_cost_symmetry(rng):
    pts = [rng.random((3, 2)) for _ in range(3)]
    lam = np.array([0.2, 0.5, 0.3])
    C = bench.barycenter_cost(pts, lam)
    perm = [2, 0, 1]
    Cp = bench.barycenter_cost([pts[k] for k in perm], lam[perm])
    np.testing.assert_allclose(Cp, np.transpose(C, perm), atol=1e-14)


def test_metric_d(rng):
    r = rng.dirichlet(np.ones(4), size=3)
    assert bench.metric_d(tz.outer(list(r)), r) == pytest.approx(0, abs=1e-15)
    q = rng.dirichlet(np.ones(4), size=3)
    assert bench.metric_d(tz.outer(list(q)), r) == pytest.approx(np.abs(q - r).sum(), abs=1e-14)
    inst = regmot.MotInstance(rng.random((4, 4, 4)), r)
    beta = rng.normal(size=(3, 4))
    X = regmot.plan(inst, 0.5, beta)
    assert bench.metric_d(X, r) == pytest.approx(regmot.residue(inst, 0.5, beta)[0], abs=1e-12)


def test_competitive_ratio():
    assert bench.competitive_ratio(0.3, 0.3) == 0
    assert bench.competitive_ratio(math.e * 0.1, 0.1) == pytest.approx(1)
    assert bench.competitive_ratio(0.2, 0.05) == pytest.approx(1.386294, abs=1e-6)
    with pytest.raises(ValueError):
        bench.competitive_ratio(0.0, 1.0)


def test_extract_barycenter(rng):
    pts = [rng.random((3, 2)) for _ in range(3)]
    lam = np.array([0.2, 0.5, 0.3])
    X = np.zeros((3, 3, 3))
    X[2, 0, 1] = 0.7
    cloud = bench.extract_barycenter(X, pts, lam)
    assert len(cloud) == 1 and cloud.weights[0] == 1
    np.testing.assert_allclose(cloud.locations[0], 0.2 * pts[0][2] + 0.5 * pts[1][0] + 0.3 * pts[2][1])
    # identical measures, diagonal plan
    common = rng.random((4, 2))
    w = rng.dirichlet(np.ones(4))
    D = np.zeros((4, 4, 4))
    D[np.arange(4), np.arange(4), np.arange(4)] = w
    cloud = bench.extract_barycenter(D, [common] * 3, np.full(3, 1 / 3))
    np.testing.assert_allclose(cloud.locations, common, atol=1e-15)
    np.testing.assert_allclose(cloud.weights, w, atol=1e-15)
    for _ in range(10):
        c = bench.extract_barycenter(rng.random((3, 3, 3)), pts, lam)
        assert c.weights.sum() == pytest.approx(1, abs=1e-12)
    with pytest.raises(ValueError):
        bench.extract_barycenter(np.zeros((3, 3, 3)), pts, lam)


def test_rasterize(rng):
    node = bench.PointCloud([[0.5, 0.25]], [1.0])
    img = bench.rasterize(node, 5)
    assert np.count_nonzero(img) == 1 and img[2, 1] == 1
    centre = bench.PointCloud([[0.125, 0.125]], [1.0])
    img = bench.rasterize(centre, 5)
    np.testing.assert_allclose(img[:2, :2], 0.25)
    cloud = bench.PointCloud(rng.random((200, 2)), rng.dirichlet(np.ones(200)))
    assert bench.rasterize(cloud, 17).sum() == pytest.approx(1, abs=1e-12)


def test_pgm(tmp_path):
    bench.write_pgm(tmp_path / "a.pgm", np.array([[0.0, 1.0], [0.5, 0.25]]))
    data = (tmp_path / "a.pgm").read_bytes()
    assert data.startswith(b"P5\n2 2\n255\n") and data[-4:] == bytes([0, 255, 128, 64])
