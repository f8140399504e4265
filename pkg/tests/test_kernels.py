"""Parity between the numba kernels and their pure-numpy fallbacks."""

import numpy as np
import pytest

from proxilab import _kernels as k

SQUARE = np.array([[0.0, 0.0], [4.0, 0.0], [4.0, 4.0], [0.0, 4.0]])
L_SHAPE = np.array([[0.0, 0.0], [4.0, 0.0], [4.0, 2.0], [2.0, 2.0], [2.0, 4.0], [0.0, 4.0]])


def _interior_points(verts, n, seed):
    rng = np.random.default_rng(seed)
    xmin, ymin = verts.min(axis=0)
    xmax, ymax = verts.max(axis=0)
    xs = rng.uniform(xmin, xmax, size=4 * n)
    ys = rng.uniform(ymin, ymax, size=4 * n)
    inside = k._contains_numpy(xs, ys, verts[:, 0], verts[:, 1])
    return xs[inside][:n], ys[inside][:n]


@pytest.mark.parametrize("verts", [SQUARE, L_SHAPE], ids=["square", "l-shape"])
def test_ray_distances_paths_agree(verts):
    xs, ys = _interior_points(verts, 200, seed=0)
    loop = k._ray_distances_loop(xs, ys, verts[:, 0], verts[:, 1])
    vec = k._ray_distances_numpy(xs, ys, verts[:, 0], verts[:, 1])
    assert np.allclose(loop, vec, atol=1e-12)


@pytest.mark.parametrize("verts", [SQUARE, L_SHAPE], ids=["square", "l-shape"])
def test_contains_paths_agree(verts):
    rng = np.random.default_rng(1)
    xs = rng.uniform(-1, 5, size=500)
    ys = rng.uniform(-1, 5, size=500)
    loop = k._contains_loop(xs, ys, verts[:, 0], verts[:, 1])
    vec = k._contains_numpy(xs, ys, verts[:, 0], verts[:, 1])
    assert np.array_equal(loop, vec)


@pytest.mark.parametrize("verts", [SQUARE, L_SHAPE], ids=["square", "l-shape"])
def test_edge_distance_paths_agree(verts):
    rng = np.random.default_rng(2)
    xs = rng.uniform(-1, 5, size=300)
    ys = rng.uniform(-1, 5, size=300)
    loop = k._edge_distance_loop(xs, ys, verts[:, 0], verts[:, 1])
    vec = k._edge_distance_numpy(xs, ys, verts[:, 0], verts[:, 1])
    assert np.allclose(loop, vec, atol=1e-12)


def test_sf_scores_paths_agree():
    rng = np.random.default_rng(3)
    dist = rng.uniform(0.1, 5.0, size=1000)
    cos = rng.uniform(-1.0, 1.0, size=1000)
    loop = k._sf_scores_loop(90.0, 1.2, 0.4, 0.3, dist, cos)
    vec = k._sf_scores_numpy(90.0, 1.2, 0.4, 0.3, dist, cos)
    assert np.allclose(loop, vec, atol=1e-12)


def test_banded_filter_paths_agree_with_dense():
    from proxilab.nnmodel import SmoothingConfig, _savgol_operator

    op = _savgol_operator(101, SmoothingConfig(window=61, polyorder=1))
    dense = np.zeros((101, 101))
    for i in range(101):
        dense[i, op.starts[i] : op.starts[i] + op.widths[i]] = op.weights[i, : op.widths[i]]
    rng = np.random.default_rng(4)
    Q = rng.dirichlet(np.ones(101), size=40)
    expected = Q @ dense.T
    loop = k._banded_filter_loop(Q, op.weights, op.starts, op.widths)
    vec = k._banded_filter_numpy(Q, op.weights, op.starts, op.widths)
    assert np.allclose(loop, expected, atol=1e-14)
    assert np.allclose(vec, expected, atol=1e-14)


def test_active_path_selection():
    # whatever path is active, the public names resolve to one of the twins
    assert k.ray_distances in (k._ray_distances_loop, k._ray_distances_numpy)
    if k.USING_NUMBA:
        assert k.ray_distances is k._ray_distances_loop
    else:
        assert k.ray_distances is k._ray_distances_numpy
