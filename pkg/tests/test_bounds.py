import numpy as np
import pytest

from pudqpgo.bounds import InvalidRegionError, compute_bounds
from pudqpgo.checks import check_bounds, random_graph, sample_in_ball
from pudqpgo.objective import EdgeFactors, PoseGraph, euclidean_gradient
from pudqpgo.pudq import IDENTITY


def identity_graph(n=4):
    X = np.tile(IDENTITY, (n, 1))
    I = np.arange(n - 1)
    return PoseGraph(X, I, I + 1, np.tile(IDENTITY, (n - 1, 1)), np.tile(np.eye(3), (n - 1, 1, 1)))


def test_identity_graph_constants():
    g = identity_graph(4)
    B = compute_bounds(g, np.sqrt(g.N + 1))
    assert B.t_x == pytest.approx(1.0)
    assert B.z_bar == pytest.approx(1.0)
    assert B.t_r == pytest.approx(4.0)
    assert B.e_bar == pytest.approx(np.pi / 2 * np.sqrt(17))
    assert B.z23 == 0.0
    for v in B.as_dict().values():
        assert np.isfinite(v) and v >= 0


def test_region_too_small():
    g = identity_graph(4)
    with pytest.raises(InvalidRegionError):
        compute_bounds(g, 1.9)
    compute_bounds(g, 2.0)  # T_bar^2 = N is the smallest valid region


def test_monotone_in_radius(rng):
    g = random_graph(rng, 6)
    prev = None
    for T in np.sqrt(g.N) * np.array([1.0, 1.5, 2.0, 4.0, 10.0]):
        B = compute_bounds(g, T).as_dict()
        if prev is not None:
            for k in B:
                assert B[k] >= prev[k] - 1e-12 * abs(prev[k]), k
        prev = B


def test_table_lists_every_constant(rng):
    B = compute_bounds(random_graph(rng, 4), 5.0)
    text = B.table()
    for k in ("L_g", "beta", "J_bar", "e_bar", "tau4"):
        assert k in text


def test_sampled_quantities_within_bounds(rng):
    g = random_graph(rng, 6, 1e-2)
    T = 2.0 * np.sqrt(g.N)
    B = compute_bounds(g, T)
    for _ in range(200):
        X = sample_in_ball(rng, g, T)
        assert np.linalg.norm(X) <= T * (1 + 1e-12)
        f = EdgeFactors(g, X)
        assert np.all(np.linalg.norm(f.e, axis=1) <= B.e_bar)
        assert np.all(np.linalg.norm(f.A, axis=(1, 2)) <= B.J_bar)
        assert np.all(np.linalg.norm(f.B, axis=(1, 2)) <= B.J_bar)
        blocks = np.concatenate([np.einsum("mka,mk->ma", f.A, f.Oe), np.einsum("mka,mk->ma", f.B, f.Oe)])
        assert np.all(np.abs(blocks[:, :2]) <= B.g_bar)


def test_operator_norms_within_bounds(rng):
    g = random_graph(rng, 5, 1e-2)
    _, results = check_bounds(g, 2.0 * np.sqrt(g.N), rng, points=5, tangents=100)
    for r in results:
        assert r.passed, r.line()
