import numpy as np
import pytest

from pudqpgo.checks import check_gradient, check_jacobians, check_tensors, check_hessian, general_jacobian, random_graph
from pudqpgo.manifold import exp_at, exp_identity, is_tangent, projector, random_point, random_tangent
from pudqpgo.objective import (
    EdgeFactors,
    HessianOperator,
    PoseGraph,
    RGNOperator,
    StructureError,
    cost,
    dense_operator,
    edge_jacobians,
    euclidean_gradient,
    hessian_tensors,
    residual,
    rgn_hessian_vec,
    riemannian_gradient,
    riemannian_hessian_vec,
)
from pudqpgo.pudq import IDENTITY, QL, QR, compose, from_euclidean, inverse

from conftest import chain_pairs, noiseless_graph


def single_edge(xi, xj, z, omega=None):
    X = np.array([xi, xj], dtype=float)
    Om = np.eye(3)[None] if omega is None else np.asarray(omega)[None]
    return PoseGraph(X, [0], [1], np.asarray(z, dtype=float)[None], Om, check=False)


def random_edge(rng, spread=0.4):
    xi = random_point(rng, None, 2.0)
    z = random_point(rng, None, 2.0)
    xj = compose(compose(xi, z), exp_identity(rng.normal(size=3) * spread))
    return xi, xj, z


# -- residual and cost ---------------------------------------------------------------


def test_residual_noiseless_edge(rng):
    xi, xj = random_point(rng, None, 2.0), random_point(rng, None, 2.0)
    g = single_edge(xi, xj, compose(inverse(xi), xj))
    r, e = residual(g, 0, 1)
    assert np.allclose(r, IDENTITY, atol=1e-12) or np.allclose(-r[:2], [1, 0], atol=1e-12)
    assert np.allclose(e, 0, atol=1e-12)


def test_residual_pure_rotation_measurement():
    z = np.array([np.cos(np.pi / 8), np.sin(np.pi / 8), 0, 0])
    g = single_edge(IDENTITY, IDENTITY, z)
    _, e = residual(g, 0, 1)
    assert np.allclose(e, [-np.pi / 8, 0, 0])


def test_residual_dual_form(rng):
    for _ in range(50):
        xi, xj, z = random_edge(rng)
        g = single_edge(xi, xj, z)
        r, _ = residual(g, 0, 1)
        alt = QR(xj) @ QL(inverse(z)) @ np.diag([1.0, -1, -1, -1]) @ xi
        assert np.allclose(r, alt, atol=1e-12)
        assert np.allclose(EdgeFactors(g).r[0], r, atol=1e-12)


def test_residual_unknown_edge(square_poses):
    g = noiseless_graph(square_poses, chain_pairs(4))
    with pytest.raises(KeyError):
        residual(g, 0, 3)


def test_cost_examples(rng, square_poses):
    g = noiseless_graph(square_poses, chain_pairs(4, [(3, 0)]))
    assert cost(g) == pytest.approx(0.0, abs=1e-24)
    z = exp_identity([0.1, 0.0, 0.0])
    g = single_edge(IDENTITY, IDENTITY, inverse(z))
    assert np.allclose(EdgeFactors(g).e[0], [0.1, 0, 0])
    assert cost(g) == pytest.approx(0.005, rel=1e-12)


def test_cost_gauge_invariance(rng, small_graph):
    F = cost(small_graph)
    for _ in range(10):
        y = random_point(rng, None, 3.0)
        X = compose(y, small_graph.vertices)
        assert abs(cost(small_graph, X) - F) < 1e-10 * max(F, 1.0)


def test_graph_validation(square_poses):
    with pytest.raises(StructureError):
        noiseless_graph(square_poses, [(0, 1), (2, 3)])
    Om = np.tile(-np.eye(3), (3, 1, 1))
    with pytest.raises(Exception):
        noiseless_graph(square_poses, chain_pairs(4), Om)


# -- closed-form Jacobian entries ------------------------------------------------------


def closed_form_scalars(xi, xj, z):
    z0, z1, z2, z3 = z
    a0, a1, a2, a3 = xi
    b0, b1, b2, b3 = xj
    s = dict(
        mu_i=z0 * b0 + z1 * b1,
        omega_i=-z1 * b0 + z0 * b1,
        eta_i=-z1 * b0 + z0 * b1,
        kappa_i=-z0 * b0 - z1 * b1,
        alpha_1=-z2 * b0 - z3 * b1 + z0 * b2 + z1 * b3,
        beta_1=z3 * b0 - z2 * b1 - z1 * b2 + z0 * b3,
        xi_1=-z0 * b0 + z1 * b1,
        zeta_1=-z1 * b0 - z0 * b1,
        alpha_2=-z3 * b0 + z2 * b1 - z1 * b2 + z0 * b3,
        beta_2=-z2 * b0 - z3 * b1 - z0 * b2 - z1 * b3,
        mu_j=z0 * a0 - z1 * a1,
        omega_j=z1 * a0 + z0 * a1,
        eta_j=-z1 * a0 - z0 * a1,
        kappa_j=z0 * a0 - z1 * a1,
        alpha_3=-z2 * a0 + z3 * a1 - z0 * a2 - z1 * a3,
        beta_3=-z3 * a0 - z2 * a1 + z1 * a2 - z0 * a3,
    )
    return s


def closed_form_jacobians(s, r, g, f1):
    r0, r1, r2, r3 = r
    ci = s["eta_i"] * r0 - s["mu_i"] * r1
    di = s["kappa_i"] * r0 - s["omega_i"] * r1
    cj = s["eta_j"] * r0 - s["mu_j"] * r1
    dj = s["kappa_j"] * r0 - s["omega_j"] * r1
    A = np.array([
        [s["eta_i"] / g + r1 * ci * f1, s["kappa_i"] / g + r1 * di * f1, 0.0, 0.0],
        [s["alpha_1"] / g + r2 * ci * f1, s["beta_1"] / g + r2 * di * f1, s["xi_1"] / g, s["zeta_1"] / g],
        [s["alpha_2"] / g + r3 * ci * f1, s["beta_2"] / g + r3 * di * f1, -s["zeta_1"] / g, s["xi_1"] / g],
    ])
    B = np.array([
        [s["eta_j"] / g + r1 * cj * f1, s["kappa_j"] / g + r1 * dj * f1, 0.0, 0.0],
        [s["alpha_3"] / g + r2 * cj * f1, s["beta_3"] / g + r2 * dj * f1, s["kappa_j"] / g, -s["eta_j"] / g],
        [s["beta_3"] / g + r3 * cj * f1, -s["alpha_3"] / g + r3 * dj * f1, s["eta_j"] / g, s["kappa_j"] / g],
    ])
    return A, B


def test_scratch_scalars_match_closed_forms(rng):
    for _ in range(50):
        xi, xj, z = random_edge(rng)
        f = EdgeFactors(single_edge(xi, xj, z))
        sc = f.scratch(0)
        ref = closed_form_scalars(xi, xj, z)
        for name, val in ref.items():
            assert sc[name] == pytest.approx(val, abs=1e-12), name
        assert sc["omega_i"] * sc["eta_i"] - sc["kappa_i"] * sc["mu_i"] == pytest.approx(np.sum(z[:2] ** 2) * np.sum(xj[:2] ** 2))


def test_jacobians_match_closed_forms(rng):
    for _ in range(50):
        xi, xj, z = random_edge(rng)
        g = single_edge(xi, xj, z)
        f = EdgeFactors(g)
        sc = f.scratch(0)
        A, B = closed_form_jacobians(closed_form_scalars(xi, xj, z), f.r[0], sc["gamma"], sc["f1"])
        Ag, Bg = edge_jacobians(g, 0, 1)
        assert np.max(np.abs(Ag - A)) < 1e-10
        assert np.max(np.abs(Bg - B)) < 1e-10
        assert np.all(Ag[0, 2:] == 0) and np.all(np.abs(Bg[0, 2:]) < 1e-15)


def test_jacobians_at_identity():
    g = single_edge(IDENTITY, IDENTITY, IDENTITY)
    sc = EdgeFactors(g).scratch(0)
    assert sc["gamma"] == 1.0 and sc["f1"] == 0.0
    A, B = edge_jacobians(g, 0, 1)
    assert A[0, 0] == pytest.approx(sc["eta_i"]) and A[0, 0] == 0.0
    assert A[1, 2] == pytest.approx(-1.0)
    assert np.allclose(A[:, 1:], -np.eye(3))
    assert np.allclose(B[:, 1:], np.eye(3))


def test_jacobians_finite_differences(rng):
    for _ in range(10):
        g = random_graph(rng, int(rng.integers(3, 8)), 1e-2)
        for res in check_jacobians(g, tol=1e-6):
            assert res.passed, res.line()


# -- closed-form second derivatives ----------------------------------------------------


def dA11_closed_forms(s, r, z, g, f1, f2):
    """Row 1 of A differentiated w.r.t. x_{i,0}, x_{i,1}, x_{j,0}, x_{j,1}; plus dA12/dx_{i,1}."""
    r0, r1 = r[0], r[1]
    z0, z1 = z[0], z[1]
    mi, wi, ei, ki = s["mu_i"], s["omega_i"], s["eta_i"], s["kappa_i"]
    mj, wj, ej, kj = s["mu_j"], s["omega_j"], s["eta_j"], s["kappa_j"]
    ci = ei * r0 - mi * r1
    di = ki * r0 - wi * r1
    cj = ej * r0 - mj * r1
    dj = kj * r0 - wj * r1
    d_xi0 = 2 * (ei - r1 * (mi * r0 + ei * r1)) * ci * f1 + r1 * ci**2 * f2
    d_xi1 = (ei * di + (ki - 2 * r1 * (wi * r0 + ki * r1)) * ci + r1) * f1 + r1 * ci * di * f2
    d_xj0 = (-z1 / g + (ei * cj + (ej - 2 * r1 * (mj * r0 + ej * r1)) * ci) * f1
             + r1 * (mj * ei - ej * mi - z1 * r0 - z0 * r1) * f1 + r1 * ci * cj * f2)
    d_xj1 = (z0 / g + (ei * dj + (kj - 2 * r1 * (wj * r0 + kj * r1)) * ci) * f1
             + r1 * (wj * ei - kj * mi + z0 * r0 - z1 * r1) * f1 + r1 * ci * dj * f2)
    dA12_xi1 = 2 * (ki - r1 * (wi * r0 + ki * r1)) * di * f1 + r1 * di**2 * f2
    return d_xi0, d_xi1, d_xj0, d_xj1, dA12_xi1


def test_tensor_entries_match_closed_forms(rng):
    for _ in range(50):
        xi, xj, z = random_edge(rng)
        f = EdgeFactors(single_edge(xi, xj, z))
        sc = f.scratch(0)
        T = f.tensors()[0]
        ref = dA11_closed_forms(closed_form_scalars(xi, xj, z), f.r[0], z, sc["gamma"], sc["f1"], sc["f2"])
        got = (T[0, 0, 0], T[0, 0, 1], T[0, 0, 4], T[0, 0, 5], T[0, 1, 1])
        assert np.allclose(got, ref, atol=1e-10)
        # A11 does not depend on the dual parts of either pose
        assert np.allclose(T[0, 0, [2, 3, 6, 7]], 0, atol=1e-14)


def test_tensors_match_general_form_derivative(rng):
    for _ in range(10):
        g = random_graph(rng, int(rng.integers(3, 8)), 1e-2)
        for res in check_tensors(g):
            assert res.passed, res.line()


def test_general_jacobian_agrees_on_manifold(rng, small_graph):
    f = EdgeFactors(small_graph)
    assert np.allclose(general_jacobian(small_graph, small_graph.vertices), f.jacobian(), atol=1e-12)


def test_hessian_bundle_symmetry(rng):
    for _ in range(20):
        g = random_graph(rng, 5, 1e-2)
        for (i, j) in zip(g.I, g.J):
            b = hessian_tensors(g, int(i), int(j))
            assert np.max(np.abs(b.h_ji - b.h_ij.T)) < 1e-10
            assert np.max(np.abs(b.h_ii - b.h_ii.T)) < 1e-10
            assert np.max(np.abs(b.h_jj - b.h_jj.T)) < 1e-10


def test_hessian_bundle_noiseless_edge(rng):
    xi, xj = random_point(rng, None, 2.0), random_point(rng, None, 2.0)
    W = np.diag([3.0, 1.0, 2.0])
    g = single_edge(xi, xj, compose(inverse(xi), xj), W)
    b = hessian_tensors(g, 0, 1)
    A, B = edge_jacobians(g, 0, 1)
    for C in (b.C_ii, b.C_ij, b.C_ji, b.C_jj):
        assert np.allclose(C, 0, atol=1e-12)
    assert np.allclose(b.h_ii, A.T @ W @ A, atol=1e-12)
    assert np.allclose(b.h_ij, A.T @ W @ B, atol=1e-12)


# -- gradients -----------------------------------------------------------------------------


def test_gradient_noiseless_is_zero(square_poses):
    g = noiseless_graph(square_poses, chain_pairs(4, [(3, 0)]))
    assert np.allclose(euclidean_gradient(g), 0, atol=1e-12)
    assert np.allclose(riemannian_gradient(g), 0, atol=1e-12)


def test_gradient_finite_differences(rng):
    for sw in (1e-4, 1e-2):
        for _ in range(5):
            g = random_graph(rng, int(rng.integers(2, 11)), sw)
            res = check_gradient(g)
            assert res.passed, res.line()


def test_single_edge_gradient_blocks(rng):
    xi, xj, z = random_edge(rng)
    W = np.diag([2.0, 1.0, 0.5])
    g = single_edge(xi, xj, z, W)
    f = EdgeFactors(g)
    G = euclidean_gradient(g)
    assert np.allclose(G[0], f.A[0].T @ W @ f.e[0], atol=1e-14)
    assert np.allclose(G[1], f.B[0].T @ W @ f.e[0], atol=1e-14)


def test_riemannian_gradient_tangent_and_anchored(rng, small_graph):
    R = riemannian_gradient(small_graph)
    assert np.all(R[small_graph.anchor] == 0)
    for x, v in zip(small_graph.vertices, R):
        assert is_tangent(x, v, 1e-12)


def test_directional_derivative(rng, small_graph):
    X = small_graph.vertices
    t = 1e-6
    for _ in range(5):
        v = random_tangent(rng, X)
        v[small_graph.anchor] = 0
        lhs = np.sum(riemannian_gradient(small_graph) * v)
        rhs = (cost(small_graph, exp_at(X, t * v)) - cost(small_graph, exp_at(X, -t * v))) / (2 * t)
        assert abs(lhs - rhs) <= 1e-5 * abs(rhs)


# -- Hessian operators ----------------------------------------------------------------------


def test_operators_zero_and_linear(rng, small_graph):
    X = small_graph.vertices
    v = random_tangent(rng, X)
    v[0] = 0
    for fn in (rgn_hessian_vec, riemannian_hessian_vec):
        assert np.allclose(fn(small_graph, np.zeros_like(X)), 0)
        assert np.allclose(fn(small_graph, 2.5 * v), 2.5 * fn(small_graph, v), rtol=1e-12, atol=1e-9)


def test_operators_symmetric_psd(rng):
    for _ in range(5):
        g = random_graph(rng, 6, 1e-2)
        f = EdgeFactors(g)
        Rd = dense_operator(RGNOperator(f), g.vertices, g.anchor)
        Hd = dense_operator(HessianOperator(f), g.vertices, g.anchor)
        assert np.max(np.abs(Rd - Rd.T)) <= 1e-9 * np.max(np.abs(Rd))
        assert np.max(np.abs(Hd - Hd.T)) <= 1e-9 * np.max(np.abs(Hd))
        assert np.min(np.linalg.eigvalsh(0.5 * (Rd + Rd.T))) >= -1e-10 * np.max(np.abs(Rd))


def test_rgn_rayleigh_nonnegative(rng, small_graph):
    X = small_graph.vertices
    R = RGNOperator(EdgeFactors(small_graph))
    for _ in range(1000):
        v = random_tangent(rng, X)
        v /= np.linalg.norm(v)
        assert np.sum(v * R(v)) >= -1e-10


def test_operators_agree_at_zero_residual(rng):
    X = random_point(rng, 6, 2.0)
    X[0] = IDENTITY
    g = noiseless_graph(X, chain_pairs(6, [(0, 3), (2, 5)]), np.array([np.diag([5.0, 1.0, 2.0])] * 7))
    for _ in range(10):
        v = random_tangent(rng, X)
        a, b = rgn_hessian_vec(g, v), riemannian_hessian_vec(g, v)
        assert np.max(np.abs(a - b)) <= 1e-9 * max(1.0, np.max(np.abs(a)))


def test_rgn_single_edge_sparsity(rng):
    xi, xj, z = random_edge(rng)
    W = np.diag([2.0, 1.0, 0.5])
    # a dummy third vertex carries the anchor so both edge endpoints are free
    X = np.array([xi, xj, IDENTITY])
    g = PoseGraph(X, [0, 1], [1, 2], np.array([z, compose(inverse(xj), IDENTITY)]), np.array([W, np.eye(3)]), anchor=2, check=False)
    f = EdgeFactors(g)
    v = np.zeros_like(X)
    v[0] = random_tangent(rng, xi)
    out = RGNOperator(f)(v)
    A, B = f.A[0], f.B[0]
    P0, P1 = projector(xi), projector(xj)
    assert np.allclose(out[0], P0 @ A.T @ W @ A @ P0 @ v[0], atol=1e-12)
    assert np.allclose(out[1], P1 @ B.T @ W @ A @ P0 @ v[0], atol=1e-12)
    assert np.all(out[2] == 0)


def test_hessian_vs_gradient_finite_differences(rng):
    for _ in range(5):
        g = random_graph(rng, 6, 1e-2)
        res = check_hessian(g, rng=rng, tol=1e-4)
        assert res.passed, res.line()
