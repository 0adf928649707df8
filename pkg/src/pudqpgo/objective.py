"""Anisotropic pose-graph objective on M^N and its derivatives.

F(X) = sum_ij 1/2 e_ij^T Omega_ij e_ij with e_ij = Log_1(r_ij) and the
geodesic residual r_ij = z_ij^-1 + x_i^-1 + x_j.

All per-edge quantities are computed in one vectorized pass (EdgeFactors).
Jacobians A_ij = de/dx_i and B_ij = de/dx_j are the ambient (R^4) ones.
Product points and tangents are (N, 4) arrays; flatten for the 4N view.
"""

import numpy as np

from .pudq import QL, QR, check_spd, compose, inverse, is_unit, TangentCovariance
from .manifold import half_angle, inv_sinc, project_tangent, sinc

_C = np.diag([1.0, -1.0, -1.0, -1.0])
_PT = np.array([1.0, 1.0, 0.0, 0.0])
_TAYLOR = 1e-2


class StructureError(ValueError):
    pass


class PoseGraph:
    """Vertices, directed edges with PUDQ measurements, information matrices.

    vertices: (N, 4); edges given as index arrays I, J (M,), measurements
    Z (M, 4) and information Omega (M, 3, 3), all in the pudq_tangent frame.
    """

    def __init__(self, vertices, I, J, Z, Omega, anchor=0, check=True):
        self.vertices = np.array(vertices, dtype=float).reshape(-1, 4)
        self.I = np.asarray(I, dtype=np.int64).reshape(-1)
        self.J = np.asarray(J, dtype=np.int64).reshape(-1)
        self.Z = np.array(Z, dtype=float).reshape(-1, 4)
        Om = []
        for w in Omega:
            if isinstance(w, TangentCovariance):
                if w.frame != "pudq_tangent":
                    raise ValueError("information must be in the pudq_tangent frame; convert at load time")
                w = w.matrix if w.kind == "information" else np.linalg.inv(w.matrix)
            Om.append(np.asarray(w, dtype=float))
        self.Omega = np.array(Om).reshape(-1, 3, 3)
        self.anchor = int(anchor)
        if check:
            self.validate()

    @property
    def N(self):
        return self.vertices.shape[0]

    @property
    def M(self):
        return self.I.shape[0]

    def copy(self, vertices=None):
        v = self.vertices if vertices is None else vertices
        return PoseGraph(v.copy(), self.I.copy(), self.J.copy(), self.Z.copy(), self.Omega.copy(), self.anchor, check=False)

    def with_omega(self, Omega):
        return PoseGraph(self.vertices.copy(), self.I.copy(), self.J.copy(), self.Z.copy(), Omega, self.anchor, check=False)

    def validate(self):
        N, M = self.N, self.M
        if not (self.J.shape[0] == M and self.Z.shape[0] == M and self.Omega.shape[0] == M):
            raise StructureError("edge arrays have inconsistent lengths")
        if N < 1:
            raise StructureError("graph has no vertices")
        if not (0 <= self.anchor < N):
            raise StructureError(f"anchor {self.anchor} out of range")
        if M and (self.I.min() < 0 or self.J.min() < 0 or self.I.max() >= N or self.J.max() >= N):
            raise StructureError("edge refers to a missing vertex")
        if np.any(self.I == self.J):
            raise StructureError("self loops are not allowed")
        if not is_unit(self.vertices, 1e-9) or (M and not is_unit(self.Z, 1e-9)):
            raise StructureError("vertices and measurements must satisfy the unit constraint")
        for k in range(M):
            try:
                check_spd(self.Omega[k])
            except ValueError as err:
                raise type(err)(f"edge {k} ({self.I[k]}, {self.J[k]}): {err}")
        self.check_odometry()

    def check_odometry(self):
        """Every consecutive pair (i, i+1) must be joined by an edge, either way round."""
        have = set(zip(np.minimum(self.I, self.J).tolist(), np.maximum(self.I, self.J).tolist()))
        missing = [i for i in range(self.N - 1) if (i, i + 1) not in have]
        if missing:
            raise StructureError(f"odometry chain broken between vertices {missing[:5]}")

    def edge_index(self, i, j):
        hit = np.flatnonzero((self.I == i) & (self.J == j))
        if hit.size == 0:
            raise KeyError(f"no edge ({i}, {j})")
        return int(hit[0])

    def __repr__(self):
        return f"PoseGraph(N={self.N}, M={self.M}, anchor={self.anchor})"


# -- scalar special functions ---------------------------------------------------


def f1_of(phi):
    """f1 = d/dphi (phi / sin phi)."""
    phi = np.asarray(phi, dtype=float)
    small = np.abs(phi) < _TAYLOR
    p = np.where(small, 1.0, phi)
    s, c = np.sin(p), np.cos(p)
    direct = (s - p * c) / (s * s)
    p2 = phi * phi
    series = phi * (1.0 / 3.0 + p2 * (7.0 / 90.0 + p2 * (31.0 / 2520.0 + p2 * 127.0 / 75600.0)))
    return np.where(small, series, direct)


def f2_of(phi):
    """f2 = d^2/dphi^2 (phi / sin phi) = csc(phi)(phi - 2 cot(phi) + 2 phi cot(phi)^2)."""
    phi = np.asarray(phi, dtype=float)
    small = np.abs(phi) < _TAYLOR
    p = np.where(small, 1.0, phi)
    s, c = np.sin(p), np.cos(p)
    cot = c / s
    direct = (p - 2.0 * cot + 2.0 * p * cot * cot) / s
    p2 = phi * phi
    series = 1.0 / 3.0 + p2 * (7.0 / 30.0 + p2 * (31.0 / 504.0 + p2 * 889.0 / 75600.0))
    return np.where(small, series, direct)


# -- per-edge factors -------------------------------------------------------------


_SCRATCH_I = {
    "mu_i": (0, 0), "omega_i": (0, 1), "eta_i": (1, 0), "kappa_i": (1, 1),
    "alpha_1": (2, 0), "beta_1": (2, 1), "xi_1": (2, 2), "zeta_1": (2, 3),
    "alpha_2": (3, 0), "beta_2": (3, 1),
}
_SCRATCH_J = {
    "mu_j": (0, 0), "omega_j": (0, 1), "eta_j": (1, 0), "kappa_j": (1, 1),
    "alpha_3": (2, 0), "beta_3": (2, 1),
}


class EdgeFactors:
    """Residuals, Jacobians and scratch scalars for all edges at once.

    Shapes: r (M,4), e (M,3), A and B (M,3,4), Qi and Qj (M,4,4),
    phi, gamma, f1, f2 (M,). D = [Qi | Qj] is dr/d[x_i; x_j].
    """

    def __init__(self, graph, X=None):
        X = graph.vertices if X is None else np.asarray(X, dtype=float)
        self.graph = graph
        self.X = X
        xi, xj = X[graph.I], X[graph.J]
        zinv = inverse(graph.Z)
        self.Lz = QL(zinv) @ _C  # Q_L^{--}(z)
        self.Qi = QR(xj) @ self.Lz
        self.Qj = QL(compose(zinv, inverse(xi)))
        self.r = np.einsum("mab,mb->ma", self.Qi, xi)
        self.phi = half_angle(self.r)
        self.gamma = sinc(self.phi)
        self.ginv = inv_sinc(self.phi)
        self.f1 = f1_of(self.phi)
        self.f2 = f2_of(self.phi)
        self.e = self.r[:, 1:4] * self.ginv[:, None]
        D = np.concatenate([self.Qi, self.Qj], axis=2)
        self.D = D
        r0, r1 = self.r[:, 0], self.r[:, 1]
        # d(phi)/d[x_i; x_j] with r0^2 + r1^2 = 1 on the manifold
        self.dphi = r0[:, None] * D[:, 1, :] - r1[:, None] * D[:, 0, :]
        J = D[:, 1:4, :] * self.ginv[:, None, None] + self.r[:, 1:4, None] * (self.f1[:, None] * self.dphi)[:, None, :]
        self.A = J[:, :, 0:4]
        self.B = J[:, :, 4:8]
        self.Oe = np.einsum("mkl,ml->mk", graph.Omega, self.e)

    @property
    def M(self):
        return self.r.shape[0]

    def jacobian(self):
        return np.concatenate([self.A, self.B], axis=2)

    def scratch(self, k):
        """Named scalars of edge k (entries of Q_i and Q_j plus r, gamma, f1, f2)."""
        out = {name: float(self.Qi[k][rc]) for name, rc in _SCRATCH_I.items()}
        out.update({name: float(self.Qj[k][rc]) for name, rc in _SCRATCH_J.items()})
        out.update({f"r{m}": float(self.r[k, m]) for m in range(4)})
        out.update(gamma=float(self.gamma[k]), phi_r=float(self.phi[k]), f1=float(self.f1[k]), f2=float(self.f2[k]))
        return out

    def costs(self):
        return 0.5 * np.einsum("mk,mk->m", self.e, self.Oe)

    def cost(self):
        return float(np.sum(self.costs()))

    def tensors(self, idx=None):
        """Second derivatives T[m, k, a, b] = d^2 e_k / dy_a dy_b, y = [x_i; x_j].

        Exact at points of M^N (r0^2 + r1^2 = 1 substituted after
        differentiating). Only the cross blocks of d^2 r are nonzero since r
        is bilinear in (x_i, x_j).
        """
        sl = slice(None) if idx is None else idx
        D = self.D[sl]
        r = self.r[sl]
        Lz = self.Lz[sl]
        dphi = self.dphi[sl]
        ginv, f1, f2 = self.ginv[sl], self.f1[sl], self.f2[sl]
        M = D.shape[0]
        D2 = np.zeros((M, 4, 8, 8))
        for b in range(4):
            eb = np.zeros(4)
            eb[b] = 1.0
            blk = QR(eb) @ Lz  # d Q_i / d x_{j,b}
            D2[:, :, 0:4, 4 + b] = blk
            D2[:, :, 4 + b, 0:4] = blk
        r0, r1 = r[:, 0], r[:, 1]
        d0, d1 = D[:, 0, :], D[:, 1, :]
        phi_ab = (
            d0[:, None, :] * d1[:, :, None]
            - d1[:, None, :] * d0[:, :, None]
            + r0[:, None, None] * D2[:, 1] - r1[:, None, None] * D2[:, 0]
            - 2.0 * dphi[:, :, None] * (r0[:, None] * d0 + r1[:, None] * d1)[:, None, :]
        )
        pp = dphi[:, :, None] * dphi[:, None, :]
        Dk = D[:, 1:4, :]
        T = (
            D2[:, 1:4] * ginv[:, None, None, None]
            + f1[:, None, None, None] * (Dk[:, :, :, None] * dphi[:, None, None, :] + Dk[:, :, None, :] * dphi[:, None, :, None])
            + r[:, 1:4, None, None] * (f2[:, None, None, None] * pp[:, None] + f1[:, None, None, None] * phi_ab[:, None])
        )
        return T

    def euclidean_hessians(self, idx=None):
        """Per-edge 8x8 Euclidean Hessian blocks J^T Omega J + sum_k (Omega e)_k T_k."""
        sl = slice(None) if idx is None else idx
        J = np.concatenate([self.A[sl], self.B[sl]], axis=2)
        Om = self.graph.Omega[sl]
        T = self.tensors(idx)
        return np.einsum("mka,mkl,mlb->mab", J, Om, J) + np.einsum("mkab,mk->mab", T, self.Oe[sl])


class HessianTensorBundle:
    """Tensor slices, curvature terms C and Euclidean Hessian blocks h of one edge.

    Tensor layout: dA_dxi[k, m, l] = d A[k, m] / d x_{i, l}.
    """

    def __init__(self, T, A, B, Omega, e):
        self.dA_dxi = T[:, 0:4, 0:4]
        self.dA_dxj = T[:, 0:4, 4:8]
        self.dB_dxi = T[:, 4:8, 0:4]
        self.dB_dxj = T[:, 4:8, 4:8]
        w = Omega @ e
        self.C_ii = np.einsum("kml,k->ml", self.dA_dxi, w)
        self.C_ij = np.einsum("kml,k->ml", self.dA_dxj, w)
        self.C_ji = np.einsum("kml,k->ml", self.dB_dxi, w)
        self.C_jj = np.einsum("kml,k->ml", self.dB_dxj, w)
        self.h_ii = self.C_ii + A.T @ Omega @ A
        self.h_ij = self.C_ij + A.T @ Omega @ B
        self.h_ji = self.C_ji + B.T @ Omega @ A
        self.h_jj = self.C_jj + B.T @ Omega @ B

    def matrix(self):
        return np.block([[self.h_ii, self.h_ij], [self.h_ji, self.h_jj]])


# -- public operations ----------------------------------------------------------


def edge_factors(graph, X=None):
    return EdgeFactors(graph, X)


def residual(graph, i, j, X=None):
    """(r_ij, e_ij) for the edge (i, j)."""
    X = graph.vertices if X is None else np.asarray(X, dtype=float)
    k = graph.edge_index(i, j)
    from .manifold import log_identity

    r = compose(compose(inverse(graph.Z[k]), inverse(X[i])), X[j])
    return r, log_identity(r)


def cost(graph, X=None):
    return EdgeFactors(graph, X).cost()


def edge_jacobians(graph, i, j, X=None):
    k = graph.edge_index(i, j)
    f = EdgeFactors(graph, X)
    return f.A[k].copy(), f.B[k].copy()


def hessian_tensors(graph, i, j, X=None):
    k = graph.edge_index(i, j)
    f = EdgeFactors(graph, X)
    T = f.tensors(slice(k, k + 1))[0]
    return HessianTensorBundle(T, f.A[k], f.B[k], graph.Omega[k], f.e[k])


def _scatter(N, idx, vals):
    """Deterministic sum of rows of vals into N bins (fixed edge order)."""
    out = np.empty((N, vals.shape[1]))
    for c in range(vals.shape[1]):
        out[:, c] = np.bincount(idx, weights=vals[:, c], minlength=N)
    return out


def _gradient_from(f, N):
    gi = np.einsum("mka,mk->ma", f.A, f.Oe)
    gj = np.einsum("mka,mk->ma", f.B, f.Oe)
    return _scatter(N, f.graph.I, gi) + _scatter(N, f.graph.J, gj)


def euclidean_gradient(graph, X=None, factors=None):
    """Ambient gradient of F as an (N, 4) array (no anchoring, no projection)."""
    f = factors if factors is not None else EdgeFactors(graph, X)
    return _gradient_from(f, graph.N)


def riemannian_gradient(graph, X=None, factors=None):
    f = factors if factors is not None else EdgeFactors(graph, X)
    g = project_tangent(f.X, _gradient_from(f, graph.N))
    g[graph.anchor] = 0.0
    return g


def _anchored(graph, X, V):
    V = project_tangent(X, np.asarray(V, dtype=float).reshape(-1, 4))
    V[graph.anchor] = 0.0
    return V


def rgn_hessian_vec(graph, V, X=None, factors=None):
    """Gauss-Newton product sum_ij P R_ij P V with R_ij = [A B]^T Omega [A B]."""
    f = factors if factors is not None else EdgeFactors(graph, X)
    return RGNOperator(f)(V)


def riemannian_hessian_vec(graph, V, X=None, factors=None):
    """Full Riemannian Hessian product P d^2F V + Weingarten(V, P_perp dF)."""
    f = factors if factors is not None else EdgeFactors(graph, X)
    return HessianOperator(f)(V)


class RGNOperator:
    """Matrix-free Gauss-Newton operator at a fixed iterate."""

    def __init__(self, factors):
        self.f = factors
        g = factors.graph
        self.graph = g
        self.X = factors.X
        self._OA = np.einsum("mkl,mla->mka", g.Omega, factors.A)
        self._OB = np.einsum("mkl,mla->mka", g.Omega, factors.B)

    def __call__(self, V):
        g, f = self.graph, self.f
        U = _anchored(g, self.X, V)
        ui, uj = U[g.I], U[g.J]
        w = np.einsum("mka,ma->mk", self._OA, ui) + np.einsum("mka,ma->mk", self._OB, uj)
        out = _scatter(g.N, g.I, np.einsum("mka,mk->ma", f.A, w)) + _scatter(g.N, g.J, np.einsum("mka,mk->ma", f.B, w))
        return _anchored(g, self.X, out)


class HessianOperator:
    """Matrix-free exact Riemannian Hessian at a fixed iterate."""

    def __init__(self, factors):
        self.f = factors
        g = factors.graph
        self.graph = g
        self.X = factors.X
        self.H8 = factors.euclidean_hessians()
        egrad = _gradient_from(factors, g.N)
        X = self.X
        self._c = X[:, 0] * egrad[:, 0] + X[:, 1] * egrad[:, 1]

    def __call__(self, V):
        g = self.graph
        U = _anchored(g, self.X, V)
        y = np.concatenate([U[g.I], U[g.J]], axis=1)
        hy = np.einsum("mab,mb->ma", self.H8, y)
        out = _scatter(g.N, g.I, hy[:, 0:4]) + _scatter(g.N, g.J, hy[:, 4:8])
        out = out - (U * _PT) * self._c[:, None]
        return _anchored(g, self.X, out)


def dense_operator(op, X, anchor):
    """Dense 4N x 4N matrix of a tangent operator (small graphs, tests)."""
    N = X.shape[0]
    H = np.zeros((4 * N, 4 * N))
    for c in range(4 * N):
        v = np.zeros(4 * N)
        v[c] = 1.0
        H[:, c] = op(v.reshape(N, 4)).reshape(-1)
    return H
