"""Finite-difference oracles for the objective, its derivatives and the bounds.

Each check returns a CheckResult; ``run_checks`` bundles them for the CLI.
The oracles only use the cost, the residual map and central differences, so
they are independent of the closed-form derivative code they test.
"""

from dataclasses import dataclass

import numpy as np

from .manifold import exp_at, exp_identity, half_angle, inv_sinc, project_tangent, random_point, random_tangent
from .objective import (
    EdgeFactors,
    HessianOperator,
    PoseGraph,
    RGNOperator,
    dense_operator,
    euclidean_gradient,
    f1_of,
    riemannian_gradient,
)
from .pudq import QL, QR, compose, inverse

_C = np.diag([1.0, -1.0, -1.0, -1.0])


@dataclass
class CheckResult:
    name: str
    error: float
    tol: float
    where: str = ""

    @property
    def passed(self):
        return bool(np.isfinite(self.error) and self.error <= self.tol)

    def line(self):
        tag = "PASS" if self.passed else "FAIL"
        at = f"  worst at {self.where}" if self.where else ""
        return f"{tag}  {self.name:<28s} err={self.error:.3e}  tol={self.tol:.0e}{at}"


# -- random test graphs ----------------------------------------------------------


def random_spd(rng, scale=1.0, cond=20.0):
    Q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    ev = scale * np.exp(rng.uniform(0.0, np.log(cond), size=3))
    return (Q * ev) @ Q.T


def random_graph(rng, n=6, sigma_w=1e-2, loops=2, scale=2.0):
    """Small graph: odometry chain, a few random loop closures, noisy measurements."""
    X = random_point(rng, n, scale)
    X = compose(inverse(X[0]), X)
    X[0] = [1.0, 0.0, 0.0, 0.0]
    pairs = [(i, i + 1) for i in range(n - 1)]
    cand = [(i, j) for i in range(n) for j in range(i + 2, n)]
    if cand and loops:
        pick = rng.choice(len(cand), size=min(loops, len(cand)), replace=False)
        pairs += [cand[p] for p in sorted(pick)]
    I = np.array([p[0] for p in pairs])
    J = np.array([p[1] for p in pairs])
    noise = exp_identity(rng.normal(size=(I.size, 3)) * np.sqrt(sigma_w))
    Z = compose(compose(inverse(X[I]), X[J]), noise)
    Om = np.array([random_spd(rng, 1.0 / sigma_w) for _ in pairs])
    # start away from the optimum so the residuals are not tiny
    X0 = compose(X, exp_identity(rng.normal(size=(n, 3)) * 0.3))
    X0[0] = X[0]
    return PoseGraph(X0, I, J, Z, Om)


# -- oracles ---------------------------------------------------------------------------


def _rel(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12))


def edge_error_vectors(graph, X):
    """e_ij straight from the residual definition (ambient X, no normalisation)."""
    r = compose(compose(inverse(graph.Z), inverse(X[graph.I])), X[graph.J])
    return r[:, 1:4] * inv_sinc(half_angle(r))[:, None]


def _cost_direct(graph, X):
    e = edge_error_vectors(graph, X)
    return 0.5 * float(np.einsum("mk,mkl,ml->", e, graph.Omega, e))


def check_gradient(graph, X=None, h=1e-6, tol=1e-6):
    X = graph.vertices if X is None else np.asarray(X, dtype=float)
    g = euclidean_gradient(graph, X)
    fd = np.zeros_like(X)
    for idx in np.ndindex(*X.shape):
        Xp = X.copy()
        Xm = X.copy()
        Xp[idx] += h
        Xm[idx] -= h
        fd[idx] = (_cost_direct(graph, Xp) - _cost_direct(graph, Xm)) / (2.0 * h)
    err = np.abs(g - fd) / max(np.max(np.abs(fd)), 1e-12)
    w = np.unravel_index(np.argmax(err), err.shape)
    return CheckResult("euclidean gradient", float(err.max()), tol, f"x[{w[0]}][{w[1]}]")


def fd_jacobians(graph, X, h=1e-6):
    """(M, 3, 8) central-difference Jacobian of e_ij w.r.t. [x_i; x_j]."""
    M = graph.M
    out = np.zeros((M, 3, 8))
    for side, idx in ((0, graph.I), (1, graph.J)):
        for a in range(4):
            ep = np.zeros((M, 3))
            em = np.zeros((M, 3))
            for m in range(M):  # one edge at a time so shared vertices do not mix
                Xp = X.copy()
                Xm = X.copy()
                Xp[idx[m], a] += h
                Xm[idx[m], a] -= h
                ep[m] = edge_error_vectors(graph, Xp)[m]
                em[m] = edge_error_vectors(graph, Xm)[m]
            out[:, :, 4 * side + a] = (ep - em) / (2.0 * h)
    return out


def check_jacobians(graph, X=None, h=1e-6, tol=1e-5):
    X = graph.vertices if X is None else np.asarray(X, dtype=float)
    f = EdgeFactors(graph, X)
    J = f.jacobian()
    fd = fd_jacobians(graph, X, h)
    res = []
    for name, sl in (("A", slice(0, 4)), ("B", slice(4, 8))):
        a, b = J[:, :, sl], fd[:, :, sl]
        err = np.abs(a - b) / max(np.max(np.abs(b)), 1e-12)
        m, k, c = np.unravel_index(np.argmax(err), err.shape)
        res.append(CheckResult(f"jacobian {name}", float(err.max()), tol, f"edge {m} {name}[{k + 1},{c + 1}]"))
    return res


def general_jacobian(graph, X):
    """Jacobian of e without using q0^2 + q1^2 = 1, valid off the manifold too."""
    xi, xj = X[graph.I], X[graph.J]
    zinv = inverse(graph.Z)
    Qi = QR(xj) @ QL(zinv) @ _C
    Qj = QL(compose(zinv, inverse(xi)))
    r = np.einsum("mab,mb->ma", Qi, xi)
    D = np.concatenate([Qi, Qj], axis=2)
    phi = half_angle(r)
    n2 = r[:, 0] ** 2 + r[:, 1] ** 2
    dphi = (r[:, 0, None] * D[:, 1, :] - r[:, 1, None] * D[:, 0, :]) / n2[:, None]
    return D[:, 1:4, :] * inv_sinc(phi)[:, None, None] + r[:, 1:4, None] * (f1_of(phi)[:, None] * dphi)[:, None, :]


def fd_tensors(graph, X, h=1e-6):
    """(M, 3, 8, 8): T[m, k, a, b] = d/dy_b of the general Jacobian entry (k, a)."""
    M = graph.M
    out = np.zeros((M, 3, 8, 8))
    for side, idx in ((0, graph.I), (1, graph.J)):
        for b in range(4):
            for m in range(M):
                Xp = X.copy()
                Xm = X.copy()
                Xp[idx[m], b] += h
                Xm[idx[m], b] -= h
                out[m, :, :, 4 * side + b] = (general_jacobian(graph, Xp)[m] - general_jacobian(graph, Xm)[m]) / (2.0 * h)
    return out


_BLOCKS = {"dA/dxi": (slice(0, 4), slice(0, 4)), "dA/dxj": (slice(0, 4), slice(4, 8)),
           "dB/dxi": (slice(4, 8), slice(0, 4)), "dB/dxj": (slice(4, 8), slice(4, 8))}


def check_tensors(graph, X=None, h=1e-6, tol=1e-5):
    X = graph.vertices if X is None else np.asarray(X, dtype=float)
    T = EdgeFactors(graph, X).tensors()
    fd = fd_tensors(graph, X, h)
    scale = max(np.max(np.abs(fd)), 1e-12)
    res = []
    for name, (sa, sb) in _BLOCKS.items():
        err = np.abs(T[:, :, sa, sb] - fd[:, :, sa, sb]) / scale
        m, k, a, b = np.unravel_index(np.argmax(err), err.shape)
        res.append(CheckResult(f"tensor {name}", float(err.max()), tol, f"edge {m} slice {k + 1} [{a + 1},{b + 1}]"))
    return res


def _random_tangents(rng, graph, X, count):
    U = [random_tangent(rng, X) for _ in range(count)]
    for u in U:
        u[graph.anchor] = 0.0
    return U


def check_hessian(graph, X=None, rng=None, h=1e-5, tol=1e-5, count=3):
    """Riemannian Hessian vs P d/dt grad F(Exp(t u)) at t = 0."""
    X = graph.vertices if X is None else np.asarray(X, dtype=float)
    rng = np.random.default_rng(0) if rng is None else rng
    op = HessianOperator(EdgeFactors(graph, X))
    worst = 0.0
    for u in _random_tangents(rng, graph, X, count):
        gp = riemannian_gradient(graph, exp_at(X, h * u))
        gm = riemannian_gradient(graph, exp_at(X, -h * u))
        fd = project_tangent(X, (gp - gm) / (2.0 * h))
        fd[graph.anchor] = 0.0
        worst = max(worst, _rel(op(u), fd))
    return CheckResult("riemannian hessian", worst, tol)


def check_operators(graph, X=None, rng=None, count=20):
    """Self-adjointness of both operators and PSD of the RGN one."""
    X = graph.vertices if X is None else np.asarray(X, dtype=float)
    rng = np.random.default_rng(1) if rng is None else rng
    f = EdgeFactors(graph, X)
    R, H = RGNOperator(f), HessianOperator(f)
    U = _random_tangents(rng, graph, X, count)
    V = _random_tangents(rng, graph, X, count)
    sym_r = sym_h = 0.0
    ray = np.inf
    for u, v in zip(U, V):
        a, b = np.sum(u * R(v)), np.sum(R(u) * v)
        sym_r = max(sym_r, abs(a - b) / max(abs(a), abs(b), 1.0))
        a, b = np.sum(u * H(v)), np.sum(H(u) * v)
        sym_h = max(sym_h, abs(a - b) / max(abs(a), abs(b), 1.0))
        ray = min(ray, np.sum(u * R(u)) / np.sum(u * u))
    return [
        CheckResult("rgn self-adjoint", sym_r, 1e-9),
        CheckResult("hessian self-adjoint", sym_h, 1e-9),
        CheckResult("rgn psd (neg. rayleigh)", max(0.0, -ray), 1e-10),
    ]


def operator_norms(graph, X, rng, count=1000):
    """Max ||H u|| and ||R u|| over random unit tangents, plus the exact norms."""
    f = EdgeFactors(graph, X)
    R, H = RGNOperator(f), HessianOperator(f)
    hs = rs = 0.0
    for _ in range(count):
        u = random_tangent(rng, X)
        u[graph.anchor] = 0.0
        u /= np.linalg.norm(u)
        hs = max(hs, np.linalg.norm(H(u)))
        rs = max(rs, np.linalg.norm(R(u)))
    he = np.linalg.norm(dense_operator(H, X, graph.anchor), 2)
    re = np.linalg.norm(dense_operator(R, X, graph.anchor), 2)
    return hs, rs, he, re


def sample_in_ball(rng, graph, T_bar):
    """Random point of M^N with ||X||_2 <= T_bar (translations rescaled)."""
    N = graph.N
    X = random_point(rng, N, 1.0)
    X[graph.anchor] = [1.0, 0.0, 0.0, 0.0]
    budget = T_bar * T_bar - N
    d2 = float(np.sum(X[:, 2:] ** 2))
    target = rng.uniform(0.0, 1.0) * budget
    if d2 > 0:
        X[:, 2:] *= np.sqrt(target / d2)
    return X


def check_bounds(graph, T_bar, rng=None, points=20, tangents=200):
    from .bounds import compute_bounds

    rng = np.random.default_rng(2) if rng is None else rng
    B = compute_bounds(graph, T_bar)
    worst_h = worst_r = 0.0
    for _ in range(points):
        X = sample_in_ball(rng, graph, T_bar)
        hs, rs, he, re = operator_norms(graph, X, rng, tangents)
        worst_h = max(worst_h, hs, he)
        worst_r = max(worst_r, rs, re)
    return B, [
        CheckResult("hessian norm <= L_g", worst_h / B.L_g, 1.0),
        CheckResult("rgn norm <= beta", worst_r / B.beta, 1.0),
    ]


def run_checks(graph, X=None, rng=None):
    X = graph.vertices if X is None else np.asarray(X, dtype=float)
    rng = np.random.default_rng(0) if rng is None else rng
    out = [check_gradient(graph, X)]
    out += check_jacobians(graph, X)
    out += check_tensors(graph, X)
    out.append(check_hessian(graph, X, rng))
    out += check_operators(graph, X, rng)
    return out
