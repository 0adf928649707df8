"""Initial guesses (odometry chaining, 2D chordal relaxation) and RPE metrics."""

import csv
import io
import json
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve, MatrixRankWarning

from .manifold import log_identity
from .objective import StructureError
from .pudq import IDENTITY, compose, from_euclidean, heading, inverse, normalize, rot2, translation, wrap_angle

log = logging.getLogger(__name__)


def gauge_to_anchor(X, anchor):
    """Left-compose every pose by x_a^-1 so that x_a becomes the identity."""
    X = np.asarray(X, dtype=float)
    out = compose(inverse(X[anchor]), X)
    out[anchor] = IDENTITY
    return out


def _odometry_edges(graph):
    """For each i, (edge index, forward?) of an edge joining i and i+1."""
    fwd = {}
    for k in range(graph.M):  # first edge in file order wins
        i, j = int(graph.I[k]), int(graph.J[k])
        if j == i + 1 and i not in fwd:
            fwd[i] = (k, True)
        elif i == j + 1 and j not in fwd:
            fwd[j] = (k, False)
    missing = [i for i in range(graph.N - 1) if i not in fwd]
    if missing:
        raise StructureError(f"no odometry edge between vertices {missing[0]} and {missing[0] + 1}")
    return fwd


def init_odometry(graph):
    """x_0 = identity, x_{i+1} = x_i + z_{i,i+1}; then re-anchored."""
    fwd = _odometry_edges(graph)
    X = np.zeros((graph.N, 4))
    X[0] = IDENTITY
    for i in range(graph.N - 1):
        k, forward = fwd[i]
        z = graph.Z[k] if forward else inverse(graph.Z[k])
        X[i + 1] = compose(X[i], z)
        if (i + 1) % 100 == 0:
            X[i + 1] = normalize(X[i + 1])
    return gauge_to_anchor(X, graph.anchor)


def _lstsq(A, b):
    """Sparse normal-equation solve; None when the system is singular."""
    import warnings

    AtA = (A.T @ A).tocsc()
    with warnings.catch_warnings():
        warnings.simplefilter("error", MatrixRankWarning)
        try:
            x = spsolve(AtA, A.T @ b)
        except (MatrixRankWarning, RuntimeError):
            return None
    if not np.all(np.isfinite(x)):
        return None
    return x


def init_chordal(graph):
    """2D chordal relaxation.

    Rotations as unconstrained 2-vectors r_i = (cos, sin): minimise
    sum ||r_j - R(theta_ij) r_i||^2 with r_anchor = (1, 0), normalise, then
    solve t_j - t_i = R(theta_i) t_ij in least squares with t_anchor = 0.
    Falls back to odometry when either system is singular.
    """
    N, M, a = graph.N, graph.M, graph.anchor
    I, J = graph.I, graph.J
    th = heading(graph.Z)
    c, s = np.cos(th), np.sin(th)
    tz = translation(graph.Z)
    free = np.array([k for k in range(N) if k != a])
    col = -np.ones(N, dtype=np.int64)
    col[free] = np.arange(free.size)
    nf = free.size

    # rotation rows: r_j - R r_i = 0, two per edge
    rows, cols, vals = [], [], []
    b = np.zeros(2 * M)
    anchor_r = np.array([1.0, 0.0])
    for k in range(M):
        i, j = I[k], J[k]
        R = np.array([[c[k], -s[k]], [s[k], c[k]]])
        for d in range(2):
            rr = 2 * k + d
            if col[j] >= 0:
                rows.append(rr)
                cols.append(2 * col[j] + d)
                vals.append(1.0)
            else:
                b[rr] -= anchor_r[d]
            if col[i] >= 0:
                for e in range(2):
                    rows.append(rr)
                    cols.append(2 * col[i] + e)
                    vals.append(-R[d, e])
            else:
                b[rr] += R[d] @ anchor_r
    A = sp.csr_matrix((vals, (rows, cols)), shape=(2 * M, 2 * nf))
    x = _lstsq(A, b)
    if x is None:
        log.warning("chordal rotation system is singular; falling back to odometry")
        return init_odometry(graph)
    r = np.tile(anchor_r, (N, 1))
    r[free] = x.reshape(-1, 2)
    nrm = np.linalg.norm(r, axis=1)
    if np.any(nrm < 1e-12):
        log.warning("degenerate chordal rotation estimate; falling back to odometry")
        return init_odometry(graph)
    theta = np.arctan2(r[:, 1], r[:, 0])
    theta[a] = 0.0

    # translations: t_j - t_i = R(theta_i) t_ij
    rows, cols, vals = [], [], []
    b = np.zeros(2 * M)
    for k in range(M):
        i, j = I[k], J[k]
        rhs = rot2(theta[i]) @ tz[k]
        for d in range(2):
            rr = 2 * k + d
            b[rr] = rhs[d]
            if col[j] >= 0:
                rows.append(rr)
                cols.append(2 * col[j] + d)
                vals.append(1.0)
            if col[i] >= 0:
                rows.append(rr)
                cols.append(2 * col[i] + d)
                vals.append(-1.0)
    A = sp.csr_matrix((vals, (rows, cols)), shape=(2 * M, 2 * nf))
    x = _lstsq(A, b)
    if x is None:
        log.warning("chordal translation system is singular; falling back to odometry")
        return init_odometry(graph)
    t = np.zeros((N, 2))
    t[free] = x.reshape(-1, 2)
    X = from_euclidean(np.column_stack([t, theta]))
    X[a] = IDENTITY
    return X


# -- metrics ------------------------------------------------------------------------------


def _edge_arrays(edges):
    if hasattr(edges, "I") and hasattr(edges, "J"):
        return np.asarray(edges.I), np.asarray(edges.J)
    E = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    return E[:, 0], E[:, 1]


def _check_same(est, gt):
    est = np.asarray(est, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if est.shape != gt.shape:
        raise ValueError(f"vertex count mismatch: {est.shape[0]} vs {gt.shape[0]}")
    return est, gt


def lie_errors(estimate, ground_truth, edges):
    est, gt = _check_same(estimate, ground_truth)
    I, J = _edge_arrays(edges)
    zh = compose(inverse(est[I]), est[J])
    zd = compose(inverse(gt[I]), gt[J])
    err = np.linalg.norm(log_identity(compose(inverse(zh), zd)), axis=1)
    # z^-1 + z is only the identity up to rounding; equal inputs give exactly 0
    return np.where(np.all(zh == zd, axis=1), 0.0, err)


def euclidean_errors(estimate, ground_truth, edges):
    """Per edge (||t_hat - t_gt||, d(theta_hat, theta_gt)) with frame-local translations."""
    est, gt = _check_same(estimate, ground_truth)
    I, J = _edge_arrays(edges)

    def rel(X):
        t = translation(X)
        th = heading(X)
        dt = t[J] - t[I]
        c, s = np.cos(th[I]), np.sin(th[I])
        local = np.column_stack([c * dt[:, 0] + s * dt[:, 1], -s * dt[:, 0] + c * dt[:, 1]])
        return local, th[J] - th[I]

    th_, ah = rel(est)
    td, ad = rel(gt)
    return np.linalg.norm(th_ - td, axis=1), np.abs(wrap_angle(ah - ad))


def rpe_lie(estimate, ground_truth, edges):
    e = lie_errors(estimate, ground_truth, edges)
    return float(np.sqrt(np.mean(e * e))) if e.size else 0.0


def rpe_euclidean(estimate, ground_truth, edges):
    dt, da = euclidean_errors(estimate, ground_truth, edges)
    return float(np.sqrt(np.mean(dt * dt + da * da))) if dt.size else 0.0


@dataclass
class RpeReport:
    rpe_l: float
    rpe_e: float
    per_edge: list = field(default_factory=list)

    def to_json(self):
        return json.dumps({"rpe_l": self.rpe_l, "rpe_e": self.rpe_e, "per_edge": self.per_edge}, indent=1)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["i", "j", "lie", "trans", "angle"])
        for r in self.per_edge:
            w.writerow([r["i"], r["j"], repr(r["lie"]), repr(r["trans"]), repr(r["angle"])])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text):
        rows = list(csv.DictReader(io.StringIO(text)))
        per = [dict(i=int(r["i"]), j=int(r["j"]), lie=float(r["lie"]), trans=float(r["trans"]), angle=float(r["angle"])) for r in rows]
        lie = np.array([p["lie"] for p in per])
        tr = np.array([p["trans"] for p in per])
        an = np.array([p["angle"] for p in per])
        if not per:
            return cls(0.0, 0.0, [])
        return cls(float(np.sqrt(np.mean(lie**2))), float(np.sqrt(np.mean(tr**2 + an**2))), per)


def rpe_report(estimate, ground_truth, edges):
    I, J = _edge_arrays(edges)
    E = np.column_stack([I, J])
    lie = lie_errors(estimate, ground_truth, E)
    dt, da = euclidean_errors(estimate, ground_truth, E)
    per = [dict(i=int(I[k]), j=int(J[k]), lie=float(lie[k]), trans=float(dt[k]), angle=float(da[k])) for k in range(I.size)]
    rl = float(np.sqrt(np.mean(lie**2))) if lie.size else 0.0
    re = float(np.sqrt(np.mean(dt**2 + da**2))) if dt.size else 0.0
    return RpeReport(rl, re, per)


def percent_reduction(baseline, value):
    """100 (baseline - value) / baseline; 0 when both are zero."""
    if baseline == 0:
        return 0.0
    return 100.0 * (baseline - value) / baseline
