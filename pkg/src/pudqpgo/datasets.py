"""Synthetic grid datasets, Wishart edge covariances, and graph file I/O.

Random streams: a numpy SeedSequence built from the seed is split into four
children (trajectory, loop closures, covariances, noise). The covariance and
noise children are split again into one stream per edge, so each edge's draw
does not depend on how many numbers other edges consumed.

Files:
  g2o_se2        VERTEX_SE2 id x y theta
                 EDGE_SE2 i j dx dy dtheta I11 I12 I13 I22 I23 I33
  extended_json  native, lossless; see save_graph for the schema
"""

import json
import logging
import os
import tempfile
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .manifold import exp_identity
from .objective import PoseGraph
from .pudq import (
    TangentCovariance,
    ValidationError,
    check_spd,
    compose,
    from_euclidean,
    inverse,
    to_euclidean,
    transform_information,
)

log = logging.getLogger(__name__)

FORMATS = ("g2o_se2", "extended_json")
JSON_FORMAT = "pudqpgo-extended"
JSON_VERSION = 1


class ParseError(ValueError):
    pass


@dataclass
class SynthConfig:
    n_vertices: int = 200
    grid_step: float = 1.0
    loop_closure_prob: float = 0.03
    loop_closure_radius: float = 2.0
    sigma_w: float = 1e-3
    wishart_dof: int = 10
    rng_seed: int = 0

    def __post_init__(self):
        if int(self.n_vertices) < 2:
            raise ValueError("n_vertices must be at least 2")
        if not 0.0 <= self.loop_closure_prob <= 1.0:
            raise ValueError("loop_closure_prob must lie in [0, 1]")
        if not self.sigma_w > 0:
            raise ValueError("sigma_w must be positive")
        if int(self.wishart_dof) < 3:
            raise ValueError("wishart_dof must be at least 3")
        if not self.grid_step > 0 or not self.loop_closure_radius >= 0:
            raise ValueError("grid_step must be positive and loop_closure_radius nonnegative")


@dataclass
class TrialDataset:
    ground_truth: np.ndarray
    graph: PoseGraph
    provenance: dict = field(default_factory=dict)


def _streams(seed):
    return np.random.SeedSequence(seed).spawn(4)


# -- trajectory -------------------------------------------------------------------


def _grid_poses(config, rng):
    n = int(config.n_vertices)
    p = np.zeros((n, 3))
    heading = 0  # quarter turns
    for i in range(1, n):
        th = heading * np.pi / 2
        p[i, 0] = p[i - 1, 0] + config.grid_step * np.cos(th)
        p[i, 1] = p[i - 1, 1] + config.grid_step * np.sin(th)
        heading = (heading + int(rng.integers(-1, 2))) % 4
        p[i, 2] = heading * np.pi / 2
    # snap to the grid so the axis-aligned structure is exact
    p[:, :2] = np.round(p[:, :2] / config.grid_step) * config.grid_step
    p[:, 2] = np.where(p[:, 2] > np.pi, p[:, 2] - 2 * np.pi, p[:, 2])
    return p


def synth_grid_trajectory(config):
    """Random axis-aligned walk: step grid_step forward, then turn by 0 or +-pi/2.

    Returns (N, 4) PUDQ poses with the first pose at the identity.
    """
    rng = np.random.default_rng(_streams(config.rng_seed)[0])
    return from_euclidean(_grid_poses(config, rng))


def loop_closures(positions, config, rng):
    """Pairs i < j-1 within loop_closure_radius, each kept with loop_closure_prob."""
    tree = cKDTree(positions)
    pairs = sorted(tree.query_pairs(config.loop_closure_radius + 1e-9))
    keep = []
    for i, j in pairs:
        if j - i > 1 and rng.random() < config.loop_closure_prob:
            keep.append((i, j))
    return keep


# -- covariances and noise -----------------------------------------------------------


def sample_sigma_w(rng):
    """Sigma_w = J_3 + diag(u) with u_i uniform on (0, 1]."""
    u = 1.0 - rng.random(3)
    return np.ones((3, 3)) + np.diag(u)


def sample_wishart_covariance(sigma_w, seed, Sigma_w=None, size=None, dof=10):
    """(Sigma_w, Sigma) with Sigma ~ W_3(sigma_w Sigma_w, dof) as a sum of outer products.

    ``seed`` may be an int, a SeedSequence or a Generator. With ``size`` the
    result is a (size, 3, 3) stack of independent draws.
    """
    if not sigma_w > 0:
        raise ValueError("sigma_w must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if Sigma_w is None:
        Sigma_w = sample_sigma_w(rng)
    L = np.linalg.cholesky(sigma_w * np.asarray(Sigma_w, dtype=float))
    shape = (1 if size is None else int(size), int(dof), 3)
    y = rng.standard_normal(shape) @ L.T
    S = np.einsum("smi,smj->sij", y, y)
    return Sigma_w, (S[0] if size is None else S)


def corrupt_edges(ground_truth, edges, covariances, seed, anchor=0, vertices=None):
    """PoseGraph with z_ij = x_i^-1 + x_j + Exp_1(eta), eta ~ N(0, Sigma_ij).

    ``edges`` is a sequence of (i, j); ``covariances`` (M, 3, 3) pudq-tangent
    covariances. One noise stream per edge is spawned from ``seed``.
    """
    X = np.asarray(ground_truth, dtype=float)
    E = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    S = np.asarray(covariances, dtype=float).reshape(-1, 3, 3)
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    kids = ss.spawn(E.shape[0])
    eta = np.zeros((E.shape[0], 3))
    Om = np.zeros_like(S)
    for k in range(E.shape[0]):
        try:
            L = np.linalg.cholesky(S[k])
        except np.linalg.LinAlgError:
            raise ValidationError(f"edge {k} ({E[k, 0]}, {E[k, 1]}): covariance is not positive definite")
        eta[k] = L @ np.random.default_rng(kids[k]).standard_normal(3)
        W = np.linalg.inv(S[k])
        Om[k] = 0.5 * (W + W.T)
    rel = compose(inverse(X[E[:, 0]]), X[E[:, 1]])
    Z = compose(rel, exp_identity(eta))
    v = X.copy() if vertices is None else vertices
    return PoseGraph(v, E[:, 0], E[:, 1], Z, Om, anchor=anchor)


def synth_dataset(config):
    """Grid trajectory, odometry + loop-closure edges, Wishart covariances, noisy measurements.

    The graph's vertices hold the odometry initial guess.
    """
    from .init_metrics import init_odometry

    s_traj, s_loop, s_cov, s_noise = _streams(config.rng_seed)
    p = _grid_poses(config, np.random.default_rng(s_traj))
    X = from_euclidean(p)
    n = X.shape[0]
    edges = [(i, i + 1) for i in range(n - 1)]
    edges += loop_closures(p[:, :2], config, np.random.default_rng(s_loop))
    cov_root, *cov_kids = s_cov.spawn(len(edges) + 1)
    Sigma_w = sample_sigma_w(np.random.default_rng(cov_root))
    S = np.array([sample_wishart_covariance(config.sigma_w, np.random.default_rng(c), Sigma_w, dof=config.wishart_dof)[1] for c in cov_kids])
    graph = corrupt_edges(X, edges, S, s_noise)
    graph.vertices = init_odometry(graph)
    prov = dict(generator="grid", config=asdict(config), sigma_w_matrix=Sigma_w.tolist(), n_edges=len(edges), n_loop_closures=len(edges) - (n - 1))
    return TrialDataset(ground_truth=X, graph=graph, provenance=prov)


# -- file I/O --------------------------------------------------------------------------


def _to_pudq_info(W, frame, theta):
    cov = TangentCovariance(W, frame, "information")
    return transform_information(cov, "pudq_tangent", theta).matrix


def _from_pudq_info(W, frame, theta):
    cov = TangentCovariance(W, "pudq_tangent", "information")
    return transform_information(cov, frame, theta).matrix


def parse_g2o(text, info_frame="euclidean"):
    """Parse g2o SE2 text. Returns (vertices (N,4), ids, I, J, Z, Omega, n_skipped)."""
    ids, poses = [], []
    raw_edges = []
    skipped = 0
    for ln, line in enumerate(text.splitlines(), start=1):
        tok = line.split()
        if not tok or tok[0].startswith("#"):
            continue
        tag = tok[0]
        try:
            if tag == "VERTEX_SE2":
                if len(tok) < 5:
                    raise ValueError("expected 4 fields")
                ids.append(int(tok[1]))
                poses.append([float(t) for t in tok[2:5]])
            elif tag == "EDGE_SE2":
                if len(tok) < 12:
                    raise ValueError("expected 11 fields")
                vals = [float(t) for t in tok[3:12]]
                raw_edges.append((ln, int(tok[1]), int(tok[2]), vals))
            else:
                skipped += 1
        except ValueError as err:
            raise ParseError(f"line {ln}: malformed {tag} record ({err})")
    if skipped:
        log.warning("skipped %d records with unknown tags", skipped)
    order = np.argsort(ids, kind="stable")
    ids_sorted = [ids[k] for k in order]
    if len(set(ids_sorted)) != len(ids_sorted):
        raise ParseError("duplicate vertex ids")
    index = {v: k for k, v in enumerate(ids_sorted)}
    P = np.array([poses[k] for k in order], dtype=float).reshape(-1, 3)
    I, J, Z, Om = [], [], [], []
    for ln, a, b, vals in raw_edges:
        if a not in index or b not in index:
            raise ParseError(f"line {ln}: edge refers to unknown vertex")
        dx, dy, dth, i11, i12, i13, i22, i23, i33 = vals
        W = np.array([[i11, i12, i13], [i12, i22, i23], [i13, i23, i33]])
        try:
            check_spd(W)
            W = _to_pudq_info(W, info_frame, dth)
        except ValidationError as err:
            raise ValidationError(f"edge ({a}, {b}) on line {ln}: {err}")
        I.append(index[a])
        J.append(index[b])
        Z.append(from_euclidean([dx, dy, dth]))
        Om.append(W)
    return from_euclidean(P), ids_sorted, np.array(I, dtype=np.int64), np.array(J, dtype=np.int64), np.array(Z).reshape(-1, 4), np.array(Om).reshape(-1, 3, 3), skipped


def format_g2o(graph, info_frame="euclidean", ids=None):
    ids = list(range(graph.N)) if ids is None else ids
    lines = []
    P = to_euclidean(graph.vertices)
    for k in range(graph.N):
        lines.append("VERTEX_SE2 %d %.17g %.17g %.17g" % (ids[k], *P[k]))
    D = to_euclidean(graph.Z)
    for k in range(graph.M):
        W = _from_pudq_info(graph.Omega[k], info_frame, D[k, 2])
        up = [W[0, 0], W[0, 1], W[0, 2], W[1, 1], W[1, 2], W[2, 2]]
        lines.append("EDGE_SE2 %d %d %.17g %.17g %.17g " % (ids[graph.I[k]], ids[graph.J[k]], *D[k]) + " ".join("%.17g" % v for v in up))
    return "\n".join(lines) + "\n"


def graph_to_json(graph, ground_truth=None, provenance=None):
    return {
        "format": JSON_FORMAT,
        "version": JSON_VERSION,
        "anchor": int(graph.anchor),
        "info_frame": "pudq_tangent",
        "vertices": graph.vertices.tolist(),
        "edges": [
            {"i": int(graph.I[k]), "j": int(graph.J[k]), "z": graph.Z[k].tolist(), "omega": graph.Omega[k].tolist()}
            for k in range(graph.M)
        ],
        "ground_truth": None if ground_truth is None else np.asarray(ground_truth, dtype=float).tolist(),
        "provenance": provenance or {},
    }


def graph_from_json(doc):
    if "version" not in doc:
        raise ParseError("extended_json document has no version field")
    if int(doc["version"]) != JSON_VERSION:
        raise ParseError(f"unsupported extended_json version {doc['version']}")
    try:
        E = doc["edges"]
        I = [int(e["i"]) for e in E]
        J = [int(e["j"]) for e in E]
        Z = np.array([e["z"] for e in E], dtype=float).reshape(-1, 4)
        Om = np.array([e["omega"] for e in E], dtype=float).reshape(-1, 3, 3)
        V = np.array(doc["vertices"], dtype=float).reshape(-1, 4)
    except (KeyError, TypeError, ValueError) as err:
        raise ParseError(f"malformed extended_json: {err}")
    for k in range(Om.shape[0]):
        try:
            check_spd(Om[k])
        except ValidationError as err:
            raise ValidationError(f"edge {k} ({I[k]}, {J[k]}): {err}")
    g = PoseGraph(V, I, J, Z, Om, anchor=int(doc.get("anchor", 0)))
    gt = doc.get("ground_truth")
    gt = None if gt is None else np.array(gt, dtype=float).reshape(-1, 4)
    return g, gt, doc.get("provenance", {})


def _write_atomic(path, text):
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_graph(graph, path, format="extended_json", ground_truth=None, provenance=None, info_frame="euclidean"):
    """Write a graph. extended_json schema:

    {"format": "pudqpgo-extended", "version": 1, "anchor": a,
     "info_frame": "pudq_tangent", "vertices": [[q0,q1,q2,q3], ...],
     "edges": [{"i": i, "j": j, "z": [4 floats], "omega": 3x3}, ...],
     "ground_truth": [[...], ...] or null, "provenance": {...}}

    g2o_se2 writes vertices and edges only, with information converted to
    ``info_frame``.
    """
    if format == "extended_json":
        text = json.dumps(graph_to_json(graph, ground_truth, provenance), indent=1)
    elif format == "g2o_se2":
        text = format_g2o(graph, info_frame)
    else:
        raise ValueError(f"unknown format {format!r}; expected one of {FORMATS}")
    _write_atomic(path, text)


def load_dataset(path, format=None, info_frame="euclidean"):
    """(graph, ground_truth or None, provenance dict)."""
    format = format or guess_format(path)
    with open(path) as fh:
        text = fh.read()
    if format == "extended_json":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as err:
            raise ParseError(f"line {err.lineno}: invalid JSON ({err.msg})")
        return graph_from_json(doc)
    if format == "g2o_se2":
        V, ids, I, J, Z, Om, skipped = parse_g2o(text, info_frame)
        return PoseGraph(V, I, J, Z, Om, anchor=0), None, {"source": os.path.basename(path), "ids": ids, "skipped": skipped, "info_frame": info_frame}
    raise ValueError(f"unknown format {format!r}; expected one of {FORMATS}")


def load_graph(path, format=None, info_frame="euclidean"):
    return load_dataset(path, format, info_frame)[0]


def guess_format(path):
    return "g2o_se2" if str(path).endswith(".g2o") else "extended_json"
