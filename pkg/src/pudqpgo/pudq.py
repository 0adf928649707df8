"""Planar unit dual quaternions (PUDQ).

A pose is stored as a 4-vector x = [q0, q1, q2, q3]. The rotation part
[q0, q1] = [cos(phi), sin(phi)] carries the half angle phi = theta/2 and the
dual part [q2, q3] = 1/2 R(phi) t couples the translation to the half-angle
rotation. Every function here broadcasts over leading axes, so an (N, 4)
array is a stack of N poses.
"""

import numpy as np

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])
_CONJ = np.array([1.0, -1.0, -1.0, -1.0])

# frame permutation between the (x, y, theta) ordering and the PUDQ tangent
# ordering (k, eps*i, eps*j)
B_P = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])

FRAMES = ("pudq_tangent", "se2_algebra", "euclidean")


class ValidationError(ValueError):
    pass


def identity(n=None):
    if n is None:
        return IDENTITY.copy()
    return np.tile(IDENTITY, (n, 1))


def unit_residual(x):
    """h(x) = q0^2 + q1^2 - 1, the defining function of the manifold."""
    x = np.asarray(x, dtype=float)
    return x[..., 0] ** 2 + x[..., 1] ** 2 - 1.0


def is_unit(x, tol=1e-9):
    return bool(np.all(np.abs(unit_residual(x)) <= tol))


def compose(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    x0, x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2], x[..., 3]
    y0, y1, y2, y3 = y[..., 0], y[..., 1], y[..., 2], y[..., 3]
    return np.stack(
        [
            x0 * y0 - x1 * y1,
            x0 * y1 + x1 * y0,
            x0 * y2 - x1 * y3 + x2 * y0 + x3 * y1,
            x0 * y3 + x1 * y2 - x2 * y1 + x3 * y0,
        ],
        axis=-1,
    )


def compose_chain(*xs):
    out = xs[0]
    for x in xs[1:]:
        out = compose(out, x)
    return out


def inverse(x):
    return np.asarray(x, dtype=float) * _CONJ


def normalize(x):
    """Project onto the manifold: rescale the rotation part to unit length.

    The dual part is rotated along so that the encoded translation is kept.
    Used for drift control after long composition chains.
    """
    x = np.array(x, dtype=float)
    t = translation(x)
    n = np.hypot(x[..., 0], x[..., 1])
    x[..., 0] /= n
    x[..., 1] /= n
    c, s = x[..., 0], x[..., 1]
    x[..., 2] = 0.5 * (c * t[..., 0] + s * t[..., 1])
    x[..., 3] = 0.5 * (-s * t[..., 0] + c * t[..., 1])
    return x


def same_pose(x, y, tol=1e-9):
    """Pose equality up to the double cover (x and -x are one motion)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d1 = np.max(np.abs(x - y), axis=-1)
    d2 = np.max(np.abs(x + y), axis=-1)
    return bool(np.all(np.minimum(d1, d2) <= tol))


# -- composition matrices ----------------------------------------------------


def _QL(x):
    x = np.asarray(x, dtype=float)
    x0, x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2], x[..., 3]
    z = np.zeros_like(x0)
    rows = [
        [x0, -x1, z, z],
        [x1, x0, z, z],
        [x2, x3, x0, -x1],
        [x3, -x2, x1, x0],
    ]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


def _QR(y):
    y = np.asarray(y, dtype=float)
    y0, y1, y2, y3 = y[..., 0], y[..., 1], y[..., 2], y[..., 3]
    z = np.zeros_like(y0)
    rows = [
        [y0, -y1, z, z],
        [y1, y0, z, z],
        [y2, -y3, y0, y1],
        [y3, y2, -y1, y0],
    ]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


_C = np.diag(_CONJ)

# kind -> builder; the comment gives what M(x) @ y (or M(y) @ x) computes
_KINDS = {
    "L": _QL,  # Q_L(x) y = x + y
    "R": _QR,  # Q_R(y) x = x + y
    "LL-": lambda x: _QL(inverse(x)),  # x^-1 + y
    "RR-": lambda y: _QR(inverse(y)),  # x + y^-1, as a map of x
    "RL-": lambda x: _QL(x) @ _C,  # x + y^-1, as a map of y
    "LR-": lambda y: _QR(y) @ _C,  # x^-1 + y, as a map of x
    "L--": lambda x: _QL(inverse(x)) @ _C,  # x^-1 + y^-1, as a map of y
    "R--": lambda y: _QR(inverse(y)) @ _C,  # x^-1 + y^-1, as a map of x
}


def composition_matrix(x, kind):
    """4x4 matrix form of composition. ``kind`` is one of
    L, R, LL-, RR-, RL-, LR-, L--, R-- (a superscript minus is written '-')."""
    try:
        build = _KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown composition kind {kind!r}; expected one of {sorted(_KINDS)}")
    return build(x)


def QL(x):
    return _QL(x)


def QR(y):
    return _QR(y)


# -- conversions ---------------------------------------------------------------


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    a = np.asarray(a, dtype=float)
    w = np.mod(a + np.pi, 2.0 * np.pi) - np.pi
    return np.where(w == -np.pi, np.pi, w)


def rot2(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def from_euclidean(p):
    """(tx, ty, theta) -> PUDQ. Broadcasts over leading axes."""
    p = np.asarray(p, dtype=float)
    tx, ty, th = p[..., 0], p[..., 1], p[..., 2]
    c, s = np.cos(0.5 * th), np.sin(0.5 * th)
    return np.stack([c, s, 0.5 * (c * tx + s * ty), 0.5 * (-s * tx + c * ty)], axis=-1)


def translation(x):
    """Translation t encoded by x (t = 2 R(phi)^T x_d)."""
    x = np.asarray(x, dtype=float)
    c, s, d2, d3 = x[..., 0], x[..., 1], x[..., 2], x[..., 3]
    return np.stack([2.0 * (c * d2 - s * d3), 2.0 * (s * d2 + c * d3)], axis=-1)


def heading(x):
    """Full rotation angle theta in (-pi, pi], via atan2(2 q0 q1, q0^2 - q1^2)."""
    x = np.asarray(x, dtype=float)
    q0, q1 = x[..., 0], x[..., 1]
    return wrap_angle(np.arctan2(2.0 * q0 * q1, q0 * q0 - q1 * q1))


def to_euclidean(x):
    x = np.asarray(x, dtype=float)
    t = translation(x)
    return np.concatenate([t, heading(x)[..., None]], axis=-1)


def to_se2(x):
    p = to_euclidean(x)
    th = p[..., 2]
    c, s = np.cos(th), np.sin(th)
    T = np.zeros(p.shape[:-1] + (3, 3))
    T[..., 0, 0] = c
    T[..., 0, 1] = -s
    T[..., 1, 0] = s
    T[..., 1, 1] = c
    T[..., 0, 2] = p[..., 0]
    T[..., 1, 2] = p[..., 1]
    T[..., 2, 2] = 1.0
    return T


def check_se2(T, tol=1e-9):
    T = np.asarray(T, dtype=float)
    if T.shape[-2:] != (3, 3):
        raise ValidationError("SE(2) matrix must be 3x3")
    R = T[..., :2, :2]
    RtR = np.swapaxes(R, -1, -2) @ R
    if np.max(np.abs(RtR - np.eye(2))) > tol or np.max(np.abs(np.linalg.det(R) - 1.0)) > tol:
        raise ValidationError("rotation block is not a proper rotation")
    if np.any(T[..., 2, :] != np.array([0.0, 0.0, 1.0])):
        raise ValidationError("bottom row must be [0, 0, 1]")


def from_se2(T):
    T = np.asarray(T, dtype=float)
    check_se2(T)
    th = np.arctan2(T[..., 1, 0], T[..., 0, 0])
    return from_euclidean(np.stack([T[..., 0, 2], T[..., 1, 2], th], axis=-1))


# -- covariance / information frames ---------------------------------------------


def _sinc(a):
    return np.sinc(a / np.pi)


def M_p(theta):
    """Maps Euclidean (tx, ty, theta) increments to the PUDQ tangent (before B_p)."""
    h = 0.5 * theta
    w = np.cos(h) / _sinc(h)
    return np.array([[w, h, 0.0], [-h, w, 0.0], [0.0, 0.0, 1.0]])


def M_s(theta):
    """Inverse of M_p; the left Jacobian style map of se(2)."""
    if abs(theta) < 1e-8:
        a, b = 1.0 - theta**2 / 6.0, -0.5 * theta
    else:
        a, b = np.sin(theta) / theta, (np.cos(theta) - 1.0) / theta
    return np.array([[a, b, 0.0], [-b, a, 0.0], [0.0, 0.0, 1.0]])


class TangentCovariance:
    """A 3x3 SPD matrix tagged with the frame it lives in.

    ``kind`` is 'information' or 'covariance'.
    """

    def __init__(self, matrix, frame, kind="information", check=True):
        if frame not in FRAMES:
            raise ValueError(f"unknown frame {frame!r}")
        if kind not in ("information", "covariance"):
            raise ValueError(f"unknown kind {kind!r}")
        m = np.array(matrix, dtype=float)
        if check:
            check_spd(m)
        self.matrix = m
        self.frame = frame
        self.kind = kind

    def inverse(self):
        other = "covariance" if self.kind == "information" else "information"
        return TangentCovariance(np.linalg.inv(self.matrix), self.frame, other)

    def __repr__(self):
        return f"TangentCovariance({self.kind}, {self.frame}, {self.matrix.tolist()})"


def check_spd(m, tol=1e-12):
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3):
        raise ValidationError("expected a 3x3 matrix")
    if not np.all(np.isfinite(m)):
        raise ValidationError("matrix has non-finite entries")
    scale = max(1.0, np.max(np.abs(m)))
    if np.max(np.abs(m - m.T)) > tol * scale:
        raise ValidationError("matrix is not symmetric")
    if np.linalg.eigvalsh(m).min() <= 0.0:
        raise ValidationError("matrix is not positive definite")


def _to_pudq_map(frame, theta):
    """Linear map L with v_p = L v_frame."""
    if frame == "pudq_tangent":
        return np.eye(3)
    if frame == "se2_algebra":
        return 0.5 * B_P
    return 0.5 * B_P @ M_p(theta)


def transform_information(cov, target_frame, theta=None):
    """Move a covariance or information matrix between tangent frames.

    Vectors map as v_p = L v_src, so covariances go as L S L^T and
    information matrices as L^-T W L^-1. ``theta`` (radians) is needed
    whenever the euclidean frame is involved.
    """
    if target_frame not in FRAMES:
        raise ValueError(f"unknown frame {target_frame!r}")
    src = cov.frame
    if "euclidean" in (src, target_frame) and src != target_frame and theta is None:
        raise ValueError("theta is required for conversions involving the euclidean frame")
    check_spd(cov.matrix)
    if src == target_frame:
        return TangentCovariance(cov.matrix.copy(), src, cov.kind)
    # src -> pudq -> target
    L = np.linalg.inv(_to_pudq_map(target_frame, theta)) @ _to_pudq_map(src, theta)
    if cov.kind == "covariance":
        m = L @ cov.matrix @ L.T
    else:
        Li = np.linalg.inv(L)
        m = Li.T @ cov.matrix @ Li
    m = 0.5 * (m + m.T)
    return TangentCovariance(m, target_frame, cov.kind)
