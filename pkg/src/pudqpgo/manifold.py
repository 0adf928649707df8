"""Riemannian geometry of the PUDQ manifold M and the product M^N.

M is embedded in R^4 as the zero set of h(x) = q0^2 + q1^2 - 1. Tangent
vectors are stored as ambient 4-vectors; the 3-vector chart is only used at
the identity. Product points and tangents are (N, 4) arrays.
"""

import numpy as np

from .pudq import compose, inverse

P_TILDE = np.diag([1.0, 1.0, 0.0, 0.0])

_SMALL = 1e-6


def sinc(phi):
    """sin(phi)/phi with a Taylor branch for |phi| < 1e-6."""
    phi = np.asarray(phi, dtype=float)
    p2 = phi * phi
    small = np.abs(phi) < _SMALL
    safe = np.where(small, 1.0, phi)
    return np.where(small, 1.0 - p2 / 6.0 + p2 * p2 / 120.0, np.sin(safe) / safe)


def inv_sinc(phi):
    phi = np.asarray(phi, dtype=float)
    p2 = phi * phi
    small = np.abs(phi) < _SMALL
    safe = np.where(small, 1.0, phi)
    return np.where(small, 1.0 + p2 / 6.0 + 7.0 * p2 * p2 / 360.0, safe / np.sin(safe))


def wrap_half(alpha):
    """Wrap an angle from (-pi, pi] to the half-open interval (-pi/2, pi/2]."""
    alpha = np.asarray(alpha, dtype=float)
    return np.where(alpha <= -np.pi / 2, alpha + np.pi, np.where(alpha > np.pi / 2, alpha - np.pi, alpha))


def half_angle(x):
    x = np.asarray(x, dtype=float)
    return wrap_half(np.arctan2(x[..., 1], x[..., 0]))


# -- projectors ----------------------------------------------------------------


def projector(x):
    """P_x = I - P~ x x^T P~."""
    x = np.asarray(x, dtype=float)
    px = x * np.array([1.0, 1.0, 0.0, 0.0])
    return np.eye(4) - px[..., :, None] * px[..., None, :]


def normal_projector(x):
    x = np.asarray(x, dtype=float)
    px = x * np.array([1.0, 1.0, 0.0, 0.0])
    return px[..., :, None] * px[..., None, :]


def project_tangent(x, u):
    """(I - P~ x x^T P~) u, blockwise for stacked inputs."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    a = x[..., 0] * u[..., 0] + x[..., 1] * u[..., 1]
    out = u.copy()
    out[..., 0] -= a * x[..., 0]
    out[..., 1] -= a * x[..., 1]
    return out


def project_normal(x, u):
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    a = x[..., 0] * u[..., 0] + x[..., 1] * u[..., 1]
    out = np.zeros_like(u)
    out[..., 0] = a * x[..., 0]
    out[..., 1] = a * x[..., 1]
    return out


def is_tangent(x, u, tol=1e-10):
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    return bool(np.all(np.abs(x[..., 0] * u[..., 0] + x[..., 1] * u[..., 1]) <= tol))


# -- log / exp -----------------------------------------------------------------


def log_identity(x):
    """Log at the identity: [q1, q2, q3] / sinc(phi), phi the wrapped half angle.

    The formula is odd under the double cover, Log(-x) = -Log(x), which
    keeps it continuous over the whole circle (quadratic costs do not see
    the sign). Exp(Log(x)) returns x itself when q0 >= 0.
    """
    x = np.asarray(x, dtype=float)
    phi = half_angle(x)
    return x[..., 1:4] * inv_sinc(phi)[..., None]


def exp_identity(v):
    """[cos v1, sinc(v1) v] for a 3-vector v in the identity chart."""
    v = np.asarray(v, dtype=float)
    v1 = v[..., 0]
    return np.concatenate([np.cos(v1)[..., None], sinc(v1)[..., None] * v], axis=-1)


def canonical(x):
    """Representative of x with q0 >= 0."""
    x = np.asarray(x, dtype=float)
    s = np.where(x[..., 0] < 0.0, -1.0, 1.0)
    return x * s[..., None]


def log_at(x, y):
    """Log_x(y) = x + [0, Log_1(x^-1 + y)], as an ambient tangent at x.

    The representative of y nearest x is used, so exp_at(x, log_at(x, y))
    reproduces y up to the double cover.
    """
    d = canonical(compose(inverse(x), y))
    v = log_identity(d)
    z = np.concatenate([np.zeros(v.shape[:-1] + (1,)), v], axis=-1)
    return compose(x, z)


def exp_at(x, v, return_discard=False):
    """Exp_x(v) = x + Exp_1((x^-1 + v)[1:4]).

    v is projected to the tangent space first; the slice then drops an exact
    zero. The magnitude that projection removed is returned on request.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    vt = project_tangent(x, v)
    w = compose(inverse(x), vt)
    out = compose(x, exp_identity(w[..., 1:4]))
    if return_discard:
        return out, np.abs(x[..., 0] * v[..., 0] + x[..., 1] * v[..., 1])
    return out


def _check_product(X, Y):
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.ndim != 2 or X.shape[1] != 4 or X.shape != Y.shape:
        raise ValueError(f"dimension mismatch: {X.shape} vs {Y.shape}")
    return X, Y


def product_exp(X, S):
    X, S = _check_product(X, S)
    return exp_at(X, S)


def product_log(X, Y):
    X, Y = _check_product(X, Y)
    return log_at(X, Y)


def parallel_transport(x, y, u):
    """y + (x^-1 + u), the group-translation map from T_x M to T_y M.

    Only isometric when y + x^-1 has zero dual part (a pure rotation); see
    levi_civita_transport for the metric-preserving map.
    """
    return compose(y, compose(inverse(x), u))


def levi_civita_transport(x, y, u):
    """Parallel transport for the induced metric on S^1 x R^2.

    The rotation block of u is turned by the angle from x to y (complex
    ratio y_r conj(x_r)); the dual block is left alone. Isometric.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    u = np.asarray(u, dtype=float)
    c = x[..., 0] * y[..., 0] + x[..., 1] * y[..., 1]
    s = x[..., 0] * y[..., 1] - x[..., 1] * y[..., 0]
    out = np.array(u, dtype=float, copy=True)
    out[..., 0] = c * u[..., 0] - s * u[..., 1]
    out[..., 1] = s * u[..., 0] + c * u[..., 1]
    return out


def geodesic_distance(X, Y):
    X, Y = _check_product(np.atleast_2d(X), np.atleast_2d(Y))
    e = log_identity(compose(inverse(X), Y))
    return float(np.sqrt(np.sum(e * e)))


def weingarten(x, u, w):
    """Weingarten map A_x(u, w) = -P_x P~ u (x^T w), for u tangent, w normal.

    Blockwise on stacked inputs.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    a = np.sum(x * w, axis=-1)
    pu = u * np.array([1.0, 1.0, 0.0, 0.0])
    return -project_tangent(x, pu) * a[..., None]


def inner(u, w):
    return float(np.sum(np.asarray(u) * np.asarray(w)))


def norm(u):
    return float(np.sqrt(np.sum(np.asarray(u) ** 2)))


def random_point(rng, n=None, scale=1.0):
    """Uniform rotation, Gaussian translation of the given scale."""
    from .pudq import from_euclidean

    shape = (3,) if n is None else (n, 3)
    p = rng.normal(size=shape) * scale
    p[..., 2] = rng.uniform(-np.pi, np.pi, size=shape[:-1])
    return from_euclidean(p)


def random_tangent(rng, x, scale=1.0):
    x = np.asarray(x, dtype=float)
    return project_tangent(x, rng.normal(size=x.shape) * scale)
