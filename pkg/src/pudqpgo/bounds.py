"""Closed-form Lipschitz and operator-norm constants for the objective.

Given a radius T_bar with ||X||_2 <= T_bar on the region of interest, the
constants bound ||e_ij||, ||A_ij||_F, ||B_ij||_F, the gradient entries, the
Euclidean Hessian blocks, the Riemannian Hessian (L_g) and the Gauss-Newton
operator (beta). Diagnostic only; the solver never reads them.
"""

from dataclasses import dataclass, asdict

import numpy as np

HALF_PI = 0.5 * np.pi


class InvalidRegionError(ValueError):
    pass


@dataclass(frozen=True)
class BoundConstants:
    T_bar: float
    z_bar: float
    t_x: float
    t_r: float
    z2: float
    z3: float
    z23: float
    e_bar: float
    rho: float
    J_bar: float
    g_bar: float
    tau1: float
    tau2: float
    tau3: float
    tau4: float
    h_ii: float
    h_ij: float
    Omega_bar: float
    L_g: float
    beta: float

    def as_dict(self):
        return asdict(self)

    def table(self):
        return "\n".join(f"{k:>10s}  {v:.6g}" for k, v in asdict(self).items())


def compute_bounds(graph, T_bar):
    """All bound constants for the region ||X|| <= T_bar. Needs T_bar^2 >= N."""
    N = graph.N
    T_bar = float(T_bar)
    if not np.isfinite(T_bar) or T_bar * T_bar < N * (1.0 - 1e-12):
        raise InvalidRegionError(f"T_bar^2 = {T_bar * T_bar:g} < N = {N}; no pose fits in that region")
    Z = graph.Z
    Om = graph.Omega
    t_x = np.sqrt(max(T_bar * T_bar - N, 0.0))
    z_bar = float(np.max(np.linalg.norm(Z, axis=1)))
    t_r = (t_x * t_x + 3.0) * z_bar
    z2 = float(np.max(np.abs(Z[:, 2])))
    z3 = float(np.max(np.abs(Z[:, 3])))
    z23 = z2 + z3
    e_bar = HALF_PI * np.sqrt(t_r * t_r + 1.0)
    rho = HALF_PI * (z23 + np.sqrt(2.0) * t_x) + np.sqrt(2.0) * t_r
    J_bar = np.sqrt(2.0 * (HALF_PI + 1.0) ** 2 + 4.0 * rho**2 + 4.0 * HALF_PI**2)

    absO = np.abs(Om)
    row1 = absO[:, 0, :].sum(axis=1)
    rows23 = absO[:, 1, :].sum(axis=1) + absO[:, 2, :].sum(axis=1)
    # the gradient-entry constant depends on Omega_ij; take the worst edge
    g_bar = float(np.max(np.sqrt(2.0) * ((HALF_PI + 1.0) * row1 + rho * rows23) * e_bar))

    base = 2.0 * (z23 + np.sqrt(2.0) * t_x)
    tau1 = base + np.sqrt(2.0) * (HALF_PI + 2.0) * t_r
    tau2 = base + np.sqrt(2.0) * (HALF_PI + 3.0) * t_r
    tau3 = HALF_PI * z2 + base + np.sqrt(2.0) * (HALF_PI + 4.0) * t_r
    tau4 = HALF_PI * z3 + base + np.sqrt(2.0) * (HALF_PI + 4.0) * t_r
    scale = e_bar + J_bar**2
    h_ii = np.sqrt(4.0 * (tau1**2 + tau2**2) + HALF_PI**2 + 2.0 * (HALF_PI + 1.0) ** 2 + (HALF_PI + 2.0) ** 2 + 16.0) * scale
    h_ij = np.sqrt(4.0 * (tau3**2 + tau4**2) + 16.0 * (HALF_PI + 1.0) ** 2 + 4.0 * (np.pi + 4.0) ** 2) * scale

    fro = np.sqrt(np.sum(Om * Om, axis=(1, 2)))
    Omega_bar = float(np.sum(fro))
    L_g = np.sqrt(2.0) * (h_ii + h_ij) * Omega_bar + 2.0 * graph.M * g_bar
    # ||R_ij||_2 <= 4 ||A||_F ||B||_F ||Omega||_F with both Jacobians under J_bar
    beta = float(np.sum(4.0 * J_bar**2 * fro))
    return BoundConstants(
        T_bar=T_bar, z_bar=z_bar, t_x=float(t_x), t_r=float(t_r), z2=z2, z3=z3, z23=z23,
        e_bar=float(e_bar), rho=float(rho), J_bar=float(J_bar), g_bar=g_bar,
        tau1=float(tau1), tau2=float(tau2), tau3=float(tau3), tau4=float(tau4),
        h_ii=float(h_ii), h_ij=float(h_ij), Omega_bar=Omega_bar, L_g=float(L_g), beta=beta,
    )
