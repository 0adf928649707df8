"""Riemannian trust-region solver with a Steihaug-Toint truncated CG inner loop."""

from dataclasses import dataclass, field

import numpy as np

import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .manifold import product_exp
from .objective import EdgeFactors, HessianOperator, RGNOperator, riemannian_gradient
from .pudq import IDENTITY, normalize

TERMINATIONS = ("gradient_tol", "negative_curvature", "boundary_hit", "max_iters", "cauchy_fallback")


class NumericalFailure(RuntimeError):
    pass


@dataclass
class SolverConfig:
    eps_g: float = 1e-2
    delta0: float = 100.0
    delta_max: float = 1e6
    rho_prime: float = 1e-2
    tcg_kappa: float = 0.05
    tcg_theta: float = 0.25
    max_outer_iters: int = 500
    max_inner_iters: int = None  # None -> 3N (tangent-space dimension)
    hessian: str = "rgn"  # or "exact"
    preconditioner: str = "cholesky"  # sparse factorisation of the RGN matrix; "none" for plain tCG

    def __post_init__(self):
        if not self.eps_g > 0:
            raise ValueError("eps_g must be positive")
        if not 0 < self.delta0 <= self.delta_max:
            raise ValueError("need 0 < delta0 <= delta_max")
        if not 0 < self.rho_prime < 0.25:
            raise ValueError("rho_prime must lie in (0, 1/4)")
        if self.hessian not in ("rgn", "exact"):
            raise ValueError("hessian must be 'rgn' or 'exact'")
        if self.preconditioner not in ("none", "cholesky"):
            raise ValueError("preconditioner must be 'none' or 'cholesky'")
        if self.max_inner_iters is not None and self.max_inner_iters < 1:
            raise ValueError("max_inner_iters must be positive")


@dataclass
class TcgOutcome:
    step: np.ndarray
    termination: str
    model_decrease: float
    iterations: int
    Hs: np.ndarray = None
    cauchy_decrease: float = 0.0


@dataclass
class SolverState:
    graph: object
    config: SolverConfig
    X: np.ndarray
    delta: float
    k: int = 0
    rho: float = float("nan")
    cost: float = float("nan")
    grad: np.ndarray = None
    grad_norm: float = float("nan")
    step_accepted: bool = False
    trace: list = field(default_factory=list)
    factors: object = None
    operator: object = None
    precon: object = None

    @classmethod
    def start(cls, graph, config, X0):
        st = cls(graph=graph, config=config, X=np.array(X0, dtype=float), delta=float(config.delta0))
        st.refresh()
        return st

    def refresh(self, factors=None):
        f = factors if factors is not None else EdgeFactors(self.graph, self.X)
        self.factors = f
        self.cost = f.cost()
        self.grad = riemannian_gradient(self.graph, factors=f)
        self.grad_norm = float(np.linalg.norm(self.grad))
        self.operator = RGNOperator(f) if self.config.hessian == "rgn" else HessianOperator(f)
        self.precon = RGNPreconditioner(f) if self.config.preconditioner == "cholesky" else None
        if self.precon is not None and not self.precon.ok:
            self.precon = None
        if not (np.isfinite(self.cost) and np.isfinite(self.grad_norm)):
            raise NumericalFailure(f"non-finite cost or gradient at iteration {self.k}")


@dataclass
class SolveResult:
    X: np.ndarray
    trace: list
    status: str
    iterations: int
    cost: float
    grad_norm: float

    @property
    def converged(self):
        return self.status == "converged"

    def __iter__(self):
        return iter((self.X, self.trace))


def _dot(a, b):
    return float(np.sum(a * b))


def model_value(state, S):
    """m(S) = F + <grad, S> + 1/2 <S, H S> with the state's Hessian model."""
    S = np.asarray(S, dtype=float).reshape(state.X.shape)
    return state.cost + _dot(state.grad, S) + 0.5 * _dot(S, state.operator(S))


def _to_boundary(s, d, delta):
    """Positive tau with ||s + tau d|| = delta."""
    dd = _dot(d, d)
    sd = _dot(s, d)
    ss = _dot(s, s)
    disc = sd * sd + dd * (delta * delta - ss)
    return (-sd + np.sqrt(max(disc, 0.0))) / dd


def tangent_basis(X):
    """Orthonormal tangent frames U (N, 4, 3): rotation, then the two dual axes."""
    X = np.asarray(X, dtype=float)
    U = np.zeros((X.shape[0], 4, 3))
    U[:, 0, 0] = -X[:, 1]
    U[:, 1, 0] = X[:, 0]
    U[:, 2, 1] = 1.0
    U[:, 3, 2] = 1.0
    return U


class RGNPreconditioner:
    """Applies the inverse of the Gauss-Newton matrix, written in tangent coordinates.

    The 3(N-1) x 3(N-1) sparse system (anchor removed) is factorised once per
    outer iteration. ``ok`` is False when the factorisation fails, e.g. on a
    disconnected graph; the solver then runs unpreconditioned.
    """

    def __init__(self, factors):
        g = factors.graph
        N, a = g.N, g.anchor
        self.U = tangent_basis(factors.X)
        self.anchor = a
        Ai = np.einsum("mka,mab->mkb", factors.A, self.U[g.I])
        Bj = np.einsum("mka,mab->mkb", factors.B, self.U[g.J])
        Jt = np.concatenate([Ai, Bj], axis=2)
        H6 = np.einsum("mka,mkl,mlb->mab", Jt, g.Omega, Jt)
        idx = np.concatenate([3 * g.I[:, None] + np.arange(3), 3 * g.J[:, None] + np.arange(3)], axis=1)
        rows = np.repeat(idx, 6, axis=1).ravel()
        cols = np.tile(idx, (1, 6)).ravel()
        H = sp.csc_matrix((H6.ravel(), (rows, cols)), shape=(3 * N, 3 * N))
        keep = np.setdiff1d(np.arange(3 * N), 3 * a + np.arange(3))
        self.keep = keep
        self.ok = True
        try:
            self.lu = splu(H[keep][:, keep].tocsc())
            probe = self.lu.solve(np.ones(keep.size))
            self.ok = bool(np.all(np.isfinite(probe)))
        except RuntimeError:
            self.ok = False

    def __call__(self, R):
        R = np.asarray(R, dtype=float)
        c = np.einsum("nab,na->nb", self.U, R).ravel()
        y = np.zeros_like(c)
        y[self.keep] = self.lu.solve(c[self.keep])
        out = np.einsum("nab,nb->na", self.U, y.reshape(-1, 3))
        out[self.anchor] = 0.0
        return out


def tcg(H, g, delta, kappa=0.05, theta=0.25, max_iters=None, precon=None):
    """Steihaug-Toint truncated CG for min <g,s> + 1/2 <s,Hs>, ||s|| <= delta.

    H is a callable on arrays shaped like g. An optional preconditioner
    (callable approximating H^-1) changes the search directions only; the
    trust region and the stopping test stay in the plain norm.
    """
    g = np.asarray(g, dtype=float)
    if max_iters is None:
        max_iters = g.size
    s = np.zeros_like(g)
    Hs = np.zeros_like(g)
    r = g.copy()
    z = r if precon is None else precon(r)
    d = -z
    rz = _dot(r, z)
    r0 = np.sqrt(_dot(r, r))
    stop = r0 * min(kappa, r0**theta)
    term = "max_iters"
    it = 0
    while it < max_iters:
        it += 1
        Hd = H(d)
        dHd = _dot(d, Hd)
        if not np.isfinite(dHd):
            raise NumericalFailure(f"non-finite curvature in tCG at inner iteration {it}")
        if dHd <= 0.0:
            tau = _to_boundary(s, d, delta)
            s = s + tau * d
            Hs = Hs + tau * Hd
            term = "negative_curvature"
            break
        alpha = rz / dHd
        s_new = s + alpha * d
        if _dot(s_new, s_new) >= delta * delta:
            tau = _to_boundary(s, d, delta)
            s = s + tau * d
            Hs = Hs + tau * Hd
            term = "boundary_hit"
            break
        s = s_new
        Hs = Hs + alpha * Hd
        r = r + alpha * Hd
        if np.sqrt(_dot(r, r)) <= stop:
            term = "gradient_tol"
            break
        z = r if precon is None else precon(r)
        rz_new = _dot(r, z)
        d = -z + (rz_new / rz) * d
        rz = rz_new
    dec = -(_dot(g, s) + 0.5 * _dot(s, Hs))
    sc, Hsc, cauchy = cauchy_point(H, g, delta)
    if dec < cauchy:
        # preconditioned directions can lose to the Cauchy point; without one this is roundoff only
        s, Hs, dec, term = sc, Hsc, cauchy, "cauchy_fallback"
    return TcgOutcome(step=s, termination=term, model_decrease=float(dec), iterations=it, Hs=Hs, cauchy_decrease=float(cauchy))


def cauchy_point(H, g, delta):
    """(s_c, H s_c, model decrease) for the model minimiser along -g inside the region."""
    gg = _dot(g, g)
    if gg == 0.0:
        return np.zeros_like(g), np.zeros_like(g), 0.0
    Hg = H(g)
    gHg = _dot(g, Hg)
    t = delta / np.sqrt(gg)
    if gHg > 0.0:
        t = min(t, gg / gHg)
    return -t * g, -t * Hg, float(t * gg - 0.5 * t * t * gHg)


def tcg_solve(state):
    cfg = state.config
    n_inner = cfg.max_inner_iters if cfg.max_inner_iters is not None else 3 * state.graph.N
    return tcg(state.operator, state.grad, state.delta, cfg.tcg_kappa, cfg.tcg_theta, n_inner, state.precon)


def cauchy_bound(delta, eps_g):
    """1/2 min(delta, 2 eps_g) eps_g."""
    return 0.5 * min(delta, 2.0 * eps_g) * eps_g


def rtr_step(state):
    """One outer iteration; mutates and returns ``state``."""
    cfg = state.config
    out = tcg_solve(state)
    S = out.step
    if not out.model_decrease > 0.0:
        raise NumericalFailure(f"tCG produced no model decrease ({out.model_decrease:g}) at iteration {state.k}")
    X_new = normalize(product_exp(state.X, S))
    X_new[state.graph.anchor] = IDENTITY
    f_new = EdgeFactors(state.graph, X_new)
    F_new = f_new.cost()
    if not np.isfinite(F_new):
        raise NumericalFailure(f"non-finite cost at trial point, iteration {state.k}")
    num = state.cost - F_new
    den = out.model_decrease
    tiny = 1e-13 * (1.0 + abs(state.cost))
    guarded = abs(num) < tiny and abs(den) < tiny
    rho = 1.0 if guarded else num / den
    step_norm = float(np.linalg.norm(S))
    hit = out.termination in ("negative_curvature", "boundary_hit") or step_norm >= (1.0 - 1e-12) * state.delta
    delta_used = state.delta
    if rho < 0.25:
        state.delta = 0.25 * state.delta
    elif rho > 0.75 and hit:
        state.delta = min(2.0 * state.delta, cfg.delta_max)
    accept = rho > cfg.rho_prime and F_new <= state.cost
    rec = dict(
        k=state.k, cost=state.cost, grad_norm=state.grad_norm, delta=delta_used, rho=float(rho), accepted=bool(accept),
        step_norm=step_norm, tcg_iters=out.iterations, termination=out.termination,
        model_decrease=out.model_decrease, cauchy_decrease=out.cauchy_decrease,
        cauchy_bound=cauchy_bound(delta_used, cfg.eps_g), new_cost=F_new,
    )
    state.trace.append(rec)
    state.rho = float(rho)
    state.step_accepted = bool(accept)
    state.k += 1
    if accept:
        state.X = X_new
        state.refresh(f_new)
    return state


def solve(graph, X0=None, config=None, callback=None):
    """Run the trust-region method from X0 until ||grad F|| <= eps_g.

    callback(record) is called after every outer iteration with a dict
    holding k, cost, grad_norm, delta, rho, accepted (and more).
    Returns a SolveResult; ``X, trace = solve(...)`` also works.
    """
    cfg = config if config is not None else SolverConfig()
    X0 = graph.vertices if X0 is None else X0
    X0 = np.array(X0, dtype=float)
    if X0.shape != graph.vertices.shape:
        raise ValueError(f"initial point has shape {X0.shape}, expected {graph.vertices.shape}")
    if np.max(np.abs(X0[graph.anchor] - IDENTITY)) > 1e-9:
        raise ValueError("anchored vertex of the initial point must be the identity")
    X0[graph.anchor] = IDENTITY
    state = SolverState.start(graph, cfg, X0)
    status = "max_iters"
    while True:
        if state.grad_norm <= cfg.eps_g:
            status = "converged"
            break
        if state.k >= cfg.max_outer_iters:
            break
        rtr_step(state)
        if callback is not None:
            callback(state.trace[-1])
    return SolveResult(X=state.X, trace=state.trace, status=status, iterations=state.k, cost=state.cost, grad_norm=state.grad_norm)


@dataclass
class IterationBound:
    value: float
    lambda_g: float
    applicable: bool
    reason: str = ""


def iteration_bound(F0, Fstar_lower, config, Lg, beta):
    """Worst-case outer iteration count; diagnostic only."""
    cfg = config if config is not None else SolverConfig()
    lam = 0.25 * min(1.0 / beta, 1.0 / (2.0 * (Lg + beta)))
    if Fstar_lower < 0:
        return IterationBound(float("nan"), lam, False, "Fstar_lower must be nonnegative")
    if not cfg.eps_g <= cfg.delta0 / lam:
        return IterationBound(float("nan"), lam, False, "eps_g > delta0 / lambda_g")
    K = (F0 - Fstar_lower) / (cfg.rho_prime * lam) * 3.0 / cfg.eps_g**2 + 0.5 * np.log2(cfg.delta0 / (lam * cfg.eps_g))
    return IterationBound(float(K), lam, True)
