"""Anisotropic 2D pose-graph optimisation on the planar unit dual quaternion manifold."""

__version__ = "0.1.0"

from .pudq import IDENTITY, TangentCovariance, ValidationError, compose, from_euclidean, inverse, to_euclidean
from .manifold import exp_at, levi_civita_transport, log_at, log_identity, exp_identity, parallel_transport, product_exp, product_log
from .objective import PoseGraph, StructureError, cost, edge_jacobians, euclidean_gradient, hessian_tensors, residual, riemannian_gradient
from .bounds import BoundConstants, InvalidRegionError, compute_bounds
from .solver import NumericalFailure, SolveResult, SolverConfig, iteration_bound, rtr_step, solve
from .datasets import ParseError, SynthConfig, load_dataset, load_graph, save_graph, synth_dataset
from .init_metrics import init_chordal, init_odometry, percent_reduction, rpe_euclidean, rpe_lie, rpe_report
