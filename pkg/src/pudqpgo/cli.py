"""Command line: pudqpgo synth | solve | eval | check.

Exit codes: 0 success, 1 I/O or validation error, 2 usage error,
3 solver stopped at max iterations, 4 a check failed.
"""

import argparse
import csv
import io
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .bounds import InvalidRegionError, compute_bounds
from .checks import check_bounds, random_graph, run_checks
from .datasets import ParseError, SynthConfig, _write_atomic, load_dataset, save_graph, synth_dataset
from .init_metrics import gauge_to_anchor, init_chordal, init_odometry, percent_reduction, rpe_report
from .objective import StructureError
from .pudq import ValidationError
from .solver import NumericalFailure, SolverConfig, solve

EXIT_OK, EXIT_IO, EXIT_USAGE, EXIT_NOCONV, EXIT_CHECK = 0, 1, 2, 3, 4

TRACE_FIELDS = ("k", "cost", "grad_norm", "delta", "rho", "accepted")


class UsageError(Exception):
    pass


def _say(args, msg):
    if not getattr(args, "quiet", False):
        print(msg, file=sys.stderr)


def _manifest(args, command, status, started, **extra):
    snap = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "quiet")}
    doc = {"command": command, "version": __version__, "args": snap, "exit_status": status}
    doc.update(extra)
    doc["timing"] = {"seconds": round(time.time() - started, 6)}
    return doc


def _write_manifest(path, doc):
    _write_atomic(path, json.dumps(doc, indent=1, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def trace_csv(trace):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_FIELDS)
    for r in trace:
        w.writerow([r["k"], repr(float(r["cost"])), repr(float(r["grad_norm"])), repr(float(r["delta"])),
                    repr(float(r["rho"])), int(bool(r["accepted"]))])
    return buf.getvalue()


# -- synth ---------------------------------------------------------------------------------


def _synth_one(cfg, path, g2o):
    d = synth_dataset(cfg)
    save_graph(d.graph, path, "extended_json", ground_truth=d.ground_truth, provenance=d.provenance)
    out = [path]
    if g2o:
        gp = os.path.splitext(path)[0] + ".g2o"
        save_graph(d.graph, gp, "g2o_se2")
        out.append(gp)
    return out, d.graph.M, int(d.provenance.get("n_loop_closures", 0))


def cmd_synth(args):
    started = time.time()
    if args.n < 2:
        raise UsageError("--n must be at least 2")
    if args.trials < 1 or args.jobs < 1:
        raise UsageError("--trials and --jobs must be at least 1")
    seed = args.seed if args.seed is not None else int(np.random.SeedSequence().entropy % (2**63))
    os.makedirs(args.out, exist_ok=True)
    if args.trials == 1:
        seeds = [seed]
        paths = [os.path.join(args.out, "graph.json")]
    else:
        seeds = [int(s) for s in np.random.SeedSequence(seed).generate_state(args.trials, dtype=np.uint64) % (2**63)]
        paths = [os.path.join(args.out, f"trial_{t:03d}.json") for t in range(args.trials)]
    cfgs = []
    for s in seeds:
        try:
            cfgs.append(SynthConfig(n_vertices=args.n, grid_step=args.grid_step, loop_closure_prob=args.loop_prob,
                                    loop_closure_radius=args.loop_radius, sigma_w=args.sigma_w, rng_seed=s))
        except ValueError as err:
            raise UsageError(str(err))
    if args.jobs > 1 and len(cfgs) > 1:
        with ProcessPoolExecutor(args.jobs) as ex:
            results = list(ex.map(_synth_one, cfgs, paths, [args.g2o] * len(cfgs)))
    else:
        results = [_synth_one(c, p, args.g2o) for c, p in zip(cfgs, paths)]
    files = [f for r in results for f in r[0]]
    for f, m, lc in ((r[0][0], r[1], r[2]) for r in results):
        _say(args, f"wrote {f}: {args.n} vertices, {m} edges ({lc} loop closures)")
    doc = _manifest(args, "synth", EXIT_OK, started, seed=seed, trial_seeds=seeds, outputs=files)
    _write_manifest(os.path.join(args.out, "manifest.json"), doc)
    return EXIT_OK


# -- solve ---------------------------------------------------------------------------------


def _initial_point(args, graph, gt):
    if args.init == "chordal":
        return init_chordal(graph)
    if args.init == "odometry":
        return init_odometry(graph)
    if args.init == "ground_truth":
        if gt is None:
            raise ValidationError("input has no ground truth to initialise from")
        return gauge_to_anchor(gt, graph.anchor)
    if args.init == "file":
        if not args.init_file:
            raise UsageError("--init file needs --init-file PATH")
        g0, _, _ = load_dataset(args.init_file, args.format, args.info_frame)
        if g0.N != graph.N:
            raise ValidationError(f"initial estimate has {g0.N} vertices, graph has {graph.N}")
        return gauge_to_anchor(g0.vertices, graph.anchor)
    return graph.vertices.copy()  # "graph": vertices stored in the input file


def cmd_solve(args):
    started = time.time()
    graph, gt, prov = load_dataset(args.graph, args.format, args.info_frame)
    try:
        cfg = SolverConfig(eps_g=args.eps_g, delta0=args.delta0, delta_max=args.delta_max, rho_prime=args.rho_prime,
                           tcg_kappa=args.kappa, tcg_theta=args.theta, max_outer_iters=args.max_iters,
                           max_inner_iters=args.max_inner, hessian=args.hessian, preconditioner=args.preconditioner)
    except ValueError as err:
        raise UsageError(str(err))
    X0 = _initial_point(args, graph, gt)

    def progress(r):
        _say(args, f"{r['k']:4d}  F={r['cost']:.10g}  |g|={r['grad_norm']:.3e}  delta={r['delta']:.3g}  "
                   f"rho={r['rho']:.3f}  {'accept' if r['accepted'] else 'reject'}")

    res = solve(graph, X0, cfg, callback=progress)
    os.makedirs(args.out, exist_ok=True)
    est = os.path.join(args.out, "estimate.json")
    trace = os.path.join(args.out, "trace.csv")
    save_graph(graph.copy(vertices=res.X), est, "extended_json", ground_truth=gt,
               provenance={"source": os.path.abspath(args.graph), "solver": vars(cfg)})
    _write_atomic(trace, trace_csv(res.trace))
    status = EXIT_OK if res.converged else EXIT_NOCONV
    _say(args, f"{res.status} after {res.iterations} iterations: F={res.cost:.10g}, |grad F|={res.grad_norm:.3e}")
    metrics = {"status": res.status, "iterations": res.iterations, "cost": res.cost, "grad_norm": res.grad_norm}
    if gt is not None:
        rep = rpe_report(res.X, gauge_to_anchor(gt, graph.anchor), graph)
        metrics.update(rpe_l=rep.rpe_l, rpe_e=rep.rpe_e)
    doc = _manifest(args, "solve", status, started, solver=vars(cfg), inputs=[args.graph],
                    outputs=[est, trace], metrics=metrics, seed=prov.get("config", {}).get("rng_seed"))
    _write_manifest(os.path.join(args.out, "manifest.json"), doc)
    return status


# -- eval ----------------------------------------------------------------------------------


def _poses(path, args, want_gt=False):
    g, gt, _ = load_dataset(path, args.format, args.info_frame)
    if want_gt and gt is not None:
        return g, gt
    return g, g.vertices


def cmd_eval(args):
    started = time.time()
    g_est, X = _poses(args.estimate, args)
    g_gt, G = _poses(args.ground_truth, args, want_gt=True)
    if X.shape != G.shape:
        raise ValidationError(f"vertex count mismatch: estimate has {X.shape[0]}, ground truth has {G.shape[0]}")
    rep = rpe_report(X, G, g_gt)
    out = {"rpe_l": rep.rpe_l, "rpe_e": rep.rpe_e}
    if args.baseline:
        _, Y = _poses(args.baseline, args)
        if Y.shape != G.shape:
            raise ValidationError(f"vertex count mismatch: baseline has {Y.shape[0]}, ground truth has {G.shape[0]}")
        base = rpe_report(Y, G, g_gt)
        out.update(baseline_rpe_l=base.rpe_l, baseline_rpe_e=base.rpe_e,
                   reduction_l=percent_reduction(base.rpe_l, rep.rpe_l),
                   reduction_e=percent_reduction(base.rpe_e, rep.rpe_e))
    print(f"RPE-L  {rep.rpe_l:.6g}")
    print(f"RPE-E  {rep.rpe_e:.6g}")
    if args.baseline:
        print(f"percent reduction  RPE-L {out['reduction_l']:.2f}%  RPE-E {out['reduction_e']:.2f}%")
    outputs = []
    if args.csv:
        _write_atomic(args.csv, rep.to_csv())
        outputs.append(args.csv)
    if args.json:
        _write_atomic(args.json, json.dumps(out, indent=1, sort_keys=True) + "\n")
        outputs.append(args.json)
    if args.manifest:
        _write_manifest(args.manifest, _manifest(args, "eval", EXIT_OK, started, metrics=out, outputs=outputs))
    return EXIT_OK


# -- check ---------------------------------------------------------------------------------


def cmd_check(args):
    started = time.time()
    rng = np.random.default_rng(args.seed)
    if args.graph:
        graph = load_dataset(args.graph, args.format, args.info_frame)[0]
    else:
        if args.n < 2:
            raise UsageError("--n must be at least 2")
        graph = random_graph(rng, args.n, args.sigma_w)
    results = run_checks(graph, rng=rng)
    if args.bounds:
        radius = args.radius if args.radius is not None else 2.0 * np.sqrt(graph.N)
        try:
            B = compute_bounds(graph, radius)
        except InvalidRegionError as err:
            raise ValidationError(str(err))
        print(B.table())
        _, more = check_bounds(graph, radius, rng, points=args.points, tangents=args.tangents)
        results += more
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.passed]
    status = EXIT_CHECK if failed else EXIT_OK
    if failed:
        print("failing checks: " + ", ".join(f"{r.name} ({r.where})" if r.where else r.name for r in results if not r.passed))
    if args.manifest:
        doc = _manifest(args, "check", status, started, seed=args.seed,
                        metrics={r.name: {"error": r.error, "tol": r.tol, "passed": r.passed} for r in results})
        _write_manifest(args.manifest, doc)
    return status


# -- parser ----------------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="pudqpgo", description="Anisotropic 2D pose-graph optimisation on unit dual quaternions.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def io_flags(q):
        q.add_argument("--format", choices=("extended_json", "g2o_se2"), default=None, help="default: from the file extension")
        q.add_argument("--info-frame", default="euclidean", choices=("euclidean", "se2_algebra", "pudq_tangent"),
                       help="frame of g2o information matrices")
        q.add_argument("--quiet", action="store_true")

    s = sub.add_parser("synth", help="generate a synthetic Grid dataset")
    s.add_argument("--n", type=int, default=200, help="number of poses")
    s.add_argument("--sigma-w", type=float, default=1e-3)
    s.add_argument("--seed", type=int, default=None, help="drawn and recorded when omitted")
    s.add_argument("--loop-prob", type=float, default=0.03)
    s.add_argument("--loop-radius", type=float, default=2.0)
    s.add_argument("--grid-step", type=float, default=1.0)
    s.add_argument("--trials", type=int, default=1)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--g2o", action="store_true", help="also write the graph as .g2o (vertices hold the odometry guess)")
    s.add_argument("--out", default=".")
    s.add_argument("--quiet", action="store_true")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("solve", help="run the trust-region solver")
    s.add_argument("graph")
    s.add_argument("--out", default=".")
    s.add_argument("--init", choices=("chordal", "odometry", "file", "graph", "ground_truth"), default="chordal")
    s.add_argument("--init-file")
    s.add_argument("--eps-g", type=float, default=1e-2)
    s.add_argument("--delta0", type=float, default=100.0)
    s.add_argument("--delta-max", type=float, default=1e6)
    s.add_argument("--rho-prime", type=float, default=1e-2)
    s.add_argument("--kappa", type=float, default=0.05)
    s.add_argument("--theta", type=float, default=0.25)
    s.add_argument("--max-iters", type=int, default=500)
    s.add_argument("--max-inner", type=int, default=None, help="tCG iteration cap (default 3N)")
    s.add_argument("--hessian", choices=("rgn", "exact"), default="rgn")
    s.add_argument("--preconditioner", choices=("cholesky", "none"), default="cholesky")
    io_flags(s)
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("eval", help="relative pose errors against ground truth")
    s.add_argument("--estimate", required=True)
    s.add_argument("--ground-truth", required=True, help="file with a ground_truth field, or whose vertices are the truth")
    s.add_argument("--baseline", help="second estimate for percent reduction")
    s.add_argument("--csv", help="per-edge errors")
    s.add_argument("--json", help="summary metrics")
    s.add_argument("--manifest")
    io_flags(s)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("check", help="finite-difference and bound checks")
    s.add_argument("--graph", help="check on this graph instead of a random one")
    s.add_argument("--n", type=int, default=6)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--sigma-w", type=float, default=1e-2)
    s.add_argument("--bounds", action="store_true", help="print bound constants and validate them")
    s.add_argument("--radius", type=float, default=None, help="T_bar for --bounds (default 2 sqrt(N))")
    s.add_argument("--points", type=int, default=10)
    s.add_argument("--tangents", type=int, default=200)
    s.add_argument("--manifest")
    io_flags(s)
    s.set_defaults(func=cmd_check)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as err:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog} {args.command}: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, ValidationError, StructureError, NumericalFailure, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
