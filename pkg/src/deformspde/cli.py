"""Command-line front end.

Every subcommand prints a one-line JSON summary on stdout, writes its
artifacts and a run manifest (``<primary output>.manifest.json`` unless
``--manifest`` is given).  ``deformspde rerun MANIFEST`` re-executes a run
from its manifest and, with ``--check``, compares output digests.

Exit status: 0 success, 2 invalid input, 3 numerical failure, 1 when a
``rerun --check`` finds different outputs.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import platform
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .data import (
    DataFormatError,
    GridDataset,
    grid_interpolator,
    load_grid_dataset,
    log_standardize,
    split_alternating,
    write_grid_dataset,
)
from .deformation import DeformParams, load_params, practical_range, save_params
from .dspace import detect_folds, loop_defects, reconstruct_dspace
from .estimation import (
    FitConfig,
    LikelihoodProblem,
    fit,
    likelihood_ratio_test,
    local_estimates,
    merge_local,
    select_alpha,
)
from .fem import build_model, observation_matrix
from .mesh import apply_barrier, build_mesh, edge_length_histogram, read_mesh, write_mesh
from .risk import ShipConstants, accumulated_damage, empirical_exceedance, exceedance_bound, qq_pairs, read_route
from .synthetic import mesh_for_params, rectangle, simulate_dataset, smooth_nonstationary

log = logging.getLogger("deformspde")

THREADS_ENV = "DEFORMSPDE_THREADS"
EXIT_OK, EXIT_MISMATCH, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2, 3
SAMPLE_CHUNK = 1000


class Run:
    """Book-keeping for one invocation: inputs, outputs and the summary."""

    def __init__(self, args):
        self.args = args
        self.inputs: list[str] = []
        self.outputs: list[str] = []
        self.summary: dict = {}

    def read(self, *paths):
        for p in paths:
            if p is None:
                continue
            if not Path(p).is_file():
                raise FileNotFoundError(f"input file not found: {p}")
            self.inputs.append(str(p))

    def wrote(self, *paths):
        self.outputs.extend(str(p) for p in paths)


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _rng(seed: int, stream: int) -> np.random.Generator:
    """Independent generator per named stream of a run."""
    return np.random.default_rng(np.random.SeedSequence([seed, stream]))


def _child_seed(seed: int, stream: int) -> int:
    return int(_rng(seed, stream).integers(0, 2**63 - 1))


def _fmt(v) -> str:
    return repr(float(v))


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _mesh_paths(prefix):
    return f"{prefix}_nodes.csv", f"{prefix}_triangles.csv"


def _load_mesh(run: Run, prefix):
    nodes, tris = _mesh_paths(prefix)
    run.read(nodes, tris)
    return read_mesh(nodes, tris)


def _load_params(run: Run, path) -> DeformParams:
    run.read(path)
    return load_params(path)


def _load_data(run: Run, path) -> GridDataset:
    run.read(path)
    return load_grid_dataset(path)


def _standardized(data: GridDataset) -> GridDataset:
    return data if data.kind == "standardized" else log_standardize(data)[0]


def _route_fields(run: Run, args):
    """Route, raw data, and log-scale mean and sd at the waypoints."""
    run.read(args.route)
    route = read_route(args.route, metres_per_unit=args.metres_per_unit)
    data = _load_data(run, args.data)
    if data.kind != "raw":
        raise ValueError(f"{args.data}: route computations need raw wave heights (kind 'raw')")
    _, stats = log_standardize(data)
    mu = grid_interpolator(data, np.nan_to_num(stats.mean))(route.points)
    sd = grid_interpolator(data, np.nan_to_num(stats.sd, nan=1.0))(route.points)
    logs = np.log(np.nan_to_num(data.replicates, nan=1.0))
    observed = np.array([grid_interpolator(data, r)(route.points) for r in logs])
    return route, data, mu, sd, observed


def _route_field_samples(model, route, n, seed) -> np.ndarray:
    """``(n, n_waypoints)`` standardized field values along the route."""
    A = observation_matrix(model.mesh, route.points)
    out = np.empty((n, route.n))
    ss = np.random.SeedSequence(seed)
    for i, child in zip(range(0, n, SAMPLE_CHUNK), ss.spawn(math.ceil(n / SAMPLE_CHUNK))):
        m = min(SAMPLE_CHUNK, n - i)
        out[i:i + m] = (A @ model.sample(m, child).T).T
    return out


# -- subcommands ------------------------------------------------------------------

def cmd_ingest(run: Run, args) -> None:
    data = _load_data(run, args.data)
    std, stats = log_standardize(data)
    write_grid_dataset(std, args.out)
    run.wrote(args.out)
    if args.stats:
        _write_json(args.stats, {"format": "deformspde-stats", "shape": list(data.shape),
                                 "x": data.x, "y": data.y, **stats.to_dict()})
        run.wrote(args.stats)
    if args.train or args.test:
        if not (args.train and args.test):
            raise ValueError("--train and --test must be given together")
        train, test = split_alternating(std)
        write_grid_dataset(train, args.train)
        write_grid_dataset(test, args.test)
        run.wrote(args.train, args.test)
    run.summary = {"replicates": data.n_replicates, "shape": list(data.shape),
                   "ocean_cells": int(data.ocean.size), "kind_in": data.kind}


def cmd_synthesize(run: Run, args) -> None:
    nx, ny = args.nx, args.ny
    if nx < 2 or ny < 2:
        raise ValueError("the grid needs at least two cells in each direction")
    if args.params:
        truth = _load_params(run, args.params)
        x0, y0 = truth.origin
        T, S = truth.bbox
    else:
        x0, y0 = args.origin
        T, S = args.extent
        if args.preset == "identity":
            truth = DeformParams.identity(0, (T, S), origin=(x0, y0), alpha=args.alpha,
                                          log_sigma_eps=math.log(args.nugget))
        else:
            truth = smooth_nonstationary((T, S), (x0, y0), alpha=args.alpha, sigma_eps=args.nugget)
    x = x0 + T * np.arange(nx) / (nx - 1)
    y = y0 + S * np.arange(ny) / (ny - 1)
    mesh = mesh_for_params(truth, rectangle(x, y), args.extension, args.edge_fraction)
    data = simulate_dataset(truth, x, y, args.n, _child_seed(args.seed, 1), mesh=mesh, nugget=not args.no_nugget)
    if args.raw_mean is not None:
        vals = np.exp(args.raw_mean + args.raw_sd * data.replicates)
        data = GridDataset(x=x, y=y, replicates=vals, land_mask=data.land_mask, kind="raw")
    write_grid_dataset(data, args.out)
    save_params(truth, args.truth)
    run.wrote(args.out, args.truth)
    if args.mesh_out:
        paths = _mesh_paths(args.mesh_out)
        write_mesh(mesh, *paths)
        run.wrote(*paths)
    run.summary = {"replicates": args.n, "shape": [ny, nx], "mesh_nodes": mesh.n_nodes, "kind": data.kind}


def cmd_mesh(run: Run, args) -> None:
    data = _load_data(run, args.data)
    domain = rectangle(data.ocean_locations[:, 0], data.ocean_locations[:, 1])
    if args.params:
        params = _load_params(run, args.params)
        rfield = lambda p: practical_range(p, params)
        nu = params.nu
    else:
        ests = local_estimates(_standardized(data))
        rfield = ests.range_field()
        nu = select_alpha(ests) - 1.0
    mesh = build_mesh(domain, rfield, args.extension, edge_fraction=args.edge_fraction)
    if args.barrier:
        mesh = apply_barrier(mesh, max(nu, 1e-3), mesh.r_min)
    paths = _mesh_paths(args.out)
    write_mesh(mesh, *paths)
    run.wrote(*paths)
    counts, edges = edge_length_histogram(mesh)
    run.summary = {"nodes": mesh.n_nodes, "triangles": mesh.n_triangles, "r_min": mesh.r_min,
                   "extension_triangles": int(mesh.is_extension.sum()),
                   "edge_histogram": {"counts": counts.tolist(), "edges": edges.tolist()}}


def cmd_fit(run: Run, args) -> None:
    data = _standardized(_load_data(run, args.data))
    mesh = _load_mesh(run, args.mesh)
    alpha = args.alpha if args.alpha == "select" else int(args.alpha)
    ests = None
    if args.init:
        init = _load_params(run, args.init)
    else:
        ests = local_estimates(data)
        init, _ = merge_local(ests, args.k, data.bbox, data.origin,
                              alpha=None if alpha == "select" else alpha)
    cfg = FitConfig(k=args.k, alpha=alpha, max_iterations=args.max_iter,
                    stationary_only=args.stationary, threads=args.threads)
    problem = LikelihoodProblem.from_dataset(data, mesh)
    res = fit(data, mesh, cfg, init, problem=problem)
    save_params(res.params, args.out)
    report = res.report()
    if ests is not None:
        report["local_estimates"] = {"count": len(ests), "collapsed": ests.n_collapsed,
                                     "skipped": len(ests.skipped)}
    report["data"] = {"replicates": data.n_replicates, "locations": int(data.ocean.size)}
    report_path = args.report or str(Path(args.out).with_suffix(".report.json"))
    _write_json(report_path, report)
    run.wrote(args.out, report_path)
    run.summary = {"log_likelihood": res.log_likelihood, "iterations": res.iterations,
                   "converged": res.converged, "n_parameters": res.n_parameters}


def cmd_lrt(run: Run, args) -> None:
    run.read(args.stationary, args.nonstationary)
    r0 = json.loads(Path(args.stationary).read_text())
    r1 = json.loads(Path(args.nonstationary).read_text())
    df = args.df if args.df is not None else int(r1["n_parameters"]) - int(r0["n_parameters"])
    res = likelihood_ratio_test(float(r0["log_likelihood"]), float(r1["log_likelihood"]), df, args.significance)
    _write_json(args.out, res.to_dict())
    run.wrote(args.out)
    run.summary = res.to_dict()


def cmd_simulate(run: Run, args) -> None:
    params = _load_params(run, args.params)
    mesh = _load_mesh(run, args.mesh)
    like = _load_data(run, args.like)
    data = simulate_dataset(params, like.x, like.y, args.n, _child_seed(args.seed, 2), mesh=mesh,
                            land_mask=like.land_mask, nugget=not args.no_nugget)
    write_grid_dataset(data, args.out)
    run.wrote(args.out)
    run.summary = {"replicates": args.n, "shape": list(data.shape)}


def cmd_correlate(run: Run, args) -> None:
    params = _load_params(run, args.params)
    mesh = _load_mesh(run, args.mesh)
    if args.point is not None:
        node = int(np.argmin(np.linalg.norm(mesh.nodes - np.asarray(args.point), axis=1)))
    else:
        node = args.node
    if not 0 <= node < mesh.n_nodes:
        raise ValueError(f"node {node} is not in the mesh (0..{mesh.n_nodes - 1})")
    model = build_model(mesh, params)
    corr = model.correlation_column(node)
    _write_csv(args.out, ["node", "x", "y", "correlation"],
               ([i, float(mesh.nodes[i, 0]), float(mesh.nodes[i, 1]), float(corr[i])] for i in range(mesh.n_nodes)))
    run.wrote(args.out)
    run.summary = {"node": node, "x": float(mesh.nodes[node, 0]), "y": float(mesh.nodes[node, 1])}


def _thresholds(lo, hi, step) -> np.ndarray:
    if not (lo > 0 and hi >= lo and step > 0):
        raise ValueError("thresholds need 0 < lo <= hi and a positive step")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(n)


def cmd_exceed(run: Run, args) -> None:
    params = _load_params(run, args.params)
    mesh = _load_mesh(run, args.mesh)
    route, data, mu, sd, observed = _route_fields(run, args)
    u = _thresholds(*args.thresholds)
    log_u = np.log(u)
    bound = exceedance_bound(route, mu, sd, params, log_u)
    model = build_model(mesh, params)
    W = _route_field_samples(model, route, args.n_sim, _child_seed(args.seed, 3))
    X = mu + sd * W
    sim = empirical_exceedance(X, log_u)
    batches = np.array([empirical_exceedance(b, log_u) for b in np.array_split(X, args.batches)])
    emp = empirical_exceedance(observed, log_u)
    rows = zip(u, log_u, bound, sim, batches.min(axis=0), batches.max(axis=0), emp)
    _write_csv(args.out, ["threshold_m", "log_threshold", "rice_bound", "simulated", "sim_lo", "sim_hi", "data"],
               ([float(v) for v in r] for r in rows))
    run.wrote(args.out)
    run.summary = {"rows": len(u), "n_sim": args.n_sim, "route_waypoints": route.n}


def cmd_fatigue(run: Run, args) -> None:
    params = _load_params(run, args.params)
    mesh = _load_mesh(run, args.mesh)
    route, data, mu, sd, observed = _route_fields(run, args)
    consts = ShipConstants(C=args.C, beta=args.beta, gamma_fatigue=args.gamma)
    if args.reverse:
        route, mu, sd, observed = route.reversed(), mu[::-1], sd[::-1], observed[:, ::-1]
    model = build_model(mesh, params)
    dep = _route_field_samples(model, route, args.n_sim, _child_seed(args.seed, 4))
    ind = _rng(args.seed, 5).standard_normal((args.n_sim, route.n))
    d_dep = np.atleast_1d(accumulated_damage(route, np.exp(mu + sd * dep), consts))
    d_ind = np.atleast_1d(accumulated_damage(route, np.exp(mu + sd * ind), consts))
    d_obs = np.atleast_1d(accumulated_damage(route, np.exp(observed), consts))
    damage_path = f"{args.out}_damage.csv"
    _write_csv(damage_path, ["replicate", "dependent", "independent"],
               ([i, float(d_dep[i]), float(d_ind[i])] for i in range(args.n_sim)))
    qq_path = f"{args.out}_qq.csv"
    q_dep = qq_pairs(d_dep, d_obs, n_quantiles=len(d_obs))
    q_ind = qq_pairs(d_ind, d_obs, n_quantiles=len(d_obs))
    _write_csv(qq_path, ["data", "dependent", "independent"],
               ([float(q_dep[i, 1]), float(q_dep[i, 0]), float(q_ind[i, 0])] for i in range(len(q_dep))))
    summary = {
        "route_duration_s": route.duration,
        "data": {"mean": float(d_obs.mean()), "var": float(d_obs.var(ddof=1)) if len(d_obs) > 1 else None},
        "dependent": {"mean": float(d_dep.mean()), "var": float(d_dep.var(ddof=1))},
        "independent": {"mean": float(d_ind.mean()), "var": float(d_ind.var(ddof=1))},
    }
    summary_path = f"{args.out}_summary.json"
    _write_json(summary_path, summary)
    run.wrote(damage_path, qq_path, summary_path)
    run.summary = summary


def cmd_deform(run: Run, args) -> None:
    params = _load_params(run, args.params)
    mesh = _load_mesh(run, args.mesh)
    dmap = reconstruct_dspace(mesh, params, base_node=args.base_node)
    c = dmap.node_coords
    _write_csv(args.out, ["node", "x", "y", "dx", "dy"],
               ([i, float(mesh.nodes[i, 0]), float(mesh.nodes[i, 1]), float(c[i, 0]), float(c[i, 1])]
                for i in range(mesh.n_nodes)))
    run.wrote(args.out)
    defects = loop_defects(mesh, params)
    interior = detect_folds(dmap, mesh, interior_only=True)
    run.summary = {"base_node": dmap.base_node, "folds": int(len(dmap.fold_triangles)),
                   "folds_in_domain": int(len(interior)), "unreached": int(len(dmap.unreached)),
                   "loop_defect_max": float(defects.max()), "loop_defect_median": float(np.median(defects))}
    if args.report:
        _write_json(args.report, {**run.summary, "fold_triangles": dmap.fold_triangles.tolist()})
        run.wrote(args.report)


def cmd_rerun(args) -> int:
    manifest = json.loads(Path(args.manifest).read_text())
    if manifest.get("format") != "deformspde-manifest":
        raise ValueError(f"{args.manifest}: not a run manifest")
    argv = list(manifest["argv"])
    for name, digest in manifest["inputs"].items():
        p = Path(manifest["cwd"]) / name
        if not p.is_file():
            raise FileNotFoundError(f"input {name} from the manifest is missing")
        if sha256(p) != digest:
            log.warning("input %s changed since the recorded run", name)
    proc = subprocess.run([sys.executable, "-m", "deformspde", *argv], cwd=manifest["cwd"])
    if proc.returncode != 0 or not args.check:
        return proc.returncode
    changed = [n for n, d in manifest["outputs"].items() if sha256(Path(manifest["cwd"]) / n) != d]
    print(json.dumps({"rerun": manifest["command"], "identical": not changed, "changed": changed}))
    return EXIT_OK if not changed else EXIT_MISMATCH


# -- parser -------------------------------------------------------------------------

def _default_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise SystemExit(f"{THREADS_ENV} must be an integer, got {raw!r}")
    return max(1, n)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    common.add_argument("--threads", type=int, default=None,
                        help=f"worker cap (default ${THREADS_ENV} or 1)")
    common.add_argument("--manifest", help="manifest path (default <primary output>.manifest.json)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="deformspde", description="Deformed Matern GMRF models for wave fields.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", parents=[common], help="log-standardize a raw data set")
    s.add_argument("data")
    s.add_argument("--out", required=True)
    s.add_argument("--stats")
    s.add_argument("--train")
    s.add_argument("--test")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("synthesize", parents=[common], help="sample a data set from a known model")
    s.add_argument("--params", help="generating parameters (otherwise --preset)")
    s.add_argument("--preset", choices=("identity", "smooth"), default="smooth")
    s.add_argument("--alpha", type=int, default=2)
    s.add_argument("--nugget", type=float, default=0.1)
    s.add_argument("--extent", type=float, nargs=2, default=(11.0, 11.0), metavar=("T", "S"))
    s.add_argument("--origin", type=float, nargs=2, default=(0.0, 0.0), metavar=("X0", "Y0"))
    s.add_argument("--nx", type=int, default=12)
    s.add_argument("--ny", type=int, default=12)
    s.add_argument("--n", type=int, default=182)
    s.add_argument("--no-nugget", action="store_true")
    s.add_argument("--raw-mean", type=float, help="write raw heights exp(mean + sd * field)")
    s.add_argument("--raw-sd", type=float, default=0.3)
    s.add_argument("--extension", type=float, default=2.0)
    s.add_argument("--edge-fraction", type=float, default=5.0)
    s.add_argument("--out", required=True)
    s.add_argument("--truth", required=True)
    s.add_argument("--mesh-out", help="also write the simulation mesh under this prefix")
    s.set_defaults(func=cmd_synthesize)

    s = sub.add_parser("mesh", parents=[common], help="build the extended triangulation")
    s.add_argument("--data", required=True)
    s.add_argument("--params", help="range from these parameters instead of local estimates")
    s.add_argument("--extension", type=float, default=2.0)
    s.add_argument("--edge-fraction", type=float, default=5.0)
    s.add_argument("--barrier", action="store_true")
    s.add_argument("--out", required=True, help="prefix for <out>_nodes.csv and <out>_triangles.csv")
    s.set_defaults(func=cmd_mesh)

    s = sub.add_parser("fit", parents=[common], help="maximum-likelihood fit")
    s.add_argument("--data", required=True)
    s.add_argument("--mesh", required=True)
    s.add_argument("--k", type=int, default=4)
    s.add_argument("--alpha", default="select")
    s.add_argument("--stationary", action="store_true")
    s.add_argument("--max-iter", type=int, default=200)
    s.add_argument("--init")
    s.add_argument("--out", required=True)
    s.add_argument("--report")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("lrt", parents=[common], help="likelihood-ratio test of stationarity")
    s.add_argument("--stationary", required=True, help="fit report of the stationary model")
    s.add_argument("--nonstationary", required=True)
    s.add_argument("--df", type=int)
    s.add_argument("--significance", type=float, default=1e-4)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_lrt)

    s = sub.add_parser("simulate", parents=[common], help="sample replicates from fitted parameters")
    s.add_argument("--params", required=True)
    s.add_argument("--mesh", required=True)
    s.add_argument("--like", required=True, help="data set providing the grid and land mask")
    s.add_argument("--n", type=int, default=100)
    s.add_argument("--no-nugget", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("correlate", parents=[common], help="correlation of one node with all others")
    s.add_argument("--params", required=True)
    s.add_argument("--mesh", required=True)
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--node", type=int)
    g.add_argument("--point", type=float, nargs=2, metavar=("X", "Y"))
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_correlate)

    route_common = argparse.ArgumentParser(add_help=False)
    route_common.add_argument("--params", required=True)
    route_common.add_argument("--mesh", required=True)
    route_common.add_argument("--route", required=True)
    route_common.add_argument("--data", required=True, help="raw data set for marginal mean and sd")
    route_common.add_argument("--metres-per-unit", type=float, default=1.0)

    s = sub.add_parser("exceed", parents=[common, route_common], help="exceedance bound along a route")
    s.add_argument("--thresholds", type=float, nargs=3, default=(2.0, 12.0, 0.5), metavar=("LO", "HI", "STEP"))
    s.add_argument("--n-sim", type=int, default=10_000)
    s.add_argument("--batches", type=int, default=10)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_exceed)

    s = sub.add_parser("fatigue", parents=[common, route_common], help="fatigue damage along a route")
    s.add_argument("--n-sim", type=int, default=200)
    s.add_argument("--C", type=float, default=ShipConstants.C)
    s.add_argument("--beta", type=float, default=ShipConstants.beta)
    s.add_argument("--gamma", type=float, default=ShipConstants.gamma_fatigue)
    s.add_argument("--reverse", action="store_true")
    s.add_argument("--out", required=True, help="prefix for the damage, qq and summary files")
    s.set_defaults(func=cmd_fatigue)

    s = sub.add_parser("deform", parents=[common], help="reconstruct deformation-space coordinates")
    s.add_argument("--params", required=True)
    s.add_argument("--mesh", required=True)
    s.add_argument("--base-node", type=int)
    s.add_argument("--out", required=True)
    s.add_argument("--report")
    s.set_defaults(func=cmd_deform)

    s = sub.add_parser("rerun", help="re-execute a run from its manifest")
    s.add_argument("manifest")
    s.add_argument("--check", action="store_true", help="compare output digests with the manifest")
    s.set_defaults(func=None)
    return p


def _validate(args) -> None:
    for name, lowest in (("n", 0), ("k", 0), ("n_sim", 1), ("batches", 1), ("max_iter", 1), ("threads", 1)):
        v = getattr(args, name, None)
        if v is not None and v < lowest:
            raise ValueError(f"--{name.replace('_', '-')} must be at least {lowest}")


def _manifest(run: Run, argv, elapsed) -> dict:
    import scipy
    import sklearn

    return {
        "format": "deformspde-manifest",
        "version": 1,
        "command": run.args.command,
        "argv": list(argv),
        "cwd": os.getcwd(),
        "seed": run.args.seed,
        "threads": run.args.threads,
        "inputs": {p: sha256(p) for p in dict.fromkeys(run.inputs)},
        "outputs": {p: sha256(p) for p in dict.fromkeys(run.outputs)},
        "versions": {"deformspde": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__, "scikit-learn": sklearn.__version__},
        "wall_time_s": elapsed,
        "summary": run.summary,
    }


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.func is None:
            return cmd_rerun(args)
        if args.threads is None:
            args.threads = _default_threads()
        _validate(args)
        run = Run(args)
        t0 = time.perf_counter()
        with np.errstate(over="ignore", under="ignore", divide="ignore", invalid="ignore"):
            args.func(run, args)
        elapsed = time.perf_counter() - t0
        manifest_path = args.manifest or f"{run.outputs[0]}.manifest.json"
        _write_json(manifest_path, _manifest(run, argv, elapsed))
        print(json.dumps(run.summary, sort_keys=True, default=_json_default))
        return EXIT_OK
    except np.linalg.LinAlgError as exc:
        print(f"deformspde: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except FloatingPointError as exc:
        print(f"deformspde: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, DataFormatError, OSError, KeyError, json.JSONDecodeError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"deformspde: error: {msg}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
