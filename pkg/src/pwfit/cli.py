"""pwfit command line: solve one instance or sweep the experiment matrix.

Subcommands: ``generate`` (synthetic instances to files), ``solve`` (one
instance, one variant), ``sweep`` (variants x sizes x noise levels with
median aggregation), ``sweep-xi`` (segment counts across regularization
strengths), ``sweep-limits`` (gap versus time limit).  The MILP backend
is chosen by the PWFIT_SOLVER environment variable (default "highs").
"""

from __future__ import annotations

import argparse
import json
import os
import statistics
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from types import SimpleNamespace

import numpy as np

from .backend import BackendError, SolveLimits, create_backend, labeling_lp_value
from .formulation import ModelError, build_2d_model, compute_lambda
from .grid import GridError
from .heuristic import region_fusion
from .instance_io import (BUILTIN_GENERATORS, ParseError, RunReport,
                          _atomic_write, builtin_synthetic, load_image,
                          write_csv, write_pgm, write_report)
from .postprocess import evaluate, fit_pieces, labels_from_edges
from .separation import VARIANTS, cutting_plane_solve

HEURISTIC_VARIANT = "heuristic"


def _parse_size(text):
    try:
        m, n = (int(t) for t in text.lower().split("x"))
        return m, n
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"size must look like 20x30, got {text!r}") from None


def _parse_floats(text):
    return [float(t) for t in text.split(",") if t]


def _add_instance_args(p):
    src = p.add_argument_group("instance source")
    src.add_argument("--input", help="PGM or CSV image to load")
    src.add_argument("--format", choices=("pgm", "csv"),
                     help="override format inferred from the extension")
    src.add_argument("--synthetic", choices=sorted(BUILTIN_GENERATORS),
                     help="use a built-in generator instead of a file")
    src.add_argument("--size", type=_parse_size, default=(20, 30),
                     metavar="MxN", help="synthetic size (default 20x30)")
    src.add_argument("--noise", type=float, default=0.0,
                     help="synthetic Gaussian noise variance")
    src.add_argument("--gen-seed", type=int, default=0,
                     help="synthetic generator seed")


def _load_instance(args):
    if args.input and args.synthetic:
        raise ParseError("give either --input or --synthetic, not both")
    if args.input:
        inst = load_image(args.input, format=args.format)
        desc = {"source": args.input, "rows": inst.graph.rows,
                "cols": inst.graph.cols}
        return inst, None, desc
    name = args.synthetic or "quad"
    m, n = args.size
    inst, gt = builtin_synthetic(name, m, n, args.noise, args.gen_seed)
    desc = {"source": f"synthetic:{name}", "rows": m, "cols": n,
            "noise_sigma2": args.noise, "seed": args.gen_seed,
            "clipped": gt.clipped}
    return inst, gt, desc


def _solve_variant(inst, gt, variant, xi, limits, *, max_rounds=100,
                   solver_seed=0):
    """Run one variant end to end; returns (solution-like, seg, pieces,
    metrics, solve-record)."""
    params = compute_lambda(inst, xi)
    backend = create_backend(seed=solver_seed)
    if variant == HEURISTIC_VARIANT:
        t0 = time.perf_counter()
        seg, x = region_fusion(inst, params)
        model = build_2d_model(inst, params)
        value, w = labeling_lp_value(model, x, seed=solver_seed)
        wall = time.perf_counter() - t0
        sol = SimpleNamespace(
            w=w.reshape(inst.y.shape), x=x, objective=value,
            best_bound=float("nan"), gap=float("nan"), node_count=0,
            wall_time=wall, rounds=(), cuts_added=0, status="heuristic",
            multicut_feasible=True, warm_start_value=value)
    else:
        sol = cutting_plane_solve(inst, params, variant=variant,
                                  limits=limits, max_rounds=max_rounds,
                                  backend=backend)
    seg = pieces = metrics = None
    if getattr(sol, "multicut_feasible", False):
        seg = labels_from_edges(inst.graph, sol.x)
        pieces, _ = fit_pieces(inst, seg)
        gt_pair = (gt.labels, gt.clean) if gt is not None else None
        metrics = evaluate(inst, sol, seg, pieces, ground_truth=gt_pair)
    solve_rec = {
        "status": str(getattr(sol.status, "value", sol.status)),
        "objective": float(sol.objective),
        "best_bound": float(sol.best_bound),
        "gap": float(sol.gap),
        "node_count": int(sol.node_count),
        "wall_time": float(sol.wall_time),
        "cuts_added": int(sol.cuts_added),
        "separation_rounds": [
            {"round": r.round, "cuts_added": r.cuts_added,
             "objective": r.objective, "best_bound": r.best_bound,
             "gap": r.gap, "node_count": r.node_count,
             "wall_time": r.wall_time}
            for r in sol.rounds],
        "warm_start_value": sol.warm_start_value,
        "multicut_feasible": bool(getattr(sol, "multicut_feasible", False)),
        "backend": getattr(sol, "backend_name", "highs"),
    }
    return sol, seg, pieces, metrics, solve_rec


def _write_artifacts(prefix, inst, sol, seg, report, write_pgm_too):
    os.makedirs(os.path.dirname(os.path.abspath(prefix)), exist_ok=True)
    write_csv(f"{prefix}_w.csv", sol.w)
    if seg is not None:
        _, f = fit_pieces(inst, seg)
        write_csv(f"{prefix}_f.csv", f)
        write_csv(f"{prefix}_labels.csv",
                  seg.labels.reshape(inst.y.shape))
        if write_pgm_too:
            write_pgm(f"{prefix}_f.pgm", np.clip(f, 0, 1))
    if write_pgm_too:
        write_pgm(f"{prefix}_w.pgm", np.clip(sol.w, 0, 1))
    write_report(report, f"{prefix}_report.json")


def cmd_generate(args):
    if args.input:
        raise ParseError("generate works on --synthetic instances")
    inst, gt, desc = _load_instance(args)
    base, ext = os.path.splitext(args.output)
    if ext == ".pgm":
        write_pgm(args.output, inst.y)
    else:
        write_csv(args.output, inst.y)
    write_csv(f"{base}_gt_labels.csv",
              gt.labels.reshape(inst.y.shape))
    print(f"wrote {args.output} ({desc['rows']}x{desc['cols']}, "
          f"noise {args.noise}, {gt.clipped} clipped) and {base}_gt_labels.csv")
    return 0


def cmd_solve(args):
    inst, gt, desc = _load_instance(args)
    limits = SolveLimits(time_limit=args.time_limit, gap_target=args.gap)
    sol, seg, pieces, metrics, solve_rec = _solve_variant(
        inst, gt, args.variant, args.xi, limits, max_rounds=args.max_rounds,
        solver_seed=args.solver_seed)
    params = compute_lambda(inst, args.xi)
    report = RunReport(
        instance=desc, variant=args.variant,
        params={"xi": args.xi, "big_m": params.big_m,
                "lambda_row": params.lambda_row.tolist(),
                "lambda_col": params.lambda_col.tolist()},
        limits={"time_limit": args.time_limit, "gap_target": args.gap},
        solve=solve_rec, metrics=metrics)
    _write_artifacts(args.output_prefix, inst, sol, seg, report,
                     args.write_pgm)
    segs = seg.num_segments if seg is not None else "-"
    gap = (f"{solve_rec['gap']:.4g}" if np.isfinite(solve_rec["gap"])
           else "-")
    print(f"{args.variant}: {solve_rec['status']} "
          f"objective={solve_rec['objective']:.6g} gap={gap} "
          f"segments={segs} wall={solve_rec['wall_time']:.1f}s")
    print(f"artifacts: {args.output_prefix}_{{w,f,labels}}.csv, "
          f"{args.output_prefix}_report.json")
    return 0


def _sweep_cell(cfg):
    """One sweep cell (run in a worker process)."""
    ns = SimpleNamespace(**cfg["instance_args"])
    inst, gt, desc = _load_instance(ns)
    limits = SolveLimits(time_limit=cfg["time_limit"])
    rows = []
    for rep in range(cfg["repeats"]):
        sol, seg, pieces, metrics, solve_rec = _solve_variant(
            inst, gt, cfg["variant"], cfg["xi"], limits,
            solver_seed=cfg["solver_seed"])
        rows.append({
            "objective": solve_rec["objective"],
            "gap": solve_rec["gap"],
            "wall_time": solve_rec["wall_time"],
            "node_count": solve_rec["node_count"],
            "cuts_added": solve_rec["cuts_added"],
            "status": solve_rec["status"],
            "rand_index": (metrics or {}).get("rand_index"),
            "segments": (metrics or {}).get("segment_count"),
        })
    agg = {}
    for key in ("objective", "gap", "wall_time", "node_count", "cuts_added"):
        vals = [r[key] for r in rows if r[key] is not None
                and np.isfinite(r[key])]
        agg[key] = statistics.median(vals) if vals else None
    agg["status"] = rows[-1]["status"]
    agg["rand_index"] = rows[-1]["rand_index"]
    agg["segments"] = rows[-1]["segments"]
    return {**cfg["label"], **agg, "repeats": cfg["repeats"]}


def cmd_sweep(args):
    variants = [v for v in args.variants.split(",") if v]
    for v in variants:
        if v != HEURISTIC_VARIANT and v not in VARIANTS:
            raise ModelError(f"unknown variant {v!r}")
    cells = []
    for gen in args.generators.split(","):
        for size in args.sizes.split(","):
            m, n = _parse_size(size)
            for noise in _parse_floats(args.noise):
                for variant in variants:
                    cells.append({
                        "instance_args": {
                            "input": None, "format": None, "synthetic": gen,
                            "size": (m, n), "noise": noise,
                            "gen_seed": args.gen_seed},
                        "variant": variant, "xi": args.xi,
                        "time_limit": args.time_limit,
                        "repeats": args.repeats,
                        "solver_seed": args.solver_seed,
                        "label": {"generator": gen, "size": f"{m}x{n}",
                                  "noise": noise, "variant": variant},
                    })
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_cell, cells))
    else:
        rows = [_sweep_cell(c) for c in cells]

    cols = ("generator", "size", "noise", "variant", "status", "objective",
            "gap", "wall_time", "node_count", "cuts_added", "rand_index")
    print("  ".join(f"{c:>10}" for c in cols))
    for r in rows:
        print("  ".join(_fmt(r.get(c)) for c in cols))
    if args.output_dir:
        os.makedirs(args.output_dir, exist_ok=True)
        _atomic_write(os.path.join(args.output_dir, "sweep.json"),
                      json.dumps({"aggregate": args.aggregate,
                                  "rows": rows}, indent=2) + "\n")
        print(f"wrote {os.path.join(args.output_dir, 'sweep.json')}")
    return 0


def _fmt(v):
    if v is None:
        return f"{'-':>10}"
    if isinstance(v, float):
        return f"{v:>10.4g}"
    return f"{str(v):>10}"


def cmd_sweep_xi(args):
    inst, gt, desc = _load_instance(args)
    limits = SolveLimits(time_limit=args.time_limit)
    rows = []
    for xi in _parse_floats(args.xi):
        sol, seg, pieces, metrics, solve_rec = _solve_variant(
            inst, gt, args.variant, xi, limits,
            solver_seed=args.solver_seed)
        segs = seg.num_segments if seg is not None else None
        rows.append({"xi": xi, "segments": segs,
                     "status": solve_rec["status"],
                     "objective": solve_rec["objective"],
                     "gap": solve_rec["gap"]})
        if args.output_dir and seg is not None:
            os.makedirs(args.output_dir, exist_ok=True)
            write_csv(os.path.join(args.output_dir, f"labels_xi{xi}.csv"),
                      seg.labels.reshape(inst.y.shape))
    cols = ("xi", "segments", "status", "objective", "gap")
    print("  ".join(f"{c:>10}" for c in cols))
    for r in rows:
        print("  ".join(_fmt(r.get(c)) for c in cols))
    return 0


def cmd_sweep_limits(args):
    inst, gt, desc = _load_instance(args)
    rows = []
    for tl in _parse_floats(args.limits):
        limits = SolveLimits(time_limit=tl)
        sol, seg, pieces, metrics, solve_rec = _solve_variant(
            inst, gt, args.variant, args.xi, limits,
            solver_seed=args.solver_seed)
        rows.append({"time_limit": tl, "status": solve_rec["status"],
                     "objective": solve_rec["objective"],
                     "gap": solve_rec["gap"],
                     "wall_time": solve_rec["wall_time"]})
    cols = ("time_limit", "status", "objective", "gap", "wall_time")
    print("  ".join(f"{c:>10}" for c in cols))
    for r in rows:
        print("  ".join(_fmt(r.get(c)) for c in cols))
    gaps = [r["gap"] for r in rows if np.isfinite(r["gap"])]
    if any(b > a + 1e-9 for a, b in zip(gaps, gaps[1:])):
        print("note: gap sequence is not monotone "
              "(backend nondeterminism near the limit)")
    return 0


def build_parser():
    ap = argparse.ArgumentParser(
        prog="pwfit",
        description="piecewise-affine fitting, segmentation and denoising "
                    "via MILP with lazy multicut constraints")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic instance")
    _add_instance_args(g)
    g.add_argument("--output", required=True, help=".csv or .pgm path")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="solve one instance with one variant")
    _add_instance_args(s)
    s.add_argument("--variant", default="mph-4",
                   choices=sorted(VARIANTS) + [HEURISTIC_VARIANT])
    s.add_argument("--xi", type=float, default=0.5)
    s.add_argument("--time-limit", type=float, default=600.0)
    s.add_argument("--gap", type=float, default=0.0)
    s.add_argument("--max-rounds", type=int, default=100)
    s.add_argument("--solver-seed", type=int, default=0)
    s.add_argument("--output-prefix", default="pwfit_out")
    s.add_argument("--write-pgm", action="store_true")
    s.set_defaults(func=cmd_solve)

    w = sub.add_parser("sweep", help="variant/size/noise experiment matrix")
    w.add_argument("--generators", default="quad,diag,bands")
    w.add_argument("--sizes", default="20x30,40x60,80x120")
    w.add_argument("--noise", default="0,0.001,0.005")
    w.add_argument("--variants", default="mp,mph,mph-4,mph-4-8,mph-f")
    w.add_argument("--repeats", type=int, default=3)
    w.add_argument("--aggregate", choices=("median",), default="median")
    w.add_argument("--xi", type=float, default=0.5)
    w.add_argument("--time-limit", type=float, default=600.0)
    w.add_argument("--gen-seed", type=int, default=0)
    w.add_argument("--solver-seed", type=int, default=0)
    w.add_argument("--jobs", type=int, default=1)
    w.add_argument("--output-dir")
    w.set_defaults(func=cmd_sweep)

    x = sub.add_parser("sweep-xi", help="segment counts across xi values")
    _add_instance_args(x)
    x.add_argument("--xi", default="0.5,1,2")
    x.add_argument("--variant", default="mph-4",
                   choices=sorted(VARIANTS) + [HEURISTIC_VARIANT])
    x.add_argument("--time-limit", type=float, default=1200.0)
    x.add_argument("--solver-seed", type=int, default=0)
    x.add_argument("--output-dir")
    x.set_defaults(func=cmd_sweep_xi)

    t = sub.add_parser("sweep-limits", help="reported gap versus time limit")
    _add_instance_args(t)
    t.add_argument("--limits", default="50,200,600,1200")
    t.add_argument("--variant", default="mph-4-f",
                   choices=sorted(VARIANTS))
    t.add_argument("--xi", type=float, default=0.5)
    t.add_argument("--solver-seed", type=int, default=0)
    t.set_defaults(func=cmd_sweep_limits)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ModelError, GridError, BackendError, OSError) as exc:
        print(f"pwfit: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
