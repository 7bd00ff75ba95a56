"""Command-line runner.

Sub-commands::

    solve-dual  Benders loop for one K; writes trace.csv and summary.json
    evaluate    F^K(lambda) (or the Lagrangian) for a given multiplier matrix
    rootgap     K = 1, 2, ... with warm starts chained from the previous K
    tree-demo   root pool + breadth-first tree with local bounds; writes nodes.csv

Floats in CSV files use 12 significant digits, so identical runs give
byte-identical traces.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from pathlib import Path
from typing import Sequence

import numpy as np

from .metrics import gap_closed
from .minlp import SolveLimits, identity_subproblem, lagrangian_outcome, solve_subproblem
from .model import AggregationMatrix, Model, ModelError, load_model
from .surrogate import BendersConfig, BendersReport, run_benders, surrogate_outcome
from .tree import AggregationPool, milp_bound, tree_demo

EXIT_INPUT = 2


class InputError(Exception):
    pass


def fmt(value: float) -> str:
    if value is None:
        return ""
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return format(value, ".12g")


def _json_float(value: float):
    value = float(value)
    return value if math.isfinite(value) else str(value)


# ------------------------------------------------------------------ args


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--instance", required=True, help="JSON instance file")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--time-limit", type=float, default=math.inf, help="seconds per run")
    p.add_argument("--node-limit", type=int, default=20_000, help="nodes per sub-solve")
    p.add_argument("--gap-limit", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0, help="reserved; the solvers are deterministic")


def _add_benders(p: argparse.ArgumentParser, k_default: int = 1) -> None:
    p.add_argument("--k", type=int, default=k_default, help="number of aggregations")
    p.add_argument("--epsilon", type=float, default=1e-6)
    p.add_argument("--alpha", type=float, default=0.2)
    p.add_argument("--stall-limit", type=int, default=20)
    p.add_argument("--trust-radius", type=float, default=0.1)
    p.add_argument("--symmetry", choices=("none", "first", "diag"), default="first")
    p.add_argument("--target-bound", type=float, default=None)
    p.add_argument("--max-iterations", type=int, default=50)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="surrogate-dual", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve-dual", help="Benders loop for the K-surrogate dual")
    _add_common(p)
    _add_benders(p)

    p = sub.add_parser("evaluate", help="evaluate F^K(lambda) or L(lambda)")
    _add_common(p)
    p.add_argument("--lambda", dest="lam", required=True, help="JSON vector or K x m matrix")
    p.add_argument("--lagrangian", action="store_true", help="evaluate the Lagrangian instead")

    p = sub.add_parser("rootgap", help="K = 1..k with warm-start chaining")
    _add_common(p)
    _add_benders(p, k_default=3)

    p = sub.add_parser("tree-demo", help="local bounds from a root aggregation pool")
    _add_common(p)
    _add_benders(p)
    p.add_argument("--pool-size", type=int, default=3)
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--primal", type=float, default=None, help="primal value used for pruning")
    return parser


def _limits(args) -> SolveLimits:
    return SolveLimits(node_limit=args.node_limit, gap_limit=args.gap_limit)


def _config(args, K: int | None = None, time_limit: float | None = None) -> BendersConfig:
    return BendersConfig(
        K=args.k if K is None else K,
        epsilon=args.epsilon,
        alpha=args.alpha,
        stall_limit=args.stall_limit,
        trust_radius=args.trust_radius,
        max_iterations=args.max_iterations,
        time_limit=args.time_limit if time_limit is None else time_limit,
        target_bound=args.target_bound,
        symmetry=args.symmetry,
        sub_limits=_limits(args),
    )


def _load(path: str) -> Model:
    if not Path(path).is_file():
        raise InputError(f"instance file not found: {path}")
    try:
        return load_model(path)
    except ModelError as exc:
        raise InputError(f"invalid instance {path}: {exc}") from exc
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read instance {path}: {exc}") from exc


def _parse_lambda(text: str, m: int) -> AggregationMatrix:
    try:
        data = json.loads(text)
        arr = np.atleast_2d(np.asarray(data, dtype=float))
        lam = AggregationMatrix.from_array(arr)
    except (ValueError, TypeError) as exc:
        raise InputError(f"invalid --lambda: {exc}") from exc
    if lam.m != m:
        raise InputError(f"--lambda has {lam.m} columns, the model has {m} constraints")
    return lam


def _out_dir(args) -> Path | None:
    if args.out is None:
        return None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------- output


def trace_header(K: int, m: int) -> list[str]:
    lam_cols = [f"lambda_{k + 1}_{i + 1}" for k in range(K) for i in range(m)]
    return ["K", "iteration", "psi", "psi_primal", *lam_cols, "sub_status", "sub_bound", "D"]


def trace_rows(report: BendersReport, K_cols: int) -> list[list[str]]:
    rows = []
    for rec in report.records:
        lam = np.zeros((K_cols, report.m))
        lam[: rec.lam.shape[0]] = rec.lam
        rows.append(
            [
                str(report.K),
                str(rec.iteration),
                fmt(rec.psi),
                fmt(rec.psi_primal),
                *(fmt(v) for v in lam.ravel()),
                rec.sub_status,
                fmt(rec.sub_bound),
                fmt(rec.D),
            ]
        )
    return rows


def write_trace(path: Path, reports: Sequence[BendersReport], m: int) -> None:
    K_cols = max(r.K for r in reports)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(trace_header(K_cols, m))
        for rep in reports:
            writer.writerows(trace_rows(rep, K_cols))


def report_summary(report: BendersReport) -> dict:
    return {
        "K": report.K,
        "bound": _json_float(report.bound),
        "termination": report.reason,
        "iterations": report.iterations,
        "best_lambda": report.best_lambda.as_array().tolist(),
        "seconds": round(report.seconds, 6),
    }


def write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _emit(out: Path | None, summary: dict) -> None:
    if out is not None:
        write_json(out / "summary.json", summary)
    print(json.dumps(summary, sort_keys=True))


# -------------------------------------------------------------- commands


def cmd_solve_dual(args) -> int:
    model = _load(args.instance)
    out = _out_dir(args)
    report = run_benders(model, _config(args))
    if out is not None:
        write_trace(out / "trace.csv", [report], model.m)
    summary = {"command": "solve-dual", "instance": args.instance, **report_summary(report)}
    _emit(out, summary)
    return 0


def cmd_evaluate(args) -> int:
    model = _load(args.instance)
    lam = _parse_lambda(args.lam, model.m)
    out = _out_dir(args)
    start = time.perf_counter()
    if args.lagrangian:
        if lam.K != 1:
            raise InputError("the Lagrangian takes a single multiplier vector")
        res = lagrangian_outcome(model, lam.rows[0], _limits(args))
    else:
        res = surrogate_outcome(model, lam, _limits(args))
    summary = {
        "command": "evaluate",
        "instance": args.instance,
        "mode": "lagrangian" if args.lagrangian else "surrogate",
        "lambda": lam.as_array().tolist(),
        "value": _json_float(res.dual_bound),
        "status": res.status.value,
        "gap": _json_float(res.gap),
        "point": None if res.x is None else res.x.tolist(),
        "seconds": round(time.perf_counter() - start, 6),
    }
    _emit(out, summary)
    return 0


def _primal_value(model: Model, args) -> float:
    if getattr(args, "primal", None) is not None:
        return args.primal
    res = solve_subproblem(identity_subproblem(model), _limits(args))
    return res.objective


def cmd_rootgap(args) -> int:
    model = _load(args.instance)
    out = _out_dir(args)
    start = time.perf_counter()
    reports: list[BendersReport] = []
    warm = None
    for K in range(1, args.k + 1):
        remaining = args.time_limit - (time.perf_counter() - start)
        rep = run_benders(model, _config(args, K=K, time_limit=max(0.0, remaining)), warm)
        reports.append(rep)
        warm = rep.best_lambda
    primal = _primal_value(model, args)
    base = reports[0].bound
    per_k = []
    for rep in reports:
        entry = report_summary(rep)
        if math.isfinite(primal) and rep.bound <= primal and base <= primal:
            entry["gap_closed_vs_K1"] = gap_closed(primal, rep.bound, base)
        per_k.append(entry)
    if out is not None:
        write_trace(out / "trace.csv", reports, model.m)
    summary = {"command": "rootgap", "instance": args.instance, "primal": _json_float(primal), "runs": per_k}
    _emit(out, summary)
    return 0


def cmd_tree_demo(args) -> int:
    model = _load(args.instance)
    out = _out_dir(args)
    limits = _limits(args)
    report = run_benders(model, _config(args))
    root_milp = milp_bound(model, model.boxes, limits)
    pool = AggregationPool.from_reports([report], root_milp, size=args.pool_size)
    primal = _primal_value(model, args)
    nodes = tree_demo(model, pool, primal, max_depth=args.depth, limits=limits)
    if out is not None:
        with open(out / "nodes.csv", "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["node", "parent", "depth", "candidates", "bound", "milp_bound", "pruned"])
            for rec in nodes:
                writer.writerow(
                    [
                        rec.node_id,
                        "" if rec.parent is None else rec.parent,
                        rec.depth,
                        rec.n_candidates,
                        fmt(rec.bound),
                        fmt(rec.milp_bound),
                        int(rec.pruned),
                    ]
                )
        write_trace(out / "trace.csv", [report], model.m)
    summary = {
        "command": "tree-demo",
        "instance": args.instance,
        "root_bound": _json_float(report.bound),
        "root_milp_bound": _json_float(root_milp),
        "primal": _json_float(primal),
        "pool": [{"lambda": e.lam.as_array().tolist(), "root_bound": e.root_bound} for e in pool.entries],
        "nodes": len(nodes),
        "pruned": sum(r.pruned for r in nodes),
    }
    _emit(out, summary)
    return 0


COMMANDS = {
    "solve-dual": cmd_solve_dual,
    "evaluate": cmd_evaluate,
    "rootgap": cmd_rootgap,
    "tree-demo": cmd_tree_demo,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
