"""Command-line front end.

Exit codes: 0 success, 1 oracle comparison shows the guarantee violated,
2 malformed input, 3 solver non-convergence, 4 instance over a size cap,
5 input file unreadable.

Every command writes into ``--out`` (default: $MMOT_OUTPUT_DIR, else
./mmot-out). Result files depend only on the run manifest; wall-clock
timings go to a separate ``timings.json`` so results stay byte-identical
across reruns.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, bench, hardness, oracle, regmot
from . import tensor as tz
from .accel import accelerated_multi_sinkhorn
from .driver import ApproxConfig, SizeCapError, approx_mot
from .regmot import MotInstance
from .report import NonConvergenceError, fmt
from .sinkhorn import multi_sinkhorn

EXIT_OK, EXIT_GUARANTEE, EXIT_PARSE, EXIT_NONCONV, EXIT_SIZE, EXIT_IO = 0, 1, 2, 3, 4, 5

SOLVER_NAMES = {"greedy": "greedy", "accel": "accelerated", "accelerated": "accelerated"}


class InputError(Exception):
    def __init__(self, msg, code):
        super().__init__(msg)
        self.code = code


def _out_dir(args) -> Path:
    d = Path(args.out or os.environ.get("MMOT_OUTPUT_DIR") or "mmot-out")
    d.mkdir(parents=True, exist_ok=True)
    return d


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _manifest(command: str, params: dict, inputs: dict) -> dict:
    return {"command": command, "params": params, "inputs": inputs, "version": __version__}


def _dump(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, sort_keys=True, indent=1, allow_nan=False) + "\n")


def _num(x):
    """JSON-safe float: NaN and infinities become null."""
    if x is None:
        return None
    x = float(x)
    return x if np.isfinite(x) else None


def _random_instance(n: int, m: int, seed: int) -> MotInstance:
    rng = bench.rng_for(seed)
    C = rng.uniform(0.0, 1.0, size=(n,) * m)
    r = rng.uniform(0.05, 1.0, size=(m, n))
    return MotInstance(C, r / r.sum(axis=1, keepdims=True))


def _load(args) -> tuple[MotInstance, dict]:
    if args.random is not None:
        n, m = args.random
        try:
            return _random_instance(n, m, args.seed), {}
        except ValueError as e:
            raise InputError(str(e), EXIT_PARSE) from e
    if not (args.cost and args.marginals):
        raise InputError("either --cost and --marginals or --random N M is required", EXIT_PARSE)
    try:
        inputs = {"cost": _sha256(args.cost), "marginals": _sha256(args.marginals)}
    except OSError as e:
        raise InputError(f"cannot read input: {e}", EXIT_IO) from e
    try:
        return regmot.load_instance(args.cost, args.marginals), inputs
    except OSError as e:
        raise InputError(f"cannot read input: {e}", EXIT_IO) from e
    except (ValueError, KeyError, TypeError) as e:
        raise InputError(f"malformed instance: {e}", EXIT_PARSE) from e


def _feasibility_error(X, marginals) -> float:
    return max(float(np.abs(tz.marginal(X, k) - marginals[k]).max()) for k in range(X.ndim))


# ---------------------------------------------------------------- solve

def cmd_solve(args) -> int:
    inst, inputs = _load(args)
    out = _out_dir(args)
    solver = SOLVER_NAMES[args.solver]
    config = ApproxConfig(epsilon=args.epsilon, solver=solver, eta=args.eta, eps_prime=args.eps_prime,
                          max_iter=args.max_iter, round_target=args.round_target)
    try:
        eta, eps_prime = config.resolve(inst)
    except ValueError as e:
        raise InputError(str(e), EXIT_PARSE) from e
    params = {"epsilon": args.epsilon, "eta": eta, "eps_prime": eps_prime, "solver": solver,
              "max_iter": args.max_iter, "round_target": args.round_target, "oracle": args.oracle,
              "seed": args.seed, "random": args.random, "n": inst.n, "m": inst.m}
    bundle = {"manifest": _manifest("solve", params, inputs), "trace_file": "trace.csv"}
    t0 = time.perf_counter()
    try:
        res = approx_mot(inst, config)
    except SizeCapError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SIZE
    except NonConvergenceError as e:
        e.report.write_trace_csv(out / "trace.csv")
        bundle.update(status="not converged", report=e.report.to_dict(include_trace=False))
        _dump(out / "result.json", bundle)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NONCONV
    res.report.write_trace_csv(out / "trace.csv")
    terms = res.guarantee_terms(inst)
    guarantee = {"lp_value": None, "gap": None, "satisfied": None,
                 "entropic_term": terms["entropic"], "rounding_term": terms["rounding"],
                 "budget": args.epsilon}
    code = EXIT_OK
    if args.oracle and inst.n ** inst.m <= oracle.ORACLE_CAP:
        lp = oracle.solve_mot(inst)
        gap = res.objective - lp.value
        guarantee.update(lp_value=lp.value, gap=gap, satisfied=bool(gap <= args.epsilon),
                         lp_status=lp.status)
        if gap > args.epsilon:
            code = EXIT_GUARANTEE
    bundle.update(
        status="ok", objective=res.objective, pre_rounding_objective=res.pre_rounding_objective,
        pre_rounding_deviation=res.pre_rounding_deviation,
        feasibility_error=_feasibility_error(res.plan, inst.marginals),
        within_iteration_bound=res.report.within_bound(),
        report=res.report.to_dict(include_trace=False), rounding=res.rounding_report.to_dict(),
        guarantee={k: (_num(v) if isinstance(v, float) else v) for k, v in guarantee.items()},
    )
    if args.write_plan:
        tz.save_tensor(out / "plan.json", res.plan)
        bundle["plan_file"] = "plan.json"
    _dump(out / "result.json", bundle)
    _dump(out / "timings.json", {"solve_seconds": time.perf_counter() - t0})
    print(f"objective {fmt(res.objective)}  iterations {res.report.iterations}  "
          f"feasibility {res.pre_rounding_deviation:.3g} -> {bundle['feasibility_error']:.3g}")
    if guarantee["gap"] is not None:
        print(f"LP optimum {fmt(guarantee['lp_value'])}  gap {guarantee['gap']:.6g}  "
              f"{'within' if guarantee['satisfied'] else 'EXCEEDS'} epsilon {args.epsilon}")
    return code


# ---------------------------------------------------------------- oracle

def cmd_oracle(args) -> int:
    inst, inputs = _load(args)
    out = _out_dir(args)
    try:
        lp = oracle.build_lp(inst)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SIZE
    sol = oracle.simplex_solve(lp)
    doc = {"manifest": _manifest("oracle solve", {"seed": args.seed, "random": args.random}, inputs),
           "value": sol.value, "status": sol.status, "rows": lp.rows,
           "plan": sol.plan(inst.cost.shape).reshape(-1).tolist()}
    _dump(out / "oracle.json", doc)
    print(f"status {sol.status}  value {fmt(sol.value)}")
    return EXIT_OK if sol.status == "optimal" else EXIT_NONCONV


# ---------------------------------------------------------------- tu

def cmd_tu(args) -> int:
    try:
        M = hardness.build_primal_constraints(args.n, args.m, order=args.order)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SIZE
    res = hardness.tu_check(M, args.max_order, budget=args.budget)
    print(f"constraint matrix ({M.shape[0]} x {M.shape[1]}):")
    for row in M:
        print("  " + " ".join(str(int(v)) for v in row))
    print(f"sufficient two-set test: {'pass' if hardness.sufficient_tu(M) else 'fail'}")
    print(f"verdict: {res.verdict}  ({res.checked} submatrices checked)")
    if res.witness_det is not None:
        print(f"witness rows {list(res.witness_rows)} cols {list(res.witness_cols)} det = {res.witness_det}")
    if args.out or os.environ.get("MMOT_OUTPUT_DIR"):
        params = {"n": args.n, "m": args.m, "order": args.order, "max_order": args.max_order,
                  "budget": args.budget}
        _dump(_out_dir(args) / "tu.json", {"manifest": _manifest("tu", params, {}),
                                          "matrix": M.tolist(), **res.to_dict()})
    return EXIT_OK


# ---------------------------------------------------------------- bench

def _bench_run(job):
    side, m, seed, eta, eps_prime, solver, max_iter = job
    loc = bench.grid_locations(side)
    inst = MotInstance(bench.barycenter_cost([loc] * m, np.full(m, 1.0 / m)),
                       bench.synthetic_marginals(side, m, seed))
    fn = multi_sinkhorn if solver == "greedy" else accelerated_multi_sinkhorn
    t0 = time.perf_counter()
    beta, rep = fn(inst, eta, eps_prime, max_iter)
    X = regmot.plan(inst, eta, beta)
    return rep, bench.metric_d(X, inst.marginals), time.perf_counter() - t0


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise InputError(f"bad number list {text!r}", EXIT_PARSE) from e


def cmd_bench_synthetic(args) -> int:
    out = _out_dir(args)
    etas = _floats(args.eta_list)
    solvers = ["greedy", "accelerated"] if args.solver == "both" else [SOLVER_NAMES[args.solver]]
    size = (args.side * args.side) ** args.m
    if size > args.cap:
        print(f"error: tensor of {size} entries exceeds the cap {args.cap}", file=sys.stderr)
        return EXIT_SIZE
    jobs = [(args.side, args.m, seed, eta, args.eps_prime, solver, args.max_iter)
            for eta in etas for solver in solvers for seed in range(args.seeds)]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            results = list(pool.map(_bench_run, jobs))
    else:
        results = [_bench_run(j) for j in jobs]

    trace_dir = out / "traces"
    trace_dir.mkdir(exist_ok=True)
    rows, timings, summary = [], [], {}
    for job, (rep, d, secs) in zip(jobs, results):
        _, _, seed, eta, _, solver, _ = job
        trace = f"traces/{solver}_eta{eta!r}_seed{seed}.csv"
        rep.write_trace_csv(out / trace)
        rows.append([seed, solver, fmt(eta), fmt(args.eps_prime), rep.iterations, rep.converged,
                     fmt(rep.final_residue), fmt(d), trace])
        timings.append({"seed": seed, "solver": solver, "eta": eta, "seconds": secs})
        summary.setdefault(f"{solver}/eta={eta!r}", []).append(rep.iterations)
    with open(out / "runs.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed", "solver", "eta", "eps_prime", "iterations", "converged", "E_final", "d_X",
                    "trace_file"])
        w.writerows(rows)
    params = {"side": args.side, "m": args.m, "seeds": args.seeds, "eta_list": etas,
              "eps_prime": args.eps_prime, "solver": solvers, "max_iter": args.max_iter}
    doc = {"manifest": _manifest("bench synthetic", params, {}),
           "groups": {k: {"median_iterations": float(np.median(v)), "iterations": v,
                          "runs": len(v)} for k, v in sorted(summary.items())}}
    _dump(out / "summary.json", doc)
    _dump(out / "timings.json", timings)
    for k, v in sorted(summary.items()):
        print(f"{k}: median iterations {np.median(v):g} over {len(v)} runs")
    failed = sum(not r[5] for r in rows)
    return EXIT_NONCONV if failed else EXIT_OK


def cmd_bench_barycenter(args) -> int:
    out = _out_dir(args)
    m = args.m
    lam = np.array(_floats(args.lam)) if args.lam else np.full(m, 1.0 / m)
    if lam.shape != (m,):
        raise InputError("--lam needs one weight per image", EXIT_PARSE)
    loc = bench.grid_locations(args.side)
    try:
        C = bench.barycenter_cost([loc] * m, lam)
        inst = MotInstance(C, bench.synthetic_marginals(args.side, m, args.seed))
    except ValueError as e:
        raise InputError(str(e), EXIT_PARSE) from e
    config = ApproxConfig(epsilon=args.epsilon, solver=SOLVER_NAMES[args.solver], eta=args.eta,
                          eps_prime=args.eps_prime, max_iter=args.max_iter)
    try:
        res = approx_mot(inst, config)
    except SizeCapError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SIZE
    except NonConvergenceError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NONCONV
    cloud = bench.extract_barycenter(res.plan, [loc] * m, lam, args.mass_threshold)
    with open(out / "barycenter.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "w"])
        for (x, y), wt in zip(cloud.locations, cloud.weights):
            w.writerow([fmt(x), fmt(y), fmt(wt)])
    params = {"side": args.side, "m": m, "seed": args.seed, "lam": lam.tolist(), "epsilon": args.epsilon,
              "eta": res.eta, "eps_prime": res.eps_prime, "solver": config.solver,
              "max_iter": args.max_iter, "mass_threshold": args.mass_threshold, "grid": args.grid}
    doc = {"manifest": _manifest("bench barycenter", params, {}), "points": len(cloud),
           "objective": res.objective, "iterations": res.report.iterations}
    if args.grid:
        img = bench.rasterize(cloud, args.grid)
        bench.write_pgm(out / "barycenter.pgm", img)
        doc["image_file"] = "barycenter.pgm"
    _dump(out / "barycenter.json", doc)
    print(f"{len(cloud)} support points, objective {fmt(res.objective)}")
    return EXIT_OK


# ---------------------------------------------------------------- parser

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_PARSE, f"{self.prog}: error: {message}\n")


def _instance_args(p):
    p.add_argument("--cost", help="cost tensor file (JSON, inline or manifest form)")
    p.add_argument("--marginals", help="JSON array of m marginal vectors")
    p.add_argument("--random", nargs=2, type=int, metavar=("N", "M"),
                   help="use a random instance with m axes of size n instead of files")
    p.add_argument("--seed", type=int, default=0, help="seed for --random")
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="mmot", description="Multimarginal optimal transport toolkit")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="epsilon-approximate transport plan")
    _instance_args(p)
    p.add_argument("--epsilon", type=float, default=0.25)
    p.add_argument("--eta", type=float, help="override eps / (2 m log n)")
    p.add_argument("--eps-prime", type=float, help="override eps / (8 |C|_inf)")
    p.add_argument("--solver", choices=["greedy", "accel"], default="greedy")
    p.add_argument("--max-iter", type=int)
    p.add_argument("--round-target", choices=["original", "smoothed"], default="original")
    p.add_argument("--oracle", action="store_true", help="compare with the exact LP optimum")
    p.add_argument("--write-plan", action="store_true")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("oracle", help="exact LP baseline")
    osub = p.add_subparsers(dest="oracle_command", required=True, parser_class=_Parser)
    q = osub.add_parser("solve", help="solve the LP by simplex")
    _instance_args(q)
    q.set_defaults(func=cmd_oracle)

    for name in ("tu", "tu-check"):
        p = sub.add_parser(name, help="total unimodularity check of the constraint matrix")
        p.add_argument("--n", type=int, required=True)
        p.add_argument("--m", type=int, required=True)
        p.add_argument("--max-order", type=int)
        p.add_argument("--order", choices=["slice", "kron"], default="slice")
        p.add_argument("--budget", type=int, default=5_000_000)
        p.add_argument("--out")
        p.set_defaults(func=cmd_tu)

    p = sub.add_parser("bench", help="synthetic-image experiments")
    bsub = p.add_subparsers(dest="bench_command", required=True, parser_class=_Parser)
    q = bsub.add_parser("synthetic", help="iteration counts of both solvers on random images")
    q.add_argument("--side", type=int, default=5)
    q.add_argument("--m", type=int, default=3)
    q.add_argument("--seeds", type=int, default=10)
    q.add_argument("--eta-list", default="0.2")
    q.add_argument("--eps-prime", type=float, default=1e-3)
    q.add_argument("--solver", choices=["greedy", "accel", "both"], default="both")
    q.add_argument("--max-iter", type=int)
    q.add_argument("--cap", type=int, default=2 * 10**7)
    q.add_argument("--jobs", type=int, default=1)
    q.add_argument("--out")
    q.set_defaults(func=cmd_bench_synthetic)

    q = bsub.add_parser("barycenter", help="free-support barycenter of random images")
    q.add_argument("--side", type=int, default=5)
    q.add_argument("--m", type=int, default=3)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--lam", help="comma-separated weights, default uniform")
    q.add_argument("--epsilon", type=float, default=0.05)
    q.add_argument("--eta", type=float)
    q.add_argument("--eps-prime", type=float)
    q.add_argument("--solver", choices=["greedy", "accel"], default="accel")
    q.add_argument("--max-iter", type=int)
    q.add_argument("--mass-threshold", type=float, default=bench.MASS_THRESHOLD)
    q.add_argument("--grid", type=int, help="also write a g x g PGM image")
    q.add_argument("--out")
    q.set_defaults(func=cmd_bench_barycenter)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code


if __name__ == "__main__":
    sys.exit(main())
