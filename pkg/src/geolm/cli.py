"""Command-line harness: ``geolm list | fit | compare``.

Exit codes for ``fit``: 0 converged, 1 usage or data error, 2 budget
exhausted, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import suite
from .diagnostics import curvature_report, estimate_kappa
from .errors import GeoLMError
from .io import dumps_json, fmt_float, log_to_csv, result_to_dict
from .trustregion import Policy, Status, TrustRegionConfig, run

EXIT_OK, EXIT_USAGE, EXIT_BUDGET, EXIT_FAILURE = 0, 1, 2, 3

COMPARE_COLUMNS = ("problem", "start", "variant", "policy", "status", "iterations",
                   "r_evals", "j_evals", "rpp_evals", "final_cost")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text):
    try:
        return np.array([float(x) for x in text.split(",")])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def resolve_seed(seed):
    if seed is not None:
        return seed
    env = os.environ.get("GEOLM_SEED")
    if env is None or env == "":
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"GEOLM_SEED must be an integer, got {env!r}") from None


def build_parser():
    p = _Parser(prog="geolm", description="Levenberg-Marquardt with geodesic acceleration")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    pl = sub.add_parser("list", help="list builtin problems")
    pl.add_argument("--tag")

    pf = sub.add_parser("fit", help="fit one problem")
    pf.add_argument("problem", help="builtin problem name, or model name with --data")
    pf.add_argument("--data", help="CSV file with header t,y")
    pf.add_argument("--start", type=_floats)
    accel = pf.add_mutually_exclusive_group()
    accel.add_argument("--accel", dest="accel", action="store_true", default=True)
    accel.add_argument("--no-accel", dest="accel", action="store_false")
    pf.add_argument("--policy", choices=[x.value for x in Policy], default="delta")
    pf.add_argument("--alpha", type=float)
    pf.add_argument("--delta0", type=float)
    pf.add_argument("--delta-hat", type=float)
    pf.add_argument("--gtol", type=float)
    pf.add_argument("--max-iter", type=int)
    pf.add_argument("--format", choices=["csv", "json"], default="csv")
    pf.add_argument("--out")
    pf.add_argument("--diagnostics", action="store_true")
    pf.add_argument("--seed", type=int)
    pf.add_argument("--quiet", action="store_true")

    pc = sub.add_parser("compare", help="LM vs LM+GA over the builtin suite")
    pc.add_argument("--tag")
    pc.add_argument("--out")
    pc.add_argument("--seed", type=int)
    pc.add_argument("--format", choices=["csv", "json"], default="csv")
    pc.add_argument("--timing", action="store_true",
                    help="add a wall_time column (output is then not reproducible)")
    return p


def cmd_list(tag=None) -> str:
    lines = []
    for s in suite.builtin_problems(tag):
        p = s.problem
        lines.append(f"{s.name}\tN={p.n_params}\tM={p.n_residuals}\ttags={','.join(s.tags)}")
    return "\n".join(lines) + ("\n" if lines else "")


def _config_from_args(args):
    cfg = TrustRegionConfig(use_acceleration=args.accel, policy=args.policy)
    overrides = {}
    for attr, key in (("alpha", "alpha"), ("delta0", "delta0"), ("delta_hat", "delta_hat"),
                      ("gtol", "gtol"), ("max_iter", "max_iterations")):
        val = getattr(args, attr)
        if val is not None:
            overrides[key] = val
    try:
        return replace(cfg, **overrides)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _resolve_problem(name, data):
    if data is not None:
        if name not in suite.MODELS:
            raise UsageError(f"unknown model {name!r}; models: {', '.join(sorted(suite.MODELS))}")
        return suite.fit_problem_from_csv(name, data)
    try:
        return suite.get_problem(name)
    except KeyError:
        names = ", ".join(s.name for s in suite.builtin_problems())
        raise UsageError(f"unknown problem {name!r}; builtin problems: {names}") from None


def _exit_code(status):
    if status.converged:
        return EXIT_OK
    return EXIT_BUDGET if status is Status.BUDGET else EXIT_FAILURE


def _write(text, out):
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def cmd_fit(args) -> int:
    seed = resolve_seed(args.seed)
    sp = _resolve_problem(args.problem, args.data)
    config = _config_from_args(args)
    theta0 = sp.start_points[0] if args.start is None else args.start
    if len(theta0) != sp.problem.n_params:
        raise UsageError(f"--start needs {sp.problem.n_params} values, got {len(theta0)}")
    result = run(sp.problem, theta0, config)

    diag = None
    if args.diagnostics and np.all(np.isfinite(result.theta)):
        try:
            rep = curvature_report(sp.problem, result.theta)
            kappa = estimate_kappa(sp.problem, result.theta, seed=seed)
            diag = {"gn_norm": rep.gn_norm, "neglected_norm": rep.neglected_norm,
                    "projected_neglected_norm": rep.projected_neglected_norm,
                    "ratio": rep.ratio, "kappa": kappa, "seed": seed}
        except GeoLMError as exc:
            diag = {"error": str(exc)}

    if args.format == "json":
        payload = result_to_dict(result)
        payload["problem"] = sp.name
        if diag is not None:
            payload["diagnostics"] = diag
        _write(dumps_json(payload), args.out)
    else:
        _write(log_to_csv(result.log), args.out)

    if not args.quiet:
        c = result.counters
        lines = [
            f"problem   {sp.name}",
            f"status    {result.status.value}",
            f"theta     {' '.join(fmt_float(x) for x in result.theta)}",
            f"cost      {fmt_float(result.cost)}",
            f"|g|       {fmt_float(result.grad_norm)}",
            f"evals     residual={c.residual_evals} jacobian={c.jacobian_evals} "
            f"second={c.second_deriv_evals} iterations={result.iterations}",
        ]
        if diag is not None:
            lines.append("diag      " + " ".join(f"{k}={v}" for k, v in diag.items()))
        print("\n".join(lines), file=sys.stderr)
    return _exit_code(result.status)


def compare_rows(tag=None, timing=False, base=None):
    """Run every (problem, start, variant, policy) combination; one dict per run."""
    base = TrustRegionConfig() if base is None else base
    problems = suite.builtin_problems(tag)
    rows = []
    for sp in problems:
        for k, x0 in enumerate(sp.start_points):
            for variant, accel in (("LM", False), ("LM+GA", True)):
                for policy in Policy:
                    cfg = replace(base, use_acceleration=accel, policy=policy)
                    t0 = time.perf_counter()
                    try:
                        res = run(sp.problem, x0, cfg)
                        status, iters, c, fcost = res.status.value, res.iterations, res.counters, res.cost
                    except Exception as exc:  # one failed run must not abort the table
                        status, iters, c, fcost = f"error:{type(exc).__name__}", 0, None, float("nan")
                    row = {
                        "problem": sp.name, "start": k, "variant": variant, "policy": policy.value,
                        "status": status, "iterations": iters,
                        "r_evals": c.residual_evals if c else 0,
                        "j_evals": c.jacobian_evals if c else 0,
                        "rpp_evals": c.second_deriv_evals if c else 0,
                        "final_cost": fcost,
                    }
                    if timing:
                        row["wall_time"] = time.perf_counter() - t0
                    rows.append(row)
    return rows


def format_compare(rows, fmt="csv", timing=False):
    cols = COMPARE_COLUMNS + (("wall_time",) if timing else ())
    if fmt == "json":
        clean = [{k: (fmt_float(v) if isinstance(v, float) else v) for k, v in r.items()} for r in rows]
        return dumps_json(clean)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([fmt_float(r[c]) if isinstance(r[c], float) else r[c] for c in cols])
    return buf.getvalue()


def cmd_compare(args) -> int:
    resolve_seed(args.seed)
    rows = compare_rows(args.tag, args.timing)
    if not rows:
        raise UsageError(f"no builtin problems match tag {args.tag!r}")
    _write(format_compare(rows, args.format, args.timing), args.out)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "list":
            sys.stdout.write(cmd_list(args.tag))
            return EXIT_OK
        if args.command == "fit":
            return cmd_fit(args)
        return cmd_compare(args)
    except (UsageError, GeoLMError, OSError) as exc:
        print(f"geolm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
