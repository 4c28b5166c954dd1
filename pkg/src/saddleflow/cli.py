"""Command-line interface.

Exit codes: 0 ok, 2 bad input, 3 integration failure, 4 bad data, 5 path
did not converge.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import diagnostics as dg
from .dynamics import DynamicsParams, PowerLaw
from .experiments import (PRESETS, ScenarioError, figure1_sweep, figure2_compare, preset,
                          regression_study, run_scenario)
from .fileio import load_scenario, read_csv_column, write_result
from .integrator import IntegrationError
from .problems import SaddlePoint, example1_problem, shifted_quadratic_problem
from .tikhonov import PathError, min_norm_solution, write_path_csv

EXIT_OK, EXIT_INPUT, EXIT_INTEGRATION, EXIT_DATA, EXIT_PATH = 0, 2, 3, 4, 5

log = logging.getLogger("saddleflow")


def _floats(text: str):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _timed_run(scn, out_dir):
    t = time.perf_counter()
    res = run_scenario(scn)
    return res, write_result(res, out_dir, time.perf_counter() - t)


def _summary(res) -> str:
    t = res.trajectory
    z = t.z[-1]
    n, m = t.n, t.m
    xy = np.linalg.norm(z[:n + m])
    parts = [f"{res.scenario.name}: t_end={t.t[-1]:g} |(x,y)|={xy:.6g} steps={t.accepted_steps}"]
    for name, vals in res.series.items():
        parts.append(f"{name}={vals[-1]:.6g}")
    return " ".join(parts)


def cmd_run(args) -> int:
    if (args.scenario is None) == (args.preset is None):
        raise ScenarioError("give exactly one of SCENARIO or --preset")
    scn = preset(args.preset) if args.preset else load_scenario(args.scenario)
    res, _ = _timed_run(scn, args.out)
    print(_summary(res))
    for name, fit in res.rate_fits.items():
        print(f"  rate {name}: slope={fit.slope:.6g} r2={fit.r_squared:.6g} floored={fit.floored}")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_check(args) -> int:
    params = DynamicsParams(args.alpha, args.q, args.p, args.c, PowerLaw(args.beta_pow), args.t0)
    report = dg.check_assumptions(params, sampled=args.sampled)
    if args.json:
        print(json.dumps(report.to_dict(), indent=2))
    else:
        print(report.to_text())
        regimes = [k for k, v in report.regimes.items() if v]
        print("certified regimes: " + (", ".join(regimes) if regimes else "none"))
    return EXIT_OK


def cmd_rate(args) -> int:
    try:
        t, v = read_csv_column(args.csv, args.column)
    except OSError as exc:
        raise ScenarioError(f"cannot read {args.csv}: {exc.strerror}") from None
    floored = 0
    if args.floor:
        v, floored = dg.floor_series(v)
    try:
        fit = dg.fit_rate(t, v, (args.t_a, args.t_b), floored=floored)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    print(f"slope={fit.slope:.10g} intercept={fit.intercept:.10g} r2={fit.r_squared:.10g} "
          f"points={fit.points} floored={fit.floored}")
    return EXIT_OK


def cmd_minnorm(args) -> int:
    if args.problem == "example1":
        problem = example1_problem()
        ref = np.zeros(4) if args.reference is None else np.array(args.reference)
    else:
        if not args.u:
            raise ScenarioError("--u is required for shifted_quadratic")
        u = np.array(args.u)
        problem = shifted_quadratic_problem(u)
        ref = np.concatenate([u, np.zeros(u.size)]) if args.reference is None else np.array(args.reference)
    if ref.size != problem.n + problem.m:
        raise ScenarioError(f"--reference needs {problem.n + problem.m} entries, got {ref.size}")
    saddle = SaddlePoint(ref[:problem.n], ref[problem.n:])
    sol = min_norm_solution(problem, saddle)
    print("z_bar = " + " ".join(f"{v:.12g}" for v in sol.z_bar))
    print(f"kkt_residual = {sol.kkt:.3e}")
    print(f"final_epsilon = {sol.epsilon:g} cauchy_gap = {sol.cauchy_gap:.3e}")
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        write_path_csv(args.out, sol.path, problem.n)
        print(f"wrote {args.out}")
    return EXIT_OK


def _write_batch(results, out_dir):
    out = Path(out_dir)
    for res in results:
        write_result(res, out / res.scenario.name, 0.0)
        print(_summary(res))


def cmd_sweep(args) -> int:
    t = time.perf_counter()
    results = figure1_sweep(workers=args.workers)
    _write_batch(results, args.out)
    for res in results:
        fit = res.rate_fits.get("gap")
        if fit is not None:
            print(f"  {res.scenario.name} gap slope={fit.slope:.4g}")
    log.info("sweep finished in %.1fs", time.perf_counter() - t)
    return EXIT_OK


def cmd_compare(args) -> int:
    reg, plain = figure2_compare(workers=args.workers)
    _write_batch([reg, plain], args.out)
    return EXIT_OK


def cmd_regress(args) -> int:
    results, comps = regression_study(kappas=args.kappa, m=args.m, n=args.n, seed=args.seed,
                                      t_end=args.t_end, workers=args.workers)
    _write_batch(results, args.out)
    for c in comps:
        verdict = "c=10 <= c=0" if c.regularised_not_worse else "c=10 > c=0"
        print(f"case{c.case} kappa={c.kappa:g}: phi_final c=0 {c.phi_final_plain:.10g} "
              f"c=10 {c.phi_final_regularised:.10g} ({verdict})")
    return EXIT_OK


def cmd_presets(args) -> int:
    for name in PRESETS:
        print(name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="saddleflow", description="Tikhonov-regularised primal-dual dynamics")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="integrate a scenario file, manifest or preset")
    p.add_argument("scenario", nargs="?", help="YAML scenario or manifest.json to replay")
    p.add_argument("--preset", help="named preset instead of a file (see `presets`)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("check", help="check growth, floor and integrability conditions")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--c", type=float, required=True)
    p.add_argument("--beta-pow", type=float, required=True, help="r in beta(t) = t^r")
    p.add_argument("--t0", type=float, default=1.0)
    p.add_argument("--sampled", action="store_true", help="use the grid/quadrature path")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("rate", help="fit a log-log slope to a CSV column")
    p.add_argument("csv")
    p.add_argument("--column", required=True)
    p.add_argument("--t-a", type=float, required=True)
    p.add_argument("--t-b", type=float, required=True)
    p.add_argument("--floor", action="store_true", help="clamp values at 1e-16 before the fit")
    p.set_defaults(func=cmd_rate)

    p = sub.add_parser("minnorm", help="minimal-norm saddle point via the regularised path")
    p.add_argument("--problem", choices=("example1", "shifted_quadratic"), default="example1")
    p.add_argument("--u", type=_floats, help="shift vector, comma separated")
    p.add_argument("--reference", type=_floats, help="reference saddle (x, y), comma separated")
    p.add_argument("--out", help="path CSV")
    p.set_defaults(func=cmd_minnorm)

    for name, fn, text in (("sweep", cmd_sweep, "p-sweep on the two-dimensional example"),
                           ("compare", cmd_compare, "with and without regularisation"),
                           ("regress", cmd_regress, "smoothed-L1 regression study")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--out", required=True)
        p.add_argument("--workers", type=int, default=None, help="overrides SADDLEFLOW_THREADS")
        if name == "regress":
            p.add_argument("--m", type=int, default=100)
            p.add_argument("--n", type=int, default=200)
            p.add_argument("--seed", type=int, default=0)
            p.add_argument("--t-end", type=float, default=100.0)
            p.add_argument("--kappa", type=_floats, default=[10.0, 200.0])
        p.set_defaults(func=fn)

    p = sub.add_parser("presets", help="list preset scenario names")
    p.set_defaults(func=cmd_presets)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except IntegrationError as exc:
        last = exc.last_state
        when = f" (last good t={last.t!r})" if last is not None else ""
        print(f"integration failed: {exc}{when}", file=sys.stderr)
        return EXIT_INTEGRATION
    except PathError as exc:
        print(f"path error: {exc}", file=sys.stderr)
        return EXIT_PATH
    except ValueError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
