"""Scenario definitions, the runner that turns them into diagnostic series,
and the preset experiment families (p-sweep, with/without regularisation,
regression study).
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import diagnostics as dg
from .dynamics import DynamicsParams, PowerLaw, SimState, primal_dual_gap
from .integrator import IntegrationError, IntegratorConfig, Trajectory, integrate_with_monitor
from .linalg import Pcg32
from .problems import (ProblemSpec, RegressionConfig, SaddlePoint, example1_min_norm_saddle,
                       example1_problem, primal_objective, shifted_quadratic_problem,
                       smoothed_l1_problem)
from .tikhonov import min_norm_solution

SERIES_NAMES = ("gap", "traj_error", "vel_norm", "E", "E_hat", "E_tilde", "phi", "dist_min_norm")
NEEDS_SADDLE = {"gap", "traj_error", "E", "E_hat", "E_tilde", "dist_min_norm"}
NEEDS_MIN_NORM = {"E_tilde", "dist_min_norm"}
RATE_SERIES = ("gap", "traj_error", "vel_norm", "E", "E_hat", "phi")

STANDARD_INITIAL = dict(x=(1.0, 1.5), y=(1.0, 1.5), vx=(1.0, 1.0), vy=(1.0, 1.0))
REGRESSION_CASES = ((0.2, 0.1), (0.4, 0.2), (0.6, 0.3))
SWEEP_P = (0.8, 1.0, 1.2, 1.4)


class ScenarioError(ValueError):
    """Invalid scenario; ``field`` names the offending entry."""

    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None):
        self.message = message
        self.field = field
        self.line = line
        where = ""
        if field:
            where = f"{field}: "
        if line is not None:
            where = f"line {line}: " + where
        super().__init__(where + message)


@dataclass(frozen=True)
class ProblemRef:
    kind: str = "example1"
    regression: Optional[RegressionConfig] = None
    u: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in ("example1", "regression", "shifted_quadratic"):
            raise ScenarioError(f"unknown problem kind {self.kind!r}", "problem.kind")
        if self.kind == "regression" and self.regression is None:
            raise ScenarioError("regression problem needs its configuration", "problem")
        if self.kind == "shifted_quadratic" and not self.u:
            raise ScenarioError("shifted_quadratic problem needs u", "problem.u")

    def build(self) -> ProblemSpec:
        if self.kind == "example1":
            return example1_problem()
        if self.kind == "shifted_quadratic":
            return shifted_quadratic_problem(np.array(self.u, dtype=float))
        return smoothed_l1_problem(self.regression, Pcg32(self.regression.seed))[0]


@dataclass(frozen=True)
class Scenario:
    name: str
    problem: ProblemRef
    params: DynamicsParams
    initial: SimState
    integrator: IntegratorConfig
    outputs: tuple = ("gap", "traj_error", "vel_norm")
    rate_window: Optional[tuple] = None
    saddle: Optional[SaddlePoint] = None
    backend: str = "auto"

    def __post_init__(self):
        if self.initial.t != self.params.t0:
            raise ScenarioError(f"initial time {self.initial.t} differs from t0 = {self.params.t0}", "initial")
        for name in self.outputs:
            if name not in SERIES_NAMES:
                raise ScenarioError(f"unknown series {name!r}; choose from {', '.join(SERIES_NAMES)}", "outputs")
        if self.problem.kind == "regression" and self.saddle is None:
            bad = sorted(NEEDS_SADDLE.intersection(self.outputs))
            if bad:
                raise ScenarioError(f"series {', '.join(bad)} need a reference saddle for regression problems",
                                    "outputs")
        if "phi" in self.outputs and self.problem.kind != "regression":
            raise ScenarioError("series 'phi' is defined for regression problems only", "outputs")
        if self.rate_window is not None and not self.rate_window[0] < self.rate_window[1]:
            raise ScenarioError(f"rate_window must satisfy t_a < t_b, got {list(self.rate_window)}", "rate_window")
        if self.backend not in ("auto", "python", "compiled"):
            raise ScenarioError(f"unknown backend {self.backend!r}", "integrator.backend")

    @property
    def seeds(self) -> list:
        return [self.problem.regression.seed] if self.problem.regression is not None else []


@dataclass
class ScenarioResult:
    scenario: Scenario
    trajectory: Trajectory
    series: dict
    rate_fits: dict
    assumptions: dg.AssumptionReport
    problem: ProblemSpec = field(repr=False)
    saddle: Optional[SaddlePoint] = None
    min_norm: Optional[SaddlePoint] = None

    def final(self, name: str) -> float:
        return float(self.series[name][-1])


# -- series ----------------------------------------------------------------------------

@dataclass
class _SeriesContext:
    params: DynamicsParams
    problem: ProblemSpec
    saddle: Optional[SaddlePoint]
    min_norm: Optional[SaddlePoint]
    names: tuple


def _series_row(state: SimState, ctx: _SeriesContext) -> list:
    row = []
    for name in ctx.names:
        if name == "gap":
            v = primal_dual_gap(ctx.problem, ctx.saddle, state.x, state.y)
        elif name == "traj_error":
            v = float(np.linalg.norm(state.x - ctx.saddle.x_star) + np.linalg.norm(state.y - ctx.saddle.y_star))
        elif name == "vel_norm":
            v = float(np.linalg.norm(state.vx) + np.linalg.norm(state.vy))
        elif name == "E":
            v = dg.energy_fast(state, ctx.params, ctx.problem, ctx.saddle).E
        elif name == "E_hat":
            v = dg.energy_slow(state, ctx.params, ctx.problem, ctx.saddle).E_hat
        elif name == "E_tilde":
            v = dg.energy_strong(state, ctx.params, ctx.problem, ctx.min_norm)
        elif name == "phi":
            v = primal_objective(ctx.problem, state.x)
        else:  # dist_min_norm
            v = float(np.linalg.norm(np.concatenate([state.x, state.y]) - ctx.min_norm.z))
        row.append(float(v))
    return row


def recompute_series(result: ScenarioResult) -> dict:
    """Series recomputed from the stored trajectory (cross-check of the monitor)."""
    ctx = _SeriesContext(result.scenario.params, result.problem, result.saddle, result.min_norm,
                         tuple(result.scenario.outputs))
    rows = np.array([_series_row(result.trajectory.state(i), ctx) for i in range(len(result.trajectory))])
    return {name: rows[:, k] for k, name in enumerate(ctx.names)}


def _reference_saddles(scn: Scenario, problem: ProblemSpec):
    kind = scn.problem.kind
    if scn.saddle is not None:
        saddle = scn.saddle
    elif kind == "example1":
        saddle = example1_min_norm_saddle()
    elif kind == "shifted_quadratic":
        saddle = SaddlePoint(np.array(scn.problem.u, dtype=float), np.zeros(problem.m))
    else:
        return None, None
    if not NEEDS_MIN_NORM.intersection(scn.outputs):
        return saddle, None
    if kind == "example1" and scn.saddle is None:
        return saddle, saddle
    if kind == "shifted_quadratic":
        return saddle, saddle  # unique saddle
    return saddle, min_norm_solution(problem, saddle).saddle()


def run_scenario(scn: Scenario) -> ScenarioResult:
    """Integrate ``scn`` while recording the requested series at every sample."""
    problem = scn.problem.build()
    saddle, min_norm = _reference_saddles(scn, problem)
    if saddle is not None and (saddle.x_star.shape != (problem.n,) or saddle.y_star.shape != (problem.m,)):
        raise ScenarioError(f"saddle dims do not match problem ({problem.n}, {problem.m})", "saddle")
    if scn.initial.x.shape != (problem.n,) or scn.initial.y.shape != (problem.m,):
        raise ScenarioError(f"initial state dims ({scn.initial.x.size}, {scn.initial.y.size}) "
                            f"do not match problem ({problem.n}, {problem.m})", "initial")
    ctx = _SeriesContext(scn.params, problem, saddle, min_norm, tuple(scn.outputs))
    rows = []
    traj = integrate_with_monitor(scn.initial, scn.params, problem, scn.integrator,
                                  lambda s: rows.append(_series_row(s, ctx)), backend=scn.backend)
    rows = np.array(rows, dtype=float).reshape(len(traj), len(ctx.names))
    series = {name: rows[:, k] for k, name in enumerate(ctx.names)}
    fits = {}
    if scn.rate_window is not None:
        for name in ctx.names:
            if name not in RATE_SERIES:
                continue
            vals, floored = dg.floor_series(series[name])
            try:
                fits[name] = dg.fit_rate(traj.t, vals, scn.rate_window, floored=floored)
            except ValueError:
                continue
    return ScenarioResult(scn, traj, series, fits, dg.check_assumptions(scn.params), problem, saddle, min_norm)


# -- presets -----------------------------------------------------------------------------

def _standard_initial(t0: float = 1.0) -> SimState:
    return SimState(t0, *(np.array(STANDARD_INITIAL[k]) for k in ("x", "y", "vx", "vy")))


def _zero_initial(n: int, m: int, t0: float = 1.0) -> SimState:
    return SimState(t0, np.zeros(n), np.zeros(m), np.zeros(n), np.zeros(m))


def example1_scenario(name: str, p: float, c: float, t_end: float, *, alpha: float = 3.0,
                      q: float = 0.8, r: float = 0.5, sample_count: int = 500, spacing: str = "log",
                      outputs=("gap", "traj_error", "vel_norm"), rate_window=None) -> Scenario:
    return Scenario(name, ProblemRef("example1"), DynamicsParams(alpha, q, p, c, PowerLaw(r), 1.0),
                    _standard_initial(), IntegratorConfig(t_end, sample_count=sample_count, spacing=spacing),
                    tuple(outputs), rate_window)


def regression_scenario(q: float, r: float, c: float, kappa: float, *, m: int = 100, n: int = 200,
                        seed: int = 0, t_end: float = 100.0, sample_count: int = 200,
                        case: Optional[int] = None) -> Scenario:
    label = f"case{case}" if case is not None else f"q{q:g}-r{r:g}"
    cfg = RegressionConfig(m=m, n=n, lam=0.1, a=100.0, kappa=kappa, seed=seed)
    return Scenario(f"regression-{label}-c{c:g}-k{kappa:g}-{m}x{n}", ProblemRef("regression", cfg),
                    DynamicsParams(6.0, q, 2.0, c, PowerLaw(r), 1.0), _zero_initial(n, m),
                    IntegratorConfig(t_end, sample_count=sample_count), ("phi", "vel_norm"))


def _build_presets() -> dict:
    presets = {}
    for p in SWEEP_P:
        presets[f"figure1-p{p:g}"] = lambda p=p: example1_scenario(f"figure1-p{p:g}", p, 1.0, 200.0,
                                                                   rate_window=(20.0, 200.0))
    for c in (1.0, 0.0):
        presets[f"figure2-c{c:g}"] = lambda c=c: example1_scenario(f"figure2-c{c:g}", 0.8, c, 20.0)
    # step 0.25 on [1, 500] puts t = 5, 50 and 125 exactly on the grid
    presets["fast-rate"] = lambda: example1_scenario(
        "fast-rate", 2.5, 1.0, 500.0, sample_count=1997, spacing="linear", outputs=("gap", "traj_error", "vel_norm", "E"),
        rate_window=(50.0, 500.0))
    presets["slow-decay"] = lambda: example1_scenario(
        "slow-decay", 0.8, 1.0, 500.0, sample_count=1997, spacing="linear",
        outputs=("gap", "traj_error", "vel_norm", "E_hat", "E_tilde", "dist_min_norm"))
    for kappa in (10.0, 200.0):
        for i, (q, r) in enumerate(REGRESSION_CASES, start=1):
            for c in (0.0, 10.0):
                key = f"regression-case{i}-c{c:g}-k{kappa:g}"
                presets[key] = lambda q=q, r=r, c=c, kappa=kappa, i=i: regression_scenario(q, r, c, kappa, case=i)
    return presets


PRESETS = _build_presets()


def preset(name: str) -> Scenario:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ScenarioError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}") from None


# -- batch runs ---------------------------------------------------------------------------

def worker_count(default: int = 4) -> int:
    """Thread-pool size from ``SADDLEFLOW_THREADS`` (at least 1)."""
    raw = os.environ.get("SADDLEFLOW_THREADS")
    if raw is None or raw.strip() == "":
        return max(1, min(default, os.cpu_count() or 1))
    try:
        value = int(raw)
    except ValueError:
        raise ScenarioError(f"SADDLEFLOW_THREADS must be an integer, got {raw!r}") from None
    return max(1, value)


def _run_labeled(scn: Scenario) -> ScenarioResult:
    try:
        return run_scenario(scn)
    except IntegrationError as exc:
        raise IntegrationError(f"scenario {scn.name}: {exc}", exc.last_state) from exc


def run_many(scenarios: Sequence[Scenario], workers: Optional[int] = None) -> list:
    """Run independent scenarios on a bounded thread pool; results keep input order."""
    scenarios = list(scenarios)
    workers = worker_count() if workers is None else max(1, workers)
    if workers == 1 or len(scenarios) <= 1:
        return [_run_labeled(s) for s in scenarios]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_labeled, scenarios))


def figure1_sweep(p_values: Sequence[float] = SWEEP_P, workers: Optional[int] = None) -> list:
    """Example 1 on [1, 200] once per ``p`` (alpha=3, q=0.8, c=1, beta=t^0.5)."""
    return run_many([preset(f"figure1-p{p:g}") if p in SWEEP_P else
                     example1_scenario(f"figure1-p{p:g}", p, 1.0, 200.0, rate_window=(20.0, 200.0))
                     for p in p_values], workers)


def figure2_compare(workers: Optional[int] = None):
    """Example 1 on [1, 20] with c=1 and c=0; returns ``(regularised, plain)``."""
    a, b = run_many([preset("figure2-c1"), preset("figure2-c0")], workers)
    return a, b


@dataclass(frozen=True)
class RegressionComparison:
    case: int
    q: float
    r: float
    kappa: float
    phi_final_plain: float
    phi_final_regularised: float

    @property
    def regularised_not_worse(self) -> bool:
        return self.phi_final_regularised <= self.phi_final_plain


def regression_study(cases: Sequence[tuple] = REGRESSION_CASES, kappas: Sequence[float] = (10.0, 200.0),
                     *, m: int = 100, n: int = 200, seed: int = 0, t_end: float = 100.0,
                     workers: Optional[int] = None):
    """Every ``(q, r)`` case with c in {0, 10} for each ``kappa``.

    Returns:
        tuple: ``(results, comparisons)``; results are ordered by kappa, case,
        then c = 0 before c = 10.
    """
    scns = []
    keys = []
    for kappa in kappas:
        for i, (q, r) in enumerate(cases, start=1):
            for c in (0.0, 10.0):
                scns.append(regression_scenario(q, r, c, kappa, m=m, n=n, seed=seed, t_end=t_end, case=i))
            keys.append((i, q, r, kappa))
    results = run_many(scns, workers)
    comps = []
    for k, (i, q, r, kappa) in enumerate(keys):
        plain, reg = results[2 * k], results[2 * k + 1]
        comps.append(RegressionComparison(i, q, r, kappa, plain.final("phi"), reg.final("phi")))
    return results, comps

