"""Energy functions, assumption checks and empirical rate fits.

Three energies are tracked along a trajectory (``d = alpha - 1``,
``gap = L(x, y*) - L(x*, y)``, ``T = (c / 2t^p)(|x|^2 + |y|^2)``):

* fast:   ``E1 = t^{2q} beta (gap + T)``,
          ``E2 = 1/2 |d (x - x*) + t^q x'|^2 + d/2 (1 - q t^{q-1}) |x - x*|^2``,
          ``E3`` the same expression in ``(y, y')``;
* slow:   ``E1 = beta (gap + T)``,
          ``E2 = 1/2 |(d/t^q)(x - x*) + x'|^2 + d/2 (q/t^{q+1} + 1/t^{2q}) |x - x*|^2``;
* strong: the slow energy minus ``(c beta / 2t^p)(|x_bar|^2 + |y_bar|^2)`` for
          the minimal-norm saddle ``(x_bar, y_bar)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import integrate as sp_integrate

from .dynamics import CustomScaling, DynamicsParams, PowerLaw, SimState, primal_dual_gap
from .integrator import Trajectory
from .problems import ProblemSpec, SaddlePoint

LOG_FLOOR = 1e-16
DESCENT_REL_SLACK = 1e-9
SAMPLED_T_MAX = 1e6


# -- energies ------------------------------------------------------------------------

@dataclass(frozen=True)
class EnergyReport:
    t: float
    E: Optional[float] = None
    E1: Optional[float] = None
    E2: Optional[float] = None
    E3: Optional[float] = None
    E_hat: Optional[float] = None
    E_hat_components: Optional[tuple] = None
    E_tilde: Optional[float] = None

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.E_hat_components is not None:
            d["E_hat_components"] = list(self.E_hat_components)
        return d


def _sq(v) -> float:
    return float(np.dot(v, v))


def _tikhonov_term(params: DynamicsParams, t: float, x, y) -> float:
    return params.c / (2.0 * t ** params.p) * (_sq(x) + _sq(y))


def fast_energy_terms(state: SimState, params: DynamicsParams, problem: ProblemSpec,
                      saddle: SaddlePoint):
    t, a, q = state.t, params.alpha, params.q
    d = a - 1.0
    gap = primal_dual_gap(problem, saddle, state.x, state.y)
    e1 = t ** (2 * q) * params.beta.beta(t) * (gap + _tikhonov_term(params, t, state.x, state.y))
    tq = t ** q
    weight = 0.5 * d * (1.0 - q * t ** (q - 1.0))
    dx = state.x - saddle.x_star
    dy = state.y - saddle.y_star
    e2 = 0.5 * _sq(d * dx + tq * state.vx) + weight * _sq(dx)
    e3 = 0.5 * _sq(d * dy + tq * state.vy) + weight * _sq(dy)
    return e1, e2, e3


def slow_energy_terms(state: SimState, params: DynamicsParams, problem: ProblemSpec,
                      saddle: SaddlePoint):
    t, a, q = state.t, params.alpha, params.q
    d = a - 1.0
    gap = primal_dual_gap(problem, saddle, state.x, state.y)
    e1 = params.beta.beta(t) * (gap + _tikhonov_term(params, t, state.x, state.y))
    lead = d / t ** q
    weight = 0.5 * d * (q / t ** (q + 1.0) + 1.0 / t ** (2 * q))
    dx = state.x - saddle.x_star
    dy = state.y - saddle.y_star
    e2 = 0.5 * _sq(lead * dx + state.vx) + weight * _sq(dx)
    e3 = 0.5 * _sq(lead * dy + state.vy) + weight * _sq(dy)
    return e1, e2, e3


def energy_fast(state: SimState, params: DynamicsParams, problem: ProblemSpec,
                saddle: SaddlePoint) -> EnergyReport:
    e1, e2, e3 = fast_energy_terms(state, params, problem, saddle)
    return EnergyReport(t=state.t, E=e1 + e2 + e3, E1=e1, E2=e2, E3=e3)


def energy_slow(state: SimState, params: DynamicsParams, problem: ProblemSpec,
                saddle: SaddlePoint) -> EnergyReport:
    parts = slow_energy_terms(state, params, problem, saddle)
    return EnergyReport(t=state.t, E_hat=sum(parts), E_hat_components=parts)


def energy_strong(state: SimState, params: DynamicsParams, problem: ProblemSpec,
                  min_norm_saddle: SaddlePoint) -> float:
    e_hat = sum(slow_energy_terms(state, params, problem, min_norm_saddle))
    t = state.t
    shift = params.c * params.beta.beta(t) / (2.0 * t ** params.p) * min_norm_saddle.norm() ** 2
    return e_hat - shift


def energy_report(state: SimState, params: DynamicsParams, problem: ProblemSpec,
                  saddle: SaddlePoint, min_norm_saddle: Optional[SaddlePoint] = None) -> EnergyReport:
    """All three energies at one state. ``E_tilde`` needs the minimal-norm saddle."""
    e1, e2, e3 = fast_energy_terms(state, params, problem, saddle)
    parts = slow_energy_terms(state, params, problem, saddle)
    e_tilde = None
    if min_norm_saddle is not None:
        e_tilde = energy_strong(state, params, problem, min_norm_saddle)
    return EnergyReport(t=state.t, E=e1 + e2 + e3, E1=e1, E2=e2, E3=e3,
                        E_hat=sum(parts), E_hat_components=parts, E_tilde=e_tilde)


# -- assumption checks ----------------------------------------------------------------

@dataclass(frozen=True)
class Condition:
    """Verdict for one condition.

    ``holds`` is the eventual verdict: pointwise conditions hold from
    ``threshold_t`` on, which may lie after ``t0`` (see ``from_t0``).
    """

    holds: bool
    threshold_t: Optional[float]
    detail: str
    from_t0: bool = False
    method: str = "analytic"


@dataclass(frozen=True)
class AssumptionReport:
    conditions: dict
    witness_M: float
    regimes: dict
    method: str

    def __getitem__(self, name: str) -> Condition:
        return self.conditions[name]

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "witness_M": self.witness_M,
            "regimes": dict(self.regimes),
            "conditions": {k: asdict(v) for k, v in self.conditions.items()},
        }

    def to_text(self) -> str:
        lines = [f"assumption check ({self.method}), witness M = {self.witness_M:.6g}"]
        for name, cond in self.conditions.items():
            verdict = "holds" if cond.holds else "fails"
            thr = "-" if cond.threshold_t is None else f"{cond.threshold_t:.6g}"
            lines.append(f"  {name:20s} {verdict:5s}  threshold_t={thr:>10s}  from_t0={cond.from_t0}  {cond.detail}")
        for name, ok in self.regimes.items():
            lines.append(f"  regime {name:13s} {'certified' if ok else 'not certified'}")
        return "\n".join(lines)


CONDITION_NAMES = ("growth_fast", "tikhonov_floor", "fast_integrable",
                   "growth_slow", "slow_integrable", "tikhonov_persistent")


def max_witness(params: DynamicsParams) -> float:
    """Largest admissible growth constant ``M = q (1 + 1/(2 alpha - 1))``."""
    return params.q * 2.0 * params.alpha / (2.0 * params.alpha - 1.0)


def _growth_threshold(params: DynamicsParams, r: float, k: float) -> float:
    # r/t <= (alpha-1)/t^q - k/t  <=>  t^{1-q} >= (r + k)/(alpha-1)
    return ((r + k) / (params.alpha - 1.0)) ** (1.0 / (1.0 - params.q))


def _pointwise(threshold: float, t0: float, detail: str) -> Condition:
    return Condition(True, threshold, detail, from_t0=threshold <= t0)


def _regimes(conds: dict, c: float) -> dict:
    h = {k: v.holds for k, v in conds.items()}
    return {
        "fast": h["growth_fast"] and h["tikhonov_floor"] and h["fast_integrable"],
        "slow": h["growth_slow"] and h["slow_integrable"],
        "strong": h["growth_slow"] and h["tikhonov_persistent"] and h["slow_integrable"] and c > 0,
    }


def _check_power_law(params: DynamicsParams) -> AssumptionReport:
    a, q, p, c, t0 = params.alpha, params.q, params.p, params.c, params.t0
    r = params.beta.r
    M = max_witness(params)
    conds = {}

    thr = _growth_threshold(params, r, 2 * q)
    conds["growth_fast"] = _pointwise(thr, t0, f"t^(1-q) >= (r+2q)/(alpha-1) from t = {thr:.6g}")

    if c <= 0:
        conds["tikhonov_floor"] = Condition(False, None, "needs c > 0")
    else:
        lhs = q * (1.0 - q) / c
        k = 2.0 - p + r
        if k > 0:
            thr = lhs ** (1.0 / k)
            conds["tikhonov_floor"] = _pointwise(thr, t0, f"{lhs:.6g} <= t^{k:.6g} from t = {thr:.6g}")
        elif k == 0:
            ok = lhs <= 1.0
            conds["tikhonov_floor"] = Condition(ok, t0 if ok else None,
                                                f"{lhs:.6g} <= 1 (exponent 2-p+r = 0)", from_t0=ok)
        else:
            conds["tikhonov_floor"] = Condition(False, None, f"t^{k:.6g} -> 0 (exponent 2-p+r < 0)")

    e = q - p + r
    conds["fast_integrable"] = Condition(e < -1, t0 if e < -1 else None,
                                         f"exponent q-p+r = {e:.6g} {'<' if e < -1 else '>='} -1",
                                         from_t0=e < -1)

    thr = _growth_threshold(params, r, M)
    conds["growth_slow"] = _pointwise(thr, t0, f"t^(1-q) >= (r+M)/(alpha-1) from t = {thr:.6g} with M = {M:.6g}")

    e = -q - p + r
    conds["slow_integrable"] = Condition(e < -1, t0 if e < -1 else None,
                                         f"exponent -q-p+r = {e:.6g} {'<' if e < -1 else '>='} -1",
                                         from_t0=e < -1)

    e = M - p + r
    ok = e > 0 and c > 0
    detail = f"exponent M-p+r = {e:.6g} {'>' if e > 0 else '<='} 0"
    if c <= 0:
        detail += "; no Tikhonov term (c = 0)"
    conds["tikhonov_persistent"] = Condition(ok, t0 if ok else None, detail, from_t0=ok)
    return AssumptionReport(conds, M, _regimes(conds, c), "analytic")


def _tail_exponent(fn, t_max: float) -> float:
    """Local power-law exponent of ``fn`` between ``t_max / 2`` and ``t_max``."""
    lo, hi = fn(0.5 * t_max), fn(t_max)
    return math.log(hi / lo) / math.log(2.0)


def _sampled_pointwise(ok: np.ndarray, grid: np.ndarray, t0: float, detail: str) -> Condition:
    if not ok[-1]:
        return Condition(False, None, detail + " (fails at the end of the grid)", method="sampled")
    bad = np.nonzero(~ok)[0]
    thr = float(grid[0] if bad.size == 0 else grid[bad[-1] + 1])
    return Condition(True, thr, detail, from_t0=bool(bad.size == 0), method="sampled")


def _sampled_integral(fn, t0: float, t_max: float, label: str) -> Condition:
    e = _tail_exponent(fn, t_max)
    ok = e < -1
    # substitute t = e^u so the quadrature sees an O(1) range
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sp_integrate.IntegrationWarning)
        value, _ = sp_integrate.quad(lambda u: fn(math.exp(u)) * math.exp(u),
                                     math.log(t0), math.log(t_max), limit=200)
    detail = f"tail exponent of {label} ~ {e:.6g}; integral over [t0, {t_max:g}] ~ {value:.6g}"
    return Condition(ok, t0 if ok else None, detail, from_t0=ok, method="sampled")


def _check_sampled(params: DynamicsParams, t_max: float, samples: int) -> AssumptionReport:
    a, q, p, c, t0 = params.alpha, params.q, params.p, params.c, params.t0
    bs = params.beta
    M = max_witness(params)
    grid = np.geomspace(t0, t_max, samples)
    beta = np.array([bs.beta(t) for t in grid])
    beta_dot = np.array([bs.beta_dot(t) for t in grid])
    if not np.all(np.isfinite(beta)) or np.any(beta <= 0):
        raise ValueError(f"beta ({bs.label}) has non-positive samples on [t0, {t_max:g}]")
    ratio = beta_dot / beta
    conds = {}
    conds["growth_fast"] = _sampled_pointwise(
        ratio <= (a - 1.0) / grid ** q - 2 * q / grid, grid, t0, "beta'/beta <= (alpha-1)/t^q - 2q/t")
    if c <= 0:
        conds["tikhonov_floor"] = Condition(False, None, "needs c > 0", method="sampled")
    else:
        conds["tikhonov_floor"] = _sampled_pointwise(
            q * (1.0 - q) / c <= grid ** (2.0 - p) * beta, grid, t0, "q(1-q)/c <= t^(2-p) beta")
    conds["fast_integrable"] = _sampled_integral(lambda s: s ** (q - p) * bs.beta(s), t0, t_max, "t^(q-p) beta")
    conds["growth_slow"] = _sampled_pointwise(
        ratio <= (a - 1.0) / grid ** q - M / grid, grid, t0, f"beta'/beta <= (alpha-1)/t^q - M/t, M = {M:.6g}")
    conds["slow_integrable"] = _sampled_integral(lambda s: s ** (-q - p) * bs.beta(s), t0, t_max, "t^(-q-p) beta")
    e = _tail_exponent(lambda s: s ** (M - p) * bs.beta(s), t_max)
    ok = e > 0 and c > 0
    conds["tikhonov_persistent"] = Condition(ok, t0 if ok else None,
                                             f"tail exponent of t^(M-p) beta ~ {e:.6g}",
                                             from_t0=ok, method="sampled")
    return AssumptionReport(conds, M, _regimes(conds, c), "sampled")


def check_assumptions(params: DynamicsParams, *, sampled: bool = False,
                      t_max: float = SAMPLED_T_MAX, samples: int = 2000) -> AssumptionReport:
    """Verdicts for every growth, floor and integrability condition.

    Power-law scalings are decided in closed form. Custom scalings (or
    ``sampled=True``) are decided on a log grid over ``[t0, t_max]`` with
    integrals judged by their tail exponent; those verdicts are labeled
    ``"sampled"`` and are evidence, not proof.
    """
    if isinstance(params.beta, PowerLaw) and not sampled:
        return _check_power_law(params)
    return _check_sampled(params, max(t_max, 10.0 * params.t0), samples)


def power_law_as_custom(r: float) -> CustomScaling:
    """``t^r`` wrapped as a custom scaling, for cross-checking the sampled path."""
    return CustomScaling(lambda t: t ** r, lambda t: r * t ** (r - 1.0), label=f"t^{r:g}")


# -- rate fits -------------------------------------------------------------------------

@dataclass(frozen=True)
class RateFit:
    window: tuple
    slope: float
    intercept: float
    r_squared: float
    points: int
    floored: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["window"] = list(self.window)
        return d


def floor_series(values, floor: float = LOG_FLOOR):
    """Clamp values at ``floor`` for log-scale work; returns ``(floored, count)``."""
    v = np.asarray(values, dtype=float)
    low = v < floor
    return np.where(low, floor, v), int(np.count_nonzero(low))


def fit_rate(t, values, window: Sequence[float], *, floored: int = 0) -> RateFit:
    """Least-squares line through ``(log t, log value)`` for samples inside ``window``."""
    t_a, t_b = float(window[0]), float(window[1])
    if not t_a < t_b:
        raise ValueError(f"window must satisfy t_a < t_b, got [{t_a}, {t_b}]")
    t = np.asarray(t, dtype=float)
    v = np.asarray(values, dtype=float)
    sel = (t >= t_a) & (t <= t_b)
    ts, vs = t[sel], v[sel]
    if ts.size < 10:
        raise ValueError(f"rate fit needs >= 10 samples in [{t_a}, {t_b}], got {ts.size}")
    if np.any(~np.isfinite(vs)) or np.any(vs <= 0):
        raise ValueError("rate fit needs positive finite values; floor the series first "
                         "(values at or below zero usually mean the gap underflowed)")
    lx, ly = np.log(ts), np.log(vs)
    A = np.column_stack([lx, np.ones_like(lx)])
    (slope, intercept), *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(np.sum(resid ** 2)) / ss_tot
    return RateFit((t_a, t_b), float(slope), float(intercept), r2, int(ts.size), floored)


# -- Lyapunov audit ----------------------------------------------------------------------

@dataclass
class AuditReport:
    t_start: float
    passed: bool
    max_violation: float
    worst_t: Optional[float]
    checked: int
    rel_slack: float
    abs_slack: float
    times: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))
    energies: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))

    def to_dict(self) -> dict:
        return {
            "t_start": self.t_start,
            "passed": self.passed,
            "max_violation": self.max_violation,
            "worst_t": self.worst_t,
            "checked": self.checked,
            "rel_slack": self.rel_slack,
            "abs_slack": self.abs_slack,
        }


def burn_in_time(params: DynamicsParams) -> float:
    """Earliest time from which the fast-energy descent argument applies.

    The maximum of ``t0``, the time after which ``q t^{q-1} <= 1`` and the
    thresholds of the growth and floor conditions.
    """
    q = params.q
    t1 = q ** (1.0 / (1.0 - q))
    report = check_assumptions(params)
    ts = [params.t0, t1]
    for name in ("growth_fast", "tikhonov_floor"):
        thr = report[name].threshold_t
        if thr is not None:
            ts.append(thr)
    return max(ts)


def lyapunov_audit(traj: Trajectory, params: DynamicsParams, problem: ProblemSpec,
                   saddle: SaddlePoint, *, t_start: Optional[float] = None,
                   rel_slack: float = DESCENT_REL_SLACK, abs_slack: float = 0.0) -> AuditReport:
    """Check ``E(t_{k+1}) - E(t_k) <= int source`` between consecutive samples.

    The source term is ``((alpha-1)c/2) s^{q-p} beta(s) (|x*|^2 + |y*|^2)``,
    integrated by the trapezoid rule; it vanishes when the saddle is the
    origin. A step violates when the excess is above
    ``rel_slack * |E(t_k)| + abs_slack``.
    """
    if t_start is None:
        t_start = burn_in_time(params)
    idx = np.nonzero(traj.t >= t_start)[0]
    times = traj.t[idx]
    energies = np.array([sum(fast_energy_terms(traj.state(i), params, problem, saddle)) for i in idx])
    coef = 0.5 * (params.alpha - 1.0) * params.c * saddle.norm() ** 2
    src = np.array([coef * s ** (params.q - params.p) * params.beta.beta(s) for s in times])
    max_violation = -math.inf
    worst_t = None
    passed = True
    for k in range(len(times) - 1):
        bound = 0.5 * (src[k] + src[k + 1]) * (times[k + 1] - times[k])
        excess = energies[k + 1] - energies[k] - bound
        if excess > max_violation:
            max_violation, worst_t = float(excess), float(times[k + 1])
        if excess > rel_slack * abs(energies[k]) + abs_slack:
            passed = False
    if len(times) < 2:
        max_violation = 0.0
    return AuditReport(float(t_start), passed, float(max_violation), worst_t,
                       max(len(times) - 1, 0), rel_slack, abs_slack, times, energies)


def corrupt_velocities(traj: Trajectory, saddle: SaddlePoint) -> Trajectory:
    """Copy of ``traj`` with velocities negated from one sample on.

    The flip starts at the sample after the midpoint where the velocity
    points most strongly toward the saddle, so the fast energy jumps up
    there. Used as a negative control for the audit.
    """
    n, m = traj.n, traj.m
    z = np.array(traj.z)
    half = len(traj) // 2
    dx = z[half:, :n] - saddle.x_star
    dy = z[half:, n:n + m] - saddle.y_star
    inner = np.sum(dx * z[half:, n + m:2 * n + m], axis=1) + np.sum(dy * z[half:, 2 * n + m:], axis=1)
    k = half + int(np.argmin(inner))
    z[k:, n + m:] *= -1.0
    return Trajectory(np.array(traj.t), z, n, m, traj.accepted_steps, traj.rejected_steps,
                      traj.rhs_evals, traj.backend)
