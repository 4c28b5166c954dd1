"""Adaptive Dormand-Prince 5(4) integration with dense output.

The step controller is the elementary one: accept when the scaled RMS error
estimate is <= 1, then rescale the step by ``min(5, max(0.2, 0.9 err^-1/5))``.
Samples are produced on a fixed grid by the order-4 continuous extension of
Hairer, Norsett and Wanner (the one used by DOPRI5), so the output does not
depend on where the accepted steps happen to fall.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .dynamics import DynamicsParams, PowerLaw, SimState, phase_rhs
from .problems import ProblemSpec

# Butcher tableau
C2, C3, C4, C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
A71, A73, A74, A75, A76 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84

# fifth-order minus embedded fourth-order weights
E1, E3, E4, E5, E6, E7 = (71 / 57600, -71 / 16695, 71 / 1920,
                          -17253 / 339200, 22 / 525, -1 / 40)

# dense output
D1 = -12715105075 / 11282082432
D3 = 87487479700 / 32700410799
D4 = -10690763975 / 1880347072
D5 = 701980252875 / 199316789632
D6 = -1453857185 / 822651844
D7 = 69997945 / 29380423

SAFETY = 0.9
FAC_MIN, FAC_MAX = 0.2, 5.0


class IntegrationError(RuntimeError):
    """Integration stopped early; ``last_state`` is the last accepted state."""

    def __init__(self, message: str, last_state: Optional[SimState] = None):
        super().__init__(message)
        self.last_state = last_state


@dataclass(frozen=True)
class IntegratorConfig:
    t_end: float
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    h_init: float = 1e-3
    h_min: float = 1e-12
    h_max: float = 10.0
    sample_count: int = 500
    spacing: str = "log"

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError(f"tolerances must be > 0, got rel_tol={self.rel_tol}, abs_tol={self.abs_tol}")
        if not 0 < self.h_min <= self.h_init <= self.h_max:
            raise ValueError(f"need 0 < h_min <= h_init <= h_max, got {self.h_min}, {self.h_init}, {self.h_max}")
        if self.sample_count < 2:
            raise ValueError(f"sample_count must be >= 2, got {self.sample_count}")
        if self.spacing not in ("log", "linear"):
            raise ValueError(f"spacing must be 'log' or 'linear', got {self.spacing!r}")

    def sample_times(self, t0: float) -> np.ndarray:
        if not self.t_end > t0:
            raise ValueError(f"t_end = {self.t_end} must exceed t0 = {t0}")
        if self.spacing == "log":
            if not t0 > 0:
                raise ValueError(f"log-spaced samples need t0 > 0, got {t0}")
            ts = np.geomspace(t0, self.t_end, self.sample_count)
        else:
            ts = np.linspace(t0, self.t_end, self.sample_count)
        ts[0], ts[-1] = t0, self.t_end
        return ts


@dataclass(eq=False)
class Trajectory:
    """Samples of the phase vector on the output grid.

    ``t`` has shape ``(S,)`` and ``z`` has shape ``(S, 2n + 2m)`` with the
    column order ``(x, y, vx, vy)``.
    """

    t: np.ndarray
    z: np.ndarray
    n: int
    m: int
    accepted_steps: int = 0
    rejected_steps: int = 0
    rhs_evals: int = 0
    backend: str = "python"

    def __len__(self) -> int:
        return len(self.t)

    def state(self, i: int) -> SimState:
        return SimState.from_phase(float(self.t[i]), self.z[i], self.n, self.m)

    @property
    def samples(self) -> list:
        return [self.state(i) for i in range(len(self))]

    @property
    def x(self) -> np.ndarray:
        return self.z[:, :self.n]

    @property
    def y(self) -> np.ndarray:
        return self.z[:, self.n:self.n + self.m]

    @property
    def vx(self) -> np.ndarray:
        return self.z[:, self.n + self.m:2 * self.n + self.m]

    @property
    def vy(self) -> np.ndarray:
        return self.z[:, 2 * self.n + self.m:]


def _error_norm(err: np.ndarray, y_new: np.ndarray, y_old: np.ndarray, rtol: float, atol: float) -> float:
    scale = atol + rtol * np.maximum(np.abs(y_new), np.abs(y_old))
    return float(np.sqrt(np.mean((err / scale) ** 2)))


def solve(F: Callable[[float, np.ndarray], np.ndarray], t0: float, y0: np.ndarray,
          cfg: IntegratorConfig, on_sample: Optional[Callable[[float, np.ndarray], None]] = None):
    """Integrate ``y' = F(t, y)`` from ``t0`` and return samples on ``cfg``'s grid.

    Returns:
        tuple: ``(times, values, accepted, rejected, rhs_evals)``.
    """
    ts = cfg.sample_times(t0)
    y = np.array(y0, dtype=float)
    if not np.all(np.isfinite(y)):
        raise IntegrationError("non-finite initial state")
    out = np.empty((len(ts), y.size))
    t_end = cfg.t_end
    rtol, atol = cfg.rel_tol, cfg.abs_tol

    def emit(i, value):
        out[i] = value
        if on_sample is not None:
            view = out[i].copy()
            view.setflags(write=False)
            on_sample(float(ts[i]), view)

    evals = 0

    def call(t, v):
        nonlocal evals
        evals += 1
        k = F(t, v)
        if not np.all(np.isfinite(k)):
            raise FloatingPointError(f"non-finite right-hand side at t={t!r}")
        return k

    emit(0, y)
    nxt = 1
    t = t0
    h = min(cfg.h_init, cfg.h_max)
    accepted = rejected = 0
    try:
        k1 = call(t, y)
        while nxt < len(ts):
            if t + h >= t_end or t_end - (t + h) < cfg.h_min:
                h = t_end - t
                last = True
            else:
                last = False
            k2 = call(t + C2 * h, y + h * (A21 * k1))
            k3 = call(t + C3 * h, y + h * (A31 * k1 + A32 * k2))
            k4 = call(t + C4 * h, y + h * (A41 * k1 + A42 * k2 + A43 * k3))
            k5 = call(t + C5 * h, y + h * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4))
            k6 = call(t + h, y + h * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5))
            y_new = y + h * (A71 * k1 + A73 * k3 + A74 * k4 + A75 * k5 + A76 * k6)
            t_new = t_end if last else t + h
            k7 = call(t_new, y_new)
            err_vec = h * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7)
            err = _error_norm(err_vec, y_new, y, rtol, atol)
            fac = FAC_MAX if err == 0.0 else min(FAC_MAX, max(FAC_MIN, SAFETY * err ** -0.2))

            if err > 1.0:
                rejected += 1
                h *= fac
                if h < cfg.h_min:
                    raise IntegrationError(
                        f"step size underflow at t={t!r} (h={h:.3e} < h_min={cfg.h_min:.3e})",
                        last_state=(t, y.copy()))
                continue

            accepted += 1
            # dense output on (t, t_new]
            if ts[nxt] <= t_new:
                r1 = y
                r2 = y_new - y
                r3 = h * k1 - r2
                r4 = r2 - h * k7 - r3
                r5 = h * (D1 * k1 + D3 * k3 + D4 * k4 + D5 * k5 + D6 * k6 + D7 * k7)
                while nxt < len(ts) and ts[nxt] <= t_new:
                    if ts[nxt] == t_new:
                        emit(nxt, y_new)
                    else:
                        th = (ts[nxt] - t) / h
                        th1 = 1.0 - th
                        emit(nxt, r1 + th * (r2 + th1 * (r3 + th * (r4 + th1 * r5))))
                    nxt += 1
            t, y, k1 = t_new, y_new, k7
            h = min(h * fac, cfg.h_max)
    except FloatingPointError as exc:
        raise IntegrationError(f"{exc} (last accepted t={t!r})", last_state=(t, y.copy())) from exc
    return ts, out, accepted, rejected, evals


def _solve_compiled(problem: ProblemSpec, params: DynamicsParams, cfg: IntegratorConfig,
                    y0: np.ndarray, on_sample):
    """Same algorithm as ``solve`` with the stepping loop compiled by numba."""
    from . import _compiled as ck

    t0 = params.t0
    ts = cfg.sample_times(t0)
    n, m = problem.n, problem.m
    kind, fpar, fvec, gvec = problem.kernel
    prm = np.array([params.alpha, params.q, params.p, params.c, params.beta.r], dtype=float)
    K = np.ascontiguousarray(problem.K, dtype=float)
    fpar = np.asarray(fpar, dtype=float)
    fvec = np.asarray(fvec, dtype=float)
    gvec = np.asarray(gvec, dtype=float)
    y = np.array(y0, dtype=float)
    if not np.all(np.isfinite(y)):
        raise IntegrationError("non-finite initial state")
    out = np.empty((len(ts), y.size))
    out[0] = y

    def emit(i):
        if on_sample is not None:
            view = out[i].copy()
            view.setflags(write=False)
            on_sample(float(ts[i]), view)

    emit(0)
    k1 = ck.rhs_once(t0, y, n, m, K, prm, kind, fpar, fvec, gvec)
    if not np.all(np.isfinite(k1)):
        raise IntegrationError(f"non-finite right-hand side at t={t0!r}", last_state=(t0, y.copy()))
    t = float(t0)
    h = min(cfg.h_init, cfg.h_max)
    nxt, accepted, rejected, evals = 1, 0, 0, 1
    while nxt < len(ts):
        stop = nxt + 1 if on_sample is not None else len(ts)
        status, new_nxt, t, h, a, r, e = ck.advance(
            ts, out, nxt, stop, y, k1, t, h, cfg.t_end, cfg.rel_tol, cfg.abs_tol,
            cfg.h_min, cfg.h_max, n, m, K, prm, kind, fpar, fvec, gvec)
        accepted += a
        rejected += r
        evals += e
        for i in range(nxt, new_nxt):
            emit(i)
        nxt = new_nxt
        if status == ck.STATUS_UNDERFLOW:
            raise IntegrationError(f"step size underflow at t={t!r} (h={h:.3e} < h_min={cfg.h_min:.3e})",
                                   last_state=(t, y.copy()))
        if status == ck.STATUS_NONFINITE:
            raise IntegrationError(f"non-finite right-hand side near t={t!r}", last_state=(t, y.copy()))
    return ts, out, accepted, rejected, evals


def compiled_available(problem: ProblemSpec, params: DynamicsParams) -> bool:
    if problem.kernel is None or not isinstance(params.beta, PowerLaw):
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def integrate_with_monitor(state0: SimState, params: DynamicsParams, problem: ProblemSpec,
                           cfg: IntegratorConfig,
                           monitor: Optional[Callable[[SimState], None]] = None,
                           backend: str = "auto") -> Trajectory:
    """Integrate the primal-dual system, calling ``monitor`` on every output sample.

    The monitor receives read-only copies; an exception it raises aborts the
    run as an ``IntegrationError`` that names the sample time.

    ``backend`` is ``"python"``, ``"compiled"`` (builtin problem families with
    power-law scaling only) or ``"auto"``, which picks the compiled loop when
    it applies.
    """
    if state0.t != params.t0:
        raise ValueError(f"initial state time {state0.t} differs from t0 = {params.t0}")
    if backend not in ("auto", "python", "compiled"):
        raise ValueError(f"unknown backend {backend!r}")
    use_compiled = compiled_available(problem, params)
    if backend == "compiled" and not use_compiled:
        raise ValueError("compiled backend needs a builtin problem family and power-law beta")
    if backend == "python":
        use_compiled = False
    n, m = problem.n, problem.m

    on_sample = None
    if monitor is not None:
        def on_sample(t, z):
            try:
                monitor(SimState.from_phase(t, z, n, m))
            except Exception as exc:  # noqa: BLE001 - any monitor failure aborts the run
                raise IntegrationError(f"monitor failed at t={t!r}: {exc!r}") from exc

    z0 = state0.phase()
    if z0.size != 2 * (n + m):
        raise ValueError(f"initial state has {z0.size} phase entries, problem needs {2 * (n + m)}")
    try:
        if use_compiled:
            ts, zs, acc, rej, evals = _solve_compiled(problem, params, cfg, z0, on_sample)
        else:
            ts, zs, acc, rej, evals = solve(phase_rhs(params, problem), params.t0, z0, cfg, on_sample)
    except IntegrationError as exc:
        if isinstance(exc.last_state, tuple):
            t, z = exc.last_state
            exc.last_state = SimState.from_phase(t, z, n, m)
        raise
    return Trajectory(ts, zs, n, m, acc, rej, evals, "compiled" if use_compiled else "python")


def integrate(state0: SimState, params: DynamicsParams, problem: ProblemSpec,
              cfg: IntegratorConfig, backend: str = "auto") -> Trajectory:
    return integrate_with_monitor(state0, params, problem, cfg, None, backend)
