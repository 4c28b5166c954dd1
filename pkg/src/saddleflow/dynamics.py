"""Right-hand side of the Tikhonov-regularised inertial primal-dual system.

With extrapolation weight ``w(t) = t^q / (alpha - 1)`` and Tikhonov weight
``eps(t) = c / t^p`` the second-order system reads

    x'' + (alpha/t^q) x' + beta(t) (grad f(x) + K^T (y + w y') + eps x) = 0
    y'' + (alpha/t^q) y' - beta(t) (K (x + w x') - grad g(y) - eps y) = 0

It is integrated as a first-order system on the phase vector
``(x, y, x', y')``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .problems import ProblemSpec, SaddlePoint

GAP_TOLERANCE = 1e-12


@dataclass(frozen=True)
class PowerLaw:
    """Time scaling ``beta(t) = t^r``."""

    r: float

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError(f"beta.r = {self.r} violates r > 0")

    def beta(self, t: float) -> float:
        return t ** self.r

    def beta_dot(self, t: float) -> float:
        return self.r * t ** (self.r - 1.0)


@dataclass(frozen=True)
class CustomScaling:
    """User-supplied time scaling and its derivative."""

    beta_eval: Callable[[float], float]
    beta_dot_eval: Callable[[float], float]
    label: str = "custom"

    def beta(self, t: float) -> float:
        return float(self.beta_eval(t))

    def beta_dot(self, t: float) -> float:
        return float(self.beta_dot_eval(t))


Scaling = Union[PowerLaw, CustomScaling]


def check_custom_scaling(scaling: CustomScaling, t0: float, t_max: float | None = None,
                         samples: int = 400) -> None:
    """Raise ``ValueError`` if ``beta`` is non-positive or decreasing on a log grid."""
    t_max = t_max if t_max is not None else 1e4 * t0
    grid = np.geomspace(t0, t_max, samples)
    vals = np.array([scaling.beta(t) for t in grid])
    if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
        raise ValueError(f"beta ({scaling.label}) must be positive on [t0, {t_max:g}]")
    if np.any(np.diff(vals) < -1e-12 * np.abs(vals[:-1])):
        raise ValueError(f"beta ({scaling.label}) must be nondecreasing on [t0, {t_max:g}]")


@dataclass(frozen=True)
class DynamicsParams:
    alpha: float
    q: float
    p: float
    c: float
    beta: Scaling
    t0: float = 1.0

    def __post_init__(self):
        if not self.alpha > 1:
            raise ValueError(f"alpha = {self.alpha} violates alpha > 1")
        if not 0 < self.q < 1:
            raise ValueError(f"q = {self.q} violates 0 < q < 1")
        if not self.p > 0:
            raise ValueError(f"p = {self.p} violates p > 0")
        if not self.c >= 0:
            raise ValueError(f"c = {self.c} violates c >= 0")
        if not self.t0 > 0:
            raise ValueError(f"t0 = {self.t0} violates t0 > 0")
        if isinstance(self.beta, CustomScaling):
            check_custom_scaling(self.beta, self.t0)

    def damping(self, t: float) -> float:
        return self.alpha / t ** self.q

    def extrapolation(self, t: float) -> float:
        return t ** self.q / (self.alpha - 1.0)

    def tikhonov(self, t: float) -> float:
        return self.c / t ** self.p


@dataclass(frozen=True, eq=False)
class SimState:
    t: float
    x: np.ndarray
    y: np.ndarray
    vx: np.ndarray
    vy: np.ndarray

    @classmethod
    def from_phase(cls, t: float, z: np.ndarray, n: int, m: int) -> "SimState":
        return cls(t, z[:n], z[n:n + m], z[n + m:2 * n + m], z[2 * n + m:])

    def phase(self) -> np.ndarray:
        return np.concatenate([self.x, self.y, self.vx, self.vy]).astype(float)


def _finite(name: str, v: np.ndarray, t: float) -> np.ndarray:
    if not np.all(np.isfinite(v)):
        raise FloatingPointError(f"non-finite {name} at t={t!r}")
    return v


def rhs(state: SimState, params: DynamicsParams, problem: ProblemSpec):
    """Phase derivative ``(dx, dy, dvx, dvy)`` at ``state``."""
    t = state.t
    if not t > 0:
        raise ValueError(f"rhs evaluated at t={t}; the damping is singular for t <= 0")
    x, y, vx, vy = state.x, state.y, state.vx, state.vy
    if x.shape != (problem.n,) or y.shape != (problem.m,):
        raise ValueError(f"state dims ({x.size}, {y.size}) do not match problem ({problem.n}, {problem.m})")
    K = problem.K
    damp = params.damping(t)
    w = params.extrapolation(t)
    eps = params.tikhonov(t)
    b = params.beta.beta(t)
    try:
        gf = _finite("grad f", np.asarray(problem.f_grad(x), dtype=float), t)
        gg = _finite("grad g", np.asarray(problem.g_grad(y), dtype=float), t)
    except OverflowError as exc:
        raise FloatingPointError(f"non-finite gradient at t={t!r} ({exc})") from None
    dvx = -damp * vx - b * (gf + K.T @ (y + w * vy) + eps * x)
    dvy = -damp * vy + b * (K @ (x + w * vx) - gg - eps * y)
    return vx.copy(), vy.copy(), dvx, dvy


def phase_rhs(params: DynamicsParams, problem: ProblemSpec) -> Callable[[float, np.ndarray], np.ndarray]:
    """``F(t, z)`` on the flat phase vector ``(x, y, vx, vy)``."""
    n, m = problem.n, problem.m

    def F(t: float, z: np.ndarray) -> np.ndarray:
        return np.concatenate(rhs(SimState.from_phase(t, z, n, m), params, problem))

    return F


def lagrangian(problem: ProblemSpec, x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return float(problem.f_eval(x) + np.dot(problem.K @ x, y) - problem.g_eval(y))


def primal_dual_gap(problem: ProblemSpec, saddle: SaddlePoint, x, y) -> float:
    """``L(x, y*) - L(x*, y)``; raises if it is negative beyond ``GAP_TOLERANCE``.

    Evaluated as ``[f(x) - f(x*)] + [g(y) - g(y*)] + <Kx, y*> - <Kx*, y>`` so
    that problems with stable difference hooks keep accuracy near the saddle.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xs, ys = saddle.x_star, saddle.y_star
    K = problem.K
    gap = (problem.f_delta(x, xs) + problem.g_delta(y, ys)
           + float(np.dot(K @ x, ys)) - float(np.dot(K @ xs, y)))
    if gap < -GAP_TOLERANCE:
        raise ValueError(f"negative primal-dual gap {gap:.3e}: the reference point is not a saddle point")
    return gap


def kkt_residual(problem: ProblemSpec, x, y) -> float:
    """``||grad f(x) + K^T y|| + ||grad g(y) - K x||``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    rx = problem.f_grad(x) + problem.K.T @ y
    ry = problem.g_grad(y) - problem.K @ x
    return float(np.linalg.norm(rx) + np.linalg.norm(ry))


def stationarity_residual(problem: ProblemSpec, params: DynamicsParams, t: float, x, y) -> float:
    """Residual of the regularised stationarity system at time ``t`` (zero velocities)."""
    eps = params.tikhonov(t)
    rx = problem.f_grad(x) + problem.K.T @ y + eps * np.asarray(x)
    ry = problem.K @ x - problem.g_grad(y) - eps * np.asarray(y)
    return float(max(np.max(np.abs(rx)), np.max(np.abs(ry))))
