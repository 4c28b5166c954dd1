"""Tikhonov approximation curve of the saddle set and its minimal-norm limit.

For a reference saddle ``(x*, y*)`` the merit function

    Phi(z) = L(x, y*) - L(x*, y),    z = (x, y),

is convex, nonnegative and vanishes exactly on the saddle set. Adding
``eps/2 |z|^2`` makes it strongly convex; its minimiser ``z_eps`` tends to the
minimal-norm saddle point as ``eps -> 0`` and satisfies ``|z_eps| <= |z_bar|``.
For fixed ``(x*, y*)`` the x- and y-blocks decouple, so each block is solved
on its own.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dynamics import kkt_residual
from .problems import ProblemSpec, SaddlePoint

ARMIJO = 1e-4
SHRINK = 0.5
MAX_ITER = 10 ** 6
DEFAULT_SCHEDULE = tuple(10.0 ** -k for k in range(9))
CAUCHY_TOL = 1e-7
KKT_TOL = 1e-8
INEQUALITY_SLACK = 1e-10


class PathError(RuntimeError):
    """The regularised path did not converge."""


@dataclass(frozen=True)
class PathPoint:
    epsilon: float
    z: np.ndarray
    grad_norm: float
    iterations: int = 0


@dataclass(frozen=True)
class MinNormSolution:
    z_bar: np.ndarray
    n: int
    kkt: float
    epsilon: float
    cauchy_gap: float
    path: list = field(repr=False, default_factory=list)

    @property
    def x(self) -> np.ndarray:
        return self.z_bar[:self.n]

    @property
    def y(self) -> np.ndarray:
        return self.z_bar[self.n:]

    def saddle(self) -> SaddlePoint:
        return SaddlePoint(self.x.copy(), self.y.copy())


def _split(problem: ProblemSpec, z):
    z = np.asarray(z, dtype=float)
    if z.shape != (problem.n + problem.m,):
        raise ValueError(f"z has shape {z.shape}, expected ({problem.n + problem.m},)")
    return z[:problem.n], z[problem.n:]


# Phi restricted to each block, written with the stable difference hooks

def _phi_x(problem: ProblemSpec, saddle: SaddlePoint, x) -> float:
    return problem.f_delta(x, saddle.x_star) + float(np.dot(problem.K @ (x - saddle.x_star), saddle.y_star))


def _phi_y(problem: ProblemSpec, saddle: SaddlePoint, y) -> float:
    return problem.g_delta(y, saddle.y_star) - float(np.dot(problem.K @ saddle.x_star, y - saddle.y_star))


def _grad_x(problem: ProblemSpec, saddle: SaddlePoint, x) -> np.ndarray:
    return np.asarray(problem.f_grad(x), dtype=float) + problem.K.T @ saddle.y_star


def _grad_y(problem: ProblemSpec, saddle: SaddlePoint, y) -> np.ndarray:
    return np.asarray(problem.g_grad(y), dtype=float) - problem.K @ saddle.x_star


def phi_value(problem: ProblemSpec, saddle: SaddlePoint, z) -> float:
    x, y = _split(problem, z)
    return _phi_x(problem, saddle, x) + _phi_y(problem, saddle, y)


def phi_grad(problem: ProblemSpec, saddle: SaddlePoint, z) -> np.ndarray:
    """``(grad f(x) + K^T y*, grad g(y) - K x*)``."""
    x, y = _split(problem, z)
    return np.concatenate([_grad_x(problem, saddle, x), _grad_y(problem, saddle, y)])


def _lipschitz_estimate(grad, v0: np.ndarray, iters: int = 20) -> float:
    """Power iteration on finite-difference Hessian-vector products at ``v0``."""
    size = v0.size
    rng = np.random.default_rng(size)
    d = rng.standard_normal(size)
    d /= np.linalg.norm(d)
    g0 = grad(v0)
    h = 1e-6 * max(1.0, float(np.linalg.norm(v0)))
    lam = 0.0
    for _ in range(iters):
        hv = (grad(v0 + h * d) - g0) / h
        nrm = float(np.linalg.norm(hv))
        if nrm == 0.0 or not math.isfinite(nrm):
            break
        lam = nrm
        d = hv / nrm
    return max(lam, 1e-12)


def _descend(value, grad, v0: np.ndarray, eps: float, tol: float, max_iter: int,
             history: Optional[list]):
    """Gradient descent with Armijo backtracking on ``value(v) + eps/2 |v|^2``."""
    v = np.array(v0, dtype=float)
    if v.size == 0:
        return v, 0.0, 0

    def obj(u):
        return value(u) + 0.5 * eps * float(np.dot(u, u))

    step = 1.0 / (eps + _lipschitz_estimate(grad, v))
    fv = obj(v)
    if history is not None:
        history.append(fv)
    for it in range(max_iter):
        g = grad(v) + eps * v
        gn = float(np.linalg.norm(g))
        if gn <= tol:
            return v, gn, it
        gg = gn * gn
        while True:
            cand = v - step * g
            fc = obj(cand)
            if step * gg < 1e-14 * max(1.0, abs(fv)):
                # below roundoff of the objective the Armijo test is blind;
                # require a smaller gradient instead
                if np.linalg.norm(grad(cand) + eps * cand) < gn:
                    break
            elif fc <= fv - ARMIJO * step * gg:
                break
            step *= SHRINK
            if step < 1e-300:
                raise PathError(f"line search failed at eps={eps:g} (gradient norm {gn:.3e})")
        v, fv = cand, fc
        if history is not None:
            history.append(fv)
        step /= SHRINK  # let the step grow back after a successful move
    gn = float(np.linalg.norm(grad(v) + eps * v))
    if gn <= tol:
        return v, gn, max_iter
    raise PathError(f"iteration cap {max_iter} reached at eps={eps:g} (gradient norm {gn:.3e})")


def solve_regularized(problem: ProblemSpec, saddle: SaddlePoint, epsilon: float, z_init,
                      tol: float = 1e-10, *, max_iter: int = MAX_ITER,
                      history: Optional[dict] = None) -> PathPoint:
    """Minimise ``Phi(z) + eps/2 |z|^2`` block by block.

    ``history``, when given, receives the objective values of the iterates
    under the keys ``"x"`` and ``"y"``.
    """
    if not epsilon > 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    if not tol > 0:
        raise ValueError(f"tol must be > 0, got {tol}")
    x0, y0 = _split(problem, z_init)
    hx = hy = None
    if history is not None:
        hx, hy = history.setdefault("x", []), history.setdefault("y", [])
    # each block gets half the tolerance budget so the joint norm meets tol
    btol = tol / math.sqrt(2.0)
    x, gx, ix = _descend(lambda u: _phi_x(problem, saddle, u), lambda u: _grad_x(problem, saddle, u),
                         x0, epsilon, btol, max_iter, hx)
    y, gy, iy = _descend(lambda u: _phi_y(problem, saddle, u), lambda u: _grad_y(problem, saddle, u),
                         y0, epsilon, btol, max_iter, hy)
    return PathPoint(float(epsilon), np.concatenate([x, y]), math.hypot(gx, gy), ix + iy)


def min_norm_solution(problem: ProblemSpec, saddle: SaddlePoint,
                      eps_schedule: Sequence[float] = DEFAULT_SCHEDULE, *,
                      tol: float = 1e-10) -> MinNormSolution:
    """Follow ``z_eps`` along a decreasing schedule, warm-starting each level.

    Starts from the reference saddle. Converged once consecutive levels differ
    by at most 1e-7 and the final point's KKT residual is at most 1e-8.
    """
    eps = [float(e) for e in eps_schedule]
    if len(eps) < 2 or any(e <= 0 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("eps_schedule must be a strictly decreasing sequence of positives (length >= 2)")
    if eps[-1] > 1e-8:
        raise ValueError(f"eps_schedule must reach 1e-8 or below, ends at {eps[-1]:g}")
    z = saddle.z
    path = []
    gaps = []
    for e in eps:
        pt = solve_regularized(problem, saddle, e, z, tol)
        if path:
            gaps.append(float(np.linalg.norm(pt.z - path[-1].z)))
            if len(gaps) >= 4 and all(gaps[-k] >= gaps[-k - 1] for k in range(1, 4)) and gaps[-1] > CAUCHY_TOL:
                raise PathError(f"Cauchy gap did not decrease over 3 levels (last {gaps[-1]:.3e} at eps={e:g})")
        path.append(pt)
        z = pt.z
    gap = gaps[-1]
    if gap > CAUCHY_TOL:
        raise PathError(f"path not converged: |z_eps_k - z_eps_k+1| = {gap:.3e} > {CAUCHY_TOL:g}")
    x, y = _split(problem, z)
    kkt = kkt_residual(problem, x, y)
    if kkt > KKT_TOL:
        raise PathError(f"KKT residual {kkt:.3e} > {KKT_TOL:g} at eps={eps[-1]:g}")
    return MinNormSolution(z.copy(), problem.n, kkt, eps[-1], gap, path)


def regularization_inequality(problem: ProblemSpec, min_norm: SaddlePoint, z, epsilon: float,
                              z_eps=None, *, slack: float = INEQUALITY_SLACK):
    """Both sides of the distance bound to the regularised minimiser.

    LHS = eps/2 (|z - z_eps|^2 + |z_eps|^2 - |z_bar|^2),
    RHS = Phi_eps(z) - Phi_eps(z_bar), with ``Phi`` taken relative to the
    minimal-norm saddle ``z_bar``.

    Returns:
        tuple: ``(holds, lhs, rhs)`` where ``holds`` is ``lhs <= rhs + slack``.
    """
    z = np.asarray(z, dtype=float)
    if z_eps is None:
        z_eps = solve_regularized(problem, min_norm, epsilon, min_norm.z, 1e-12).z
    zb = min_norm.z
    nb = float(np.dot(zb, zb))
    d = z - z_eps
    lhs = 0.5 * epsilon * (float(np.dot(d, d)) + float(np.dot(z_eps, z_eps)) - nb)
    rhs = phi_value(problem, min_norm, z) + 0.5 * epsilon * float(np.dot(z, z)) - 0.5 * epsilon * nb
    return lhs <= rhs + slack, lhs, rhs


def write_path_csv(path, points: Sequence[PathPoint], n: int) -> None:
    """Columns: epsilon, x_1..x_n, y_1..y_m, norm, grad_norm."""
    points = list(points)
    m = points[0].z.size - n if points else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epsilon"] + [f"x_{i + 1}" for i in range(n)] + [f"y_{j + 1}" for j in range(m)]
                   + ["norm", "grad_norm"])
        for pt in points:
            row = [pt.epsilon, *pt.z, float(np.linalg.norm(pt.z)), pt.grad_norm]
            w.writerow(["%.17g" % v for v in row])
