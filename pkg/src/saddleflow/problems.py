"""Bilinear saddle problems ``min_x max_y f(x) + <Kx, y> - g(y)``.

Two builtin families are provided: the two-dimensional exponential problem
whose saddle set is ``{x1 + x2 = 0, y1 + y2 = 0}`` and the smoothed-L1
regression problem with a condition-number-controlled coupling matrix.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .linalg import Pcg32, normal_array, qr_orthonormal

Vector = np.ndarray

# problem-family codes understood by the compiled right-hand side
KIND_EXAMPLE1 = 0
KIND_SMOOTHED_L1 = 1
KIND_SHIFTED_QUADRATIC = 2
_EMPTY = np.zeros(0)


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """A convex-concave problem with bilinear coupling.

    ``K`` has shape ``(m, n)``; ``f`` acts on ``x`` in R^n and ``g`` on ``y``
    in R^m. ``params`` carries whatever constants define the instance
    (used for objective evaluation and serialisation).
    """

    name: str
    n: int
    m: int
    f_eval: Callable[[Vector], float]
    f_grad: Callable[[Vector], Vector]
    g_eval: Callable[[Vector], float]
    g_grad: Callable[[Vector], Vector]
    K: np.ndarray
    params: dict = field(default_factory=dict)
    # (kind, scalar params, f vector, g vector) for the compiled integrator
    kernel: Optional[tuple] = None
    # optional cancellation-free f(x) - f(x_ref) and g(y) - g(y_ref)
    f_diff: Optional[Callable[[Vector, Vector], float]] = None
    g_diff: Optional[Callable[[Vector, Vector], float]] = None

    def f_delta(self, x, x_ref) -> float:
        if self.f_diff is not None:
            return float(self.f_diff(x, x_ref))
        return float(self.f_eval(x) - self.f_eval(x_ref))

    def g_delta(self, y, y_ref) -> float:
        if self.g_diff is not None:
            return float(self.g_diff(y, y_ref))
        return float(self.g_eval(y) - self.g_eval(y_ref))

    def __post_init__(self):
        K = np.asarray(self.K, dtype=float)
        if K.shape != (self.m, self.n):
            raise ValueError(f"K has shape {K.shape}, expected ({self.m}, {self.n})")
        if not np.all(np.isfinite(K)):
            raise ValueError("K has non-finite entries")
        K.setflags(write=False)
        object.__setattr__(self, "K", K)


@dataclass(frozen=True, eq=False)
class SaddlePoint:
    x_star: Vector
    y_star: Vector

    def __post_init__(self):
        object.__setattr__(self, "x_star", np.asarray(self.x_star, dtype=float))
        object.__setattr__(self, "y_star", np.asarray(self.y_star, dtype=float))

    @property
    def z(self) -> Vector:
        return np.concatenate([self.x_star, self.y_star])

    def norm(self) -> float:
        return float(np.linalg.norm(self.z))


@dataclass(frozen=True)
class RegressionConfig:
    m: int = 100
    n: int = 200
    lam: float = 0.1
    a: float = 100.0
    kappa: float = 10.0
    sigma_max: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.m < 2 or self.n < 2:
            raise ValueError(f"regression sizes must be >= 2, got m={self.m}, n={self.n}")
        if not self.lam > 0:
            raise ValueError(f"lambda must be > 0, got {self.lam}")
        if not self.a > 0:
            raise ValueError(f"a must be > 0, got {self.a}")
        if not self.kappa >= 1:
            raise ValueError(f"kappa must be >= 1, got {self.kappa}")
        if not self.sigma_max > 0:
            raise ValueError(f"sigma_max must be > 0, got {self.sigma_max}")


# -- Example 1: exponential / quadratic in the coordinate sums -----------------

def example1_problem() -> ProblemSpec:
    """``f(x) = exp((x1+x2)^2)``, ``g(y) = (y1+y2)^2``, ``K = [[2, 2], [2, 2]]``."""
    ones = np.ones(2)

    def f_eval(x):
        s = x[0] + x[1]
        return math.exp(s * s)

    def f_grad(x):
        s = float(x[0] + x[1])
        return 2.0 * s * math.exp(s * s) * ones

    def g_eval(y):
        s = y[0] + y[1]
        return s * s

    def g_grad(y):
        return 2.0 * (y[0] + y[1]) * ones

    def f_diff(x, xr):
        s, sr = x[0] + x[1], xr[0] + xr[1]
        return math.exp(sr * sr) * math.expm1((s - sr) * (s + sr))

    def g_diff(y, yr):
        s, sr = y[0] + y[1], yr[0] + yr[1]
        return (s - sr) * (s + sr)

    K = np.array([[2.0, 2.0], [2.0, 2.0]])
    return ProblemSpec("example1", 2, 2, f_eval, f_grad, g_eval, g_grad, K,
                       params={"kind": "example1"},
                       kernel=(KIND_EXAMPLE1, _EMPTY, _EMPTY, _EMPTY),
                       f_diff=f_diff, g_diff=g_diff)


def example1_min_norm_saddle() -> SaddlePoint:
    return SaddlePoint(np.zeros(2), np.zeros(2))


def shifted_quadratic_problem(u) -> ProblemSpec:
    """``f = 0.5||x - u||^2``, ``g = 0.5||y||^2``, ``K = 0``; unique saddle ``(u, 0)``.

    The output dimension ``m`` equals ``len(u)``.
    """
    u = np.asarray(u, dtype=float).copy()
    u.setflags(write=False)
    n = m = u.size
    return ProblemSpec(
        "shifted_quadratic", n, m,
        f_eval=lambda x: 0.5 * float(np.dot(x - u, x - u)),
        f_grad=lambda x: x - u,
        g_eval=lambda y: 0.5 * float(np.dot(y, y)),
        g_grad=lambda y: np.array(y, dtype=float),
        K=np.zeros((m, n)),
        params={"kind": "shifted_quadratic", "u": u.tolist()},
        kernel=(KIND_SHIFTED_QUADRATIC, _EMPTY, u, _EMPTY),
    )


# -- Example 2: smoothed-L1 regression -------------------------------------------

def _softplus(z):
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def smoothed_l1(x, a: float) -> float:
    """Sum over coordinates of ``(log(1+e^{a x}) + log(1+e^{-a x})) / a``, overflow-safe."""
    ax = a * np.asarray(x, dtype=float)
    return float(np.sum(_softplus(ax) + _softplus(-ax)) / a)


def smoothed_l1_grad(x, a: float) -> Vector:
    return np.tanh(0.5 * a * np.asarray(x, dtype=float))


def generate_conditioned_matrix(m: int, n: int, kappa: float, sigma_max: float,
                                rng: Pcg32) -> np.ndarray:
    """Random ``m x n`` matrix ``U diag(s) V^T`` with condition number exactly ``kappa``.

    ``U`` and ``V`` have orthonormal columns (``k = min(m, n)`` of them). The
    extreme singular values are pinned to ``sigma_max`` and
    ``sigma_max / kappa``; the interior ones are log-uniform in between.
    Draw order: ``U``, then ``V``, then the interior singular values.
    """
    if m < 2 or n < 2:
        raise ValueError(f"matrix dimensions must be >= 2, got {m}x{n}")
    if not kappa >= 1:
        raise ValueError(f"kappa must be >= 1, got {kappa}")
    if not sigma_max > 0:
        raise ValueError(f"sigma_max must be > 0, got {sigma_max}")
    k = min(m, n)
    U = qr_orthonormal(rng, m, k)
    V = qr_orthonormal(rng, n, k)
    lo, hi = math.log(sigma_max / kappa), math.log(sigma_max)
    interior = [math.exp(rng.uniform_range(lo, hi)) for _ in range(k - 2)]
    sigma = np.array([sigma_max] + sorted(interior, reverse=True) + [sigma_max / kappa])
    if kappa == 1:
        sigma[:] = sigma_max
    return (U * sigma) @ V.T


def smoothed_l1_problem(cfg: RegressionConfig, rng: Pcg32 | None = None):
    """Saddle form of ``0.5||Kx - b||^2 + lam * R_a(x)``.

    ``f(x) = lam * R_a(x)`` and ``g(y) = 0.5||y||^2 + <b, y>``. When ``rng``
    is omitted a generator seeded with ``cfg.seed`` is used. ``K`` is drawn
    before ``b``.

    Returns:
        tuple: ``(problem, b)``.
    """
    if rng is None:
        rng = Pcg32(cfg.seed)
    K = generate_conditioned_matrix(cfg.m, cfg.n, cfg.kappa, cfg.sigma_max, rng)
    b = normal_array(rng, (cfg.m,))
    return regression_from_data(cfg, K, b), b


def regression_from_data(cfg: RegressionConfig, K, b) -> ProblemSpec:
    lam, a = cfg.lam, cfg.a
    b = np.asarray(b, dtype=float).copy()
    b.setflags(write=False)
    return ProblemSpec(
        "smoothed_l1",
        cfg.n, cfg.m,
        f_eval=lambda x: lam * smoothed_l1(x, a),
        f_grad=lambda x: lam * smoothed_l1_grad(x, a),
        g_eval=lambda y: 0.5 * float(np.dot(y, y)) + float(np.dot(b, y)),
        g_grad=lambda y: y + b,
        K=K,
        params={"kind": "smoothed_l1", "b": b, **asdict(cfg)},
        kernel=(KIND_SMOOTHED_L1, np.array([lam, a]), _EMPTY, b),
    )


def primal_objective(problem: ProblemSpec, x) -> float:
    """Regression objective ``0.5||Kx - b||^2 + lam * R_a(x)``."""
    if problem.params.get("kind") != "smoothed_l1":
        raise ValueError(f"primal objective is defined for smoothed_l1 problems, not {problem.name}")
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.n,):
        raise ValueError(f"x has shape {x.shape}, expected ({problem.n},)")
    r = problem.K @ x - problem.params["b"]
    return 0.5 * float(np.dot(r, r)) + problem.params["lam"] * smoothed_l1(x, problem.params["a"])


# -- instance files ------------------------------------------------------------------

def save_regression_instance(path, problem: ProblemSpec) -> None:
    """Write dimensions, K, b, lambda, a, kappa and seed as JSON (repr-exact floats)."""
    p = problem.params
    doc = {
        "kind": "smoothed_l1",
        "m": problem.m,
        "n": problem.n,
        "lam": p["lam"],
        "a": p["a"],
        "kappa": p["kappa"],
        "sigma_max": p["sigma_max"],
        "seed": p["seed"],
        "b": [float(v) for v in p["b"]],
        "K": [[float(v) for v in row] for row in problem.K],
    }
    Path(path).write_text(json.dumps(doc) + "\n")


def load_regression_instance(path) -> ProblemSpec:
    doc = json.loads(Path(path).read_text())
    cfg = RegressionConfig(m=doc["m"], n=doc["n"], lam=doc["lam"], a=doc["a"],
                           kappa=doc["kappa"], sigma_max=doc["sigma_max"], seed=doc["seed"])
    return regression_from_data(cfg, np.array(doc["K"], dtype=float), np.array(doc["b"], dtype=float))
