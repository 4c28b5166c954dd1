import numpy as np
import pytest
from hypothesis import given, strategies as st

from saddleflow import tikhonov as tk
from saddleflow.problems import SaddlePoint, example1_min_norm_saddle, example1_problem, shifted_quadratic_problem

from conftest import central_diff

U = np.array([0.5, -0.25])


def _ex1_reference():
    return SaddlePoint(np.array([-0.25, 0.25]), np.array([-0.25, 0.25]))


def test_phi_grad_matches_finite_differences():
    ex1, ref = example1_problem(), _ex1_reference()
    rng = np.random.default_rng(3)
    for _ in range(100):
        z = rng.uniform(-1.5, 1.5, 4)
        fd = central_diff(lambda v: tk.phi_value(ex1, ref, v), z)
        g = tk.phi_grad(ex1, ref, z)
        assert np.allclose(g, fd, rtol=1e-6, atol=1e-8)


def test_phi_vanishes_on_saddle_set_and_is_nonnegative():
    ex1, ref = example1_problem(), _ex1_reference()
    assert tk.phi_value(ex1, ref, np.array([0.3, -0.3, 1.0, -1.0])) == pytest.approx(0.0, abs=1e-15)
    rng = np.random.default_rng(4)
    assert all(tk.phi_value(ex1, ref, rng.uniform(-2, 2, 4)) >= -1e-15 for _ in range(200))


@given(st.floats(1e-6, 10.0))
def test_shifted_quadratic_closed_form(eps):
    pb = shifted_quadratic_problem(U)
    pt = tk.solve_regularized(pb, SaddlePoint(U, np.zeros(2)), eps, np.zeros(4), 1e-12)
    assert np.allclose(pt.z[:2], U / (1 + eps), atol=1e-11)
    assert np.allclose(pt.z[2:], 0.0, atol=1e-11)
    assert pt.grad_norm <= 1e-12


def test_blocks_decouple():
    # swapping the starting y-block must not change the x-block result
    ex1, ref = example1_problem(), _ex1_reference()
    a = tk.solve_regularized(ex1, ref, 0.1, np.array([1.0, 0.0, 0.0, 0.0]), 1e-12)
    b = tk.solve_regularized(ex1, ref, 0.1, np.array([1.0, 0.0, 2.0, -3.0]), 1e-12)
    c = tk.solve_regularized(ex1, ref, 0.1, np.array([-2.0, 1.0, 0.0, 0.0]), 1e-12)
    assert np.allclose(a.z[:2], b.z[:2], atol=1e-11)
    assert np.allclose(a.z[2:], c.z[2:], atol=1e-11)


def test_objective_history_monotone():
    ex1, ref = example1_problem(), _ex1_reference()
    hist = {}
    tk.solve_regularized(ex1, ref, 1e-3, np.array([2.0, -1.0, 1.5, 0.5]), 1e-10, history=hist)
    for key in ("x", "y"):
        h = np.array(hist[key])
        assert len(h) > 1
        assert np.all(np.diff(h) <= 1e-15 * np.maximum(1.0, np.abs(h[:-1])))


def test_min_norm_example1_from_nonminimal_reference():
    ex1 = example1_problem()
    sol = tk.min_norm_solution(ex1, _ex1_reference())
    assert np.allclose(sol.z_bar, example1_min_norm_saddle().z, atol=1e-6)
    assert sol.kkt <= 1e-8 and sol.cauchy_gap <= 1e-7
    assert sol.epsilon == 1e-8 and len(sol.path) == 9
    bound = np.linalg.norm(sol.z_bar) + 1e-9
    # the origin is the minimal-norm point, so every level sits within the bound
    assert all(np.linalg.norm(pt.z) <= bound for pt in sol.path)


def test_min_norm_shifted_quadratic():
    pb = shifted_quadratic_problem(U)
    sol = tk.min_norm_solution(pb, SaddlePoint(U, np.zeros(2)))
    assert np.allclose(sol.x, U, atol=1e-6) and np.allclose(sol.y, 0.0, atol=1e-6)
    nb = np.linalg.norm(sol.z_bar)
    assert all(np.linalg.norm(pt.z) <= nb + 1e-9 for pt in sol.path)
    assert sol.saddle().x_star.shape == (2,)


def test_regularization_inequality_probes():
    rng = np.random.default_rng(11)
    cases = [(example1_problem(), example1_min_norm_saddle()),
             (shifted_quadratic_problem(U), SaddlePoint(U, np.zeros(2)))]
    violations = 0
    for k in range(300):
        pb, mn = cases[k % 2]
        eps = 10.0 ** rng.uniform(-6, 1)
        z = rng.uniform(-2, 2, 4)
        holds, lhs, rhs = tk.regularization_inequality(pb, mn, z, eps)
        violations += not holds
    assert violations == 0


def test_shifted_quadratic_inequality_slack():
    # at z = 0 with eps = 1: lhs = -|u|^2/4 and rhs = 0
    pb, mn = shifted_quadratic_problem(U), SaddlePoint(U, np.zeros(2))
    eps = 1.0
    holds, lhs, rhs = tk.regularization_inequality(pb, mn, np.zeros(4), eps)
    assert holds
    assert rhs - lhs == pytest.approx(float(U @ U) / 4, rel=1e-9)


def test_input_validation():
    ex1, ref = example1_problem(), _ex1_reference()
    with pytest.raises(ValueError, match="epsilon"):
        tk.solve_regularized(ex1, ref, 0.0, np.zeros(4))
    with pytest.raises(ValueError, match="shape"):
        tk.solve_regularized(ex1, ref, 1.0, np.zeros(3))
    with pytest.raises(ValueError, match="decreasing"):
        tk.min_norm_solution(ex1, ref, [1e-3, 1e-2, 1e-9])
    with pytest.raises(ValueError, match="1e-8"):
        tk.min_norm_solution(ex1, ref, [1.0, 1e-3])


def test_path_error_on_iteration_cap():
    ex1, ref = example1_problem(), _ex1_reference()
    with pytest.raises(tk.PathError, match="iteration cap"):
        tk.solve_regularized(ex1, ref, 1e-8, np.array([3.0, -1.0, 2.0, 2.0]), 1e-14, max_iter=3)


def test_path_csv(tmp_path):
    pb = shifted_quadratic_problem(U)
    sol = tk.min_norm_solution(pb, SaddlePoint(U, np.zeros(2)))
    out = tmp_path / "path.csv"
    tk.write_path_csv(out, sol.path, pb.n)
    lines = out.read_text().splitlines()
    assert lines[0] == "epsilon,x_1,x_2,y_1,y_2,norm,grad_norm"
    assert len(lines) == 10
    assert float(lines[-1].split(",")[0]) == 1e-8
