import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from saddleflow.dynamics import (CustomScaling, DynamicsParams, PowerLaw, SimState, kkt_residual,
                                 lagrangian, phase_rhs, primal_dual_gap, rhs, stationarity_residual)
from saddleflow.problems import SaddlePoint, example1_min_norm_saddle, example1_problem

from conftest import make_params


def _rhs_by_hand(t, x, y, vx, vy, alpha, q, p, c, r):
    # written out coordinate-wise for the two-dimensional example
    s, sy = x[0] + x[1], y[0] + y[1]
    gf = 2 * s * math.exp(s * s)
    gg = 2 * sy
    w = t ** q / (alpha - 1)
    beta = t ** r
    eps = c / t ** p
    ay = [y[j] + w * vy[j] for j in range(2)]
    ax = [x[i] + w * vx[i] for i in range(2)]
    kty = 2 * (ay[0] + ay[1])  # K = 2 * ones, symmetric
    kx = 2 * (ax[0] + ax[1])
    dvx = [-(alpha / t ** q) * vx[i] - beta * (gf + kty + eps * x[i]) for i in range(2)]
    dvy = [-(alpha / t ** q) * vy[j] + beta * (kx - gg - eps * y[j]) for j in range(2)]
    return dvx, dvy


def test_rhs_matches_hand_transcription(ex1):
    rng = np.random.default_rng(0)
    for _ in range(50):
        t = rng.uniform(1, 50)
        x, y, vx, vy = (rng.uniform(-1, 1, 2) for _ in range(4))
        prm = make_params(p=rng.uniform(0.5, 3), c=rng.uniform(0, 2))
        out = rhs(SimState(t, x, y, vx, vy), prm, ex1)
        dvx, dvy = _rhs_by_hand(t, x, y, vx, vy, prm.alpha, prm.q, prm.p, prm.c, prm.beta.r)
        assert np.array_equal(out[0], vx) and np.array_equal(out[1], vy)
        assert np.allclose(out[2], dvx, rtol=1e-13, atol=1e-13)
        assert np.allclose(out[3], dvy, rtol=1e-13, atol=1e-13)


def test_saddle_at_rest_is_stationary(ex1):
    z = np.zeros(2)
    for t in (1.0, 7.0, 100.0):
        out = rhs(SimState(t, z, z, z, z), make_params(), ex1)
        assert all(np.array_equal(v, z) for v in out)


def test_phase_rhs_order(ex1, standard_state):
    F = phase_rhs(make_params(), ex1)
    z = standard_state.phase()
    assert np.array_equal(F(1.0, z), np.concatenate(rhs(standard_state, make_params(), ex1)))


def test_rhs_errors(ex1):
    z = np.zeros(2)
    with pytest.raises(ValueError, match="t=0"):
        rhs(SimState(0.0, z, z, z, z), make_params(), ex1)
    with pytest.raises(ValueError, match="dims"):
        rhs(SimState(1.0, np.zeros(3), z, np.zeros(3), z), make_params(), ex1)
    big = np.array([30.0, 0.0])
    with pytest.raises(FloatingPointError, match="non-finite"):
        rhs(SimState(1.0, big, z, z, z), make_params(), ex1)


@pytest.mark.parametrize("kw, msg", [
    (dict(alpha=1.0), "alpha = 1.0 violates alpha > 1"),
    (dict(q=1.5), "q = 1.5 violates 0 < q < 1"),
    (dict(q=0.0), "violates 0 < q < 1"),
    (dict(p=0.0), "violates p > 0"),
    (dict(c=-1.0), "violates c >= 0"),
    (dict(t0=0.0), "violates t0 > 0"),
])
def test_parameter_validation(kw, msg):
    with pytest.raises(ValueError, match=msg):
        make_params(**kw)


def test_power_law_needs_positive_exponent():
    with pytest.raises(ValueError):
        PowerLaw(0.0)


def test_custom_scaling_checks():
    ok = CustomScaling(lambda t: math.exp(0.1 * t) if t < 50 else math.exp(5.0) * t / 50,
                       lambda t: 0.1 * math.exp(0.1 * t) if t < 50 else math.exp(5.0) / 50)
    DynamicsParams(3, 0.8, 1, 1, ok)
    with pytest.raises(ValueError, match="nondecreasing"):
        DynamicsParams(3, 0.8, 1, 1, CustomScaling(lambda t: 1 / t, lambda t: -1 / t ** 2))
    with pytest.raises(ValueError, match="positive"):
        DynamicsParams(3, 0.8, 1, 1, CustomScaling(lambda t: t - 2, lambda t: 1.0))


def test_gap_zero_on_saddle_set(ex1, origin):
    assert primal_dual_gap(ex1, origin, [0.3, -0.3], [-1.0, 1.0]) == 0.0
    assert lagrangian(ex1, [0, 0], [0, 0]) == 1.0


@given(st.lists(st.floats(-1.5, 1.5), min_size=4, max_size=4))
def test_gap_nonnegative(v):
    ex1 = example1_problem()
    assert primal_dual_gap(ex1, example1_min_norm_saddle(), v[:2], v[2:]) >= 0.0


def test_gap_rejects_non_saddle_reference(ex1):
    fake = SaddlePoint(np.array([1.0, 0.0]), np.zeros(2))
    with pytest.raises(ValueError, match="negative primal-dual gap"):
        primal_dual_gap(ex1, fake, [0.0, 0.0], [0.0, 0.0])


def test_kkt_and_stationarity(ex1):
    assert kkt_residual(ex1, [0.2, -0.2], [0.5, -0.5]) == 0.0
    assert kkt_residual(ex1, [0.2, 0.0], [0.0, 0.0]) > 0
    assert stationarity_residual(ex1, make_params(), 2.0, np.zeros(2), np.zeros(2)) == 0.0
