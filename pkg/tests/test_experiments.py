import math

import numpy as np
import pytest

from saddleflow import experiments as ex
from saddleflow.dynamics import DynamicsParams, PowerLaw, SimState
from saddleflow.integrator import IntegratorConfig
from saddleflow.problems import RegressionConfig, SaddlePoint


@pytest.fixture(scope="module")
def sweep():
    return ex.figure1_sweep()


def test_sweep_series_finite_and_decreasing(sweep):
    assert [r.scenario.name for r in sweep] == [f"figure1-p{p:g}" for p in ex.SWEEP_P]
    for res in sweep:
        for vals in res.series.values():
            assert np.all(np.isfinite(vals))
        assert res.rate_fits["gap"].slope < 0
        assert res.final("vel_norm") < res.series["vel_norm"][0]
        assert res.trajectory.t[-1] == 200.0


def test_monitor_matches_post_hoc(sweep):
    res = sweep[0]
    again = ex.recompute_series(res)
    for name, vals in res.series.items():
        assert np.allclose(again[name], vals, rtol=1e-12, atol=1e-15), name


def test_compare_regularised_reaches_origin():
    reg, plain = ex.figure2_compare()
    zr = reg.trajectory.z[-1, :4]
    zp = plain.trajectory.z[-1, :4]
    assert np.linalg.norm(zr) < np.linalg.norm(zp)
    assert reg.scenario.params.c == 1.0 and plain.scenario.params.c == 0.0
    assert reg.assumptions.regimes["strong"] and not plain.assumptions.regimes["strong"]


def test_slow_decay_preset_has_min_norm_series():
    scn = ex.preset("slow-decay")
    short = ex.Scenario(scn.name, scn.problem, scn.params, scn.initial,
                        IntegratorConfig(5.0, sample_count=50), scn.outputs)
    res = ex.run_scenario(short)
    assert res.min_norm is not None and np.allclose(res.min_norm.z, 0.0)
    # with the origin as min-norm saddle, E_tilde equals E_hat
    assert np.allclose(res.series["E_tilde"], res.series["E_hat"], rtol=1e-14)


def test_regression_initial_objective_closed_form():
    scn = ex.regression_scenario(0.2, 0.1, 10.0, 10.0, m=10, n=20, t_end=3.0, sample_count=20)
    res = ex.run_scenario(scn)
    b = res.problem.params["b"]
    want = 0.5 * float(b @ b) + 0.1 * 20 * 2 * math.log(2) / 100.0
    assert res.series["phi"][0] == pytest.approx(want, rel=1e-14)
    assert np.all(np.isfinite(res.series["phi"]))
    assert scn.seeds == [0]


def test_regression_study_structure():
    results, comps = ex.regression_study(cases=((0.2, 0.1),), kappas=(10.0,), m=10, n=20, t_end=5.0, workers=2)
    assert [r.scenario.params.c for r in results] == [0.0, 10.0]
    (c,) = comps
    assert c.case == 1 and c.kappa == 10.0
    assert c.phi_final_plain == results[0].final("phi")
    assert c.regularised_not_worse == (c.phi_final_regularised <= c.phi_final_plain)


def test_run_many_independent_of_worker_count():
    scns = [ex.example1_scenario(f"s{p}", p, 1.0, 10.0, sample_count=50) for p in (0.8, 1.0, 1.5)]
    one = ex.run_many(scns, 1)
    many = ex.run_many(scns, 3)
    for a, b in zip(one, many):
        assert a.scenario.name == b.scenario.name
        assert np.array_equal(a.trajectory.z, b.trajectory.z)
        for k in a.series:
            assert np.array_equal(a.series[k], b.series[k])


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("SADDLEFLOW_THREADS", "3")
    assert ex.worker_count() == 3
    monkeypatch.setenv("SADDLEFLOW_THREADS", "0")
    assert ex.worker_count() == 1
    monkeypatch.setenv("SADDLEFLOW_THREADS", "many")
    with pytest.raises(ex.ScenarioError, match="integer"):
        ex.worker_count()
    monkeypatch.delenv("SADDLEFLOW_THREADS")
    assert ex.worker_count() >= 1


def _base(**kw):
    args = dict(name="t", problem=ex.ProblemRef("example1"),
                params=DynamicsParams(3, 0.8, 0.8, 1, PowerLaw(0.5)),
                initial=SimState(1.0, np.zeros(2), np.zeros(2), np.zeros(2), np.zeros(2)),
                integrator=IntegratorConfig(2.0, sample_count=10))
    args.update(kw)
    return ex.Scenario(**args)


def test_scenario_validation():
    with pytest.raises(ex.ScenarioError, match="unknown series"):
        _base(outputs=("gap", "energy"))
    with pytest.raises(ex.ScenarioError, match="regression problems only"):
        _base(outputs=("phi",))
    with pytest.raises(ex.ScenarioError, match="t_a < t_b"):
        _base(rate_window=(5.0, 5.0))
    with pytest.raises(ex.ScenarioError, match="initial time"):
        _base(initial=SimState(2.0, np.zeros(2), np.zeros(2), np.zeros(2), np.zeros(2)))
    with pytest.raises(ex.ScenarioError, match="backend"):
        _base(backend="gpu")
    with pytest.raises(ex.ScenarioError, match="unknown problem kind"):
        ex.ProblemRef("lasso")
    with pytest.raises(ex.ScenarioError, match="needs u"):
        ex.ProblemRef("shifted_quadratic")
    reg = ex.ProblemRef("regression", RegressionConfig(m=4, n=6, lam=0.1, a=100.0, kappa=10.0, seed=1))
    with pytest.raises(ex.ScenarioError, match="reference saddle"):
        _base(problem=reg, outputs=("gap",))


def test_dimension_mismatch_reported():
    scn = _base(problem=ex.ProblemRef("shifted_quadratic", u=(1.0, 2.0, 3.0)))
    with pytest.raises(ex.ScenarioError, match="dims"):
        ex.run_scenario(scn)
    scn = _base(saddle=SaddlePoint(np.zeros(3), np.zeros(2)))
    with pytest.raises(ex.ScenarioError, match="saddle dims"):
        ex.run_scenario(scn)


def test_unknown_preset():
    with pytest.raises(ex.ScenarioError, match="unknown preset"):
        ex.preset("figure9")
    assert "fast-rate" in ex.PRESETS and len(ex.PRESETS) == 4 + 2 + 2 + 12
