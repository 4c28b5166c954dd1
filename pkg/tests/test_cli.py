import json

import numpy as np
import pytest

from saddleflow import cli
from saddleflow import tikhonov

GOOD = """\
name: short
problem:
  kind: example1
params:
  alpha: 3
  q: 0.8
  p: 0.8
  c: 1
  beta:
    r: 0.5
initial:
  x: [1.0, 1.5]
  y: [1.0, 1.5]
  vx: [1.0, 1.0]
  vy: [1.0, 1.0]
integrator:
  t_end: 5
  sample_count: 40
outputs: [gap, traj_error, vel_norm, E_hat]
rate_window: [2, 5]
"""


def _write(tmp_path, text, name="scn.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_run_writes_outputs(tmp_path, capsys):
    out = tmp_path / "out"
    assert cli.main(["run", _write(tmp_path, GOOD), "--out", str(out)]) == 0
    header = (out / "series.csv").read_text().splitlines()[0]
    assert header == "t,gap,traj_error,vel_norm,E_hat"
    traj = (out / "trajectory.csv").read_text().splitlines()
    assert traj[0] == "t,x_1,x_2,y_1,y_2,vx_1,vx_2,vy_1,vy_2"
    assert len(traj) == 41
    man = json.loads((out / "manifest.json").read_text())
    assert man["scenario"]["name"] == "short" and man["seeds"] == []
    assert "rate gap" in capsys.readouterr().out


def test_manifest_replay_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["run", _write(tmp_path, GOOD), "--out", str(a)]) == 0
    assert cli.main(["run", str(a / "manifest.json"), "--out", str(b)]) == 0
    for name in ("trajectory.csv", "series.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_tampered_manifest_rejected(tmp_path, capsys):
    a = tmp_path / "a"
    cli.main(["run", _write(tmp_path, GOOD), "--out", str(a)])
    man = json.loads((a / "manifest.json").read_text())
    man["scenario"]["params"]["c"] = 2.0
    bad = _write(tmp_path, json.dumps(man), "m.json")
    assert cli.main(["run", bad, "--out", str(tmp_path / "b")]) == 2
    assert "digest" in capsys.readouterr().err


def test_bad_q_names_field_and_line(tmp_path, capsys):
    text = GOOD.replace("q: 0.8", "q: 1.5")
    assert cli.main(["run", _write(tmp_path, text), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "line 6" in err and "params.q" in err and "0 < q < 1" in err


def test_bad_initial_size_and_yaml(tmp_path, capsys):
    text = GOOD.replace("x: [1.0, 1.5]", "x: [1.0]")
    assert cli.main(["run", _write(tmp_path, text), "--out", str(tmp_path / "o")]) == 2
    assert "initial.x" in capsys.readouterr().err
    assert cli.main(["run", _write(tmp_path, "a: [1, 2\n", "b.yaml"), "--out", str(tmp_path / "o")]) == 2
    assert "line" in capsys.readouterr().err
    assert cli.main(["run", str(tmp_path / "missing.yaml"), "--out", str(tmp_path / "o")]) == 2


def test_integration_failure_exit_3(tmp_path, capsys):
    text = GOOD.replace("t_end: 5", "t_end: 5\n  h_min: 0.5\n  h_init: 1.0\n  rel_tol: 1e-12\n  abs_tol: 1e-14")
    assert cli.main(["run", _write(tmp_path, text), "--out", str(tmp_path / "o")]) == 3
    assert "last good t=" in capsys.readouterr().err


def test_run_preset_and_presets(capsys):
    assert cli.main(["presets"]) == 0
    names = capsys.readouterr().out.split()
    assert "figure2-c1" in names and "regression-case3-c10-k200" in names


def test_run_requires_one_source(tmp_path):
    assert cli.main(["run", "--out", str(tmp_path)]) == 2


def test_check_text_and_json(capsys):
    base = ["check", "--alpha", "3", "--q", "0.8", "--c", "1", "--beta-pow", "0.5"]
    assert cli.main(base + ["--p", "2.5"]) == 0
    out = capsys.readouterr().out
    assert "certified regimes: fast, slow" in out
    assert cli.main(base + ["--p", "0.8", "--json", "--sampled"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["regimes"] == {"fast": False, "slow": True, "strong": True}
    assert cli.main(base + ["--p", "0.8", "--q", "1.5"]) == 2


def test_rate(tmp_path, capsys):
    t = np.linspace(1, 100, 200)
    rows = "t,v,z\n" + "".join(f"{a!r},{a ** -2.0!r},{0.0 if a > 50 else 1.0}\n" for a in t.tolist())
    path = _write(tmp_path, rows, "s.csv")
    assert cli.main(["rate", path, "--column", "v", "--t-a", "10", "--t-b", "100"]) == 0
    out = capsys.readouterr().out
    assert float(out.split()[0].split("=")[1]) == pytest.approx(-2.0, abs=1e-9)
    assert cli.main(["rate", path, "--column", "z", "--t-a", "10", "--t-b", "100"]) == 4
    assert "positive" in capsys.readouterr().err
    assert cli.main(["rate", path, "--column", "z", "--t-a", "10", "--t-b", "100", "--floor"]) == 0
    assert "floored=" in capsys.readouterr().out
    assert cli.main(["rate", path, "--column", "w", "--t-a", "10", "--t-b", "100"]) == 2


def test_minnorm(tmp_path, capsys):
    out = tmp_path / "p" / "path.csv"
    assert cli.main(["minnorm", "--reference=-0.25,0.25,-0.25,0.25", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    z = [float(v) for v in text.splitlines()[0].split("=")[1].split()]
    assert np.allclose(z, 0.0, atol=1e-6)
    assert out.read_text().startswith("epsilon,x_1,x_2,y_1,y_2,norm,grad_norm")
    assert cli.main(["minnorm", "--problem", "shifted_quadratic", "--u=0.5,-0.25"]) == 0
    z = [float(v) for v in capsys.readouterr().out.splitlines()[0].split("=")[1].split()]
    assert np.allclose(z, [0.5, -0.25, 0, 0], atol=1e-6)
    assert cli.main(["minnorm", "--problem", "shifted_quadratic"]) == 2
    assert cli.main(["minnorm", "--reference=1,2"]) == 2


def test_minnorm_path_error(monkeypatch, capsys):
    def boom(*a, **k):
        raise tikhonov.PathError("no progress")
    monkeypatch.setattr(cli, "min_norm_solution", boom)
    assert cli.main(["minnorm"]) == 5
    assert "no progress" in capsys.readouterr().err
