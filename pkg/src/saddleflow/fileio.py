"""Scenario files (YAML), CSV outputs and run manifests (JSON)."""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from . import __version__
from .dynamics import DynamicsParams, PowerLaw, SimState
from .experiments import ProblemRef, Scenario, ScenarioError, ScenarioResult
from .integrator import IntegratorConfig, Trajectory
from .problems import RegressionConfig, SaddlePoint

FLOAT_FMT = "%.17g"
ARTIFACT_DEFAULTS_NOTE = ("regression initial state, horizon, right-hand side b and singular-value "
                          "scale are artifact defaults, not recovered from published instances")


# -- YAML with line numbers ----------------------------------------------------------------

def _line_index(text: str) -> dict:
    """Map dotted key paths to 1-based line numbers."""
    index = {}
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return index

    def walk(node, prefix):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                path = f"{prefix}.{k.value}" if prefix else str(k.value)
                index[path] = k.start_mark.line + 1
                walk(v, path)
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                index[f"{prefix}[{i}]"] = v.start_mark.line + 1

    if root is not None:
        walk(root, "")
    return index


class _Reader:
    """Typed access to the parsed document with field-level diagnostics."""

    def __init__(self, doc: dict, lines: dict):
        self.doc = doc
        self.lines = lines

    def fail(self, path: str, message: str):
        line = self.lines.get(path)
        if line is None and "." in path:
            line = self.lines.get(path.rsplit(".", 1)[0])
        raise ScenarioError(message, path, line)

    def raw(self, path: str, default=KeyError):
        node = self.doc
        for part in path.split("."):
            if not isinstance(node, dict) or part not in node:
                if default is KeyError:
                    self.fail(path, "missing required field")
                return default
            node = node[part]
        return node

    def number(self, path: str, default=KeyError) -> float:
        v = self.raw(path, default)
        if v is default and default is not KeyError:
            return v
        # YAML 1.1 reads 1e-8 (no dot) as a string
        if isinstance(v, bool):
            self.fail(path, f"expected a number, got {v!r}")
        try:
            return float(v)
        except (TypeError, ValueError):
            self.fail(path, f"expected a number, got {v!r}")

    def integer(self, path: str, default=KeyError) -> int:
        v = self.number(path, default)
        if v is default and default is not KeyError:
            return v
        if v != int(v):
            self.fail(path, f"expected an integer, got {v!r}")
        return int(v)

    def vector(self, path: str, default=KeyError) -> Optional[np.ndarray]:
        v = self.raw(path, default)
        if v is default and default is not KeyError:
            return v
        if not isinstance(v, list):
            self.fail(path, f"expected a list of numbers, got {v!r}")
        try:
            return np.array([float(e) for e in v], dtype=float)
        except (TypeError, ValueError):
            self.fail(path, f"expected a list of numbers, got {v!r}")


def _guard(reader: _Reader, path: str, fn, *args, **kw):
    """Call a constructor, re-raising its ValueError against ``path``."""
    try:
        return fn(*args, **kw)
    except ScenarioError as exc:
        if exc.line is None and exc.field:
            reader.fail(exc.field, exc.message)
        raise
    except ValueError as exc:
        msg = str(exc)
        # validation messages begin with the offending parameter's name
        head = msg.split(" ", 1)[0]
        sub = f"{path}.{head}" if head.replace(".", "").isidentifier() and path else path
        if sub not in reader.lines:
            sub = path
        reader.fail(sub, msg)


def scenario_from_dict(doc: dict, lines: Optional[dict] = None) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("scenario must be a mapping at top level")
    rd = _Reader(doc, lines or {})
    name = str(rd.raw("name", "scenario"))

    kind = str(rd.raw("problem.kind", "example1"))
    if kind == "regression":
        cfg = _guard(rd, "problem", RegressionConfig,
                     m=rd.integer("problem.m", 100), n=rd.integer("problem.n", 200),
                     lam=rd.number("problem.lambda", 0.1), a=rd.number("problem.a", 100.0),
                     kappa=rd.number("problem.kappa", 10.0), sigma_max=rd.number("problem.sigma_max", 1.0),
                     seed=rd.integer("problem.seed", 0))
        pref = ProblemRef("regression", cfg)
        n, m = cfg.n, cfg.m
    elif kind == "shifted_quadratic":
        u = rd.vector("problem.u")
        pref = ProblemRef("shifted_quadratic", u=tuple(float(v) for v in u))
        n = m = u.size
    elif kind == "example1":
        pref = ProblemRef("example1")
        n = m = 2
    else:
        rd.fail("problem.kind", f"unknown problem kind {kind!r} (example1, regression, shifted_quadratic)")

    r = rd.number("params.beta.r")
    beta = _guard(rd, "params", PowerLaw, r)
    t0 = rd.number("params.t0", 1.0)
    params = _guard(rd, "params", DynamicsParams,
                    rd.number("params.alpha"), rd.number("params.q"), rd.number("params.p"),
                    rd.number("params.c"), beta, t0)

    init = rd.raw("initial", "zeros")
    if init == "zeros":
        initial = SimState(t0, np.zeros(n), np.zeros(m), np.zeros(n), np.zeros(m))
    else:
        vecs = []
        for key, size in (("x", n), ("y", m), ("vx", n), ("vy", m)):
            v = rd.vector(f"initial.{key}")
            if v.size != size:
                rd.fail(f"initial.{key}", f"expected {size} entries, got {v.size}")
            vecs.append(v)
        initial = SimState(t0, *vecs)

    icfg = _guard(rd, "integrator", IntegratorConfig,
                  t_end=rd.number("integrator.t_end"),
                  rel_tol=rd.number("integrator.rel_tol", 1e-8),
                  abs_tol=rd.number("integrator.abs_tol", 1e-10),
                  h_init=rd.number("integrator.h_init", 1e-3),
                  h_min=rd.number("integrator.h_min", 1e-12),
                  h_max=rd.number("integrator.h_max", 10.0),
                  sample_count=rd.integer("integrator.sample_count", 500),
                  spacing=str(rd.raw("integrator.spacing", "log")))
    if not icfg.t_end > t0:
        rd.fail("integrator.t_end", f"t_end = {icfg.t_end} must exceed t0 = {t0}")
    backend = str(rd.raw("integrator.backend", "auto"))

    outputs = rd.raw("outputs", None)
    if outputs is None:
        outputs = ["phi", "vel_norm"] if kind == "regression" else ["gap", "traj_error", "vel_norm"]
    if not isinstance(outputs, list):
        rd.fail("outputs", f"expected a list of series names, got {outputs!r}")
    window = rd.vector("rate_window", None)
    if window is not None and window.size != 2:
        rd.fail("rate_window", f"expected [t_a, t_b], got {window.tolist()}")

    saddle = None
    if rd.raw("saddle", None) is not None:
        sx, sy = rd.vector("saddle.x"), rd.vector("saddle.y")
        if sx.size != n or sy.size != m:
            rd.fail("saddle", f"saddle dims ({sx.size}, {sy.size}) do not match problem ({n}, {m})")
        saddle = SaddlePoint(sx, sy)

    return _guard(rd, "", Scenario, name, pref, params, initial, icfg, tuple(str(o) for o in outputs),
                  None if window is None else (float(window[0]), float(window[1])), saddle, backend)


def scenario_to_dict(scn: Scenario) -> dict:
    """Plain-data form; floats are kept exact so the digest and replay are stable."""
    pr = scn.problem
    if pr.kind == "regression":
        c = pr.regression
        problem = {"kind": "regression", "m": c.m, "n": c.n, "lambda": c.lam, "a": c.a,
                   "kappa": c.kappa, "sigma_max": c.sigma_max, "seed": c.seed}
    elif pr.kind == "shifted_quadratic":
        problem = {"kind": "shifted_quadratic", "u": list(pr.u)}
    else:
        problem = {"kind": "example1"}
    p = scn.params
    ic = scn.integrator
    doc = {
        "name": scn.name,
        "problem": problem,
        "params": {"alpha": p.alpha, "q": p.q, "p": p.p, "c": p.c, "beta": {"r": p.beta.r}, "t0": p.t0},
        "initial": {k: [float(v) for v in getattr(scn.initial, k)] for k in ("x", "y", "vx", "vy")},
        "integrator": {"t_end": ic.t_end, "rel_tol": ic.rel_tol, "abs_tol": ic.abs_tol, "h_init": ic.h_init,
                       "h_min": ic.h_min, "h_max": ic.h_max, "sample_count": ic.sample_count,
                       "spacing": ic.spacing, "backend": scn.backend},
        "outputs": list(scn.outputs),
    }
    if scn.rate_window is not None:
        doc["rate_window"] = list(scn.rate_window)
    if scn.saddle is not None:
        doc["saddle"] = {"x": scn.saddle.x_star.tolist(), "y": scn.saddle.y_star.tolist()}
    return doc


def scenario_digest(doc: dict) -> str:
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def load_scenario(path) -> Scenario:
    """Read a YAML scenario or a run manifest (whose embedded scenario is replayed)."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc.strerror}") from None
    try:
        # manifests are JSON; YAML 1.1 would read exponents like 1e-10 as strings
        doc = json.loads(text)
    except ValueError:
        doc = None
    try:
        if doc is None:
            doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ScenarioError(f"YAML syntax error: {getattr(exc, 'problem', exc)}",
                            line=None if mark is None else mark.line + 1) from None
    if isinstance(doc, dict) and "scenario" in doc and "digest" in doc:
        inner = doc["scenario"]
        if scenario_digest(inner) != doc["digest"]:
            raise ScenarioError("manifest digest does not match its embedded scenario", "digest")
        return scenario_from_dict(inner)
    return scenario_from_dict(doc, _line_index(text))


def dump_scenario(scn: Scenario, path) -> None:
    Path(path).write_text(yaml.safe_dump(scenario_to_dict(scn), sort_keys=False))


# -- CSV ----------------------------------------------------------------------------------

def _fmt(v: float) -> str:
    return FLOAT_FMT % v


def write_trajectory_csv(path, traj: Trajectory) -> None:
    n, m = traj.n, traj.m
    header = (["t"] + [f"x_{i + 1}" for i in range(n)] + [f"y_{j + 1}" for j in range(m)]
              + [f"vx_{i + 1}" for i in range(n)] + [f"vy_{j + 1}" for j in range(m)])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for t, z in zip(traj.t, traj.z):
            w.writerow([_fmt(t)] + [_fmt(v) for v in z])


def write_series_csv(path, t, series: dict) -> None:
    names = list(series)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + names)
        for k, tk in enumerate(t):
            w.writerow([_fmt(tk)] + [_fmt(series[nm][k]) for nm in names])


def read_csv_column(path, column: str):
    """Return ``(t, values)`` for one column of a CSV with a ``t`` column."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path} is empty")
    header = rows[0]
    if "t" not in header:
        raise ValueError(f"{path} has no 't' column")
    if column not in header:
        raise ValueError(f"{path} has no column {column!r}; columns: {', '.join(header)}")
    it, ic = header.index("t"), header.index(column)
    try:
        t = np.array([float(r[it]) for r in rows[1:]])
        v = np.array([float(r[ic]) for r in rows[1:]])
    except (ValueError, IndexError) as exc:
        raise ValueError(f"{path}: malformed row ({exc})") from None
    return t, v


# -- results ------------------------------------------------------------------------------

def write_result(result: ScenarioResult, out_dir, wall_time: float) -> dict:
    """Write trajectory.csv, series.csv and manifest.json; return the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(out / "trajectory.csv", result.trajectory)
    write_series_csv(out / "series.csv", result.trajectory.t, result.series)
    scn = result.scenario
    doc = scenario_to_dict(scn)
    traj = result.trajectory
    manifest = {
        "tool": "saddleflow",
        "version": __version__,
        "scenario": doc,
        "digest": scenario_digest(doc),
        "seeds": scn.seeds,
        "integrator": doc["integrator"],
        "backend_used": traj.backend,
        "steps": {"accepted": traj.accepted_steps, "rejected": traj.rejected_steps, "rhs_evals": traj.rhs_evals},
        "wall_time_s": wall_time,
        "assumptions": result.assumptions.to_dict(),
        "rate_fits": {k: v.to_dict() for k, v in result.rate_fits.items()},
        "outputs": ["trajectory.csv", "series.csv", "manifest.json"],
    }
    if scn.problem.kind == "regression":
        manifest["notes"] = ARTIFACT_DEFAULTS_NOTE
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest
