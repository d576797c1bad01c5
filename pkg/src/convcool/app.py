"""Command-line application: configuration, experiment drivers, and
artifact persistence.

Every invocation executes one experiment and writes one run directory:

    config.txt     echoed ``key = value`` configuration (re-parseable)
    manifest.json  mode, config echo, outputs with sizes, wall time, reports
    metrics.csv    per-time-node diagnostics (simulate / optimize)
    summary.csv    one-row cost breakdown
    T_####.bin     field snapshots, row-major float64, little-endian
    T_####.txt     sidecar naming the grid and time of each snapshot
    sweep.csv      per-gain cost table (sweep-tau)
    report.txt     check results (verify / convergence)

Subcommands: ``simulate``, ``optimize``, ``sweep-tau``, ``verify``,
``convergence``.  Options may come from a flat key = value file (--config);
flags given on the command line override file values.  The run directory is
--out when given, else <root>/<slug> where the root comes from the
CONVCOOL_OUTPUT_ROOT environment variable (default ./runs) and the slug is a
deterministic digest of the configuration, so identical reruns land in (and
overwrite) the same place.

Reported costs (summary.csv, sweep.csv, the J_running column) use the
vertex-measured convention of ``objective.evaluate_nodal``; the optimizer's
internal cell/right-endpoint cost appears in the manifest's solver reports.
"""

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from .errors import ArtifactIOError, ConfigError, SolverError
from .feedback import FeedbackConfig, mix_norm, simulate_closed_loop, tau_sweep
from .grid import (GridSpec, ScalarField, StaggeredVelocity, TimeGrid,
                   deviation, divergence, grad_seminorm_sq, mean, norm_l2,
                   vel_norm_l2)
from .linsolve import HelmholtzOperator, helmholtz_solve
from .objective import (directional_derivative, evaluate, evaluate_nodal,
                        hessian_quadratic_form, node_dev_norm_sq)
from .optimize import ControlProblem, solve_optimal
from .pde import ControlTrajectory, adjoint_solve, forward_solve
from .stokes import stokes_solve

logger = logging.getLogger(__name__)

GRADIENT_TOL = 1e-3
HESSIAN_TOL = 1e-2
SPATIAL_RATIO_RANGE = (3.0, 5.0)
TEMPORAL_RATIO_RANGE = (1.7, 2.5)


# ---------------------------------------------------------------------------
# initial conditions
# ---------------------------------------------------------------------------

def _arctan_bump(x, y, cx, cy):
    r = 1.0 - 32.0 * (x - cx) ** 2 - 16.0 * (y - cy) ** 2
    return 10.0 * (0.5 + np.arctan(10.0 * r) / np.pi)


def example1_ic(x, y):
    """Smooth hot spot centered at (0.25, 0.25)."""
    return _arctan_bump(x, y, 0.25, 0.25)


def example2_ic(x, y):
    """Two hot spots, centered at (0.25, 0.25) and (0.75, 0.25)."""
    return _arctan_bump(x, y, 0.25, 0.25) + _arctan_bump(x, y, 0.75, 0.25)


def example3_ic(x, y):
    """Checkerboard 10·1_S with S = [0,0.5)² ∪ (0.5,1]²; the value is 0 on
    the dividing lines themselves."""
    lower = (x < 0.5) & (y < 0.5)
    upper = (x > 0.5) & (y > 0.5)
    return np.where(lower | upper, 10.0, 0.0)


_EXAMPLE_ICS = {"example1": example1_ic, "example2": example2_ic,
                "example3": example3_ic}


class InitialConditionSpec:
    """Which initial temperature to build: a named example or a snapshot
    file (flat binary plus sidecar, as written by the snapshot exporter)."""

    SELECTORS = ("example1", "example2", "example3", "file")

    __slots__ = ("selector", "path")

    def __init__(self, selector, path=None):
        if selector not in self.SELECTORS:
            raise ConfigError(f"unknown initial condition {selector!r}; "
                              f"expected one of {', '.join(self.SELECTORS)}")
        if selector == "file" and not path:
            raise ConfigError("initial condition 'file' needs a path")
        self.selector = selector
        self.path = str(path) if path else None


def build_initial_condition(spec, grid):
    """Construct the initial temperature on ``grid``.

    The named examples sample their formula on grid vertices and average
    each cell's four corners (second-order for the smooth bumps, and the
    convention that keeps the checkerboard's interface cells at the values
    the formula takes exactly on the dividing lines).  ``file`` loads a
    snapshot written by this package and requires a matching grid.
    """
    if spec.selector == "file":
        return _load_snapshot_field(spec.path, grid)
    return ScalarField.from_vertex_average(grid, _EXAMPLE_ICS[spec.selector])


def _load_snapshot_field(path, grid):
    path = Path(path)
    sidecar = path.with_suffix(".txt")
    try:
        meta = _parse_sidecar(sidecar.read_text())
        data = np.fromfile(path, dtype="<f8")
    except OSError as err:
        raise ArtifactIOError(f"cannot read initial condition {path}: {err}")
    nx, ny = int(meta.get("nx", -1)), int(meta.get("ny", -1))
    if (nx, ny) != (grid.nx, grid.ny):
        raise ConfigError(f"initial condition file is {nx}x{ny}, "
                          f"run grid is {grid.nx}x{grid.ny}")
    if data.size != nx * ny:
        raise ArtifactIOError(f"{path} holds {data.size} values, "
                              f"expected {nx * ny}")
    return ScalarField(grid, data.reshape(nx, ny), check=False)


def _parse_sidecar(text):
    meta = {}
    for line in text.splitlines():
        if "=" in line:
            key, _, value = line.partition("=")
            meta[key.strip()] = value.strip()
    return meta


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

_CONFIG_TYPES = {
    "command": str,
    "control": str,
    "example": int,
    "ic_file": str,
    "mesh": int,
    "steps": int,
    "t_f": float,
    "kappa": float,
    "gamma": float,
    "alpha": float,
    "beta": float,
    "tau": float,
    "tau_min": float,
    "tau_max": float,
    "tau_step": float,
    "tol": float,
    "stokes_tol": float,
    "max_iterations": int,
    "memory": int,
    "seed": int,
    "snapshots": str,
    "checks": str,
}

_DEFAULTS = {
    "command": "simulate",
    "control": "none",
    "example": 1,
    "ic_file": "",
    "mesh": 160,
    "steps": 160,
    "t_f": 1.0,
    "kappa": 0.05,
    "gamma": 0.025,
    "alpha": 0.0,
    "beta": 1.0,
    "tau": 0.75,
    "tau_min": 0.0,
    "tau_max": 2.0,
    "tau_step": 0.1,
    "tol": 1e-5,
    "stokes_tol": 1e-10,
    "max_iterations": 200,
    "memory": 8,
    "seed": 0,
    "snapshots": "0,0.25,0.5,0.75,1",
    "checks": "gradient,hessian",
}

_ECHO_ORDER = list(_DEFAULTS)


def _parse_config_file(path):
    """Read a flat ``key = value`` file ('#' starts a comment) into a typed
    dict.  Unknown keys and unconvertible values are configuration errors."""
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ArtifactIOError(f"cannot read config file {path}: {err}")
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', "
                              f"got {raw.strip()!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _CONFIG_TYPES:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        try:
            values[key] = _CONFIG_TYPES[key](value)
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {value!r}")
    return values


class RunConfig:
    """Validated, fully-populated experiment configuration.

    ``data`` maps every known key to a typed value (defaults, then config
    file, then command-line flags).  The echo text round-trips through
    ``_parse_config_file`` to an equal dict.
    """

    __slots__ = ("data",)

    def __init__(self, data):
        self.data = dict(data)
        self._validate()

    def __getattr__(self, key):
        try:
            return self.data[key]
        except KeyError:
            raise AttributeError(key)

    @classmethod
    def from_args(cls, args):
        data = dict(_DEFAULTS)
        if getattr(args, "config", None):
            data.update(_parse_config_file(args.config))
        data["command"] = args.command
        for key in _CONFIG_TYPES:
            flag = getattr(args, key, None)
            if flag is not None:
                data[key] = _CONFIG_TYPES[key](flag)
        checks = [name for name in ("gradient", "hessian")
                  if getattr(args, name, False)]
        if checks:
            data["checks"] = ",".join(checks)
        return cls(data)

    def _validate(self):
        d = self.data
        if d["command"] not in ("simulate", "optimize", "sweep-tau",
                                "verify", "convergence"):
            raise ConfigError(f"unknown command {d['command']!r}")
        if d["control"] not in ("none", "feedback"):
            raise ConfigError(f"control must be 'none' or 'feedback', "
                              f"got {d['control']!r}")
        if d["example"] not in (1, 2, 3):
            raise ConfigError(f"example must be 1, 2 or 3, got {d['example']}")
        if d["mesh"] < 2:
            raise ConfigError(f"mesh must be >= 2, got {d['mesh']}")
        if d["steps"] < 1:
            raise ConfigError(f"steps must be >= 1, got {d['steps']}")
        if d["t_f"] <= 0:
            raise ConfigError(f"t_f must be > 0, got {d['t_f']}")
        if d["kappa"] <= 0 or d["gamma"] <= 0:
            raise ConfigError(f"need kappa > 0 and gamma > 0, "
                              f"got {d['kappa']}, {d['gamma']}")
        if d["alpha"] < 0 or d["beta"] < 0:
            raise ConfigError(f"cost weights must be >= 0, got "
                              f"alpha={d['alpha']}, beta={d['beta']}")
        if d["tau"] < 0:
            raise ConfigError(f"tau must be >= 0, got {d['tau']}")
        if d["tau_min"] < 0 or d["tau_max"] < d["tau_min"] or d["tau_step"] <= 0:
            raise ConfigError(f"bad sweep range [{d['tau_min']}, "
                              f"{d['tau_max']}] step {d['tau_step']}")
        self.snapshot_times()
        bad = set(self.check_names()) - {"gradient", "hessian"}
        if bad:
            raise ConfigError(f"unknown checks: {', '.join(sorted(bad))}")

    def snapshot_times(self):
        times = []
        text = self.data["snapshots"].strip()
        for part in text.split(",") if text else []:
            try:
                t = float(part)
            except ValueError:
                raise ConfigError(f"bad snapshot time {part!r}")
            if not 0.0 <= t <= self.data["t_f"]:
                raise ConfigError(f"snapshot time {t} outside [0, t_f]")
            times.append(t)
        return times

    def check_names(self):
        text = self.data["checks"].strip()
        return [p.strip() for p in text.split(",") if p.strip()]

    def sweep_taus(self):
        d = self.data
        n = int(round((d["tau_max"] - d["tau_min"]) / d["tau_step"]))
        taus = [d["tau_min"] + k * d["tau_step"] for k in range(n + 1)]
        return [round(t, 12) for t in taus if t <= d["tau_max"] + 1e-12]

    def grid(self):
        return GridSpec(self.data["mesh"], self.data["mesh"])

    def timegrid(self):
        return TimeGrid(self.data["t_f"], self.data["steps"])

    def ic_spec(self):
        if self.data["ic_file"]:
            return InitialConditionSpec("file", self.data["ic_file"])
        return InitialConditionSpec(f"example{self.data['example']}")

    def mode(self):
        command = self.data["command"]
        if command == "simulate":
            return self.data["control"]
        return {"optimize": "optimal", "sweep-tau": "sweep",
                "verify": "verify", "convergence": "verify"}[command]

    def echo_text(self):
        lines = [f"{key} = {self.data[key]}" for key in _ECHO_ORDER]
        return "\n".join(lines) + "\n"

    def slug(self):
        digest = hashlib.sha1(self.echo_text().encode()).hexdigest()[:8]
        d = self.data
        parts = [d["command"].replace("-", ""), self.mode(),
                 f"ex{d['example']}" if not d["ic_file"] else "file",
                 f"m{d['mesh']}", f"n{d['steps']}"]
        if self.mode() == "feedback":
            parts.append(f"tau{d['tau']:g}")
        parts.append(digest)
        return "-".join(parts)


def _run_directory(cfg, out_flag):
    if out_flag:
        return Path(out_flag)
    root = os.environ.get("CONVCOOL_OUTPUT_ROOT", "runs")
    return Path(root) / cfg.slug()


# ---------------------------------------------------------------------------
# artifact writers
# ---------------------------------------------------------------------------

def _fmt(x):
    return f"{float(x):.12g}"


def _write_csv(path, header, rows):
    """Write a CSV with '\\n' line endings; returns its row count (with
    header).  Cells are written as given, so numeric columns must already
    be formatted."""
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as err:
        raise ArtifactIOError(f"cannot write {path}: {err}")
    return len(rows) + 1


def _record(name, rows):
    return {"path": name, "rows": int(rows)}


def _write_metrics(run_dir, T, v, alpha, beta, gamma):
    """Per-time-node diagnostics CSV.

    ``v[i]`` is the control applied on [t_i, t_{i+1}]; the velocity columns
    repeat the final control at the last node.  J_running accumulates the
    reported-convention cost: its final value equals summary.csv's J.
    """
    tg = T.timegrid
    n = tg.n_t
    times = tg.times()
    node_sq = [node_dev_norm_sq(T[i]) for i in range(n + 1)]
    vel = [vel_norm_l2(v[i]) for i in range(n)]
    div = [norm_l2(divergence(v[i])) for i in range(n)]
    power = [gamma * grad_seminorm_sq(v[i]) for i in range(n)]
    vel.append(vel[-1])
    div.append(div[-1])
    rows = []
    j_run = 0.0
    for i in range(n + 1):
        j_run += 0.5 * beta * tg.dt * node_sq[i]
        if i >= 1:
            j_run += 0.5 * tg.dt * power[i - 1]
        total = j_run + (0.5 * alpha * node_sq[n] if i == n else 0.0)
        rows.append([_fmt(times[i]), _fmt(norm_l2(deviation(T[i]))),
                     _fmt(vel[i]), _fmt(div[i]), _fmt(mean(T[i])),
                     _fmt(mix_norm(T[i])), _fmt(total)])
    count = _write_csv(run_dir / "metrics.csv",
                       ["t", "dT_l2", "v_l2", "div_l2", "mean_T",
                        "mix_norm", "J_running"], rows)
    return [_record("metrics.csv", count)]


def _write_summary(run_dir, reported, iter_label, cpu):
    row = [[_fmt(reported.j_total), _fmt(reported.j_alpha),
            _fmt(reported.j_beta), _fmt(reported.j_gamma),
            _fmt(reported.max_div), _fmt(reported.max_vel),
            str(iter_label), f"{cpu:.2f}"]]
    count = _write_csv(run_dir / "summary.csv",
                       ["J", "J_alpha", "J_beta", "J_gamma", "max_div",
                        "max_vel", "iter", "cpu"], row)
    return [_record("summary.csv", count)]


def _write_snapshots(run_dir, T, snapshot_times):
    """Field snapshots at the time nodes nearest the requested times: raw
    row-major little-endian float64 next to a sidecar naming the grid and
    time."""
    tg = T.timegrid
    nodes = []
    for t in snapshot_times:
        i = int(round(t / tg.dt))
        i = min(max(i, 0), tg.n_t)
        if i not in nodes:
            nodes.append(i)
    records = []
    for i in nodes:
        field = T[i]
        stem = f"T_{i:04d}"
        data = np.ascontiguousarray(field.values, dtype="<f8")
        sidecar = (f"field = temperature\n"
                   f"nx = {field.grid.nx}\n"
                   f"ny = {field.grid.ny}\n"
                   f"node = {i}\n"
                   f"time = {_fmt(i * tg.dt)}\n"
                   f"dtype = float64\n"
                   f"order = row-major\n"
                   f"byteorder = little\n")
        try:
            data.tofile(run_dir / f"{stem}.bin")
            (run_dir / f"{stem}.txt").write_text(sidecar)
        except OSError as err:
            raise ArtifactIOError(f"cannot write snapshot {stem}: {err}")
        records.append(_record(f"{stem}.bin", field.grid.nx))
        records.append(_record(f"{stem}.txt", sidecar.count("\n")))
    return records


def export_metrics(run_dir, T, v, cfg, iter_label, cpu):
    """Write metrics.csv, snapshots, and summary.csv for a finished
    trajectory; returns (artifact records, reported cost breakdown)."""
    d = cfg.data
    reported = evaluate_nodal(T, v, d["alpha"], d["beta"], d["gamma"])
    records = _write_metrics(run_dir, T, v, d["alpha"], d["beta"], d["gamma"])
    records += _write_snapshots(run_dir, T, cfg.snapshot_times())
    records += _write_summary(run_dir, reported, iter_label, cpu)
    return records, reported


def _write_report(run_dir, lines):
    text = "\n".join(lines) + "\n"
    try:
        (run_dir / "report.txt").write_text(text)
    except OSError as err:
        raise ArtifactIOError(f"cannot write report: {err}")
    return [_record("report.txt", len(lines))]


def write_manifest(run_dir, mode, cfg, outputs, wall_time, reports):
    """Write manifest.json: run mode, config echo, the artifact list with
    byte and row counts, solver wall time, and solver reports."""
    listed = []
    for rec in outputs:
        path = run_dir / rec["path"]
        try:
            size = path.stat().st_size
        except OSError as err:
            raise ArtifactIOError(f"manifest lists missing artifact "
                                  f"{rec['path']}: {err}")
        listed.append({"path": rec["path"], "bytes": int(size),
                       "rows": rec["rows"]})
    doc = {"mode": mode, "config": cfg.data, "outputs": listed,
           "wall_time": wall_time, "solver_reports": reports}
    try:
        with open(run_dir / "manifest.json", "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as err:
        raise ArtifactIOError(f"cannot write manifest: {err}")
    return doc


def load_manifest(run_dir):
    try:
        with open(Path(run_dir) / "manifest.json") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as err:
        raise ArtifactIOError(f"cannot read manifest in {run_dir}: {err}")


def validate_manifest(run_dir):
    """Check the manifest invariant: every listed artifact exists with the
    recorded byte count (and row count, for text files), and every file in
    the directory other than the manifest itself is listed."""
    run_dir = Path(run_dir)
    doc = load_manifest(run_dir)
    listed = {rec["path"] for rec in doc["outputs"]}
    for rec in doc["outputs"]:
        path = run_dir / rec["path"]
        if not path.is_file():
            raise ArtifactIOError(f"missing artifact {rec['path']}")
        size = path.stat().st_size
        if size != rec["bytes"]:
            raise ArtifactIOError(f"{rec['path']}: {size} bytes on disk, "
                                  f"{rec['bytes']} in manifest")
        if path.suffix in (".csv", ".txt"):
            rows = path.read_text().count("\n")
            if rows != rec["rows"]:
                raise ArtifactIOError(f"{rec['path']}: {rows} rows on disk, "
                                      f"{rec['rows']} in manifest")
    on_disk = {p.name for p in run_dir.iterdir() if p.is_file()}
    unlisted = on_disk - listed - {"manifest.json"}
    if unlisted:
        raise ArtifactIOError(f"unlisted files in run directory: "
                              f"{', '.join(sorted(unlisted))}")
    return doc


# ---------------------------------------------------------------------------
# experiment drivers
# ---------------------------------------------------------------------------

def _run_simulate(cfg, run_dir, outputs):
    grid, tg = cfg.grid(), cfg.timegrid()
    T0 = build_initial_condition(cfg.ic_spec(), grid)
    d = cfg.data
    tau = d["tau"] if d["control"] == "feedback" else 0.0
    fb = FeedbackConfig(tau, d["gamma"], d["kappa"], tg, grid,
                        alpha=d["alpha"], beta=d["beta"],
                        stokes_tol=d["stokes_tol"])
    start = time.perf_counter()
    run = simulate_closed_loop(fb, T0)
    wall = time.perf_counter() - start
    records, reported = export_metrics(run_dir, run.T, run.v, cfg, "--", wall)
    outputs += records
    dev = run.dev_norms
    reports = {"steps": tg.n_t,
               "final_dev_norm": float(dev[-1]),
               "monotone_decay": bool(np.all(np.diff(dev) <= 1e-12)),
               "internal_objective": run.objective.j_total}
    return reported, wall, reports


def _run_optimize(cfg, run_dir, outputs):
    grid, tg = cfg.grid(), cfg.timegrid()
    d = cfg.data
    spec = cfg.ic_spec()
    ic = (_EXAMPLE_ICS[spec.selector] if spec.selector != "file"
          else build_initial_condition(spec, grid))
    problem = ControlProblem(grid, tg, ic, d["kappa"], d["alpha"], d["beta"],
                             d["gamma"], tol=d["tol"],
                             max_iterations=d["max_iterations"],
                             stokes_tol=d["stokes_tol"], memory=d["memory"])
    result = solve_optimal(problem)
    records, reported = export_metrics(run_dir, result.T, result.v, cfg,
                                       result.iterations, result.wall_time)
    outputs += records
    reports = {"iterations": result.iterations,
               "level_iterations": {str(k): v for k, v
                                    in result.level_iterations.items()},
               "aa_restarts": result.aa_restarts,
               "final_residual": result.residual_history[-1],
               "residual_history": list(result.residual_history),
               "internal_objective": result.objective.j_total}
    return reported, result.wall_time, reports


def _run_sweep(cfg, run_dir, outputs):
    grid, tg = cfg.grid(), cfg.timegrid()
    T0 = build_initial_condition(cfg.ic_spec(), grid)
    d = cfg.data
    base = FeedbackConfig(0.0, d["gamma"], d["kappa"], tg, grid,
                          alpha=d["alpha"], beta=d["beta"],
                          stokes_tol=d["stokes_tol"])
    start = time.perf_counter()
    sweep = tau_sweep(base, cfg.sweep_taus(), T0)
    wall = time.perf_counter() - start
    rows = []
    for row in sweep:
        if row.error is not None:
            rows.append([_fmt(row.tau)] + [""] * 6 + [row.error])
        else:
            rep = row.reported
            rows.append([_fmt(row.tau), _fmt(rep.j_total), _fmt(rep.j_alpha),
                         _fmt(rep.j_beta), _fmt(rep.j_gamma),
                         _fmt(rep.max_div), _fmt(rep.max_vel), ""])
    count = _write_csv(run_dir / "sweep.csv",
                       ["tau", "J", "J_alpha", "J_beta", "J_gamma",
                        "max_div", "max_vel", "error"], rows)
    outputs.append(_record("sweep.csv", count))
    ok = [row for row in sweep if row.error is None]
    if not ok:
        raise SolverError("every gain in the sweep failed",
                          failures=len(sweep))
    best = min(ok, key=lambda row: row.reported.j_total)
    reports = {"best_tau": best.tau,
               "best_objective": best.reported.j_total,
               "failures": len(sweep) - len(ok)}
    return best.reported, wall, reports


def _random_divfree_control(grid, tg, rng, scale=1.0):
    """A random exactly divergence-free control trajectory built from nodal
    stream functions that vanish on the boundary ring."""
    vels = []
    for _ in range(tg.n_t):
        psi = np.zeros((grid.nx + 1, grid.ny + 1))
        psi[1:-1, 1:-1] = rng.standard_normal((grid.nx - 1, grid.ny - 1))
        vel = StaggeredVelocity.from_stream(grid, psi)
        vels.append(vel * (scale / max(vel_norm_l2(vel), 1e-30)))
    return ControlTrajectory(tg, vels)


def _run_verify(cfg, run_dir, outputs):
    """Derivative checks: adjoint-assembled directional derivative against
    central differences of the cost, and the Hessian quadratic form against
    second differences, over seeded random divergence-free directions."""
    grid, tg = cfg.grid(), cfg.timegrid()
    d = cfg.data
    spec = cfg.ic_spec()
    ic = (_EXAMPLE_ICS[spec.selector] if spec.selector != "file"
          else build_initial_condition(spec, grid))
    problem = ControlProblem(grid, tg, ic, d["kappa"], d["alpha"], d["beta"],
                             d["gamma"], stokes_tol=d["stokes_tol"])
    rng = np.random.default_rng(d["seed"])
    T0 = problem.initial_condition(grid)

    start = time.perf_counter()
    v = _random_divfree_control(grid, tg, rng, scale=0.5)
    T = forward_solve(v, T0, d["kappa"])
    q = adjoint_solve(v, T, d["alpha"], d["beta"], d["kappa"])

    def cost(control):
        state = forward_solve(control, T0, d["kappa"])
        return evaluate(state, control, d["alpha"], d["beta"],
                        d["gamma"]).j_total

    j_base = cost(v)
    lines = []
    reports = {}
    failed = []
    checks = cfg.check_names()
    n_dirs = 5
    if "gradient" in checks:
        worst = 0.0
        for _ in range(n_dirs):
            h = _random_divfree_control(grid, tg, rng)
            dd = directional_derivative(v, T, q, h, d["gamma"])
            eps = 1e-4
            fd = (cost(v + eps * h) - cost(v - eps * h)) / (2.0 * eps)
            worst = max(worst, abs(dd - fd) / max(abs(fd), 1e-30))
        status = "PASS" if worst <= GRADIENT_TOL else "FAIL"
        lines.append(f"gradient: rel error {worst:.3e} "
                     f"(tol {GRADIENT_TOL:.0e}, {n_dirs} directions) {status}")
        reports["gradient_rel_error"] = worst
        if status == "FAIL":
            failed.append("gradient")
    if "hessian" in checks:
        worst = 0.0
        for _ in range(n_dirs):
            h = _random_divfree_control(grid, tg, rng)
            quad = hessian_quadratic_form(v, T, q, h, d["alpha"], d["beta"],
                                          d["gamma"], d["kappa"])
            eps = 1e-3
            fd2 = (cost(v + eps * h) - 2.0 * j_base
                   + cost(v - eps * h)) / eps ** 2
            worst = max(worst, abs(quad - fd2) / max(abs(fd2), 1e-30))
        status = "PASS" if worst <= HESSIAN_TOL else "FAIL"
        lines.append(f"hessian: rel error {worst:.3e} "
                     f"(tol {HESSIAN_TOL:.0e}, {n_dirs} directions) {status}")
        reports["hessian_rel_error"] = worst
        if status == "FAIL":
            failed.append("hessian")
    wall = time.perf_counter() - start

    for line in lines:
        print(line)
    outputs += _write_report(run_dir, lines)
    reports["passed"] = not failed
    if failed:
        reports["failed_checks"] = failed
    return None, wall, reports, failed


# -- convergence studies ----------------------------------------------------

def _helmholtz_errors(coeff, meshes):
    """Cell-norm error of (I − coeff·Δ)⁻¹ against a smooth manufactured
    solution, per mesh."""
    errors = []
    for n in meshes:
        grid = GridSpec(n, n)
        x, y = grid.cell_mesh()
        exact = (np.cos(np.pi * x) * np.cos(2 * np.pi * y)
                 + 0.5 * np.cos(3 * np.pi * x) + np.zeros((n, n)))
        rhs = (exact
               + coeff * 5 * np.pi ** 2 * np.cos(np.pi * x) * np.cos(2 * np.pi * y)
               + coeff * 4.5 * np.pi ** 2 * np.cos(3 * np.pi * x))
        op = HelmholtzOperator(grid, coeff)
        solution, _ = helmholtz_solve(op, ScalarField(grid, rhs, check=False))
        errors.append(norm_l2(ScalarField(grid, solution.values - exact,
                                          check=False)))
    return errors


def _stokes_exact(grid):
    """Exact velocity of the manufactured Stokes problem with stream
    function sin²(πx)sin²(πy), sampled on the MAC faces."""
    pi = np.pi
    xf = np.linspace(0.0, 1.0, grid.nx + 1)[:, None]
    yc = grid.cell_y()[None, :]
    u = pi * np.sin(pi * xf) ** 2 * np.sin(2 * pi * yc)
    xc = grid.cell_x()[:, None]
    yf = np.linspace(0.0, 1.0, grid.ny + 1)[None, :]
    w = -pi * np.sin(2 * pi * xc) * np.sin(pi * yf) ** 2
    return StaggeredVelocity(grid, u, w, check=False)


def _stokes_force(grid, gamma):
    """−γΔv + ∇p on the MAC faces for the manufactured solution above, with
    pressure cos(πx)cos(πy)."""
    pi = np.pi
    xf = np.linspace(0.0, 1.0, grid.nx + 1)[:, None]
    yc = grid.cell_y()[None, :]
    lap_u = 2 * pi ** 3 * np.sin(2 * pi * yc) * (2 * np.cos(2 * pi * xf) - 1.0)
    p_x = -pi * np.sin(pi * xf) * np.cos(pi * yc)
    fu = -gamma * lap_u + p_x
    xc = grid.cell_x()[:, None]
    yf = np.linspace(0.0, 1.0, grid.ny + 1)[None, :]
    lap_w = -2 * pi ** 3 * np.sin(2 * pi * xc) * (2 * np.cos(2 * pi * yf) - 1.0)
    p_y = -pi * np.cos(pi * xc) * np.sin(pi * yf)
    fw = -gamma * lap_w + p_y
    fu[0, :] = fu[-1, :] = 0.0
    fw[:, 0] = fw[:, -1] = 0.0
    return StaggeredVelocity(grid, fu, fw, check=False)


def _stokes_errors(gamma, meshes, tol):
    errors = []
    for n in meshes:
        grid = GridSpec(n, n)
        sol = stokes_solve(_stokes_force(grid, gamma), gamma, tol)
        errors.append(vel_norm_l2(sol.velocity - _stokes_exact(grid)))
    return errors


def _temporal_errors(cfg, step_counts, ref_steps):
    """Error of the forward marcher at t_f against a fine-step reference on
    the same spatial grid, for each coarse step count (isolates the time
    discretization; the advecting field is steady and divergence-free)."""
    d = cfg.data
    grid = GridSpec(40, 40)
    x = np.linspace(0.0, 1.0, 41)[:, None]
    y = np.linspace(0.0, 1.0, 41)[None, :]
    psi = 0.2 * np.sin(np.pi * x) ** 2 * np.sin(np.pi * y) ** 2
    psi[0, :] = psi[-1, :] = 0.0
    psi[:, 0] = psi[:, -1] = 0.0
    vel = StaggeredVelocity.from_stream(grid, psi)
    T0 = ScalarField.from_vertex_average(
        grid, lambda px, py: np.cos(np.pi * px) * np.cos(np.pi * py)
        + 0.5 * np.cos(2 * np.pi * px))

    def final_state(n_t):
        tg = TimeGrid(d["t_f"], n_t)
        control = ControlTrajectory(tg, [vel] * n_t)
        return forward_solve(control, T0, d["kappa"])[n_t]

    reference = final_state(ref_steps)
    errors = []
    for n_t in step_counts:
        diff = final_state(n_t) - reference
        errors.append(norm_l2(diff))
    return errors


def _ratios(errors):
    return [errors[i] / errors[i + 1] for i in range(len(errors) - 1)]


def _study_lines(name, sizes, errors, lo, hi):
    ratios = _ratios(errors)
    ok = all(lo <= r <= hi for r in ratios)
    pieces = ", ".join(f"{n}: {e:.3e}" for n, e in zip(sizes, errors))
    rtext = ", ".join(f"{r:.2f}" for r in ratios)
    status = "PASS" if ok else "FAIL"
    return ([f"{name}: errors {pieces}",
             f"{name}: ratios {rtext} (want [{lo:g}, {hi:g}]) {status}"],
            ratios, ok)


def _run_convergence(cfg, run_dir, outputs):
    """Manufactured-solution refinement studies: the Helmholtz and Stokes
    solvers refine at second order in space, the forward marcher at first
    order in time."""
    d = cfg.data
    meshes = [20, 40, 80]
    steps = [20, 40, 80]
    lines = []
    reports = {}
    failed = []
    start = time.perf_counter()

    helm = _helmholtz_errors(d["kappa"], meshes)
    text, ratios, ok = _study_lines("helmholtz", meshes, helm,
                                    *SPATIAL_RATIO_RANGE)
    lines += text
    reports["helmholtz_ratios"] = ratios
    if not ok:
        failed.append("helmholtz")

    stokes = _stokes_errors(d["gamma"], meshes, d["stokes_tol"])
    text, ratios, ok = _study_lines("stokes", meshes, stokes,
                                    *SPATIAL_RATIO_RANGE)
    lines += text
    reports["stokes_ratios"] = ratios
    if not ok:
        failed.append("stokes")

    temporal = _temporal_errors(cfg, steps, ref_steps=1280)
    text, ratios, ok = _study_lines("temporal", steps, temporal,
                                    *TEMPORAL_RATIO_RANGE)
    lines += text
    reports["temporal_ratios"] = ratios
    if not ok:
        failed.append("temporal")
    wall = time.perf_counter() - start

    for line in lines:
        print(line)
    outputs += _write_report(run_dir, lines)
    reports["passed"] = not failed
    if failed:
        reports["failed_checks"] = failed
    return None, wall, reports, failed


# ---------------------------------------------------------------------------
# command line
# ---------------------------------------------------------------------------

def _parser():
    parser = argparse.ArgumentParser(
        prog="convcool",
        description="Convection-cooling control experiments on the unit "
                    "square: uncontrolled, feedback, and optimized "
                    "advecting velocities for an advection-diffusion "
                    "temperature field.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--out", help="run directory (default: "
                       "$CONVCOOL_OUTPUT_ROOT/<slug> or ./runs/<slug>)")
        p.add_argument("--example", type=int, choices=(1, 2, 3),
                       help="initial condition (default 1)")
        p.add_argument("--ic-file", dest="ic_file",
                       help="initial condition from a snapshot .bin file")
        p.add_argument("--mesh", type=int, help="cells per direction")
        p.add_argument("--steps", type=int, help="time steps")
        p.add_argument("--t-f", dest="t_f", type=float, help="final time")
        p.add_argument("--kappa", type=float, help="diffusivity")
        p.add_argument("--gamma", type=float, help="control cost weight")
        p.add_argument("--alpha", type=float, help="terminal cost weight")
        p.add_argument("--beta", type=float, help="tracking cost weight")
        p.add_argument("--stokes-tol", dest="stokes_tol", type=float)
        p.add_argument("--snapshots", help="comma-separated snapshot times")
        p.add_argument("--verbose", action="store_true")

    p = sub.add_parser("simulate", help="march the PDE without control or "
                                        "with instantaneous feedback")
    common(p)
    p.add_argument("--control", choices=("none", "feedback"))
    p.add_argument("--tau", type=float, help="feedback gain")

    p = sub.add_parser("optimize", help="solve the optimal control problem")
    common(p)
    p.add_argument("--tol", type=float, help="fixed-point tolerance")
    p.add_argument("--max-iterations", dest="max_iterations", type=int)
    p.add_argument("--memory", type=int, help="acceleration memory depth")

    p = sub.add_parser("sweep-tau", help="closed-loop runs over a range of "
                                         "feedback gains")
    common(p)
    p.add_argument("--tau-min", dest="tau_min", type=float)
    p.add_argument("--tau-max", dest="tau_max", type=float)
    p.add_argument("--tau-step", dest="tau_step", type=float)

    p = sub.add_parser("verify", help="check the adjoint gradient and "
                                      "Hessian against finite differences")
    common(p)
    p.add_argument("--gradient", action="store_true",
                   help="run only the gradient check (default: both)")
    p.add_argument("--hessian", action="store_true",
                   help="run only the Hessian check (default: both)")
    p.add_argument("--seed", type=int, help="direction sampling seed")

    p = sub.add_parser("convergence", help="manufactured-solution "
                                           "refinement studies")
    common(p)
    return parser


def run(argv=None):
    """Execute one experiment; returns the process exit code (0 success,
    2 configuration error, 3 solver or check failure, 4 I/O error)."""
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.from_args(args)
        run_dir = _run_directory(cfg, args.out)
        run_dir.mkdir(parents=True, exist_ok=True)
        echo = cfg.echo_text()
        try:
            (run_dir / "config.txt").write_text(echo)
        except OSError as err:
            raise ArtifactIOError(f"cannot write config echo: {err}")
        outputs = [_record("config.txt", echo.count("\n"))]

        failed_checks = []
        if cfg.command == "simulate":
            reported, wall, reports = _run_simulate(cfg, run_dir, outputs)
        elif cfg.command == "optimize":
            reported, wall, reports = _run_optimize(cfg, run_dir, outputs)
        elif cfg.command == "sweep-tau":
            reported, wall, reports = _run_sweep(cfg, run_dir, outputs)
        elif cfg.command == "verify":
            reported, wall, reports, failed_checks = _run_verify(
                cfg, run_dir, outputs)
        else:
            reported, wall, reports, failed_checks = _run_convergence(
                cfg, run_dir, outputs)

        write_manifest(run_dir, cfg.mode(), cfg, outputs, wall, reports)
        if reported is not None:
            print(f"J={reported.j_total:.6g} (alpha={reported.j_alpha:.6g} "
                  f"beta={reported.j_beta:.6g} gamma={reported.j_gamma:.6g}) "
                  f"max_vel={reported.max_vel:.4g} wall={wall:.1f}s")
        print(f"run directory: {run_dir}")
        if failed_checks:
            raise SolverError(f"checks failed: {', '.join(failed_checks)}",
                              checks=failed_checks)
    except (ConfigError, ValueError) as err:
        print(f"error[config]: {err}", file=sys.stderr)
        return 2
    except SolverError as err:
        print(f"error[solver]: {err}", file=sys.stderr)
        return 3
    except (ArtifactIOError, OSError) as err:
        print(f"error[io]: {err}", file=sys.stderr)
        return 4
    return 0
