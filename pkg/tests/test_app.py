"""Command-line app: configuration parsing and validation, artifact formats,
manifest invariants, determinism, and process exit codes."""

import csv
import shutil
import subprocess

import numpy as np
import pytest

from convcool import (GridSpec, build_initial_condition, load_manifest, run,
                      validate_manifest)
from convcool.app import (_DEFAULTS, InitialConditionSpec, RunConfig,
                          _parse_config_file)
from convcool.errors import ArtifactIOError, ConfigError


def _read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def _cfg(**overrides):
    return RunConfig(dict(_DEFAULTS, **overrides))


# -- configuration ------------------------------------------------------------

def test_initial_condition_spec_validation():
    with pytest.raises(ConfigError):
        InitialConditionSpec("example9")
    with pytest.raises(ConfigError):
        InitialConditionSpec("file")
    spec = InitialConditionSpec("file", "somewhere.bin")
    assert spec.path == "somewhere.bin"


def test_snapshot_file_round_trip(tmp_path):
    g = GridSpec(6, 5)
    rng = np.random.default_rng(70)
    values = rng.standard_normal((6, 5))
    path = tmp_path / "field.bin"
    values.astype("<f8").tofile(path)
    (tmp_path / "field.txt").write_text("nx = 6\nny = 5\ntime = 0\n")
    got = build_initial_condition(InitialConditionSpec("file", path), g)
    assert np.array_equal(got.values, values)
    with pytest.raises(ConfigError):
        build_initial_condition(InitialConditionSpec("file", path),
                                GridSpec(5, 6))
    with pytest.raises(ArtifactIOError):
        build_initial_condition(
            InitialConditionSpec("file", tmp_path / "absent.bin"), g)
    values.astype("<f8")[:-1].tofile(path)  # truncated payload
    with pytest.raises(ArtifactIOError):
        build_initial_condition(InitialConditionSpec("file", path), g)


def test_config_file_parsing(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# a comment\n"
                    "mesh = 40   # trailing comment\n"
                    "tau = 1.25\n"
                    "\n"
                    "control = feedback\n")
    values = _parse_config_file(path)
    assert values == {"mesh": 40, "tau": 1.25, "control": "feedback"}
    path.write_text("meshh = 40\n")
    with pytest.raises(ConfigError):
        _parse_config_file(path)
    path.write_text("mesh = forty\n")
    with pytest.raises(ConfigError):
        _parse_config_file(path)
    path.write_text("just some words\n")
    with pytest.raises(ConfigError):
        _parse_config_file(path)
    with pytest.raises(ArtifactIOError):
        _parse_config_file(tmp_path / "missing.cfg")


def test_run_config_validation():
    assert _cfg().mesh == 160
    bad = [dict(command="transmogrify"), dict(control="psychic"),
           dict(example=4), dict(mesh=1), dict(steps=0), dict(t_f=0.0),
           dict(kappa=0.0), dict(gamma=-1.0), dict(alpha=-0.1),
           dict(tau=-0.5), dict(tau_step=0.0), dict(tau_min=1.0, tau_max=0.5),
           dict(snapshots="0,banana"), dict(snapshots="2.5"),
           dict(checks="gradient,spectral")]
    for overrides in bad:
        with pytest.raises(ConfigError):
            _cfg(**overrides)


def test_sweep_grid_covers_the_range_inclusively():
    taus = _cfg().sweep_taus()
    assert len(taus) == 21
    assert taus[0] == 0.0 and taus[-1] == 2.0
    assert abs(taus[13] - 1.3) < 1e-12
    assert _cfg(tau_min=0.5, tau_max=0.5).sweep_taus() == [0.5]


def test_echo_round_trips_and_slug_is_deterministic(tmp_path):
    cfg = _cfg(command="simulate", control="feedback", tau=1.25, mesh=20,
               steps=20)
    path = tmp_path / "echo.cfg"
    path.write_text(cfg.echo_text())
    assert _parse_config_file(path) == cfg.data
    twin = _cfg(command="simulate", control="feedback", tau=1.25, mesh=20,
                steps=20)
    assert cfg.slug() == twin.slug()
    assert "tau1.25" in cfg.slug()
    assert cfg.slug() != cfg.data and _cfg(tau=0.75).slug() != cfg.slug()


# -- end-to-end runs ----------------------------------------------------------

def _simulate_args(out, extra=()):
    return ["simulate", "--mesh", "20", "--steps", "20",
            "--out", str(out), *extra]


def test_simulate_run_writes_consistent_artifacts(tmp_path):
    out = tmp_path / "fb"
    code = run(_simulate_args(out, ["--control", "feedback", "--tau", "0.75"]))
    assert code == 0
    doc = validate_manifest(out)
    assert doc["mode"] == "feedback"
    assert doc["config"]["tau"] == 0.75

    header, rows = _read_csv(out / "metrics.csv")
    assert header == ["t", "dT_l2", "v_l2", "div_l2", "mean_T", "mix_norm",
                      "J_running"]
    assert len(rows) == 21
    assert float(rows[0][0]) == 0.0 and float(rows[-1][0]) == 1.0

    s_header, s_rows = _read_csv(out / "summary.csv")
    assert s_header == ["J", "J_alpha", "J_beta", "J_gamma", "max_div",
                        "max_vel", "iter", "cpu"]
    j = float(s_rows[0][0])
    assert abs(float(rows[-1][-1]) - j) < 1e-12 * max(1.0, j)

    # the t = 0 snapshot is byte-for-byte the constructed initial condition
    ic = build_initial_condition(InitialConditionSpec("example1"),
                                 GridSpec(20, 20))
    blob = (out / "T_0000.bin").read_bytes()
    assert blob == np.ascontiguousarray(ic.values, dtype="<f8").tobytes()
    sidecar = (out / "T_0000.txt").read_text()
    assert "nx = 20" in sidecar and "time = 0" in sidecar


def test_uncontrolled_run_reports_zero_velocity(tmp_path):
    out = tmp_path / "none"
    assert run(_simulate_args(out, ["--control", "none"])) == 0
    assert load_manifest(out)["mode"] == "none"
    _, rows = _read_csv(out / "metrics.csv")
    assert all(float(r[2]) == 0.0 for r in rows)  # v_l2 column
    _, s_rows = _read_csv(out / "summary.csv")
    assert float(s_rows[0][3]) == 0.0  # J_gamma


def test_runs_are_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    extra = ["--control", "feedback", "--tau", "1.0"]
    assert run(_simulate_args(a, extra)) == 0
    assert run(_simulate_args(b, extra)) == 0
    for name in ("metrics.csv", "T_0000.bin", "T_0020.bin", "config.txt"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    ha, ra = _read_csv(a / "summary.csv")
    hb, rb = _read_csv(b / "summary.csv")
    cpu = ha.index("cpu")
    masked = lambda row: [c for k, c in enumerate(row) if k != cpu]
    assert [masked(r) for r in ra] == [masked(r) for r in rb]


def test_snapshot_feeds_a_follow_up_run(tmp_path):
    first = tmp_path / "first"
    assert run(_simulate_args(first, ["--control", "none",
                                      "--snapshots", "1"])) == 0
    second = tmp_path / "second"
    code = run(_simulate_args(second, ["--control", "none",
                                       "--ic-file", str(first / "T_0020.bin")]))
    assert code == 0
    _, rows1 = _read_csv(first / "metrics.csv")
    _, rows2 = _read_csv(second / "metrics.csv")
    assert rows2[0][1] == rows1[-1][1]  # dT_l2 continues exactly


def test_sweep_run_artifacts(tmp_path):
    out = tmp_path / "sweep"
    code = run(["sweep-tau", "--mesh", "16", "--steps", "16",
                "--tau-min", "0", "--tau-max", "0.4", "--tau-step", "0.2",
                "--out", str(out)])
    assert code == 0
    header, rows = _read_csv(out / "sweep.csv")
    assert header == ["tau", "J", "J_alpha", "J_beta", "J_gamma", "max_div",
                      "max_vel", "error"]
    assert [r[0] for r in rows] == ["0", "0.2", "0.4"]
    assert all(r[-1] == "" for r in rows)
    doc = validate_manifest(out)
    assert doc["solver_reports"]["failures"] == 0
    assert doc["solver_reports"]["best_tau"] == 0.4


def test_verify_run_reports_pass(tmp_path, capsys):
    out = tmp_path / "verify"
    code = run(["verify", "--mesh", "20", "--steps", "20", "--seed", "3",
                "--out", str(out)])
    assert code == 0
    report = (out / "report.txt").read_text().splitlines()
    assert any(line.startswith("gradient:") and line.endswith("PASS")
               for line in report)
    assert any(line.startswith("hessian:") and line.endswith("PASS")
               for line in report)
    doc = validate_manifest(out)
    assert doc["solver_reports"]["passed"] is True
    assert doc["solver_reports"]["gradient_rel_error"] < 1e-3
    out_text = capsys.readouterr().out
    assert "gradient:" in out_text and "hessian:" in out_text


def test_manifest_validation_detects_drift(tmp_path):
    out = tmp_path / "run"
    assert run(_simulate_args(out, ["--control", "none"])) == 0
    validate_manifest(out)
    (out / "stray.txt").write_text("not listed\n")
    with pytest.raises(ArtifactIOError):
        validate_manifest(out)
    (out / "stray.txt").unlink()
    with open(out / "metrics.csv", "a") as fh:
        fh.write("tampered\n")
    with pytest.raises(ArtifactIOError):
        validate_manifest(out)


def test_exit_codes(tmp_path, capsys):
    assert run(["simulate", "--mesh", "1", "--out", str(tmp_path / "x")]) == 2
    assert "error[config]" in capsys.readouterr().err

    assert run(["optimize", "--mesh", "10", "--steps", "10",
                "--tol", "1e-15", "--max-iterations", "2",
                "--out", str(tmp_path / "y")]) == 3
    assert "error[solver]" in capsys.readouterr().err

    blocker = tmp_path / "flat"
    blocker.write_text("")
    assert run(_simulate_args(blocker / "sub")) == 4
    assert "error[io]" in capsys.readouterr().err

    # argparse failures surface as exit code 2 without raising
    assert run(["simulate", "--no-such-flag"]) == 2
    assert run([]) == 2


def test_console_script_is_installed():
    exe = shutil.which("convcool")
    assert exe, "console script not on PATH"
    proc = subprocess.run([exe, "simulate", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "--control" in proc.stdout
