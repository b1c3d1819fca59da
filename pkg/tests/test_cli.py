import numpy as np
import pytest

from lvcontrol.cli import ConfigError, main, merge_config, parse_config
from lvcontrol.discretization import Field, Grid
from lvcontrol.elliptic import coexistence_target, solve_logistic_theta
from lvcontrol.model import validate_params
from lvcontrol.parabolic import StatePair, make_controls, run_until_near


def test_parse_config_sections_keys_comments():
    text = """
    # leading comment
    [params]
    a1 = 1.0   # trailing comment
    L = 10.0

    [grid]
    n = 99
    """
    cfg = parse_config(text)
    assert cfg == {"params": {"a1": "1.0", "L": "10.0"}, "grid": {"n": "99"}}


@pytest.mark.parametrize("text, line, fragment", [
    ("[params\na1 = 1.0", 1, "unterminated section"),
    ("[]\n", 1, "empty section name"),
    ("a1 = 1.0\n", 1, "before any"),
    ("[params]\na1 1.0\n", 2, "expected 'key = value'"),
    ("[params]\n= 1.0\n", 2, "empty key"),
    ("[params]\na1 =\n", 2, "empty value"),
    ("[params]\na1 = # all comment\n", 2, "empty value"),
])
def test_parse_config_errors_carry_position(text, line, fragment):
    with pytest.raises(ConfigError, match=fragment) as exc:
        parse_config(text)
    assert exc.value.line == line
    assert exc.value.column >= 1
    assert f"line {line}," in str(exc.value)


def test_merge_config_overrides_without_mutating_defaults():
    defaults = {"params": {"a1": "1.0", "L": "10.0"}, "grid": {"n": "199"}}
    overrides = {"grid": {"n": "49"}, "extra": {"k": "v"}}
    merged = merge_config(defaults, overrides)
    assert merged["grid"]["n"] == "49"
    assert merged["params"]["a1"] == "1.0"
    assert merged["extra"] == {"k": "v"}
    assert defaults["grid"]["n"] == "199"


def test_main_reports_parse_errors_on_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("[params\n")
    code = main(["run", str(bad), "--out", str(tmp_path / "out")])
    captured = capsys.readouterr()
    assert code == 2
    assert captured.err.startswith("error: parse: line 1")


def test_main_requires_a_preset(tmp_path, capsys):
    code = main(["run", "--out", str(tmp_path / "out")])
    assert code == 2
    assert "error: config: no preset" in capsys.readouterr().err


def test_main_rejects_unknown_preset(tmp_path, capsys):
    code = main(["run", "--preset", "warp_drive", "--out", str(tmp_path / "out")])
    assert code == 2
    assert "error: config: unknown preset: warp_drive" in capsys.readouterr().err


def test_main_rejects_bad_parameter_values(tmp_path, capsys):
    cfg = tmp_path / "bad_value.cfg"
    cfg.write_text("[preset]\nname = regime_report\n[params]\na1 = banana\n")
    code = main(["run", str(cfg), "--out", str(tmp_path / "out")])
    assert code == 2
    assert capsys.readouterr().err.startswith("error: config:")


def test_regime_report_preset_runs_and_summarizes(tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["run", "--preset", "regime_report", "--out", str(out)])
    stdout = capsys.readouterr().out
    assert code == 0
    assert (out / "summary.txt").exists()
    summary = (out / "summary.txt").read_text()
    assert summary.splitlines()[0] == "preset = regime_report"
    for key in ("lambda1_discrete", "sigma_window", "free_outcome", "inradius"):
        assert key in summary
    assert stdout.strip().splitlines() == summary.strip().splitlines()


def test_uniqueness_probe_is_deterministic(tmp_path):
    cfg = tmp_path / "probe.cfg"
    cfg.write_text(
        "[preset]\nname = uniqueness_probe\n"
        "[grid]\nn = 63\n"
        "[uniqueness_probe]\nn_starts = 4\n"
    )
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(["run", str(cfg), "--out", str(out_a)]) == 0
    assert main(["run", str(cfg), "--out", str(out_b)]) == 0
    assert (out_a / "summary.txt").read_bytes() == (out_b / "summary.txt").read_bytes()
    assert (out_a / "state_0.csv").exists()
    assert (out_a / "state_0.csv").read_bytes() == (out_b / "state_0.csv").read_bytes()
    summary = (out_a / "summary.txt").read_text()
    assert "n_starts = 4" in summary
    assert "seed = 0" in summary


def test_stabilize_preset_coarse_run(tmp_path, capsys):
    cfg = tmp_path / "stab.cfg"
    cfg.write_text(
        "[preset]\nname = stabilize\n"
        "[grid]\nn = 63\n"
        "[time]\ndt = 0.05\n"
        "[stabilize]\neps = 0.3\nt_cap = 50\n"
    )
    out = tmp_path / "out"
    code = main(["run", str(cfg), "--out", str(out)])
    stdout = capsys.readouterr().out
    assert code == 0
    assert "target = v_survives" in stdout
    assert "T1 = " in stdout
    assert (out / "trajectory.csv").exists()
    assert (out / "constraints.csv").exists()
    t1 = float(stdout.split("T1 = ")[1].splitlines()[0])
    assert 0.0 < t1 < 50.0


def test_barrier_cross_preset_coarse_run(tmp_path, capsys):
    cfg = tmp_path / "cross.cfg"
    cfg.write_text(
        "[preset]\nname = barrier_cross\n"
        "[grid]\nn = 63\n"
        "[time]\ndt = 0.05\n"
        "[barrier_cross]\nt_blocked = 5\nt_crossed = 5\n"
    )
    out = tmp_path / "out"
    code = main(["run", str(cfg), "--out", str(out)])
    stdout = capsys.readouterr().out
    assert code == 0
    assert "barrier_class = barrier" in stdout
    for name in ("barrier.csv", "blocked_traj.csv", "crossed_traj.csv"):
        assert (out / name).exists()


def test_two_phase_preset_coarse_run(tmp_path, capsys):
    cfg = tmp_path / "steer.cfg"
    cfg.write_text(
        "[preset]\nname = two_phase\n"
        "[grid]\nn = 49\n"
        "[two_phase]\neps = 0.2\nexact_tol = 2e-2\n"
    )
    out = tmp_path / "out"
    code = main(["run", str(cfg), "--out", str(out)])
    stdout = capsys.readouterr().out
    assert code == 0
    for name in ("control_boundary.csv", "control_h.csv", "trajectory.csv",
                 "target.csv", "summary.txt"):
        assert (out / name).exists()
    assert "T1 = " in stdout
    dist = float(stdout.split("terminal_distance = ")[1].splitlines()[0])
    assert dist <= 2e-2


def test_min_time_preset_matches_free_crossing_without_h(tmp_path, capsys):
    # with the interior control off and the state above the target the
    # descent is stationary at zero controls, so the preset's bisection
    # must land on the free-decay crossing measured independently
    cfg = tmp_path / "mt.cfg"
    cfg.write_text(
        "[preset]\nname = min_time\n"
        "[grid]\nn = 49\n"
        "[time]\ndt = 0.01\n"
        "[min_time]\nuse_h = false\nt_lo = 0.5\nt_hi = 4.0\n"
        "bisect_tol = 0.5\ntol = 0.2\n"
    )
    out = tmp_path / "out"
    code = main(["run", str(cfg), "--out", str(out)])
    stdout = capsys.readouterr().out
    assert code == 0
    t_star = float(stdout.split("T_star = ")[1].splitlines()[0])

    p = validate_params(dict(a1=10.0, a2=10.0, b1=1.8, b2=1.0, c1=0.2, c2=1.4,
                             d1=1.0, d2=1.0, L=1.0))
    g = Grid(p.L, 49)
    theta = solve_logistic_theta(p, g)
    target = coexistence_target(p, theta)
    init = StatePair(Field.constant(g, 0.2), Field.constant(g, 0.3), 0.0)
    _, t_cross = run_until_near(p, init, make_controls(p, g), target,
                                eps=0.2, dt=0.01, T_cap=10.0)
    assert abs(t_star - t_cross) <= 0.5
    for name in ("control_boundary.csv", "control_h.csv", "convergence_log.csv",
                 "target.csv"):
        assert (out / name).exists()
    assert "probe T=0.5 feasible=False" in stdout
    assert "probe T=4.0 feasible=True" in stdout


def test_sweep_runs_jobs_and_writes_tagged_dirs(tmp_path):
    cfg = tmp_path / "sweep.cfg"
    cfg.write_text(
        "[preset]\nname = regime_report\n"
        "[grid]\nn = 63\n"
        "[sweep]\nd1 = 0.1, 5.0\n"
    )
    out = tmp_path / "out"
    code = main(["run", str(cfg), "--out", str(out), "--jobs", "2"])
    assert code == 0
    top = (out / "summary.txt").read_text()
    assert top.splitlines()[0] == "sweep over d1: 2 jobs"
    for tag in ("sweep_d1=0.1", "sweep_d1=5.0"):
        job_summary = out / tag / "summary.txt"
        assert job_summary.exists()
        assert "lambda1_discrete" in job_summary.read_text()

    # rerun is byte-identical per job
    out2 = tmp_path / "out2"
    assert main(["run", str(cfg), "--out", str(out2), "--jobs", "1"]) == 0
    for tag in ("sweep_d1=0.1", "sweep_d1=5.0"):
        assert (out / tag / "summary.txt").read_bytes() == \
               (out2 / tag / "summary.txt").read_bytes()


def test_csv_outputs_are_versioned_and_parseable(tmp_path):
    cfg = tmp_path / "stab.cfg"
    cfg.write_text(
        "[preset]\nname = stabilize\n"
        "[grid]\nn = 63\n"
        "[time]\ndt = 0.05\n"
        "[stabilize]\neps = 0.3\nt_cap = 50\n"
    )
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--out", str(out)]) == 0
    from lvcontrol.csvio import read_csv

    header, data = read_csv(out / "constraints.csv")
    assert header == ["t", "min_u", "max_u", "min_v", "max_v"]
    assert data["t"].shape[0] > 1
    assert np.all(np.diff(data["t"]) > 0)
