"""Command-line entry point: scenario configs, presets, CSV emission.

Config files are flat INI-style text: [section] headers, key = value pairs,
'#' comments.  A hand-rolled parser keeps error reporting exact (line and
column) and avoids surprising interpolation behavior.  All outputs are
versioned CSVs plus a summary.txt; identical configs produce byte-identical
files.
"""

from __future__ import annotations

import argparse
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from itertools import product
from pathlib import Path

import numpy as np

from . import comparison, control_synthesis, csvio, elliptic, model, optimal_control
from .discretization import Field, Grid, lambda1_closed_form, principal_eigenvalue
from .parabolic import StatePair, TargetEquation, make_controls, run_until_near, simulate


class ConfigError(ValueError):
    def __init__(self, line: int, column: int, message: str):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


def parse_config(text: str) -> dict[str, dict[str, str]]:
    """Parse [section] / key = value / '#'-comment text into nested dicts."""
    sections: dict[str, dict[str, str]] = {}
    current: dict[str, str] | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        indent = len(line) - len(line.lstrip())
        stripped = line.strip()
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise ConfigError(lineno, indent + len(stripped), "unterminated section header")
            name = stripped[1:-1].strip()
            if not name:
                raise ConfigError(lineno, indent + 2, "empty section name")
            current = sections.setdefault(name, {})
            continue
        if current is None:
            raise ConfigError(lineno, indent + 1, "key = value before any [section]")
        if "=" not in stripped:
            raise ConfigError(lineno, indent + len(stripped) + 1, "expected 'key = value'")
        key, _, value = stripped.partition("=")
        key, value = key.strip(), value.strip()
        if not key:
            raise ConfigError(lineno, indent + 1, "empty key")
        if not value:
            raise ConfigError(lineno, indent + stripped.index("=") + 2, "empty value")
        current[key] = value
    return sections


# Built-in parameter sets: the barrier study lives on a long, slowly diffusing
# interval; the steering study on the unit interval near the coasting threshold.
_BARRIER_PARAMS = {
    "a1": "1.0", "a2": "1.0", "b1": "1.0", "b2": "1.0",
    "c1": "0.8", "c2": "0.7", "d1": "0.1", "d2": "0.1", "L": "10.0",
}
_STEERING_PARAMS = {
    "a1": "10.0", "a2": "10.0", "b1": "1.8", "b2": "1.0",
    "c1": "0.2", "c2": "1.4", "d1": "1.0", "d2": "1.0", "L": "1.0",
}

PRESET_DEFAULTS: dict[str, dict[str, dict[str, str]]] = {
    "regime_report": {
        "params": _BARRIER_PARAMS,
        "grid": {"n": "199"},
    },
    "uniqueness_probe": {
        "params": _BARRIER_PARAMS,
        "grid": {"n": "199"},
        "uniqueness_probe": {"u_bc": "1.0", "v_bc": "0.0", "sigma": "0.0", "n_starts": "20"},
    },
    "stabilize": {
        "params": _BARRIER_PARAMS,
        "grid": {"n": "199"},
        "time": {"dt": "0.01"},
        "stabilize": {"target": "v_survives", "eps": "1e-2", "t_cap": "500",
                      "u0": "0.5", "v0": "0.5"},
    },
    "barrier_cross": {
        "params": _BARRIER_PARAMS,
        "grid": {"n": "199"},
        "time": {"dt": "0.01"},
        "barrier_cross": {"t_blocked": "200", "t_crossed": "300", "hbar": "-0.8",
                          "u0": "0.5", "v0": "0.5"},
    },
    "two_phase": {
        "params": _STEERING_PARAMS,
        "grid": {"n": "99"},
        "time": {"dt": "0.01"},
        "two_phase": {"eps": "0.05", "t_tilde": "6.0", "h_box": "1.0",
                      "exact_tol": "1e-2", "t_cap": "1000", "u0": "0.2", "v0": "0.3"},
    },
    "min_time": {
        "params": _STEERING_PARAMS,
        "grid": {"n": "99"},
        "time": {"dt": "0.005"},
        "min_time": {"use_h": "true", "t_lo": "1.0", "t_hi": "auto",
                     "bisect_tol": "0.05", "tol": "1e-2", "u0": "0.2", "v0": "0.3"},
    },
}


def merge_config(defaults: dict, overrides: dict) -> dict:
    merged = {sec: dict(kv) for sec, kv in defaults.items()}
    for sec, kv in overrides.items():
        merged.setdefault(sec, {}).update(kv)
    return merged


def _floats(section: dict, **casts):
    out = {}
    for key, cast in casts.items():
        try:
            out[key] = cast(section[key])
        except KeyError:
            raise ValueError(f"missing key: {key}")
        except ValueError:
            raise ValueError(f"bad value for {key}: {section[key]!r}")
    return out


def _bool(text: str) -> bool:
    if text.lower() in ("true", "1", "yes"):
        return True
    if text.lower() in ("false", "0", "no"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _setup(cfg: dict):
    p = model.validate_params(cfg["params"])
    n = int(cfg.get("grid", {}).get("n", "99"))
    grid = Grid(p.L, n)
    dt = float(cfg.get("time", {}).get("dt", "0.01"))
    return p, grid, dt


def _write_trajectory(path, traj) -> None:
    grid = traj.states[0].u.grid
    rows_t, rows_x, rows_u, rows_v = [], [], [], []
    for state in traj.states:
        rows_t.append(np.full(grid.n, state.t))
        rows_x.append(grid.nodes)
        rows_u.append(state.u.values)
        rows_v.append(state.v.values)
    csvio.write_csv(path, ["t", "x", "u", "v"],
                    [np.concatenate(c) for c in (rows_t, rows_x, rows_u, rows_v)])


def _write_constraints(path, traj) -> None:
    tr = traj.constraint_report
    csvio.write_csv(path, ["t", "min_u", "max_u", "min_v", "max_v"],
                    [tr.times, tr.min_u, tr.max_u, tr.min_v, tr.max_v])


def _write_steady(path, pair) -> None:
    grid = pair.u_s.grid
    csvio.write_csv(path, ["x", "u", "v"], [grid.nodes, pair.u_s.values, pair.v_s.values])


def _constant_state(grid: Grid, u0: float, v0: float) -> StatePair:
    return StatePair(Field.constant(grid, u0), Field.constant(grid, v0), 0.0)


def preset_regime_report(cfg, outdir: Path, seed: int) -> list[str]:
    p, grid, _ = _setup(cfg)
    eig = principal_eigenvalue(grid)
    report = model.classify_regime(p, eig.lambda1_analytic)
    lines = [
        f"lambda1_discrete = {eig.lambda1_discrete!r}",
        f"lambda1_analytic = {eig.lambda1_analytic!r}",
        f"sigma_window = ({report.sigma_window[0]!r}, {report.sigma_window[1]!r})",
        f"equal_diffusion_coasting = {report.equal_diffusion_coasting}",
        f"extinction_thresholds = {report.extinction_thresholds}",
        f"free_outcome = {report.free_outcome.value}",
        f"coexistence_admissible = {report.coexistence_admissible}",
        f"notes = {report.notes}",
        # On an interval the inradius is L/2, so lambda1 = pi^2/L^2 scales like
        # 1/inradius^2; thin domains are easy to stabilize, wide ones are not.
        f"inradius = {p.L / 2.0!r}",
    ]
    return lines


def preset_uniqueness_probe(cfg, outdir: Path, seed: int) -> list[str]:
    p, grid, _ = _setup(cfg)
    sec = _floats(cfg["uniqueness_probe"], u_bc=float, v_bc=float, sigma=float, n_starts=int)
    report = elliptic.probe_uniqueness(
        p, grid, (sec["u_bc"], sec["v_bc"]), sec["sigma"],
        n_starts=sec["n_starts"], seed=seed,
    )
    lines = [
        f"n_starts = {report.n_starts}",
        f"n_distinct = {len(report.states)}",
        f"n_diverged = {report.n_diverged}",
    ]
    for i, (pair, count) in enumerate(zip(report.states, report.counts)):
        _write_steady(outdir / f"state_{i}.csv", pair)
        lines.append(
            f"state_{i}: hits={count} class={pair.classification.value} "
            f"residual={pair.residual_inf!r}"
        )
    return lines


def preset_stabilize(cfg, outdir: Path, seed: int) -> list[str]:
    p, grid, dt = _setup(cfg)
    sec = cfg["stabilize"]
    knobs = _floats(sec, eps=float, t_cap=float, u0=float, v0=float)
    target_name = sec.get("target", "v_survives")
    target = control_synthesis.SurvivalTarget(target_name)
    lam = lambda1_closed_form(grid)
    ctrl = control_synthesis.single_species_controls(p, grid, lam, target)
    if target is control_synthesis.SurvivalTarget.V_SURVIVES:
        steady = (Field.zeros(grid), Field.constant(grid, p.v_cap))
    else:
        steady = (Field.constant(grid, p.u_cap), Field.zeros(grid))
    init = _constant_state(grid, knobs["u0"], knobs["v0"])
    state, t1 = run_until_near(p, init, ctrl, steady, knobs["eps"], dt, knobs["t_cap"])
    traj = simulate(p, init, ctrl, max(t1, dt), dt, store_every=100)
    _write_trajectory(outdir / "trajectory.csv", traj)
    _write_constraints(outdir / "constraints.csv", traj)
    monitor = comparison.monitor_constraints(traj, p, h_sup=float(np.max(ctrl.h)))
    return [
        f"target = {target.value}",
        f"sigma = {ctrl.h[0, 0]!r}",
        f"T1 = {t1!r}",
        f"max_violation = {monitor.max_violation!r}",
    ]


def preset_barrier_cross(cfg, outdir: Path, seed: int) -> list[str]:
    p, grid, dt = _setup(cfg)
    knobs = _floats(cfg["barrier_cross"], t_blocked=float, t_crossed=float,
                    hbar=float, u0=float, v0=float)
    # Steady obstruction under full-u boundary data.  The v hump must be tall
    # enough to clear the unstable shallow branch, else Newton falls back to
    # the constant boundary state.
    arch = np.sin(math.pi * grid.nodes / grid.L)
    guess = (
        Field(grid, p.u_cap * (1.0 - 0.5 * arch)),
        Field(grid, 0.9 * p.v_cap * arch),
    )
    barrier = elliptic.solve_steady_system(p, (p.u_cap, 0.0), guess)
    _write_steady(outdir / "barrier.csv", barrier)

    init = _constant_state(grid, knobs["u0"], knobs["v0"])
    blocked_ctrl = make_controls(p, grid, cu=(p.u_cap, p.u_cap), cv=(0.0, 0.0))
    blocked = simulate(p, init, blocked_ctrl, knobs["t_blocked"], dt, store_every=1000)
    _write_trajectory(outdir / "blocked_traj.csv", blocked)
    term = blocked.terminal_state
    dist_target = float(np.max(np.abs(term.u.values - p.u_cap)) + np.max(np.abs(term.v.values)))
    dist_barrier = float(
        np.max(np.abs(term.u.values - barrier.u_s.values))
        + np.max(np.abs(term.v.values - barrier.v_s.values))
    )

    crossed_ctrl = make_controls(
        p, grid, cu=(p.u_cap, p.u_cap), cv=(0.0, 0.0), h=knobs["hbar"],
        target_equation=TargetEquation.SECOND, full_domain_h=True,
    )
    crossed = simulate(p, init, crossed_ctrl, knobs["t_crossed"], dt, store_every=1000)
    _write_trajectory(outdir / "crossed_traj.csv", crossed)
    sup_v = float(np.max(np.abs(crossed.terminal_state.v.values)))
    return [
        f"barrier_class = {barrier.classification.value}",
        f"barrier_residual = {barrier.residual_inf!r}",
        f"blocked_distance_to_target = {dist_target!r}",
        f"blocked_distance_to_barrier = {dist_barrier!r}",
        f"crossed_sup_v = {sup_v!r}",
    ]


def preset_two_phase(cfg, outdir: Path, seed: int) -> list[str]:
    p, grid, dt = _setup(cfg)
    knobs = _floats(cfg["two_phase"], eps=float, t_tilde=float, h_box=float,
                    exact_tol=float, t_cap=float, u0=float, v0=float)
    init = _constant_state(grid, knobs["u0"], knobs["v0"])
    result = control_synthesis.two_phase_steering(
        p, init, knobs["eps"], knobs["t_tilde"], dt, knobs["h_box"],
        exact_tol=knobs["exact_tol"], T_cap=knobs["t_cap"],
    )
    n1 = int(round(result.T1 / dt))
    cs = result.controls
    n_total = cs.cu_left.shape[0]
    t_ctrl = dt * np.arange(n_total)
    phase = np.where(np.arange(n_total) < n1, 1.0, 2.0)
    csvio.write_csv(
        outdir / "control_boundary.csv",
        ["t", "cu_left", "cu_right", "cv_left", "cv_right", "phase"],
        [t_ctrl, cs.cu_left, cs.cu_right, cs.cv_left, cs.cv_right, phase],
    )
    t2 = dt * np.arange(n1, n_total)
    h2 = cs.h[n1:]
    csvio.write_csv(
        outdir / "control_h.csv",
        ["t", "x", "h"],
        [np.repeat(t2, grid.n), np.tile(grid.nodes, h2.shape[0]), h2.ravel()],
    )
    _write_trajectory(outdir / "trajectory.csv", result.trajectory)
    _write_steady(outdir / "target.csv", result.target)
    return [
        f"T1 = {result.T1!r}",
        f"terminal_distance = {result.steering.terminal_distance!r}",
        f"h_sup = {float(np.max(np.abs(cs.h)))!r}",
        f"iterations = {result.steering.iterations}",
    ]


def preset_min_time(cfg, outdir: Path, seed: int) -> list[str]:
    p, grid, dt = _setup(cfg)
    sec = cfg["min_time"]
    knobs = _floats(sec, t_lo=float, bisect_tol=float, tol=float,
                    u0=float, v0=float)
    use_h = _bool(sec.get("use_h", "true"))
    # The interior control shortens the reachable horizon by an order of
    # magnitude, so the default upper bracket depends on it.
    t_hi_raw = sec.get("t_hi", "auto")
    if t_hi_raw == "auto":
        t_hi = 3.2 if use_h else 26.0
    else:
        t_hi = float(t_hi_raw)
    theta = elliptic.solve_logistic_theta(p, grid)
    target = elliptic.coexistence_target(p, theta)
    _write_steady(outdir / "target.csv", target)
    init = _constant_state(grid, knobs["u0"], knobs["v0"])
    dofs = {"cu_left", "cu_right", "cv_left", "cv_right"}
    if use_h:
        dofs.add("h")
    prob = optimal_control.OCProblem(
        params=p, init=init, target=target, T=t_hi, dt=dt,
        control_dofs=frozenset(dofs), h_box=1.0, tol=knobs["tol"],
        max_iter=800,
    )
    bank = ()
    if use_h:
        m_hi = prob.n_steps
        bank = tuple(
            control_synthesis.overshoot_release_controls(p, grid, m_hi, dt, tau)
            for tau in (0.05, 0.1, 0.15, 0.2, 0.3)
        )
    mt = optimal_control.minimum_time(prob, knobs["t_lo"], t_hi,
                                      bisect_tol=knobs["bisect_tol"],
                                      warm_bank=bank)
    res = mt.result
    cs = res.controls
    n_steps = cs.cu_left.shape[0]
    t_ctrl = dt * np.arange(n_steps)
    csvio.write_csv(
        outdir / "control_boundary.csv",
        ["t", "cu_left", "cu_right", "cv_left", "cv_right"],
        [t_ctrl, cs.cu_left, cs.cu_right, cs.cv_left, cs.cv_right],
    )
    csvio.write_csv(
        outdir / "control_h.csv",
        ["t", "x", "h"],
        [np.repeat(t_ctrl, grid.n), np.tile(grid.nodes, n_steps), cs.h.ravel()],
    )
    csvio.write_csv(
        outdir / "convergence_log.csv",
        ["iter", "objective", "terminal_distance", "step_size"],
        [np.arange(res.objective_history.shape[0], dtype=float),
         res.objective_history, res.distance_history, res.step_history],
    )
    lines = [
        f"T_star = {mt.T_star!r}",
        f"use_h = {use_h}",
        f"terminal_distance = {res.terminal_distance!r}",
        f"iterations = {res.iterations}",
    ]
    lines += [f"probe T={T!r} feasible={ok}" for T, ok in mt.evaluations]
    return lines


PRESETS = {
    "regime_report": preset_regime_report,
    "uniqueness_probe": preset_uniqueness_probe,
    "stabilize": preset_stabilize,
    "barrier_cross": preset_barrier_cross,
    "two_phase": preset_two_phase,
    "min_time": preset_min_time,
}


def _run_single(cfg: dict, preset: str, outdir: Path, seed: int) -> list[str]:
    outdir.mkdir(parents=True, exist_ok=True)
    lines = [f"preset = {preset}", f"seed = {seed}"]
    lines += PRESETS[preset](cfg, outdir, seed)
    (outdir / "summary.txt").write_text("\n".join(lines) + "\n")
    return lines


def _run_sweep_job(args) -> list[str]:
    cfg, preset, outdir, seed = args
    return _run_single(cfg, preset, Path(outdir), seed)


def run_scenario(cfg: dict, preset: str, outdir: Path, seed: int, jobs: int = 1) -> list[str]:
    if preset not in PRESETS:
        raise ValueError(f"unknown preset: {preset} (have {', '.join(sorted(PRESETS))})")
    sweep = cfg.get("sweep", {})
    if not sweep:
        return _run_single(cfg, preset, outdir, seed)

    keys = sorted(sweep)
    values = [[v.strip() for v in sweep[k].split(",")] for k in keys]
    tasks = []
    for combo in product(*values):
        sub = {sec: dict(kv) for sec, kv in cfg.items() if sec != "sweep"}
        tag = "__".join(f"{k}={v}" for k, v in zip(keys, combo))
        sub.setdefault("params", {}).update(dict(zip(keys, combo)))
        tasks.append((sub, preset, str(outdir / f"sweep_{tag}"), seed))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_sweep_job, tasks))
    else:
        results = [_run_sweep_job(t) for t in tasks]
    lines = [f"sweep over {', '.join(keys)}: {len(tasks)} jobs"]
    for (sub, _, job_out, _), job_lines in zip(tasks, results):
        lines.append(f"[{Path(job_out).name}] " + "; ".join(job_lines[2:4]))
    (outdir / "summary.txt").write_text("\n".join(lines) + "\n")
    return lines


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="lvctl",
        description="Simulate and control the two-species competition system.",
    )
    parser.add_argument("command", choices=["run"], help="execute a scenario")
    parser.add_argument("config", nargs="?", help="path to a scenario config file")
    parser.add_argument("--preset", help="built-in scenario name")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--jobs", type=int, default=1, help="parallel sweep jobs")
    parser.add_argument("--seed", type=int, default=0, help="seed for randomized probes")
    args = parser.parse_args(argv)

    try:
        overrides = {}
        if args.config is not None:
            overrides = parse_config(Path(args.config).read_text())
        preset = args.preset or overrides.get("preset", {}).get("name")
        if preset is None:
            raise ValueError("no preset: pass --preset or a [preset] name = ... section")
        if preset not in PRESET_DEFAULTS:
            raise ValueError(f"unknown preset: {preset} (have {', '.join(sorted(PRESETS))})")
        cfg = merge_config(PRESET_DEFAULTS[preset], overrides)
        lines = run_scenario(cfg, preset, Path(args.out), args.seed, jobs=args.jobs)
    except ConfigError as err:
        print(f"error: parse: {err}", file=sys.stderr)
        return 2
    except (ValueError, KeyError) as err:
        print(f"error: config: {err}", file=sys.stderr)
        return 2
    except Exception as err:  # noqa: BLE001  solver and io failures
        print(f"error: runtime: {err}", file=sys.stderr)
        return 1
    for line in lines:
        print(line)
    return 0


if __name__ == "__main__":
    sys.exit(main())
