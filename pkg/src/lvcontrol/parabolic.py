"""Time integration of the controlled competition system.

The scheme is IMEX: backward Euler on the diffusion (one symmetric
tridiagonal solve per species per step, factored once) and explicit
treatment of the reaction and of the multiplicative interior control.
Dirichlet boundary controls enter the implicit solve as ghost values;
piecewise-constant-in-time control series are sampled at the left
endpoint of each step.  States are never clipped: constraint violations
are recorded in the trajectory, blow-up raises.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded

from .discretization import Field, Grid
from .model import Params


class TargetEquation(Enum):
    FIRST = "first"
    SECOND = "second"


class BCKind(Enum):
    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"


@dataclass(frozen=True)
class StatePair:
    u: Field
    v: Field
    t: float


@dataclass(frozen=True)
class ControlSet:
    """Boundary series, interior control, and their wiring.

    Boundary series are 1D arrays over time steps (length 1 means constant
    in time); ``h`` is (m, n) over steps and nodes and must vanish off its
    support mask.  Use :func:`make_controls` to build a validated instance.
    """

    cu_left: np.ndarray
    cu_right: np.ndarray
    cv_left: np.ndarray
    cv_right: np.ndarray
    h: np.ndarray
    omega_mask: np.ndarray
    target_equation: TargetEquation = TargetEquation.FIRST
    bc_kind: BCKind = BCKind.DIRICHLET

    def __post_init__(self):
        series = (self.cu_left, self.cu_right, self.cv_left, self.cv_right)
        lengths = {s.shape for s in series}
        if any(s.ndim != 1 for s in series) or len(lengths) != 1:
            raise ValueError("boundary series must be 1D arrays of one common length")
        for s in series + (self.h,):
            if not np.all(np.isfinite(s)):
                raise ValueError("control values must be finite")
        if self.h.ndim != 2 or self.h.shape[1] != self.omega_mask.shape[0]:
            raise ValueError("h must be (steps, nodes) matching the support mask")
        off = ~self.omega_mask.astype(bool)
        if np.any(self.h[:, off] != 0.0):
            raise ValueError("h must vanish outside its support mask")

    @property
    def n_steps_available(self) -> int:
        return max(self.cu_left.shape[0], self.h.shape[0])

    def boundary_at(self, k: int) -> tuple[float, float, float, float]:
        i = k if self.cu_left.shape[0] > 1 else 0
        return (
            float(self.cu_left[i]),
            float(self.cu_right[i]),
            float(self.cv_left[i]),
            float(self.cv_right[i]),
        )

    def h_at(self, k: int) -> np.ndarray:
        return self.h[k] if self.h.shape[0] > 1 else self.h[0]

    def is_time_independent(self) -> bool:
        for s in (self.cu_left, self.cu_right, self.cv_left, self.cv_right):
            if s.shape[0] > 1 and np.any(s != s[0]):
                return False
        if self.h.shape[0] > 1 and np.any(self.h != self.h[0]):
            return False
        return True


def omega_mask(p: Params, grid: Grid) -> np.ndarray:
    """Indicator of the interior-control support on the grid nodes."""
    lo, hi = p.omega
    return ((grid.nodes >= lo) & (grid.nodes <= hi)).astype(float)


def _as_series(value, m: int) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.shape[0] not in (1, m):
        raise ValueError(f"control series has {arr.shape[0]} entries, expected 1 or {m}")
    return arr


def make_controls(
    p: Params,
    grid: Grid,
    n_steps: int = 1,
    cu=(0.0, 0.0),
    cv=(0.0, 0.0),
    h=0.0,
    target_equation: TargetEquation = TargetEquation.FIRST,
    bc_kind: BCKind = BCKind.DIRICHLET,
    full_domain_h: bool = False,
) -> ControlSet:
    """Validated control construction.

    Dirichlet boundary series must respect the state boxes 0 <= cu <= a1/b1
    and 0 <= cv <= a2/c2 at every step; violations are rejected here rather
    than during the run.  ``h`` may be a scalar (constant in space and time)
    or a (steps, nodes) array; it is masked to the support region, which is
    ``p.omega`` unless ``full_domain_h`` asks for all of the interval.
    """
    cu_l = _as_series(cu[0] if isinstance(cu, tuple) else cu, n_steps)
    cu_r = _as_series(cu[1] if isinstance(cu, tuple) else cu, n_steps)
    cv_l = _as_series(cv[0] if isinstance(cv, tuple) else cv, n_steps)
    cv_r = _as_series(cv[1] if isinstance(cv, tuple) else cv, n_steps)
    m = max(s.shape[0] for s in (cu_l, cu_r, cv_l, cv_r))
    cu_l, cu_r, cv_l, cv_r = (
        np.repeat(s, m) if s.shape[0] == 1 and m > 1 else s
        for s in (cu_l, cu_r, cv_l, cv_r)
    )
    if bc_kind is BCKind.DIRICHLET:
        for name, s, cap in (
            ("cu_left", cu_l, p.u_cap), ("cu_right", cu_r, p.u_cap),
            ("cv_left", cv_l, p.v_cap), ("cv_right", cv_r, p.v_cap),
        ):
            if np.any(s < 0.0) or np.any(s > cap):
                raise ValueError(f"{name} leaves the admissible box [0, {cap}]")

    mask = np.ones(grid.n) if full_domain_h else omega_mask(p, grid)
    h_arr = np.asarray(h, dtype=float)
    if h_arr.ndim == 0:
        h_arr = float(h_arr) * mask[np.newaxis, :]
    elif h_arr.ndim == 2:
        h_arr = h_arr * mask[np.newaxis, :]
    else:
        raise ValueError("h must be a scalar or a (steps, nodes) array")
    return ControlSet(
        cu_left=cu_l, cu_right=cu_r, cv_left=cv_l, cv_right=cv_r,
        h=h_arr, omega_mask=mask,
        target_equation=target_equation, bc_kind=bc_kind,
    )


class BlowUpError(RuntimeError):
    def __init__(self, step: int, t: float):
        super().__init__(f"state blew up at step {step} (t={t:.6g})")
        self.step = step
        self.t = t


class TargetNotReachedError(RuntimeError):
    """Raised when a run hits its time cap; carries the closing distance."""

    def __init__(self, distance: float, state: "StatePair", time: float):
        super().__init__(
            f"target not reached by t={time:.6g}; remaining distance {distance:.6g}"
        )
        self.distance = distance
        self.state = state
        self.time = time


@dataclass
class ConstraintTrace:
    """Per-step state extrema, for constraint monitoring after the fact."""

    times: np.ndarray
    min_u: np.ndarray
    max_u: np.ndarray
    min_v: np.ndarray
    max_v: np.ndarray
    warnings: list[str] = field(default_factory=list)


@dataclass
class Trajectory:
    times: np.ndarray
    states: list[StatePair]
    constraint_report: ConstraintTrace
    terminal_state: StatePair


class Stepper:
    """One IMEX step of the coupled system; factorizations built once."""

    def __init__(self, p: Params, grid: Grid, dt: float, bc_kind: BCKind):
        if dt <= 0:
            raise ValueError(f"dt must be positive, got {dt}")
        self.p = p
        self.grid = grid
        self.dt = dt
        self.bc_kind = bc_kind
        self.r_u = dt * p.d1 / grid.dx**2
        self.r_v = dt * p.d2 / grid.dx**2
        self.factor_u = self._factor(self.r_u)
        self.factor_v = self._factor(self.r_v)

    def _factor(self, r: float):
        ab = np.zeros((2, self.grid.n))
        ab[0, 1:] = -r
        ab[1, :] = 1.0 + 2.0 * r
        if self.bc_kind is BCKind.NEUMANN:
            ab[1, 0] = 1.0 + r
            ab[1, -1] = 1.0 + r
        return cholesky_banded(ab)

    def step(self, u: np.ndarray, v: np.ndarray, ctrl: ControlSet, k: int):
        p, dt = self.p, self.dt
        h_k = ctrl.h_at(k)
        react_u = u * (p.a1 - p.b1 * u - p.c1 * v)
        react_v = v * (p.a2 - p.b2 * u - p.c2 * v)
        if ctrl.target_equation is TargetEquation.FIRST:
            react_u = react_u + h_k * u
        else:
            react_v = react_v + h_k * v
        rhs_u = u + dt * react_u
        rhs_v = v + dt * react_v
        # the reaction can overflow one step before the state itself does,
        # and the banded solver rejects nonfinite input with a bare ValueError
        if not (np.all(np.isfinite(rhs_u)) and np.all(np.isfinite(rhs_v))):
            raise BlowUpError(k + 1, (k + 1) * dt)
        if self.bc_kind is BCKind.DIRICHLET:
            cu_l, cu_r, cv_l, cv_r = ctrl.boundary_at(k)
            rhs_u[0] += self.r_u * cu_l
            rhs_u[-1] += self.r_u * cu_r
            rhs_v[0] += self.r_v * cv_l
            rhs_v[-1] += self.r_v * cv_r
        u_new = cho_solve_banded((self.factor_u, False), rhs_u)
        v_new = cho_solve_banded((self.factor_v, False), rhs_v)
        return u_new, v_new


def _check_admissible_init(p: Params, u0: np.ndarray, v0: np.ndarray):
    tol_u = 1e-12 * max(1.0, p.u_cap)
    tol_v = 1e-12 * max(1.0, p.v_cap)
    if u0.min() < -tol_u or u0.max() > p.u_cap + tol_u:
        raise ValueError("initial u leaves [0, a1/b1]")
    if v0.min() < -tol_v or v0.max() > p.v_cap + tol_v:
        raise ValueError("initial v leaves [0, a2/c2]")


def _stability_warnings(p: Params, ctrl: ControlSet, dt: float) -> list[str]:
    h_sup = float(np.max(np.abs(ctrl.h))) if ctrl.h.size else 0.0
    bound = dt * (max(p.a1, p.a2) + h_sup)
    if bound >= 1.0:
        return [
            f"explicit reaction stability bound exceeded: dt*(a_max+|h|_max) = {bound:.3g} >= 1"
        ]
    return []


def simulate(
    p: Params,
    init: StatePair,
    ctrl: ControlSet,
    T: float,
    dt: float,
    store_every: int = 100,
) -> Trajectory:
    """Integrate the controlled system on [0, T].

    Parameters
    ----------
    init : StatePair
        Initial data; must lie in the state boxes up to 1e-12 slack.
    ctrl : ControlSet
        Control series covering at least round(T/dt) steps (or constant).
    store_every : int
        Snapshot stride in steps; the initial and final states are always
        stored.

    Returns
    -------
    Trajectory
        Snapshots plus a per-step record of state extrema.  Nonfinite
        states raise BlowUpError with the offending step.
    """
    grid = init.u.grid
    u = init.u.values.copy()
    v = init.v.values.copy()
    _check_admissible_init(p, u, v)
    n_steps = int(round(T / dt))
    if n_steps < 1:
        raise ValueError(f"horizon T={T} shorter than one step dt={dt}")
    if 1 < ctrl.n_steps_available < n_steps:
        raise ValueError(
            f"control series cover {ctrl.n_steps_available} steps, need {n_steps}"
        )

    stepper = Stepper(p, grid, dt, ctrl.bc_kind)
    trace = ConstraintTrace(
        times=dt * np.arange(n_steps + 1),
        min_u=np.empty(n_steps + 1), max_u=np.empty(n_steps + 1),
        min_v=np.empty(n_steps + 1), max_v=np.empty(n_steps + 1),
        warnings=_stability_warnings(p, ctrl, dt),
    )
    trace.min_u[0], trace.max_u[0] = u.min(), u.max()
    trace.min_v[0], trace.max_v[0] = v.min(), v.max()

    times = [0.0]
    states = [StatePair(Field(grid, u.copy()), Field(grid, v.copy()), 0.0)]
    for k in range(n_steps):
        u, v = stepper.step(u, v, ctrl, k)
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise BlowUpError(k + 1, (k + 1) * dt)
        trace.min_u[k + 1], trace.max_u[k + 1] = u.min(), u.max()
        trace.min_v[k + 1], trace.max_v[k + 1] = v.min(), v.max()
        if (k + 1) % store_every == 0 or k + 1 == n_steps:
            t = (k + 1) * dt
            times.append(t)
            states.append(StatePair(Field(grid, u.copy()), Field(grid, v.copy()), t))

    return Trajectory(
        times=np.asarray(times),
        states=states,
        constraint_report=trace,
        terminal_state=states[-1],
    )


def sup_distance(u: np.ndarray, v: np.ndarray, target_u: np.ndarray,
                 target_v: np.ndarray) -> float:
    """Sum of the two nodewise sup distances; the steering metric throughout."""
    return float(np.max(np.abs(u - target_u)) + np.max(np.abs(v - target_v)))


def run_until_near(
    p: Params,
    init: StatePair,
    ctrl: ControlSet,
    target,
    eps: float,
    dt: float,
    T_cap: float = 500.0,
) -> tuple[StatePair, float]:
    """March a time-independent control until the state is eps-close to a target.

    The distance is sup|u - u_t| + sup|v - v_t| over interior nodes.  Hitting
    ``T_cap`` raises TargetNotReachedError carrying the closing distance,
    which is how obstructed (barrier) runs are detected by callers.
    """
    if not ctrl.is_time_independent():
        raise ValueError("run_until_near needs a time-independent control set")
    grid = init.u.grid
    u = init.u.values.copy()
    v = init.v.values.copy()
    _check_admissible_init(p, u, v)
    tu = target.u_s.values if hasattr(target, "u_s") else target[0].values
    tv = target.v_s.values if hasattr(target, "v_s") else target[1].values

    dist = sup_distance(u, v, tu, tv)
    if dist <= eps:
        return StatePair(Field(grid, u), Field(grid, v), 0.0), 0.0
    stepper = Stepper(p, grid, dt, ctrl.bc_kind)
    n_cap = int(math.ceil(T_cap / dt))
    for k in range(n_cap):
        u, v = stepper.step(u, v, ctrl, 0)
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise BlowUpError(k + 1, (k + 1) * dt)
        dist = sup_distance(u, v, tu, tv)
        if dist <= eps:
            t = (k + 1) * dt
            return StatePair(Field(grid, u), Field(grid, v), t), t
    t = n_cap * dt
    raise TargetNotReachedError(dist, StatePair(Field(grid, u), Field(grid, v), t), t)
