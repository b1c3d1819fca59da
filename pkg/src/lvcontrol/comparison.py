"""Discrete sub/supersolution checks and box-constraint monitoring.

For competing species the comparison structure is mixed: an upper solution
for u pairs with a lower solution for v and vice versa.  Writing (U, W) for
the upper pair and (u, w) for the lower pair, the four differential
inequalities checked here are

    U_t >= d1 Lap(U) + U (a1 - b1 U - c1 w) + h_plus U
    w_t <= d2 Lap(w) + w (a2 - b2 U - c2 w)
    u_t <= d1 Lap(u) + u (a1 - b1 u - c1 W) + h_minus u
    W_t >= d2 Lap(W) + W (a2 - b2 u - c2 W)

evaluated nodewise with the same second differences the integrator uses,
and with forward differences in time.  h_plus/h_minus bound the interior
control from above/below so a single check covers every admissible h.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .discretization import Dirichlet, Grid, laplacian_values
from .model import Params
from .parabolic import Trajectory


Envelope = float | tuple | Callable


def _eval_component(comp: Envelope, t: float, grid: Grid):
    """Normalize an envelope component to (values, bc_left, bc_right) at time t."""
    if callable(comp):
        return _eval_component(comp(t), t, grid)
    if isinstance(comp, (int, float)):
        c = float(comp)
        return np.full(grid.n, c), c, c
    if isinstance(comp, tuple) and len(comp) == 2:
        values, (bc_l, bc_r) = comp
        values = np.asarray(values, dtype=float)
        if values.shape != (grid.n,):
            raise ValueError("envelope field does not match the grid")
        return values, float(bc_l), float(bc_r)
    raise TypeError(
        "envelope components must be a constant, a callable of t, or (values, (bc_l, bc_r))"
    )


@dataclass(frozen=True)
class SubSuperReport:
    """Worst signed violations (positive = violated) and ordering flags."""

    worst_violation: dict
    ordering_violation: float
    ordering_ok: bool
    boundary_ok: bool


def check_subsuper_pair(
    p: Params,
    grid: Grid,
    upper,
    lower,
    traj_times: Sequence[float],
    dt: float,
    h_plus: float = 0.0,
    h_minus: float = 0.0,
) -> SubSuperReport:
    """Evaluate the four comparison inequalities along a list of times.

    ``upper`` and ``lower`` are pairs of envelope components (see module
    docstring for the inequalities and :func:`_eval_component` for the
    accepted forms).  Nothing raises: a swapped or inadmissible pair comes
    back with ``ordering_ok``/``boundary_ok`` cleared so callers can report
    it.
    """
    up_u, up_v = upper
    lo_u, lo_v = lower
    worst = {"upper_u": -np.inf, "lower_v": -np.inf, "lower_u": -np.inf, "upper_v": -np.inf}
    ordering_violation = -np.inf
    boundary_ok = True

    for t in traj_times:
        U, U_l, U_r = _eval_component(up_u, t, grid)
        W, W_l, W_r = _eval_component(up_v, t, grid)
        u, u_l, u_r = _eval_component(lo_u, t, grid)
        w, w_l, w_r = _eval_component(lo_v, t, grid)
        U2 = _eval_component(up_u, t + dt, grid)[0]
        W2 = _eval_component(up_v, t + dt, grid)[0]
        u2 = _eval_component(lo_u, t + dt, grid)[0]
        w2 = _eval_component(lo_v, t + dt, grid)[0]

        U_t, W_t = (U2 - U) / dt, (W2 - W) / dt
        u_t, w_t = (u2 - u) / dt, (w2 - w) / dt

        lap_U = laplacian_values(U, grid.dx, Dirichlet(U_l, U_r))
        lap_W = laplacian_values(W, grid.dx, Dirichlet(W_l, W_r))
        lap_u = laplacian_values(u, grid.dx, Dirichlet(u_l, u_r))
        lap_w = laplacian_values(w, grid.dx, Dirichlet(w_l, w_r))

        i1 = p.d1 * lap_U + U * (p.a1 - p.b1 * U - p.c1 * w) + h_plus * U - U_t
        i2 = w_t - (p.d2 * lap_w + w * (p.a2 - p.b2 * U - p.c2 * w))
        i3 = u_t - (p.d1 * lap_u + u * (p.a1 - p.b1 * u - p.c1 * W) + h_minus * u)
        i4 = p.d2 * lap_W + W * (p.a2 - p.b2 * u - p.c2 * W) - W_t

        worst["upper_u"] = max(worst["upper_u"], float(i1.max()))
        worst["lower_v"] = max(worst["lower_v"], float(i2.max()))
        worst["lower_u"] = max(worst["lower_u"], float(i3.max()))
        worst["upper_v"] = max(worst["upper_v"], float(i4.max()))

        ordering_violation = max(
            ordering_violation,
            float((u - U).max()),
            float((w - W).max()),
            float((-u).max()),
            float((-w).max()),
        )
        if U_l < 0 or U_r < 0 or w_l > 0 or w_r > 0:
            boundary_ok = False

    return SubSuperReport(
        worst_violation=worst,
        ordering_violation=ordering_violation,
        ordering_ok=ordering_violation <= 0.0,
        boundary_ok=boundary_ok,
    )


@dataclass(frozen=True)
class ConstraintReport:
    times: np.ndarray
    u_lower_ok: np.ndarray
    u_upper_ok: np.ndarray
    v_lower_ok: np.ndarray
    v_upper_ok: np.ndarray
    first_violation_time: float | None
    max_violation: float


def monitor_constraints(traj: Trajectory, p: Params, h_sup: float = 0.0,
                        slack: float = 0.0) -> ConstraintReport:
    """Check the recorded state extrema against the box constraints.

    With an active interior control bounded by ``h_sup`` the u ceiling is
    relaxed to (a1 + h_sup)/b1, the invariant region of the perturbed
    system.  ``slack`` absorbs the scheme's O(dx^2 + dt) overshoot; the
    report is a pure function of the trajectory's extrema record.
    """
    trace = traj.constraint_report
    u_ceiling = (p.a1 + max(0.0, h_sup)) / p.b1
    u_lower_ok = trace.min_u >= -slack
    u_upper_ok = trace.max_u <= u_ceiling + slack
    v_lower_ok = trace.min_v >= -slack
    v_upper_ok = trace.max_v <= p.v_cap + slack

    violations = np.maximum.reduce([
        -trace.min_u, trace.max_u - u_ceiling,
        -trace.min_v, trace.max_v - p.v_cap,
    ])
    bad = violations > slack
    first_violation_time = float(trace.times[bad][0]) if np.any(bad) else None
    return ConstraintReport(
        times=trace.times,
        u_lower_ok=u_lower_ok,
        u_upper_ok=u_upper_ok,
        v_lower_ok=v_lower_ok,
        v_upper_ok=v_upper_ok,
        first_violation_time=first_violation_time,
        max_violation=float(max(0.0, violations.max())),
    )
