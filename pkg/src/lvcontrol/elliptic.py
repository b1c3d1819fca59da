"""Steady states of the competition system: profiles, targets, and barriers.

Everything here is a root-finding problem for the discrete steady operator

    F_u(u, v) = d1 Lap(u) + u (a1 - b1 u - c1 v) + sigma u
    F_v(u, v) = d2 Lap(v) + v (a2 - b2 u - c2 v)

with constant Dirichlet data.  Newton's method with residual backtracking
is used throughout; the coupled Jacobian is block tridiagonal and is
solved in banded form after interleaving the two species.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.linalg import solve_banded

from .discretization import Dirichlet, Field, Grid, lambda1_closed_form, laplacian_values
from .model import Params


class SteadyClass(Enum):
    TRIVIAL = "trivial"
    TARGET = "target"
    BARRIER = "barrier"
    OTHER = "other"


@dataclass(frozen=True)
class SteadyPair:
    """A steady solution pair with its boundary data and a quality record."""

    u_s: Field
    v_s: Field
    u_bc: float
    v_bc: float
    residual_inf: float
    classification: SteadyClass
    nonneg_violation: float = 0.0


class NewtonError(RuntimeError):
    """Newton iteration failed to converge; carries the last residual."""

    def __init__(self, message: str, iterations: int, residual: float):
        super().__init__(f"{message} (iterations={iterations}, residual={residual:.3e})")
        self.iterations = iterations
        self.residual = residual


def steady_residual(
    p: Params,
    grid: Grid,
    u: np.ndarray,
    v: np.ndarray,
    u_bc: float,
    v_bc: float,
    sigma: float = 0.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Residual of the coupled steady system at nodal values (u, v)."""
    lap_u = laplacian_values(u, grid.dx, Dirichlet(u_bc, u_bc))
    lap_v = laplacian_values(v, grid.dx, Dirichlet(v_bc, v_bc))
    f_u = p.d1 * lap_u + u * (p.a1 - p.b1 * u - p.c1 * v) + sigma * u
    f_v = p.d2 * lap_v + v * (p.a2 - p.b2 * u - p.c2 * v)
    return f_u, f_v


def _newton_logistic(grid: Grid, d: float, a: float, theta0: np.ndarray,
                     tol: float = 1e-10, max_iter: int = 100) -> np.ndarray:
    """Damped Newton for d Lap(theta) + theta (a - theta) = 0, zero Dirichlet."""
    dx2 = grid.dx**2
    bc0 = Dirichlet(0.0, 0.0)
    theta = theta0.copy()
    res = d * laplacian_values(theta, grid.dx, bc0) + theta * (a - theta)
    norm = float(np.max(np.abs(res)))
    for it in range(max_iter):
        if norm < tol:
            return theta
        ab = np.zeros((3, grid.n))
        ab[0, 1:] = d / dx2
        ab[1, :] = -2.0 * d / dx2 + a - 2.0 * theta
        ab[2, :-1] = d / dx2
        delta = solve_banded((1, 1), ab, -res)
        step = 1.0
        for _ in range(30):
            trial = theta + step * delta
            trial_res = d * laplacian_values(trial, grid.dx, bc0) + trial * (a - trial)
            trial_norm = float(np.max(np.abs(trial_res)))
            if trial_norm < norm:
                theta, res, norm = trial, trial_res, trial_norm
                break
            step *= 0.5
        else:
            raise NewtonError("logistic profile: backtracking stalled", it, norm)
    raise NewtonError("logistic profile: iteration cap reached", max_iter, norm)


def _smooth_logistic_guess(grid: Grid, d: float, a: float, theta0: np.ndarray) -> np.ndarray:
    """March the parabolic logistic equation toward its positive attractor.

    Implicit diffusion, explicit reaction, dt = 1/(2a); positivity is
    preserved, so starting from a positive arch this lands in the Newton
    basin of the positive steady branch regardless of domain length.
    """
    from scipy.linalg import cho_solve_banded, cholesky_banded

    dt = 0.5 / a
    r = dt * d / grid.dx**2
    ab = np.zeros((2, grid.n))
    ab[0, 1:] = -r
    ab[1, :] = 1.0 + 2.0 * r
    factor = cholesky_banded(ab)
    theta = theta0.copy()
    for _ in range(400):
        new = cho_solve_banded((factor, False), theta + dt * theta * (a - theta))
        done = np.max(np.abs(new - theta)) < 1e-4 * a
        theta = new
        if done:
            break
    return theta


def solve_logistic_theta(p: Params, grid: Grid) -> Field:
    """Positive profile of d theta'' + theta (a - theta) = 0 with zero Dirichlet data.

    Requires the symmetric regime d1 = d2 and a1 = a2.  A positive solution
    exists exactly when a exceeds d times the principal Dirichlet eigenvalue;
    the discrete eigenvalue of the grid operator decides the switch so the
    returned profile is consistent with the grid it lives on.  Below the
    threshold the zero field is returned.

    Initial guesses: a sine arch at amplitudes a/2 and the weakly nonlinear
    estimate 3*pi/8 * (a - lambda1 d).  When plain Newton drifts to the zero
    branch or a sign-changing root (broad arches do, on long domains), the
    guess is smoothed by marching the parabolic logistic flow first, which
    converges to the positive branch from any positive data.
    """
    rel = 1e-12
    if abs(p.d1 - p.d2) > rel * max(p.d1, p.d2) or abs(p.a1 - p.a2) > rel * max(p.a1, p.a2):
        raise ValueError("logistic profile requires d1 = d2 and a1 = a2")
    d, a = p.d1, p.a1
    lam = lambda1_closed_form(grid)
    if a <= lam * d:
        return Field.zeros(grid)

    arch = np.sin(math.pi * grid.nodes / grid.L)
    guesses = [
        (a / 2.0) * arch,
        (3.0 * math.pi / 8.0 * (a - lam * d)) * arch,
        _smooth_logistic_guess(grid, d, a, (a / 2.0) * arch),
    ]
    last_error: NewtonError | None = None
    for guess in guesses:
        try:
            theta = _newton_logistic(grid, d, a, guess)
        except NewtonError as err:
            last_error = err
            continue
        if theta.max() > 1e-8 * a and theta.min() > 0 and theta.max() < a:
            return Field(grid, theta)
        # zero branch or a sign-changing root; move to the next guess
    if last_error is not None:
        raise last_error
    raise NewtonError("logistic profile: no initial guess reached the positive branch", 0, 0.0)


def coexistence_target(p: Params, theta: Field) -> SteadyPair:
    """Heterogeneous coexistence pair proportional to a logistic profile.

    For b1 > b2 and c1 < c2 the weights kappa_u = (c2-c1)/(b1 c2 - c1 b2)
    and kappa_v = (b1-b2)/(b1 c2 - c1 b2) satisfy b1 k_u + c1 k_v = 1 and
    b2 k_u + c2 k_v = 1, so (k_u theta, k_v theta) inherits the steady
    equation from theta exactly.  The residual is re-verified here.
    """
    if not (p.b1 > p.b2 and p.c1 < p.c2):
        raise ValueError("coexistence weights need b1 > b2 and c1 < c2")
    den = p.b1 * p.c2 - p.c1 * p.b2
    if den <= 0:
        raise ValueError(f"degenerate competition matrix: b1*c2 - c1*b2 = {den}")
    kappa_u = (p.c2 - p.c1) / den
    kappa_v = (p.b1 - p.b2) / den
    u = kappa_u * theta.values
    v = kappa_v * theta.values
    f_u, f_v = steady_residual(p, theta.grid, u, v, 0.0, 0.0)
    residual = float(max(np.max(np.abs(f_u)), np.max(np.abs(f_v))))
    if residual > 1e-8:
        raise NewtonError("coexistence pair does not satisfy the steady system", 0, residual)
    return SteadyPair(
        u_s=Field(theta.grid, u),
        v_s=Field(theta.grid, v),
        u_bc=0.0,
        v_bc=0.0,
        residual_inf=residual,
        classification=SteadyClass.TARGET,
    )


@dataclass(frozen=True)
class HomogeneousCoexistence:
    u_star: float
    v_star: float
    u_admissible: bool
    v_admissible: bool


def homogeneous_coexistence(p: Params) -> HomogeneousCoexistence:
    """Constant coexistence state of the space-free competition kinetics."""
    den = p.b1 * p.c2 - p.b2 * p.c1
    if den == 0:
        raise ValueError("degenerate competition matrix: b1*c2 - b2*c1 = 0")
    u_star = (p.a1 * p.c2 - p.a2 * p.c1) / den
    v_star = (p.a2 * p.b1 - p.a1 * p.b2) / den
    return HomogeneousCoexistence(
        u_star=u_star,
        v_star=v_star,
        u_admissible=0 < u_star < p.u_cap,
        v_admissible=0 < v_star < p.v_cap,
    )


def _coupled_jacobian_banded(p: Params, grid: Grid, u: np.ndarray, v: np.ndarray,
                             sigma: float) -> np.ndarray:
    """Banded (2,2) Jacobian of the coupled steady residual, species interleaved."""
    n = grid.n
    dx2 = grid.dx**2
    ab = np.zeros((5, 2 * n))
    # row layout for solve_banded: ab[2 + i - j, j] = J[i, j]
    ab[2, 0::2] = -2.0 * p.d1 / dx2 + p.a1 + sigma - 2.0 * p.b1 * u - p.c1 * v
    ab[2, 1::2] = -2.0 * p.d2 / dx2 + p.a2 - p.b2 * u - 2.0 * p.c2 * v
    ab[1, 1::2] = -p.c1 * u                      # dF_u/dv, same node
    ab[3, 0:-1:2] = -p.b2 * v                    # dF_v/du, same node
    ab[0, 2::2] = p.d1 / dx2                     # u neighbor couplings
    ab[0, 3::2] = p.d2 / dx2
    ab[4, 0:-2:2] = p.d1 / dx2
    ab[4, 1:-2:2] = p.d2 / dx2
    return ab


def solve_steady_system(
    p: Params,
    bc: tuple[float, float],
    init: tuple[Field, Field],
    interior_sigma: float = 0.0,
    tol: float = 1e-10,
    max_iter: int = 100,
) -> SteadyPair:
    """Newton solve of the coupled steady system under constant Dirichlet data.

    Parameters
    ----------
    bc : (u_bc, v_bc)
        Constant boundary values; must lie inside the control boxes
        [0, a1/b1] x [0, a2/c2].
    init : (Field, Field)
        Initial guess; its grid is the grid of the returned pair.
    interior_sigma : float
        Constant multiplicative term added to the first equation.

    Backtracking halves the step up to 30 times per iteration and gives up
    (NewtonError) if the residual cannot be reduced.  A converged state with
    nodal values below -1e-8 is returned with the violation recorded, never
    clipped.
    """
    u_bc, v_bc = float(bc[0]), float(bc[1])
    if not (0.0 <= u_bc <= p.u_cap and 0.0 <= v_bc <= p.v_cap):
        raise ValueError(f"boundary data ({u_bc}, {v_bc}) outside the admissible boxes")
    u0, v0 = init
    grid = u0.grid
    if v0.grid != grid:
        raise ValueError("initial guess fields live on different grids")

    u = u0.values.copy()
    v = v0.values.copy()
    f_u, f_v = steady_residual(p, grid, u, v, u_bc, v_bc, interior_sigma)
    norm = float(max(np.max(np.abs(f_u)), np.max(np.abs(f_v))))
    for it in range(max_iter):
        if norm < tol:
            break
        ab = _coupled_jacobian_banded(p, grid, u, v, interior_sigma)
        rhs = np.empty(2 * grid.n)
        rhs[0::2] = -f_u
        rhs[1::2] = -f_v
        delta = solve_banded((2, 2), ab, rhs)
        du, dv = delta[0::2], delta[1::2]
        step = 1.0
        for _ in range(30):
            tu, tv = u + step * du, v + step * dv
            t_u, t_v = steady_residual(p, grid, tu, tv, u_bc, v_bc, interior_sigma)
            t_norm = float(max(np.max(np.abs(t_u)), np.max(np.abs(t_v))))
            if t_norm < norm:
                u, v, f_u, f_v, norm = tu, tv, t_u, t_v, t_norm
                break
            step *= 0.5
        else:
            raise NewtonError("steady system: backtracking stalled", it, norm)
    else:
        raise NewtonError("steady system: iteration cap reached", max_iter, norm)

    violation = float(max(0.0, -min(u.min(), v.min())))
    classification = _classify_steady(p, u, v, u_bc, v_bc)
    return SteadyPair(
        u_s=Field(grid, u),
        v_s=Field(grid, v),
        u_bc=u_bc,
        v_bc=v_bc,
        residual_inf=norm,
        classification=classification,
        nonneg_violation=violation if violation > 1e-8 else 0.0,
    )


def _classify_steady(p: Params, u: np.ndarray, v: np.ndarray,
                     u_bc: float, v_bc: float) -> SteadyClass:
    rel = 1e-8
    if max(np.max(np.abs(u)) / p.u_cap, np.max(np.abs(v)) / p.v_cap) < rel:
        return SteadyClass.TRIVIAL
    if (np.max(np.abs(u - u_bc)) / p.u_cap < rel
            and np.max(np.abs(v - v_bc)) / p.v_cap < rel):
        return SteadyClass.TRIVIAL
    single_species_bc = (
        (abs(u_bc - p.u_cap) <= 1e-12 * p.u_cap and v_bc == 0.0)
        or (u_bc == 0.0 and abs(v_bc - p.v_cap) <= 1e-12 * p.v_cap)
    )
    if single_species_bc:
        return SteadyClass.BARRIER
    return SteadyClass.OTHER


@dataclass(frozen=True)
class UniquenessReport:
    states: tuple[SteadyPair, ...]
    counts: tuple[int, ...]
    n_starts: int
    n_diverged: int


def probe_uniqueness(
    p: Params,
    grid: Grid,
    bc: tuple[float, float],
    interior_sigma: float = 0.0,
    n_starts: int = 20,
    seed: int = 0,
) -> UniquenessReport:
    """Multistart Newton sweep counting the distinct steady states it can reach.

    Starts are admissible random fields (clipped mixtures of the first three
    sine modes plus a random level), generated from a seeded generator so the
    report is reproducible.  Converged states are deduplicated at a nodewise
    relative distance of 1e-6 against the carrying capacities; diverged
    starts are counted, not raised.
    """
    rng = np.random.default_rng(seed)
    x = grid.nodes
    modes = [np.sin(k * math.pi * x / grid.L) for k in (1, 2, 3)]

    def random_field(cap: float) -> Field:
        profile = rng.uniform(0.0, 1.0)
        for k in range(3):
            profile = profile + rng.uniform(-1.0, 1.0) / (k + 1) * modes[k]
        return Field(grid, np.clip(cap * profile, 0.0, cap))

    distinct: list[SteadyPair] = []
    counts: list[int] = []
    n_diverged = 0
    for _ in range(n_starts):
        guess = (random_field(p.u_cap), random_field(p.v_cap))
        try:
            pair = solve_steady_system(p, bc, guess, interior_sigma)
        except NewtonError:
            n_diverged += 1
            continue
        for idx, known in enumerate(distinct):
            du = np.max(np.abs(pair.u_s.values - known.u_s.values)) / p.u_cap
            dv = np.max(np.abs(pair.v_s.values - known.v_s.values)) / p.v_cap
            if max(du, dv) < 1e-6:
                counts[idx] += 1
                break
        else:
            distinct.append(pair)
            counts.append(1)

    order = sorted(
        range(len(distinct)),
        key=lambda i: (
            float(np.sum(distinct[i].u_s.values)),
            float(np.sum(distinct[i].v_s.values)),
        ),
    )
    return UniquenessReport(
        states=tuple(distinct[i] for i in order),
        counts=tuple(counts[i] for i in order),
        n_starts=n_starts,
        n_diverged=n_diverged,
    )
