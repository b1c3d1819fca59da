"""Uniform 1D grid, discrete Laplacians, and the principal Dirichlet eigenvalue.

The domain is the open interval (0, L) sampled at n interior nodes
x_i = i*dx with dx = L/(n+1).  Boundary values live at the ghost
positions x = 0 and x = L and are supplied by the boundary condition,
never stored in a field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded


@dataclass(frozen=True)
class Grid:
    """Uniform grid of ``n`` interior nodes on (0, L)."""

    L: float
    n: int

    def __post_init__(self):
        if not (isinstance(self.L, (int, float)) and self.L > 0 and math.isfinite(self.L)):
            raise ValueError(f"domain length must be positive and finite, got {self.L}")
        if self.n < 3:
            raise ValueError(f"need at least 3 interior nodes, got {self.n}")

    @property
    def dx(self) -> float:
        return self.L / (self.n + 1)

    @cached_property
    def nodes(self) -> np.ndarray:
        return self.dx * np.arange(1, self.n + 1)


@dataclass(frozen=True)
class Field:
    """Nodal values of a scalar function on the interior nodes of a grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=float)
        if v.shape != (self.grid.n,):
            raise ValueError(
                f"field has {v.shape} values for a grid of {self.grid.n} interior nodes"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", v)

    @staticmethod
    def of(grid: Grid, values) -> "Field":
        return Field(grid, np.asarray(values, dtype=float))

    @staticmethod
    def zeros(grid: Grid) -> "Field":
        return Field(grid, np.zeros(grid.n))

    @staticmethod
    def constant(grid: Grid, value: float) -> "Field":
        return Field(grid, np.full(grid.n, float(value)))


@dataclass(frozen=True)
class Dirichlet:
    """Fixed boundary values at x = 0 and x = L."""

    left: float
    right: float


class Neumann:
    """Zero-flux closure; the ghost value mirrors the adjacent interior node."""

    def __repr__(self):
        return "Neumann()"


NEUMANN = Neumann()


def laplacian_values(values: np.ndarray, dx: float, bc) -> np.ndarray:
    """Second-difference Laplacian on raw nodal values.

    Dirichlet ghost values come from ``bc``; the Neumann closure copies the
    first interior value into the ghost node, which keeps constants exactly
    harmonic and preserves second-order accuracy for the zero-flux case.
    """
    out = np.empty_like(values)
    out[1:-1] = values[:-2] - 2.0 * values[1:-1] + values[2:]
    if isinstance(bc, Dirichlet):
        out[0] = bc.left - 2.0 * values[0] + values[1]
        out[-1] = values[-2] - 2.0 * values[-1] + bc.right
    elif isinstance(bc, Neumann):
        out[0] = values[1] - values[0]
        out[-1] = values[-2] - values[-1]
    else:
        raise TypeError(f"unsupported boundary condition {bc!r}")
    return out / dx**2


def apply_laplacian(f: Field, bc) -> Field:
    """Discrete Laplacian of a field under the given boundary closure."""
    return Field(f.grid, laplacian_values(f.values, f.grid.dx, bc))


def build_grid(L: float, n: int) -> Grid:
    return Grid(L, n)


def lambda1_closed_form(g: Grid) -> float:
    """Smallest eigenvalue of the discrete Dirichlet operator -d2/dx2."""
    return (2.0 / g.dx**2) * (1.0 - math.cos(math.pi * g.dx / g.L))


def dirichlet_operator_banded(g: Grid) -> np.ndarray:
    """Upper banded form of (1/dx^2) tridiag(-1, 2, -1), for scipy solvers."""
    ab = np.zeros((2, g.n))
    ab[0, 1:] = -1.0 / g.dx**2
    ab[1, :] = 2.0 / g.dx**2
    return ab


@dataclass(frozen=True)
class EigenResult:
    lambda1_discrete: float
    lambda1_analytic: float
    eigenfunction: Field
    iterations: int
    residual: float


def principal_eigenvalue(g: Grid, tol: float = 1e-12, max_iter: int = 10_000) -> EigenResult:
    """Principal eigenpair of the discrete Dirichlet Laplacian on (0, L).

    Inverse power iteration on the tridiagonal operator, started from the
    all-ones vector and run until the relative eigenvalue residual drops
    below ``tol``.  The analytic continuum value pi^2/L^2 is reported
    alongside for convergence checks.

    Returns
    -------
    EigenResult
        Discrete and analytic eigenvalues plus the positive eigenfunction
        normalized to unit maximum.
    """
    ab = dirichlet_operator_banded(g)
    factor = cholesky_banded(ab)
    bc0 = Dirichlet(0.0, 0.0)

    x = np.ones(g.n)
    x /= np.linalg.norm(x)
    lam = 0.0
    residual = math.inf
    for it in range(1, max_iter + 1):
        y = cho_solve_banded((factor, False), x)
        x = y / np.linalg.norm(y)
        ax = -laplacian_values(x, g.dx, bc0)
        lam = float(x @ ax)
        residual = float(np.linalg.norm(ax - lam * x) / abs(lam))
        if residual <= tol:
            break
    else:
        raise RuntimeError(
            f"inverse iteration did not reach residual {tol:g} in {max_iter} steps"
        )

    if x[g.n // 2] < 0:
        x = -x
    if x.min() <= 0:
        raise RuntimeError("principal eigenfunction is not positive")
    x = x / x.max()
    return EigenResult(
        lambda1_discrete=lam,
        lambda1_analytic=math.pi**2 / g.L**2,
        eigenfunction=Field(g, x),
        iterations=it,
        residual=residual,
    )
