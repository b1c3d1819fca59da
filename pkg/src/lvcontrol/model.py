"""Parameters and qualitative regime classification for the competition system.

The model couples two densities u and v on (0, L):

    u_t = d1 u_xx + u (a1 - b1 u - c1 v) + h u        (h interior control)
    v_t = d2 v_xx + v (a2 - b2 u - c2 v)

with carrying capacities a1/b1 for u and a2/c2 for v.  Classification is
purely algebraic given the principal eigenvalue of the Dirichlet Laplacian,
so the same report applies to any discretization of the domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping


_COEFFICIENTS = ("a1", "a2", "b1", "b2", "c1", "c2", "d1", "d2", "L")


@dataclass(frozen=True)
class Params:
    a1: float
    a2: float
    b1: float
    b2: float
    c1: float
    c2: float
    d1: float
    d2: float
    L: float
    omega: tuple[float, float]

    def __post_init__(self):
        for name in _COEFFICIENTS:
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"non-positive coefficient: {name}={value}")
        lo, hi = self.omega
        if not (lo < hi):
            raise ValueError(f"empty omega: ({lo}, {hi})")
        if lo < 0 or hi > self.L:
            raise ValueError(f"omega out of range: ({lo}, {hi}) not within [0, {self.L}]")

    @property
    def u_cap(self) -> float:
        return self.a1 / self.b1

    @property
    def v_cap(self) -> float:
        return self.a2 / self.c2


def validate_params(raw: Mapping[str, float]) -> Params:
    """Build Params from a key-value mapping, rejecting bad input loudly.

    ``omega_lo``/``omega_hi`` default to the whole interval (0, L) when both
    are absent; supplying only one of them is an error.
    """
    values = {}
    for name in _COEFFICIENTS:
        if name not in raw:
            raise ValueError(f"missing key: {name}")
        values[name] = float(raw[name])
    has_lo = "omega_lo" in raw
    has_hi = "omega_hi" in raw
    if has_lo != has_hi:
        raise ValueError("omega_lo and omega_hi must be given together")
    if has_lo:
        omega = (float(raw["omega_lo"]), float(raw["omega_hi"]))
    else:
        omega = (0.0, values["L"])
    return Params(omega=omega, **values)


class FreeOutcome(Enum):
    """Long-time outcome of the uncontrolled Neumann system, when known."""

    SECOND_SPECIES_WINS = "second_species_wins"
    FIRST_SPECIES_WINS = "first_species_wins"
    COEXISTENCE = "coexistence"
    UNCLASSIFIED = "unclassified"


@dataclass(frozen=True)
class RegimeReport:
    lambda1: float
    sigma_window: tuple[float, float]
    equal_diffusion_coasting: bool | None
    extinction_thresholds: tuple[bool, bool]
    free_outcome: FreeOutcome
    coexistence_admissible: bool
    notes: str


def _relatively_equal(x: float, y: float, rel: float = 1e-12) -> bool:
    return abs(x - y) <= rel * max(abs(x), abs(y))


def classify_regime(p: Params, lambda1: float) -> RegimeReport:
    """Algebraic regime classification at a given principal eigenvalue.

    The sigma window (-a1, lambda1*d1 - a1) is the admissible range for a
    constant interior control that makes the single-species boundary target
    for v the unique steady state; it contains 0 exactly when d1*lambda1
    exceeds a1, in which case boundary control alone suffices.  Strict
    floating comparisons throughout; exact ties are reported as undecided
    with a note rather than silently assigned.
    """
    notes: list[str] = []

    sigma_window = (-p.a1, lambda1 * p.d1 - p.a1)
    if lambda1 * p.d1 > p.a1:
        notes.append("0 lies in the sigma window; boundary control alone stabilizes u to 0")

    symmetric = _relatively_equal(p.d1, p.d2) and _relatively_equal(p.a1, p.a2)
    if not symmetric:
        equal_diffusion_coasting = None
        notes.append("equal-diffusion check skipped: requires d1=d2 and a1=a2")
    elif p.d1 * lambda1 == p.a1:
        equal_diffusion_coasting = None
        notes.append("equal-diffusion check tied: d*lambda1 equals a exactly")
    else:
        equal_diffusion_coasting = p.d1 < p.a1 / lambda1

    extinction_thresholds = (p.d1 > p.a1 / lambda1, p.d2 > p.a2 / lambda1)
    if p.d1 == p.a1 / lambda1 or p.d2 == p.a2 / lambda1:
        notes.append("extinction threshold tied: d equals a/lambda1 exactly")

    r_a = p.a1 / p.a2
    r_b = p.b1 / p.b2
    r_c = p.c1 / p.c2
    if r_a == r_b or r_a == r_c:
        free_outcome = FreeOutcome.UNCLASSIFIED
        notes.append("growth/competition ratio tie; uncontrolled outcome undecided")
    elif r_a < r_b and r_a < r_c:
        free_outcome = FreeOutcome.SECOND_SPECIES_WINS
    elif r_a > r_b and r_a > r_c:
        free_outcome = FreeOutcome.FIRST_SPECIES_WINS
    elif r_c < r_a < r_b:
        free_outcome = FreeOutcome.COEXISTENCE
    else:
        free_outcome = FreeOutcome.UNCLASSIFIED
        notes.append("ratios ordered b1/b2 < a1/a2 < c1/c2; outcome depends on initial data")

    coexistence_admissible = p.b1 > p.b2 and p.c1 < p.c2

    return RegimeReport(
        lambda1=lambda1,
        sigma_window=sigma_window,
        equal_diffusion_coasting=equal_diffusion_coasting,
        extinction_thresholds=extinction_thresholds,
        free_outcome=free_outcome,
        coexistence_admissible=coexistence_admissible,
        notes="; ".join(notes),
    )
