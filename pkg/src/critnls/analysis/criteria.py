"""
Blow-up criteria against ground-state thresholds.

Radial data with E0 < E_gs and K0 > K_gs blow up in finite time; data with
E0 < E_gs and K0 < K_gs lie in the region whose global behaviour is still a
conjecture, and everything else is left indeterminate. The comparison
function f(r) = a - r + b r^q with a = 2E0, b = 2C_opt, q = 2 separates the
two regions at γ = (bq)^{-1/(q-1)} = K_gs.
"""
import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel

from ..config import PhysicsParams
from ..discretization.radial_grid import RadialGrid
from ..exceptions import CrossTermNotPositiveError, UncertifiedGroundStateError
from ..physics.functionals import FieldPair, energy_crit, kinetic, p_quartic, potential_mass
from ..solvers.evolution import OUTER_DECADE_LIMIT, outer_decade_fraction
from ..solvers.ground_state import GroundStateResult

logger = logging.getLogger(__name__)

SUPERCRITICAL = "supercritical-blowup"
SUBCRITICAL = "subcritical-region"
INDETERMINATE = "indeterminate"

FACTORY_SCAN_POINTS = 200
FACTORY_TOL = 1e-6


@dataclass(frozen=True)
class Thresholds:
    E_gs: float
    K_gs: float
    C_opt: float
    gamma: float


class Verdict(BaseModel):
    E0: float
    K0: float
    E_gs: float
    K_gs: float
    classification: str
    margin_E: float
    margin_K: float
    lambda_star: Optional[float] = None
    epsilon_star: Optional[float] = None
    conjecture_region: bool = False


@dataclass(frozen=True)
class LambdaFactory:
    a: float
    b: float
    lambda_star: float
    lambda_K: float
    builder: Callable[[float], FieldPair]


@dataclass(frozen=True)
class ComparisonReport:
    gamma: float
    f_min: float
    f_violations: int
    started_above: bool
    dichotomy_holds: bool
    inf_ratio: float
    mode: str
    delta: float = 0.0

    @property
    def passed(self) -> bool:
        return self.f_violations == 0 and self.dichotomy_holds


def gaussian_seed(grid: RadialGrid, params: Optional[PhysicsParams] = None, amplitude: float = 1.0) -> FieldPair:
    """(A e^{-r²}, A e^{-r²}): smooth, radial, and real positive so the cross term of 𝒫 is positive."""
    g = amplitude * np.exp(-grid.r**2)
    return FieldPair(g, g.copy(), grid, params or PhysicsParams())


def thresholds_from_ground_state(gs: GroundStateResult) -> Thresholds:
    if not gs.certified:
        raise UncertifiedGroundStateError(
            f"Ground state residuals ({gs.residual_P:.3e}, {gs.residual_Q:.3e}) are above tolerance"
        )
    return Thresholds(
        E_gs=energy_crit(gs.pair),
        K_gs=kinetic(gs.pair),
        C_opt=gs.C_opt,
        gamma=1.0 / (4.0 * gs.C_opt),
    )


def _mode_energy(pair: FieldPair, resonant: bool) -> float:
    value = energy_crit(pair)
    return value if resonant else value + 0.5 * potential_mass(pair)


def classify(
    pair0: FieldPair,
    thresholds: Thresholds,
    resonant: Optional[bool] = None,
    lambda_star: Optional[float] = None,
) -> Verdict:
    """Compares E0 and K0 of the initial pair with the ground-state thresholds."""
    resonant = pair0.params.resonant if resonant is None else resonant
    E0 = _mode_energy(pair0, resonant)
    K0 = kinetic(pair0)
    below_energy = E0 < thresholds.E_gs
    if below_energy and K0 > thresholds.K_gs:
        classification = SUPERCRITICAL
    elif below_energy and K0 < thresholds.K_gs:
        classification = SUBCRITICAL
    else:
        classification = INDETERMINATE

    if resonant and classification != INDETERMINATE:
        fraction = outer_decade_fraction(pair0)
        if fraction > OUTER_DECADE_LIMIT:
            logger.warning(
                f"Initial data not confined: {fraction:.1%} of V(0) in the outer decade; verdict is indeterminate"
            )
            classification = INDETERMINATE

    return Verdict(
        E0=E0,
        K0=K0,
        E_gs=thresholds.E_gs,
        K_gs=thresholds.K_gs,
        classification=classification,
        margin_E=thresholds.E_gs - E0,
        margin_K=K0 - thresholds.K_gs,
        lambda_star=lambda_star,
        epsilon_star=1.0 - E0 / thresholds.E_gs if below_energy else None,
        conjecture_region=classification == SUBCRITICAL,
    )


def lambda_factory(seed_pair: FieldPair, thresholds: Thresholds) -> LambdaFactory:
    """E(λ seed) = λ²a - λ⁴b; λ* is the smallest λ with E < E_gs and λ²K(seed) > K_gs."""
    K_seed = kinetic(seed_pair)
    b = p_quartic(seed_pair)
    if b <= 0:
        raise CrossTermNotPositiveError(f"Seed has P(u0, w0) = {b!r} <= 0; scaling cannot lower the energy")
    a = 0.5 * K_seed if seed_pair.params.resonant else 0.5 * (K_seed + potential_mass(seed_pair))
    lambda_K = float(np.sqrt(thresholds.K_gs / K_seed))

    def admissible(lam: float) -> bool:
        return lam**2 * a - lam**4 * b < thresholds.E_gs and lam**2 * K_seed > thresholds.K_gs

    hi = 2.0 * lambda_K
    while not admissible(hi):
        hi *= 2.0
    grid = np.linspace(lambda_K, hi, FACTORY_SCAN_POINTS)
    first = next(k for k, lam in enumerate(grid) if admissible(lam))
    lo, hi = (grid[first - 1], grid[first]) if first > 0 else (lambda_K, grid[0])
    while hi - lo > FACTORY_TOL:
        mid = 0.5 * (lo + hi)
        if admissible(mid):
            hi = mid
        else:
            lo = mid
    logger.info(f"lambda factory: a={a:.10g}, b={b:.10g}, lambda_K={lambda_K:.8g}, lambda*={hi:.8g}")
    return LambdaFactory(a=a, b=b, lambda_star=float(hi), lambda_K=lambda_K, builder=seed_pair.scaled)


def comparison_gamma(a: float, b: float, q: float) -> float:
    if not b > 0 or not q > 1:
        raise ValueError(f"comparison_gamma needs b > 0 and q > 1, got b={b}, q={q}")
    return (b * q) ** (-1.0 / (q - 1.0))


def comparison_monitor(
    records: Sequence,
    a: float,
    b: float,
    q: float = 2.0,
    mode: str = "strict",
    tolerance: float = 1e-6,
    epsilon_star: Optional[float] = None,
) -> ComparisonReport:
    """Checks f(G(t)) >= 0 for G = K(t) and that G never crosses from its starting side.

    strict: the barrier is γ itself. refined: for q = 2 the roots of f are γ(1 ± δ) with
    δ = sqrt(1 - 4ab) = sqrt(ε*), and G must stay beyond the root on its starting side.
    epsilon_star, when given, replaces the value implied by a and b.
    """
    if mode not in ("strict", "refined"):
        raise ValueError(f"mode must be 'strict' or 'refined', got {mode!r}")
    gamma = comparison_gamma(a, b, q)
    G = np.array([rec.K for rec in records], dtype=float)
    f_values = a - G + b * G**q
    scale = abs(a) + G + b * G**q
    violations = int(np.sum(f_values < -tolerance * scale))
    started_above = bool(G[0] > gamma)

    delta, floor = 0.0, 0.0
    if mode == "refined":
        if q != 2.0:
            raise ValueError(f"refined mode needs q = 2, got q={q}")
        eps = 1.0 - 4.0 * a * b if epsilon_star is None else epsilon_star
        if not 0.0 < eps < 1.0:
            raise ValueError(f"refined mode needs 0 < ε* < 1, got {eps}")
        delta, floor = float(np.sqrt(eps)), -tolerance
    if started_above:
        ratios = G / ((1.0 + delta) * gamma) - 1.0
    else:
        ratios = 1.0 - G / ((1.0 - delta) * gamma)
    inf_ratio = float(np.min(ratios))
    return ComparisonReport(
        gamma=gamma,
        f_min=float(np.min(f_values)),
        f_violations=violations,
        started_above=started_above,
        dichotomy_holds=inf_ratio > floor,
        inf_ratio=inf_ratio,
        mode=mode,
        delta=delta,
    )


def lambda_scan(factory: LambdaFactory, thresholds: Thresholds, lambdas: Sequence[float]) -> List[Verdict]:
    return [classify(factory.builder(lam), thresholds, lambda_star=factory.lambda_star) for lam in lambdas]
