"""
Scalar functionals and pointwise nonlinearities of the coupled cubic system

    i u_t + Δu - u + f(u, w) = 0
    iσ w_t + Δw - μ w + g(u, w) = 0

on radial fields over R^4. Every density is evaluated pointwise and then
integrated with the grid's shell quadrature, so algebraic identities between
functionals (e.g. the two forms of the Pohozaev functional) hold to rounding.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel

from ..config import PhysicsParams
from ..discretization.radial_grid import RadialGrid
from ..exceptions import NotInNError


@dataclass(frozen=True, eq=False)
class FieldPair:
    """Two radial fields (u, w) sampled on one grid.

    Real arrays represent the real pairs (P, Q) of the stationary problem;
    complex arrays represent solutions of the evolution problem.
    """

    u: NDArray
    w: NDArray
    grid: RadialGrid
    params: PhysicsParams = field(default_factory=PhysicsParams)

    def __post_init__(self):
        if self.u.shape != (self.grid.n,) or self.w.shape != (self.grid.n,):
            raise ValueError(
                f"Field shapes {self.u.shape}, {self.w.shape} do not match grid with n={self.grid.n}"
            )

    @property
    def is_real(self) -> bool:
        return not (np.iscomplexobj(self.u) or np.iscomplexobj(self.w))

    def scaled(self, factor: float) -> "FieldPair":
        return FieldPair(factor * self.u, factor * self.w, self.grid, self.params)

    def with_params(self, params: PhysicsParams) -> "FieldPair":
        return FieldPair(self.u, self.w, self.grid, params)

    def as_complex(self) -> "FieldPair":
        return FieldPair(self.u.astype(complex), self.w.astype(complex), self.grid, self.params)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.w)))


class FunctionalReport(BaseModel):
    M: float
    E: float
    E_crit: float
    K: float
    N: float
    P_func: float
    S: float
    J: Optional[float] = None
    tau: float


# --- pointwise nonlinearities ----------------------------------------------


def nonlinearity_f(u, w):
    """f(u,w) = (|u|²/9 + 2|w|²) u + ū² w / 3."""
    return (np.abs(u) ** 2 / 9.0 + 2.0 * np.abs(w) ** 2) * u + np.conj(u) ** 2 * w / 3.0


def nonlinearity_g(u, w):
    """g(u,w) = (9|w|² + 2|u|²) w + u³ / 9, without the 1/σ of the time derivative."""
    return (9.0 * np.abs(w) ** 2 + 2.0 * np.abs(u) ** 2) * w + u**3 / 9.0


def H(u, w):
    return np.conj(u) * nonlinearity_f(u, w) + np.conj(w) * nonlinearity_g(u, w)


def quartic_density(u, w) -> NDArray:
    """Density of 𝒫: |u|⁴/36 + 9|w|⁴/4 + |u|²|w|² + Re(ū³w)/9 (equals the N density on real pairs)."""
    abs_u2 = np.abs(u) ** 2
    abs_w2 = np.abs(w) ** 2
    cross = np.real(np.conj(u) ** 3 * w)
    return abs_u2**2 / 36.0 + 2.25 * abs_w2**2 + abs_u2 * abs_w2 + cross / 9.0


# --- functionals ------------------------------------------------------------


def mass(pair: FieldPair) -> float:
    sigma = pair.params.sigma
    return pair.grid.integrate(np.abs(pair.u) ** 2 + 3.0 * sigma * np.abs(pair.w) ** 2)


def kinetic(pair: FieldPair) -> float:
    return pair.grid.grad_sq(pair.u) + pair.grid.grad_sq(pair.w)


def potential_mass(pair: FieldPair) -> float:
    """∫(|u|² + μ|w|²), the linear-potential part of the energy."""
    return pair.grid.integrate(np.abs(pair.u) ** 2 + pair.params.mu * np.abs(pair.w) ** 2)


def n_quartic(pair: FieldPair) -> float:
    if not pair.is_real:
        raise ValueError("n_quartic is defined for real pairs; use p_quartic for complex fields")
    return pair.grid.integrate(quartic_density(pair.u, pair.w))


def p_quartic(pair: FieldPair) -> float:
    return pair.grid.integrate(quartic_density(pair.u, pair.w))


def energy(pair: FieldPair) -> float:
    """Conserved energy; the resonant system drops the |u|² and μ|w|² terms."""
    value = 0.5 * kinetic(pair) - p_quartic(pair)
    if not pair.params.resonant:
        value += 0.5 * potential_mass(pair)
    return value


def energy_crit(pair: FieldPair) -> float:
    return 0.5 * kinetic(pair) - p_quartic(pair)


def action(pair: FieldPair) -> float:
    # the stationary system has no frequency, so the action is the critical energy
    return energy_crit(pair)


def weinstein(pair: FieldPair) -> float:
    n_value = p_quartic(pair)
    if n_value <= 0:
        raise NotInNError(n_value)
    return kinetic(pair) ** 2 / n_value


def pohozaev_tau(pair: FieldPair) -> float:
    return kinetic(pair) - 4.0 * p_quartic(pair)


def pohozaev_tau_from_energy(pair: FieldPair) -> float:
    """τ through the energy: 4E - K - 2∫(|u|² + μ|w|²), or 4E - K in resonant mode."""
    value = 4.0 * energy(pair) - kinetic(pair)
    if not pair.params.resonant:
        value -= 2.0 * potential_mass(pair)
    return value


def report(pair: FieldPair) -> FunctionalReport:
    K = kinetic(pair)
    P_func = p_quartic(pair)
    E_crit = 0.5 * K - P_func
    E = E_crit if pair.params.resonant else E_crit + 0.5 * potential_mass(pair)
    return FunctionalReport(
        M=mass(pair),
        E=E,
        E_crit=E_crit,
        K=K,
        N=P_func,
        P_func=P_func,
        S=E_crit,
        J=K**2 / P_func if P_func > 0 else None,
        tau=K - 4.0 * P_func,
    )
