"""
Ground states of the stationary system

    ΔP + (P²/9 + 2Q²) P + P²Q/3 = 0
    ΔQ + (9Q² + 2P²) Q + P³/9 = 0

via the normalized minimization I = inf{K : N = 1}. The descent minimizes the
scale-free quotient J = K²/N with Ḣ¹-preconditioned steps: the direction is
(K/4N)(-Δ)⁻¹(f, g) - (P, Q), which vanishes exactly at critical points of J.
The infinitesimal dilation (1 + r∂_r)(P, Q) is projected out of every step,
since J is dilation invariant.

The descent stops when the projected step is below tol_grad relative to the
iterate, or when K has been flat for `window` iterations. The discrete J is
only dilation invariant up to O(h²) and the truncated tail, so the gradient
left at the stopping point lies along the dilation and shrinks with h.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from numpy.typing import NDArray
from scipy.sparse.linalg import splu

from ..config import GroundStateConfig
from ..discretization.radial_grid import RadialGrid
from ..exceptions import (
    InitOutsideConeError,
    MaxIterExceededError,
    StepCollapseError,
)
from ..physics.functionals import (
    FieldPair,
    energy_crit,
    kinetic,
    n_quartic,
    nonlinearity_f,
    nonlinearity_g,
)

logger = logging.getLogger(__name__)

MAX_HALVINGS = 30
NEWTON_STARTS = np.linspace(-1.0, 1.0, 9)
ROOT_TOL = 1e-12


def aubin_talenti(r: NDArray) -> NDArray:
    """W(r) = (1 + r²/8)⁻¹, the positive solution of ΔW + W³ = 0 on R^4."""
    return 1.0 / (1.0 + np.asarray(r, dtype=float) ** 2 / 8.0)


def semitrivial_oracle(grid: RadialGrid) -> FieldPair:
    return FieldPair(np.zeros(grid.n), aubin_talenti(grid.r) / 3.0, grid)


@dataclass(eq=False)
class GroundStateResult:
    """Solution (P0, Q0) in `pair`, the N = 1 minimizer (v, z) in `normalized`."""

    pair: FieldPair
    normalized: FieldPair
    I_value: float
    lam: float
    C_opt: float
    S_value: float
    residual_P: float
    residual_Q: float
    iterations: int
    trace: List[float] = field(default_factory=list)
    certified: bool = False

    @property
    def grid(self) -> RadialGrid:
        return self.pair.grid

    @property
    def P0(self) -> NDArray:
        return self.pair.u

    @property
    def Q0(self) -> NDArray:
        return self.pair.w

    @property
    def v(self) -> NDArray:
        return self.normalized.u

    @property
    def z(self) -> NDArray:
        return self.normalized.w


# --- building blocks --------------------------------------------------------


def residual(pair: FieldPair) -> Tuple[float, float]:
    """Weighted grid L² norms of the strong-form residuals of the stationary system."""
    grid = pair.grid
    P, Q = pair.u, pair.w
    res_P = grid.laplacian(P) + nonlinearity_f(P, Q)
    res_Q = grid.laplacian(Q) + nonlinearity_g(P, Q)
    return grid.l2_norm(res_P), grid.l2_norm(res_Q)


def lagrange_rescale(v: FieldPair, I_value: float) -> Tuple[FieldPair, float]:
    """Maps the N = 1 minimizer to a solution: λ = I/2, (P0, Q0) = (λ/2)^{1/2} (v, z)."""
    lam = I_value / 2.0
    return v.scaled(np.sqrt(lam / 2.0)), lam


def _normalize(P: NDArray, Q: NDArray, grid: RadialGrid) -> Tuple[NDArray, NDArray, float]:
    n_value = n_quartic(FieldPair(P, Q, grid))
    if n_value <= 0:
        raise InitOutsideConeError(f"Iterate left the cone N > 0 (N = {n_value!r})")
    scale = n_value ** (-0.25)
    return scale * P, scale * Q, n_value


def _initial_pair(config: GroundStateConfig, grid: RadialGrid) -> Tuple[NDArray, NDArray]:
    W = aubin_talenti(grid.r)
    if config.init == "semitrivial":
        return np.zeros(grid.n), W / 3.0
    if config.init == "perturbed-semitrivial":
        return config.perturbation * W, W / 3.0
    if config.init == "gaussian-pair":
        g = np.exp(-grid.r**2 / 8.0)
        return g.copy(), g.copy()
    # init == "file"
    from ..storage.results import read_ground_state

    doc = read_ground_state(config.path)
    r = np.asarray(doc.r)
    P = np.interp(grid.r, r, np.asarray(doc.P), right=0.0)
    Q = np.interp(grid.r, r, np.asarray(doc.Q), right=0.0)
    return P, Q


class _Preconditioner:
    """Solves -Δ x = b with the same discrete operator that defines K."""

    def __init__(self, grid: RadialGrid):
        self.grid = grid
        self._lu = splu(-grid.laplacian_matrix())

    def solve(self, rhs: NDArray) -> NDArray:
        return self._lu.solve(np.asarray(rhs, dtype=float))

    def h1_inner(self, a: Tuple[NDArray, NDArray], b: Tuple[NDArray, NDArray]) -> float:
        return -sum(self.grid.integrate(self.grid.laplacian(x) * y) for x, y in zip(a, b))


def _descent_direction(P: NDArray, Q: NDArray, K: float, n_value: float, pre: _Preconditioner):
    scale = K / (4.0 * n_value)
    dP = scale * pre.solve(nonlinearity_f(P, Q)) - P
    dQ = scale * pre.solve(nonlinearity_g(P, Q)) - Q
    grid = pre.grid
    gen = (P + grid.r * grid.radial_derivative(P), Q + grid.r * grid.radial_derivative(Q))
    gen_norm = pre.h1_inner(gen, gen)
    if gen_norm > 0:
        coeff = pre.h1_inner((dP, dQ), gen) / gen_norm
        dP = dP - coeff * gen[0]
        dQ = dQ - coeff * gen[1]
    return dP, dQ


# --- operations -------------------------------------------------------------


def minimize_normalized(
    config: GroundStateConfig, grid: RadialGrid
) -> Tuple[FieldPair, float, List[float]]:
    """Projected descent for I = inf{K : N = 1}; returns (v, z) with N = 1, I and the K trace."""
    P, Q = _initial_pair(config, grid)
    P = np.maximum(P, 0.0)
    Q = np.maximum(Q, 0.0)
    n_init = n_quartic(FieldPair(P, Q, grid))
    if not n_init > 0:
        raise InitOutsideConeError(f"Initial pair '{config.init}' has N = {n_init!r} <= 0")
    P, Q, _ = _normalize(P, Q, grid)
    K = kinetic(FieldPair(P, Q, grid))
    trace = [K]
    pre = _Preconditioner(grid)
    quiet_iterations = 0
    clamp_events = 0

    logger.info(
        f"Starting ground-state descent: init={config.init}, n={grid.n}, r_max={grid.r_max}, K0={K:.12g}"
    )
    for iteration in range(1, config.max_iter + 1):
        dP, dQ = _descent_direction(P, Q, K, 1.0, pre)
        step_norm = float(np.sqrt(max(pre.h1_inner((dP, dQ), (dP, dQ)), 0.0) / K))
        if step_norm <= config.tol_grad:
            logger.info(
                f"Ground-state descent converged after {iteration - 1} iterations: I={K:.12g}, "
                f"projected step {step_norm:.3e}"
            )
            break
        alpha = config.descent_step
        accepted = False
        candidate = None
        for _ in range(MAX_HALVINGS):
            P_new = P + alpha * dP
            Q_new = Q + alpha * dQ
            clamped = bool(np.any(P_new < 0.0) or np.any(Q_new < 0.0))
            P_new = np.maximum(P_new, 0.0)
            Q_new = np.maximum(Q_new, 0.0)
            try:
                P_new, Q_new, _ = _normalize(P_new, Q_new, grid)
            except InitOutsideConeError:
                alpha *= 0.5
                continue
            K_new = kinetic(FieldPair(P_new, Q_new, grid))
            candidate = (P_new, Q_new, K_new, clamped)
            # N = 1 after normalization, so J = K² and comparing K suffices
            if K_new <= K:
                accepted = True
                break
            alpha *= 0.5

        if accepted:
            P, Q, K_new, clamped = candidate
            if clamped:
                clamp_events += 1
                logger.debug(f"Iteration {iteration}: negative samples clamped")
        elif candidate is not None and abs(candidate[2] - K) <= config.tol_rel_K * K:
            K_new = K
        else:
            raise StepCollapseError(
                f"Line search could not decrease J at iteration {iteration} (K={K:.12g})", trace
            )

        change = abs(K_new - K) / K
        K = K_new
        trace.append(K)
        quiet_iterations = quiet_iterations + 1 if change < config.tol_rel_K else 0
        logger.debug(
            f"Iteration {iteration}: K={K:.15g}, rel change={change:.3e}, step={step_norm:.3e}, alpha={alpha:.3g}"
        )
        if quiet_iterations >= config.window:
            logger.info(f"Ground-state descent converged after {iteration} iterations: I={K:.12g}")
            break
    else:
        raise MaxIterExceededError(
            f"Ground-state descent did not converge within {config.max_iter} iterations (K={K:.12g})", trace
        )

    if clamp_events:
        logger.warning(f"Negative samples were clamped in {clamp_events} iterations")
    return FieldPair(P, Q, grid), K, trace


def solve_ground_state(config: GroundStateConfig, grid: RadialGrid) -> GroundStateResult:
    """Minimizes, rescales to a solution, and certifies by residuals."""
    v, I_value, trace = minimize_normalized(config, grid)
    pair, lam = lagrange_rescale(v, I_value)
    res_P, res_Q = residual(pair)
    certified = res_P <= config.tol_residual and res_Q <= config.tol_residual
    result = GroundStateResult(
        pair=pair,
        normalized=v,
        I_value=I_value,
        lam=lam,
        C_opt=1.0 / I_value**2,
        S_value=energy_crit(pair),
        residual_P=res_P,
        residual_Q=res_Q,
        iterations=len(trace) - 1,
        trace=trace,
        certified=certified,
    )
    if certified:
        logger.info(
            f"Ground state certified: I={I_value:.10g}, C_opt={result.C_opt:.10g}, S={result.S_value:.10g}"
        )
    else:
        logger.warning(
            f"Ground state residuals ({res_P:.3e}, {res_Q:.3e}) exceed tolerance {config.tol_residual:.1e}"
        )
    return result


# --- W-ansatz diagnostics ----------------------------------------------------


def _ansatz_system(x: NDArray) -> NDArray:
    a, b = x
    return np.array(
        [
            a**3 / 9.0 + 2.0 * a * b**2 + a**2 * b / 3.0 - a,
            9.0 * b**3 + 2.0 * a**2 * b + a**3 / 9.0 - b,
        ]
    )


def _ansatz_jacobian(x: NDArray) -> NDArray:
    a, b = x
    off = 4.0 * a * b + a**2 / 3.0
    return np.array(
        [
            [a**2 / 3.0 + 2.0 * b**2 + 2.0 * a * b / 3.0 - 1.0, off],
            [off, 27.0 * b**2 + 2.0 * a**2 - 1.0],
        ]
    )


def _damped_newton(x0: NDArray, max_iter: int = 100) -> Optional[NDArray]:
    x = np.array(x0, dtype=float)
    norm = np.linalg.norm(_ansatz_system(x))
    for _ in range(max_iter):
        if norm < ROOT_TOL:
            return x
        try:
            step = np.linalg.solve(_ansatz_jacobian(x), -_ansatz_system(x))
        except np.linalg.LinAlgError:
            return None
        damping = 1.0
        while damping > 1e-6:
            trial = x + damping * step
            trial_norm = np.linalg.norm(_ansatz_system(trial))
            if trial_norm < norm:
                x, norm = trial, trial_norm
                break
            damping *= 0.5
        else:
            return None
    return x if norm < ROOT_TOL else None


def algebraic_roots() -> List[Tuple[float, float]]:
    """Distinct roots (α, β) with α, β >= 0 of the W-ansatz system, from a lattice of Newton starts."""
    roots: List[Tuple[float, float]] = []
    for a0 in NEWTON_STARTS:
        for b0 in NEWTON_STARTS:
            root = _damped_newton(np.array([a0, b0]))
            if root is None:
                continue
            a, b = (0.0 if abs(c) < 1e-10 else float(c) for c in root)
            if a < 0 or b < 0:
                continue
            if all(abs(a - ra) > 1e-8 or abs(b - rb) > 1e-8 for ra, rb in roots):
                roots.append((a, b))
    return sorted(roots)


def coupled_profile_search(grid: RadialGrid, tolerance: float = 5e-3) -> Optional[FieldPair]:
    """(αW, βW) for a root with α, β > 0 whose residuals pass, else None."""
    W = aubin_talenti(grid.r)
    for a, b in algebraic_roots():
        if a > 0 and b > 0:
            pair = FieldPair(a * W, b * W, grid)
            if max(residual(pair)) <= tolerance:
                logger.info(f"Fully coupled W-profile found: alpha={a:.12g}, beta={b:.12g}")
                return pair
    logger.info("No fully coupled W-profile root; only semitrivial ansatz solutions exist")
    return None


# --- Sobolev inequality audit --------------------------------------------------


@dataclass(frozen=True)
class SobolevAudit:
    n_pairs: int
    max_ratio: float
    violations: int
    tolerance: float


def _random_profile(rng: np.random.Generator, r: NDArray) -> NDArray:
    if rng.random() < 0.5:
        amps = rng.random(3)
        widths = np.exp(rng.uniform(np.log(0.5), np.log(10.0), 3))
        return np.sum(amps[:, None] * np.exp(-((r[None, :] / widths[:, None]) ** 2)), axis=0)
    scale = np.exp(rng.uniform(np.log(0.5), np.log(5.0)))
    return rng.random() * aubin_talenti(r / scale)


def sobolev_audit(
    result: GroundStateResult,
    n_pairs: int = 10_000,
    seed: int = 0,
    tolerance: float = 1e-2,
    near_fraction: float = 0.1,
) -> SobolevAudit:
    """Checks N <= I⁻² K² on random smooth nonnegative pairs; a fraction is drawn near the minimizer."""
    grid = result.grid
    rng = np.random.default_rng(seed)
    I_sq = result.I_value**2
    max_ratio = 0.0
    violations = 0
    checked = 0
    for k in range(n_pairs):
        if k < near_fraction * n_pairs:
            eps = rng.uniform(0.0, 0.05)
            P = np.maximum(result.v + eps * _random_profile(rng, grid.r), 0.0)
            Q = np.maximum(result.z + eps * _random_profile(rng, grid.r), 0.0)
        else:
            P = _random_profile(rng, grid.r)
            Q = _random_profile(rng, grid.r)
        pair = FieldPair(P, Q, grid)
        n_value = n_quartic(pair)
        if n_value <= 0:
            continue
        checked += 1
        ratio = n_value * I_sq / kinetic(pair) ** 2
        max_ratio = max(max_ratio, ratio)
        if ratio > 1.0 + tolerance:
            violations += 1
    logger.info(f"Sobolev audit over {checked} pairs: max N*I^2/K^2 = {max_ratio:.6f}, violations = {violations}")
    return SobolevAudit(n_pairs=checked, max_ratio=max_ratio, violations=violations, tolerance=tolerance)
