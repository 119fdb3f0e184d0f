"""
Strang-split time stepping for the coupled system on the radial grid.

One step of size dt is N(dt/2) ∘ L(dt) ∘ N(dt/2):

- L: Crank-Nicolson for u_t = iΔu and w_t = (i/σ)Δw with the grid Laplacian,
  followed by the exact phases exp(-i dt) and exp(-i μ dt/σ) of the linear
  potentials (omitted in resonant mode). The Laplacian is self-adjoint for the
  quadrature weights, so L preserves each slot's weighted L² norm and the
  discrete kinetic energy exactly.
- N: the pointwise ODE u_t = i f(u, w), w_t = (i/σ) g(u, w), integrated per
  node by RK4. Nodes are grouped by power-of-two substep counts sized from the
  local cubic rate; counts double while the pointwise density |u|² + 3σ|w|²
  drifts by more than invariant_tol (relative).
"""
import logging
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import TYPE_CHECKING, Callable, List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray
from scipy import sparse
from scipy.sparse.linalg import splu

from ..config import EvolveConfig, PhysicsParams
from ..discretization.radial_grid import RadialGrid
from ..exceptions import NonFiniteStateError
from ..physics.cutoff import CutoffProfile, build_profile, radial_laplacians
from ..physics.functionals import (
    H,
    FieldPair,
    energy,
    kinetic,
    mass,
    nonlinearity_f,
    nonlinearity_g,
    p_quartic,
)

if TYPE_CHECKING:
    from ..analysis.criteria import Thresholds

logger = logging.getLogger(__name__)

SUBSTEP_THETA = 0.1
OUTER_DECADE = 0.9
OUTER_DECADE_LIMIT = 0.01


@dataclass(frozen=True, eq=False)
class SimState:
    t: float
    pair: FieldPair
    step_count: int = 0
    terminal: bool = False
    # t = 0 data of the run and the last (step, K) samples taken before step_count
    origin: Optional[FieldPair] = None
    monitor_tail: Tuple[Tuple[int, float], ...] = ()


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    E: float
    M: float
    K: float
    P_func: float
    tau: float
    V: float
    V_prime: float
    R_loc: float
    amp_max: float


@dataclass(frozen=True)
class MonitorReport:
    status: str
    halt_time: Optional[float]
    above_threshold: Optional[bool]
    threshold_violations: int
    C0: Optional[float]
    slope_t2: Optional[float]
    gn_ratio: Optional[float] = None


@dataclass(eq=False)
class EvolutionResult:
    final_state: SimState
    records: List[DiagnosticsRecord]
    status: str
    halt_time: Optional[float]
    monitor: Optional[MonitorReport] = None
    warnings: List[str] = field(default_factory=list)


# --- linear substep -----------------------------------------------------------


class _CrankNicolson:
    """Cayley map for f_t = i a Δ f over one step dt."""

    def __init__(self, grid: RadialGrid, a: float, dt: float):
        lap = grid.laplacian_matrix().astype(complex)
        eye = sparse.identity(grid.n, dtype=complex, format="csc")
        half = 0.5j * a * dt
        self._lu = splu((eye - half * lap).tocsc())
        self._rhs = (eye + half * lap).tocsr()

    def apply(self, f: NDArray) -> NDArray:
        return self._lu.solve(self._rhs @ f)


@dataclass(frozen=True, eq=False)
class _LinearStep:
    cn_u: _CrankNicolson
    cn_w: _CrankNicolson
    phase_u: complex
    phase_w: complex

    def apply(self, u: NDArray, w: NDArray) -> Tuple[NDArray, NDArray]:
        return self.phase_u * self.cn_u.apply(u), self.phase_w * self.cn_w.apply(w)


@lru_cache(maxsize=16)
def _linear_step(grid: RadialGrid, params: PhysicsParams, dt: float) -> _LinearStep:
    if params.resonant:
        rate_u, rate_w = 0.0, 0.0
    else:
        rate_u, rate_w = 1.0, params.mu / params.sigma
    return _LinearStep(
        cn_u=_CrankNicolson(grid, 1.0, dt),
        cn_w=_CrankNicolson(grid, 1.0 / params.sigma, dt),
        phase_u=complex(np.exp(-1j * rate_u * dt)),
        phase_w=complex(np.exp(-1j * rate_w * dt)),
    )


# --- nonlinear substep --------------------------------------------------------


def _rk4(u: NDArray, w: NDArray, h: float, inv_sigma: float, steps: int) -> Tuple[NDArray, NDArray]:
    def rhs(a, b):
        return 1j * nonlinearity_f(a, b), 1j * inv_sigma * nonlinearity_g(a, b)

    for _ in range(steps):
        k1u, k1w = rhs(u, w)
        k2u, k2w = rhs(u + 0.5 * h * k1u, w + 0.5 * h * k1w)
        k3u, k3w = rhs(u + 0.5 * h * k2u, w + 0.5 * h * k2w)
        k4u, k4w = rhs(u + h * k3u, w + h * k3w)
        u = u + (h / 6.0) * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
        w = w + (h / 6.0) * (k1w + 2.0 * k2w + 2.0 * k3w + k4w)
    return u, w


def _initial_substeps(u: NDArray, w: NDArray, tau: float, sigma: float, max_substeps: int) -> NDArray:
    rate = 12.0 * max(1.0, 1.0 / sigma) * (np.abs(u) ** 2 + np.abs(w) ** 2)
    need = np.clip(np.nan_to_num(abs(tau) * rate / SUBSTEP_THETA, nan=1.0, posinf=max_substeps), 1.0, max_substeps)
    return np.minimum(2 ** np.ceil(np.log2(need)).astype(np.int64), max_substeps)


def nonlinear_substep(
    u: NDArray, w: NDArray, tau: float, params: PhysicsParams, invariant_tol: float, max_substeps: int
) -> Tuple[NDArray, NDArray]:
    """Advances the pointwise nonlinear ODE by tau at every node."""
    sigma = params.sigma
    density = np.abs(u) ** 2 + 3.0 * sigma * np.abs(w) ** 2
    substeps = _initial_substeps(u, w, tau, sigma, max_substeps)
    u_out = np.empty_like(u)
    w_out = np.empty_like(w)
    pending = np.ones(u.shape, dtype=bool)
    while True:
        for count in np.unique(substeps[pending]):
            idx = np.flatnonzero(pending & (substeps == count))
            u_out[idx], w_out[idx] = _rk4(u[idx], w[idx], tau / count, 1.0 / sigma, int(count))
        drift = np.abs(np.abs(u_out) ** 2 + 3.0 * sigma * np.abs(w_out) ** 2 - density)
        bad = pending & (drift > invariant_tol * density)
        capped = bad & (substeps >= max_substeps)
        if np.any(capped):
            logger.warning(
                f"Substep cap {max_substeps} reached at {int(np.sum(capped))} nodes; "
                f"max density drift {float(np.max(drift[capped] / density[capped])):.3e}"
            )
        pending = bad & ~capped
        if not np.any(pending):
            return u_out, w_out
        substeps[pending] = np.minimum(2 * substeps[pending], max_substeps)


# --- stepping -----------------------------------------------------------------


def step(state: SimState, config: EvolveConfig, dt: Optional[float] = None) -> SimState:
    """One Strang step; dt defaults to config.dt and may be negative."""
    dt = config.dt if dt is None else dt
    pair = state.pair
    params = pair.params
    linear = _linear_step(pair.grid, params, dt)
    with np.errstate(over="ignore", invalid="ignore"):
        u, w = nonlinear_substep(pair.u, pair.w, 0.5 * dt, params, config.invariant_tol, config.max_substeps)
        u, w = linear.apply(u, w)
        u, w = nonlinear_substep(u, w, 0.5 * dt, params, config.invariant_tol, config.max_substeps)
    new_pair = FieldPair(u, w, pair.grid, params)
    if not new_pair.is_finite():
        raise NonFiniteStateError(f"Non-finite samples after step at t={state.t + dt:.6g}", last_state=state)
    return SimState(t=state.t + dt, pair=new_pair, step_count=state.step_count + 1, origin=state.origin)


# --- virial quantities ----------------------------------------------------------


def virial_V(pair: FieldPair) -> float:
    """∫|x|²(|u|² + 3σ|w|²); 3σ = 9 in the resonant case."""
    density = np.abs(pair.u) ** 2 + 3.0 * pair.params.sigma * np.abs(pair.w) ** 2
    return pair.grid.integrate(pair.grid.r**2 * density)


def virial_Vprime(pair: FieldPair) -> float:
    grid = pair.grid
    du = grid.radial_derivative(pair.u)
    dw = grid.radial_derivative(pair.w)
    integrand = np.imag(np.conj(pair.u) * grid.r * du + 3.0 * np.conj(pair.w) * grid.r * dw)
    return 4.0 * grid.integrate(integrand)


def localized_virial_R(pair: FieldPair, profile: CutoffProfile) -> float:
    grid = pair.grid
    du = grid.radial_derivative(pair.u)
    dw = grid.radial_derivative(pair.w)
    current = np.imag(np.conj(pair.u) * du + pair.params.sigma * np.conj(pair.w) * dw)
    return 2.0 * grid.integrate(profile.d1 * current)


@dataclass(frozen=True)
class LocalizedVirialTerms:
    eight_tau: float
    R1: float
    R2: float
    R3: float

    @property
    def total(self) -> float:
        return self.eight_tau + self.R1 + self.R2 + self.R3


def localized_virial_terms(pair: FieldPair, profile: CutoffProfile) -> LocalizedVirialTerms:
    """The four pieces of d𝓡/dt for the weight χ_R; R1 <= 0 because χ_R'' <= 2."""
    grid = pair.grid
    lap, bilap = radial_laplacians(profile)
    grad_density = np.abs(grid.radial_derivative(pair.u)) ** 2 + np.abs(grid.radial_derivative(pair.w)) ** 2
    density = np.abs(pair.u) ** 2 + np.abs(pair.w) ** 2
    tau = kinetic(pair) - 4.0 * p_quartic(pair)
    return LocalizedVirialTerms(
        eight_tau=8.0 * tau,
        R1=4.0 * grid.integrate((profile.d2 - 2.0) * grad_density),
        R2=-grid.integrate(bilap * density),
        R3=-grid.integrate((lap - 8.0) * np.real(H(pair.u, pair.w))),
    )


def radial_gn_ratio(f: NDArray, grid: RadialGrid, R: float) -> float:
    """∫_{r>=R}|f|⁴ / (R⁻³ ‖f‖³ ‖∂_r f‖^{1/2}) with both norms taken over r >= R."""
    tail = grid.r >= R
    if not np.any(tail):
        return 0.0
    weights = grid.weights[tail]
    f_tail = np.asarray(f)[tail]
    df_tail = grid.radial_derivative(f)[tail]
    quartic = float(np.sum(weights * np.abs(f_tail) ** 4))
    l2 = float(np.sqrt(np.sum(weights * np.abs(f_tail) ** 2)))
    grad = float(np.sqrt(np.sum(weights * np.abs(df_tail) ** 2)))
    denominator = R**-3 * l2**3 * np.sqrt(grad)
    return quartic / denominator if denominator > 0 else 0.0


def outer_decade_fraction(pair: FieldPair) -> float:
    """Share of the |x|²-weighted mass carried by r > 0.9 r_max."""
    grid = pair.grid
    density = grid.weights * grid.r**2 * (np.abs(pair.u) ** 2 + 3.0 * pair.params.sigma * np.abs(pair.w) ** 2)
    total = float(np.sum(density))
    if total == 0.0:
        return 0.0
    return float(np.sum(density[grid.r > OUTER_DECADE * grid.r_max])) / total


# --- diagnostics and monitoring -----------------------------------------------------


def diagnostics(state: SimState, profile: CutoffProfile) -> DiagnosticsRecord:
    pair = state.pair
    K = kinetic(pair)
    P_func = p_quartic(pair)
    return DiagnosticsRecord(
        t=state.t,
        E=energy(pair),
        M=mass(pair),
        K=K,
        P_func=P_func,
        tau=K - 4.0 * P_func,
        V=virial_V(pair),
        V_prime=virial_Vprime(pair),
        R_loc=localized_virial_R(pair, profile),
        amp_max=float(max(np.max(np.abs(pair.u)), np.max(np.abs(pair.w)))),
    )


def _blowup_fired(K_values: Sequence[float], amp_max: float, K_reference: float, config: EvolveConfig) -> bool:
    if amp_max > config.amp_guard:
        return True
    if len(K_values) < 3 or K_values[-1] <= config.blowup_K_factor * K_reference:
        return False
    return K_values[-1] - 2.0 * K_values[-2] + K_values[-3] > 0.0


def blow_up_monitor(
    records: List[DiagnosticsRecord],
    config: EvolveConfig,
    thresholds: Optional["Thresholds"] = None,
    window_fraction: float = 0.25,
    K_reference: Optional[float] = None,
    prior_K: Sequence[float] = (),
) -> MonitorReport:
    """Replays the halt rule over a record list and fits K(t) >= C0 t² on the terminal window.

    K_reference defaults to the first record; a resumed run passes the t = 0 value and the
    K samples taken before its first record.
    """
    if not records:
        return MonitorReport("completed", None, None, 0, None, None)
    if K_reference is None:
        K_reference = records[0].K
    history = list(prior_K)
    status, halt_time = "completed", None
    for k in range(len(records)):
        history.append(records[k].K)
        if _blowup_fired(history, records[k].amp_max, K_reference, config):
            status, halt_time = "blowup", records[k].t
            break

    above, violations = None, 0
    if thresholds is not None:
        violations = sum(1 for rec in records if not rec.K > thresholds.K_gs)
        above = violations == 0

    t = np.array([rec.t for rec in records])
    K = np.array([rec.K for rec in records])
    positive = t > 0
    C0 = slope = None
    if np.count_nonzero(positive) >= 2:
        start = int(len(records) * (1.0 - window_fraction))
        window = positive & (np.arange(len(records)) >= start)
        if np.count_nonzero(window) < 2:
            window = positive
        C0 = float(np.min(K[window] / t[window] ** 2))
        slope = float(np.polyfit(t[window] ** 2, K[window], 1)[0])
    return MonitorReport(status, halt_time, above, violations, C0, slope)


def initial_state(pair: FieldPair, t: float = 0.0, step_count: int = 0) -> SimState:
    return SimState(t=t, pair=pair.as_complex(), step_count=step_count)


def evolve(
    state0: SimState,
    config: EvolveConfig,
    thresholds: Optional["Thresholds"] = None,
    checkpoint: Optional[Callable[[SimState], None]] = None,
) -> EvolutionResult:
    """Steps to t_max, sampling diagnostics every sample_every steps, until completion or blow-up.

    A state carrying `origin` and `monitor_tail` (a checkpoint) resumes with the blow-up rule
    referenced to the t = 0 data, so it halts exactly where the uninterrupted run would.
    """
    grid = state0.pair.grid
    profile = build_profile(config.cutoff_R, grid)
    total_steps = int(round(config.t_max / config.dt))
    origin = state0.origin if state0.origin is not None else state0.pair.as_complex()
    state = replace(state0, pair=state0.pair.as_complex(), origin=origin)
    samples: List[Tuple[int, float]] = [(s, K) for s, K in state0.monitor_tail if s < state.step_count]
    prior_K = [K for _, K in samples]
    records: List[DiagnosticsRecord] = []
    warnings: List[str] = []
    if state.step_count % config.sample_every == 0:
        records.append(diagnostics(state, profile))
        samples.append((state.step_count, records[-1].K))
    K_reference = kinetic(origin)
    status, halt_time = "completed", None

    def stamped(current: SimState) -> SimState:
        tail = tuple((s, K) for s, K in samples if s < current.step_count)[-2:]
        return replace(current, origin=origin, monitor_tail=tail)

    fraction = outer_decade_fraction(state.pair)
    if state.pair.params.resonant and fraction > OUTER_DECADE_LIMIT:
        message = f"{fraction:.1%} of the |x|^2-weighted mass sits in the outer decade; V and V' are unreliable"
        logger.warning(message)
        warnings.append(message)

    logger.info(
        f"Evolving from t={state.t:.6g} to t_max={config.t_max} with dt={config.dt} "
        f"(n={grid.n}, resonant={state.pair.params.resonant}, K_reference={K_reference:.6g})"
    )
    while state.step_count < total_steps:
        try:
            state = step(state, config)
        except NonFiniteStateError as e:
            logger.warning(f"{e}; halting with the last finite state")
            state = replace(e.last_state, terminal=True)
            status, halt_time = "blowup", state.t
            break
        if state.step_count % config.sample_every == 0:
            records.append(diagnostics(state, profile))
            samples.append((state.step_count, records[-1].K))
            if _blowup_fired([K for _, K in samples[-3:]], records[-1].amp_max, K_reference, config):
                state = replace(state, terminal=True)
                status, halt_time = "blowup", state.t
                logger.info(f"Blow-up detected at t={state.t:.6g}: K={records[-1].K:.6g}, amp_max={records[-1].amp_max:.3g}")
                break
        if checkpoint is not None and config.checkpoint_every and state.step_count % config.checkpoint_every == 0:
            checkpoint(stamped(state))

    state = stamped(state)
    if checkpoint is not None:
        checkpoint(state)
    monitor = blow_up_monitor(records, config, thresholds, K_reference=K_reference, prior_K=prior_K)
    monitor = replace(monitor, gn_ratio=radial_gn_ratio(state.pair.u, grid, config.cutoff_R))
    if thresholds is not None and monitor.above_threshold is False:
        logger.info(f"K(t) fell to or below K_gs at {monitor.threshold_violations} samples")
    logger.info(f"Evolution finished with status '{status}' at t={state.t:.6g} after {state.step_count} steps")
    return EvolutionResult(
        final_state=state,
        records=records,
        status=status,
        halt_time=halt_time,
        monitor=monitor,
        warnings=warnings,
    )
