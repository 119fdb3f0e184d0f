import numpy as np
import pytest

from critnls.analysis.criteria import SUPERCRITICAL, classify, comparison_monitor, gaussian_seed, lambda_factory
from critnls.config import EvolveConfig, PhysicsParams
from critnls.discretization.radial_grid import RadialGrid
from critnls.exceptions import NonFiniteStateError
from critnls.physics.cutoff import build_profile
from critnls.physics.functionals import FieldPair, kinetic
from critnls.solvers.evolution import (
    DiagnosticsRecord,
    SimState,
    _linear_step,
    blow_up_monitor,
    evolve,
    initial_state,
    localized_virial_R,
    localized_virial_terms,
    nonlinear_substep,
    outer_decade_fraction,
    radial_gn_ratio,
    step,
    virial_Vprime,
)
from critnls.solvers.ground_state import aubin_talenti


@pytest.fixture(scope="module")
def medium_grid():
    return RadialGrid(r_max=40.0, n=1600)


def _gaussian_pair(grid, amplitude, params=None, width=1.0):
    g = amplitude * np.exp(-((grid.r / width) ** 2))
    return FieldPair(g.astype(complex), (0.5 * g).astype(complex), grid, params or PhysicsParams())


def _record(t, K, amp=1.0):
    return DiagnosticsRecord(t=t, E=0.0, M=1.0, K=K, P_func=0.0, tau=0.0, V=0.0, V_prime=0.0, R_loc=0.0, amp_max=amp)


def test_zero_state_stays_zero(small_grid):
    zero = FieldPair(np.zeros(small_grid.n, complex), np.zeros(small_grid.n, complex), small_grid)
    state = step(initial_state(zero), EvolveConfig())
    assert np.all(state.pair.u == 0.0)
    assert np.all(state.pair.w == 0.0)
    assert state.step_count == 1
    assert state.t == pytest.approx(1e-3)


def test_linear_step_is_unitary(medium_grid, rng):
    r = medium_grid.r
    u = np.exp(-(r**2) / 4.0) * (rng.standard_normal() + 1j * np.cos(r))
    w = np.exp(-(r**2)) * (1.0 + 1j * r)
    for params in (PhysicsParams(), PhysicsParams(sigma=2.0, mu=3.0), PhysicsParams.resonance()):
        linear = _linear_step(medium_grid, params, 1e-3)
        u1, w1 = linear.apply(u, w)
        assert medium_grid.l2_norm(u1) == pytest.approx(medium_grid.l2_norm(u), rel=1e-12)
        assert medium_grid.l2_norm(w1) == pytest.approx(medium_grid.l2_norm(w), rel=1e-12)
        assert medium_grid.grad_sq(u1) == pytest.approx(medium_grid.grad_sq(u), rel=1e-10)
        assert medium_grid.grad_sq(w1) == pytest.approx(medium_grid.grad_sq(w), rel=1e-10)


def test_nonlinear_substep_keeps_pointwise_density(small_grid):
    r = small_grid.r
    u = (1.0 + 0.5j) * np.exp(-(r**2))
    w = (0.7 - 0.2j) * np.exp(-(r**2) / 2.0)
    for params in (PhysicsParams(), PhysicsParams.resonance()):
        sigma = params.sigma
        before = np.abs(u) ** 2 + 3.0 * sigma * np.abs(w) ** 2
        u1, w1 = nonlinear_substep(u, w, 5e-3, params, invariant_tol=1e-9, max_substeps=4096)
        after = np.abs(u1) ** 2 + 3.0 * sigma * np.abs(w1) ** 2
        assert np.all(np.abs(after - before) <= 1e-9 * before)
        assert not np.allclose(u1, u)


def test_conservation_over_unit_time(medium_grid):
    pair = _gaussian_pair(medium_grid, 0.1)
    run = evolve(initial_state(pair), EvolveConfig(t_max=1.0))
    assert run.status == "completed"
    assert run.final_state.step_count == 1000
    E = np.array([rec.E for rec in run.records])
    M = np.array([rec.M for rec in run.records])
    assert np.max(np.abs(E - E[0])) <= 1e-6 * abs(E[0])
    assert np.max(np.abs(M - M[0])) <= 1e-8 * M[0]
    assert len(run.records) == 101
    assert run.records[-1].t == pytest.approx(1.0)


@pytest.mark.slow
def test_energy_error_is_second_order(medium_grid):
    pair = _gaussian_pair(medium_grid, 0.1)
    drifts = []
    for dt, sample_every in ((1e-3, 10), (5e-4, 20)):
        run = evolve(initial_state(pair), EvolveConfig(t_max=1.0, dt=dt, sample_every=sample_every))
        E = np.array([rec.E for rec in run.records])
        drifts.append(np.max(np.abs(E - E[0])))
    assert drifts[0] / drifts[1] >= 3.0


def test_gauge_equivalence_with_resonant_system(small_grid):
    r = small_grid.r
    u = 0.5 * np.exp(-(r**2)) * (1.0 + 0.3j)
    w = 0.4 * np.exp(-(r**2) / 2.0) * (1.0 - 0.5j)
    general = initial_state(FieldPair(u, w, small_grid, PhysicsParams(sigma=3.0, mu=9.0)))
    resonant = initial_state(FieldPair(u, w, small_grid, PhysicsParams.resonance()))
    config = EvolveConfig()
    for _ in range(200):
        general = step(general, config)
        resonant = step(resonant, config)
    t = general.t
    scale = small_grid.l2_norm(u) + small_grid.l2_norm(w)
    assert small_grid.l2_norm(np.exp(1j * t) * general.pair.u - resonant.pair.u) <= 1e-9 * scale
    assert small_grid.l2_norm(np.exp(3j * t) * general.pair.w - resonant.pair.w) <= 1e-9 * scale


def test_step_is_reversible(small_grid):
    state = initial_state(_gaussian_pair(small_grid, 0.1))
    config = EvolveConfig()
    back = step(step(state, config), config, dt=-config.dt)
    assert np.max(np.abs(back.pair.u - state.pair.u)) <= 1e-10
    assert np.max(np.abs(back.pair.w - state.pair.w)) <= 1e-10


def test_non_finite_state_raises(small_grid):
    u = np.exp(-small_grid.r**2).astype(complex)
    u[5] = np.nan
    state = initial_state(FieldPair(u, u.copy(), small_grid))
    with pytest.raises(NonFiniteStateError) as excinfo:
        step(state, EvolveConfig())
    assert excinfo.value.last_state is state


def test_evolve_halts_on_non_finite_state(small_grid):
    u = np.exp(-small_grid.r**2).astype(complex)
    u[5] = np.nan
    run = evolve(initial_state(FieldPair(u, u.copy(), small_grid)), EvolveConfig(t_max=0.01))
    assert run.status == "blowup"
    assert run.halt_time == 0.0
    assert run.final_state.terminal


def test_virial_currents_vanish_on_real_data(grid):
    W = aubin_talenti(grid.r)
    pair = FieldPair(W, W / 3.0, grid)
    profile = build_profile(10.0, grid)
    assert virial_Vprime(pair) == 0.0
    assert localized_virial_R(pair, profile) == 0.0


def test_localized_virial_first_correction_is_non_positive(grid):
    r = grid.r
    pair = FieldPair(np.exp(-(r**2) / 50.0) * np.exp(1j * r), 0.3 * np.exp(-(r**2) / 200.0), grid)
    terms = localized_virial_terms(pair, build_profile(5.0, grid))
    assert terms.R1 <= 0.0
    assert terms.total == pytest.approx(terms.eight_tau + terms.R1 + terms.R2 + terms.R3)


def test_localized_virial_is_controlled_by_mass_and_energy(medium_grid):
    R = 10.0
    pair = _gaussian_pair(medium_grid, 0.5)
    run = evolve(initial_state(pair), EvolveConfig(t_max=0.2, cutoff_R=R))
    for rec in run.records:
        assert abs(rec.R_loc) <= 20.0 * R * np.sqrt(rec.M * rec.K)


def test_virial_identity_in_resonant_mode(grid):
    params = PhysicsParams.resonance()
    pair = _gaussian_pair(grid, 0.1, params, width=2.0)
    run = evolve(initial_state(pair), EvolveConfig(t_max=0.5, sample_every=10))
    dt = run.records[1].t - run.records[0].t
    V = np.array([rec.V for rec in run.records])
    second = (V[2:] - 2.0 * V[1:-1] + V[:-2]) / dt**2
    expected = np.array([32.0 * rec.E - 8.0 * rec.K for rec in run.records[1:-1]])
    np.testing.assert_allclose(second, expected, rtol=1e-3)


def test_resonant_ground_state_is_stationary(ground_state):
    grid = ground_state.grid
    pair = ground_state.pair.with_params(PhysicsParams.resonance())
    run = evolve(initial_state(pair), EvolveConfig(t_max=1.0, sample_every=100))
    final = run.final_state.pair
    assert run.status == "completed"
    assert grid.l2_norm(final.u - ground_state.P0) <= 1e-4
    assert grid.l2_norm(final.w - ground_state.Q0) <= 5e-3


def test_outer_decade_fraction(grid):
    W = aubin_talenti(grid.r)
    assert outer_decade_fraction(_gaussian_pair(grid, 1.0)) < 1e-12
    tail_heavy = FieldPair(np.zeros(grid.n), 0.01 * W, grid, PhysicsParams.resonance())
    assert outer_decade_fraction(tail_heavy) > 0.01


def test_resonant_evolution_warns_about_unconfined_data(grid):
    W = aubin_talenti(grid.r)
    pair = FieldPair(np.zeros(grid.n), 0.01 * W, grid, PhysicsParams.resonance())
    run = evolve(initial_state(pair), EvolveConfig(t_max=0.01))
    assert run.warnings


def test_gagliardo_nirenberg_ratio(grid):
    g = np.exp(-((grid.r / 5.0) ** 2))
    assert radial_gn_ratio(g, grid, 2.0) > 0.0
    assert radial_gn_ratio(g, grid, 2.0 * grid.r_max) == 0.0


def test_monitor_on_dispersive_records():
    records = [_record(0.01 * k, 1.0 / (1.0 + 0.01 * k)) for k in range(50)]
    report = blow_up_monitor(records, EvolveConfig())
    assert report.status == "completed"
    assert report.halt_time is None
    assert report.above_threshold is None


def test_monitor_flags_accelerating_growth():
    records = [_record(0.01 * k, 1.0 + 500.0 * (0.01 * k) ** 2) for k in range(50)]
    report = blow_up_monitor(records, EvolveConfig())
    assert report.status == "blowup"
    assert 1.0 + 500.0 * report.halt_time**2 > 10.0
    assert report.C0 > 0.0
    assert report.slope_t2 == pytest.approx(500.0, rel=1e-6)


def test_monitor_flags_amplitude_guard():
    records = [_record(0.0, 1.0), _record(0.01, 1.0, amp=2e6)]
    assert blow_up_monitor(records, EvolveConfig()).status == "blowup"


def test_checkpoint_callback_cadence(small_grid):
    seen = []
    pair = _gaussian_pair(small_grid, 0.01)
    evolve(initial_state(pair), EvolveConfig(t_max=0.02, checkpoint_every=5), checkpoint=seen.append)
    assert [s.step_count for s in seen] == [5, 10, 15, 20, 20]
    assert all(isinstance(s, SimState) for s in seen)


@pytest.mark.slow
def test_supercritical_data_blow_up(grid, thresholds):
    factory = lambda_factory(gaussian_seed(grid), thresholds)
    pair = factory.builder(1.5 * factory.lambda_star)
    verdict = classify(pair, thresholds)
    assert verdict.classification == SUPERCRITICAL
    run = evolve(initial_state(pair), EvolveConfig(t_max=5.0), thresholds)
    assert run.status == "blowup"
    assert run.halt_time < 5.0
    assert run.monitor.above_threshold
    assert run.monitor.C0 > 0.0
    assert kinetic(run.final_state.pair) > thresholds.K_gs

    R = np.array([rec.R_loc for rec in run.records])
    assert R[0] == 0.0
    assert np.all(np.diff(R) < 0.0)
    assert R[-1] < 0.0

    a, b = 2.0 * verdict.E0, 2.0 * thresholds.C_opt
    strict = comparison_monitor(run.records, a=a, b=b)
    assert strict.started_above
    assert strict.dichotomy_holds
    assert strict.f_violations == 0
    refined = comparison_monitor(run.records, a=a, b=b, mode="refined", epsilon_star=verdict.epsilon_star)
    assert refined.dichotomy_holds


@pytest.mark.slow
def test_subcritical_control_completes(grid, thresholds):
    factory = lambda_factory(gaussian_seed(grid), thresholds)
    pair = factory.builder(0.5 * factory.lambda_K)
    run = evolve(initial_state(pair), EvolveConfig(t_max=5.0), thresholds)
    assert run.status == "completed"
    assert run.final_state.t == pytest.approx(5.0)
    report = comparison_monitor(run.records, a=2.0 * classify(pair, thresholds).E0, b=2.0 * thresholds.C_opt)
    assert not report.started_above
    assert report.dichotomy_holds
    assert report.f_violations == 0


def test_checkpoints_carry_origin_and_monitor_tail(small_grid):
    seen = []
    pair = _gaussian_pair(small_grid, 0.01)
    evolve(initial_state(pair), EvolveConfig(t_max=0.03, sample_every=5, checkpoint_every=10), checkpoint=seen.append)
    assert all(np.array_equal(s.origin.u, pair.u) for s in seen)
    assert [s for s, _ in seen[1].monitor_tail] == [10, 15]
    assert all(s < state.step_count for state in seen for s, _ in state.monitor_tail)


def test_resumed_run_matches_uninterrupted_run(small_grid):
    config = EvolveConfig(t_max=0.05, sample_every=5, checkpoint_every=10)
    seen = []
    full = evolve(initial_state(_gaussian_pair(small_grid, 0.5)), config, checkpoint=seen.append)
    resumed = evolve(seen[1], config)
    tail = [rec for rec in full.records if rec.t >= seen[1].t - 1e-12]
    assert len(resumed.records) == len(tail)
    np.testing.assert_allclose([rec.K for rec in resumed.records], [rec.K for rec in tail], rtol=1e-12)
    np.testing.assert_array_equal(resumed.final_state.pair.u, full.final_state.pair.u)
    assert resumed.status == full.status


def test_resume_measures_growth_against_the_initial_data(small_grid):
    config = EvolveConfig(t_max=0.01, sample_every=5)
    current = _gaussian_pair(small_grid, 0.5)
    origin = _gaussian_pair(small_grid, 0.01)
    K_now = kinetic(current)
    assert K_now > config.blowup_K_factor * kinetic(origin)
    checkpointed = SimState(t=0.005, pair=current, step_count=5, origin=origin, monitor_tail=())
    assert evolve(checkpointed, config).status == "completed"
    # with origin and a tail, the same data halts on its first sample after the checkpoint
    resumed = SimState(t=0.005, pair=current, step_count=5, origin=origin, monitor_tail=((0, 10.0 * K_now),))
    run = evolve(resumed, config)
    assert run.status == "blowup"
    assert run.halt_time == pytest.approx(0.01)
    # without origin the checkpoint itself is the reference and the rule never fires
    orphan = SimState(t=0.005, pair=current, step_count=5, monitor_tail=((0, 10.0 * K_now),))
    assert evolve(orphan, config).status == "completed"


@pytest.mark.slow
def test_resumed_supercritical_run_halts_at_the_same_time(grid, thresholds):
    factory = lambda_factory(gaussian_seed(grid), thresholds)
    pair = factory.builder(1.5 * factory.lambda_star)
    config = EvolveConfig(t_max=5.0, checkpoint_every=200)
    seen = []
    full = evolve(initial_state(pair), config, thresholds, checkpoint=seen.append)
    assert full.status == "blowup"
    resumable = [s for s in seen if not s.terminal]
    assert resumable
    for checkpointed in (resumable[0], resumable[-1]):
        resumed = evolve(checkpointed, config, thresholds)
        assert resumed.status == "blowup"
        assert resumed.halt_time == full.halt_time
        assert resumed.records[-1].K == pytest.approx(full.records[-1].K, rel=1e-12)
