"""critnls command line: ground-state, evolve, classify, sweep and check-cutoff."""
import argparse
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..analysis.criteria import (
    SUPERCRITICAL,
    LambdaFactory,
    Thresholds,
    Verdict,
    classify,
    comparison_monitor,
    gaussian_seed,
    lambda_factory,
    thresholds_from_ground_state,
)
from ..config import DEFAULT_WORKERS, LOG_LEVEL, RunConfig, load_run_config
from ..discretization.radial_grid import RadialGrid
from ..exceptions import (
    CheckpointError,
    ConfigError,
    CrossTermNotPositiveError,
    InitOutsideConeError,
    MaxIterExceededError,
    StepCollapseError,
    UncertifiedGroundStateError,
)
from ..physics.cutoff import build_profile, check_profile, decay_table, radial_laplacians
from ..physics.functionals import FieldPair
from ..physics.functionals import report as functional_report
from ..solvers.evolution import evolve, initial_state
from ..solvers.ground_state import solve_ground_state
from ..storage import results

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_NOT_CONVERGED = 2
EXIT_BLOWUP = 3
EXIT_USAGE = 64
EXIT_NO_INPUT = 66

DECAY_REL_SLACK = 0.2  # doubling R: ratio within 0.25 +- 0.05


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="TOML run configuration")
    common.add_argument("--out", help="output directory (overrides [output].dir)")
    common.add_argument("--plots", action="store_true", help="render SVG charts from the diagnostics CSV")
    common.add_argument("--quiet", action="store_true", help="log warnings and errors only")

    parser = _Parser(prog="critnls", description="Energy-critical coupled NLS laboratory in dimension 4")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    sub.add_parser("ground-state", parents=[common], help="solve and certify the ground state")

    evolve_p = sub.add_parser("evolve", parents=[common], help="time-step initial data")
    evolve_p.add_argument("--resume", help="checkpoint JSON to continue from")

    classify_p = sub.add_parser("classify", parents=[common], help="classify a stored state")
    classify_p.add_argument("--state", required=True, help="checkpoint JSON holding the initial pair")

    sweep_p = sub.add_parser("sweep", parents=[common], help="classify and evolve a lambda grid")
    sweep_p.add_argument("--lambda-min", type=float, required=True)
    sweep_p.add_argument("--lambda-max", type=float, required=True)
    sweep_p.add_argument("--steps", type=int, required=True)
    sweep_p.add_argument("--workers", type=int, default=DEFAULT_WORKERS)

    cutoff_p = sub.add_parser("check-cutoff", parents=[common], help="verify the virial weight bounds")
    cutoff_p.add_argument("--radii", default="10,20,40", help="comma separated radii")
    return parser


# --- helpers ----------------------------------------------------------------------


def _effective_config(args) -> RunConfig:
    config = load_run_config(args.config)
    update = {}
    if args.out:
        update["dir"] = args.out
    if args.plots:
        update["plots"] = True
    if update:
        config = config.model_copy(update={"output": config.output.model_copy(update=update)})
    return config


def _grid(config: RunConfig) -> RadialGrid:
    return RadialGrid.from_config(config.grid)


def _thresholds(config: RunConfig, solve_if_missing: bool = True) -> Optional[Thresholds]:
    """Thresholds from <out>/ground_state.json, solving the ground state when the file is absent."""
    path = Path(config.output.dir) / "ground_state.json"
    if path.exists():
        gs = results.ground_state_from_document(results.read_ground_state(path))
        logger.info(f"Loaded ground state from {path}: I={gs.I_value:.10g}")
    elif solve_if_missing:
        logger.info("No stored ground state; solving it now")
        gs = solve_ground_state(config.ground_state, _grid(config))
        results.write_ground_state(path, gs)
    else:
        return None
    return thresholds_from_ground_state(gs)


def _factory(config: RunConfig, thresholds: Optional[Thresholds]) -> LambdaFactory:
    return lambda_factory(gaussian_seed(_grid(config), config.physics), thresholds)


def _initial_pair(config: RunConfig, thresholds: Optional[Thresholds]) -> Tuple[FieldPair, Optional[float]]:
    """The configured initial data and, for factory seeds, λ*."""
    seed = config.seed
    if seed.kind == "gaussian":
        return gaussian_seed(_grid(config), config.physics, seed.amplitude), None
    if seed.kind == "file":
        if seed.path is None:
            raise ConfigError("seed.kind = 'file' needs seed.path")
        return results.read_checkpoint(seed.path).pair.with_params(config.physics), None
    factory = _factory(config, thresholds)
    lam = seed.lambda_scale * factory.lambda_star
    logger.info(f"Factory seed with lambda = {seed.lambda_scale} * lambda* = {lam:.8g}")
    return factory.builder(lam), factory.lambda_star


def _report_comparison(records, verdict: Verdict, thresholds: Thresholds) -> None:
    eps = verdict.epsilon_star
    mode = "refined" if eps is not None and 0.0 < eps < 1.0 else "strict"
    report = comparison_monitor(
        records, a=2.0 * verdict.E0, b=2.0 * thresholds.C_opt, q=2.0, mode=mode, epsilon_star=eps
    )
    if report.passed:
        logger.info(
            f"Comparison monitor ({mode}) passed: min f(K(t))={report.f_min:.6g}, inf ratio={report.inf_ratio:.6g}"
        )
    else:
        logger.warning(
            f"Comparison monitor violated: {report.f_violations} samples with f(K) < 0, "
            f"dichotomy holds={report.dichotomy_holds}"
        )


# --- commands ---------------------------------------------------------------------


def cmd_ground_state(config: RunConfig) -> int:
    grid = _grid(config)
    try:
        result = solve_ground_state(config.ground_state, grid)
    except (MaxIterExceededError, StepCollapseError, InitOutsideConeError) as e:
        logger.error(f"Ground-state solve failed: {e}")
        return EXIT_NOT_CONVERGED
    out_dir = Path(config.output.dir)
    results.write_ground_state(out_dir / "ground_state.json", result)
    results.write_json(out_dir / "report.json", functional_report(result.pair))
    print(f"I         = {result.I_value!r}")
    print(f"C_opt     = {result.C_opt!r}")
    print(f"S         = {result.S_value!r}")
    print(f"residuals = {result.residual_P!r}, {result.residual_Q!r}")
    print(f"iterations= {result.iterations}")
    return EXIT_OK if result.certified else EXIT_NOT_CONVERGED


def cmd_evolve(config: RunConfig, resume: Optional[str] = None) -> int:
    out_dir = Path(config.output.dir)
    thresholds = _thresholds(config, solve_if_missing=config.seed.kind == "factory")
    lambda_star = None
    if resume:
        state = results.read_checkpoint(resume)
        if state.pair.grid != _grid(config):
            logger.warning("Checkpoint grid differs from the configured grid; using the checkpoint grid")
        if state.origin is None:
            logger.warning("Checkpoint carries no t = 0 data; classifying the checkpointed state")
        if config.seed.kind == "factory" and thresholds is not None:
            lambda_star = _factory(config, thresholds).lambda_star
    else:
        pair, lambda_star = _initial_pair(config, thresholds)
        state = initial_state(pair.with_params(config.physics))
    data0 = state.origin if state.origin is not None else state.pair
    results.write_json(out_dir / "report.json", functional_report(data0))

    checkpoint_path = out_dir / "checkpoint.json"
    run = evolve(state, config.evolve, thresholds, checkpoint=lambda s: results.write_checkpoint(checkpoint_path, s))
    csv_path = results.write_diagnostics(out_dir / "diagnostics.csv", run.records)

    if thresholds is not None:
        verdict = classify(data0, thresholds, lambda_star=lambda_star)
        results.write_json(out_dir / "verdict.json", verdict)
        _report_comparison(run.records, verdict, thresholds)
        if verdict.classification == SUPERCRITICAL and run.monitor.above_threshold is False:
            logger.warning("K(t) dropped to K_gs or below on supercritical data")
    if config.output.plots:
        from ..storage.plots import render_diagnostics

        render_diagnostics(csv_path, out_dir)

    if run.status == "blowup":
        print("status    = blowup")
        print(f"halt_time = {run.halt_time!r}")
        if run.monitor and run.monitor.C0 is not None:
            print(f"C0        = {run.monitor.C0!r}")
        return EXIT_BLOWUP
    print("status    = completed")
    return EXIT_OK


def cmd_classify(config: RunConfig, state_path: str) -> int:
    state = results.read_checkpoint(state_path)
    thresholds = _thresholds(config)
    verdict = classify(state.pair, thresholds)
    results.write_json(Path(config.output.dir) / "verdict.json", verdict)
    print(f"classification = {verdict.classification}")
    print(f"E0 = {verdict.E0!r} (E_gs = {verdict.E_gs!r})")
    print(f"K0 = {verdict.K0!r} (K_gs = {verdict.K_gs!r})")
    return EXIT_OK


def _sweep_member(payload) -> results.SweepRow:
    config, thresholds, lam = payload
    factory = _factory(config, thresholds)
    pair = factory.builder(lam)
    verdict = classify(pair, thresholds, lambda_star=factory.lambda_star)
    run = evolve(initial_state(pair), config.evolve, thresholds)
    return results.SweepRow(
        lam=lam,
        E0=verdict.E0,
        K0=verdict.K0,
        classification=verdict.classification,
        status=run.status,
        halt_time=run.halt_time,
    )


def cmd_sweep(config: RunConfig, lambdas: Sequence[float], workers: int = 1) -> int:
    if len(lambdas) == 0:
        logger.error("Empty lambda grid")
        return EXIT_USAGE
    thresholds = _thresholds(config)
    payloads = [(config, thresholds, float(lam)) for lam in lambdas]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_member, payloads))
    else:
        rows = [_sweep_member(p) for p in payloads]
    results.write_sweep(Path(config.output.dir) / "sweep.csv", rows)
    for row in rows:
        print(f"lambda={row.lam:.6g}  {row.classification:22s} {row.status}")
    return EXIT_OK


def cmd_check_cutoff(config: RunConfig, radii: Sequence[float]) -> int:
    grid = _grid(config)
    all_passed = True
    for R in radii:
        check = check_profile(R)
        lap, bilap = radial_laplacians(build_profile(R, grid))
        inside = grid.r <= R
        on_grid = bool(np.all(lap[inside] == 8.0) and np.all(bilap[inside] == 0.0))
        passed = check.passed and on_grid
        all_passed &= passed
        print(
            f"R={R:g}: laplacian=8 inside: {check.laplacian_exact_inside and on_grid}, "
            f"chi''<=2: {check.chi2_bounded}, 0<=chi'<=2r: {check.chi1_bounded}, "
            f"max laplacian={check.max_laplacian:.6g}"
        )
    table = decay_table(radii)
    print(f"{'R':>8} {'sup|bilap|':>14} {'C':>12} {'ratio':>8}")
    for k, row in enumerate(table):
        print(f"{row['R']:8g} {row['sup_bilaplacian']:14.6e} {row['C']:12.6g} {row['ratio']:8.4f}")
        if k > 0:
            expected = (table[k - 1]["R"] / row["R"]) ** 2
            if abs(row["ratio"] / expected - 1.0) > DECAY_REL_SLACK:
                all_passed = False
    return EXIT_OK if all_passed else 1


def _parse_radii(text: str) -> List[float]:
    try:
        radii = [float(x) for x in text.split(",") if x.strip()]
    except ValueError as e:
        raise UsageError(f"--radii must be comma separated numbers: {e}") from e
    if not radii or any(R <= 0 for R in radii):
        raise UsageError("--radii needs at least one positive radius")
    return radii


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"critnls: {e}", file=sys.stderr)
        return EXIT_USAGE

    logging.basicConfig(
        level=logging.WARNING if args.quiet else LOG_LEVEL,
        format="%(asctime)s - %(levelname)s - %(message)s",
    )
    if args.quiet:
        logging.getLogger().setLevel(logging.WARNING)

    start = time.time()
    logger.info(f"Running critnls {args.command}")
    try:
        config = _effective_config(args)
        if args.command == "ground-state":
            code = cmd_ground_state(config)
        elif args.command == "evolve":
            code = cmd_evolve(config, args.resume)
        elif args.command == "classify":
            code = cmd_classify(config, args.state)
        elif args.command == "sweep":
            if args.steps < 1:
                raise UsageError("--steps must be at least 1")
            lambdas = np.linspace(args.lambda_min, args.lambda_max, args.steps)
            code = cmd_sweep(config, lambdas, args.workers)
        else:
            code = cmd_check_cutoff(config, _parse_radii(args.radii))
    except (ConfigError, UsageError) as e:
        logger.error(str(e))
        return EXIT_USAGE
    except CheckpointError as e:
        logger.error(str(e))
        return EXIT_NO_INPUT
    except (UncertifiedGroundStateError, MaxIterExceededError, StepCollapseError) as e:
        logger.error(f"Ground state unavailable: {e}")
        return EXIT_NOT_CONVERGED
    except CrossTermNotPositiveError as e:
        logger.error(str(e))
        return EXIT_USAGE
    except Exception:
        logger.exception(f"critnls {args.command} failed unexpectedly")
        return 1
    logger.info(f"critnls {args.command} finished with exit code {code} in {time.time() - start:.2f}s")
    return code


if __name__ == "__main__":
    sys.exit(main())
