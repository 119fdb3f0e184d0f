# scripts/reproduce_blowup.py
import argparse
import logging
import os
import sys
import time

# Ensure the src directory is in the Python path
# This allows running the script without installing the package
SCRIPT_DIR = os.path.dirname(os.path.abspath(__file__))
PROJECT_DIR = os.path.dirname(SCRIPT_DIR)
sys.path.insert(0, os.path.join(PROJECT_DIR, "src"))

from critnls.analysis.criteria import (  # noqa: E402
    classify,
    comparison_monitor,
    gaussian_seed,
    lambda_factory,
    thresholds_from_ground_state,
)
from critnls.config import DEFAULT_OUTPUT_DIR, RunConfig, load_run_config  # noqa: E402
from critnls.discretization.radial_grid import RadialGrid  # noqa: E402
from critnls.exceptions import CritNLSError  # noqa: E402
from critnls.solvers.evolution import evolve, initial_state  # noqa: E402
from critnls.solvers.ground_state import solve_ground_state  # noqa: E402
from critnls.storage import results  # noqa: E402

# Setup logging
logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

SUPERCRITICAL_SCALE = 1.5
SUBCRITICAL_SCALE = 0.5


def _run(label: str, pair, config: RunConfig, thresholds, out_dir: str, lambda_star: float) -> str:
    verdict = classify(pair, thresholds, lambda_star=lambda_star)
    logger.info(f"[{label}] E0={verdict.E0:.8g}, K0={verdict.K0:.8g}: {verdict.classification}")
    run = evolve(initial_state(pair), config.evolve, thresholds)
    member_dir = os.path.join(out_dir, label)
    results.write_diagnostics(os.path.join(member_dir, "diagnostics.csv"), run.records)
    results.write_json(os.path.join(member_dir, "verdict.json"), verdict)
    eps = verdict.epsilon_star
    mode = "refined" if eps is not None and 0.0 < eps < 1.0 else "strict"
    report = comparison_monitor(
        run.records, a=2.0 * verdict.E0, b=2.0 * thresholds.C_opt, mode=mode, epsilon_star=eps
    )
    logger.info(
        f"[{label}] status={run.status}, halt_time={run.halt_time}, C0={run.monitor.C0}, "
        f"comparison monitor ({mode}) passed={report.passed}"
    )
    return run.status


def main(config_path=None, out_dir: str = DEFAULT_OUTPUT_DIR) -> int:
    """Ground state, thresholds, supercritical factory data and a subcritical control, end to end."""
    start_time = time.time()
    logger.info("--- Starting blow-up reproduction pipeline ---")

    try:
        config = load_run_config(config_path)
    except CritNLSError:
        logger.exception("Could not load the run configuration.")
        return 64
    if config.evolve.t_max < 5.0:
        config = config.model_copy(update={"evolve": config.evolve.model_copy(update={"t_max": 5.0})})
    grid = RadialGrid.from_config(config.grid)

    # 1. Ground state and thresholds
    try:
        gs = solve_ground_state(config.ground_state, grid)
        results.write_ground_state(os.path.join(out_dir, "ground_state.json"), gs)
        thresholds = thresholds_from_ground_state(gs)
    except CritNLSError:
        logger.exception("Failed to obtain a certified ground state.")
        return 2
    logger.info(f"Thresholds: E_gs={thresholds.E_gs:.10g}, K_gs={thresholds.K_gs:.10g}, C_opt={thresholds.C_opt:.10g}")

    # 2. Factory data
    factory = lambda_factory(gaussian_seed(grid, config.physics), thresholds)

    # 3. Supercritical run and subcritical control
    statuses = {}
    try:
        statuses["supercritical"] = _run(
            "supercritical",
            factory.builder(SUPERCRITICAL_SCALE * factory.lambda_star),
            config,
            thresholds,
            out_dir,
            factory.lambda_star,
        )
        statuses["subcritical"] = _run(
            "subcritical",
            factory.builder(SUBCRITICAL_SCALE * factory.lambda_K),
            config,
            thresholds,
            out_dir,
            factory.lambda_star,
        )
    except CritNLSError:
        logger.exception("Evolution failed.")
        return 1

    end_time = time.time()
    logger.info(f"--- Pipeline finished in {end_time - start_time:.2f} seconds: {statuses} ---")
    expected = statuses == {"supercritical": "blowup", "subcritical": "completed"}
    if not expected:
        logger.warning("Outcome differs from the expected blowup/completed pair.")
    return 0 if expected else 3


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Reproduce the supercritical blow-up and a subcritical control.")
    parser.add_argument("--config", help="TOML run configuration")
    parser.add_argument("--out", default=DEFAULT_OUTPUT_DIR, help="output directory")
    args = parser.parse_args()
    sys.exit(main(args.config, args.out))
