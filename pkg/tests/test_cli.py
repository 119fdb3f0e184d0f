import json

import numpy as np
import pytest

from critnls.analysis.criteria import (
    INDETERMINATE,
    SUBCRITICAL,
    SUPERCRITICAL,
    gaussian_seed,
    lambda_factory,
    thresholds_from_ground_state,
)
from critnls.cli.main import (
    EXIT_BLOWUP,
    EXIT_NO_INPUT,
    EXIT_NOT_CONVERGED,
    EXIT_OK,
    EXIT_USAGE,
    main,
)
from critnls.discretization.radial_grid import RadialGrid
from critnls.physics.functionals import kinetic
from critnls.storage import results

RANK = {SUBCRITICAL: 0, INDETERMINATE: 1, SUPERCRITICAL: 2}

SMALL_RUN = """
[grid]
r_max = 30.0
n = 600

[evolve]
t_max = {t_max}
sample_every = 5
"""


def _config(tmp_path, name="run.toml", t_max=0.02, extra=""):
    path = tmp_path / name
    path.write_text(SMALL_RUN.format(t_max=t_max) + extra)
    return str(path)


def test_check_cutoff(capsys):
    assert main(["check-cutoff", "--radii", "10,20,40"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "R=10: laplacian=8 inside: True" in out
    assert "ratio" in out


@pytest.mark.parametrize("radii", ["a,b", "-1,10", ""])
def test_check_cutoff_rejects_bad_radii(radii):
    assert main(["check-cutoff", "--radii", radii]) == EXIT_USAGE


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["integrate"],
        ["sweep", "--lambda-min", "0.1", "--lambda-max", "1.0"],
        ["sweep", "--lambda-min", "0.1", "--lambda-max", "1.0", "--steps", "0"],
        ["classify"],
    ],
)
def test_usage_errors(argv):
    assert main(argv) == EXIT_USAGE


def test_missing_config_file(tmp_path):
    assert main(["ground-state", "--config", str(tmp_path / "absent.toml")]) == EXIT_USAGE


def test_invalid_config(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text("[grid]\nn = 2\n")
    assert main(["ground-state", "--config", str(path)]) == EXIT_USAGE


def test_classify_needs_a_readable_state(tmp_path):
    argv = ["classify", "--config", _config(tmp_path), "--out", str(tmp_path), "--state", str(tmp_path / "none.json")]
    assert main(argv) == EXIT_NO_INPUT


def test_resume_needs_a_readable_checkpoint(tmp_path):
    argv = ["evolve", "--config", _config(tmp_path), "--out", str(tmp_path), "--resume", str(tmp_path / "none.json")]
    assert main(argv) == EXIT_NO_INPUT


def test_ground_state_not_converged(tmp_path):
    config = _config(tmp_path, extra="\n[ground_state]\nmax_iter = 1\n")
    assert main(["ground-state", "--config", config, "--out", str(tmp_path)]) == EXIT_NOT_CONVERGED
    assert not (tmp_path / "ground_state.json").exists()


def test_ground_state_is_reproducible(tmp_path, capsys):
    config = _config(tmp_path)
    assert main(["ground-state", "--config", config, "--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(["ground-state", "--config", config, "--out", str(tmp_path / "b")]) == EXIT_OK
    first = (tmp_path / "a" / "ground_state.json").read_bytes()
    assert first == (tmp_path / "b" / "ground_state.json").read_bytes()
    document = json.loads(first)
    assert document["certified"]
    assert document["S"] <= 8.0 * np.pi**2 / 27.0 + 1e-2
    assert "C_opt" in capsys.readouterr().out


def test_evolve_gaussian(tmp_path):
    out = tmp_path / "out"
    assert main(["evolve", "--config", _config(tmp_path), "--out", str(out), "--plots"]) == EXIT_OK
    records = results.read_diagnostics(out / "diagnostics.csv")
    assert len(records) == 5
    assert (out / "checkpoint.json").exists()
    assert (out / "K.svg").exists()
    # no stored ground state, so no verdict
    assert not (out / "verdict.json").exists()
    E = np.array([rec.E for rec in records])
    assert np.max(np.abs(E - E[0])) <= 1e-8 * abs(E[0])


def test_resume_continues_the_same_trajectory(tmp_path):
    full = tmp_path / "full"
    half = tmp_path / "half"
    resumed = tmp_path / "resumed"
    long_config = _config(tmp_path, "long.toml", t_max=0.04)
    short_config = _config(tmp_path, "short.toml", t_max=0.02)
    assert main(["evolve", "--config", long_config, "--out", str(full)]) == EXIT_OK
    assert main(["evolve", "--config", short_config, "--out", str(half)]) == EXIT_OK
    argv = ["evolve", "--config", long_config, "--out", str(resumed), "--resume", str(half / "checkpoint.json")]
    assert main(argv) == EXIT_OK

    reference = results.read_diagnostics(full / "diagnostics.csv")
    continued = results.read_diagnostics(resumed / "diagnostics.csv")
    assert len(continued) == 5
    for expected, actual in zip(reference[4:], continued):
        assert actual.t == pytest.approx(expected.t, rel=1e-12)
        assert actual.E == pytest.approx(expected.E, rel=1e-12)
        assert actual.K == pytest.approx(expected.K, rel=1e-12)
        assert actual.V == pytest.approx(expected.V, rel=1e-12)


def test_classify_stored_state(tmp_path, capsys):
    out = tmp_path / "out"
    config = _config(tmp_path)
    assert main(["evolve", "--config", config, "--out", str(out)]) == EXIT_OK
    assert main(["classify", "--config", config, "--out", str(out), "--state", str(out / "checkpoint.json")]) == EXIT_OK
    verdict = json.loads((out / "verdict.json").read_text())
    assert verdict["classification"] == "subcritical-region"
    assert (out / "ground_state.json").exists()
    assert "classification = subcritical-region" in capsys.readouterr().out


FACTORY_SEED = '\n[seed]\nkind = "factory"\nlambda_scale = 1.5\n'


def _small_factory(out):
    thresholds = thresholds_from_ground_state(
        results.ground_state_from_document(results.read_ground_state(out / "ground_state.json"))
    )
    return lambda_factory(gaussian_seed(RadialGrid(r_max=30.0, n=600)), thresholds)


def test_evolve_factory_seed(tmp_path):
    out = tmp_path / "out"
    # t_max is far below the blow-up time
    config = _config(tmp_path, extra=FACTORY_SEED)
    assert main(["evolve", "--config", config, "--out", str(out)]) == EXIT_OK
    verdict = json.loads((out / "verdict.json").read_text())
    factory = _small_factory(out)
    assert verdict["classification"] == "supercritical-blowup"
    assert verdict["lambda_star"] == pytest.approx(factory.lambda_star, rel=1e-12)
    seed_K = kinetic(gaussian_seed(RadialGrid(r_max=30.0, n=600)))
    assert verdict["K0"] == pytest.approx((1.5 * factory.lambda_star) ** 2 * seed_K, rel=1e-10)
    assert verdict["K0"] > verdict["K_gs"]
    assert 0.0 < verdict["epsilon_star"] < 1.0

    functionals = json.loads((out / "report.json").read_text())
    assert functionals["K"] == pytest.approx(verdict["K0"], rel=1e-12)
    assert functionals["E"] == pytest.approx(verdict["E0"], rel=1e-12)


def test_resumed_factory_run_classifies_the_initial_data(tmp_path):
    first = tmp_path / "first"
    resumed = tmp_path / "resumed"
    assert main(["evolve", "--config", _config(tmp_path, extra=FACTORY_SEED), "--out", str(first)]) == EXIT_OK
    long_config = _config(tmp_path, "long.toml", t_max=0.04, extra=FACTORY_SEED)
    argv = ["evolve", "--config", long_config, "--out", str(resumed), "--resume", str(first / "checkpoint.json")]
    assert main(argv) == EXIT_OK
    expected = json.loads((first / "verdict.json").read_text())
    actual = json.loads((resumed / "verdict.json").read_text())
    assert actual["K0"] == pytest.approx(expected["K0"], rel=1e-12)
    assert actual["E0"] == pytest.approx(expected["E0"], rel=1e-12)
    assert actual["lambda_star"] == pytest.approx(expected["lambda_star"], rel=1e-12)
    assert json.loads((resumed / "report.json").read_text()) == json.loads((first / "report.json").read_text())


@pytest.mark.slow
def test_evolve_factory_seed_blows_up(tmp_path, capsys):
    out = tmp_path / "out"
    config = tmp_path / "run.toml"
    config.write_text("[grid]\nr_max = 100.0\nn = 4096\n\n[evolve]\nt_max = 5.0\n" + FACTORY_SEED)
    assert main(["evolve", "--config", str(config), "--out", str(out)]) == EXIT_BLOWUP
    assert "status    = blowup" in capsys.readouterr().out
    assert json.loads((out / "verdict.json").read_text())["lambda_star"] is not None


def test_ground_state_writes_functional_report(tmp_path):
    out = tmp_path / "out"
    assert main(["ground-state", "--config", _config(tmp_path), "--out", str(out)]) == EXIT_OK
    document = json.loads((out / "ground_state.json").read_text())
    functionals = json.loads((out / "report.json").read_text())
    assert functionals["K"] == pytest.approx(document["K"], rel=1e-12)
    assert functionals["S"] == pytest.approx(document["S"], rel=1e-10)


def test_sweep(tmp_path):
    out = tmp_path / "out"
    argv = ["sweep", "--config", _config(tmp_path), "--out", str(out)]
    argv += ["--lambda-min", "0.05", "--lambda-max", "0.2", "--steps", "3"]
    assert main(argv) == EXIT_OK
    lines = (out / "sweep.csv").read_text().splitlines()
    assert lines[0] == "lambda,E0,K0,classification,status,halt_time"
    assert len(lines) == 4
    assert all(",subcritical-region,completed," in line for line in lines[1:])


def test_sweep_across_lambda_star_in_parallel(tmp_path):
    config = _config(tmp_path)
    assert main(["ground-state", "--config", config, "--out", str(tmp_path / "serial")]) == EXIT_OK
    factory = _small_factory(tmp_path / "serial")
    grid_args = ["--lambda-min", repr(0.3 * factory.lambda_K), "--lambda-max", repr(1.5 * factory.lambda_star)]
    grid_args += ["--steps", "5"]
    for name, workers in (("serial", "1"), ("parallel", "2")):
        argv = ["sweep", "--config", config, "--out", str(tmp_path / name), "--workers", workers] + grid_args
        assert main(argv) == EXIT_OK

    serial = (tmp_path / "serial" / "sweep.csv").read_text()
    assert (tmp_path / "parallel" / "sweep.csv").read_text() == serial
    classes = [line.split(",")[3] for line in serial.splitlines()[1:]]
    assert classes[0] == "subcritical-region"
    assert classes[-1] == "supercritical-blowup"
    ranks = [RANK[c] for c in classes]
    assert ranks == sorted(ranks)
