import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Literal, Optional, Union

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .exceptions import ConfigError

# Load environment variables from .env file
load_dotenv()

# Logging
LOG_LEVEL = os.getenv("CRITNLS_LOG_LEVEL", "INFO")

# Output
DEFAULT_OUTPUT_DIR = os.getenv("CRITNLS_OUTPUT_DIR", "runs")

# Default resolution and parallelism
_numeric_env = {
    "CRITNLS_R_MAX": (float, "100"),
    "CRITNLS_N": (int, "4096"),
    "CRITNLS_WORKERS": (int, "1"),
}
_parsed = {}
_bad_vars = []
for _name, (_cast, _default) in _numeric_env.items():
    try:
        _parsed[_name] = _cast(os.getenv(_name, _default))
    except ValueError:
        _bad_vars.append(_name)

if _bad_vars:
    raise EnvironmentError(f"Malformed numeric environment variables: {', '.join(_bad_vars)}")

DEFAULT_R_MAX: float = _parsed["CRITNLS_R_MAX"]
DEFAULT_N: int = _parsed["CRITNLS_N"]
DEFAULT_WORKERS: int = _parsed["CRITNLS_WORKERS"]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GridConfig(_Section):
    r_max: float = Field(DEFAULT_R_MAX, gt=0, description="Truncation radius of the radial mesh.")
    n: int = Field(DEFAULT_N, ge=3, description="Number of interior nodes.")
    outer: Literal["harmonic", "dirichlet"] = Field(
        "harmonic", description="Closure beyond r_max: harmonic r^-2 tail or zero."
    )


class PhysicsParams(_Section):
    sigma: float = Field(1.0, gt=0, description="Coefficient of i w_t.")
    mu: float = Field(1.0, gt=0, description="Linear potential of the w-equation.")
    resonant: bool = Field(False, description="Gauge-transformed system without linear potentials.")

    @model_validator(mode="after")
    def _resonance_fixes_parameters(self) -> "PhysicsParams":
        if self.resonant and (self.sigma != 3.0 or self.mu != 9.0):
            raise ValueError(f"resonant mode requires sigma=3, mu=9 (got sigma={self.sigma}, mu={self.mu})")
        return self

    @classmethod
    def resonance(cls) -> "PhysicsParams":
        return cls(sigma=3.0, mu=9.0, resonant=True)


class EvolveConfig(_Section):
    dt: float = Field(1e-3, gt=0)
    t_max: float = Field(1.0, gt=0)
    sample_every: int = Field(10, ge=1, description="Steps between diagnostics rows.")
    blowup_K_factor: float = Field(10.0, ge=1.0)
    cutoff_R: float = Field(10.0, gt=0, description="Localization radius of the virial weight.")
    checkpoint_every: int = Field(0, ge=0, description="Steps between checkpoints; 0 writes only the final one.")
    amp_guard: float = Field(1e6, gt=0, description="Amplitude overflow guard.")
    invariant_tol: float = Field(1e-9, gt=0, description="Allowed pointwise density drift per nonlinear substep.")
    max_substeps: int = Field(4096, ge=1)


class GroundStateConfig(_Section):
    init: Literal["perturbed-semitrivial", "semitrivial", "gaussian-pair", "file"] = "perturbed-semitrivial"
    perturbation: float = Field(0.05, ge=0, description="Weight of W added to the P-slot of the semitrivial start.")
    path: Optional[str] = Field(None, description="ground_state.json used when init = 'file'.")
    descent_step: float = Field(0.5, gt=0)
    max_iter: int = Field(5000, ge=1)
    tol_rel_K: float = Field(1e-10, gt=0)
    tol_grad: float = Field(1e-10, gt=0, description="Relative H1 size of the projected step that counts as converged.")
    window: int = Field(50, ge=1, description="Iterations the relative K change must stay below tol_rel_K.")
    tol_residual: float = Field(5e-3, gt=0)


class SeedConfig(_Section):
    kind: Literal["gaussian", "file", "factory"] = "gaussian"
    amplitude: float = Field(0.1, gt=0)
    path: Optional[str] = None
    lambda_scale: float = Field(1.5, gt=0, description="Multiple of lambda* used by the factory seed.")


class OutputConfig(_Section):
    dir: str = DEFAULT_OUTPUT_DIR
    plots: bool = False


class RunConfig(_Section):
    grid: GridConfig = GridConfig()
    physics: PhysicsParams = PhysicsParams()
    evolve: EvolveConfig = EvolveConfig()
    ground_state: GroundStateConfig = GroundStateConfig()
    seed: SeedConfig = SeedConfig()
    output: OutputConfig = OutputConfig()


def load_run_config(path: Union[str, Path, None]) -> RunConfig:
    """Reads a TOML run configuration; a missing path yields the defaults."""
    if path is None:
        return RunConfig()
    try:
        with open(path, "rb") as handle:
            raw = tomllib.load(handle)
    except (OSError, tomllib.TOMLDecodeError) as e:
        raise ConfigError(f"Cannot read config {path}: {e}") from e
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"Invalid config {path}: {e}") from e
