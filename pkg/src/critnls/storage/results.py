import csv
import json
import logging
from pathlib import Path
from typing import Iterable, List, Optional, Tuple, Type, TypeVar, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from ..config import PhysicsParams
from ..discretization.radial_grid import RadialGrid
from ..exceptions import CheckpointError
from ..physics.functionals import FieldPair, kinetic, n_quartic
from ..solvers.evolution import DiagnosticsRecord, SimState
from ..solvers.ground_state import GroundStateResult

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
Doc = TypeVar("Doc", bound=BaseModel)

DIAGNOSTICS_HEADER = ["t", "E", "M", "K", "P", "tau", "V", "Vprime", "Rloc", "amp_max"]
SWEEP_HEADER = ["lambda", "E0", "K0", "classification", "status", "halt_time"]


class GroundStateDocument(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    I: float
    lam: float = Field(alias="lambda")
    C_opt: float
    S: float
    residual_P: float
    residual_Q: float
    iterations: int
    r: List[float]
    P: List[float]
    Q: List[float]
    r_max: float
    n: int
    outer: str = "harmonic"
    K: float
    N: float
    certified: bool
    v: List[float]
    z: List[float]


class CheckpointDocument(BaseModel):
    t: float
    sigma: float
    mu: float
    resonant: bool
    r: List[float]
    u_re: List[float]
    u_im: List[float]
    w_re: List[float]
    w_im: List[float]
    step: int
    r_max: float
    n: int
    outer: str = "harmonic"
    origin_u_re: Optional[List[float]] = None
    origin_u_im: Optional[List[float]] = None
    origin_w_re: Optional[List[float]] = None
    origin_w_im: Optional[List[float]] = None
    monitor_tail: List[Tuple[int, float]] = Field(default_factory=list)


class SweepRow(BaseModel):
    lam: float = Field(alias="lambda")
    E0: float
    K0: float
    classification: str
    status: str
    halt_time: Optional[float] = None

    model_config = ConfigDict(populate_by_name=True)


# --- generic JSON -------------------------------------------------------------


def write_json(path: PathLike, document: BaseModel) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(document.model_dump(by_alias=True), handle, indent=2)
        handle.write("\n")
    logger.info(f"Wrote {path}")
    return path


def read_json(path: PathLike, model: Type[Doc]) -> Doc:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            raw = json.load(handle)
        return model.model_validate(raw)
    except (OSError, ValueError, ValidationError) as e:
        raise CheckpointError(f"Cannot read {model.__name__} from {path}: {e}") from e


# --- ground state ---------------------------------------------------------------


def ground_state_document(result: GroundStateResult) -> GroundStateDocument:
    grid = result.grid
    return GroundStateDocument(
        I=result.I_value,
        lam=result.lam,
        C_opt=result.C_opt,
        S=result.S_value,
        residual_P=result.residual_P,
        residual_Q=result.residual_Q,
        iterations=result.iterations,
        r=grid.r.tolist(),
        P=result.P0.tolist(),
        Q=result.Q0.tolist(),
        r_max=grid.r_max,
        n=grid.n,
        outer=grid.outer,
        K=kinetic(result.pair),
        N=n_quartic(result.pair),
        certified=result.certified,
        v=result.v.tolist(),
        z=result.z.tolist(),
    )


def write_ground_state(path: PathLike, result: GroundStateResult) -> Path:
    return write_json(path, ground_state_document(result))


def read_ground_state(path: Optional[PathLike]) -> GroundStateDocument:
    if path is None:
        raise CheckpointError("No ground-state file given")
    return read_json(path, GroundStateDocument)


def ground_state_from_document(doc: GroundStateDocument) -> GroundStateResult:
    grid = RadialGrid(r_max=doc.r_max, n=doc.n, outer=doc.outer)
    if len(doc.P) != grid.n or len(doc.v) != grid.n:
        raise CheckpointError(f"Ground-state arrays do not match n={grid.n}")
    return GroundStateResult(
        pair=FieldPair(np.asarray(doc.P), np.asarray(doc.Q), grid),
        normalized=FieldPair(np.asarray(doc.v), np.asarray(doc.z), grid),
        I_value=doc.I,
        lam=doc.lam,
        C_opt=doc.C_opt,
        S_value=doc.S,
        residual_P=doc.residual_P,
        residual_Q=doc.residual_Q,
        iterations=doc.iterations,
        certified=doc.certified,
    )


# --- checkpoints ----------------------------------------------------------------


def _split(values) -> Tuple[List[float], List[float]]:
    values = np.asarray(values, dtype=complex)
    return values.real.tolist(), values.imag.tolist()


def write_checkpoint(path: PathLike, state: SimState) -> Path:
    pair = state.pair
    grid = pair.grid
    u = np.asarray(pair.u, dtype=complex)
    w = np.asarray(pair.w, dtype=complex)
    origin = {}
    if state.origin is not None:
        origin["origin_u_re"], origin["origin_u_im"] = _split(state.origin.u)
        origin["origin_w_re"], origin["origin_w_im"] = _split(state.origin.w)
    document = CheckpointDocument(
        t=state.t,
        sigma=pair.params.sigma,
        mu=pair.params.mu,
        resonant=pair.params.resonant,
        r=grid.r.tolist(),
        u_re=u.real.tolist(),
        u_im=u.imag.tolist(),
        w_re=w.real.tolist(),
        w_im=w.imag.tolist(),
        step=state.step_count,
        r_max=grid.r_max,
        n=grid.n,
        outer=grid.outer,
        monitor_tail=[(int(s), float(K)) for s, K in state.monitor_tail],
        **origin,
    )
    return write_json(path, document)


def read_checkpoint(path: PathLike) -> SimState:
    doc = read_json(path, CheckpointDocument)
    try:
        grid = RadialGrid(r_max=doc.r_max, n=doc.n, outer=doc.outer)
        params = PhysicsParams(sigma=doc.sigma, mu=doc.mu, resonant=doc.resonant)
        u = np.asarray(doc.u_re) + 1j * np.asarray(doc.u_im)
        w = np.asarray(doc.w_re) + 1j * np.asarray(doc.w_im)
        pair = FieldPair(u, w, grid, params)
        origin = None
        if doc.origin_u_re is not None:
            origin = FieldPair(
                np.asarray(doc.origin_u_re) + 1j * np.asarray(doc.origin_u_im or []),
                np.asarray(doc.origin_w_re or []) + 1j * np.asarray(doc.origin_w_im or []),
                grid,
                params,
            )
    except (ValueError, ValidationError) as e:
        raise CheckpointError(f"Checkpoint {path} is inconsistent: {e}") from e
    tail = tuple((int(s), float(K)) for s, K in doc.monitor_tail)
    return SimState(t=doc.t, pair=pair, step_count=doc.step, origin=origin, monitor_tail=tail)


# --- CSV streams ----------------------------------------------------------------


def _record_row(record: DiagnosticsRecord) -> List[str]:
    values = (
        record.t,
        record.E,
        record.M,
        record.K,
        record.P_func,
        record.tau,
        record.V,
        record.V_prime,
        record.R_loc,
        record.amp_max,
    )
    return [repr(float(v)) for v in values]


def write_diagnostics(path: PathLike, records: Iterable[DiagnosticsRecord]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(DIAGNOSTICS_HEADER)
        for record in records:
            writer.writerow(_record_row(record))
    logger.info(f"Wrote {path}")
    return path


def read_diagnostics(path: PathLike) -> List[DiagnosticsRecord]:
    try:
        with open(path, "r", newline="", encoding="utf-8") as handle:
            reader = csv.reader(handle)
            header = next(reader)
            if header != DIAGNOSTICS_HEADER:
                raise ValueError(f"unexpected header {header}")
            return [DiagnosticsRecord(*(float(x) for x in row)) for row in reader if row]
    except (OSError, ValueError, StopIteration) as e:
        raise CheckpointError(f"Cannot read diagnostics from {path}: {e}") from e


def write_sweep(path: PathLike, rows: Iterable[SweepRow]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(SWEEP_HEADER)
        for row in rows:
            writer.writerow(
                [
                    repr(float(row.lam)),
                    repr(float(row.E0)),
                    repr(float(row.K0)),
                    row.classification,
                    row.status,
                    "" if row.halt_time is None else repr(float(row.halt_time)),
                ]
            )
    logger.info(f"Wrote {path}")
    return path
