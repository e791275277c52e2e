from typing import Dict, List, Literal, Optional

from pydantic import AliasChoices, BaseModel, ConfigDict, Field, field_validator, model_validator

from solver.cases import COMPACT, Model, case_names
from solver.experiments import GridFamily, default_dt_rule
from solver.grid import StaggeredGrid2D
from solver.stokes import LinearSolverKind, Scheme

DtRule = Literal["inverse_square", "inverse"]

STEP_RTOL = 1e-9


# Run configurations
class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    case: str = "example1"
    scheme: Scheme = Scheme.RMAC
    model: Optional[Model] = None  # None: the case's own model
    uniform: bool = False
    ratio: float = Field(1.5, ge=1.0)
    seed: int = 7
    nx: int = Field(10, ge=2)
    ny: Optional[int] = Field(None, ge=2)
    dt: Optional[float] = Field(None, gt=0.0)
    dt_rule: DtRule = "inverse_square"
    t_final: float = Field(1.0, gt=0.0, validation_alias=AliasChoices("t_final", "T"))
    mu: float = Field(1.0, gt=0.0)
    lam: float = Field(1.0, validation_alias=AliasChoices("lam", "lambda"), serialization_alias="lambda")
    solver_tol: Optional[float] = Field(None, ge=1e-14)
    picard_tol: Optional[float] = Field(None, gt=0.0)
    picard_max_iters: Optional[int] = Field(None, ge=1)
    linear_solver: Optional[LinearSolverKind] = None
    out: Optional[str] = None

    @field_validator("case")
    @classmethod
    def known_case(cls, value: str) -> str:
        if value not in case_names():
            raise ValueError(f"unknown case '{value}', expected one of {case_names()}")
        return value

    @model_validator(mode="after")
    def consistent_time_grid(self):
        dt = self.resolved_dt(self.nx)
        steps = round(self.t_final / dt)
        if steps < 1 or abs(steps * dt - self.t_final) > STEP_RTOL * max(1.0, self.t_final):
            raise ValueError(f"T={self.t_final} is not an integer multiple of dt={dt}")
        return self

    @property
    def n_y(self) -> int:
        return self.nx if self.ny is None else self.ny

    def resolved_dt(self, n: int) -> float:
        if self.dt is not None:
            return self.dt
        return default_dt_rule(n) if self.dt_rule == "inverse_square" else 1.0 / n

    def grid_family(self) -> GridFamily:
        return GridFamily(uniform=self.uniform, ratio=self.ratio, seed=self.seed)

    def build_grid(self) -> StaggeredGrid2D:
        return self.grid_family().build(self.nx, self.n_y)

    def flat(self) -> Dict[str, object]:
        """Resolved values in config-file form"""
        values = {}
        for key, value in self.model_dump(mode="json", by_alias=True).items():
            if value is None:
                continue
            values[key] = " ".join(str(v) for v in value) if isinstance(value, list) else value
        return values


class _ManufacturedOnly(RunConfig):
    case: str

    @field_validator("case")
    @classmethod
    def needs_exact_solution(cls, value: str) -> str:
        if value == COMPACT:
            raise ValueError("the compact case has no exact solution; use the conserve command")
        return value


class SolveConfig(_ManufacturedOnly):
    snapshot: List[int] = []

    @field_validator("snapshot")
    @classmethod
    def positive_steps(cls, value: List[int]) -> List[int]:
        if any(n < 1 for n in value):
            raise ValueError("snapshot steps must be >= 1")
        return sorted(set(value))


class ConvergeConfig(_ManufacturedOnly):
    levels: List[int] = [5, 10, 20, 40, 80]
    compare: bool = False
    max_workers: Optional[int] = Field(None, ge=1)

    @field_validator("levels")
    @classmethod
    def refining_levels(cls, value: List[int]) -> List[int]:
        if len(value) < 2:
            raise ValueError("at least two levels are required")
        if any(n < 2 for n in value) or any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError(f"levels must be strictly increasing integers >= 2, got {value}")
        return value

    @model_validator(mode="after")
    def dt_from_rule(self):
        if self.dt is not None:
            raise ValueError("dt is set per level by dt_rule in a convergence study")
        for n in self.levels:
            dt = self.resolved_dt(n)
            steps = round(self.t_final / dt)
            if abs(steps * dt - self.t_final) > STEP_RTOL * max(1.0, self.t_final):
                raise ValueError(f"T={self.t_final} is not an integer multiple of dt={dt} at level {n}")
        return self


class RobustConfig(_ManufacturedOnly):
    nx: int = Field(20, ge=2)
    axis: Literal["lambda", "mu"] = "lambda"
    values: Optional[List[float]] = None
    max_workers: Optional[int] = Field(None, ge=1)

    @field_validator("values")
    @classmethod
    def non_empty(cls, value: Optional[List[float]]) -> Optional[List[float]]:
        if value is not None and not value:
            raise ValueError("values must not be empty")
        return value

    @model_validator(mode="after")
    def positive_mu_values(self):
        if self.axis == "mu" and self.values and min(self.values) <= 0.0:
            raise ValueError("mu values must be positive")
        return self


class ConserveConfig(RunConfig):
    case: str = COMPACT
    nx: int = Field(12, ge=5)
    dt: Optional[float] = Field(0.1, gt=0.0)
    amplitude: float = Field(1.0, gt=0.0)
    stream_seed: int = 11


# Responses
class ErrorRecordResponse(BaseModel):
    case: str
    scheme: str
    model: str
    nx: int
    ny: int
    dt: float
    lam: float
    mu: float
    t_final: float
    eu_l2: Optional[float] = None
    ep_l2: Optional[float] = None
    eu_linf: Optional[float] = None
    ep_linf: Optional[float] = None
    rate_u: Optional[float] = None
    rate_p: Optional[float] = None
    rate_u_linf: Optional[float] = None
    rate_p_linf: Optional[float] = None
    wallclock_s: float
    error: Optional[str] = None

    class Config:
        from_attributes = True

    @field_validator("eu_l2", "ep_l2", "eu_linf", "ep_linf", mode="before")
    @classmethod
    def nan_to_none(cls, value):
        return None if value is None or value != value else value


class ConservationSummary(BaseModel):
    model: str
    ok: bool
    steps: int
    energy_law_checked: bool
    initial_energy: float
    final_energy: float
    max_divergence: float
    max_momentum_budget: float
    max_angular_budget: float
    flags: Dict[str, List[int]]


class SolveResponse(BaseModel):
    record: ErrorRecordResponse
    conservation: ConservationSummary
    files: List[str] = []


class StudyResponse(BaseModel):
    records: List[ErrorRecordResponse]
    tables: Dict[str, str] = {}
    files: List[str] = []


class ConserveResponse(BaseModel):
    conservation: ConservationSummary
    record: Optional[ErrorRecordResponse] = None
    files: List[str] = []


class CaseInfo(BaseModel):
    name: str
    default_model: str
    has_exact_solution: bool
    description: str
