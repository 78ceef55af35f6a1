"""
Pydantic models for the replica analysis of regularized least-squares recovery.

Covers the sampling ensemble, the scalar penalty and source prior, the system
configuration handed to the solvers, the solver results, the Monte Carlo
configuration/report, the sweep description and the JSON config file schema.
"""

import math
from typing import Any, Callable, List, Literal, Optional, Tuple, TypedDict, Union

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    field_validator,
    model_validator,
)

EnsembleKind = Literal["iid", "projector", "tabulated"]
PenaltyKind = Literal["l2", "l1", "l0", "custom"]
BuiltinPenalty = Literal["l2", "l1", "l0"]
DistortionName = Literal["squared", "absolute"]
SolverName = Literal["rs", "rsb1", "sim"]

RsStatus = Literal[
    "Converged", "NoSolution", "InvalidNegativeDiscriminant", "MaxItersExceeded"
]
RsbStatus = Literal[
    "Converged",
    "NoSolution",
    "InvalidNegativeDiscriminant",
    "MaxItersExceeded",
    "MuRootNotBracketed",
]

# Statuses in the order a failed multi-start reports them
FAILURE_PRECEDENCE: Tuple[str, ...] = (
    "InvalidNegativeDiscriminant",
    "NoSolution",
    "MuRootNotBracketed",
    "MaxItersExceeded",
)


# TypedDicts for CSV rows and tool-server responses
class PredictionRow(TypedDict):
    """One row of predict/sweep output"""

    penalty: str
    ensemble: str
    solver: str
    minimized: bool
    lam: float
    rate: float
    chi: float
    q: float
    p: float
    mu: float
    xi: float
    f: float
    w: float
    D: float
    D_dB: float
    status: str
    iterations: float
    dB_reference: float
    gate_delta: float


class TrialRow(TypedDict):
    """One row of simulate output"""

    trial: int
    distortion: float


# ============================================================================
# Ensemble, penalty, prior
# ============================================================================


class EnsembleSpec(BaseModel):
    """Random-matrix ensemble of the sampling matrix, described by its Gramian spectrum"""

    kind: EnsembleKind
    r: float = Field(gt=0, description="compression rate n/k")
    # (eigenvalue, probability mass) pairs, tabulated ensembles only
    spectrum: List[Tuple[float, float]] = Field(default_factory=list)

    model_config = ConfigDict(frozen=True)

    @field_validator("r")
    @classmethod
    def _finite_rate(cls, r: float) -> float:
        if not math.isfinite(r):
            raise ValueError("r must be finite")
        return r

    @model_validator(mode="after")
    def _check_kind(self) -> "EnsembleSpec":
        if self.kind == "projector" and self.r < 1.0:
            raise ValueError("projector ensemble needs r >= 1 (k <= n orthogonal rows)")
        if self.kind == "tabulated":
            if not self.spectrum:
                raise ValueError("tabulated ensemble needs a non-empty spectrum")
            masses = [m for _, m in self.spectrum]
            if any(m < 0 for m in masses):
                raise ValueError("spectral masses must be non-negative")
            if abs(math.fsum(masses) - 1.0) > 1e-12:
                raise ValueError(
                    f"spectral masses must sum to 1, got {math.fsum(masses):.15f}"
                )
            if any(t < 0 for t, _ in self.spectrum):
                raise ValueError("Gramian eigenvalues must be non-negative")
        elif self.spectrum:
            raise ValueError(f"spectrum given for non-tabulated ensemble '{self.kind}'")
        return self

    @property
    def mean(self) -> float:
        """Spectral mean E t (the limit of R at 0)"""
        if self.kind == "tabulated":
            return math.fsum(t * m for t, m in self.spectrum)
        return 1.0


class PenaltySpec(BaseModel):
    """Scalar, decoupled penalty u(v) of the reconstruction objective"""

    kind: PenaltyKind
    function: Optional[Callable[[float], float]] = Field(default=None, exclude=True)

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def _check_function(self) -> "PenaltySpec":
        if self.kind == "custom":
            if self.function is None:
                raise ValueError("custom penalty needs a function")
            if self.function(0.0) != 0.0:
                raise ValueError("custom penalty must satisfy u(0) = 0")
        elif self.function is not None:
            raise ValueError(f"built-in penalty '{self.kind}' takes no function")
        return self


class SourcePrior(BaseModel):
    """Sparse-Gaussian source: 0 w.p. 1-s, standard normal w.p. s"""

    s: float = Field(ge=0.0, le=1.0)

    model_config = ConfigDict(frozen=True)

    @property
    def second_moment(self) -> float:
        return self.s


class ChannelParams(BaseModel):
    """Effective parameters of the decoupled scalar channel"""

    xi: float = Field(gt=0)
    f: float = Field(ge=0)
    w: float = Field(default=0.0, ge=0)

    model_config = ConfigDict(frozen=True)


Distortion = Union[DistortionName, Callable[..., Any]]


class SystemConfig(BaseModel):
    """Everything the replica predictions depend on"""

    ensemble: EnsembleSpec
    penalty: PenaltySpec
    prior: SourcePrior
    lam: float = Field(gt=0, alias="lambda")
    lam0: float = Field(ge=0, alias="lambda0")
    distortion: Distortion = "squared"

    model_config = ConfigDict(frozen=True, populate_by_name=True)


# ============================================================================
# Solver options and results
# ============================================================================


class RsOptions(BaseModel):
    """Damped fixed-point iteration settings for the RS system"""

    damping: float = Field(default=0.5, gt=0, le=1)
    min_damping: float = Field(default=1.0 / 64, gt=0, le=1)
    oscillation_window: int = Field(default=6, ge=2)
    tol: float = Field(default=1e-10, gt=0)
    max_iters: int = Field(default=10_000, ge=1)
    init: Tuple[float, float] = (0.5, 0.5)
    quadrature_n: int = Field(default=96, ge=2)
    distinct_tol: float = Field(default=1e-6, gt=0)
    divergence_bound: float = Field(default=1e8, gt=0)
    accuracy_gate: bool = True
    gate_tol: float = Field(default=1e-7, gt=0)

    model_config = ConfigDict(frozen=True, extra="forbid")


class RsbOptions(BaseModel):
    """Outer iteration and Parisi-parameter search settings for the 1RSB system"""

    damping: float = Field(default=0.5, gt=0, le=1)
    min_damping: float = Field(default=1.0 / 64, gt=0, le=1)
    oscillation_window: int = Field(default=6, ge=2)
    tol: float = Field(default=1e-8, gt=0)
    max_iters: int = Field(default=2_000, ge=1)
    init: Optional[Tuple[float, float, float]] = None
    quadrature_n: int = Field(default=96, ge=2)
    mu_bounds: Tuple[float, float] = (1e-4, 1e4)
    mu_grid_points: int = Field(default=64, ge=4)
    mu_rtol: float = Field(default=1e-10, gt=0)
    mu_warm_start: bool = True
    force_symmetric: bool = False
    degenerate_p: float = Field(default=1e-12, ge=0)
    distinct_tol: float = Field(default=1e-6, gt=0)
    divergence_bound: float = Field(default=1e8, gt=0)
    accuracy_gate: bool = True
    gate_tol: float = Field(default=1e-6, gt=0)

    model_config = ConfigDict(frozen=True, extra="forbid")


class RsSolution(BaseModel):
    """Replica-symmetric fixed point and its predicted distortion"""

    chi: float = math.nan
    q: float = math.nan
    xi: float = math.nan
    f: float = math.nan
    D: float = math.nan
    status: RsStatus
    iterations: int = 0
    residual: float = math.nan
    gate_delta: float = math.nan
    gate_residual: float = math.nan
    init: Tuple[float, float] = (math.nan, math.nan)
    alternatives: List["RsSolution"] = Field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status == "Converged"


class RsbSolution(BaseModel):
    """One-step RSB fixed point and its predicted distortion"""

    chi: float = math.nan
    q: float = math.nan
    p: float = math.nan
    mu: float = math.nan
    rho: float = math.nan
    xi: float = math.nan
    f: float = math.nan
    w: float = math.nan
    D: float = math.nan
    status: RsbStatus
    iterations: int = 0
    residual: float = math.nan
    gate_delta: float = math.nan
    gate_residual: float = math.nan
    init: Tuple[float, float, float] = (math.nan, math.nan, math.nan)
    alternatives: List["RsbSolution"] = Field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status == "Converged"


RsSolution.model_rebuild()
RsbSolution.model_rebuild()


# ============================================================================
# Monte Carlo
# ============================================================================


class SimConfig(BaseModel):
    """Finite-size sampling system and reconstruction"""

    n: int = Field(gt=0)
    r: float = Field(gt=0)
    ensemble: Literal["iid", "projector"] = "iid"
    penalty: PenaltySpec
    prior: SourcePrior
    lam: float = Field(gt=0, alias="lambda")
    lam0: float = Field(ge=0, alias="lambda0")
    trials: int = Field(default=1, ge=1)
    seed: int = Field(default=0, ge=0, lt=2**64)
    distortion: Distortion = "squared"

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    @model_validator(mode="after")
    def _check_k(self) -> "SimConfig":
        if self.k < 1:
            raise ValueError(f"k = round(n/r) must be >= 1 (n={self.n}, r={self.r})")
        if self.ensemble == "projector" and self.k > self.n:
            raise ValueError("projector ensemble needs k <= n")
        return self

    @property
    def k(self) -> int:
        return int(round(self.n / self.r))


class SimReport(BaseModel):
    """Trial-averaged empirical distortion"""

    mean: float
    stderr: float
    distortions: List[float]
    iterations: List[int]
    mean_iterations: float
    n: int
    k: int
    trials: int
    seed: int


# ============================================================================
# Sweeps and the JSON config file
# ============================================================================


def _expand_grid(value: Any) -> Any:
    """Accept either an explicit list or {start, stop, step}"""
    if isinstance(value, dict):
        unknown = set(value) - {"start", "stop", "step"}
        if unknown:
            raise ValueError(f"unknown grid keys: {sorted(unknown)}")
        start, stop, step = float(value["start"]), float(value["stop"]), float(value["step"])
        if step <= 0:
            raise ValueError("grid step must be positive")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + i * step, 12) for i in range(count)]
    return value


def _strictly_increasing(grid: List[float]) -> List[float]:
    if not grid:
        raise ValueError("grid must not be empty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("grid must be strictly increasing")
    return grid


class LambdaMinimization(BaseModel):
    """Inner λ grid plus optional golden-section refinement"""

    grid: List[float]
    refine: bool = True

    model_config = ConfigDict(extra="forbid")

    @field_validator("grid", mode="before")
    @classmethod
    def _expand(cls, value: Any) -> Any:
        return _expand_grid(value)

    @field_validator("grid")
    @classmethod
    def _increasing(cls, grid: List[float]) -> List[float]:
        if any(v <= 0 for v in grid):
            raise ValueError("λ grid must be positive")
        return _strictly_increasing(grid)


class SweepSpec(BaseModel):
    """One CSV row per grid point per solver (per penalty and ensemble)"""

    variable: Literal["lambda", "rate"]
    grid: List[float]
    solvers: List[SolverName] = Field(default_factory=lambda: ["rs"])
    minimize_lambda: Optional[LambdaMinimization] = None
    penalties: Optional[List[BuiltinPenalty]] = None
    ensembles: Optional[List[Literal["iid", "projector"]]] = None

    model_config = ConfigDict(extra="forbid")

    @field_validator("grid", mode="before")
    @classmethod
    def _expand(cls, value: Any) -> Any:
        return _expand_grid(value)

    @field_validator("grid")
    @classmethod
    def _increasing(cls, grid: List[float]) -> List[float]:
        return _strictly_increasing(grid)

    @field_validator("solvers")
    @classmethod
    def _non_empty(cls, solvers: List[SolverName]) -> List[SolverName]:
        if not solvers:
            raise ValueError("solver set must not be empty")
        return solvers

    @model_validator(mode="after")
    def _check_minimization(self) -> "SweepSpec":
        if self.minimize_lambda is not None and self.variable == "lambda":
            raise ValueError("λ-minimization needs variable 'rate'")
        return self


class QuadratureSettings(BaseModel):
    N: int = Field(default=96, ge=2)

    model_config = ConfigDict(extra="forbid")


class SimSettings(BaseModel):
    n: int = Field(gt=0)
    trials: int = Field(default=1, ge=1)
    seed: int = Field(default=0, ge=0, lt=2**64)

    model_config = ConfigDict(extra="forbid")


class RunConfig(BaseModel):
    """Schema of the JSON config file read by the CLI and the tool server"""

    ensemble: EnsembleKind = "iid"
    r: float = Field(gt=0)
    spectrum: Optional[str] = None
    penalty: BuiltinPenalty
    s: float = Field(ge=0, le=1)
    lam: float = Field(gt=0, alias="lambda")
    lam0: float = Field(ge=0, alias="lambda0")
    distortion: DistortionName = "squared"
    solver: List[Literal["rs", "rsb1"]] = Field(default_factory=lambda: ["rs"])
    quadrature: QuadratureSettings = Field(default_factory=QuadratureSettings)
    rs: Optional[RsOptions] = None
    rsb: Optional[RsbOptions] = None
    sweep: Optional[SweepSpec] = None
    sim: Optional[SimSettings] = None

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    @field_validator("solver")
    @classmethod
    def _non_empty(cls, solver: List[str]) -> List[str]:
        if not solver:
            raise ValueError("solver set must not be empty")
        return solver

    @model_validator(mode="after")
    def _check_spectrum(self) -> "RunConfig":
        if (self.ensemble == "tabulated") != (self.spectrum is not None):
            raise ValueError("'spectrum' is required for, and only for, ensemble 'tabulated'")
        return self

    def rs_options(self) -> RsOptions:
        base = self.rs or RsOptions()
        return base.model_copy(update={"quadrature_n": self.quadrature.N})

    def rsb_options(self) -> RsbOptions:
        base = self.rsb or RsbOptions()
        return base.model_copy(update={"quadrature_n": self.quadrature.N})
