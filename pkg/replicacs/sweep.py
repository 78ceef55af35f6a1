"""
Prediction rows, λ-minimization and parameter sweeps.

Every solver evaluation becomes one PredictionRow. Sweeps expand the config
into (penalty, ensemble, grid value, solver) tasks, evaluate them (optionally
in worker processes) and return the rows in task order.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from pydantic import BaseModel, ConfigDict
from scipy import optimize

from .errors import ConfigError
from .models import (
    EnsembleSpec,
    LambdaMinimization,
    PenaltySpec,
    PredictionRow,
    RsbOptions,
    RsbSolution,
    RsOptions,
    RsSolution,
    RunConfig,
    SimConfig,
    SimSettings,
    SourcePrior,
    SystemConfig,
)
from .rs_solver import solve_rs
from .rsb_solver import solve_1rsb
from .simulate import run_sim
from .utils import load_spectrum_csv

logger = logging.getLogger(__name__)

# Relative λ tolerance of the golden-section refinement
REFINE_XTOL = 1e-3


class SolverSettings(BaseModel):
    """Per-solver options shared by every evaluation of a run"""

    rs: RsOptions = RsOptions()
    rsb: RsbOptions = RsbOptions()
    sim: Optional[SimSettings] = None

    model_config = ConfigDict(frozen=True)

    @classmethod
    def from_config(cls, cfg: RunConfig) -> "SolverSettings":
        return cls(rs=cfg.rs_options(), rsb=cfg.rsb_options(), sim=cfg.sim)


def build_system(
    cfg: RunConfig,
    base_dir: Optional[Path] = None,
    *,
    penalty: Optional[str] = None,
    ensemble: Optional[str] = None,
    rate: Optional[float] = None,
    lam: Optional[float] = None,
) -> SystemConfig:
    """
    SystemConfig for the config's point, with optional overrides.

    Tabulated spectra are read relative to base_dir.
    """
    kind = ensemble or cfg.ensemble
    r = rate if rate is not None else cfg.r
    if kind == "tabulated":
        assert cfg.spectrum is not None
        path = Path(cfg.spectrum)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        ensemble_spec = load_spectrum_csv(path, r)
    else:
        try:
            ensemble_spec = EnsembleSpec(kind=kind, r=r)  # type: ignore[arg-type]
        except ValueError as e:
            raise ConfigError(f"ensemble '{kind}' with r={r}: {e}") from e
    return SystemConfig(
        ensemble=ensemble_spec,
        penalty=PenaltySpec(kind=penalty or cfg.penalty),  # type: ignore[arg-type]
        prior=SourcePrior(s=cfg.s),
        lam=lam if lam is not None else cfg.lam,
        lam0=cfg.lam0,
        distortion=cfg.distortion,
    )


def decibels(D: float, reference: float) -> float:
    """10·log10(D/reference), nan when undefined"""
    if not (math.isfinite(D) and D > 0 and reference > 0):
        return math.nan
    return 10.0 * math.log10(D / reference)


def _row(
    system: SystemConfig,
    solver: str,
    solution: Union[RsSolution, RsbSolution],
    minimized: bool = False,
) -> PredictionRow:
    reference = system.prior.second_moment
    return {
        "penalty": system.penalty.kind,
        "ensemble": system.ensemble.kind,
        "solver": solver,
        "minimized": minimized,
        "lam": system.lam,
        "rate": system.ensemble.r,
        "chi": solution.chi,
        "q": solution.q,
        "p": solution.p if isinstance(solution, RsbSolution) else math.nan,
        "mu": solution.mu if isinstance(solution, RsbSolution) else math.nan,
        "xi": solution.xi,
        "f": solution.f,
        "w": solution.w if isinstance(solution, RsbSolution) else math.nan,
        "D": solution.D,
        "D_dB": decibels(solution.D, reference),
        "status": solution.status,
        "iterations": float(solution.iterations),
        "dB_reference": reference,
        "gate_delta": solution.gate_delta,
    }


def build_sim_config(system: SystemConfig, sim: Optional[SimSettings]) -> SimConfig:
    """
    Finite-size counterpart of a system point.

    Raises:
        ConfigError: No sim block, a tabulated ensemble, or an invalid k = round(n/r)
    """
    if sim is None:
        raise ConfigError("sim: missing 'sim' block with n, trials, seed")
    if system.ensemble.kind == "tabulated":
        raise ConfigError("sim: simulation supports the iid and projector ensembles only")
    try:
        return SimConfig(
            n=sim.n,
            r=system.ensemble.r,
            ensemble=system.ensemble.kind,  # type: ignore[arg-type]
            penalty=system.penalty,
            prior=system.prior,
            lam=system.lam,
            lam0=system.lam0,
            trials=sim.trials,
            seed=sim.seed,
            distortion=system.distortion,
        )
    except ValueError as e:
        raise ConfigError(f"sim: {e}") from e


def _sim_row(
    system: SystemConfig, settings: SolverSettings, minimized: bool = False
) -> PredictionRow:
    report = run_sim(build_sim_config(system, settings.sim))
    reference = system.prior.second_moment
    return {
        "penalty": system.penalty.kind,
        "ensemble": system.ensemble.kind,
        "solver": "sim",
        "minimized": minimized,
        "lam": system.lam,
        "rate": system.ensemble.r,
        "chi": math.nan,
        "q": math.nan,
        "p": math.nan,
        "mu": math.nan,
        "xi": math.nan,
        "f": math.nan,
        "w": math.nan,
        "D": report.mean,
        "D_dB": decibels(report.mean, reference),
        "status": "Converged",
        "iterations": report.mean_iterations,
        "dB_reference": reference,
        "gate_delta": math.nan,
    }


def evaluate(
    system: SystemConfig, solver: str, settings: SolverSettings, minimized: bool = False
) -> PredictionRow:
    """Run one solver at one point and return its row"""
    if solver == "rs":
        return _row(system, "rs", solve_rs(system, settings.rs), minimized)
    if solver == "rsb1":
        return _row(system, "rsb1", solve_1rsb(system, settings.rsb), minimized)
    if solver == "sim":
        return _sim_row(system, settings, minimized)
    raise ConfigError(f"unknown solver '{solver}'")


def predict(
    system: SystemConfig, solvers: Sequence[str], settings: SolverSettings
) -> List[PredictionRow]:
    """
    Rows for a single point: each solver's reported solution followed by its
    alternative fixed points, if any.
    """
    rows: List[PredictionRow] = []
    for solver in solvers:
        if solver == "rs":
            rs = solve_rs(system, settings.rs)
            rows.append(_row(system, "rs", rs))
            rows.extend(_row(system, "rs", alt) for alt in rs.alternatives)
        elif solver == "rsb1":
            rsb = solve_1rsb(system, settings.rsb)
            rows.append(_row(system, "rsb1", rsb))
            rows.extend(_row(system, "rsb1", alt) for alt in rsb.alternatives)
        else:
            rows.append(evaluate(system, solver, settings))
    return rows


def restricted_block(converged: Sequence[bool]) -> List[int]:
    """
    Indices of the run of consecutive converged grid points that ends at the
    largest converged one.
    """
    idx = [i for i, ok in enumerate(converged) if ok]
    if not idx:
        return []
    end = idx[-1]
    start = end
    while start > 0 and converged[start - 1]:
        start -= 1
    return list(range(start, end + 1))


def minimize_lambda(
    system: SystemConfig,
    solver: str,
    minimization: LambdaMinimization,
    settings: SolverSettings,
    restricted: bool = False,
) -> PredictionRow:
    """
    Row at the λ minimizing D for the given solver.

    The inner grid is scanned first; with refine=True the grid argmin is polished
    by golden-section search inside its neighbouring grid points (skipped at the
    grid edges and for simulations). With restricted=True only the converged
    block returned by restricted_block is eligible.

    Returns:
        Row with minimized=True; if no λ converged, the first grid row
    """
    grid = minimization.grid
    rows = [
        evaluate(system.model_copy(update={"lam": lam}), solver, settings, True) for lam in grid
    ]
    ok = [row["status"] == "Converged" and math.isfinite(row["D"]) for row in rows]
    eligible = restricted_block(ok) if restricted else [i for i, good in enumerate(ok) if good]
    if not eligible:
        logger.warning(f"{solver}: no converged λ on the grid at r={system.ensemble.r}")
        return rows[0]

    best = min(eligible, key=lambda i: rows[i]["D"])
    best_row = rows[best]
    allowed = set(eligible)
    if (
        minimization.refine
        and solver != "sim"
        and best - 1 in allowed
        and best + 1 in allowed
    ):
        lo_lam, hi_lam = grid[best - 1], grid[best + 1]
        cache: Dict[float, PredictionRow] = {grid[i]: rows[i] for i in (best - 1, best, best + 1)}

        def objective(lam: float) -> float:
            if not lo_lam <= lam <= hi_lam:
                return math.inf
            if lam in cache:
                row = cache[lam]
                return row["D"] if row["status"] == "Converged" else math.inf
            row = evaluate(system.model_copy(update={"lam": lam}), solver, settings, True)
            cache[lam] = row
            good = row["status"] == "Converged" and math.isfinite(row["D"])
            return row["D"] if good else math.inf

        try:
            res = optimize.minimize_scalar(
                objective,
                bracket=(lo_lam, grid[best], hi_lam),
                method="golden",
                options={"xtol": REFINE_XTOL},
            )
            refined = cache.get(float(res.x))
            if refined is not None and refined["D"] < best_row["D"]:
                best_row = refined
        except ValueError as e:
            logger.debug(f"λ refinement skipped: {e}")

    logger.info(
        f"{solver} r={system.ensemble.r}: min D={best_row['D']:.6g} at λ={best_row['lam']:.6g}"
        + (" (restricted)" if restricted else "")
    )
    return best_row


# ============================================================================
# Sweeps
# ============================================================================


Task = Tuple[str, str, float, str]


def sweep_tasks(cfg: RunConfig) -> List[Task]:
    """(penalty, ensemble, grid value, solver) in output order"""
    if cfg.sweep is None:
        raise ConfigError("sweep: missing 'sweep' block")
    penalties = cfg.sweep.penalties or [cfg.penalty]
    ensembles = cfg.sweep.ensembles or [cfg.ensemble]
    return [
        (penalty, ensemble, value, solver)
        for penalty in penalties
        for ensemble in ensembles
        for value in cfg.sweep.grid
        for solver in cfg.sweep.solvers
    ]


def _run_task(payload: Tuple[RunConfig, Optional[Path], Task, bool]) -> PredictionRow:
    cfg, base_dir, (penalty, ensemble, value, solver), restricted = payload
    assert cfg.sweep is not None
    settings = SolverSettings.from_config(cfg)
    if cfg.sweep.variable == "lambda":
        system = build_system(cfg, base_dir, penalty=penalty, ensemble=ensemble, lam=value)
    else:
        system = build_system(cfg, base_dir, penalty=penalty, ensemble=ensemble, rate=value)

    if cfg.sweep.minimize_lambda is not None:
        return minimize_lambda(
            system,
            solver,
            cfg.sweep.minimize_lambda,
            settings,
            restricted=restricted and solver == "rs",
        )
    return evaluate(system, solver, settings)


def run_sweep(
    cfg: RunConfig,
    base_dir: Optional[Path] = None,
    jobs: int = 1,
    restricted: bool = False,
) -> List[PredictionRow]:
    """
    Evaluate every sweep task.

    Args:
        cfg: Run config with a sweep block
        base_dir: Directory for relative spectrum paths
        jobs: Worker processes; rows are returned in task order regardless
        restricted: Restrict RS λ-minimization to the converged λ block

    Returns:
        One row per (penalty, ensemble, grid value, solver)
    """
    tasks = sweep_tasks(cfg)
    payloads = [(cfg, base_dir, task, restricted) for task in tasks]
    logger.info(f"Sweeping {len(tasks)} point(s) with {jobs} worker(s)")
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_task, payloads))
    return [_run_task(payload) for payload in payloads]

