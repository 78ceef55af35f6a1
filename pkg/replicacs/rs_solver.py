"""
Replica-symmetric fixed-point solver.

The RS system in (χ, q):
    ξ = λ / R(-χ/λ)
    f = (1/R(-χ/λ))·√(∂/∂χ[(λ0·χ - λ·q)·R(-χ/λ)])
    χ = (ξ/f)·E_x∫(g - x)·z Dz,   q = E_x∫(g - x)² Dz,   g = prox(x + f·z, ξ)

solve_rs runs a damped iteration from several starts and reports every distinct
fixed point. Physics-level failures end up in the status field.
"""

import logging
import math
from typing import Callable, List, Optional, Tuple

import numpy as np

from .ensemble import r_transform
from .errors import InvalidNegativeDiscriminant, NonFiniteError, StateError
from .fixed_point import IterationResult, iterate_damped
from .models import (
    FAILURE_PRECEDENCE,
    ChannelParams,
    RsOptions,
    RsSolution,
    SystemConfig,
)
from .quadrature import QuadratureRule, normal_nodes
from .scalar_channel import distortion_function, penalty_kinks, prox

logger = logging.getLogger(__name__)

# Discriminants above -DISCRIMINANT_SLACK are rounding noise and clamp to 0
DISCRIMINANT_SLACK = 1e-14


def flux_derivative(cfg: SystemConfig, rho: float, offset: float) -> float:
    """
    ∂/∂ϱ [(λ0·ϱ - λ·offset)·R(-ϱ/λ)] with offset held fixed.

    The i.i.d. ensemble uses R' = r·R²; other ensembles use central differences
    with step max(1e-6, 1e-6·ϱ) (second-order one-sided near ϱ = 0).
    """
    lam, lam0 = cfg.lam, cfg.lam0
    if cfg.ensemble.kind == "iid":
        R = r_transform(cfg.ensemble, -rho / lam)
        return lam0 * R - (lam0 * rho - lam * offset) * cfg.ensemble.r * R * R / lam

    def flux(t: float) -> float:
        return (lam0 * t - lam * offset) * r_transform(cfg.ensemble, -t / lam)

    h = max(1e-6, 1e-6 * rho)
    if rho >= h:
        return (flux(rho + h) - flux(rho - h)) / (2.0 * h)
    return (-3.0 * flux(rho) + 4.0 * flux(rho + h) - flux(rho + 2.0 * h)) / (2.0 * h)


def checked_sqrt(name: str, value: float) -> float:
    """√value, clamping rounding-level negatives; raises InvalidNegativeDiscriminant otherwise"""
    if value < 0.0:
        if value > -DISCRIMINANT_SLACK:
            return 0.0
        raise InvalidNegativeDiscriminant(name, value)
    return math.sqrt(value)


def rs_effective_params(cfg: SystemConfig, chi: float, q: float) -> ChannelParams:
    """
    Effective tuning ξ and noise amplitude f of the RS scalar channel.

    Args:
        cfg: System configuration
        chi: Order parameter χ >= 0
        q: Order parameter q

    Returns:
        ChannelParams with w = 0

    Raises:
        InvalidNegativeDiscriminant: The expression under f's square root is negative
    """
    R = r_transform(cfg.ensemble, -chi / cfg.lam)
    f = checked_sqrt("f", flux_derivative(cfg, chi, q)) / R
    return ChannelParams(xi=cfg.lam / R, f=f)


def _estimate(cfg: SystemConfig, params: ChannelParams, u: np.ndarray) -> np.ndarray:
    g = np.asarray(prox(cfg.penalty, u, params.xi), dtype=float)
    if not np.all(np.isfinite(g)):
        raise NonFiniteError("scalar channel produced a non-finite estimate")
    return g


def _posterior_distortion(
    d: Callable[[np.ndarray, np.ndarray], np.ndarray],
    g: np.ndarray,
    mean: np.ndarray,
    sd: float,
    rule: QuadratureRule,
) -> np.ndarray:
    """E[d(g; x) | u] for x | u ~ N(mean, sd²), split where x = g"""
    if sd == 0.0:
        return np.asarray(d(g, mean), dtype=float)
    t, log_w = normal_nodes(rule.N, ((g - mean) / sd)[:, None])
    x = mean[:, None] + sd * t
    return np.sum(np.exp(log_w) * d(g[:, None], x), axis=-1)


def rs_moments(
    cfg: SystemConfig, params: ChannelParams, rule: QuadratureRule, with_distortion: bool = False
) -> Tuple[float, float, float]:
    """
    E(g-x)z, E(g-x)² and (optionally) E d(g; x) over the prior and z.

    g sees x and z only through u = x + f·z. The Gaussian part of the prior is
    therefore integrated over u ~ N(0, σ²), σ² = 1 + f², split at the kinks of
    g, with x | u ~ N(u/σ², f²/σ²) averaged in closed form (by an inner rule for
    distortions other than "squared"). The atom at x = 0 is integrated over z
    split at kinks/f.
    """
    f = params.f
    s = cfg.prior.s
    kinks = np.asarray(penalty_kinks(cfg.penalty, params.xi), dtype=float)
    d = distortion_function(cfg.distortion) if with_distortion else None
    chi_int = q_int = 0.0
    dist = 0.0 if d is not None else math.nan

    if s < 1.0:
        z, log_wz = normal_nodes(rule.N, kinks / f if kinks.size and f > 0 else None)
        weights = (1.0 - s) * np.exp(log_wz)
        g = _estimate(cfg, params, f * z)
        chi_int += float(np.sum(weights * g * z))
        q_int += float(np.sum(weights * g * g))
        if d is not None:
            dist += float(np.sum(weights * d(g, np.zeros_like(g))))

    if s > 0.0:
        var_u = 1.0 + f * f
        sigma = math.sqrt(var_u)
        t, log_wt = normal_nodes(rule.N, kinks / sigma if kinks.size else None)
        weights = s * np.exp(log_wt)
        u = sigma * t
        g = _estimate(cfg, params, u)
        mean_x = u / var_u
        var_x = f * f / var_u
        # E[(g - x)z | u] = f·(u·g/σ² - u²/σ⁴ + 1/σ²)
        chi_int += f * float(np.sum(weights * (u * g / var_u - mean_x**2 + 1.0 / var_u)))
        sq_err = (g - mean_x) ** 2 + var_x
        q_int += float(np.sum(weights * sq_err))
        if d is not None:
            if isinstance(cfg.distortion, str) and cfg.distortion == "squared":
                dist += float(np.sum(weights * sq_err))
            else:
                dist += float(
                    np.sum(weights * _posterior_distortion(d, g, mean_x, math.sqrt(var_x), rule))
                )
    return chi_int, q_int, dist


def rs_iterate(
    cfg: SystemConfig, state: Tuple[float, float], rule: Optional[QuadratureRule] = None
) -> Tuple[float, float]:
    """
    One undamped application of the RS map (χ, q) → (χ', q').

    At f = 0 the χ-equation is taken literally: its integrand vanishes and χ' = 0.
    """
    chi, q = state
    rule = rule or QuadratureRule()
    params = rs_effective_params(cfg, chi, q)
    chi_int, q_new, _ = rs_moments(cfg, params, rule)
    chi_new = params.xi / params.f * chi_int if params.f > 0 else 0.0
    return chi_new, q_new


def _solution_from(
    cfg: SystemConfig, result: IterationResult, init: Tuple[float, float], rule: QuadratureRule
) -> RsSolution:
    chi, q = (float(v) for v in result.state)
    if not result.converged:
        return RsSolution(
            chi=chi,
            q=q,
            status=result.status,  # type: ignore[arg-type]
            iterations=result.iterations,
            residual=result.residual,
            init=init,
        )
    params = rs_effective_params(cfg, chi, q)
    _, _, D = rs_moments(cfg, params, rule, with_distortion=True)
    return RsSolution(
        chi=chi,
        q=q,
        xi=params.xi,
        f=params.f,
        D=D,
        status="Converged",
        iterations=result.iterations,
        residual=result.residual,
        init=init,
    )


def _gated(
    cfg: SystemConfig, solution: RsSolution, rule: QuadratureRule, tol: float, label: str
) -> RsSolution:
    """Re-evaluate the map and D at twice the nodes and record how far they move"""
    fine = rule.doubled()
    chi, q = rs_iterate(cfg, (solution.chi, solution.q), fine)
    params = rs_effective_params(cfg, solution.chi, solution.q)
    _, _, D = rs_moments(cfg, params, fine, with_distortion=True)
    delta = abs(D - solution.D)
    if delta > tol:
        logger.warning(
            f"{label}: D moves by {delta:.2e} at N={fine.N}; raise quadrature_n above {rule.N}"
        )
    return solution.model_copy(
        update={
            "gate_delta": delta,
            "gate_residual": max(abs(chi - solution.chi), abs(q - solution.q)),
        }
    )


def rs_starts(cfg: SystemConfig, options: RsOptions) -> List[Tuple[float, float]]:
    """User start first, then the fixed starts, duplicates removed"""
    starts: List[Tuple[float, float]] = []
    for init in (options.init, (0.1, 0.1), (1.0, 1.0), (1e-3, cfg.prior.s)):
        if init not in starts:
            starts.append(init)
    return starts


def solve_rs(cfg: SystemConfig, options: Optional[RsOptions] = None) -> RsSolution:
    """
    Solve the RS system by multi-start damped iteration.

    The first converged start (in start order) is the reported solution; every
    other converged fixed point farther than distinct_tol from those already
    kept is attached as an alternative. Without any converged start the status
    is the most severe failure seen.

    With options.accuracy_gate each converged point is re-evaluated at twice the
    quadrature nodes. The change in D and the fixed-point residual there are
    stored as gate_delta and gate_residual; gate_delta above options.gate_tol
    is logged as a warning.

    Args:
        cfg: System configuration
        options: Iteration settings (defaults: α=0.5, tol=1e-10, 10⁴ iterations)

    Returns:
        RsSolution; never raises for physics-level failure

    Examples:
        >>> cfg = SystemConfig(ensemble=EnsembleSpec(kind="iid", r=2.0),
        ...                    penalty=PenaltySpec(kind="l2"), prior=SourcePrior(s=0.1),
        ...                    lam=0.01, lam0=0.01)
        >>> round(solve_rs(cfg).D, 5)
        0.05482
    """
    options = options or RsOptions()
    rule = QuadratureRule(N=options.quadrature_n)
    label = f"RS[{cfg.penalty.kind}/{cfg.ensemble.kind} r={cfg.ensemble.r} λ={cfg.lam}]"

    converged: List[RsSolution] = []
    failures: List[RsSolution] = []
    for init in rs_starts(cfg, options):
        result = iterate_damped(
            lambda st: np.asarray(rs_iterate(cfg, (st[0], st[1]), rule)),
            init,
            damping=options.damping,
            min_damping=options.min_damping,
            window=options.oscillation_window,
            tol=options.tol,
            max_iters=options.max_iters,
            bound=options.divergence_bound,
            label=label,
        )
        solution = _solution_from(cfg, result, init, rule)
        if solution.converged and options.accuracy_gate:
            solution = _gated(cfg, solution, rule, options.gate_tol, label)
        if solution.converged:
            logger.info(
                f"{label}: start {init} converged in {result.iterations} iterations "
                f"(χ={solution.chi:.6g}, q={solution.q:.6g}, D={solution.D:.6g})"
            )
            converged.append(solution)
        else:
            logger.warning(f"{label}: start {init} ended with {result.status} {result.detail}")
            failures.append(solution)

    if not converged:
        for status in FAILURE_PRECEDENCE:
            for solution in failures:
                if solution.status == status:
                    return solution
        return failures[0]

    primary = converged[0]
    kept = [primary]
    for candidate in converged[1:]:
        if all(
            max(abs(candidate.chi - other.chi), abs(candidate.q - other.q)) > options.distinct_tol
            for other in kept
        ):
            kept.append(candidate)
    if len(kept) > 1:
        logger.info(f"{label}: {len(kept)} distinct fixed points")
    return primary.model_copy(update={"alternatives": kept[1:]})


def rs_distortion(
    cfg: SystemConfig, solution: RsSolution, rule: Optional[QuadratureRule] = None
) -> float:
    """
    Recompute D = E_x∫d(g(x,z); x)Dz from a converged (χ, q).

    Raises:
        StateError: The solution did not converge
    """
    if not solution.converged:
        raise StateError(f"distortion needs a converged RS solution, got {solution.status}")
    params = rs_effective_params(cfg, solution.chi, solution.q)
    _, _, D = rs_moments(cfg, params, rule or QuadratureRule(), with_distortion=True)
    return D
