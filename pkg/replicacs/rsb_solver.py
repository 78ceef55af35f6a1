"""
One-step replica-symmetry-breaking solver.

Order parameters (χ, q, p) and the Parisi parameter μ, with ϱ = χ + μ·p:
    ξ = λ / R(-χ/λ)
    f = (1/R(-χ/λ))·√(∂/∂ϱ[(λ0·ϱ + λ·p - λ·q)·R(-ϱ/λ)])
    w = (1/R(-χ/λ))·√((λ/μ)[R(-χ/λ) - R(-ϱ/λ)])

The scalar channel is K(v) = (1/2ξ)[(x - v)² + 2(x - v)(f·z + w·y)] + u(v) with
minimum L and minimizer g, tilted over y by I = e^{-μL}/∫e^{-μL}Dy. The inner
y-integral is taken around the Gaussian proposal that absorbs the quadratic part
of -μL, so the tilt never runs off the node set.

μ is solved innermost (scalar root per sweep); (χ, q, p) are iterated outermost.
"""

import logging
import math
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy import optimize
from scipy.special import logsumexp

from .ensemble import r_integral, r_transform
from .errors import DomainError, MuRootNotBracketed, NonFiniteError, StateError
from .fixed_point import IterationResult, iterate_damped
from .models import (
    FAILURE_PRECEDENCE,
    ChannelParams,
    RsbOptions,
    RsbSolution,
    RsOptions,
    RsSolution,
    SystemConfig,
)
from .quadrature import QuadratureRule, normal_nodes
from .rs_solver import checked_sqrt, flux_derivative, rs_moments, solve_rs
from .scalar_channel import (
    ArrayOrFloat,
    distortion_function,
    penalty_kinks,
    prior_nodes,
    rsb_minimize,
)

logger = logging.getLogger(__name__)

# Below this w the tilt is trivial and the RS form of the equations is used
W_DEGENERATE = 1e-12
# Solutions with μ·p above this (or 100·tol) count as genuinely broken
MU_P_BROKEN = 1e-8


class TiltedMoments(BaseModel):
    """Tilted averages E_x∫∫(·)·I DyDz of the 1RSB channel"""

    rho_int: float  # E (g-x)·z·I
    var_int: float  # E_x,z Var_I(g)
    q_int: float  # E (g-x)²·I
    entropy: float  # E I·log I
    distortion: float = math.nan
    degenerate: bool = False

    model_config = ConfigDict(frozen=True)


def rsb_effective_params(
    cfg: SystemConfig, chi: float, q: float, p: float, mu: float
) -> ChannelParams:
    """
    Effective parameters (ξ, f, w) of the 1RSB scalar channel.

    Raises:
        DomainError: μ <= 0
        InvalidNegativeDiscriminant: Either square root has a negative argument
    """
    if not mu > 0:
        raise DomainError(f"μ must be positive, got {mu}")
    lam = cfg.lam
    rho = chi + mu * p
    R_chi = r_transform(cfg.ensemble, -chi / lam)
    R_rho = R_chi if p == 0 else r_transform(cfg.ensemble, -rho / lam)
    f = checked_sqrt("f", flux_derivative(cfg, rho, q - p)) / R_chi
    w = checked_sqrt("w", lam / mu * (R_chi - R_rho)) / R_chi
    return ChannelParams(xi=lam / R_chi, f=f, w=w)


def _precision(params: ChannelParams, mu: float) -> float:
    """Curvature 1 - μw²/ξ of the y-exponent; equals R(-ϱ/λ)/R(-χ/λ) > 0"""
    kappa = 1.0 - mu * params.w**2 / params.xi
    if not kappa > 0:
        raise NonFiniteError(f"tilted measure is not normalizable (1 - μw²/ξ = {kappa:.3e})")
    return kappa


def _inner_nodes(
    cfg: SystemConfig,
    params: ChannelParams,
    mu: float,
    x: float,
    z: np.ndarray,
    rule: QuadratureRule,
) -> Tuple[np.ndarray, np.ndarray]:
    """y nodes/log-weights per z row, centred on the tilt's Gaussian part and split at the kinks"""
    kappa = _precision(params, mu)
    loc = mu * params.f * params.w * z / (params.xi * kappa)
    scale = np.full(z.shape, 1.0 / math.sqrt(kappa))
    kinks = np.asarray(penalty_kinks(cfg.penalty, params.xi))
    bp = None
    if kinks.size:
        bp = (kinks[None, :] - x - params.f * z[:, None]) / params.w
    return normal_nodes(rule.N, bp, loc=loc, scale=scale)


def _tilt(L: np.ndarray, log_wy: np.ndarray, mu: float) -> Tuple[np.ndarray, np.ndarray]:
    """Per-row tilted node probabilities and log I, shifted by min L before exponentiating"""
    shifted = -mu * (L - L.min(axis=-1, keepdims=True))
    log_norm = logsumexp(log_wy + shifted, axis=-1, keepdims=True)
    log_I = shifted - log_norm
    return np.exp(log_wy + log_I), log_I


def _tilted_moments(
    cfg: SystemConfig,
    params: ChannelParams,
    mu: float,
    rule: QuadratureRule,
    with_distortion: bool = False,
) -> TiltedMoments:
    if params.w < W_DEGENERATE:
        # I ≡ 1: the RS channel at the same (ξ, f)
        rho_int, q_int, dist = rs_moments(cfg, params, rule, with_distortion)
        return TiltedMoments(
            rho_int=rho_int,
            var_int=0.0,
            q_int=q_int,
            entropy=0.0,
            distortion=dist,
            degenerate=True,
        )

    x_nodes, x_weights = prior_nodes(cfg.prior, rule)
    z, log_wz = normal_nodes(rule.N)
    wz = np.exp(log_wz)
    d = distortion_function(cfg.distortion) if with_distortion else None

    rho_int = var_int = q_int = entropy = dist = 0.0
    # One x node at a time keeps the (z, y) block small
    for x, wx in zip(x_nodes, x_weights):
        y, log_wy = _inner_nodes(cfg, params, mu, float(x), z, rule)
        L, g = rsb_minimize(cfg.penalty, x, z[:, None], y, params)
        L, g = np.asarray(L), np.asarray(g)
        if not np.all(np.isfinite(L)):
            raise NonFiniteError(f"non-finite L at x={x}")
        prob, log_I = _tilt(L, log_wy, mu)
        # Rows of prob sum to one
        g_mean = np.sum(prob * g, axis=-1, keepdims=True)
        g_var = np.sum(prob * (g - g_mean) ** 2, axis=-1)
        weight = wx * wz[:, None] * prob
        err = g - x
        rho_int += float(np.sum(weight * err * z[:, None]))
        var_int += float(wx * np.sum(wz * g_var))
        q_int += float(np.sum(weight * err * err))
        entropy += float(np.sum(np.where(prob > 0, weight * log_I, 0.0)))
        if d is not None:
            dist += float(np.sum(weight * d(g, x)))

    return TiltedMoments(
        rho_int=rho_int,
        var_int=var_int,
        q_int=q_int,
        entropy=entropy,
        distortion=dist if d is not None else math.nan,
    )


def tilted_measure_weight(
    cfg: SystemConfig,
    params: ChannelParams,
    mu: float,
    x: float,
    z: float,
    y: ArrayOrFloat,
    rule: Optional[QuadratureRule] = None,
) -> ArrayOrFloat:
    """
    I(x, z, y) = e^{-μL(x,z,y)} / ∫e^{-μL(x,z,y')}Dy'.

    The normalizer is computed on the kink-aware node set for (x, z).

    Args:
        cfg: System configuration
        params: Effective parameters (ξ, f, w)
        mu: Parisi parameter
        x: Source value
        z: Outer noise value
        y: Inner noise value(s)
        rule: Inner quadrature (default 96 nodes)

    Returns:
        The tilt at y, same shape as y
    """
    if params.w < W_DEGENERATE:
        return np.ones_like(np.asarray(y, dtype=float)) if np.ndim(y) else 1.0
    rule = rule or QuadratureRule()
    z_arr = np.array([z], dtype=float)
    nodes, log_wy = _inner_nodes(cfg, params, mu, x, z_arr, rule)
    L_nodes, _ = rsb_minimize(cfg.penalty, x, z, nodes[0], params)
    L_nodes = np.asarray(L_nodes)
    if not np.all(np.isfinite(L_nodes)):
        raise NonFiniteError(f"non-finite L at x={x}, z={z}")
    L_min = float(L_nodes.min())
    log_norm = float(logsumexp(log_wy[0] - mu * (L_nodes - L_min)))

    L_y, _ = rsb_minimize(cfg.penalty, x, z, y, params)
    out = np.exp(-mu * (np.asarray(L_y) - L_min) - log_norm)
    return float(out) if np.ndim(out) == 0 else out


def _update(params: ChannelParams, m: TiltedMoments, mu: float) -> Tuple[float, float, float]:
    A = params.xi / params.f * m.rho_int if params.f > 0 else 0.0
    return A - mu * m.var_int, m.q_int, m.var_int


def rsb_iterate(
    cfg: SystemConfig,
    state: Tuple[float, float, float],
    mu: float,
    rule: Optional[QuadratureRule] = None,
) -> Tuple[float, float, float]:
    """
    One undamped application of the 1RSB map at fixed μ.

    With A = (ξ/f)·E(g-x)zI, integration by parts in z gives
    A = ξ·E[I·∂g/∂u] + μ·E Var_I(g), and in y the χ-equation reads
    χ = ξ·E[I·∂g/∂u]. The map is therefore

        q' = E(g-x)²I,   p' = E_x,z Var_I(g),   χ' = A - μ·p'

    with neither μ nor w as a divisor. For w < 1e-12 the tilt is trivial, p' = 0
    and χ' = A is the RS equation.
    """
    chi, q, p = state
    rule = rule or QuadratureRule()
    params = rsb_effective_params(cfg, chi, q, p, mu)
    return _update(params, _tilted_moments(cfg, params, mu, rule), mu)


def mu_residual(
    cfg: SystemConfig,
    state: Tuple[float, float, float],
    mu: float,
    rule: Optional[QuadratureRule] = None,
) -> float:
    """
    RHS - LHS of the Parisi-parameter equation at trial μ:

        μp/(2ξ) = (1/2λ)∫_χ^ϱ R(-ω/λ)dω + μ²w²(p - q)/(2ξ²) + E∫I·log I DyDz

    ϱ, ξ, f, w and I are all re-evaluated at μ.
    """
    chi, q, p = state
    rule = rule or QuadratureRule()
    params = rsb_effective_params(cfg, chi, q, p, mu)
    m = _tilted_moments(cfg, params, mu, rule)
    rho = chi + mu * p
    rhs = (
        r_integral(cfg.ensemble, cfg.lam, chi, rho) / (2.0 * cfg.lam)
        + mu**2 * params.w**2 * (p - q) / (2.0 * params.xi**2)
        + m.entropy
    )
    lhs = mu * p / (2.0 * params.xi)
    return rhs - lhs


def _refine_root(
    cfg: SystemConfig,
    state: Tuple[float, float, float],
    lo: float,
    hi: float,
    options: RsbOptions,
    rule: QuadratureRule,
) -> float:
    mu, info = optimize.brentq(
        lambda m: mu_residual(cfg, state, m, rule),
        lo,
        hi,
        rtol=options.mu_rtol,
        full_output=True,
        disp=False,
    )
    if not info.converged:
        logger.warning(f"μ refinement on [{lo:.4g}, {hi:.4g}] stopped: {info.flag}")
    return float(mu)


def solve_mu(
    cfg: SystemConfig,
    state: Tuple[float, float, float],
    options: Optional[RsbOptions] = None,
    rule: Optional[QuadratureRule] = None,
    mu_prev: Optional[float] = None,
) -> float:
    """
    Parisi parameter for the state (χ, q, p).

    At p below options.degenerate_p the equation is vacuous and μ = 1. Otherwise
    the residual is scanned on a log grid over options.mu_bounds, every sign
    change is logged, and the smallest root is refined by Brent's method. Sign
    changes in the first or last grid cell do not count as roots: they sit on
    the limits of the search range. With a previous μ and warm starts enabled,
    [μ_prev/2, 2μ_prev] (clipped to the interior cells) is tried first.

    Raises:
        MuRootNotBracketed: No sign change inside the grid
    """
    options = options or RsbOptions()
    rule = rule or QuadratureRule(N=options.quadrature_n)
    chi, q, p = state
    if p < options.degenerate_p:
        return 1.0

    grid = np.geomspace(*options.mu_bounds, options.mu_grid_points)
    inner_lo, inner_hi = float(grid[1]), float(grid[-2])
    if options.mu_warm_start and mu_prev is not None:
        lo, hi = max(mu_prev / 2.0, inner_lo), min(mu_prev * 2.0, inner_hi)
        if lo < hi:
            r_lo, r_hi = mu_residual(cfg, state, lo, rule), mu_residual(cfg, state, hi, rule)
            if r_lo == 0.0:
                return lo
            if np.isfinite(r_lo) and np.isfinite(r_hi) and r_lo * r_hi < 0:
                return _refine_root(cfg, state, lo, hi, options, rule)

    values = np.array([mu_residual(cfg, state, float(m), rule) for m in grid])
    finite = np.isfinite(values)
    last = len(grid) - 2
    for i in (0, last):
        if finite[i] and finite[i + 1] and values[i] * values[i + 1] < 0:
            logger.debug(
                f"μ-residual changes sign in the edge cell [{grid[i]:.4g}, {grid[i + 1]:.4g}], "
                "not counted"
            )

    roots: List[Tuple[float, float]] = []
    for i in range(1, last):
        a, b = values[i], values[i + 1]
        if not (finite[i] and finite[i + 1]):
            continue
        if a == 0.0:
            roots.append((grid[i], grid[i]))
        elif a * b < 0:
            roots.append((grid[i], grid[i + 1]))
    if finite[last] and values[last] == 0.0:
        roots.append((grid[last], grid[last]))

    if not roots:
        raise MuRootNotBracketed(
            f"no sign change of the μ-residual inside [{inner_lo:.4g}, {inner_hi:.4g}] "
            f"(χ={chi:.4g}, q={q:.4g}, p={p:.4g})"
        )
    for a, b in roots:
        logger.debug(f"μ-residual changes sign in [{a:.4g}, {b:.4g}]")
    if len(roots) > 1:
        logger.info(f"{len(roots)} μ roots bracketed, taking the smallest")

    a, b = roots[0]
    return float(a) if a == b else _refine_root(cfg, state, float(a), float(b), options, rule)


def _from_rs(rs: RsSolution) -> RsbSolution:
    """RS solution as the p = 0 point of the 1RSB system (μ = 1 by convention)"""
    return RsbSolution(
        chi=rs.chi,
        q=rs.q,
        p=0.0,
        mu=1.0,
        rho=rs.chi,
        xi=rs.xi,
        f=rs.f,
        w=0.0,
        D=rs.D,
        status=rs.status,
        iterations=rs.iterations,
        residual=rs.residual,
        gate_delta=rs.gate_delta,
        gate_residual=rs.gate_residual,
        init=(rs.init[0], rs.init[1], 0.0),
    )


def _solution_from(
    cfg: SystemConfig,
    result: IterationResult,
    mu: float,
    init: Tuple[float, float, float],
    rule: QuadratureRule,
) -> RsbSolution:
    chi, q, p = (float(v) for v in result.state)
    if not result.converged:
        return RsbSolution(
            chi=chi,
            q=q,
            p=p,
            mu=mu,
            status=result.status,  # type: ignore[arg-type]
            iterations=result.iterations,
            residual=result.residual,
            init=init,
        )
    params = rsb_effective_params(cfg, chi, q, p, mu)
    m = _tilted_moments(cfg, params, mu, rule, with_distortion=True)
    return RsbSolution(
        chi=chi,
        q=q,
        p=p,
        mu=mu,
        rho=chi + mu * p,
        xi=params.xi,
        f=params.f,
        w=params.w,
        D=m.distortion,
        status="Converged",
        iterations=result.iterations,
        residual=result.residual,
        init=init,
    )


def is_broken(solution: RsbSolution, tol: float) -> bool:
    """
    Whether a converged point genuinely breaks replica symmetry.

    As μ → 0 the tilt becomes trivial and the system reduces to RS whatever p
    is, so the test is on ϱ - χ = μ·p > max(1e-8, 100·tol), not on p.
    """
    return solution.mu * solution.p > max(MU_P_BROKEN, 100.0 * tol)


def _distinct(a: RsbSolution, b: RsbSolution, tol: float) -> bool:
    return max(abs(a.chi - b.chi), abs(a.q - b.q), abs(a.p - b.p)) > tol


def _report(
    candidates: List[RsbSolution],
    rs_point: Optional[RsbSolution],
    options: RsbOptions,
    label: str = "1RSB",
) -> RsbSolution:
    """
    Pick the reported point among converged 1RSB points and the embedded RS point.

    Broken points come first (in start order), then the RS point. Converged
    points with μ·p at the floor are RS-equivalent and only stand in when the RS
    iteration itself failed.
    """
    broken = [sol for sol in candidates if is_broken(sol, options.tol)]
    for sol in candidates:
        if not is_broken(sol, options.tol):
            logger.debug(
                f"{label}: start {sol.init} converged to an RS-equivalent point "
                f"(μ·p={sol.mu * sol.p:.3e})"
            )
    pool = broken + ([rs_point] if rs_point is not None else [])
    if not pool:
        pool = candidates
    primary = pool[0]
    kept = [primary]
    for candidate in pool[1:]:
        if all(_distinct(candidate, other, options.distinct_tol) for other in kept):
            kept.append(candidate)
    return primary.model_copy(update={"alternatives": kept[1:]})


def _gated(
    cfg: SystemConfig, solution: RsbSolution, rule: QuadratureRule, tol: float, label: str
) -> RsbSolution:
    """Re-evaluate the map and D at twice the nodes on every axis and record the change"""
    fine = rule.doubled()
    state = (solution.chi, solution.q, solution.p)
    params = rsb_effective_params(cfg, *state, solution.mu)
    m = _tilted_moments(cfg, params, solution.mu, fine, with_distortion=True)
    target = _update(params, m, solution.mu)
    delta = abs(m.distortion - solution.D)
    if delta > tol:
        logger.warning(
            f"{label}: D moves by {delta:.2e} at N={fine.N}; raise quadrature_n above {rule.N}"
        )
    return solution.model_copy(
        update={
            "gate_delta": delta,
            "gate_residual": max(abs(t - s) for t, s in zip(target, state)),
        }
    )


def solve_1rsb(cfg: SystemConfig, options: Optional[RsbOptions] = None) -> RsbSolution:
    """
    Solve the 1RSB system by multi-start damped iteration with μ re-solved each sweep.

    Starts: the user start, the RS solution embedded as (χ_RS, q_RS, q_RS/2),
    flat starts, and finally the RS solution itself (p = 0), which is always a
    fixed point. Converged solutions with μ·p > max(1e-8, 100·tol) are preferred;
    otherwise the RS point is reported. Other distinct fixed points are attached
    as alternatives. With options.accuracy_gate the reported point is
    re-evaluated at twice the quadrature nodes (see gate_delta, gate_residual).

    Args:
        cfg: System configuration
        options: Iteration and μ-search settings; force_symmetric pins p = 0

    Returns:
        RsbSolution; never raises for physics-level failure
    """
    options = options or RsbOptions()
    rule = QuadratureRule(N=options.quadrature_n)
    rs = solve_rs(
        cfg, RsOptions(quadrature_n=options.quadrature_n, accuracy_gate=options.accuracy_gate)
    )
    if options.force_symmetric:
        return _from_rs(rs)

    label = f"1RSB[{cfg.penalty.kind}/{cfg.ensemble.kind} r={cfg.ensemble.r} λ={cfg.lam}]"
    starts: List[Tuple[float, float, float]] = []
    if options.init is not None:
        starts.append(options.init)
    if rs.converged and rs.q > 0:
        starts.append((rs.chi, rs.q, 0.5 * rs.q))
    s = cfg.prior.s
    for flat in ((0.5, 0.5, 0.25), (1.0, 1.0, 0.5), (0.1, max(s, 1e-3), 0.5 * max(s, 1e-3))):
        if flat not in starts:
            starts.append(flat)

    converged: List[RsbSolution] = []
    failures: List[RsbSolution] = []
    for init in starts:
        mu_last: List[Optional[float]] = [None]

        def step(state: np.ndarray) -> np.ndarray:
            st = (float(state[0]), float(state[1]), float(state[2]))
            mu = solve_mu(cfg, st, options, rule, mu_last[0])
            mu_last[0] = mu
            return np.asarray(rsb_iterate(cfg, st, mu, rule))

        result = iterate_damped(
            step,
            init,
            damping=options.damping,
            min_damping=options.min_damping,
            window=options.oscillation_window,
            tol=options.tol,
            max_iters=options.max_iters,
            bound=options.divergence_bound,
            label=label,
        )
        # μ of the last sweep, solved within tol of the returned state
        mu = mu_last[0] if mu_last[0] is not None else math.nan
        solution = _solution_from(cfg, result, mu, init, rule)
        if solution.converged:
            logger.info(
                f"{label}: start {init} converged in {result.iterations} iterations "
                f"(p={solution.p:.4g}, μ={solution.mu:.4g}, D={solution.D:.6g})"
            )
            converged.append(solution)
        else:
            logger.warning(f"{label}: start {init} ended with {result.status} {result.detail}")
            failures.append(solution)

    if not converged and not rs.converged:
        for status in FAILURE_PRECEDENCE:
            for solution in failures:
                if solution.status == status:
                    return solution
        return failures[0]

    primary = _report(converged, _from_rs(rs) if rs.converged else None, options, label)
    if options.accuracy_gate and math.isnan(primary.gate_delta):
        primary = _gated(cfg, primary, rule, options.gate_tol, label)
    return primary


def rsb_distortion(
    cfg: SystemConfig, solution: RsbSolution, rule: Optional[QuadratureRule] = None
) -> float:
    """
    Recompute D = E_x∫∫d(g; x)·I DyDz from a converged (χ, q, p, μ).

    Raises:
        StateError: The solution did not converge
    """
    if not solution.converged:
        raise StateError(f"distortion needs a converged 1RSB solution, got {solution.status}")
    params = rsb_effective_params(cfg, solution.chi, solution.q, solution.p, solution.mu)
    m = _tilted_moments(cfg, params, solution.mu, rule or QuadratureRule(), with_distortion=True)
    return m.distortion
