"""
Decoupled scalar channel: penalties, proximal maps, the 1RSB objective and
prior averages.

All built-in maps are vectorized over numpy arrays. Custom penalties are
minimized point by point (multi-start grid plus golden-section refinement).
"""

import logging
import math
from typing import Callable, Optional, Tuple, Union

import numpy as np
from scipy import optimize

from .errors import DomainError, NoMinimizerError
from .models import ChannelParams, Distortion, PenaltySpec, SourcePrior
from .quadrature import Integrand, QuadratureRule, normal_nodes

logger = logging.getLogger(__name__)

ArrayOrFloat = Union[float, np.ndarray]

CUSTOM_STARTS = 33
CUSTOM_RADIUS = 6.0
CUSTOM_XTOL = 1e-10
# Objective drop that marks a custom penalty as unbounded below
UNBOUNDED_DROP = 1e12


def penalty_value(penalty: PenaltySpec, v: ArrayOrFloat) -> ArrayOrFloat:
    """
    Evaluate u(v).

    Built-ins: l2 → v²/2, l1 → |v|, l0 → 1{v ≠ 0}.
    """
    if penalty.kind == "l2":
        return 0.5 * np.square(v)
    if penalty.kind == "l1":
        return np.abs(v)
    if penalty.kind == "l0":
        return (np.asarray(v) != 0).astype(float)
    assert penalty.function is not None
    if np.ndim(v) == 0:
        return float(penalty.function(float(v)))
    return np.vectorize(penalty.function, otypes=[float])(v)


def penalty_kinks(penalty: PenaltySpec, xi: float) -> Tuple[float, ...]:
    """Values of the prox input at which prox(penalty, ·, ξ) is not smooth"""
    if penalty.kind == "l1":
        return (-xi, xi)
    if penalty.kind == "l0":
        threshold = math.sqrt(2.0 * xi)
        return (-threshold, threshold)
    return ()


def prox(penalty: PenaltySpec, y: ArrayOrFloat, xi: float) -> ArrayOrFloat:
    """
    Global minimizer of (1/2ξ)(y - v)² + u(v).

    Args:
        penalty: Scalar penalty
        y: Prox input(s)
        xi: Effective tuning ξ > 0

    Returns:
        Minimizer(s), same shape as y

    Raises:
        DomainError: ξ <= 0
        NoMinimizerError: Custom penalty unbounded below

    Examples:
        >>> prox(PenaltySpec(kind="l1"), 3.0, 1.0)
        2.0
        >>> prox(PenaltySpec(kind="l0"), 0.7, 0.32)
        0.0
    """
    if not xi > 0:
        raise DomainError(f"ξ must be positive, got {xi}")

    if penalty.kind == "l2":
        out = np.asarray(y, dtype=float) / (1.0 + xi)
    elif penalty.kind == "l1":
        y_arr = np.asarray(y, dtype=float)
        out = np.sign(y_arr) * np.maximum(np.abs(y_arr) - xi, 0.0)
    elif penalty.kind == "l0":
        y_arr = np.asarray(y, dtype=float)
        # Tie at |y| = √(2ξ) goes to the sparser minimizer
        out = np.where(np.abs(y_arr) > math.sqrt(2.0 * xi), y_arr, 0.0)
    else:
        assert penalty.function is not None
        fn = penalty.function
        if np.ndim(y) == 0:
            return _custom_prox(fn, float(y), xi)
        return np.vectorize(lambda v: _custom_prox(fn, v, xi), otypes=[float])(y)

    return float(out) if np.ndim(out) == 0 else out


def _custom_prox(u: Callable[[float], float], y: float, xi: float) -> float:
    def objective(v: float) -> float:
        return (y - v) ** 2 / (2.0 * xi) + u(v)

    radius = CUSTOM_RADIUS * math.sqrt(xi)
    grid = np.linspace(y - radius, y + radius, CUSTOM_STARTS)
    values = np.array([objective(v) for v in grid])
    if np.any(np.isnan(values)) or np.any(values == -np.inf) or not np.any(np.isfinite(values)):
        raise NoMinimizerError(f"custom penalty has no finite minimum near y={y}")
    best = int(np.argmin(values))

    # Far points catch penalties that fall faster than the quadratic grows
    far_points = y + radius * np.array([-1e6, -1e3, -10.0, 10.0, 1e3, 1e6])
    far_values = np.array([objective(v) for v in far_points])
    if np.any(np.isnan(far_values)) or np.any(
        far_values < values[best] - UNBOUNDED_DROP
    ):
        raise NoMinimizerError(f"custom penalty appears unbounded below (y={y}, ξ={xi})")

    v_best, f_best = float(grid[best]), float(values[best])
    if 0 < best < CUSTOM_STARTS - 1 and values[best] < min(values[best - 1], values[best + 1]):
        res = optimize.minimize_scalar(
            objective,
            bracket=(grid[best - 1], grid[best], grid[best + 1]),
            method="golden",
            tol=CUSTOM_XTOL,
        )
    else:
        lo = grid[max(best - 1, 0)]
        hi = grid[min(best + 1, CUSTOM_STARTS - 1)]
        res = optimize.minimize_scalar(
            objective, bounds=(lo, hi), method="bounded", options={"xatol": CUSTOM_XTOL}
        )
    if np.isfinite(res.fun) and res.fun < f_best:
        v_best = float(res.x)
    return v_best


def rsb_objective(
    penalty: PenaltySpec,
    x: ArrayOrFloat,
    z: ArrayOrFloat,
    y: ArrayOrFloat,
    params: ChannelParams,
    v: ArrayOrFloat,
) -> ArrayOrFloat:
    """
    K(v; x, z, y) = (1/2ξ)[(x - v)² + 2(x - v)(f·z + w·y)] + u(v).

    The constant -(f·z + w·y)²/(2ξ) that separates K from the completed-square
    prox objective is kept; it enters the tilted measure.
    """
    field = params.f * np.asarray(z) + params.w * np.asarray(y)
    gap = np.asarray(x) - np.asarray(v)
    out = (gap**2 + 2.0 * gap * field) / (2.0 * params.xi) + penalty_value(penalty, v)
    return float(out) if np.ndim(out) == 0 else out


def rsb_minimize(
    penalty: PenaltySpec,
    x: ArrayOrFloat,
    z: ArrayOrFloat,
    y: ArrayOrFloat,
    params: ChannelParams,
) -> Tuple[ArrayOrFloat, ArrayOrFloat]:
    """
    L = min_v K and g = argmin_v K.

    g is the prox of x + f·z + w·y (completion of squares) and L is K evaluated at g.

    Returns:
        (L, g)
    """
    y_eff = np.asarray(x) + params.f * np.asarray(z) + params.w * np.asarray(y)
    g = prox(penalty, y_eff, params.xi)
    return rsb_objective(penalty, x, z, y, params, g), g


def prior_nodes(prior: SourcePrior, rule: QuadratureRule) -> Tuple[np.ndarray, np.ndarray]:
    """
    Nodes and weights of the sparse-Gaussian prior: an atom at 0 plus Hermite nodes.

    Zero-weight components are dropped.
    """
    z, log_w = normal_nodes(rule.N)
    nodes = [np.zeros(1)] if prior.s < 1.0 else []
    weights = [np.array([1.0 - prior.s])] if prior.s < 1.0 else []
    if prior.s > 0.0:
        nodes.append(z)
        weights.append(prior.s * np.exp(log_w))
    return np.concatenate(nodes), np.concatenate(weights)


def prior_average(
    prior: SourcePrior, h: Integrand, rule: Optional[QuadratureRule] = None
) -> float:
    """
    E_x h(x) = (1 - s)·h(0) + s·∫h(x)Dx.

    Args:
        prior: Sparse-Gaussian prior
        h: Vectorized function of x
        rule: Quadrature for the Gaussian part (default 96 nodes)

    Returns:
        The prior average

    Examples:
        >>> prior_average(SourcePrior(s=0.1), lambda x: x**2)
        0.1...
    """
    x, weights = prior_nodes(prior, rule or QuadratureRule())
    values = np.broadcast_to(np.asarray(h(x), dtype=float), x.shape)
    return float(np.dot(weights, values))


def distortion_function(distortion: Distortion) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """
    Resolve a distortion spec to a vectorized d(x̂, x).

    "squared" is the MSE kernel (x̂ - x)², "absolute" is |x̂ - x|; callables are
    used as given and must accept numpy arrays.
    """
    if distortion == "squared":
        return lambda xhat, x: np.square(xhat - x)
    if distortion == "absolute":
        return lambda xhat, x: np.abs(xhat - x)
    if callable(distortion):
        return distortion
    raise DomainError(f"unknown distortion '{distortion}'")
