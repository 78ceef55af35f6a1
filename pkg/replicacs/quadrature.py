"""
Gaussian averages ∫h(z)Dz with kink-aware accuracy.

Without breakpoints the Gauss-Hermite rule (rescaled to the standard normal) is
used. With breakpoints the line is truncated at ±TRUNCATION, split at the
breakpoints, and every segment (tails included) is integrated by Gauss-Legendre
against the normal density.

All integrands are called on numpy arrays of nodes.
"""

import logging
import math
from functools import lru_cache
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial.hermite import hermgauss
from numpy.polynomial.legendre import leggauss
from pydantic import BaseModel, ConfigDict, Field

from .errors import NonFiniteError

logger = logging.getLogger(__name__)

# Normal mass beyond 12 is below 1e-32
TRUNCATION = 12.0
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

ArrayLike = Union[float, np.ndarray, Sequence[float]]
Integrand = Callable[[np.ndarray], Union[np.ndarray, float]]
Integrand2D = Callable[[np.ndarray, np.ndarray], Union[np.ndarray, float]]
BreakpointCallback = Callable[[np.ndarray], Optional[np.ndarray]]


@lru_cache(maxsize=32)
def _hermite(n: int) -> Tuple[np.ndarray, np.ndarray]:
    x, w = hermgauss(n)
    nodes = math.sqrt(2.0) * x
    weights = w / math.sqrt(math.pi)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


@lru_cache(maxsize=32)
def _legendre(n: int) -> Tuple[np.ndarray, np.ndarray]:
    x, w = leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


class QuadratureRule(BaseModel):
    """
    N-point rule for the standard normal weight, optionally split at breakpoints.

    Rules are immutable; per-call breakpoints are passed to gauss_expect instead
    of mutating the rule.
    """

    N: int = Field(default=96, ge=2)
    breakpoints: Tuple[float, ...] = ()

    model_config = ConfigDict(frozen=True)

    @property
    def nodes(self) -> np.ndarray:
        points, _ = normal_nodes(self.N, self._bp())
        return points

    @property
    def weights(self) -> np.ndarray:
        _, log_w = normal_nodes(self.N, self._bp())
        return np.exp(log_w)

    def doubled(self) -> "QuadratureRule":
        """Same rule with twice the nodes (accuracy gate)"""
        return self.model_copy(update={"N": 2 * self.N})

    def _bp(self) -> Optional[np.ndarray]:
        return np.asarray(self.breakpoints, dtype=float) if self.breakpoints else None


def _segment_rule(n: int, breakpoints: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/log-weights of the normal density between sorted breakpoints"""
    bp = np.sort(np.clip(breakpoints, -TRUNCATION, TRUNCATION), axis=-1)
    shape = bp.shape[:-1]
    lo = np.full(shape + (1,), -TRUNCATION)
    hi = np.full(shape + (1,), TRUNCATION)
    edges = np.concatenate([lo, bp, hi], axis=-1)
    half = 0.5 * (edges[..., 1:] - edges[..., :-1])
    mid = 0.5 * (edges[..., 1:] + edges[..., :-1])

    x, w = _legendre(n)
    nodes = mid[..., None] + half[..., None] * x
    with np.errstate(divide="ignore"):
        # Coinciding breakpoints give empty segments with log-weight -inf
        log_w = np.log(half[..., None] * w) - 0.5 * nodes**2 - _LOG_SQRT_2PI
    out_shape = shape + (nodes.shape[-2] * n,)
    return nodes.reshape(out_shape), log_w.reshape(out_shape)


def normal_nodes(
    n: int,
    breakpoints: Optional[np.ndarray] = None,
    loc: ArrayLike = 0.0,
    scale: ArrayLike = 1.0,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Nodes and log-weights for ∫h(y)Dy evaluated around a Gaussian proposal.

    The rule is laid out in t = (y - loc)/scale and importance-weighted back to the
    standard normal, so Σ exp(log_w)·h(points) ≈ ∫h(y)Dy. With loc=0, scale=1 this
    is the plain rule.

    Args:
        n: Nodes per segment (Hermite nodes when there are no breakpoints)
        breakpoints: Kinks in y, shape (..., m); batch axes broadcast with loc/scale
        loc: Proposal centre(s)
        scale: Proposal scale(s), positive

    Returns:
        (points, log_weights), both with trailing node axis
    """
    loc_arr = np.asarray(loc, dtype=float)
    scale_arr = np.asarray(scale, dtype=float)

    if breakpoints is None or np.size(breakpoints) == 0:
        t, w = _hermite(n)
        batch = np.broadcast_shapes(loc_arr.shape, scale_arr.shape)
        t = np.broadcast_to(t, batch + t.shape)
        with np.errstate(divide="ignore"):
            log_w = np.broadcast_to(np.log(w), t.shape)
    else:
        bp = np.asarray(breakpoints, dtype=float)
        t_bp = (bp - loc_arr[..., None]) / scale_arr[..., None]
        t, log_w = _segment_rule(n, t_bp)

    points = loc_arr[..., None] + scale_arr[..., None] * t
    if loc_arr.any() or np.any(scale_arr != 1.0):
        log_w = log_w + np.log(scale_arr)[..., None] - 0.5 * points**2 + 0.5 * t**2
    return points, log_w


def gauss_expect(
    rule: QuadratureRule,
    h: Integrand,
    breakpoints: Optional[Sequence[float]] = None,
) -> float:
    """
    Compute ∫h(z)Dz.

    Args:
        rule: Quadrature rule (its own breakpoints are used when none are passed)
        h: Vectorized integrand
        breakpoints: Points where h is not smooth

    Returns:
        The Gaussian average

    Raises:
        NonFiniteError: h is NaN or infinite at a node

    Examples:
        >>> round(gauss_expect(QuadratureRule(N=8), lambda z: z**4), 12)
        3.0
    """
    bp = breakpoints if breakpoints is not None else rule.breakpoints
    points, log_w = normal_nodes(rule.N, np.asarray(bp, dtype=float) if len(bp) else None)
    values = np.broadcast_to(np.asarray(h(points), dtype=float), points.shape)
    if not np.all(np.isfinite(values)):
        raise NonFiniteError("integrand is not finite at a quadrature node")
    return float(np.sum(np.exp(log_w) * values))


def gauss_expect_2d(
    rule_z: QuadratureRule,
    rule_y: QuadratureRule,
    h: Integrand2D,
    breakpoints_y: Optional[BreakpointCallback] = None,
) -> float:
    """
    Compute ∫∫h(z, y)Dy Dz as a tensor product.

    Args:
        rule_z: Outer rule (its breakpoints apply to z)
        rule_y: Inner rule
        h: Vectorized integrand h(z, y), called with z of shape (Nz, 1)
        breakpoints_y: Callback mapping the z nodes to y-breakpoints of shape (Nz, m)

    Returns:
        The two-dimensional Gaussian average
    """
    z, log_wz = normal_nodes(rule_z.N, rule_z._bp())
    bp_y = breakpoints_y(z) if breakpoints_y is not None else None
    if bp_y is None and rule_y.breakpoints:
        bp_y = np.broadcast_to(rule_y._bp(), z.shape + (len(rule_y.breakpoints),))
    if bp_y is None:
        y, log_wy = normal_nodes(rule_y.N)
        y, log_wy = y[None, :], log_wy[None, :]
    else:
        y, log_wy = normal_nodes(rule_y.N, bp_y, loc=np.zeros(z.shape))

    values = np.asarray(h(z[:, None], y), dtype=float)
    values = np.broadcast_to(values, np.broadcast_shapes(values.shape, (z.size, y.shape[-1])))
    if not np.all(np.isfinite(values)):
        raise NonFiniteError("integrand is not finite at a quadrature node")
    weights = np.exp(log_wz)[:, None] * np.exp(log_wy)
    return float(np.sum(weights * values))
