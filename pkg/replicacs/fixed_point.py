"""
Damped fixed-point iteration shared by the RS and 1RSB solvers.

The update is state ← (1 - α)·state + α·T(state). The damping α is halved
(down to a floor) whenever the raw residual T(state) - state flips direction
for a whole window of consecutive iterations. Physics-level failures raised by
T are mapped to solver statuses instead of propagating.
"""

import logging
from typing import Callable, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from .errors import (
    InvalidNegativeDiscriminant,
    MuRootNotBracketed,
    NonFiniteError,
    ReplicaError,
)

logger = logging.getLogger(__name__)

Step = Callable[[np.ndarray], np.ndarray]


class Diverged(ReplicaError):
    """The iterate left the physical domain or blew up"""


class IterationResult(BaseModel):
    """Final state of one damped run and how it ended"""

    state: np.ndarray
    status: str
    iterations: int
    residual: float
    detail: str = ""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    @property
    def converged(self) -> bool:
        return self.status == "Converged"


def _ended(
    state: np.ndarray, status: str, iterations: int, residual: float, detail: str = ""
) -> IterationResult:
    return IterationResult(
        state=state, status=status, iterations=iterations, residual=residual, detail=detail
    )


def iterate_damped(
    step: Step,
    state0: Tuple[float, ...],
    *,
    damping: float,
    min_damping: float,
    window: int,
    tol: float,
    max_iters: int,
    bound: float,
    label: str = "fixed point",
) -> IterationResult:
    """
    Run the damped iteration from state0.

    Args:
        step: The map T; may raise InvalidNegativeDiscriminant, MuRootNotBracketed,
            NonFiniteError or Diverged
        state0: Initial state (all components >= 0)
        damping: Initial α
        min_damping: Floor for α
        window: Consecutive direction flips that trigger halving
        tol: Converged when max|T(state) - state| < tol
        max_iters: Iteration budget
        bound: Components above this (or non-finite) count as divergence
        label: Name used in log messages

    Returns:
        IterationResult with one of the statuses Converged, NoSolution,
        InvalidNegativeDiscriminant, MuRootNotBracketed, MaxItersExceeded
    """
    state = np.asarray(state0, dtype=float)
    alpha = damping
    prev_delta = None
    flips = 0
    residual = float("nan")

    for it in range(1, max_iters + 1):
        try:
            target = np.asarray(step(state), dtype=float)
        except InvalidNegativeDiscriminant as e:
            logger.debug(f"{label}: {e} at iteration {it}")
            return _ended(state, "InvalidNegativeDiscriminant", it, residual, str(e))
        except MuRootNotBracketed as e:
            logger.debug(f"{label}: {e} at iteration {it}")
            return _ended(state, "MuRootNotBracketed", it, residual, str(e))
        except (NonFiniteError, Diverged) as e:
            logger.debug(f"{label}: {e} at iteration {it}")
            return _ended(state, "NoSolution", it, residual, str(e))

        if not np.all(np.isfinite(target)) or np.any(np.abs(target) > bound):
            return _ended(state, "NoSolution", it, residual, "iterate diverged")

        delta = target - state
        residual = float(np.max(np.abs(delta)))
        if residual < tol:
            if np.any(target < 0):
                return _ended(
                    target, "NoSolution", it, residual, "fixed point outside the physical domain"
                )
            return _ended(target, "Converged", it, residual)

        if prev_delta is not None and float(np.dot(delta, prev_delta)) < 0:
            flips += 1
            if flips >= window and alpha > min_damping:
                alpha = max(alpha / 2.0, min_damping)
                flips = 0
                logger.warning(f"{label}: oscillation detected, damping halved to {alpha}")
        else:
            flips = 0
        prev_delta = delta

        state = (1.0 - alpha) * state + alpha * target
        if np.any(state < 0):
            return _ended(state, "NoSolution", it, residual, "iterate left the physical domain")
        if it % 100 == 0:
            logger.debug(f"{label}: iteration {it}, residual {residual:.3e}, damping {alpha}")

    return _ended(state, "MaxItersExceeded", max_iters, residual)
