"""
R-transforms of the Gramian spectrum F_J.

Provides:
- Closed forms for the i.i.d. Gaussian (Marchenko-Pastur) and row-orthogonal
  projector ensembles
- Root-finding inversion of the Stieltjes transform for atomic spectra
  (tabulated ensembles and empirical eigenvalue lists)
- The definite integral of R_J(-ω/λ) used by the Parisi-parameter equation

Convention: G(s) = E 1/(t - s) is inverted at -ω, i.e. R(ω) = s - 1/ω where
E 1/(s - t) = ω. A point mass at c then has R ≡ c.
"""

import logging
import math
from typing import Sequence

import numpy as np
from scipy import integrate, optimize

from .errors import ConvergenceError, DomainError
from .models import EnsembleSpec

logger = logging.getLogger(__name__)

QUAD_RTOL = 1e-10
ROOT_MAXITER = 500


def r_transform(spec: EnsembleSpec, omega: float) -> float:
    """
    Evaluate the R-transform R_J(ω) of the ensemble's Gramian spectrum.

    Args:
        spec: Ensemble description
        omega: Argument; solvers only ever pass ω <= 0

    Returns:
        R_J(ω)

    Raises:
        DomainError: ω is not finite, or lies at/behind the i.i.d. pole 1/r

    Examples:
        >>> r_transform(EnsembleSpec(kind="iid", r=2.0), -1.0)
        0.3333333333333333
    """
    if not math.isfinite(omega):
        raise DomainError(f"R-transform argument must be finite, got {omega}")

    r = spec.r
    if spec.kind == "iid":
        if r * omega >= 1.0:
            raise DomainError(f"ω={omega} beyond the Marchenko-Pastur pole 1/r={1 / r}")
        return 1.0 / (1.0 - r * omega)

    if spec.kind == "projector":
        if r == 1.0:
            # Identity Gramian
            return 1.0
        disc = (r * omega - 1.0) ** 2 + 4.0 * omega
        if disc < 0.0:
            raise DomainError(f"negative discriminant {disc:.3e} at ω={omega}")
        # (rω - 1 + √disc) / 2ω with the numerator rationalised, no pole at ω=0
        denom = math.sqrt(disc) + 1.0 - r * omega
        if denom <= 0.0:
            raise DomainError(f"projector R-transform undefined at ω={omega}")
        return 2.0 / denom

    values = np.array([t for t, _ in spec.spectrum], dtype=float)
    masses = np.array([m for _, m in spec.spectrum], dtype=float)
    return _atomic_r_transform(values, masses, omega)


def _atomic_r_transform(values: np.ndarray, masses: np.ndarray, omega: float) -> float:
    """R-transform of Σ m_i δ_{t_i} by bracketing the Stieltjes root outside the support"""
    keep = masses > 0
    support, weights = values[keep], masses[keep]
    if omega == 0.0:
        return float(np.dot(support, weights) / weights.sum())

    def residual(s: float) -> float:
        return float(np.sum(weights / (s - support))) - omega

    a = abs(omega)
    if omega < 0:
        # E 1/(s-t) runs from 0- to -inf on (-inf, t_min)
        t_min = support.min()
        m_edge = weights[support == t_min].sum()
        lo, hi = t_min - 1.0 / a - 1.0, t_min - m_edge / (2.0 * a)
    else:
        # and from +inf to 0+ on (t_max, inf)
        t_max = support.max()
        m_edge = weights[support == t_max].sum()
        lo, hi = t_max + m_edge / (2.0 * a), t_max + 1.0 / a + 1.0

    root, info = optimize.brentq(
        residual,
        lo,
        hi,
        xtol=1e-15,
        rtol=4 * np.finfo(float).eps,
        maxiter=ROOT_MAXITER,
        full_output=True,
        disp=False,
    )
    if not info.converged:
        raise ConvergenceError(
            f"Stieltjes inversion at ω={omega} did not converge ({info.flag})"
        )
    return float(root - 1.0 / omega)


def empirical_r_transform(eigenvalues: Sequence[float], omega: float) -> float:
    """
    R-transform of an empirical eigenvalue list (uniform mass per eigenvalue).

    Args:
        eigenvalues: Non-empty list of Gramian eigenvalues
        omega: Negative argument

    Returns:
        Empirical R(ω)

    Raises:
        DomainError: Empty list or ω >= 0
        ConvergenceError: Root-finding budget exhausted
    """
    values = np.asarray(eigenvalues, dtype=float)
    if values.size == 0:
        raise DomainError("empirical R-transform needs at least one eigenvalue")
    if not omega < 0:
        raise DomainError(f"empirical R-transform needs ω < 0, got {omega}")
    atoms, counts = np.unique(values, return_counts=True)
    return _atomic_r_transform(atoms, counts / values.size, omega)


def r_integral(spec: EnsembleSpec, lam: float, a: float, b: float) -> float:
    """
    Compute ∫_a^b R_J(-ω/λ) dω.

    The i.i.d. ensemble uses the closed form (λ/r)·ln((1 + rb/λ)/(1 + ra/λ));
    other ensembles use adaptive quadrature to relative tolerance 1e-10.

    Args:
        spec: Ensemble description
        lam: Tuning factor λ > 0
        a: Lower limit, >= 0
        b: Upper limit, >= 0

    Returns:
        Value of the integral (negative when b < a)
    """
    if not lam > 0:
        raise DomainError(f"λ must be positive, got {lam}")
    if a < 0 or b < 0:
        raise DomainError(f"integration limits must be non-negative, got [{a}, {b}]")
    if a == b:
        return 0.0

    if spec.kind == "iid":
        c = spec.r / lam
        return (math.log1p(c * b) - math.log1p(c * a)) / c

    value, abserr = integrate.quad(
        lambda om: r_transform(spec, -om / lam),
        a,
        b,
        epsabs=0.0,
        epsrel=QUAD_RTOL,
        limit=200,
    )
    logger.debug(f"∫R over [{a}, {b}] = {value} (err {abserr:.1e})")
    return float(value)
