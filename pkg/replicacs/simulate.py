"""
Finite-n Monte Carlo of the sampling system y = A·x + z and its regularized
least-squares reconstruction.

Random streams are counter-based (Philox) and keyed by (seed, trial, stream),
so every trial is reproducible on its own and the x/z streams do not depend on
the ensemble.
"""

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg

from .errors import SizeError
from .models import PenaltySpec, SimConfig, SimReport
from .scalar_channel import distortion_function, prox

logger = logging.getLogger(__name__)

STREAM_X, STREAM_A, STREAM_Z = 0, 1, 2
L0_MAX_N = 20
FISTA_RTOL = 1e-10
FISTA_MAX_ITERS = 100_000


def _generator(seed: int, trial: int, stream: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=(trial, stream)))
    )


def sample_system(cfg: SimConfig, trial: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Draw (A, x, y) for one trial.

    A is k×n: i.i.d. N(0, 1/k) entries, or √r times k orthonormal rows taken from
    the QR factor of a square Gaussian matrix (so A·Aᵀ = r·I_k).

    Args:
        cfg: Simulation configuration
        trial: Trial index (part of the random stream key)

    Returns:
        (A, x, y)
    """
    n, k = cfg.n, cfg.k
    rng_x = _generator(cfg.seed, trial, STREAM_X)
    rng_a = _generator(cfg.seed, trial, STREAM_A)
    rng_z = _generator(cfg.seed, trial, STREAM_Z)

    active = rng_x.random(n) < cfg.prior.s
    x = np.where(active, rng_x.standard_normal(n), 0.0)

    if cfg.ensemble == "iid":
        A = rng_a.standard_normal((k, n)) / math.sqrt(k)
    else:
        Q, R = np.linalg.qr(rng_a.standard_normal((n, n)))
        # Sign fix makes Q Haar-distributed
        Q = Q * np.sign(np.diag(R))
        A = math.sqrt(cfg.r) * Q[:, :k].T

    z = math.sqrt(cfg.lam0) * rng_z.standard_normal(k)
    return A, x, A @ x + z


def _objective(
    A: np.ndarray, y: np.ndarray, v: np.ndarray, lam: float, penalty_sum: float
) -> float:
    resid = y - A @ v
    return float(resid @ resid) / (2.0 * lam) + penalty_sum


def _l1_polish(A: np.ndarray, y: np.ndarray, v: np.ndarray, lam: float) -> Optional[np.ndarray]:
    """Solve the LASSO optimality system on the detected support/signs; None if KKT fails"""
    support = np.flatnonzero(v)
    if support.size == 0 or support.size > A.shape[0]:
        return None
    signs = np.sign(v[support])
    A_s = A[:, support]
    try:
        v_s = scipy.linalg.solve(A_s.T @ A_s, A_s.T @ y - lam * signs, assume_a="pos")
    except (scipy.linalg.LinAlgError, ValueError):
        return None
    if np.any(np.sign(v_s) != signs):
        return None
    polished = np.zeros_like(v)
    polished[support] = v_s
    corr = A.T @ (A @ polished - y) / lam
    off = np.ones(v.size, dtype=bool)
    off[support] = False
    if off.any() and np.max(np.abs(corr[off])) > 1.0:
        return None
    return polished


def _proximal_gradient(
    A: np.ndarray, y: np.ndarray, penalty: PenaltySpec, lam: float, accelerate: bool
) -> Tuple[np.ndarray, int]:
    """(Accelerated) proximal gradient on (1/2λ)‖y - Av‖² + Σu(v_i)"""
    n = A.shape[1]
    lipschitz = float(np.linalg.norm(A, 2)) ** 2 / lam
    step = 1.0 / lipschitz if lipschitz > 0 else 1.0

    def penalty_sum(v: np.ndarray) -> float:
        if penalty.kind == "l1":
            return float(np.abs(v).sum())
        assert penalty.function is not None
        return float(sum(penalty.function(float(t)) for t in v))

    v = np.zeros(n)
    momentum = v.copy()
    t = 1.0
    obj = _objective(A, y, v, lam, 0.0)
    for it in range(1, FISTA_MAX_ITERS + 1):
        grad = A.T @ (A @ momentum - y) / lam
        v_next = np.asarray(prox(penalty, momentum - step * grad, step))
        obj_next = _objective(A, y, v_next, lam, penalty_sum(v_next))
        if accelerate:
            t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            momentum = v_next + ((t - 1.0) / t_next) * (v_next - v)
            t = t_next
        else:
            momentum = v_next
        converged = abs(obj_next - obj) < FISTA_RTOL * max(abs(obj), 1e-300)
        v, obj = v_next, obj_next
        if converged:
            return v, it
    logger.warning(f"proximal gradient hit {FISTA_MAX_ITERS} iterations")
    return v, FISTA_MAX_ITERS


def _l0_exhaustive(A: np.ndarray, y: np.ndarray, lam: float) -> Tuple[np.ndarray, int]:
    """Best subset by enumeration; supports visited in increasing size, strict improvement only"""
    k, n = A.shape
    best_v = np.zeros(n)
    best_obj = float(y @ y) / (2.0 * lam)
    visited = 1
    for size in range(1, n + 1):
        # Every support of this size costs at least `size`
        if size >= best_obj:
            break
        for support in itertools.combinations(range(n), size):
            idx = list(support)
            coef, *_ = np.linalg.lstsq(A[:, idx], y, rcond=None)
            resid = y - A[:, idx] @ coef
            obj = float(resid @ resid) / (2.0 * lam) + size
            visited += 1
            if obj < best_obj:
                best_obj = obj
                best_v = np.zeros(n)
                best_v[idx] = coef
    return best_v, visited


def solve_reconstruction(
    A: np.ndarray, y: np.ndarray, penalty: PenaltySpec, lam: float
) -> Tuple[np.ndarray, int]:
    """
    Minimize (1/2λ)‖y - Av‖² + Σu(v_i) and report the work done.

    Returns:
        (x̂, iterations) where iterations counts proximal-gradient steps, visited
        supports for l0, and 1 for the direct l2 solve

    Raises:
        SizeError: l0 requested with n > 20
    """
    n = A.shape[1]
    if penalty.kind == "l2":
        xhat = scipy.linalg.solve(A.T @ A + lam * np.eye(n), A.T @ y, assume_a="pos")
        return xhat, 1
    if penalty.kind == "l0":
        if n > L0_MAX_N:
            raise SizeError(f"exhaustive l0 reconstruction needs n <= {L0_MAX_N}, got n={n}")
        return _l0_exhaustive(A, y, lam)
    if penalty.kind == "l1":
        v, iterations = _proximal_gradient(A, y, penalty, lam, accelerate=True)
        polished = _l1_polish(A, y, v, lam)
        return (polished if polished is not None else v), iterations
    # Custom penalties may be non-convex; plain proximal gradient
    return _proximal_gradient(A, y, penalty, lam, accelerate=False)


def reconstruct(A: np.ndarray, y: np.ndarray, penalty: PenaltySpec, lam: float) -> np.ndarray:
    """
    Regularized least-squares estimate x̂ = argmin (1/2λ)‖y - Av‖² + Σu(v_i).

    l2 is solved exactly, l1 by FISTA (relative objective change < 1e-10 or 10⁵
    iterations) followed by a support/sign polish, l0 by exhaustive search.

    Args:
        A: k×n sampling matrix
        y: Measurements, length k
        penalty: Scalar penalty
        lam: Tuning factor λ > 0

    Returns:
        x̂, length n

    Raises:
        SizeError: l0 requested with n > 20
    """
    if A.shape[0] != y.shape[0]:
        raise ValueError(f"A has {A.shape[0]} rows but y has length {y.shape[0]}")
    xhat, _ = solve_reconstruction(A, y, penalty, lam)
    return xhat


def _run_trial(cfg: SimConfig, trial: int) -> Tuple[float, int]:
    A, x, y = sample_system(cfg, trial)
    xhat, iterations = solve_reconstruction(A, y, cfg.penalty, cfg.lam)
    d = distortion_function(cfg.distortion)
    return float(np.mean(d(xhat, x))), iterations


def run_sim(cfg: SimConfig, jobs: int = 1) -> SimReport:
    """
    Average the per-entry distortion over independent trials.

    Trials may run concurrently; results are aggregated in trial order so the
    report does not depend on completion order.

    Args:
        cfg: Simulation configuration
        jobs: Worker threads

    Returns:
        SimReport with standard error std(ddof=1)/√trials (0 for one trial)

    Raises:
        SizeError: l0 requested with n > 20
    """
    if cfg.penalty.kind == "l0" and cfg.n > L0_MAX_N:
        raise SizeError(f"exhaustive l0 reconstruction needs n <= {L0_MAX_N}, got n={cfg.n}")

    logger.info(
        f"Simulating {cfg.trials} trial(s): n={cfg.n}, k={cfg.k}, {cfg.ensemble}, "
        f"{cfg.penalty.kind}, λ={cfg.lam}, seed={cfg.seed}"
    )
    trials = range(cfg.trials)
    results: List[Tuple[float, int]]
    if jobs > 1 and cfg.trials > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda t: _run_trial(cfg, t), trials))
    else:
        results = [_run_trial(cfg, t) for t in trials]

    distortions = [d for d, _ in results]
    iterations = [it for _, it in results]
    values = np.asarray(distortions)
    stderr = float(values.std(ddof=1) / math.sqrt(cfg.trials)) if cfg.trials > 1 else 0.0
    report = SimReport(
        mean=float(values.mean()),
        stderr=stderr,
        distortions=distortions,
        iterations=iterations,
        mean_iterations=float(np.mean(iterations)),
        n=cfg.n,
        k=cfg.k,
        trials=cfg.trials,
        seed=cfg.seed,
    )
    logger.info(f"Empirical distortion {report.mean:.6g} ± {report.stderr:.2g}")
    return report
