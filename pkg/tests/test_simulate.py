"""
Tests for the finite-size Monte Carlo.

- Reproducible, ensemble-independent random streams
- Exact and iterative reconstructions (ℓ2, ℓ1 KKT, ℓ0 exhaustive)
- Trial aggregation and the replica prediction as its large-n limit
"""

import itertools

import numpy as np
import pytest

from replicacs.errors import SizeError
from replicacs.models import (
    EnsembleSpec,
    PenaltySpec,
    RsOptions,
    SimConfig,
    SourcePrior,
    SystemConfig,
)
from replicacs.rs_solver import solve_rs
from replicacs.simulate import reconstruct, run_sim, sample_system, solve_reconstruction

L2 = PenaltySpec(kind="l2")
L1 = PenaltySpec(kind="l1")
L0 = PenaltySpec(kind="l0")


def sim(
    penalty: PenaltySpec = L2,
    n: int = 40,
    r: float = 2.0,
    ensemble: str = "iid",
    lam: float = 0.1,
    lam0: float = 0.01,
    trials: int = 3,
    seed: int = 7,
) -> SimConfig:
    return SimConfig(
        n=n,
        r=r,
        ensemble=ensemble,
        penalty=penalty,
        prior=SourcePrior(s=0.2),
        lam=lam,
        lam0=lam0,
        trials=trials,
        seed=seed,
    )


class TestSampling:
    def test_shapes(self):
        cfg = sim(n=40, r=2.0)
        A, x, y = sample_system(cfg, 0)
        assert cfg.k == 20
        assert A.shape == (20, 40)
        assert x.shape == (40,)
        assert y.shape == (20,)

    def test_reproducible(self):
        cfg = sim()
        A1, x1, y1 = sample_system(cfg, 2)
        A2, x2, y2 = sample_system(cfg, 2)
        assert np.array_equal(A1, A2) and np.array_equal(x1, x2) and np.array_equal(y1, y2)

    def test_trials_differ(self):
        cfg = sim()
        _, x0, _ = sample_system(cfg, 0)
        _, x1, _ = sample_system(cfg, 1)
        assert not np.array_equal(x0, x1)

    def test_source_stream_is_ensemble_independent(self):
        _, x_iid, _ = sample_system(sim(ensemble="iid"), 0)
        _, x_proj, _ = sample_system(sim(ensemble="projector"), 0)
        assert np.array_equal(x_iid, x_proj)

    def test_projector_rows_are_orthogonal(self):
        cfg = sim(ensemble="projector", n=30, r=3.0)
        A, _, _ = sample_system(cfg, 0)
        assert A @ A.T == pytest.approx(3.0 * np.eye(10), abs=1e-10)

    def test_noiseless(self):
        A, x, y = sample_system(sim(lam0=0.0), 0)
        assert y == pytest.approx(A @ x)


class TestReconstruction:
    def test_l2_normal_equations(self):
        A, _, y = sample_system(sim(), 0)
        xhat = reconstruct(A, y, L2, 0.1)
        expected = np.linalg.solve(A.T @ A + 0.1 * np.eye(A.shape[1]), A.T @ y)
        assert xhat == pytest.approx(expected, abs=1e-10)

    def test_l1_optimality(self):
        """KKT: |Aᵀ(y - Ax̂)|/λ <= 1 with equality and matching sign on the support"""
        lam = 0.05
        A, _, y = sample_system(sim(penalty=L1, lam=lam), 0)
        xhat = reconstruct(A, y, L1, lam)
        corr = A.T @ (y - A @ xhat) / lam
        support = np.abs(xhat) > 0
        assert np.all(np.abs(corr) <= 1.0 + 1e-3)
        assert corr[support] == pytest.approx(np.sign(xhat[support]), abs=1e-3)

    def test_l0_is_best_subset(self):
        """Exhaustive search beats every support of size <= 3"""
        lam = 0.05
        A, _, y = sample_system(sim(penalty=L0, n=10, r=2.0, lam=lam), 0)
        xhat = reconstruct(A, y, L0, lam)

        def cost(support):
            if not support:
                return float(y @ y) / (2 * lam)
            idx = list(support)
            coef, *_ = np.linalg.lstsq(A[:, idx], y, rcond=None)
            resid = y - A[:, idx] @ coef
            return float(resid @ resid) / (2 * lam) + len(idx)

        resid = y - A @ xhat
        best = float(resid @ resid) / (2 * lam) + np.count_nonzero(xhat)
        for size in range(4):
            for support in itertools.combinations(range(10), size):
                assert best <= cost(support) + 1e-9

    def test_l0_size_limit(self):
        A = np.zeros((5, 21))
        with pytest.raises(SizeError):
            reconstruct(A, np.zeros(5), L0, 1.0)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            reconstruct(np.zeros((4, 6)), np.zeros(5), L2, 1.0)

    def test_iteration_counts(self):
        A, _, y = sample_system(sim(), 0)
        _, iterations = solve_reconstruction(A, y, L2, 0.1)
        assert iterations == 1
        _, iterations = solve_reconstruction(A, y, L1, 0.1)
        assert iterations >= 1


class TestRunSim:
    def test_report(self):
        report = run_sim(sim(trials=4))
        assert report.trials == 4
        assert len(report.distortions) == 4
        assert len(report.iterations) == 4
        assert report.mean == pytest.approx(np.mean(report.distortions))
        assert report.stderr == pytest.approx(np.std(report.distortions, ddof=1) / 2.0)
        assert report.seed == 7

    def test_single_trial_has_zero_stderr(self):
        assert run_sim(sim(trials=1)).stderr == 0.0

    def test_deterministic_and_thread_independent(self):
        cfg = sim(penalty=L1, trials=4)
        assert run_sim(cfg) == run_sim(cfg, jobs=2)

    def test_l0_size_limit(self):
        with pytest.raises(SizeError):
            run_sim(sim(penalty=L0, n=50))

    def test_orthogonal_shrinkage_is_exact(self):
        """Square orthogonal A without noise: x̂ = x/(1 + λ) per trial"""
        lam = 0.3
        cfg = sim(ensemble="projector", r=1.0, lam=lam, lam0=0.0, n=32, trials=3)
        report = run_sim(cfg)
        for trial, value in enumerate(report.distortions):
            _, x, _ = sample_system(cfg, trial)
            expected = (lam / (1 + lam)) ** 2 * np.mean(x**2)
            assert value == pytest.approx(expected, rel=1e-8)

    def test_orthogonal_shrinkage_matches_prediction(self):
        """The RS prediction is the expectation of the per-trial distortion"""
        lam, s = 0.3, 0.2
        system = SystemConfig(
            ensemble=EnsembleSpec(kind="projector", r=1.0),
            penalty=L2,
            prior=SourcePrior(s=s),
            lam=lam,
            lam0=0.0,
        )
        predicted = solve_rs(system, RsOptions(quadrature_n=16)).D
        assert predicted == pytest.approx(s * (lam / (1 + lam)) ** 2, rel=1e-6)


@pytest.mark.slow
def test_l2_iid_matches_prediction():
    """n = 400, 20 trials: empirical MSE within 10% of the RS prediction"""
    cfg = sim(n=400, r=2.0, lam=0.1, lam0=0.01, trials=20, seed=1)
    report = run_sim(cfg, jobs=4)
    system = SystemConfig(
        ensemble=EnsembleSpec(kind="iid", r=2.0),
        penalty=L2,
        prior=SourcePrior(s=0.2),
        lam=0.1,
        lam0=0.01,
    )
    predicted = solve_rs(system).D
    assert report.mean == pytest.approx(predicted, rel=0.1)


@pytest.mark.slow
def test_l1_iid_matches_prediction():
    """n = 2000, r = 2, s = 0.1, λ = λ0 = 0.01, 50 trials: LASSO MSE within 5% of RS"""
    cfg = SimConfig(
        n=2000,
        r=2.0,
        ensemble="iid",
        penalty=L1,
        prior=SourcePrior(s=0.1),
        lam=0.01,
        lam0=0.01,
        trials=50,
        seed=3,
    )
    report = run_sim(cfg, jobs=4)
    system = SystemConfig(
        ensemble=EnsembleSpec(kind="iid", r=2.0),
        penalty=L1,
        prior=SourcePrior(s=0.1),
        lam=0.01,
        lam0=0.01,
    )
    predicted = solve_rs(system).D
    assert report.mean == pytest.approx(predicted, rel=0.05)
