#!/usr/bin/env python3
"""Test that the pydantic models validate their invariants"""

import math

import pytest
from pydantic import ValidationError

from replicacs.models import (
    EnsembleSpec,
    LambdaMinimization,
    PenaltySpec,
    RsbSolution,
    RsSolution,
    RunConfig,
    SimConfig,
    SourcePrior,
    SweepSpec,
    SystemConfig,
)


def test_ensemble_validation() -> None:
    """Rates, projector range and tabulated spectra"""
    assert EnsembleSpec(kind="iid", r=0.5).mean == 1.0
    with pytest.raises(ValidationError):
        EnsembleSpec(kind="iid", r=0.0)
    with pytest.raises(ValidationError):
        EnsembleSpec(kind="iid", r=math.inf)
    with pytest.raises(ValidationError):
        EnsembleSpec(kind="projector", r=0.5)
    with pytest.raises(ValidationError):
        EnsembleSpec(kind="tabulated", r=1.0, spectrum=[(1.0, 0.5)])
    with pytest.raises(ValidationError):
        EnsembleSpec(kind="tabulated", r=1.0, spectrum=[(-1.0, 1.0)])
    with pytest.raises(ValidationError):
        EnsembleSpec(kind="iid", r=1.0, spectrum=[(1.0, 1.0)])
    print("✓ EnsembleSpec validation works")


def test_penalty_validation() -> None:
    assert PenaltySpec(kind="custom", function=lambda v: v * v).function is not None
    with pytest.raises(ValidationError):
        PenaltySpec(kind="custom")
    with pytest.raises(ValidationError):
        PenaltySpec(kind="custom", function=lambda v: 1.0 + v)
    with pytest.raises(ValidationError):
        PenaltySpec(kind="l1", function=abs)
    print("✓ PenaltySpec validation works")


def test_prior_range() -> None:
    assert SourcePrior(s=0.0).second_moment == 0.0
    with pytest.raises(ValidationError):
        SourcePrior(s=1.5)


def test_system_aliases() -> None:
    """λ and λ0 accept both field names and the JSON keys"""
    common = dict(
        ensemble=EnsembleSpec(kind="iid", r=2.0),
        penalty=PenaltySpec(kind="l2"),
        prior=SourcePrior(s=0.1),
    )
    by_name = SystemConfig(lam=0.1, lam0=0.01, **common)
    by_alias = SystemConfig.model_validate({"lambda": 0.1, "lambda0": 0.01, **common})
    assert by_name == by_alias
    with pytest.raises(ValidationError):
        SystemConfig(lam=0.0, lam0=0.01, **common)
    print("✓ SystemConfig aliases work")


def test_solutions() -> None:
    """Solutions nest their alternatives"""
    alt = RsSolution(chi=1.0, q=0.1, status="Converged")
    sol = RsSolution(chi=0.5, q=0.05, status="Converged", alternatives=[alt])
    assert sol.converged
    assert sol.alternatives[0].chi == 1.0
    assert not RsbSolution(status="MuRootNotBracketed").converged
    with pytest.raises(ValidationError):
        RsSolution(status="MuRootNotBracketed")


def test_sim_config() -> None:
    cfg = SimConfig(
        n=100, r=3.0, penalty=PenaltySpec(kind="l1"), prior=SourcePrior(s=0.1), lam=0.1, lam0=0.0
    )
    assert cfg.k == 33
    assert cfg.seed == 0 and cfg.trials == 1
    with pytest.raises(ValidationError):
        SimConfig(
            n=2, r=10.0, penalty=PenaltySpec(kind="l1"), prior=SourcePrior(s=0.1), lam=0.1, lam0=0
        )
    with pytest.raises(ValidationError):
        SimConfig(
            n=10,
            r=0.5,
            ensemble="projector",
            penalty=PenaltySpec(kind="l1"),
            prior=SourcePrior(s=0.1),
            lam=0.1,
            lam0=0.0,
        )


class TestSweepSpec:
    def test_range_grid(self):
        """{start, stop, step} expands inclusively"""
        spec = SweepSpec(variable="lambda", grid={"start": 0.2, "stop": 3.0, "step": 0.05})
        assert len(spec.grid) == 57
        assert spec.grid[0] == 0.2
        assert spec.grid[-1] == pytest.approx(3.0)
        assert spec.solvers == ["rs"]

    def test_grid_must_increase(self):
        with pytest.raises(ValidationError):
            SweepSpec(variable="rate", grid=[1.0, 1.0, 2.0])
        with pytest.raises(ValidationError):
            SweepSpec(variable="rate", grid=[])

    def test_empty_solver_set(self):
        with pytest.raises(ValidationError):
            SweepSpec(variable="rate", grid=[1.0], solvers=[])

    def test_minimization_needs_rate_sweep(self):
        with pytest.raises(ValidationError):
            SweepSpec(
                variable="lambda", grid=[0.1, 0.2], minimize_lambda={"grid": [0.1, 0.2]}
            )

    def test_lambda_grid_positive(self):
        with pytest.raises(ValidationError):
            LambdaMinimization(grid=[0.0, 0.1])


class TestRunConfig:
    base = {"r": 2.0, "penalty": "l1", "s": 0.1, "lambda": 0.1, "lambda0": 0.01}

    def test_defaults(self):
        cfg = RunConfig.model_validate(self.base)
        assert cfg.ensemble == "iid"
        assert cfg.solver == ["rs"]
        assert cfg.rs_options().quadrature_n == 96

    def test_quadrature_reaches_solver_options(self):
        cfg = RunConfig.model_validate({**self.base, "quadrature": {"N": 40}, "rs": {"tol": 1e-9}})
        assert cfg.rs_options().quadrature_n == 40
        assert cfg.rs_options().tol == 1e-9
        assert cfg.rsb_options().quadrature_n == 40

    def test_unknown_keys_rejected(self):
        with pytest.raises(ValidationError):
            RunConfig.model_validate({**self.base, "lamda": 0.1})
        with pytest.raises(ValidationError):
            RunConfig.model_validate({**self.base, "rs": {"dampnig": 0.3}})

    def test_spectrum_only_for_tabulated(self):
        with pytest.raises(ValidationError):
            RunConfig.model_validate({**self.base, "ensemble": "tabulated"})
        with pytest.raises(ValidationError):
            RunConfig.model_validate({**self.base, "spectrum": "spec.csv"})
        cfg = RunConfig.model_validate({**self.base, "ensemble": "tabulated", "spectrum": "s.csv"})
        assert cfg.spectrum == "s.csv"


if __name__ == "__main__":
    print("Testing replicacs models...\n")
    test_ensemble_validation()
    test_penalty_validation()
    test_prior_range()
    test_system_aliases()
    test_solutions()
    test_sim_config()
    print("\n✓ All model tests passed!")
