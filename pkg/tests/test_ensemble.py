"""
Tests for the R-transforms and their integral.

- Closed forms of the i.i.d. and projector ensembles
- Root-finding inversion for tabulated and empirical spectra
- ∫R(-ω/λ)dω in closed form and by quadrature
"""

import math
from functools import lru_cache
from typing import Tuple

import numpy as np
import pytest
from scipy import integrate

from replicacs.ensemble import empirical_r_transform, r_integral, r_transform
from replicacs.errors import DomainError
from replicacs.models import EnsembleSpec, PenaltySpec, SimConfig, SourcePrior
from replicacs.simulate import sample_system


def iid(r: float) -> EnsembleSpec:
    return EnsembleSpec(kind="iid", r=r)


def projector(r: float) -> EnsembleSpec:
    return EnsembleSpec(kind="projector", r=r)


def two_atom(r: float) -> EnsembleSpec:
    """Spectrum of a scaled projector: 0 w.p. 1 - 1/r, r w.p. 1/r"""
    return EnsembleSpec(kind="tabulated", r=r, spectrum=[(0.0, 1.0 - 1.0 / r), (r, 1.0 / r)])


class TestClosedForms:
    """i.i.d. Gaussian and projector ensembles"""

    def test_iid_values(self):
        """R = 1/(1 - rω)"""
        assert r_transform(iid(2.0), -1.0) == pytest.approx(1.0 / 3.0)
        assert r_transform(iid(0.5), -4.0) == pytest.approx(1.0 / 3.0)
        assert r_transform(iid(3.0), 0.0) == 1.0

    def test_iid_pole(self):
        """rω >= 1 is outside the domain"""
        with pytest.raises(DomainError):
            r_transform(iid(2.0), 0.5)
        with pytest.raises(DomainError):
            r_transform(iid(2.0), 1.0)

    def test_non_finite_argument(self):
        with pytest.raises(DomainError):
            r_transform(iid(1.0), math.nan)
        with pytest.raises(DomainError):
            r_transform(projector(2.0), -math.inf)

    def test_projector_rate_one_is_identity(self):
        """Square orthogonal A has the identity Gramian"""
        for omega in (-10.0, -0.3, 0.0, 0.2):
            assert r_transform(projector(1.0), omega) == 1.0

    def test_projector_at_zero(self):
        """R(0) is the spectral mean 1"""
        assert r_transform(projector(4.0), 0.0) == pytest.approx(1.0)

    def test_projector_decreases_along_negative_axis(self):
        values = [r_transform(projector(3.0), -w) for w in (0.01, 0.1, 1.0, 10.0)]
        assert all(b < a for a, b in zip(values, values[1:]))
        assert all(v > 0 for v in values)

    @pytest.mark.parametrize("r", [2.0, 4.0])
    @pytest.mark.parametrize("omega", [-5.0, -0.3, -1e-3])
    def test_projector_matches_two_atom_spectrum(self, r, omega):
        """Closed form agrees with inverting the two-atom Stieltjes transform"""
        assert r_transform(projector(r), omega) == pytest.approx(
            r_transform(two_atom(r), omega), rel=1e-10
        )


class TestAtomicSpectra:
    """Tabulated and empirical spectra"""

    @pytest.mark.parametrize("omega", [-3.0, -0.1, 0.0, 0.4])
    def test_point_mass_is_constant(self, omega):
        """A point mass at c has R ≡ c"""
        spec = EnsembleSpec(kind="tabulated", r=1.0, spectrum=[(2.0, 1.0)])
        assert r_transform(spec, omega) == pytest.approx(2.0, abs=1e-12)

    def test_tabulated_mean_at_zero(self):
        spec = EnsembleSpec(kind="tabulated", r=1.0, spectrum=[(0.5, 0.5), (1.5, 0.5)])
        assert r_transform(spec, 0.0) == pytest.approx(1.0)
        assert spec.mean == pytest.approx(1.0)

    def test_zero_mass_atoms_are_ignored(self):
        spec = EnsembleSpec(kind="tabulated", r=1.0, spectrum=[(1.0, 1.0), (5.0, 0.0)])
        assert r_transform(spec, -0.7) == pytest.approx(1.0, abs=1e-12)

    def test_empirical_constant(self):
        assert empirical_r_transform([1.0, 1.0, 1.0], -0.5) == pytest.approx(1.0, abs=1e-12)

    def test_empirical_matches_tabulated(self):
        eigenvalues = [0.0, 0.0, 0.0, 4.0]
        assert empirical_r_transform(eigenvalues, -0.8) == pytest.approx(
            r_transform(two_atom(4.0), -0.8), rel=1e-10
        )

    def test_empirical_domain(self):
        with pytest.raises(DomainError):
            empirical_r_transform([], -1.0)
        with pytest.raises(DomainError):
            empirical_r_transform([1.0, 2.0], 0.0)
        with pytest.raises(DomainError):
            empirical_r_transform([1.0, 2.0], 0.5)


class TestRIntegral:
    """∫_a^b R(-ω/λ)dω"""

    def test_iid_log_two(self):
        """r = λ = 1 on [0, 1] gives ln 2"""
        assert r_integral(iid(1.0), 1.0, 0.0, 1.0) == pytest.approx(math.log(2.0), rel=1e-12)

    def test_iid_matches_quadrature(self):
        spec, lam = iid(2.5), 0.3
        expected, _ = integrate.quad(lambda w: r_transform(spec, -w / lam), 0.2, 1.7)
        assert r_integral(spec, lam, 0.2, 1.7) == pytest.approx(expected, rel=1e-9)

    def test_projector_rate_one(self):
        """R ≡ 1 integrates to the interval length"""
        assert r_integral(projector(1.0), 0.5, 0.25, 2.0) == pytest.approx(1.75, rel=1e-10)

    def test_orientation_and_empty_interval(self):
        spec = projector(2.0)
        assert r_integral(spec, 1.0, 0.3, 0.3) == 0.0
        assert r_integral(spec, 1.0, 1.0, 0.2) == pytest.approx(-r_integral(spec, 1.0, 0.2, 1.0))

    def test_domain(self):
        with pytest.raises(DomainError):
            r_integral(iid(1.0), 0.0, 0.0, 1.0)
        with pytest.raises(DomainError):
            r_integral(iid(1.0), 1.0, -0.1, 1.0)

    @pytest.mark.parametrize(
        "spec", [iid(2.5), projector(3.0), two_atom(3.0)], ids=["iid", "projector", "tabulated"]
    )
    def test_additive_over_adjacent_intervals(self, spec):
        lam = 0.4
        whole = r_integral(spec, lam, 0.1, 2.0)
        parts = r_integral(spec, lam, 0.1, 0.7) + r_integral(spec, lam, 0.7, 2.0)
        assert parts == pytest.approx(whole, rel=1e-9)


@lru_cache(maxsize=None)
def sampled_gramian_spectrum(ensemble: str) -> Tuple[float, ...]:
    """Eigenvalues of AᵀA for one sampled 1000×2000 matrix (r = 2)"""
    cfg = SimConfig(
        n=2000,
        r=2.0,
        ensemble=ensemble,
        penalty=PenaltySpec(kind="l2"),
        prior=SourcePrior(s=0.1),
        lam=0.1,
        lam0=0.0,
    )
    A, _, _ = sample_system(cfg, 0)
    # AᵀA has the k eigenvalues of AAᵀ plus n - k zeros
    nonzero = np.linalg.eigvalsh(A @ A.T)
    return tuple(np.concatenate([nonzero, np.zeros(cfg.n - cfg.k)]))


class TestSampledGramian:
    """The closed forms describe the Gramians the simulation actually draws"""

    @pytest.mark.parametrize("ensemble", ["iid", "projector"])
    @pytest.mark.parametrize("omega", [-0.1, -0.5, -1.0])
    def test_empirical_matches_closed_form(self, ensemble, omega):
        spec = EnsembleSpec(kind=ensemble, r=2.0)
        empirical = empirical_r_transform(sampled_gramian_spectrum(ensemble), omega)
        assert empirical == pytest.approx(r_transform(spec, omega), rel=0.02)
