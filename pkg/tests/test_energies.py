"""Tests for energy weights, monitored functionals and decay fits."""

import numpy as np
import pytest

from evm_milne.energies import (
    EnergyWeights,
    decay_fit,
    energy_equivalence,
    energy_report,
    geometric_energy,
    gronwall_check,
    support_radius,
    total_energy,
    vlasov_energy,
)
from evm_milne.errors import FitDomainError, InvalidWeights
from evm_milne.geometry import einstein_spectrum
from evm_milne.moments import assemble_sources


class TestEnergyWeights:
    """Test cases for the weight relations."""

    def test_defaults_are_valid(self):
        """Test the default weights satisfy every relation."""
        weights = EnergyWeights()
        assert weights.delta_alpha == 0.0
        assert weights.alpha == 1.0
        assert weights.c_E == 1.0
        assert weights.epsilon == pytest.approx(0.02)

    def test_for_background(self, homogeneous):
        """Test lambda0 is read off the Einstein operator."""
        weights = EnergyWeights.for_background(homogeneous)
        assert weights.lambda0 == pytest.approx(1.0 / 3.0, abs=1e-10)

    def test_ordering_violation(self):
        """Test delta_E must stay below delta_cal_E."""
        with pytest.raises(InvalidWeights) as excinfo:
            EnergyWeights(delta_E=0.03, delta_cal_E=0.02, delta_bb_E=0.03)
        assert "delta_E < delta_cal_E" in excinfo.value.details["violated"]

    def test_small_eigenvalue_rejected(self):
        """Test 9 lambda0 < 1 is rejected."""
        with pytest.raises(InvalidWeights) as excinfo:
            EnergyWeights(lambda0=0.05)
        assert "9 lambda0 >= 1" in excinfo.value.details["violated"]

    def test_sum_bound(self):
        """Test the weights must sum below 0.1."""
        with pytest.raises(InvalidWeights):
            EnergyWeights(delta_E=0.04, delta_cal_E=0.05, delta_bb_E=0.04)


class TestFunctionals:
    """Test cases for the energies of a slice."""

    def test_total_energy_at_start(self):
        """Test the exponential weights are 1 at T = 0."""
        weights = EnergyWeights()
        assert total_energy(0.5, 0.2, 0.1, weights, 0.0) == pytest.approx(0.5 + 0.04 + 0.1)

    def test_total_energy_weighting(self):
        """Test each part picks up its own exponential."""
        weights = EnergyWeights()
        expected = np.exp(1.01) * 1.0 + np.exp(-0.98) * 4.0 + np.exp(-0.99) * 3.0
        assert total_energy(1.0, 2.0, 3.0, weights, 1.0) == pytest.approx(expected)

    def test_milne_report(self, milne):
        """Test every monitor vanishes at the Milne slice."""
        report = energy_report(milne, assemble_sources(milne), EnergyWeights())
        assert report.E_k == 0.0
        assert report.cal_E == 0.0
        assert report.bb_E == 0.0
        assert report.total == 0.0
        assert report.support_G == 0.0
        assert report.smallness_delta == 0.0
        assert report.coercivity == 0.0

    def test_geometric_energy_is_quadratic_in_shear(self, milne, homogeneous):
        """Test E_1 of a pure shear perturbation scales quadratically."""
        values, tensors = einstein_spectrum(homogeneous)
        admissible = tensors[int(np.argmax(values))][..., None, None, None]
        weights = EnergyWeights()
        small = geometric_energy(milne.with_fields(sigma=0.01 * admissible), weights)
        large = geometric_energy(milne.with_fields(sigma=0.02 * admissible), weights)
        assert small > 0.0
        assert large == pytest.approx(4.0 * small, rel=1e-10)

    def test_kernel_shear_is_invisible(self, milne, homogeneous):
        """Test shear along the Einstein kernel does not enter the energy."""
        values, tensors = einstein_spectrum(homogeneous)
        kernel = tensors[int(np.argmin(np.abs(values)))][..., None, None, None]
        energy = geometric_energy(milne.with_fields(sigma=0.01 * kernel), EnergyWeights())
        assert energy == pytest.approx(0.0, abs=1e-14)

    def test_vlasov_energy(self, milne, dusty_milne):
        """Test the Vlasov energy is 0 without matter and positive with it."""
        assert vlasov_energy(milne) == 0.0
        assert vlasov_energy(dusty_milne, ell=0) > 0.0
        assert vlasov_energy(dusty_milne) >= vlasov_energy(dusty_milne, ell=0)

    def test_unsupported_vlasov_order(self, dusty_milne):
        """Test orders above 2 are rejected."""
        with pytest.raises(ValueError, match="Unsupported Vlasov energy order"):
            vlasov_energy(dusty_milne, ell=3)

    def test_equivalence_at_background(self, dusty_milne):
        """Test the g- and gamma-measured energies agree when g = gamma."""
        assert energy_equivalence(dusty_milne) == pytest.approx(1.0)

    def test_support_radius(self, milne, dusty_milne):
        """Test the support radius is 0 for vacuum and inside the bump otherwise."""
        assert support_radius(milne) == 0.0
        radius = support_radius(dusty_milne)
        assert 0.0 < radius < 3.0 * 1.2


class TestDecayFit:
    """Test cases for the log-linear exponent fit."""

    def test_exact_exponential(self):
        """Test the slope of exp(-T) is -1 with a vanishing band."""
        T = np.linspace(0.0, 5.0, 11)
        fit = decay_fit(T, np.exp(-T))
        assert fit["exponent"] == pytest.approx(-1.0)
        assert fit["band"] == pytest.approx(0.0, abs=1e-10)
        assert fit["samples"] == 11
        assert fit["window"] == pytest.approx(5.0)

    def test_window_too_short(self):
        """Test a trailing window with too few samples is refused."""
        T = np.linspace(0.0, 5.0, 11)
        with pytest.raises(FitDomainError):
            decay_fit(T, np.exp(-T), window=3.0)

    def test_non_positive_values(self):
        """Test a zero in the series is refused."""
        T = np.linspace(0.0, 5.0, 11)
        values = np.exp(-T)
        values[4] = 0.0
        with pytest.raises(FitDomainError, match="positive"):
            decay_fit(T, values)


class TestGronwall:
    """Test cases for the differential-inequality check."""

    def test_decaying_series(self):
        """Test a series decaying at rate 1 stays within the envelope."""
        T = np.linspace(0.0, 5.0, 51)
        result = gronwall_check(T, np.exp(-T), epsilon=0.05)
        assert result["envelope_ok"] is True
        assert result["subordinate"] is True
        assert 0.0 <= result["nonlinear_ratio"] < 1.0
        assert result["c_bar"] >= 0.0
        assert result["epsilon"] == 0.05

    def test_long_slow_decay_is_not_subordinate(self):
        """Test a decay slower than 1 - eps needs a C_bar the linear term cannot dominate."""
        T = np.linspace(0.0, 10.0, 101)
        result = gronwall_check(T, np.exp(-T), epsilon=0.02)
        assert result["envelope_ok"] is True
        assert result["nonlinear_ratio"] > 1.0
        assert result["subordinate"] is False

    def test_growing_series(self):
        """Test growth breaks the envelope."""
        T = np.linspace(0.0, 5.0, 51)
        result = gronwall_check(T, np.exp(0.1 * T), epsilon=0.05)
        assert result["envelope_ok"] is False

    def test_single_sample(self):
        """Test one sample is not enough."""
        with pytest.raises(FitDomainError):
            gronwall_check([0.0], [1.0], epsilon=0.05)
