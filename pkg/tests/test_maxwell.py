"""Tests for the Maxwell core."""

import numpy as np
import pytest

from evm_milne.elliptic import SolverSettings
from evm_milne.errors import EllipticSolvabilityError, EVMError, FrameChangeMismatch
from evm_milne.geometry import SliceGeometry
from evm_milne.maxwell import (
    CurrentDensities,
    FaradayField,
    bianchi_residual,
    currents,
    divergence,
    faraday_from_potential,
    gauge_project,
    hodge_laplacian,
    maxwell_stress,
    omega_wave_rhs,
    solve_psi,
    spacetime_stress,
)


def _sine_potential(state):
    x = state.background.coordinates
    omega = np.zeros((3,) + state.background.spatial_shape)
    omega[0] = np.cos(x[0]) + 0.5 * np.sin(x[1])
    omega[1] = np.sin(x[2])
    return state.with_fields(omega=omega)


class TestFaraday:
    """Test cases for the Faraday tensor assembly."""

    def test_zero_potential(self, milne):
        """Test a vanishing potential gives a vanishing field."""
        F = faraday_from_potential(milne)
        assert not np.any(F.F0)
        assert not np.any(F.Fij)
        assert not np.any(F.F_hat0)

    def test_magnetic_part_is_closed(self, torus_milne):
        """Test F_ij is antisymmetric and satisfies the cyclic identity."""
        state = _sine_potential(torus_milne)
        F = faraday_from_potential(state)
        np.testing.assert_allclose(F.Fij, -np.swapaxes(F.Fij, 0, 1), atol=1e-14)
        assert bianchi_residual(state, F) < 1e-12
        assert float(np.max(np.abs(F.Fij))) > 0.1

    def test_frame_change_mismatch_is_reported(self, torus_milne, mocker):
        """Test a frame-change mismatch raises a structured error."""
        mocker.patch("evm_milne.maxwell.FRAME_CHANGE_TOL", -1.0)
        with pytest.raises(FrameChangeMismatch) as info:
            faraday_from_potential(_sine_potential(torus_milne))
        assert isinstance(info.value, EVMError)
        payload = info.value.to_dict()
        assert payload["class"] == "FrameChangeMismatch"
        assert payload["details"]["mismatch"] >= 0.0


class TestGauge:
    """Test cases for the slice-adapted gauge projection."""

    def test_torus_projection_is_divergence_free(self, torus_milne):
        """Test the projected potential has zero mean and zero divergence."""
        state = _sine_potential(torus_milne)
        geo = SliceGeometry(state.background, state.g)
        pot = gauge_project(state, geo=geo)
        np.testing.assert_allclose(np.mean(pot.omega, axis=(-3, -2, -1)), 0.0, atol=1e-12)
        assert float(np.max(np.abs(divergence(geo, pot.omega)))) < 1e-8
        # the divergence-free mode survives
        np.testing.assert_allclose(pot.omega[1], state.potential.omega[1], atol=1e-8)

    def test_torus_projection_removes_gradients(self, torus_milne):
        """Test a pure gradient is removed from omega and L_{e0} omega alike."""
        bg = torus_milne.background
        grad = bg.gradient(np.cos(bg.coordinates[0]) + 0.5 * np.sin(bg.coordinates[2]))
        state = torus_milne.with_fields(omega=grad, omega_dot=2.0 * grad)
        pot = gauge_project(state)
        assert float(np.max(np.abs(pot.omega))) < 1e-6
        assert float(np.max(np.abs(pot.omega_dot))) < 1e-6

    def test_torus_projection_keeps_transverse_omega_dot(self, torus_milne):
        """Test the divergence-free part of L_{e0} omega survives."""
        state = _sine_potential(torus_milne)
        state = state.with_fields(omega_dot=state.potential.omega.copy())
        geo = SliceGeometry(state.background, state.g)
        pot = gauge_project(state, geo=geo)
        assert float(np.max(np.abs(divergence(geo, pot.omega_dot)))) < 1e-8
        np.testing.assert_allclose(pot.omega_dot[1], state.potential.omega_dot[1], atol=1e-8)

    def test_homogeneous_projection_is_divergence_free(self, random_state, rng):
        """Test the invariant projection removes the divergent directions."""
        omega = rng.normal(size=(3, 1, 1, 1))
        state = random_state.with_fields(omega=omega, omega_dot=omega.copy())
        geo = SliceGeometry(state.background, state.g)
        pot = gauge_project(state, geo=geo)
        assert float(np.max(np.abs(divergence(geo, pot.omega)))) < 1e-12
        assert float(np.max(np.abs(divergence(geo, pot.omega_dot)))) < 1e-12

    def test_psi_mean_removed(self, torus_milne):
        """Test Psi is shifted to zero mean."""
        x = torus_milne.background.coordinates
        state = torus_milne.with_fields(psi=2.0 + np.cos(x[0]))
        pot = gauge_project(state)
        assert float(np.mean(pot.psi)) == pytest.approx(0.0, abs=1e-12)


class TestCurrents:
    """Test cases for charge currents and the Psi equation."""

    def test_uncharged(self, dusty_milne):
        """Test q = 0 gives vanishing currents."""
        cur = currents(dusty_milne)
        assert not np.any(cur.J0)
        assert not np.any(cur.J)

    def test_density_and_leading_ratio(self, dusty_milne):
        """Test J0 = q N int f and J0 is bounded by the leading term."""
        state = dusty_milne.model_copy(update={"charge": 2.0})
        cur = currents(state)
        mass = float(np.sum(state.f)) * state.lattice.cell_volume * np.sqrt(9.0**3)
        assert cur.J0.item() == pytest.approx(2.0 * 3.0 * mass)
        assert cur.leading_ratio <= 1.0 + 1e-12

    def test_nonzero_mean_without_background(self, torus_milne):
        """Test a net charge is rejected when no neutralizing background is configured."""
        shape = torus_milne.background.spatial_shape
        cur = CurrentDensities(J0=np.ones(shape), J=np.zeros((3,) + shape))
        settings = SolverSettings(neutralizing_background=False)
        with pytest.raises(EllipticSolvabilityError):
            solve_psi(torus_milne, torus_milne.potential, cur, settings)

    def test_neutralizing_background_reports_defect(self, torus_milne):
        """Test the removed mean is reported as the charge defect."""
        shape = torus_milne.background.spatial_shape
        cur = CurrentDensities(J0=np.full(shape, 3.0), J=np.zeros((3,) + shape))
        psi, defect = solve_psi(torus_milne, torus_milne.potential, cur)
        assert defect == pytest.approx(1.0)
        np.testing.assert_allclose(psi, 0.0, atol=1e-10)


class TestStress:
    """Test cases for the electromagnetic stress."""

    def test_rescaled_matches_spacetime_assembly(self, random_state, rng):
        """Test the rescaled formulas against the 4x4 metric assembly."""
        F0 = rng.uniform(-1.0, 1.0, size=(3, 1, 1, 1))
        raw = rng.uniform(-1.0, 1.0, size=(3, 3, 1, 1, 1))
        F = FaradayField(F0=F0, Fij=raw - np.swapaxes(raw, 0, 1), F_hat0=np.zeros((3, 1, 1, 1)))
        rescaled, direct = maxwell_stress(random_state, F), spacetime_stress(random_state, F)
        for name in ("T00", "T0i", "Tij", "F_sq"):
            expected = getattr(direct, name)
            scale = max(float(np.max(np.abs(expected))), 1e-300)
            assert float(np.max(np.abs(getattr(rescaled, name) - expected))) / scale < 1e-9, name


class TestWaveEquation:
    """Test cases for the second-order potential equation."""

    def test_vacuum_at_rest(self, torus_milne):
        """Test a vanishing potential stays at rest."""
        state = torus_milne
        F = faraday_from_potential(state)
        zero = np.zeros_like(state.N)
        wave = omega_wave_rhs(state, state.potential, F, currents(state), zero, zero)
        np.testing.assert_allclose(wave, 0.0, atol=1e-14)

    def test_milne_reduces_to_hodge_laplacian(self, torus_milne):
        """Test only -Delta_H omega survives for N = 3, Pi = 0 and Psi = 0."""
        state = _sine_potential(torus_milne)
        geo = SliceGeometry(state.background, state.g)
        F = faraday_from_potential(state, geo=geo)
        zero = np.zeros_like(state.N)
        wave = omega_wave_rhs(state, state.potential, F, currents(state), zero, zero, geo=geo)
        np.testing.assert_allclose(wave, -hodge_laplacian(geo, state.potential.omega), atol=1e-12)
