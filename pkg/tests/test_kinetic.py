"""Tests for mass-shell kinematics, lattice derivatives and transport."""

import numpy as np
import pytest

from evm_milne.errors import ShiftTooLarge, SupportOverflow
from evm_milne.geometry import SliceGeometry, lift
from evm_milne.kinetic import (
    commutator_suite,
    kinematics,
    limited_advection,
    minmod,
    momentum_integral,
    momentum_kinematics,
    momentum_vertical_derivatives,
    positivity_limit,
    sasaki_connection,
    transport_coefficients,
    transport_rhs,
    transport_terms,
    vertical_derivative,
)


def _coefficients(state):
    geo = SliceGeometry(state.background, state.g)
    zeros = np.zeros_like(state.X)
    return transport_coefficients(
        state, geo.christoffel, np.zeros_like(state.N), zeros, zeros, np.zeros((3, 3) + state.N.shape)
    )


class TestKinematics:
    """Test cases for the mass-shell functions."""

    def test_zero_shift(self, milne):
        """Test the closed forms without shift."""
        kin = momentum_kinematics(milne)
        tau = milne.tau
        p = milne.lattice.momenta
        p_sq = 9.0 * np.sum(p**2, axis=0)
        np.testing.assert_allclose(kin.p_hat, np.sqrt(1.0 + tau**2 * p_sq))
        np.testing.assert_allclose(kin.p0, kin.p_hat / 3.0)
        np.testing.assert_allclose(kin.P, -9.0 * p / (3.0 * kin.p_hat))

    def test_energy_form_agrees(self, random_state):
        """Test the two closed forms of p0 agree with a nonzero shift."""
        kin = momentum_kinematics(random_state)
        alternative = kin.p0_from_energy(lift(random_state.N), random_state.tau)
        np.testing.assert_allclose(alternative, kin.p0, rtol=1e-12)

    def test_superluminal_shift(self):
        """Test that |X/N|_g >= 1 is rejected."""
        g = np.eye(3)[..., None]
        with pytest.raises(ShiftTooLarge):
            kinematics(g, np.ones(1), np.array([[1.5], [0.0], [0.0]]), -1.0, np.zeros((3, 1)))

    def test_vertical_derivative_of_p0(self, random_state):
        """Test B_a p0 = -tau^2 P_a from the closed forms."""
        kin = momentum_kinematics(random_state)
        vertical = momentum_vertical_derivatives(random_state, kin)
        np.testing.assert_allclose(
            vertical["p0"], -random_state.tau**2 * kin.P, rtol=1e-10, atol=1e-12
        )


class TestLatticeCalculus:
    """Test cases for quadrature and centered differences."""

    def test_integral_of_constant(self, lattice):
        """Test the quadrature of 1 against the identity-metric measure."""
        g = np.eye(3)[..., None, None, None]
        ones = np.ones((1, 1, 1) + (lattice.n,) * 3)
        total = momentum_integral(g, ones, lattice)
        assert total.item() == pytest.approx(lattice.n**3 * lattice.cell_volume)

    def test_vertical_derivative_exact_on_quadratics(self, lattice):
        """Test centered differences reproduce the gradient of a quadratic."""
        p = lattice.momenta
        f = (p[0] ** 2 + 2.0 * p[1] * p[2] - p[2])
        Bf = vertical_derivative(f, lattice)
        np.testing.assert_allclose(Bf[0], np.broadcast_to(2.0 * p[0], f.shape), atol=1e-12)
        np.testing.assert_allclose(Bf[1], np.broadcast_to(2.0 * p[2], f.shape), atol=1e-12)
        np.testing.assert_allclose(Bf[2], np.broadcast_to(2.0 * p[1] - 1.0, f.shape), atol=1e-12)

    def test_commutators_on_quadratic(self, random_state):
        """Test the horizontal/vertical commutation relations on a quadratic."""
        geo = SliceGeometry(random_state.background, random_state.g)
        lattice = random_state.lattice
        p = lattice.momenta
        f = np.broadcast_to(1.0 + p[0] * p[1] - 0.5 * p[2] ** 2, (1, 1, 1) + (lattice.n,) * 3).copy()
        residuals = commutator_suite(random_state.background, geo.christoffel, geo.riemann, f, lattice)
        assert set(residuals) == {"AA", "AB", "BB", "B_euler", "A_euler", "Gamma_euler"}
        for name, value in residuals.items():
            assert value < 1e-9, name

    def test_sasaki_families_are_homogeneous(self, random_state):
        """Test curvature families scale like p and Christoffel families do not."""
        geo = SliceGeometry(random_state.background, random_state.g)
        p = random_state.lattice.momenta
        one = sasaki_connection(geo.christoffel, geo.riemann, p).assemble()
        two = sasaki_connection(geo.christoffel, geo.riemann, 2.0 * p).assemble()
        for block in (np.s_[3:, :3, :3], np.s_[:3, 3:, :3], np.s_[:3, :3, 3:]):
            np.testing.assert_allclose(two[block], 2.0 * one[block], atol=1e-14)
            assert float(np.max(np.abs(one[block]))) > 0.0
        for block in (np.s_[:3, :3, :3], np.s_[3:, 3:, :3]):
            np.testing.assert_allclose(two[block], one[block], atol=1e-14)

    def test_sasaki_zero_families(self, random_state):
        """Test the vanishing Sasaki families are exact zeros."""
        geo = SliceGeometry(random_state.background, random_state.g)
        coeffs = sasaki_connection(geo.christoffel, geo.riemann, random_state.lattice.momenta)
        assert not np.any(coeffs.zero_I_aJ)
        assert not np.any(coeffs.zero_a_IJ)
        assert not np.any(coeffs.zero_I_JK)


class TestTransport:
    """Test cases for the transport right-hand side."""

    def test_empty_distribution(self, milne):
        """Test that f = 0 stays at rest."""
        rhs = transport_rhs(milne, _coefficients(milne))
        assert not np.any(rhs)

    def test_support_overflow(self, milne, lattice):
        """Test that mass on the outer shell is rejected."""
        f = np.zeros(milne.f.shape)
        f[..., 0, lattice.n // 2, lattice.n // 2] = 1.0
        state = milne.with_fields(f=f)
        with pytest.raises(SupportOverflow):
            transport_rhs(state, _coefficients(state))

    def test_unsupported_scheme(self, dusty_milne):
        """Test that an unknown scheme is rejected."""
        with pytest.raises(ValueError, match="Unsupported transport scheme"):
            transport_rhs(dusty_milne, _coefficients(dusty_milne), scheme="spectral")

    def test_centered_sums_terms(self, dusty_milne):
        """Test the centered scheme is the sum of the six terms."""
        coeffs = _coefficients(dusty_milne)
        terms = transport_terms(dusty_milne, coeffs)
        assert set(terms) == {"horizontal", "lapse_gradient", "dilation", "shear", "shift_coupling", "lorentz"}
        np.testing.assert_allclose(
            transport_rhs(dusty_milne, coeffs, scheme="centered"), sum(terms.values())
        )

    def test_upwind_conserves_sign(self, dusty_milne):
        """Test an explicit Euler step of the upwind scheme keeps f non-negative."""
        rhs = transport_rhs(dusty_milne, _coefficients(dusty_milne))
        assert np.all(dusty_milne.f + 1e-3 * rhs >= -1e-15)


class TestLimitedTransport:
    """Test cases for the conservative flux-limited update."""

    def test_minmod(self):
        """Test minmod picks the smaller slope and vanishes at extrema."""
        a = np.array([1.0, -2.0, 3.0, 0.0])
        b = np.array([2.0, -0.5, -1.0, 4.0])
        np.testing.assert_array_equal(minmod(a, b), [1.0, -0.5, 0.0, 0.0])

    def test_constant_velocity_conserves_mass(self, dusty_milne, lattice):
        """Test the interface fluxes telescope for a constant velocity."""
        f = dusty_milne.f
        rhs = limited_advection(f, np.full(f.shape, 0.7), lattice.spacing, -2)
        assert abs(float(np.sum(rhs))) < 1e-12 * float(np.sum(np.abs(rhs)))
        assert float(np.max(np.abs(rhs))) > 0.0

    def test_zero_velocity(self, dusty_milne, lattice):
        """Test nothing moves without a velocity."""
        f = dusty_milne.f
        rhs = limited_advection(f, np.zeros(f.shape), lattice.spacing, -1)
        assert not np.any(rhs)

    def test_linear_profile_is_exact(self):
        """Test a linear profile away from the edges is advected without limiting error."""
        f = np.zeros(11)
        f[3:8] = np.arange(1.0, 6.0)
        rhs = limited_advection(f, np.full(11, 2.0), 1.0, -1)
        np.testing.assert_allclose(rhs[4:7], -2.0)

    def test_positivity_limit_keeps_sample_mass(self, lattice):
        """Test negative values are removed and each spatial sample keeps its mass."""
        f = np.zeros((2, 1, 1) + (lattice.n,) * 3)
        f[0, 0, 0, 4, 4, 4] = 1.0
        f[0, 0, 0, 4, 4, 5] = -0.2
        f[1, 0, 0, 3, 4, 4] = 0.5
        limited = positivity_limit(f)
        assert float(np.min(limited)) >= 0.0
        np.testing.assert_allclose(
            np.sum(limited, axis=(-3, -2, -1)), np.sum(f, axis=(-3, -2, -1)), rtol=1e-14
        )
        np.testing.assert_array_equal(limited[1], f[1])

    def test_positivity_limit_passes_through(self, dusty_milne):
        """Test a non-negative array is returned as is."""
        assert positivity_limit(dusty_milne.f) is dusty_milne.f
