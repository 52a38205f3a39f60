"""Tests for backgrounds and slice geometry."""

import numpy as np
import pytest

from evm_milne.backgrounds import BackgroundConfig, FlatTorus, HomogeneousHyperbolic
from evm_milne.geometry import (
    EINSTEIN_CONSTANT,
    SliceGeometry,
    cmcsh_gauge_residual,
    difference_tensor,
    einstein_rhs,
    einstein_spectrum,
    geometric_time_derivatives,
    lowest_einstein_eigenvalue,
    spacetime_connection,
    tensor_norm_sq,
    trace_free,
)
from evm_milne.state import SpatialMetric


class TestBackgroundConfig:
    """Test cases for background strategy selection."""

    def test_create_homogeneous(self):
        """Test the default background is the homogeneous model."""
        bg = BackgroundConfig().create()
        assert isinstance(bg, HomogeneousHyperbolic)
        assert bg.spatial_shape == (1, 1, 1)

    def test_create_torus(self):
        """Test creating a torus with a given resolution."""
        bg = BackgroundConfig(kind="torus", n=6, stencil_order=4).create()
        assert isinstance(bg, FlatTorus)
        assert bg.spatial_shape == (6, 6, 6)
        assert bg.order == 4

    def test_unsupported_stencil(self):
        """Test that an unknown stencil order is rejected."""
        with pytest.raises(ValueError, match="Unsupported stencil order"):
            FlatTorus(n=8, order=3)


class TestHomogeneousHyperbolic:
    """Test cases for the left-invariant hyperbolic frame model."""

    def test_einstein_condition(self, homogeneous):
        """Test Ric[gamma] = -(2/9) gamma."""
        np.testing.assert_allclose(
            homogeneous.ricci_gamma, EINSTEIN_CONSTANT * homogeneous.gamma, atol=1e-13
        )

    def test_scalar_curvature(self, homogeneous):
        """Test R[gamma] = -2/3."""
        geo = SliceGeometry(homogeneous, SpatialMetric(components=homogeneous.gamma))
        np.testing.assert_allclose(geo.scalar_curvature, -2.0 / 3.0, atol=1e-13)

    def test_spectrum(self, homogeneous):
        """Test the invariant Einstein spectrum splits into a kernel and positive modes."""
        values, tensors = einstein_spectrum(homogeneous)
        kernel = values[np.abs(values) <= 1e-10]
        assert len(kernel) == 2
        assert len(tensors) == 6
        assert lowest_einstein_eigenvalue(homogeneous) == pytest.approx(1.0 / 3.0, abs=1e-10)

    def test_moduli_projector(self, homogeneous):
        """Test that kernel tensors are removed and admissible ones kept."""
        values, tensors = einstein_spectrum(homogeneous)
        for value, tensor in zip(values, tensors):
            field = tensor[..., None, None, None]
            projected = homogeneous.moduli_projector(field)
            if abs(value) <= 1e-10:
                np.testing.assert_allclose(projected, 0.0, atol=1e-12)
            else:
                np.testing.assert_allclose(projected, field, atol=1e-12)


class TestFlatTorus:
    """Test cases for the periodic grid."""

    def test_central_difference_symbol(self, torus):
        """Test that the stencil differentiates a sine mode with its symbol."""
        x = torus.coordinates[0]
        derivative = torus.partial(np.sin(x), 0)
        symbol = torus.derivative_symbol(np.array(1.0))
        np.testing.assert_allclose(derivative, symbol * np.cos(x), atol=1e-13)

    def test_fourth_order_is_more_accurate(self):
        """Test that the fourth-order stencil beats the second-order one."""
        errors = []
        for order in (2, 4):
            bg = FlatTorus(n=16, order=order)
            x = bg.coordinates[1]
            errors.append(float(np.max(np.abs(bg.partial(np.sin(x), 1) - np.cos(x)))))
        assert errors[1] < errors[0] / 10.0

    def test_quadrature_volume(self, torus):
        """Test the quadrature weights sum to (2 pi)^3."""
        assert torus.volume == pytest.approx((2.0 * np.pi) ** 3)

    def test_null_modes_are_annihilated(self, torus):
        """Test every null mode is in the kernel of the central difference."""
        for mode in torus.null_modes:
            for axis in range(3):
                np.testing.assert_allclose(torus.partial(mode, axis), 0.0, atol=1e-12)


class TestTensorHelpers:
    """Test cases for norms and projections."""

    def test_norm_with_identity(self):
        """Test that the norm reduces to the sum of squares for the identity metric."""
        eye = np.eye(3)[..., None, None, None]
        t = np.arange(9.0).reshape(3, 3, 1, 1, 1)
        assert tensor_norm_sq(eye, eye, t, "dd").item() == pytest.approx(float(np.sum(t**2)))

    def test_trace_free(self, random_state):
        """Test the trace-free part has vanishing g-trace and is symmetric."""
        u = np.random.default_rng(0).normal(size=(3, 3, 1, 1, 1))
        out = trace_free(random_state.g, u)
        np.testing.assert_allclose(random_state.g.trace(out), 0.0, atol=1e-12)
        np.testing.assert_allclose(out, np.swapaxes(out, 0, 1))

    def test_sobolev_norm_of_constant(self, homogeneous):
        """Test the order-zero norm of a constant on the homogeneous sample."""
        geo = SliceGeometry(homogeneous, SpatialMetric(components=homogeneous.gamma))
        assert geo.sobolev_norm(np.full((1, 1, 1), 2.0), "", 0) == pytest.approx(2.0)


class TestEinsteinFlow:
    """Test cases for the geometric evolution formulas."""

    def test_milne_is_stationary(self, milne):
        """Test that g and Sigma do not move at the Milne slice."""
        dt_g, dt_sigma = einstein_rhs(milne, np.zeros((3, 3, 1, 1, 1)))
        np.testing.assert_allclose(dt_g, 0.0, atol=1e-13)
        np.testing.assert_allclose(dt_sigma, 0.0, atol=1e-13)

    def test_rates_vanish_at_milne(self, milne):
        """Test that every geometric rate vanishes at the Milne slice."""
        rates = geometric_time_derivatives(milne, np.zeros((3, 3, 1, 1, 1)))
        for name, value in rates.items():
            np.testing.assert_allclose(value, 0.0, atol=1e-12, err_msg=name)

    def test_gauge_residual_at_background(self, milne):
        """Test the CMCSH vector vanishes for g = gamma."""
        geo = SliceGeometry(milne.background, milne.g)
        np.testing.assert_allclose(cmcsh_gauge_residual(geo), 0.0, atol=1e-14)


class TestConnections:
    """Test cases for difference tensors and the spacetime connection."""

    def test_difference_to_itself_vanishes(self, random_state):
        """Test Upsilon[g, g] = 0."""
        bg = random_state.background
        upsilon = difference_tensor(random_state.g, random_state.g, bg)
        np.testing.assert_allclose(upsilon, 0.0, atol=1e-12)

    def test_difference_to_background(self, random_state):
        """Test Upsilon[g, gamma] = Gamma[g] - Gamma[gamma] in the frame."""
        bg = random_state.background
        reference = SpatialMetric(components=bg.gamma)
        upsilon = difference_tensor(random_state.g, reference, bg)
        expected = bg.frame_christoffel(random_state.g.components)
        expected = expected - bg.christoffel_gamma
        np.testing.assert_allclose(upsilon, expected, atol=1e-10)

    def test_milne_spacetime_connection(self, milne):
        """Test only the spatial family survives at the Milne slice."""
        conn = spacetime_connection(milne)
        families = ("gamma_000", "gamma_i00", "gamma_0i0", "gamma_ij0", "gamma_0ij", "pi")
        for name in families:
            np.testing.assert_allclose(getattr(conn, name), 0.0, atol=1e-14, err_msg=name)
        np.testing.assert_allclose(conn.gamma_ijk, milne.background.christoffel_gamma, atol=1e-12)

    def test_lapse_enters_second_fundamental_form(self, milne):
        """Test Pi = N^-1 (1 - N/3) g for vanishing shear."""
        state = milne.with_fields(N=np.full((1, 1, 1), 2.0))
        conn = spacetime_connection(state)
        np.testing.assert_allclose(conn.pi, state.g.components / 6.0, atol=1e-14)
        np.testing.assert_allclose(conn.gamma_0ij, -state.g.components / 6.0, atol=1e-14)
