"""Tests for the lapse, shift and scalar elliptic solvers."""

import numpy as np
import pytest

from evm_milne.elliptic import (
    EllipticProblem,
    SolverSettings,
    remove_mean,
    solve_lapse,
    solve_scalar,
    solve_shift,
    solve_time_derivatives,
)
from evm_milne.errors import EllipticSolvabilityError, LapsePositivityViolation
from evm_milne.geometry import SliceGeometry
from evm_milne.state import SpatialMetric


def _flat_metric(bg):
    return SpatialMetric(components=bg.gamma.copy())


class TestLapse:
    """Test cases for the lapse equation."""

    def test_milne_lapse(self, milne):
        """Test N = 3 at the Milne slice."""
        N = solve_lapse(milne, np.zeros((1, 1, 1)))
        np.testing.assert_allclose(N, 3.0)

    def test_homogeneous_closed_form(self, random_state):
        """Test N = 3 / (1 + 3 |Sigma|^2) without matter."""
        geo = SliceGeometry(random_state.background, random_state.g)
        sigma_sq = geo.norm_sq(random_state.sigma.components, "dd")
        N = solve_lapse(random_state, np.zeros((1, 1, 1)), geo=geo)
        np.testing.assert_allclose(N, 3.0 / (1.0 + 3.0 * sigma_sq), rtol=1e-12)
        assert np.all(N <= 3.0)

    def test_positivity_violation(self, milne):
        """Test a pressure with the wrong orientation drives N negative."""
        with pytest.raises(LapsePositivityViolation):
            solve_lapse(milne, np.ones((1, 1, 1)))

    def test_torus_milne_lapse(self, torus_milne):
        """Test the Krylov path returns N = 3 for unperturbed torus data."""
        N = solve_lapse(torus_milne, np.zeros(torus_milne.background.spatial_shape))
        np.testing.assert_allclose(N, 3.0, rtol=1e-8)


class TestScalarSolver:
    """Test cases for the generic scalar solve."""

    @pytest.mark.parametrize("preconditioner", ["jacobi", "spectral"])
    def test_constant_solution(self, torus, preconditioner):
        """Test (-Delta + 1/3) u = 1 gives u = 3."""
        geo = SliceGeometry(torus, _flat_metric(torus))
        problem = EllipticProblem(
            coefficient=np.full(torus.spatial_shape, 1.0 / 3.0),
            rhs=np.ones(torus.spatial_shape),
        )
        u = solve_scalar(geo, problem, SolverSettings(preconditioner=preconditioner))
        np.testing.assert_allclose(u, 3.0, rtol=1e-8)

    def test_zero_mean_mode(self, torus):
        """Test -Delta u = cos x against the stencil symbol."""
        geo = SliceGeometry(torus, _flat_metric(torus))
        x = torus.coordinates[0]
        problem = EllipticProblem(
            coefficient=np.zeros(torus.spatial_shape), rhs=np.cos(x), zero_mean=True
        )
        u = solve_scalar(geo, problem, SolverSettings())
        h = torus.spacing
        np.testing.assert_allclose(u, np.cos(x) * h**2 / np.sin(h) ** 2, atol=1e-8)

    def test_homogeneous_is_algebraic(self, homogeneous):
        """Test the homogeneous path divides by the coefficient."""
        geo = SliceGeometry(homogeneous, _flat_metric(homogeneous))
        problem = EllipticProblem(coefficient=np.full((1, 1, 1), 0.5), rhs=np.full((1, 1, 1), 2.0))
        assert solve_scalar(geo, problem, SolverSettings()).item() == pytest.approx(4.0)


class TestSolvability:
    """Test cases for mean removal."""

    def test_negligible_mean_passes(self, torus):
        """Test a zero-mean right-hand side is accepted without a background."""
        geo = SliceGeometry(torus, _flat_metric(torus))
        rhs = np.sin(torus.coordinates[2])
        out, mean = remove_mean(geo, rhs, SolverSettings(neutralizing_background=False), "test")
        assert mean == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(out, rhs, atol=1e-12)

    def test_nonzero_mean_rejected(self, torus):
        """Test a net source is rejected when the background is disabled."""
        geo = SliceGeometry(torus, _flat_metric(torus))
        settings = SolverSettings(neutralizing_background=False)
        with pytest.raises(EllipticSolvabilityError) as excinfo:
            remove_mean(geo, np.full(torus.spatial_shape, 0.5), settings, "lapse")
        assert excinfo.value.details["mean"] == pytest.approx(0.5)

    def test_nonzero_mean_neutralized(self, torus):
        """Test the neutralizing background removes the mean and reports it."""
        geo = SliceGeometry(torus, _flat_metric(torus))
        out, mean = remove_mean(geo, np.full(torus.spatial_shape, 0.5), SolverSettings(), "lapse")
        assert mean == pytest.approx(0.5)
        np.testing.assert_allclose(out, 0.0, atol=1e-14)


class TestShift:
    """Test cases for the shift and the differentiated gauge equations."""

    def test_milne_shift_vanishes(self, milne):
        """Test X = 0 solves the shift equation at the Milne slice."""
        X = solve_shift(milne, np.zeros((3, 1, 1, 1)), milne.N)
        np.testing.assert_allclose(X, 0.0, atol=1e-14)

    def test_torus_milne_shift_vanishes(self, torus_milne):
        """Test the torus path keeps a vanishing shift."""
        shape = torus_milne.background.spatial_shape
        X = solve_shift(torus_milne, np.zeros((3,) + shape), torus_milne.N)
        np.testing.assert_allclose(X, 0.0, atol=1e-12)

    def test_milne_rates_vanish(self, milne):
        """Test d_T N and d_T X vanish at the Milne slice."""
        scalar, vector = np.zeros((1, 1, 1)), np.zeros((3, 1, 1, 1))
        rates = solve_time_derivatives(
            milne, scalar, vector, np.zeros((3, 3, 1, 1, 1)), scalar, vector
        )
        np.testing.assert_allclose(rates["dt_N"], 0.0, atol=1e-13)
        np.testing.assert_allclose(rates["dt_X"], 0.0, atol=1e-13)
