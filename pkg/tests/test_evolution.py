"""Tests for the time stepper, the decomposed evolution form and the constraints."""

import numpy as np
import pytest
from pydantic import ValidationError

from evm_milne.errors import StepSizeViolation
from evm_milne.evolution import (
    POSITIVITY_FLOOR,
    EvolutionConfig,
    RungeKutta4,
    SliceEvolver,
    alternative_evolution_form,
    constraint_residuals,
    continuity_rhs,
    step,
)
from evm_milne.geometry import SliceGeometry, einstein_rhs
from evm_milne.moments import assemble_sources
from evm_milne.scenarios import momentum_bump


class TestEvolutionConfig:
    """Test cases for the evolution configuration."""

    def test_defaults(self):
        """Test default step and integrator."""
        cfg = EvolutionConfig()
        assert cfg.integrator == "rk4"
        assert isinstance(cfg.create_integrator(), RungeKutta4)
        assert cfg.steps == 100

    def test_steps_round_up(self):
        """Test a window that is not a multiple of dt gets one extra step."""
        assert EvolutionConfig(T_end=0.25, dt=0.1).steps == 3

    def test_empty_window(self):
        """Test T_end <= T_start is rejected."""
        with pytest.raises(ValidationError, match="must exceed"):
            EvolutionConfig(T_start=1.0, T_end=1.0)


class TestRungeKutta4:
    """Test cases for the classical integrator."""

    def test_fourth_order(self):
        """Test the global error of y' = y drops by about 2^4 when halving dt."""

        def rhs(T, fields):
            return {"y": fields["y"]}

        errors = []
        for n in (10, 20):
            dt = 1.0 / n
            fields = {"y": np.array([1.0])}
            for k in range(n):
                fields = RungeKutta4().advance(fields, k * dt, dt, rhs)
            errors.append(abs(fields["y"][0] - np.e))
        assert 12.0 < errors[0] / errors[1] < 20.0


class TestSliceEvolver:
    """Test cases for the stepping loop."""

    def test_milne_is_a_fixed_point(self, milne):
        """Test the homogeneous Milne slice stays put over a short run."""
        evolver = SliceEvolver(EvolutionConfig(T_end=0.2, dt=0.1))
        records = list(evolver.run(milne))
        assert [r.step for r in records] == [0, 1, 2]
        final = records[-1].state
        assert final.T == pytest.approx(0.2)
        np.testing.assert_allclose(final.g.components, milne.g.components, atol=1e-12)
        np.testing.assert_allclose(final.sigma.components, 0.0, atol=1e-12)
        np.testing.assert_allclose(final.N, 3.0, atol=1e-12)
        np.testing.assert_allclose(final.X, 0.0, atol=1e-12)

    def test_cadence_reports_final_step(self, milne):
        """Test the final slice is reported even off the cadence."""
        evolver = SliceEvolver(EvolutionConfig(T_end=0.3, dt=0.1, cadence=2))
        assert [r.step for r in evolver.run(milne)] == [0, 2, 3]

    def test_step_guard(self, dusty_milne):
        """Test a step that outruns the momentum support is refused."""
        evolver = SliceEvolver(EvolutionConfig(T_end=1.0, dt=0.1))
        with pytest.raises(StepSizeViolation) as excinfo:
            evolver.step(dusty_milne)
        assert excinfo.value.details["guard"] == 0.5

    def test_dusty_step(self, dusty_milne):
        """Test a small step with dust advances T and keeps f finite."""
        new_state = step(dusty_milne, EvolutionConfig(T_end=1.0, dt=0.01))
        assert new_state.T == pytest.approx(0.01)
        assert np.all(np.isfinite(new_state.f))
        assert float(np.sum(new_state.f)) > 0.0

    def test_off_centre_bump_stays_positive(self, milne, lattice):
        """Test every RK4 step of an off-centre bump keeps min f above the floor."""
        bump = momentum_bump(lattice, [0.5, -0.3, 0.2], 1.0, 1e-3)
        state = milne.with_fields(f=bump[None, None, None])
        evolver = SliceEvolver(EvolutionConfig(T_end=1.0, dt=0.02))
        mass = float(np.sum(state.f))
        for _ in range(5):
            state, _ = evolver.step(state)
            assert state.distribution.min_ratio() >= POSITIVITY_FLOOR
            assert float(np.sum(state.f)) > 0.3 * mass


class TestDecomposedForm:
    """Test cases for the leading-part decomposition."""

    def test_matches_direct_form(self, random_state):
        """Test the decomposed rates agree with d_T g and 6 d_T Sigma."""
        sources = assemble_sources(random_state)
        geo = SliceGeometry(random_state.background, random_state.g)
        dt_g, dt_sigma = einstein_rhs(random_state, sources.S, geo)
        rates = alternative_evolution_form(random_state, sources, geo)
        np.testing.assert_allclose(rates["dt_strain"], dt_g, atol=1e-12)
        np.testing.assert_allclose(rates["dt_six_sigma"], 6.0 * dt_sigma, atol=1e-10)


class TestConstraints:
    """Test cases for the constraint residuals."""

    def test_milne_satisfies_constraints(self, milne):
        """Test all residuals vanish at the Milne slice."""
        residuals = constraint_residuals(milne, assemble_sources(milne))
        for name, value in residuals.items():
            assert value == pytest.approx(0.0, abs=1e-12), name

    def test_hamiltonian_detects_shear(self, milne, homogeneous):
        """Test injected vacuum shear shows up as |Sigma|^2 in the Hamiltonian residual."""
        u = 0.01 * np.einsum("i,j->ij", [1.0, 0.0, 0.0], [0.0, 1.0, 0.0])
        sigma = 9.0 * (u + u.T)[..., None, None, None]
        state = milne.with_fields(sigma=sigma)
        geo = SliceGeometry(homogeneous, state.g)
        residuals = constraint_residuals(state, assemble_sources(state), geo)
        expected = geo.norm_sq(sigma, "dd").item()
        assert residuals["hamiltonian"] == pytest.approx(expected, rel=1e-10)

    def test_continuity_only_with_rates(self, random_state):
        """Test continuity residuals are 0 without measured rates and match the right-hand side."""
        sources = assemble_sources(random_state)
        residuals = constraint_residuals(random_state, sources)
        assert residuals["divergence_rho"] == 0.0
        assert residuals["divergence_j"] == 0.0
        dt_rho, dt_j = continuity_rhs(random_state, sources)
        exact = constraint_residuals(random_state, sources, dt_rho=dt_rho, dt_j=dt_j)
        assert exact["divergence_rho"] == pytest.approx(0.0, abs=1e-14)
        assert exact["divergence_j"] == pytest.approx(0.0, abs=1e-14)
