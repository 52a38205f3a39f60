"""Tests for initial-data builders."""

import numpy as np
import pytest

from evm_milne.backgrounds import FlatTorus, HomogeneousHyperbolic
from evm_milne.config import RunConfig
from evm_milne.errors import ConfigError
from evm_milne.scenarios import build_initial_state, milne_state, momentum_bump


class TestMilneState:
    """Test cases for the exact fixed point."""

    def test_fields(self, homogeneous, lattice):
        """Test (g, Sigma, N, X, f) = (gamma, 0, 3, 0, 0)."""
        state = milne_state(homogeneous, lattice, T=0.5)
        np.testing.assert_allclose(state.g.components, homogeneous.gamma)
        assert not np.any(state.sigma.components)
        np.testing.assert_allclose(state.N, 3.0)
        assert not np.any(state.X)
        assert not np.any(state.f)
        assert state.tau == pytest.approx(-3.0 * np.exp(-0.5))


class TestMomentumBump:
    """Test cases for the compactly supported bump."""

    def test_mass(self, lattice):
        """Test the coordinate mass matches the request."""
        bump = momentum_bump(lattice, [0.0, 0.0, 0.0], 1.2, 0.5)
        assert float(np.sum(bump)) * lattice.cell_volume == pytest.approx(0.5)
        assert np.all(bump >= 0.0)

    def test_boundary(self, lattice):
        """Test a bump reaching the outer shells is refused."""
        with pytest.raises(ConfigError, match="lattice boundary"):
            momentum_bump(lattice, [1.5, 0.0, 0.0], 1.2, 1.0)

    def test_missing_points(self, lattice):
        """Test a bump between lattice points is refused."""
        with pytest.raises(ConfigError, match="misses every lattice point"):
            momentum_bump(lattice, [0.3125, 0.3125, 0.3125], 0.1, 1.0)


class TestBuildInitialState:
    """Test cases for the scenario menu."""

    def test_milne_exact_ignores_perturbation(self, homogeneous):
        """Test milne-exact returns the fixed point."""
        cfg = RunConfig.from_mapping({"scenario": "milne-exact"})
        state = build_initial_state(cfg, homogeneous)
        np.testing.assert_allclose(state.g.components, homogeneous.gamma)
        assert not np.any(state.f)

    def test_perturbed_homogeneous(self):
        """Test a homogeneous perturbation is small, admissible and nearly trace-free."""
        bg = HomogeneousHyperbolic()
        cfg = RunConfig.from_mapping({"perturbation": {"amplitude": 1e-3}})
        state = build_initial_state(cfg, bg, np.random.default_rng(3))
        strain = state.g.components - bg.gamma
        assert 0.0 < float(np.max(np.abs(strain))) <= 9.0e-3 + 1e-15
        np.testing.assert_allclose(bg.moduli_projector(strain), strain, atol=1e-14)
        assert state.sigma.trace_ratio(state.g) < 1e-2
        assert float(np.sum(state.f)) * state.lattice.cell_volume == pytest.approx(1e-3)
        assert not np.any(state.potential.omega)

    def test_perturbed_torus(self):
        """Test the torus potential is divergence-free and f is modulated in space."""
        bg = FlatTorus(n=8)
        cfg = RunConfig.from_mapping({"background": {"kind": "torus", "n": 8}})
        state = build_initial_state(cfg, bg, np.random.default_rng(5))
        omega = state.potential.omega
        assert float(np.max(np.abs(omega))) > 0.0
        divergence = sum(bg.partial(omega[a], a) for a in range(3))
        np.testing.assert_allclose(divergence, 0.0, atol=1e-14)
        mass = np.sum(state.f, axis=(-3, -2, -1))
        assert float(np.max(mass)) > float(np.min(mass))

    def test_charged_default_charge(self, homogeneous):
        """Test charged-perturb switches on a unit charge when none is set."""
        cfg = RunConfig.from_mapping({"scenario": "charged-perturb"})
        assert build_initial_state(cfg, homogeneous).charge == 1.0
        cfg = RunConfig.from_mapping({"scenario": "charged-perturb", "charge": -0.5})
        assert build_initial_state(cfg, homogeneous).charge == -0.5

    def test_unsupported_mode(self, homogeneous):
        """Test a mode outside the admissible menu is refused."""
        cfg = RunConfig.from_mapping({"perturbation": {"metric_modes": [7]}})
        with pytest.raises(ConfigError, match="Unsupported homogeneous mode"):
            build_initial_state(cfg, homogeneous)
