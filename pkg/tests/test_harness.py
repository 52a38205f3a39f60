"""Tests for the verification harness and scenario runs."""

import json

import numpy as np
import pytest

from evm_milne.config import RunConfig
from evm_milne.harness import (
    SUITES,
    evaluate_gates,
    fit_gronwall,
    fixed_point,
    random_slice,
    reduce,
    reduction_config,
    run_scenario,
    verify,
)


class TestRandomSlice:
    """Test cases for the random slice generator."""

    def test_bounds(self, rng):
        """Test metric closeness, lapse range and the shift bound."""
        for _ in range(5):
            state = random_slice(rng)
            gamma = state.background.gamma
            assert float(np.max(np.abs(state.g.components - gamma))) <= 0.9 + 1e-12
            assert 0.0 < float(np.min(state.N)) <= 3.0
            assert state.tau < 0.0
            assert state.sigma.trace_ratio(state.g) < 1e-12
            assert float(np.sum(state.f)) > 0.0

    def test_reproducible(self):
        """Test the same seed gives the same slice."""
        a = random_slice(np.random.default_rng(7))
        b = random_slice(np.random.default_rng(7))
        np.testing.assert_array_equal(a.g.components, b.g.components)
        np.testing.assert_array_equal(a.f, b.f)


class TestVerify:
    """Test cases for the randomized suites."""

    def test_unknown_suite(self):
        """Test an unknown suite name is rejected."""
        with pytest.raises(ValueError, match="Unsupported verification suite"):
            verify("lorentz", checks=1)

    def test_suite_names(self):
        """Test the advertised suites."""
        assert SUITES == ("identities", "commutators", "moments")

    def test_commutators(self):
        """Test the commutator suite on quadratic distributions."""
        result = verify("commutators", seed=11, checks=2, workers=1)
        assert result["status"] == "pass"
        assert result["checks"] == 2
        assert result["max_residual"] <= 1e-5

    def test_moments(self):
        """Test the moment suite and its orientation residual."""
        result = verify("moments", seed=3, checks=2, workers=2)
        assert result["residuals"]["orientation"] == 0.0
        assert result["residuals"]["lapse_bound"] == 0.0
        assert set(result["residuals"]) == {
            "orientation",
            "rest_density",
            "particle_moments",
            "maxwell_stress",
            "lapse_bound",
        }

    def test_seeding_is_schedule_independent(self):
        """Test the worker count does not change the residuals."""
        one = verify("commutators", seed=5, checks=3, workers=1)
        three = verify("commutators", seed=5, checks=3, workers=3)
        assert one["residuals"] == three["residuals"]

    def test_zero_checks(self):
        """Test an empty suite reports no-data."""
        assert verify("moments", checks=0, workers=1)["status"] == "no-data"

    @pytest.mark.slow
    def test_identities_exact_parts(self):
        """Test the closed-form identities of one random slice."""
        result = verify("identities", seed=1, checks=1, workers=1)
        residuals = result["residuals"]
        assert residuals["sasaki_zero_families"] == 0.0
        assert residuals["vertical_p0_exact"] < 1e-10
        assert residuals["alternative_form"] < 1e-10


class TestFixedPoint:
    """Test cases for the Milne fixed-point check."""

    def test_milne_is_fixed(self, short_config):
        """Test exact Milne data stays put."""
        result = fixed_point(short_config)
        assert result["status"] == "pass"
        assert result["suite"] == "fixed-point"
        assert result["checks"] == 3


class TestGates:
    """Test cases for the acceptance gates."""

    def test_no_rows(self, short_config):
        """Test an empty series has no gates."""
        assert evaluate_gates(short_config, [], {}, None) == {}

    def test_decay_gates(self):
        """Test exponents are checked against their bounds."""
        cfg = RunConfig.from_mapping({})
        rows = [{"N_min": 2.9, "N_max": 3.0, "E_k": 0.0, "tau_G": 0.0}]
        fits = {"strain_norm": {"exponent": -1.0}, "bb_E": {"exponent": -0.5}}
        gates = evaluate_gates(cfg, rows, fits, None)
        assert gates["lapse_bound"] is True
        assert gates["decay_strain_norm"] is True
        assert gates["decay_bb_E"] is False

    def test_gronwall_scan(self):
        """Test the epsilon scan stops at the first admissible value."""
        T = np.linspace(0.0, 5.0, 51)
        result = fit_gronwall(list(T), list(np.exp(-T)), 0.02)
        assert result is not None
        assert result["envelope_ok"] is True
        assert 0.02 <= result["epsilon"] <= 0.2
        assert result["subordinate"] is True

    def test_gronwall_without_data(self):
        """Test a vanishing total has no Gronwall fit."""
        assert fit_gronwall([0.0, 1.0], [0.0, 0.0], 0.02) is None


class TestRunScenario:
    """Test cases for full scenario runs."""

    def test_milne_run(self, short_config):
        """Test a Milne run passes its gates and writes its artifacts."""
        outcome = run_scenario(short_config)
        assert outcome.exit_code == 0
        assert len(outcome.rows) == 3
        assert outcome.summary["gates"]["fixed_point"] is True
        out_dir = short_config.output.path
        assert (out_dir / "series.csv").exists()
        assert (out_dir / "final_state.npz").exists()
        summary = json.loads((out_dir / "summary.json").read_text())
        assert summary["status"] == "pass"

    def test_error_exit(self, tmp_path):
        """Test a configuration failure stops the run with exit code 2."""
        cfg = RunConfig.from_mapping(
            {
                "scenario": "perturbed",
                "perturbation": {"f_width": 3.0},
                "evolution": {"T_end": 0.1, "dt": 0.05},
                "output": {"path": str(tmp_path / "run")},
            }
        )
        outcome = run_scenario(cfg)
        assert outcome.exit_code == 2
        assert outcome.summary["status"] == "fail"
        assert outcome.summary["error"]["class"] == "ConfigError"
        assert (tmp_path / "run" / "summary.json").exists()


class TestReductions:
    """Test cases for the sector reductions."""

    def test_unknown_reduction(self):
        """Test an unknown reduction is rejected."""
        with pytest.raises(ValueError, match="Unsupported reduction"):
            reduction_config("vacuum-only")

    @pytest.mark.slow
    def test_vlasov_only(self):
        """Test switching the Maxwell sector off changes nothing at q = 0."""
        cfg = RunConfig.from_mapping(
            {
                "scenario": "perturbed",
                "lattice": {"n": 9, "P_max": 2.5},
                "evolution": {"T_end": 0.02, "dt": 0.01},
            }
        )
        result = reduce("vlasov-only", cfg)
        assert result["status"] == "pass"
        assert result["suite"] == "reduce-vlasov-only"
