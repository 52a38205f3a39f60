"""Pytest configuration and fixtures for evm_milne tests."""

from pathlib import Path

import numpy as np
import pytest

from evm_milne.backgrounds import FlatTorus, HomogeneousHyperbolic
from evm_milne.config import RunConfig
from evm_milne.harness import random_slice
from evm_milne.scenarios import milne_state, momentum_bump
from evm_milne.state import MomentumLattice, SliceState


@pytest.fixture
def homogeneous() -> HomogeneousHyperbolic:
    """Left-invariant hyperbolic background."""
    return HomogeneousHyperbolic()


@pytest.fixture
def torus() -> FlatTorus:
    """Coarse flat torus with second-order stencils."""
    return FlatTorus(n=8)


@pytest.fixture
def lattice() -> MomentumLattice:
    """Default 9-point momentum lattice."""
    return MomentumLattice(extent=2.5, n=9)


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator."""
    return np.random.default_rng(1234)


@pytest.fixture
def milne(homogeneous, lattice) -> SliceState:
    """Exact Milne slice on the homogeneous background."""
    return milne_state(homogeneous, lattice)


@pytest.fixture
def torus_milne(torus, lattice) -> SliceState:
    """Milne-type data on the flat torus."""
    return milne_state(torus, lattice)


@pytest.fixture
def dusty_milne(milne, lattice) -> SliceState:
    """Milne geometry with a centred momentum bump."""
    bump = momentum_bump(lattice, [0.0, 0.0, 0.0], 1.2, 1e-3)
    return milne.with_fields(f=bump[None, None, None])


@pytest.fixture
def random_state(rng) -> SliceState:
    """Random homogeneous slice near Milne."""
    return random_slice(rng)


@pytest.fixture
def short_config(tmp_path: Path) -> RunConfig:
    """Short Milne run writing into a temporary directory."""
    return RunConfig.from_mapping(
        {
            "scenario": "milne-exact",
            "evolution": {"T_end": 0.2, "dt": 0.1},
            "output": {"path": str(tmp_path / "run")},
        }
    )
