#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Run Configuration

Versioned TOML run configuration with nested sections. Unknown keys are
rejected. Environment variables (optionally from a ``.env`` file):

    EVM_THREADS    worker cap for the verification suites
    EVM_LOG_LEVEL  default log level of the ``evm`` command
"""

import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .backgrounds import BackgroundConfig, BackgroundKind
from .elliptic import SolverSettings
from .energies import EnergyOrders, EnergyWeights
from .errors import ConfigError
from .evolution import EvolutionConfig
from .kinetic import TransportScheme

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)

load_dotenv()

SCHEMA_VERSION = 1

ScenarioName = Literal["milne-exact", "perturbed", "charged-perturb", "identity-suite"]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class BackgroundSection(_Section):
    kind: BackgroundKind = "homogeneous"
    n: int = Field(default=16, ge=4, description="Torus samples per axis")
    stencil_order: Literal[2, 4] = 2

    def to_config(self, kernel_tol: float) -> BackgroundConfig:
        return BackgroundConfig(kind=self.kind, n=self.n, stencil_order=self.stencil_order, kernel_tol=kernel_tol)


class LatticeSection(_Section):
    n: int = Field(default=9, ge=5)
    P_max: float = Field(default=2.5, gt=0.0)

    @field_validator("n")
    @classmethod
    def _odd(cls, v: int) -> int:
        if v % 2 == 0:
            raise ValueError(f"lattice size must be odd, got {v}")
        return v


class EvolutionSection(_Section):
    T0: float = 0.0
    T_end: float = 5.0
    dt: float = Field(default=0.05, gt=0.0)
    tau0: float = Field(default=-3.0, lt=0.0)
    cfl_guard: float = Field(default=0.5, gt=0.0)
    cadence: int = Field(default=1, ge=1)
    transport_scheme: TransportScheme = "upwind"
    include_vlasov: bool = True
    include_maxwell: bool = True

    def to_config(self) -> EvolutionConfig:
        return EvolutionConfig(
            dt=self.dt,
            T_start=self.T0,
            T_end=self.T_end,
            cfl_guard=self.cfl_guard,
            cadence=self.cadence,
            transport_scheme=self.transport_scheme,
            include_vlasov=self.include_vlasov,
            include_maxwell=self.include_maxwell,
        )


class WeightsSection(_Section):
    delta_E: float = 0.01
    delta_cal_E: float = 0.02
    delta_bb_E: float = 0.01
    epsilon_tot: float = 0.0
    geometric_order: int = Field(default=2, ge=1, le=2)
    vlasov_order: int = Field(default=2, ge=0, le=2)
    mu: int = Field(default=4, ge=0)
    maxwell_order: int = Field(default=2, ge=1, le=2)
    faraday_order: int = Field(default=2, ge=0, le=2)
    density_order: int = Field(default=2, ge=0, le=2)

    def orders(self) -> EnergyOrders:
        return EnergyOrders(
            geometric=self.geometric_order,
            vlasov=self.vlasov_order,
            mu=self.mu,
            maxwell=self.maxwell_order,
            faraday=self.faraday_order,
            density=self.density_order,
        )


class PerturbationSection(_Section):
    amplitude: float = Field(default=1e-3, ge=0.0)
    metric_modes: List[int] = Field(default_factory=lambda: [1])
    sigma_modes: List[int] = Field(default_factory=lambda: [1])
    omega_modes: List[int] = Field(default_factory=lambda: [1])
    f_mass: float = Field(default=1e-3, ge=0.0, description="Total rest mass of the bump")
    f_width: float = Field(default=1.2, gt=0.0, description="Bump radius")
    f_center: List[float] = Field(default_factory=lambda: [0.0, 0.0, 0.0])


class SolverSection(_Section):
    tol: float = Field(default=1e-10, gt=0.0)
    max_iter: int = Field(default=50, ge=1)
    krylov_max_iter: int = Field(default=2000, ge=1)
    kernel_tol: float = Field(default=1e-10, gt=0.0)
    preconditioner: Literal["jacobi", "spectral"] = "jacobi"
    neutralizing_background: bool = True
    psi_rate_mode: Literal["differencing", "differentiated"] = "differencing"

    def to_settings(self) -> SolverSettings:
        return SolverSettings(**self.model_dump())


class OutputSection(_Section):
    path: Path = Path("runs/default")
    dump_final_state: bool = True


class GatesSection(_Section):
    enabled: bool = True
    fit_window: Optional[float] = None


class RunConfig(_Section):
    """Complete, validated run description."""

    schema_version: Literal[1] = SCHEMA_VERSION
    scenario: ScenarioName = "perturbed"
    seed: int = Field(default=0, ge=0)
    charge: float = 0.0
    background: BackgroundSection = Field(default_factory=BackgroundSection)
    lattice: LatticeSection = Field(default_factory=LatticeSection)
    evolution: EvolutionSection = Field(default_factory=EvolutionSection)
    weights: WeightsSection = Field(default_factory=WeightsSection)
    perturbation: PerturbationSection = Field(default_factory=PerturbationSection)
    solver: SolverSection = Field(default_factory=SolverSection)
    output: OutputSection = Field(default_factory=OutputSection)
    gates: GatesSection = Field(default_factory=GatesSection)

    @classmethod
    def from_mapping(cls, data: Dict[str, Any]) -> "RunConfig":
        """
        Validate a parsed mapping.

        Raises:
            ConfigError: If the mapping does not match the schema
        """
        try:
            return cls.model_validate(data)
        except ValidationError as exc:
            raise ConfigError(
                "invalid run configuration",
                {"errors": [f"{'.'.join(map(str, e['loc']))}: {e['msg']}" for e in exc.errors()]},
            ) from exc

    @classmethod
    def from_toml(cls, path: Union[str, Path]) -> "RunConfig":
        """
        Read and validate a TOML file.

        Raises:
            ConfigError: If the file cannot be read or parsed or fails validation
        """
        path = Path(path)
        try:
            with path.open("rb") as fh:
                data = tomllib.load(fh)
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}", {"reason": str(exc)}) from exc
        logger.info("Loaded run config %s", path)
        return cls.from_mapping(data)

    def energy_weights(self, lambda0: float) -> EnergyWeights:
        w = self.weights
        return EnergyWeights(
            delta_E=w.delta_E,
            delta_cal_E=w.delta_cal_E,
            delta_bb_E=w.delta_bb_E,
            epsilon_tot=w.epsilon_tot,
            lambda0=lambda0,
        )


def thread_count() -> int:
    """Worker cap from EVM_THREADS, defaulting to the CPU count."""
    value = os.getenv("EVM_THREADS")
    default = os.cpu_count() or 1
    if not value:
        return default
    try:
        return max(int(value), 1)
    except ValueError:
        logger.warning("Ignoring non-integer EVM_THREADS=%r", value)
        return default


def default_log_level() -> str:
    return os.getenv("EVM_LOG_LEVEL", "WARNING").upper()
