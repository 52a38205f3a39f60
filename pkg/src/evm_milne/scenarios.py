#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Scenario Builders

Initial slices for the named scenarios: the exact Milne fixed point and
small perturbations of it. Perturbations act on the kernel-orthogonal part
of the metric and Sigma; the distribution is a compactly supported bump on
the momentum lattice; the potential is a sum of divergence-free modes on
the torus and vanishes on the homogeneous background.
"""

import logging
from typing import List, Optional

import numpy as np

from .backgrounds import BackgroundGeometry
from .config import RunConfig
from .errors import ConfigError
from .geometry import einstein_spectrum, trace_free
from .state import (
    DistributionGrid,
    LapseShift,
    MomentumLattice,
    PotentialState,
    SliceState,
    SpatialMetric,
    TraceFreeSym2,
)

logger = logging.getLogger(__name__)


def milne_state(
    bg: BackgroundGeometry,
    lattice: MomentumLattice,
    T: float = 0.0,
    tau0: float = -3.0,
    charge: float = 0.0,
) -> SliceState:
    """(g, Sigma, N, X, f, omega, L_{e0} omega, Psi) = (gamma, 0, 3, 0, 0, 0, 0, 0)."""
    shape = bg.spatial_shape
    return SliceState(
        background=bg,
        g=SpatialMetric(components=bg.gamma.copy()),
        sigma=TraceFreeSym2(components=bg.zeros((3, 3))),
        lapse_shift=LapseShift(N=np.full(shape, 3.0), X=bg.zeros((3,))),
        T=T,
        tau0=tau0,
        distribution=DistributionGrid(
            values=np.zeros(shape + (lattice.n,) * 3), lattice=lattice
        ),
        potential=PotentialState(omega=bg.zeros((3,)), omega_dot=bg.zeros((3,)), psi=bg.zeros()),
        charge=charge,
    )


# ==================== Mode menus ====================


def _homogeneous_modes(bg: BackgroundGeometry, modes: List[int], rng: np.random.Generator) -> np.ndarray:
    """Random combination of admissible Einstein eigentensors, numbered from 1."""
    values, tensors = einstein_spectrum(bg)
    admissible = [t for v, t in zip(values, tensors) if v > bg.kernel_tol]
    out = np.zeros((3, 3))
    for m in modes:
        if not 1 <= m <= len(admissible):
            raise ConfigError(
                f"Unsupported homogeneous mode: {m}", {"available": len(admissible)}
            )
        out += rng.uniform(-1.0, 1.0) * admissible[m - 1]
    return out[..., None, None, None] * np.ones((3, 3) + bg.spatial_shape)


def _torus_modes(bg: BackgroundGeometry, modes: List[int], rng: np.random.Generator) -> np.ndarray:
    """Symmetric tensor field of cosine modes with random amplitudes, axes and phases."""
    x = getattr(bg, "coordinates")
    out = np.zeros((3, 3) + bg.spatial_shape)
    for m in modes:
        A = rng.uniform(-1.0, 1.0, size=(3, 3))
        A = 0.5 * (A + A.T)
        axis = int(rng.integers(3))
        phase = rng.uniform(0.0, 2.0 * np.pi)
        out += A[..., None, None, None] * np.cos(m * x[axis] + phase)
    return out


def _tensor_perturbation(bg: BackgroundGeometry, modes: List[int], rng: np.random.Generator) -> np.ndarray:
    if not modes:
        return bg.zeros((3, 3))
    if bg.kind == "homogeneous":
        u = _homogeneous_modes(bg, modes, rng)
    else:
        u = _torus_modes(bg, modes, rng)
    u = bg.moduli_projector(u)
    scale = float(np.max(np.abs(u)))
    return u / scale if scale > 0.0 else u


def _one_form_perturbation(bg: BackgroundGeometry, modes: List[int], rng: np.random.Generator) -> np.ndarray:
    """Divergence-free 1-form a sin(m x_c + phi) e^b with b != c."""
    if bg.kind == "homogeneous" or not modes:
        return bg.zeros((3,))
    x = getattr(bg, "coordinates")
    out = bg.zeros((3,))
    for m in modes:
        c = int(rng.integers(3))
        b = (c + 1 + int(rng.integers(2))) % 3
        out[b] += rng.uniform(-1.0, 1.0) * np.sin(m * x[c] + rng.uniform(0.0, 2.0 * np.pi))
    return out


def momentum_bump(
    lattice: MomentumLattice, center: List[float], radius: float, mass: float
) -> np.ndarray:
    """
    (1 - |p - c|^2 / r^2)^4 on the lattice, normalised to coordinate mass.

    Raises:
        ConfigError: If the bump reaches the two outer lattice shells
    """
    c = np.asarray(center, dtype=float)[:, None, None, None]
    p = lattice.momenta[:, 0, 0, 0]
    r_sq = np.sum((p - c) ** 2, axis=0) / radius**2
    bump = np.clip(1.0 - r_sq, 0.0, None) ** 4
    if np.any(bump[lattice.shell_mask()] > 0.0):
        raise ConfigError(
            "momentum bump reaches the lattice boundary",
            {"radius": radius, "center": list(center), "extent": lattice.extent},
        )
    total = float(np.sum(bump)) * lattice.cell_volume
    if total == 0.0:
        raise ConfigError("momentum bump misses every lattice point", {"radius": radius})
    return mass * bump / total


# ==================== Scenarios ====================


def build_initial_state(
    cfg: RunConfig, bg: BackgroundGeometry, rng: Optional[np.random.Generator] = None
) -> SliceState:
    """
    Initial slice of the configured scenario.

    ``milne-exact`` ignores the perturbation section. ``charged-perturb``
    uses the configured charge, or 1 when it is left at 0.
    """
    rng = rng or np.random.default_rng(cfg.seed)
    lattice = MomentumLattice(extent=cfg.lattice.P_max, n=cfg.lattice.n)
    charge = cfg.charge
    if cfg.scenario == "charged-perturb" and charge == 0.0:
        charge = 1.0
    state = milne_state(bg, lattice, cfg.evolution.T0, cfg.evolution.tau0, charge)
    if cfg.scenario in ("milne-exact", "identity-suite"):
        return state

    pert = cfg.perturbation
    delta = pert.amplitude
    scale = float(bg.gamma_components[0, 0])
    g = bg.gamma + delta * scale * _tensor_perturbation(bg, pert.metric_modes, rng)
    metric = SpatialMetric(components=g)
    sigma = trace_free(metric, delta * scale * _tensor_perturbation(bg, pert.sigma_modes, rng))
    sigma = bg.moduli_projector(sigma)

    f = np.zeros(state.f.shape)
    if pert.f_mass > 0.0:
        bump = momentum_bump(lattice, pert.f_center, pert.f_width, pert.f_mass)
        profile = np.ones(bg.spatial_shape)
        if bg.kind != "homogeneous":
            x = getattr(bg, "coordinates")
            profile = 1.0 + 0.5 * np.cos(x[0])
        f = profile[..., None, None, None] * bump

    omega = delta * _one_form_perturbation(bg, pert.omega_modes, rng)
    omega_dot = delta * _one_form_perturbation(bg, pert.omega_modes, rng)
    logger.info(
        "Built %s initial slice on %s with amplitude %.3e", cfg.scenario, bg.kind, delta
    )
    return state.with_fields(g=g, sigma=sigma, f=f, omega=omega, omega_dot=omega_dot)
