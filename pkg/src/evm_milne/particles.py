#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Characteristic Particles

Particles seeded on the occupied lattice points and pushed along the
characteristic system. f is constant along characteristics, so each particle
carries its seed value and the logarithm of the phase-space Jacobian; the
weighted particles reproduce the lattice moments.
"""

import logging
from typing import Tuple

import numpy as np

from .backgrounds import BackgroundGeometry
from .energies import SUPPORT_FLOOR
from .evolution import RungeKutta4
from .kinetic import TransportCoefficients, characteristic_rhs, kinematics
from .moments import EIGHT_PI, FOUR_PI, orientation
from .state import FieldModel, SliceState

logger = logging.getLogger(__name__)

_JACOBIAN_STEP = 1e-6


class ParticleCloud(FieldModel):
    """Positions, momenta, seed values and log-Jacobians of M particles."""

    x: np.ndarray
    p: np.ndarray
    f: np.ndarray
    log_jacobian: np.ndarray
    cell_volume: float

    @property
    def size(self) -> int:
        return int(self.f.shape[0])

    @property
    def weights(self) -> np.ndarray:
        """f times transported phase-space volume."""
        return self.f * np.exp(self.log_jacobian) * self.cell_volume

    @classmethod
    def from_state(cls, state: SliceState, floor: float = SUPPORT_FLOOR) -> "ParticleCloud":
        """One particle per lattice point with f above ``floor`` times max f."""
        f = state.f
        peak = float(np.max(f)) if f.size else 0.0
        bg = state.background
        mask = f > floor * peak if peak > 0.0 else np.zeros(f.shape, dtype=bool)
        index = np.nonzero(mask)
        spatial, momentum = index[:3], index[3:]
        axis = state.lattice.axis
        p = np.stack([axis[i] for i in momentum])
        if bg.kind == "homogeneous":
            x = np.zeros_like(p)
        else:
            x = np.stack([i * getattr(bg, "spacing") for i in spatial]).astype(float)
        logger.debug("Seeded %d particles", p.shape[1])
        return cls(
            x=x,
            p=p,
            f=f[mask],
            log_jacobian=np.zeros(p.shape[1]),
            cell_volume=state.lattice.cell_volume,
        )


def _divergence(
    c: TransportCoefficients, bg: BackgroundGeometry, x: np.ndarray, p: np.ndarray
) -> np.ndarray:
    """Phase-space divergence of the characteristic field by central differences."""
    h = _JACOBIAN_STEP
    div = np.zeros(p.shape[1])
    for a in range(3):
        e = np.zeros((3, 1))
        e[a] = h
        _, dp_plus = characteristic_rhs(c, bg, x, p + e)
        _, dp_minus = characteristic_rhs(c, bg, x, p - e)
        div += (dp_plus[a] - dp_minus[a]) / (2.0 * h)
        if bg.kind != "homogeneous":
            dx_plus, _ = characteristic_rhs(c, bg, x + e, p)
            dx_minus, _ = characteristic_rhs(c, bg, x - e, p)
            div += (dx_plus[a] - dx_minus[a]) / (2.0 * h)
    return div


def push_characteristics(
    state: SliceState,
    cloud: ParticleCloud,
    dt: float,
    coeffs: TransportCoefficients,
) -> ParticleCloud:
    """
    Advance particles by one RK4 step of the characteristic system.

    The coefficient fields are frozen over the step; tau follows the stage time.

    Args:
        state: Slice at the start of the step
        cloud: Particles at the start of the step
        dt: Step in T
        coeffs: Transport coefficients of ``state``
    """
    if cloud.size == 0:
        return cloud
    bg = state.background

    def rhs(T: float, fields: dict) -> dict:
        c = coeffs.model_copy(update={"tau": state.tau0 * np.exp(-T)})
        dx, dp = characteristic_rhs(c, bg, fields["x"], fields["p"])
        return {
            "x": np.broadcast_to(dx, fields["x"].shape),
            "p": np.broadcast_to(dp, fields["p"].shape),
            "log_jacobian": _divergence(c, bg, fields["x"], fields["p"]),
        }

    advanced = RungeKutta4().advance(
        {"x": cloud.x, "p": cloud.p, "log_jacobian": cloud.log_jacobian}, state.T, dt, rhs
    )
    x = advanced["x"]
    if bg.kind != "homogeneous":
        x = np.mod(x, getattr(bg, "length"))
    return cloud.model_copy(
        update={"x": x, "p": advanced["p"], "log_jacobian": advanced["log_jacobian"]}
    )


def _cells(bg: BackgroundGeometry, x: np.ndarray) -> np.ndarray:
    if bg.kind == "homogeneous":
        return np.zeros(x.shape[1], dtype=int)
    n = bg.spatial_shape[0]
    index = np.rint(x / getattr(bg, "spacing")).astype(int) % n
    return np.ravel_multi_index(tuple(index), bg.spatial_shape)


def particle_moments(state: SliceState, cloud: ParticleCloud) -> Tuple[np.ndarray, np.ndarray]:
    """
    rho_V and j_V deposited from weighted particles onto the nearest sample.

    Returns:
        (rho, j) with the shapes of the lattice moments
    """
    bg = state.background
    shape = bg.spatial_shape
    size = int(np.prod(shape))
    if cloud.size == 0:
        return np.zeros(shape), np.zeros((3,) + shape)
    cells = _cells(bg, cloud.x)
    g = state.g.components.reshape(3, 3, -1)[:, :, cells]
    N = state.N.reshape(-1)[cells]
    X = state.X.reshape(3, -1)[:, cells]
    tau = state.tau
    kin = kinematics(g, N, X, tau, cloud.p)
    density = np.sqrt(np.linalg.det(np.moveaxis(g, -1, 0)))
    weight = cloud.weights * density / kin.p_hat
    s = orientation(tau)

    rho = np.bincount(cells, weights=s * FOUR_PI * N**2 * weight * kin.p0**2, minlength=size)
    j = np.stack(
        [
            np.bincount(cells, weights=s * EIGHT_PI * N * weight * kin.p0 * cloud.p[a], minlength=size)
            for a in range(3)
        ]
    )
    return rho.reshape(shape), j.reshape((3,) + shape)
