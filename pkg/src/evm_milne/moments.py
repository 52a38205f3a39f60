#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Matter Moments

Rescaled source quantities rho, j, eta_bar, S and T^{ab} of the Vlasov and
Maxwell sectors, and their sum.

The rescaled quantities carry the factor tau^-3 (rho), tau^-5 (j, eta_bar)
and tau^-7 (T^{ab}) of the unrescaled stress. With tau < 0 the momentum
measure contributes |tau|^3 while the rescaling contributes tau^-3, so every
Vlasov moment carries the orientation sign(tau)^3 = -1 relative to the
positive momentum integrals. Hence tau rho >= 0 and tau eta >= 0 for
physical data, the sign the lapse bound 0 < N <= 3 relies on.
"""

import logging
from typing import Optional

import numpy as np

from .geometry import lift
from .kinetic import MomentumKinematics, momentum_integral, momentum_kinematics
from .maxwell import FaradayField, MaxwellStress, faraday_from_potential, maxwell_stress
from .state import FieldModel, SliceState

logger = logging.getLogger(__name__)

EIGHT_PI = 8.0 * np.pi
FOUR_PI = 4.0 * np.pi


class VlasovMoments(FieldModel):
    """Vlasov sector; S_V is 8 pi tau^-1 T^V_ij."""

    rho: np.ndarray
    j: np.ndarray
    eta_bar: np.ndarray
    T: np.ndarray
    S: np.ndarray


class MaxwellMoments(FieldModel):
    """Maxwell sector; S_M is 8 pi tau^-1 T^M_ij."""

    rho: np.ndarray
    j: np.ndarray
    eta_bar: np.ndarray
    T: np.ndarray
    S: np.ndarray


class SourceSet(FieldModel):
    """Summed rescaled sources with the per-sector parts kept for diagnostics."""

    rho: np.ndarray
    j: np.ndarray
    eta_bar: np.ndarray
    eta: np.ndarray
    S: np.ndarray
    T: np.ndarray
    vlasov: VlasovMoments
    maxwell: MaxwellMoments


def orientation(tau: float) -> float:
    """|tau|^3 / tau^3."""
    return float(np.sign(tau)) ** 3


def _empty(state: SliceState, cls: type) -> FieldModel:
    bg = state.background
    return cls(
        rho=bg.zeros(), j=bg.zeros((3,)), eta_bar=bg.zeros(),
        T=bg.zeros((3, 3)), S=bg.zeros((3, 3)),
    )


def vlasov_moments(
    state: SliceState, kin: Optional[MomentumKinematics] = None
) -> VlasovMoments:
    """
    Lattice quadrature of the Vlasov moments.

    rho_V = s 4 pi N^2 int f p0^2 / p_hat, j_V = s 8 pi N int f p0 p / p_hat,
    eta_bar_V = s 4 pi int f |W|^2 / p_hat, T_V = s 8 pi int f p p / p_hat and
    S_V = s 8 pi tau^2 int f (gW)(gW) / p_hat with W = p + tau^-1 p0 X,
    s = sign(tau)^3 and measure d mu_p = |g|^{1/2} d^3 p.

    The moments are signed so that tau rho_V >= 0: on the tau < 0 branch a
    non-negative f gives rho_V <= 0, which keeps N (|Sigma|^2 + tau eta) >= 0
    in the lapse equation.

    Raises:
        SupportOverflow: If f reaches the outer lattice shells
    """
    state.distribution.check_support()
    f = state.f
    if not np.any(f):
        return _empty(state, VlasovMoments)
    kin = kin or momentum_kinematics(state)
    tau, lattice = state.tau, state.lattice
    g = state.g.components
    s = orientation(tau)
    p = lattice.momenta
    weight = f / kin.p_hat
    W = p + kin.p0 / tau * lift(state.X)
    gW = np.einsum("ab...,b...->a...", lift(g), W)

    def integral(integrand: np.ndarray) -> np.ndarray:
        return momentum_integral(g, integrand, lattice)

    return VlasovMoments(
        rho=s * FOUR_PI * state.N**2 * integral(weight * kin.p0**2),
        j=s * EIGHT_PI * state.N * integral(weight * kin.p0 * p),
        eta_bar=s * FOUR_PI * integral(weight * np.einsum("a...,a...->...", gW, W)),
        T=s * EIGHT_PI * integral(weight * np.einsum("a...,b...->ab...", p, p)),
        S=s * EIGHT_PI * tau**2 * integral(weight * np.einsum("a...,b...->ab...", gW, gW)),
    )


def maxwell_moments(state: SliceState, stress: MaxwellStress) -> MaxwellMoments:
    """
    Rescaled Maxwell sources from the stress components.

    rho_M = 4 pi tau N^-2 [T_00 - 2 tau^-1 X^i T_0i + tau^-2 X^i X^j T_ij],
    j_M = 8 pi tau^-5 N~ T^{0i}, eta_bar_M = 4 pi tau^-3 g^{ij} T_ij and
    T_M = 8 pi tau^-7 T^{ab}.
    """
    g_inv = state.g.inverse
    N, X, tau = state.N, state.X, state.tau
    T00, T0i, Tij = stress.T00, stress.T0i, stress.Tij
    h_inv = g_inv - np.einsum("i...,j...->ij...", X, X) / N**2
    x_hat = X / N

    x_t0 = np.einsum("i...,i...->...", X, T0i)
    x_tx = np.einsum("i...,j...,ij...->...", X, X, Tij)
    rho = FOUR_PI * tau / N**2 * (T00 - 2.0 / tau * x_t0 + x_tx / tau**2)

    mixed = np.einsum("i...,k...->ik...", x_hat, x_hat) - h_inv
    j = EIGHT_PI / N * (
        -X * T00 / N**2
        + np.einsum("ik...,k...->i...", mixed, T0i) / tau
        + np.einsum("il...,k...,kl...->i...", h_inv, X, Tij) / tau**2
    )

    eta_bar = FOUR_PI * tau**-3 * np.einsum("ij...,ij...->...", g_inv, Tij)

    h_t0 = np.einsum("bk...,k...->b...", h_inv, T0i)
    T = EIGHT_PI * tau**-7 * (
        tau**6 / N**4 * np.einsum("a...,b...->ab...", X, X) * T00
        + tau**5 / N**2 * (np.einsum("a...,b...->ab...", X, h_t0) + np.einsum("a...,b...->ab...", h_t0, X))
        + tau**4 * np.einsum("ac...,bd...,cd...->ab...", h_inv, h_inv, Tij)
    )
    return MaxwellMoments(rho=rho, j=j, eta_bar=eta_bar, T=T, S=EIGHT_PI / tau * Tij)


def assemble_sources(
    state: SliceState,
    kin: Optional[MomentumKinematics] = None,
    faraday: Optional[FaradayField] = None,
    include_vlasov: bool = True,
    include_maxwell: bool = True,
) -> SourceSet:
    """
    Sum the sectors into the rescaled sources.

    eta = rho + tau^2 eta_bar and
    S_ij = 8 pi tau^-1 (T^V + T^M)_ij + (rho - tau^2 eta_bar) g_ij.

    Args:
        state: Current slice
        kin: Optional precomputed kinematics
        faraday: Optional precomputed Faraday tensor
        include_vlasov: Whether the Vlasov sector contributes
        include_maxwell: Whether the Maxwell sector contributes
    """
    if include_vlasov:
        vlasov = vlasov_moments(state, kin)
    else:
        vlasov = _empty(state, VlasovMoments)
    potential = state.potential
    if include_maxwell and (
        np.any(potential.omega) or np.any(potential.omega_dot) or np.any(potential.psi)
    ):
        F = faraday or faraday_from_potential(state)
        maxwell = maxwell_moments(state, maxwell_stress(state, F))
    else:
        maxwell = _empty(state, MaxwellMoments)

    tau, g = state.tau, state.g.components
    rho = vlasov.rho + maxwell.rho
    eta_bar = vlasov.eta_bar + maxwell.eta_bar
    S = vlasov.S + maxwell.S + (rho - tau**2 * eta_bar) * g
    return SourceSet(
        rho=rho,
        j=vlasov.j + maxwell.j,
        eta_bar=eta_bar,
        eta=rho + tau**2 * eta_bar,
        S=S,
        T=vlasov.T + maxwell.T,
        vlasov=vlasov,
        maxwell=maxwell,
    )
