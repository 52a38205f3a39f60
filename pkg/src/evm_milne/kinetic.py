#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Kinetic Core

Mass-shell kinematics of the rescaled momenta, their vertical and time
derivatives, the Sasaki connection, horizontal/vertical derivatives on
the momentum lattice, the transport right-hand side and the
characteristic system.

Lattice fields have shape ``S + P``. Spatial coefficient fields are lifted
with three trailing unit axes before they meet lattice momenta of shape
``(3, 1, 1, 1, n, n, n)``; for particle clouds the same formulas run on
sample shape ``(M,)``.
"""

import logging
from typing import Dict, Literal, Optional

import numpy as np
from scipy import ndimage

from .backgrounds import BackgroundGeometry, metric_determinant
from .errors import ShiftTooLarge
from .geometry import covariant_derivative, lift
from .models import (
    CommutatorResiduals,
    MomentumRates,
    TransportTerms,
    VerticalDerivatives,
)
from .state import FieldModel, MomentumLattice, SliceState

logger = logging.getLogger(__name__)

TransportScheme = Literal["upwind", "centered"]

_LATTICE_AXES = (-3, -2, -1)
_COEFFICIENT_FIELDS = (
    "g",
    "g_inv",
    "N",
    "X",
    "sigma",
    "christoffel",
    "gamma_vec",
    "gamma_mixed",
    "f0",
    "fij",
)


# ==================== Mass shell ====================


class MomentumKinematics(FieldModel):
    """Mass-shell functions at every lattice (or particle) momentum."""

    p_hat: np.ndarray
    p0: np.ndarray
    p_under: np.ndarray
    P: np.ndarray
    x_hat_p: np.ndarray
    x_hat_sq: np.ndarray
    p_sq: np.ndarray

    def p0_from_energy(self, N: np.ndarray, tau: float) -> np.ndarray:
        """Second closed form p0 = (1 + tau^2 |p|^2) / (N (p_hat - tau <X_hat, p>))."""
        return (1.0 + tau**2 * self.p_sq) / (N * (self.p_hat - tau * self.x_hat_p))


def kinematics(
    g: np.ndarray, N: np.ndarray, X: np.ndarray, tau: float, p: np.ndarray
) -> MomentumKinematics:
    """
    Evaluate p_hat, p0, p_under and P_a for broadcast-compatible inputs.

    Args:
        g: Metric components, leading shape (3, 3)
        N: Lapse
        X: Shift vector, leading shape (3,)
        tau: Mean curvature
        p: Rescaled momenta, leading shape (3,)

    Raises:
        ShiftTooLarge: If |X/N|_g >= 1 anywhere
    """
    gp = np.einsum("ab...,b...->a...", g, p)
    x_low = np.einsum("ab...,b...->a...", g, X)
    x_hat_sq = np.einsum("a...,a...->...", x_low, X) / N**2
    if np.max(x_hat_sq) >= 1.0:
        raise ShiftTooLarge(
            "shift is not subluminal", {"max_shift_norm_sq": float(np.max(x_hat_sq))}
        )
    x_hat_p = np.einsum("a...,a...->...", x_low, p) / N
    p_sq = np.einsum("a...,a...->...", gp, p)
    p_hat = np.sqrt(tau**2 * x_hat_p**2 + (1.0 - x_hat_sq) * (1.0 + tau**2 * p_sq))
    p0 = (tau * x_hat_p + p_hat) / (N * (1.0 - x_hat_sq))
    P = -(x_low * p0 / tau + gp) / (N * p_hat)
    return MomentumKinematics(
        p_hat=p_hat,
        p0=p0,
        p_under=N * p0,
        P=P,
        x_hat_p=x_hat_p,
        x_hat_sq=x_hat_sq,
        p_sq=p_sq,
    )


def momentum_kinematics(
    state: SliceState, p: Optional[np.ndarray] = None
) -> MomentumKinematics:
    """Mass-shell functions of ``state`` on its momentum lattice (or at ``p``)."""
    momenta = state.lattice.momenta if p is None else p
    return kinematics(
        lift(state.g.components), lift(state.N), lift(state.X), state.tau, momenta
    )


def momentum_vertical_derivatives(
    state: SliceState, kin: Optional[MomentumKinematics] = None
) -> VerticalDerivatives:
    """B_a of p0, p_hat, P_k and of the eta-bar integrand |W|^2 / p_hat."""
    kin = kin or momentum_kinematics(state)
    tau = state.tau
    g, N, X = lift(state.g.components), lift(state.N), lift(state.X)
    p = state.lattice.momenta
    gp = np.einsum("ab...,b...->a...", g, p)
    x_hat_low = np.einsum("ab...,b...->a...", g, X) / N
    B_p0 = (tau * x_hat_low * kin.p0 + tau**2 * gp / N) / kin.p_hat
    B_p_hat = tau**2 / kin.p_hat * (kin.x_hat_p * x_hat_low + (1.0 - kin.x_hat_sq) * gp)
    B_P = (
        tau * np.einsum("k...,a...->ak...", x_hat_low, kin.P)
        - g / N
        - np.einsum("k...,a...->ak...", kin.P, B_p_hat)
    ) / kin.p_hat
    W = p + kin.p0 / tau * X
    gW = np.einsum("ab...,b...->a...", g, W)
    w_sq = np.einsum("a...,a...->...", gW, W)
    x_dot_w = np.einsum("a...,a...->...", gW, X)
    B_eta = 2.0 * (gW + B_p0 * x_dot_w / tau) / kin.p_hat - w_sq * B_p_hat / kin.p_hat**2
    return {"p0": B_p0, "p_hat": B_p_hat, "P": B_P, "eta_integrand": B_eta}


def momentum_time_derivatives(
    state: SliceState,
    dt_g: np.ndarray,
    dt_N: np.ndarray,
    dt_X: np.ndarray,
    kin: Optional[MomentumKinematics] = None,
) -> MomentumRates:
    """
    T-derivatives of p_hat, p0, P_k and |p + tau^-1 p0 X|^2 at fixed lattice p.

    Args:
        state: Current slice
        dt_g: d_T g
        dt_N: d_T N
        dt_X: d_T X
        kin: Optional precomputed kinematics

    Returns:
        MomentumRates keyed by the function name
    """
    kin = kin or momentum_kinematics(state)
    tau = state.tau
    g, N, X = lift(state.g.components), lift(state.N), lift(state.X)
    g_dot, N_dot, X_dot = lift(dt_g), lift(dt_N), lift(dt_X)
    p = state.lattice.momenta
    a, b, c = kin.x_hat_p, kin.x_hat_sq, kin.p_sq

    def pair(h: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        return np.einsum("ab...,a...,b...->...", h, u, v)

    a_dot = (pair(g_dot, X, p) + pair(g, X_dot, p)) / N - a * N_dot / N
    b_dot = (pair(g_dot, X, X) + 2.0 * pair(g, X_dot, X)) / N**2 - 2.0 * b * N_dot / N
    c_dot = pair(g_dot, p, p)

    p_hat_sq_dot = (
        -2.0 * tau**2 * a**2
        + 2.0 * tau**2 * a * a_dot
        - b_dot * (1.0 + tau**2 * c)
        + (1.0 - b) * (-2.0 * tau**2 * c + tau**2 * c_dot)
    )
    p_hat_dot = p_hat_sq_dot / (2.0 * kin.p_hat)

    den = N * (1.0 - b)
    den_dot = N_dot * (1.0 - b) - N * b_dot
    num_dot = -tau * a + tau * a_dot + p_hat_dot
    p0_dot = (num_dot - kin.p0 * den_dot) / den

    x_low = np.einsum("ab...,b...->a...", g, X)
    x_low_dot = np.einsum("ab...,b...->a...", g_dot, X) + np.einsum("ab...,b...->a...", g, X_dot)
    n_dot = (
        x_low * kin.p0 / tau
        + (x_low_dot * kin.p0 + x_low * p0_dot) / tau
        + np.einsum("ab...,b...->a...", g_dot, p)
    )
    P_dot = -n_dot / (N * kin.p_hat) - kin.P * (N_dot / N + p_hat_dot / kin.p_hat)

    W = p + kin.p0 / tau * X
    W_dot = kin.p0 / tau * X + (p0_dot * X + kin.p0 * X_dot) / tau
    W_sq_dot = pair(g_dot, W, W) + 2.0 * pair(g, W, W_dot)
    return {"p_hat": p_hat_dot, "p0": p0_dot, "P": P_dot, "W_sq": W_sq_dot}


def momentum_integral(
    g: np.ndarray, integrand: np.ndarray, lattice: MomentumLattice
) -> np.ndarray:
    """Lattice quadrature of ``integrand`` against d mu_p = |g|^{1/2} d^3 p."""
    density = np.sqrt(metric_determinant(g))
    return density * np.sum(integrand, axis=_LATTICE_AXES) * lattice.cell_volume


# ==================== Lattice derivatives ====================


def vertical_derivative(f: np.ndarray, lattice: MomentumLattice) -> np.ndarray:
    """B_a f by centered differences with one-sided closure at the lattice edge."""
    h = lattice.spacing
    return np.stack(
        [np.gradient(f, h, axis=ax, edge_order=2) for ax in _LATTICE_AXES]
    )


def horizontal_derivative(
    bg: BackgroundGeometry,
    chr: np.ndarray,
    f: np.ndarray,
    lattice: MomentumLattice,
    Bf: Optional[np.ndarray] = None,
) -> np.ndarray:
    """A_a f = e_a f - p^i Gamma^k_{ai} B_k f."""
    Bf = vertical_derivative(f, lattice) if Bf is None else Bf
    ef = bg.gradient(f, lattice=True)
    return ef - np.einsum("i...,kai...,k...->a...", lattice.momenta, lift(chr), Bf)


def sasaki_gradient(
    bg: BackgroundGeometry, chr: np.ndarray, f: np.ndarray, lattice: MomentumLattice
) -> np.ndarray:
    """(A_a f, B_a f) stacked on a leading axis of length 6."""
    Bf = vertical_derivative(f, lattice)
    Af = horizontal_derivative(bg, chr, f, lattice, Bf=Bf)
    return np.concatenate([Af, Bf])


# ==================== Sasaki connection ====================


class SasakiCoefficients(FieldModel):
    """Connection coefficients of the Sasaki metric in the (A, B) frame."""

    horizontal: np.ndarray
    mixed_a_Jb: np.ndarray
    vertical_J_bc: np.ndarray
    vertical_I_Ja: np.ndarray
    zero_I_aJ: np.ndarray
    zero_a_IJ: np.ndarray
    zero_I_JK: np.ndarray

    @property
    def mixed_a_bJ(self) -> np.ndarray:
        """Gamma^a_{bJ}, equal to Gamma^a_{Jb}."""
        return np.swapaxes(self.mixed_a_Jb, 1, 2)

    def assemble(self) -> np.ndarray:
        """Full (6, 6, 6) + sample coefficient array, horizontal indices first."""
        parts = np.broadcast_arrays(
            self.horizontal, self.mixed_a_Jb, self.vertical_J_bc, self.vertical_I_Ja
        )
        full = np.zeros((6, 6, 6) + parts[0].shape[3:])
        full[:3, :3, :3] = parts[0]
        full[:3, 3:, :3] = parts[1]
        full[:3, :3, 3:] = np.swapaxes(parts[1], 1, 2)
        full[3:, :3, :3] = parts[2]
        full[3:, 3:, :3] = parts[3]
        return full


def sasaki_connection(
    chr: np.ndarray, riemann: np.ndarray, p: np.ndarray
) -> SasakiCoefficients:
    """
    Sasaki connection coefficients at momenta ``p``.

    Args:
        chr: Connection of g, shape (3, 3, 3) + S
        riemann: Riemann tensor of g, shape (3, 3, 3, 3) + S
        p: Momenta broadcastable against lifted fields

    Returns:
        SasakiCoefficients; the three vanishing families are exact zeros
    """
    R = lift(riemann)
    c = lift(chr)
    mixed = 0.5 * np.einsum("k...,abkj...->ajb...", p, R)
    vertical = 0.5 * np.einsum("k...,jkbc...->jbc...", p, R)
    vertical_I_Ja = np.broadcast_to(c, c.shape[:3] + mixed.shape[3:]).copy()
    zeros = np.zeros_like(mixed)
    return SasakiCoefficients(
        horizontal=np.broadcast_to(c, vertical_I_Ja.shape).copy(),
        mixed_a_Jb=mixed,
        vertical_J_bc=vertical,
        vertical_I_Ja=vertical_I_Ja,
        zero_I_aJ=zeros,
        zero_a_IJ=zeros.copy(),
        zero_I_JK=zeros.copy(),
    )


def sasaki_hessian(
    bg: BackgroundGeometry,
    chr: np.ndarray,
    riemann: np.ndarray,
    f: np.ndarray,
    lattice: MomentumLattice,
) -> np.ndarray:
    """D^2 f_{beta gamma} = theta_beta(theta_gamma f) - Gamma^alpha_{beta gamma} theta_alpha f."""
    first = sasaki_gradient(bg, chr, f, lattice)
    second = np.stack([sasaki_gradient(bg, chr, first[k], lattice) for k in range(6)], axis=1)
    coeffs = sasaki_connection(chr, riemann, lattice.momenta).assemble()
    return second - np.einsum("abc...,a...->bc...", coeffs, first)


# ==================== Transport coefficients ====================


class TransportCoefficients(FieldModel):
    """Spatial fields entering the characteristic velocities."""

    tau: float
    charge: float
    g: np.ndarray
    g_inv: np.ndarray
    N: np.ndarray
    X: np.ndarray
    sigma: np.ndarray
    christoffel: np.ndarray
    gamma_vec: np.ndarray
    gamma_mixed: np.ndarray
    f0: np.ndarray
    fij: np.ndarray

    def lifted(self) -> "TransportCoefficients":
        """Copy with every field lifted for lattice broadcasting."""
        return self.model_copy(update={k: lift(getattr(self, k)) for k in _COEFFICIENT_FIELDS})

    def sample(self, bg: BackgroundGeometry, x: np.ndarray) -> "TransportCoefficients":
        """
        Fields at particle positions ``x`` of shape (3, M).

        Homogeneous fields are broadcast; torus fields use periodic cubic
        interpolation on the grid.
        """
        update: Dict[str, np.ndarray] = {}
        count = x.shape[1]
        if bg.kind == "homogeneous":
            for k in _COEFFICIENT_FIELDS:
                arr = getattr(self, k)
                update[k] = np.broadcast_to(arr[..., 0, 0, 0][..., None], arr.shape[:-3] + (count,)).copy()
        else:
            index = x / getattr(bg, "spacing")
            for k in _COEFFICIENT_FIELDS:
                arr = getattr(self, k)
                lead = arr.shape[:-3]
                flat = arr.reshape((-1,) + arr.shape[-3:])
                values = np.stack(
                    [ndimage.map_coordinates(comp, index, order=3, mode="grid-wrap") for comp in flat]
                )
                update[k] = values.reshape(lead + (count,))
        return self.model_copy(update=update)


def transport_coefficients(
    state: SliceState,
    chr: np.ndarray,
    dt_N: np.ndarray,
    dt_X: np.ndarray,
    f0: np.ndarray,
    fij: np.ndarray,
) -> TransportCoefficients:
    """
    Assemble Gamma^a and Gamma^a_b together with the fields of the characteristic system.

    Args:
        state: Current slice
        chr: Connection coefficients of g
        dt_N: Solved d_T N
        dt_X: Solved d_T X
        f0: Faraday components F_0i
        fij: Faraday components F_ij
    """
    bg = state.background
    g, g_inv = state.g.components, state.g.inverse
    sigma, N, X = state.sigma.components, state.N, state.X
    dN = bg.gradient(N)
    dX = covariant_derivative(bg, chr, X, "u")
    sigma_mixed = np.einsum("ac...,cb...->ab...", g_inv, sigma)
    sym = sigma + g / 3.0
    sym_xx = np.einsum("bc...,b...,c...->...", sym, X, X)
    x_dot_dn = np.einsum("b...,b...->...", X, dN)

    gamma_vec = (
        -dt_X
        - X
        - (2.0 / 3.0) * (N - 3.0) * X
        + np.einsum("b...,ba...->a...", X, dX)
        - 2.0 * N * np.einsum("ab...,b...->a...", sigma_mixed, X)
        + N * np.einsum("ab...,b...->a...", g_inv, dN)
        + (dt_N / N - x_dot_dn / N + sym_xx / N) * X
    )
    gamma_mixed = (
        -N * sigma_mixed
        + (3.0 - N) / 3.0 * np.eye(3)[(...,) + (None,) * N.ndim]
        + np.swapaxes(dX, 0, 1)
        - np.einsum("a...,b...->ab...", X, dN) / N
        + np.einsum("bc...,c...,a...->ab...", sym, X, X) / N
    )
    return TransportCoefficients(
        tau=state.tau,
        charge=state.charge,
        g=g,
        g_inv=g_inv,
        N=N,
        X=X,
        sigma=sigma,
        christoffel=chr,
        gamma_vec=gamma_vec,
        gamma_mixed=gamma_mixed,
        f0=f0,
        fij=fij,
    )


def lorentz_force(c: TransportCoefficients, p: np.ndarray, p0: np.ndarray) -> np.ndarray:
    """Frak-F^i = h^{ij} F_0j + (p^a / p0)(h^{ij} F_aj + (tau / N) F_a0 X_hat^i)."""
    h_inv = c.g_inv - np.einsum("i...,j...->ij...", c.X, c.X) / c.N**2
    electric = np.einsum("ij...,j...->i...", h_inv, c.f0)
    magnetic = np.einsum("ij...,a...,aj...->i...", h_inv, p, c.fij)
    frame = -c.tau / c.N * np.einsum("a...,a...->...", p, c.f0) * c.X / c.N
    return electric + (magnetic + frame) / p0


def characteristic_velocity(c: TransportCoefficients, p: np.ndarray):
    """
    Right-hand side of the characteristic system.

    Returns:
        (dx/dT, dp/dT) broadcast over the sample shape of ``p``
    """
    tau = c.tau
    kin = kinematics(c.g, c.N, c.X, tau, p)
    p0 = kin.p0
    dx = -tau * p / p0
    sym = c.sigma + c.g / 3.0
    spp = np.einsum("bc...,b...,c...->...", sym, p, p)
    geodesic = np.einsum("abc...,b...,c...->a...", c.christoffel, p, p)
    dp = (
        p0 / tau * c.gamma_vec
        - 2.0 * p
        + 2.0 * np.einsum("ab...,b...->a...", c.gamma_mixed, p)
        + tau * (geodesic + spp * c.X / c.N) / p0
    )
    if c.charge != 0.0:
        dp = dp - tau * c.charge * lorentz_force(c, p, p0)
    return dx, dp


def characteristic_rhs(c: TransportCoefficients, bg: BackgroundGeometry, x: np.ndarray, p: np.ndarray):
    """Characteristic velocities at particle positions ``x`` and momenta ``p`` of shape (3, M)."""
    return characteristic_velocity(c.sample(bg, x), p)


def support_rate(
    c: TransportCoefficients, dt_g: np.ndarray, p: np.ndarray
) -> np.ndarray:
    """
    d|p|_g^2 / dT along a characteristic.

    Equals |p|^2_{d_T g} + 2 g(p, dp/dT + Gamma(dx/dT, p)); the geodesic terms cancel.
    """
    tau = c.tau
    kin = kinematics(c.g, c.N, c.X, tau, p)
    p0 = kin.p0
    gp = np.einsum("ab...,b...->a...", c.g, p)
    sym = c.sigma + c.g / 3.0
    spp = np.einsum("bc...,b...,c...->...", sym, p, p)
    x_dot_p = np.einsum("a...,a...->...", gp, c.X)
    out = (
        np.einsum("ab...,a...,b...->...", dt_g, p, p)
        + 2.0 / tau * p0 * np.einsum("a...,a...->...", gp, c.gamma_vec)
        - 4.0 * kin.p_sq
        + 4.0 * np.einsum("ab...,a...,b...->...", np.einsum("ik...,kj...->ij...", c.g, c.gamma_mixed), p, p)
        + 2.0 * tau / c.N * spp * x_dot_p / p0
    )
    if c.charge != 0.0:
        force = lorentz_force(c, p, p0)
        out = out - 2.0 * tau * c.charge * np.einsum("a...,a...->...", gp, force)
    return out


# ==================== Transport ====================


def transport_terms(
    state: SliceState, coeffs: TransportCoefficients
) -> TransportTerms:
    """The six transport terms with centered lattice derivatives."""
    lattice = state.lattice
    f = state.f
    p = lattice.momenta
    c = coeffs.lifted()
    tau = state.tau
    kin = kinematics(c.g, c.N, c.X, tau, p)
    Bf = vertical_derivative(f, lattice)
    Af = horizontal_derivative(state.background, coeffs.christoffel, f, lattice, Bf=Bf)
    sym = c.sigma + c.g / 3.0
    spp = np.einsum("bc...,b...,c...->...", sym, p, p)
    terms: TransportTerms = {
        "horizontal": tau * c.N * np.einsum("a...,a...->...", p, Af) / kin.p_under,
        "lapse_gradient": -kin.p_under / (tau * c.N) * np.einsum("a...,a...->...", c.gamma_vec, Bf),
        "dilation": 2.0 * np.einsum("a...,a...->...", p, Bf),
        "shear": -2.0 * np.einsum("c...,ac...,a...->...", p, c.gamma_mixed, Bf),
        "shift_coupling": -tau * spp / kin.p_under * np.einsum("a...,a...->...", c.X, Bf),
        "lorentz": np.zeros_like(f),
    }
    if coeffs.charge != 0.0:
        force = lorentz_force(c, p, kin.p0)
        terms["lorentz"] = tau * coeffs.charge * np.einsum("a...,a...->...", force, Bf)
    return terms


def _along(a: np.ndarray, axis: int, start: int, stop: Optional[int]) -> np.ndarray:
    index = [slice(None)] * a.ndim
    index[axis] = slice(start, stop)
    return a[tuple(index)]


def minmod(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Smallest-magnitude common-sign slope, 0 at extrema."""
    return np.where(a * b > 0.0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)


def limited_advection(f: np.ndarray, v: np.ndarray, h: float, axis: int) -> np.ndarray:
    """
    -v d_a f along one lattice axis in conservative form.

    Written as -d_a(v f) + f d_a v with upwind interface fluxes of a
    minmod-limited linear reconstruction. Outside the lattice f = 0 and v
    is continued by its edge value.

    Args:
        f: Lattice field
        v: Velocity along ``axis``, same shape as ``f``
        h: Lattice spacing
        axis: Lattice axis (negative index)
    """
    n = f.shape[axis]
    pad = [(0, 0)] * f.ndim
    pad[axis] = (2, 2)
    fp = np.pad(f, pad)
    vp = np.pad(v, pad, mode="edge")
    d = np.diff(fp, axis=axis)
    slope = minmod(_along(d, axis, 0, -1), _along(d, axis, 1, None))
    # interfaces between padded cells c and c + 1 for c = 1 .. n + 1
    f_left = _along(fp, axis, 1, n + 2) + 0.5 * _along(slope, axis, 0, n + 1)
    f_right = _along(fp, axis, 2, n + 3) - 0.5 * _along(slope, axis, 1, n + 2)
    v_face = 0.5 * (_along(vp, axis, 1, n + 2) + _along(vp, axis, 2, n + 3))
    flux = np.maximum(v_face, 0.0) * f_left + np.minimum(v_face, 0.0) * f_right
    flux_div = (_along(flux, axis, 1, None) - _along(flux, axis, 0, -1)) / h
    v_div = (_along(v_face, axis, 1, None) - _along(v_face, axis, 0, -1)) / h
    return -flux_div + f * v_div


def positivity_limit(f: np.ndarray) -> np.ndarray:
    """
    Remove negative values of f while keeping the mass of every spatial sample.

    Positive values are scaled by m / m_+, with m the lattice sum and m_+ the
    sum of the positive part; a sample with m <= 0 is emptied. Arrays without
    negative entries are returned unchanged.
    """
    if not np.any(f < 0.0):
        return f
    mass = np.sum(f, axis=_LATTICE_AXES, keepdims=True)
    positive = np.maximum(f, 0.0)
    positive_mass = np.sum(positive, axis=_LATTICE_AXES, keepdims=True)
    scale = np.divide(
        np.maximum(mass, 0.0),
        positive_mass,
        out=np.zeros_like(mass),
        where=positive_mass > 0.0,
    )
    logger.debug("Positivity limiter removed undershoot %.3e", float(np.min(f)))
    return positive * scale


def transport_rhs(
    state: SliceState,
    coeffs: TransportCoefficients,
    scheme: TransportScheme = "upwind",
) -> np.ndarray:
    """
    d_T f on the momentum lattice.

    Args:
        state: Current slice with f compactly supported inside the lattice
        coeffs: Transport coefficients of the current stage
        scheme: ``upwind`` flux-limited conservative update along the
            characteristic velocities, or ``centered`` evaluation of the six terms

    Raises:
        SupportOverflow: If f is nonzero on the outer lattice shells
    """
    state.distribution.check_support()
    f = state.f
    if not np.any(f):
        return np.zeros_like(f)
    if scheme == "centered":
        return sum(transport_terms(state, coeffs).values())
    if scheme != "upwind":
        raise ValueError(f"Unsupported transport scheme: {scheme}")

    bg = state.background
    lattice = state.lattice
    dx, dp = characteristic_velocity(coeffs.lifted(), lattice.momenta)
    dx, dp = np.broadcast_to(dx, (3,) + f.shape), np.broadcast_to(dp, (3,) + f.shape)
    rhs = np.zeros_like(f)
    for a, ax in enumerate(_LATTICE_AXES):
        rhs += limited_advection(f, dp[a], lattice.spacing, ax)
    if bg.kind != "homogeneous":
        # spatial velocity in frame components
        for a in range(3):
            backward = bg.one_sided(f, a, forward=False, lattice=True)
            forward = bg.one_sided(f, a, forward=True, lattice=True)
            rhs -= np.where(dx[a] > 0.0, dx[a] * backward, dx[a] * forward)
    return rhs


# ==================== Commutators ====================


def _interior(u: np.ndarray) -> np.ndarray:
    return u[..., 2:-2, 2:-2, 2:-2]


def _euler_five_point(u: np.ndarray, lattice: MomentumLattice) -> np.ndarray:
    """p^i B_i u on interior lattice points, exact for cubics in p."""
    h = lattice.spacing
    p = lattice.momenta
    out = np.zeros_like(u)
    for i, ax in enumerate(_LATTICE_AXES):
        d = (
            -np.roll(u, -2, axis=ax)
            + 8.0 * np.roll(u, -1, axis=ax)
            - 8.0 * np.roll(u, 1, axis=ax)
            + np.roll(u, 2, axis=ax)
        ) / (12.0 * h)
        out = out + p[i] * d
    return _interior(out)


def _p_linear_families() -> np.ndarray:
    """Mask of the Sasaki coefficients that are linear in p."""
    mask = np.zeros((6, 6, 6))
    mask[3:, :3, :3] = 1.0
    mask[:3, 3:, :3] = 1.0
    mask[:3, :3, 3:] = 1.0
    return mask


def _sasaki_euler_residual(
    chr: np.ndarray, riemann: np.ndarray, f: np.ndarray, lattice: MomentumLattice
) -> float:
    gamma = sasaki_connection(chr, riemann, lattice.momenta).assemble()
    mask = _p_linear_families().reshape((6, 6, 6) + (1,) * (gamma.ndim - 3))
    bracket = _interior(gamma) * _euler_five_point(f, lattice) - _euler_five_point(gamma * f, lattice)
    expected = -mask * _interior(gamma * f)
    return float(np.max(np.abs(bracket - expected)))


def commutator_suite(
    bg: BackgroundGeometry,
    chr: np.ndarray,
    riemann: np.ndarray,
    f: np.ndarray,
    lattice: MomentumLattice,
) -> CommutatorResiduals:
    """
    Residuals of the horizontal/vertical commutation relations on a test function.

    Relations checked:
        [A_a, A_b] f = C^k_{ab} A_k f + p^l R^k_{lba} B_k f
        [A_a, B_b] f = Gamma^k_{ab} B_k f
        [B_a, B_b] f = 0
        [B_j, p^i B_i] f = B_j f
        [A_j, p^i B_i] f = 0
        [Gamma^I_{JK}, p^i B_i] f = -Gamma^I_{JK} f on the p-linear families, 0 otherwise

    The last relation is checked on interior lattice points with a five-point
    Euler operator, exact for the cubic products Gamma f.
    """
    p = lattice.momenta
    C = bg.structure_constants

    def A(u: np.ndarray) -> np.ndarray:
        return horizontal_derivative(bg, chr, u, lattice)

    def B(u: np.ndarray) -> np.ndarray:
        return vertical_derivative(u, lattice)

    Af, Bf = A(f), B(f)
    AAf = np.stack([A(Af[b]) for b in range(3)], axis=1)
    ABf = np.stack([A(Bf[b]) for b in range(3)], axis=1)
    BAf = np.stack([B(Af[a]) for a in range(3)])
    BBf = np.stack([B(Bf[b]) for b in range(3)], axis=1)

    aa = AAf - np.swapaxes(AAf, 0, 1)
    aa_expected = np.einsum("kab,k...->ab...", C, Af) + np.einsum(
        "l...,klba...,k...->ab...", p, lift(riemann), Bf
    )
    ab = ABf - BAf
    ab_expected = np.einsum("kab...,k...->ab...", lift(chr), Bf)
    bb = BBf - np.swapaxes(BBf, 0, 1)

    euler_f = np.einsum("i...,i...->...", p, Bf)
    b_euler = B(euler_f) - np.einsum("i...,ij...->j...", p, BBf) - Bf
    a_euler = A(euler_f) - np.einsum("i...,ji...->j...", p, BAf)

    return {
        "AA": float(np.max(np.abs(aa - aa_expected))),
        "AB": float(np.max(np.abs(ab - ab_expected))),
        "BB": float(np.max(np.abs(bb))),
        "B_euler": float(np.max(np.abs(b_euler))),
        "A_euler": float(np.max(np.abs(a_euler))),
        "Gamma_euler": _sasaki_euler_residual(chr, riemann, f, lattice),
    }
