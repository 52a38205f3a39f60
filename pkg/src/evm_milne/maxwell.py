#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Maxwell Core

Slice-adapted potential, Faraday tensor assembly, gauge projection, the
rescaled charge currents, the elliptic equation for Psi, the wave equation
for omega and the electromagnetic stress-energy in rescaled variables.

Frame conventions: F0 holds F_0i (the d_tau component), F_hat0 holds
F_{0^i} = F(e0, e_i) and Fij the spatial part. The potential obeys
A = (N Psi - X^j omega_j) dT + omega up to sign in the time component,
so that N F_{0^i} = -tau F_0i + X^j F_ji holds identically.
"""

import logging
from typing import Optional, Tuple

import numpy as np
from pydantic import Field

from .elliptic import EllipticProblem, SolverSettings, remove_mean, solve_scalar
from .errors import FrameChangeMismatch, GaugeProjectionFailed, SolverDiverged
from .geometry import SliceGeometry, second_fundamental_pi
from .kinetic import MomentumKinematics, momentum_integral, momentum_kinematics
from .state import FieldModel, PotentialState, SliceState

logger = logging.getLogger(__name__)

FRAME_CHANGE_TOL = 1e-10


class FaradayField(FieldModel):
    """Faraday tensor components on one slice."""

    F0: np.ndarray = Field(description="F_0i, shape (3,) + S")
    Fij: np.ndarray = Field(description="F_ij, shape (3, 3) + S")
    F_hat0: np.ndarray = Field(description="F_{0^i} = F(e0, e_i), shape (3,) + S")

    @property
    def FT(self) -> np.ndarray:
        """F_Ti = F(d_T, e_i)."""
        return self.F0


class CurrentDensities(FieldModel):
    """Rescaled charge density and spatial current."""

    J0: np.ndarray = Field(description="q N int f d mu_p")
    J: np.ndarray = Field(description="q N int f P_i d mu_p")
    leading_ratio: float = Field(default=1.0, description="max J0 / (q N int f p_hat d mu_p)")


class MaxwellStress(FieldModel):
    """Unrescaled electromagnetic stress components and the invariant F^2."""

    T00: np.ndarray
    T0i: np.ndarray
    Tij: np.ndarray
    F_sq: np.ndarray


def zero_potential(state: SliceState) -> PotentialState:
    bg = state.background
    return PotentialState(omega=bg.zeros((3,)), omega_dot=bg.zeros((3,)), psi=bg.zeros())


# ==================== Faraday tensor ====================


def exterior_derivative(geo: SliceGeometry, omega: np.ndarray) -> np.ndarray:
    """(d omega)_ij = D_i omega_j - D_j omega_i."""
    d_omega = geo.D(omega, "d")
    return d_omega - np.swapaxes(d_omega, 0, 1)


def faraday_from_potential(
    state: SliceState,
    pot: Optional[PotentialState] = None,
    geo: Optional[SliceGeometry] = None,
) -> FaradayField:
    """
    Assemble F from (omega, L_{e0} omega, Psi).

    d_T omega is reconstructed as N L_{e0} omega - L_X omega. The frame change
    N F_{0^i} = -tau F_0i + X^j F_ji is checked on every call.

    Raises:
        FrameChangeMismatch: If the two time components disagree beyond
            FRAME_CHANGE_TOL relative to their scale
    """
    pot = pot or state.potential
    bg = state.background
    geo = geo or SliceGeometry(bg, state.g)
    N, X, tau = state.N, state.X, state.tau
    omega, omega_dot, psi = pot.omega, pot.omega_dot, pot.psi

    Fij = exterior_derivative(geo, omega)
    d_omega = geo.D(omega, "d")
    dX = geo.D(X, "u")
    dN, d_psi = bg.gradient(N), bg.gradient(psi)

    dt_omega = N * omega_dot - geo.lie_derivative(X, omega, 1)
    grad_x_omega = np.einsum("j...,ij...->i...", X, d_omega) + np.einsum(
        "j...,ij...->i...", omega, dX
    )
    FT = dt_omega - (N * d_psi + psi * dN) + grad_x_omega
    F_hat0 = omega_dot - d_psi - psi * dN / N

    mismatch = N * F_hat0 - FT - np.einsum("j...,ji...->i...", X, Fij)
    scale = max(float(np.max(np.abs(FT))), 1.0)
    if float(np.max(np.abs(mismatch))) > FRAME_CHANGE_TOL * scale:
        raise FrameChangeMismatch(
            "Faraday frame change mismatch",
            {"mismatch": float(np.max(np.abs(mismatch))), "scale": scale},
        )

    return FaradayField(F0=-FT / tau, Fij=Fij, F_hat0=F_hat0)


def bianchi_residual(state: SliceState, F: FaradayField) -> float:
    """Max of the cyclic sum e_k F_ij + e_i F_jk + e_j F_ki."""
    dF = state.background.gradient(F.Fij)
    cyclic = dF + np.einsum("kij...->ijk...", dF) + np.einsum("jki...->ijk...", dF)
    return float(np.max(np.abs(cyclic)))


# ==================== Gauge ====================


def hodge_laplacian(geo: SliceGeometry, omega: np.ndarray) -> np.ndarray:
    """Delta_H omega_k = -D_k(div omega) - g^{ai} D_a (d omega)_{ik}."""
    div = np.einsum("ab...,ab...->...", geo.g_inv, geo.D(omega, "d"))
    d_curl = geo.D(exterior_derivative(geo, omega), "dd")
    return -geo.bg.gradient(div) - np.einsum("ai...,aik...->k...", geo.g_inv, d_curl)


def divergence(geo: SliceGeometry, omega: np.ndarray) -> np.ndarray:
    """div_g omega in conservative form |g|^{-1/2} e_a(|g|^{1/2} g^{ab} omega_b)."""
    bg = geo.bg
    if bg.kind == "homogeneous":
        return np.einsum("ab...,ab...->...", geo.g_inv, geo.D(omega, "d"))
    flux = geo.volume_density * np.einsum("ab...,b...->a...", geo.g_inv, omega)
    return sum(bg.partial(flux[a], a) for a in range(3)) / geo.volume_density


def _invariant_projector(geo: SliceGeometry, kernel_tol: float) -> np.ndarray:
    """
    Projector onto the invariant divergence-free 1-forms spanned by Hodge
    Laplacian eigenvectors of positive eigenvalue, g^{-1}-orthogonal.
    """
    shape = geo.bg.spatial_shape
    g_inv = geo.g_inv.reshape(3, 3, -1)[..., 0]

    def invariant(v: np.ndarray) -> np.ndarray:
        return v[:, None, None, None] * np.ones((3,) + shape)

    div_row = np.array(
        [float(divergence(geo, invariant(np.eye(3)[k])).ravel()[0]) for k in range(3)]
    )
    # coordinates y = M^T omega with g^{-1} = M M^T are orthonormal
    M = np.linalg.cholesky(g_inv)
    to_form = np.linalg.inv(M.T)
    _, s, vh = np.linalg.svd(np.linalg.solve(M, div_row)[None, :])
    rank = int(np.sum(s > kernel_tol))
    basis = [to_form @ y for y in vh[rank:]]
    projector = np.zeros((3, 3))
    if not basis:
        return projector
    images = np.array(
        [hodge_laplacian(geo, invariant(u)).reshape(3, -1)[:, 0] for u in basis]
    ).T
    B = np.array(basis).T
    restricted = B.T @ g_inv @ images
    values, vectors = np.linalg.eig(restricted)
    kept = [vectors[:, k].real for k in range(len(values)) if values[k].real > kernel_tol]
    if kept:
        Q, _ = np.linalg.qr(np.array(kept).T)
        for y in Q.T:
            u = B @ y
            projector += np.outer(u, g_inv @ u)
    return projector


def _torus_projection(geo: SliceGeometry, u: np.ndarray, settings: SolverSettings) -> np.ndarray:
    """Remove the component means of u and split off its gradient part."""
    bg = geo.bg
    u = u - np.mean(u, axis=(-3, -2, -1), keepdims=True)
    div = divergence(geo, u)
    size = float(np.sqrt(np.mean(u**2)))
    if float(np.sqrt(np.mean(div**2))) <= settings.tol * max(size, 1e-300):
        return u
    problem = EllipticProblem(
        coefficient=np.zeros(bg.spatial_shape),
        rhs=-div,
        tol=settings.tol,
        max_iter=settings.krylov_max_iter,
        zero_mean=True,
    )
    try:
        phi = solve_scalar(geo, problem, settings)
    except SolverDiverged as exc:
        raise GaugeProjectionFailed("gauge Poisson solve failed", exc.details) from exc
    return u - bg.gradient(phi)


def gauge_project(
    state: SliceState,
    pot: Optional[PotentialState] = None,
    settings: Optional[SolverSettings] = None,
    geo: Optional[SliceGeometry] = None,
) -> PotentialState:
    """
    Impose the slice-adapted gauge on a raw potential.

    On the torus the component means of omega and L_{e0} omega are removed
    and each gradient part is split off with a conservative Poisson solve in
    the metric g. For g = gamma this is the spectral Helmholtz projection;
    the Krylov solve (preconditioner from SolverSettings) covers perturbed
    g where Fourier modes no longer decouple. On the homogeneous background
    both are projected algebraically. Psi is shifted to zero d mu_g mean.

    Raises:
        GaugeProjectionFailed: If the Poisson solve does not converge
    """
    pot = pot or state.potential
    settings = settings or SolverSettings()
    bg = state.background
    geo = geo or SliceGeometry(bg, state.g)
    omega, omega_dot = pot.omega, pot.omega_dot

    if bg.kind == "homogeneous":
        projector = _invariant_projector(geo, settings.kernel_tol)
        omega = np.einsum("ij,j...->i...", projector, omega)
        omega_dot = np.einsum("ij,j...->i...", projector, omega_dot)
    else:
        omega = _torus_projection(geo, omega, settings)
        omega_dot = _torus_projection(geo, omega_dot, settings)

    psi = pot.psi - geo.mean(pot.psi)
    return PotentialState(omega=omega, omega_dot=omega_dot, psi=psi)


# ==================== Currents ====================


def currents(state: SliceState, kin: Optional[MomentumKinematics] = None) -> CurrentDensities:
    """J0 = q N int f d mu_p and J_i = q N int f P_i d mu_p by lattice quadrature."""
    bg = state.background
    q = state.charge
    if q == 0.0 or not np.any(state.f):
        return CurrentDensities(J0=bg.zeros(), J=bg.zeros((3,)), leading_ratio=1.0)
    kin = kin or momentum_kinematics(state)
    g, lattice, f, N = state.g.components, state.lattice, state.f, state.N
    J0 = q * N * momentum_integral(g, f, lattice)
    J = q * N * momentum_integral(g, f * kin.P, lattice)
    leading = q * N * momentum_integral(g, f * kin.p_hat, lattice)
    mask = np.abs(leading) > 0.0
    ratio = float(np.max(J0[mask] / leading[mask])) if np.any(mask) else 1.0
    return CurrentDensities(J0=J0, J=J, leading_ratio=ratio)


# ==================== Psi ====================


def divergence_commutator(
    state: SliceState, pot: PotentialState, geo: SliceGeometry
) -> np.ndarray:
    """
    [L_{e0}, div_g] omega.

    2 Pi^{ab} D_a omega_b + <D log N, L_{e0} omega> + <S, omega>
    + 2 Pi^{ab} e_a log N omega_b - tr Pi <D log N, omega>, S = 2 div Pi - D tr Pi.
    """
    g_inv = geo.g_inv
    pi = second_fundamental_pi(state)
    pi_up = np.einsum("ia...,jb...,ab...->ij...", g_inv, g_inv, pi)
    tr_pi = np.einsum("ab...,ab...->...", g_inv, pi)
    d_log_n = state.background.gradient(state.N) / state.N
    div_pi = np.einsum("ac...,acb...->b...", g_inv, geo.D(pi, "dd"))
    s_vec = 2.0 * div_pi - state.background.gradient(tr_pi)
    omega, omega_dot = pot.omega, pot.omega_dot

    def inner(u: np.ndarray, v: np.ndarray) -> np.ndarray:
        return np.einsum("ab...,a...,b...->...", g_inv, u, v)

    return (
        2.0 * np.einsum("ab...,ab...->...", pi_up, geo.D(omega, "d"))
        + inner(d_log_n, omega_dot)
        + inner(s_vec, omega)
        + 2.0 * np.einsum("ab...,a...,b...->...", pi_up, d_log_n, omega)
        - tr_pi * inner(d_log_n, omega)
    )


def solve_psi(
    state: SliceState,
    pot: PotentialState,
    cur: CurrentDensities,
    settings: Optional[SolverSettings] = None,
    geo: Optional[SliceGeometry] = None,
) -> Tuple[np.ndarray, float]:
    """
    Solve -Delta_g Psi = div(Psi D log N) + [L_{e0}, div] omega + N^-1 J0 - tau X_hat^j J_j.

    The Psi-dependent divergence term is iterated to a fixed point; every
    iterate has zero d mu_g mean.

    Returns:
        (Psi, charge defect) where the defect is the mean removed from the
        right-hand side to make the zero-mean problem solvable

    Raises:
        EllipticSolvabilityError: If the mean is nonzero and no neutralizing
            background is configured
        SolverDiverged: If the fixed point does not converge
    """
    settings = settings or SolverSettings()
    bg = state.background
    geo = geo or SliceGeometry(bg, state.g)
    N, tau = state.N, state.tau
    source = (
        divergence_commutator(state, pot, geo)
        + cur.J0 / N
        - tau * np.einsum("a...,a...->...", state.lapse_shift.X_hat, cur.J)
    )
    d_log_n = bg.gradient(N) / N
    psi = pot.psi
    defect = 0.0
    for iteration in range(1, settings.max_iter + 1):
        coupling = divergence(geo, psi * d_log_n)
        rhs, defect = remove_mean(geo, source + coupling, settings, "Psi")
        problem = EllipticProblem(
            coefficient=np.zeros(bg.spatial_shape),
            rhs=rhs,
            tol=settings.tol,
            max_iter=settings.krylov_max_iter,
            zero_mean=True,
        )
        updated = solve_scalar(geo, problem, settings, guess=psi)
        change = float(np.max(np.abs(updated - psi)))
        psi = updated
        if change <= settings.tol * max(float(np.max(np.abs(psi))), 1.0):
            logger.debug("Psi fixed point converged after %d iterations", iteration)
            if abs(defect) > 0.0:
                logger.debug("Neutralizing background absorbed charge defect %.3e", defect)
            return psi, defect
    raise SolverDiverged("Psi fixed point did not converge", {"iterations": settings.max_iter})


def e0_derivative(state: SliceState, u: np.ndarray, dt_u: np.ndarray) -> np.ndarray:
    """d_{e0} u = N^-1 (d_T u + X^a e_a u) for a scalar."""
    du = state.background.gradient(u)
    return (dt_u + np.einsum("a...,a...->...", state.X, du)) / state.N


def psi_rate(
    state: SliceState, psi: np.ndarray, previous: Optional[np.ndarray], dT: float
) -> np.ndarray:
    """d_{e0} Psi from a backward difference of consecutive solves."""
    if previous is None or dT <= 0.0:
        return np.zeros_like(psi)
    return e0_derivative(state, psi, (psi - previous) / dT)


# ==================== Wave equation ====================


def omega_wave_rhs(
    state: SliceState,
    pot: PotentialState,
    F: FaradayField,
    cur: CurrentDensities,
    e0_psi: np.ndarray,
    dt_N: np.ndarray,
    geo: Optional[SliceGeometry] = None,
) -> np.ndarray:
    """
    L_{e0} L_{e0} omega.

    -Delta_H omega + D(d_{e0} Psi) + d_{e0} Psi D N / N + Psi D(d_{e0} log N)
    + g^{ij} (e_i N / N) F_jk + tr Pi F_{0^k} - 2 g^{ij} Pi_ik F_{0^j} - tau J_k

    Args:
        state: Current slice
        pot: Gauged potential with solved Psi
        F: Faraday tensor of ``pot``
        cur: Charge currents
        e0_psi: d_{e0} Psi
        dt_N: d_T N
        geo: Optional cached geometry
    """
    bg = state.background
    geo = geo or SliceGeometry(bg, state.g)
    N, g_inv = state.N, geo.g_inv
    pi = second_fundamental_pi(state)
    tr_pi = np.einsum("ab...,ab...->...", g_inv, pi)
    dN = bg.gradient(N)
    e0_log_n = e0_derivative(state, np.log(N), dt_N / N)
    return (
        -hodge_laplacian(geo, pot.omega)
        + bg.gradient(e0_psi)
        + e0_psi * dN / N
        + pot.psi * bg.gradient(e0_log_n)
        + np.einsum("ij...,i...,jk...->k...", g_inv, dN / N, F.Fij)
        + tr_pi * F.F_hat0
        - 2.0 * np.einsum("ij...,ik...,j...->k...", g_inv, pi, F.F_hat0)
        - state.tau * cur.J
    )


def potential_rhs(
    state: SliceState,
    pot: PotentialState,
    wave: np.ndarray,
    geo: Optional[SliceGeometry] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Convert L_{e0} derivatives into (d_T omega, d_T L_{e0} omega)."""
    geo = geo or SliceGeometry(state.background, state.g)
    N, X = state.N, state.X
    dt_omega = N * pot.omega_dot - geo.lie_derivative(X, pot.omega, 1)
    dt_omega_dot = N * wave - geo.lie_derivative(X, pot.omega_dot, 1)
    return dt_omega, dt_omega_dot


# ==================== Stress-energy ====================


def maxwell_stress(state: SliceState, F: FaradayField) -> MaxwellStress:
    """
    Components T_00, T_0i, T_ij of the electromagnetic stress in the (tau, x)
    chart, expressed through rescaled g, N, X, tau and F_0i, F_ij.
    """
    g, g_inv = state.g.components, state.g.inverse
    N, X, tau = state.N, state.X, state.tau
    F0, Fij = F.F0, F.Fij
    h_inv = g_inv - np.einsum("i...,j...->ij...", X, X) / N**2
    x_low = np.einsum("ij...,j...->i...", g, X)
    x_hat_sq = np.einsum("i...,i...->...", x_low, X) / N**2

    e_sq = np.einsum("ij...,i...,j...->...", g_inv, F0, F0)
    cross = np.einsum("k...,ij...,i...,kj...->...", X, g_inv, F0, Fij)
    b_sq = np.einsum("ik...,jl...,ij...,kl...->...", h_inv, h_inv, Fij, Fij)
    F_sq = -2.0 * tau**6 / N**2 * e_sq + 4.0 * tau**5 / N**2 * cross + tau**4 * b_sq

    T00 = tau**2 * np.einsum("ij...,i...,j...->...", h_inv, F0, F0) + 0.25 * tau**-4 * (
        1.0 - x_hat_sq
    ) * N**2 * F_sq
    x_f0 = np.einsum("j...,j...->...", X, F0)
    T0i = (
        tau**2 * np.einsum("jk...,k...,ij...->i...", h_inv, F0, Fij)
        - tau**3 / N**2 * x_f0 * F0
        - 0.25 * tau**-3 * x_low * F_sq
    )
    x_fij = np.einsum("k...,ik...->i...", X, Fij)
    Tij = (
        -(tau**4) / N**2 * np.einsum("i...,j...->ij...", F0, F0)
        - tau**3 / N**2 * (np.einsum("i...,j...->ij...", F0, x_fij) + np.einsum("j...,i...->ij...", F0, x_fij))
        + tau**2 * np.einsum("kl...,ik...,jl...->ij...", h_inv, Fij, Fij)
        - 0.25 * tau**-2 * g * F_sq
    )
    return MaxwellStress(T00=T00, T0i=T0i, Tij=Tij, F_sq=F_sq)


def spacetime_stress(state: SliceState, F: FaradayField) -> MaxwellStress:
    """
    Reference assembly of T_mu nu = F_mu^a F_nu a - 1/4 h_mu nu F^2 with the
    full (tau, x) metric h_00 = tau^-4 (|X|_g^2 - N^2), h_0i = tau^-3 X_i,
    h_ij = tau^-2 g_ij.
    """
    g, N, X, tau = state.g.components, state.N, state.X, state.tau
    x_low = np.einsum("ij...,j...->i...", g, X)
    sample = N.shape
    h = np.zeros((4, 4) + sample)
    h[0, 0] = (np.einsum("i...,i...->...", x_low, X) - N**2) / tau**4
    h[0, 1:] = h[1:, 0] = x_low / tau**3
    h[1:, 1:] = g / tau**2
    h_inv = np.moveaxis(np.linalg.inv(np.moveaxis(h, (0, 1), (-2, -1))), (-2, -1), (0, 1))

    Fs = np.zeros((4, 4) + sample)
    Fs[0, 1:] = F.F0
    Fs[1:, 0] = -F.F0
    Fs[1:, 1:] = F.Fij
    F_sq = np.einsum("ab...,cd...,ac...,bd...->...", Fs, Fs, h_inv, h_inv)
    T = np.einsum("ma...,nb...,ab...->mn...", Fs, Fs, h_inv) - 0.25 * h * F_sq
    return MaxwellStress(T00=T[0, 0], T0i=T[0, 1:], Tij=T[1:, 1:], F_sq=F_sq)
