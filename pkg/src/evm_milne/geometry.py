#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Rescaled 3-Geometry

Connection, curvature, Lichnerowicz operator, Lie derivatives and the
geometric evolution formulas of the CMCSH-gauged Einstein equations.
All tensors are frame components following the conventions in
``backgrounds``; the Riemann tensor is ``R[a, b, c, d] = R^a_{bcd}``,
the a-component of R(e_c, e_d) e_b, with Ricci ``R_bd = R^a_{bad}``.
"""

import logging
from functools import cached_property
from typing import List, Optional, Tuple

import numpy as np
from pydantic import Field

from .backgrounds import BackgroundGeometry
from .models import GeometryRates
from .state import FieldModel, SliceState, SpatialMetric

logger = logging.getLogger(__name__)

EINSTEIN_CONSTANT = -2.0 / 9.0

_LEFT = "abcdefgh"
_RIGHT = "ijklmnop"


# ==================== Index gymnastics ====================


def lift(arr: np.ndarray) -> np.ndarray:
    """Append three unit axes so a spatial field broadcasts against lattice fields."""
    return arr[..., None, None, None]


def tensor_norm_sq(
    g: np.ndarray, g_inv: np.ndarray, t: np.ndarray, variance: str
) -> np.ndarray:
    """
    Pointwise squared norm of a tensor field.

    Args:
        g: Metric used for contravariant slots
        g_inv: Inverse metric used for covariant slots
        t: Tensor field with ``len(variance)`` leading index axes
        variance: One character per index, ``u`` (up) or ``d`` (down)

    Returns:
        Field of |t|^2 with the sample shape of ``t``
    """
    rank = len(variance)
    subs = [_LEFT[:rank] + "...", _RIGHT[:rank] + "..."]
    operands = [t, t]
    for n, kind in enumerate(variance):
        subs.append(_LEFT[n] + _RIGHT[n] + "...")
        operands.append(g_inv if kind == "d" else g)
    return np.einsum(",".join(subs) + "->...", *operands)


def covariant_derivative(
    bg: BackgroundGeometry,
    chr: np.ndarray,
    t: np.ndarray,
    variance: str,
    lattice: bool = False,
) -> np.ndarray:
    """
    Covariant derivative of a tensor field; the derivative index comes first.

    Args:
        bg: Background supplying the frame derivatives
        chr: Connection coefficients Gamma^i_{jk}
        t: Tensor field
        variance: Index positions of ``t``
        lattice: Whether ``t`` carries trailing momentum-lattice axes

    Returns:
        Array ``out[a, ...] = D_a t[...]``
    """
    c = lift(chr) if lattice else chr
    out = bg.gradient(t, lattice=lattice)
    for pos, kind in enumerate(variance):
        moved = np.moveaxis(t, pos, 0)
        if kind == "u":
            term = np.einsum("iam...,m...->ai...", c, moved)
        else:
            term = -np.einsum("mai...,m...->ai...", c, moved)
        out = out + np.moveaxis(term, 1, pos + 1)
    return out


def riemann_tensor(bg: BackgroundGeometry, chr: np.ndarray) -> np.ndarray:
    """Riemann tensor R^a_{bcd} of the connection ``chr`` in the background frame."""
    C = bg.structure_constants
    dchr = bg.gradient(chr)
    return (
        np.einsum("cadb...->abcd...", dchr)
        - np.einsum("dacb...->abcd...", dchr)
        + np.einsum("ace...,edb...->abcd...", chr, chr)
        - np.einsum("ade...,ecb...->abcd...", chr, chr)
        - np.einsum("ecd,aeb...->abcd...", C, chr)
    )


def difference_tensor(
    g: SpatialMetric, reference: SpatialMetric, bg: BackgroundGeometry
) -> np.ndarray:
    """
    Difference tensor Upsilon between the connections of ``g`` and ``reference``.

    Upsilon^i_{jk} = 1/2 g^{il} (Dbar_j g_kl + Dbar_k g_lj - Dbar_l g_jk),
    with Dbar the Levi-Civita connection of ``reference``.
    """
    if reference.components is bg.gamma or np.array_equal(reference.components, bg.gamma):
        ref_chr = bg.christoffel_gamma
    else:
        ref_chr = bg.frame_christoffel(reference.components)
    dg = covariant_derivative(bg, ref_chr, g.components, "dd")
    lowered = 0.5 * (
        np.einsum("jkl...->ljk...", dg)
        + np.einsum("klj...->ljk...", dg)
        - np.einsum("ljk...->ljk...", dg)
    )
    return np.einsum("il...,ljk...->ijk...", g.inverse, lowered)


def christoffel(g: SpatialMetric, bg: BackgroundGeometry) -> np.ndarray:
    """Connection coefficients of ``g`` as background connection plus difference tensor."""
    return bg.christoffel_gamma + difference_tensor(g, SpatialMetric(components=bg.gamma), bg)


# ==================== Slice geometry cache ====================


class SliceGeometry:
    """Derived geometric quantities of one metric, computed lazily and cached."""

    def __init__(self, bg: BackgroundGeometry, g: SpatialMetric):
        self.bg = bg
        self.metric = g

    @property
    def g(self) -> np.ndarray:
        return self.metric.components

    @property
    def g_inv(self) -> np.ndarray:
        return self.metric.inverse

    @cached_property
    def christoffel(self) -> np.ndarray:
        return christoffel(self.metric, self.bg)

    @cached_property
    def christoffel_difference(self) -> np.ndarray:
        return self.christoffel - self.bg.christoffel_gamma

    @cached_property
    def riemann(self) -> np.ndarray:
        return riemann_tensor(self.bg, self.christoffel)

    @cached_property
    def ricci(self) -> np.ndarray:
        return np.einsum("abad...->bd...", self.riemann)

    @cached_property
    def scalar_curvature(self) -> np.ndarray:
        return self.metric.trace(self.ricci)

    @cached_property
    def volume_density(self) -> np.ndarray:
        """sqrt(|g| / |gamma|), the density of d mu_g against the quadrature weights."""
        det_gamma = float(np.linalg.det(self.bg.gamma_components))
        return np.sqrt(self.metric.det / det_gamma)

    @cached_property
    def volume(self) -> float:
        return float(np.sum(self.bg.quadrature_weights * self.volume_density))

    def D(self, t: np.ndarray, variance: str, lattice: bool = False) -> np.ndarray:
        return covariant_derivative(self.bg, self.christoffel, t, variance, lattice=lattice)

    def hessian(self, f: np.ndarray) -> np.ndarray:
        """Covariant Hessian D_a D_b f of a scalar."""
        return self.D(self.bg.gradient(f), "d")

    def laplacian(self, f: np.ndarray) -> np.ndarray:
        """Delta_g f = g^{ab} D_a D_b f."""
        return np.einsum("ab...,ab...->...", self.g_inv, self.hessian(f))

    def integrate(self, u: np.ndarray) -> np.ndarray:
        """Integral of ``u`` against d mu_g; leading axes are kept."""
        return np.sum(self.bg.quadrature_weights * self.volume_density * u, axis=(-3, -2, -1))

    def mean(self, u: np.ndarray) -> np.ndarray:
        return self.integrate(u) / self.volume

    def norm_sq(self, t: np.ndarray, variance: str) -> np.ndarray:
        return tensor_norm_sq(self.g, self.g_inv, t, variance)

    def sobolev_norm(self, t: np.ndarray, variance: str, k: int) -> float:
        """sqrt(sum_{l <= k} int |D^l t|_g^2 d mu_g)."""
        total = 0.0
        current, var = t, variance
        for _ in range(k + 1):
            total += float(self.integrate(self.norm_sq(current, var)))
            current, var = self.D(current, var), "d" + var
        return float(np.sqrt(total))

    def lie_derivative(self, X: np.ndarray, t: np.ndarray, rank: int) -> np.ndarray:
        """Lie derivative of a fully covariant tensor: X^k D_k t + sum t_{..k..} D_i X^k."""
        out = np.einsum("k...,k...->...", X, self.D(t, "d" * rank))
        dX = self.D(X, "u")
        for pos in range(rank):
            moved = np.moveaxis(t, pos, 0)
            term = np.einsum("ik...,k...->i...", dX, moved)
            out = out + np.moveaxis(term, 0, pos)
        return out


# ==================== Spacetime connection ====================


class SpacetimeConnection(FieldModel):
    """Connection coefficients of the conformal spacetime metric in the frame (e0, e_i)."""

    gamma_000: np.ndarray
    gamma_i00: np.ndarray
    gamma_0i0: np.ndarray
    gamma_ij0: np.ndarray
    gamma_0ij: np.ndarray
    gamma_ijk: np.ndarray
    pi: np.ndarray
    N: np.ndarray
    X: np.ndarray = Field(description="e0 = N^-1 (d_T + X)")


def second_fundamental_pi(state: SliceState) -> np.ndarray:
    """Pi = -Sigma + N^-1 (1 - N/3) g."""
    N = state.N
    return -state.sigma.components + (1.0 - N / 3.0) / N * state.g.components


def spacetime_connection(
    state: SliceState, geo: Optional[SliceGeometry] = None
) -> SpacetimeConnection:
    """Fill the six connection families of the spacetime metric."""
    state.lapse_shift.check_positive(tol=np.inf)
    geo = geo or SliceGeometry(state.background, state.g)
    N = state.N
    pi = second_fundamental_pi(state)
    zeros = np.zeros_like(N)
    d_log_n = state.background.gradient(N) / N
    return SpacetimeConnection(
        gamma_000=zeros,
        gamma_i00=state.g.raise_index(d_log_n),
        gamma_0i0=np.zeros((3,) + N.shape),
        gamma_ij0=-np.einsum("ik...,kj...->ij...", geo.g_inv, pi),
        gamma_0ij=-pi,
        gamma_ijk=geo.christoffel,
        pi=pi,
        N=N,
        X=state.X,
    )


# ==================== Einstein and Lichnerowicz operators ====================


def _mixed_curvature_action(bg: BackgroundGeometry, u: np.ndarray) -> np.ndarray:
    """(R_gamma u)_ij = R_{ikjl} u^{kl}, indices moved with gamma."""
    riem_low = np.einsum("am...,mbcd...->abcd...", bg.gamma, bg.riemann_gamma)
    u_up = np.einsum("ka...,lb...,ab...->kl...", bg.gamma_inv, bg.gamma_inv, u)
    return np.einsum("ikjl...,kl...->ij...", riem_low, u_up)


def lichnerowicz_pair(
    g: SpatialMetric, bg: BackgroundGeometry, u: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Weighted Lichnerowicz operator and the CMCSH curvature residual.

    Args:
        g: Dynamical metric
        bg: Background geometry providing gamma and its connection
        u: Symmetric 2-tensor field

    Returns:
        (L_{g,gamma} u, J) with J = Ric[g] + (2/9) g - 1/2 L_{g,gamma}(g - gamma)
    """
    operator = lichnerowicz(g, bg, u)
    geo = SliceGeometry(bg, g)
    strain = g.components - bg.gamma
    residual = geo.ricci - EINSTEIN_CONSTANT * g.components - 0.5 * lichnerowicz(g, bg, strain)
    return operator, residual


def lichnerowicz(g: SpatialMetric, bg: BackgroundGeometry, u: np.ndarray) -> np.ndarray:
    """L_{g,gamma} u = -|g|^{-1/2} D_hat_k(|g|^{1/2} g^{kl} D_hat_l u) - 2 R_gamma u."""
    chr_hat = bg.christoffel_gamma
    density = np.sqrt(g.det)
    du = covariant_derivative(bg, chr_hat, u, "dd")
    flux = density * np.einsum("kl...,lij...->kij...", g.inverse, du)
    div = np.einsum("kkij...->ij...", covariant_derivative(bg, chr_hat, flux, "udd"))
    return -div / density - 2.0 * _mixed_curvature_action(bg, u)


def einstein_operator(bg: BackgroundGeometry, u: np.ndarray) -> np.ndarray:
    """Delta_E u = -Laplacian_gamma u - 2 R_gamma u."""
    du = covariant_derivative(bg, bg.christoffel_gamma, u, "dd")
    ddu = covariant_derivative(bg, bg.christoffel_gamma, du, "ddd")
    rough = np.einsum("ab...,abij...->ij...", bg.gamma_inv, ddu)
    return -rough - 2.0 * _mixed_curvature_action(bg, u)


def _symmetric_basis() -> List[np.ndarray]:
    basis = []
    for i in range(3):
        for j in range(i, 3):
            e = np.zeros((3, 3))
            e[i, j] = e[j, i] = 1.0
            basis.append(e)
    return basis


def einstein_spectrum(bg: BackgroundGeometry) -> Tuple[np.ndarray, List[np.ndarray]]:
    """
    Spectrum of the Einstein operator on constant-component symmetric tensors.

    Returns:
        Sorted real eigenvalues and matching (3, 3) eigentensors
    """
    basis = _symmetric_basis()
    columns = []
    for e in basis:
        image = einstein_operator(bg, e[(...,) + (None,) * 3] * np.ones((3, 3) + bg.spatial_shape))
        image = image.reshape(3, 3, -1).mean(axis=-1)
        columns.append([image[i, j] for i in range(3) for j in range(i, 3)])
    matrix = np.array(columns).T
    values, vectors = np.linalg.eig(matrix)
    order = np.argsort(values.real)
    tensors = []
    for idx in order:
        coeffs = vectors[:, idx].real
        tensor = sum(c * e for c, e in zip(coeffs, basis))
        tensors.append(tensor / np.linalg.norm(tensor))
    return values.real[order], tensors


def lowest_einstein_eigenvalue(bg: BackgroundGeometry, kernel_tol: float = 1e-10) -> float:
    """Smallest Einstein-operator eigenvalue outside the excluded kernel."""
    if bg.kind == "torus":
        return float(getattr(bg, "lowest_laplacian_eigenvalue"))
    values, _ = einstein_spectrum(bg)
    admissible = values[values > kernel_tol]
    return float(admissible.min())


# ==================== Evolution formulas ====================


def einstein_rhs(
    state: SliceState, S: np.ndarray, geo: Optional[SliceGeometry] = None
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Time derivatives of g and Sigma in CMCSH gauge.

    Returns:
        (d_T g, d_T Sigma)
    """
    geo = geo or SliceGeometry(state.background, state.g)
    g, sigma, N, X = state.g.components, state.sigma.components, state.N, state.X
    n_hat = N / 3.0 - 1.0
    dt_g = 2.0 * N * sigma + 2.0 * n_hat * g - geo.lie_derivative(X, g, 2)
    sigma_sq = np.einsum("ik...,kl...,lj...->ij...", sigma, geo.g_inv, sigma)
    dt_sigma = (
        -2.0 * sigma
        - N * (geo.ricci - EINSTEIN_CONSTANT * g)
        + geo.hessian(N)
        + 2.0 * N * sigma_sq
        - n_hat / 3.0 * g
        - n_hat * sigma
        - geo.lie_derivative(X, sigma, 2)
        + N * state.tau * S
    )
    return dt_g, dt_sigma


def geometric_time_derivatives(
    state: SliceState, S: np.ndarray, geo: Optional[SliceGeometry] = None
) -> GeometryRates:
    """
    Time derivatives of geometric objects along the flow.

    Args:
        state: Current slice
        S: Rescaled matter stress S_ij
        geo: Optional cached geometry of ``state.g``

    Returns:
        GeometryRates with d_T g^{ij}, d_T Gamma, d_T |Sigma|^2, [d_T, Delta] X and
        d_T R^i_j
    """
    bg = state.background
    geo = geo or SliceGeometry(bg, state.g)
    g, g_inv = geo.g, geo.g_inv
    sigma, N, X = state.sigma.components, state.N, state.X
    n_hat = N / 3.0 - 1.0
    sigma_up = np.einsum("ia...,jb...,ab...->ij...", g_inv, g_inv, sigma)
    dX = geo.D(X, "u")
    dX_up = np.einsum("ia...,aj...->ij...", g_inv, dX)

    dt_g_inv = -2.0 * N * sigma_up - 2.0 * n_hat * g_inv + dX_up + np.swapaxes(dX_up, 0, 1)

    n_sigma_mixed = N * np.einsum("ia...,ak...->ik...", g_inv, sigma)
    d_n_sigma_mixed = geo.D(n_sigma_mixed, "ud")
    d_n_sigma = geo.D(N * sigma, "dd")
    d_n_hat = bg.gradient(n_hat)
    delta = np.eye(3)
    ddX = geo.D(dX, "du")
    dt_chr = (
        np.einsum("jik...->ijk...", d_n_sigma_mixed)
        + np.einsum("kij...->ijk...", d_n_sigma_mixed)
        - np.einsum("il...,ljk...->ijk...", g_inv, d_n_sigma)
        + np.einsum("j...,ik->ijk...", d_n_hat, delta)
        + np.einsum("k...,ij->ijk...", d_n_hat, delta)
        - np.einsum("il...,l...,jk...->ijk...", g_inv, d_n_hat, g)
        - np.einsum("jki...->ijk...", ddX)
        + np.einsum("ikjl...,l...->ijk...", geo.riemann, X)
    )

    lichnerowicz_u, residual = lichnerowicz_pair(state.g, bg, g - bg.gamma)
    sigma_sq_norm = geo.norm_sq(sigma, "dd")
    sigma_mixed = np.einsum("ia...,ak...->ik...", g_inv, sigma)
    dX_sigma_sigma = np.einsum("ij...,ik...,kj...->...", dX, sigma_mixed, sigma_mixed)
    dt_sigma_sq = 2.0 * (
        -(N - 1.0) * sigma_sq_norm
        + 2.0 * dX_sigma_sigma
        - N * state.g.inner(sigma, 0.5 * lichnerowicz_u + residual)
        + state.g.inner(sigma, geo.hessian(N))
        - state.g.inner(sigma, geo.lie_derivative(X, sigma, 2))
        + N * state.tau * state.g.inner(sigma, S)
    )

    y = np.einsum("ijb...,j...->bi...", dt_chr, X)
    dy = geo.D(y, "du")
    commutator = (
        np.einsum("ab...,abi...->i...", dt_g_inv, ddX)
        + np.einsum("ab...,abi...->i...", g_inv, dy)
        - np.einsum("ab...,jab...,ji...->i...", g_inv, dt_chr, dX)
        + np.einsum("ab...,ija...,bj...->i...", g_inv, dt_chr, dX)
    )

    d_dt_chr = geo.D(dt_chr, "udd")
    dt_ricci = np.einsum("aajk...->jk...", d_dt_chr) - np.einsum("jaak...->jk...", d_dt_chr)
    dt_ricci_mixed = np.einsum("ik...,kj...->ij...", dt_g_inv, geo.ricci) + np.einsum(
        "ik...,kj...->ij...", g_inv, dt_ricci
    )

    return {
        "dt_g_inv": dt_g_inv,
        "dt_christoffel": dt_chr,
        "dt_sigma_sq": dt_sigma_sq,
        "commutator_laplacian_X": commutator,
        "dt_ricci_mixed": dt_ricci_mixed,
    }


def cmcsh_gauge_residual(geo: SliceGeometry) -> np.ndarray:
    """g^{ij} (Gamma - Gamma_hat)^l_{ij} per sample."""
    return np.einsum("ij...,lij...->l...", geo.g_inv, geo.christoffel_difference)


def trace_free(g: SpatialMetric, u: np.ndarray) -> np.ndarray:
    """Symmetrised g-trace-free part of a 2-tensor."""
    s = 0.5 * (u + np.swapaxes(u, 0, 1))
    return s - g.trace(s) / 3.0 * g.components
