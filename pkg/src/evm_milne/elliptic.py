#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Elliptic Solvers

CMCSH lapse and shift equations, their time-differentiated versions and
the scalar/vector Krylov machinery shared with the Maxwell constraint
solves.

On the homogeneous background invariant fields have vanishing Laplacian
contributions from frame derivatives, so every problem collapses to a
scalar or 3x3 linear system. On the torus scalar problems are solved in
the symmetric conservative form

    -d_a(sqrt|g| g^{ab} d_b u) + c sqrt|g| u = sqrt|g| s

with conjugate gradients, and vector problems with GMRES.
"""

import logging
from typing import Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field
from scipy.sparse.linalg import LinearOperator, cg, gmres

from .errors import EllipticSolvabilityError, SolverDiverged
from .geometry import SliceGeometry, einstein_rhs, geometric_time_derivatives
from .models import GeometryRates, TimeDerivatives
from .state import FieldModel, LapseShift, SliceState

logger = logging.getLogger(__name__)

Preconditioner = Literal["jacobi", "spectral"]
PsiRateMode = Literal["differencing", "differentiated"]


class SolverSettings(BaseModel):
    """Tolerances and switches shared by all elliptic solves."""

    tol: float = Field(default=1e-10, gt=0)
    max_iter: int = Field(default=50, ge=1)
    krylov_max_iter: int = Field(default=2000, ge=1)
    kernel_tol: float = Field(default=1e-10, gt=0)
    preconditioner: Preconditioner = "jacobi"
    neutralizing_background: bool = True
    psi_rate_mode: PsiRateMode = "differencing"


class EllipticProblem(FieldModel):
    """One linear elliptic problem (-Delta_g + c) u = s for a scalar or a vector."""

    operator: Literal["scalar", "vector"] = "scalar"
    coefficient: np.ndarray
    rhs: np.ndarray
    tol: float = Field(default=1e-10, gt=0)
    max_iter: int = Field(default=2000, ge=1)
    zero_mean: bool = False


class _Counter:
    def __init__(self) -> None:
        self.calls = 0

    def __call__(self, _: object) -> None:
        self.calls += 1


# ==================== Scalar problems ====================


def _scalar_operator(geo: SliceGeometry, coefficient: np.ndarray) -> Tuple[LinearOperator, np.ndarray]:
    bg = geo.bg
    shape = bg.spatial_shape
    density = geo.volume_density
    stiffness = density * geo.g_inv
    mass = np.broadcast_to(coefficient * density, shape)

    def matvec(v: np.ndarray) -> np.ndarray:
        u = v.reshape(shape)
        flux = np.einsum("ab...,b...->a...", stiffness, bg.gradient(u))
        out = -sum(bg.partial(flux[a], a) for a in range(3)) + mass * u
        return out.ravel()

    size = int(np.prod(shape))
    operator = LinearOperator((size, size), matvec=matvec, dtype=float)
    h = getattr(bg, "spacing", 1.0)
    diagonal = mass.copy()
    for a in range(3):
        k = stiffness[a, a]
        diagonal = diagonal + (np.roll(k, 1, axis=a) + np.roll(k, -1, axis=a)) / (4.0 * h**2)
    return operator, diagonal


def _preconditioner(
    geo: SliceGeometry, diagonal: np.ndarray, coefficient: np.ndarray, kind: Preconditioner
) -> LinearOperator:
    shape = geo.bg.spatial_shape
    size = int(np.prod(shape))
    if kind == "jacobi":
        inv = np.where(diagonal > 0.0, 1.0 / np.where(diagonal > 0.0, diagonal, 1.0), 0.0).ravel()
        return LinearOperator((size, size), matvec=lambda v: inv * v, dtype=float)
    if kind == "spectral":
        bg = geo.bg
        k = bg.wavenumbers
        s = bg.derivative_symbol(k) ** 2
        symbol = s[:, None, None] + s[None, :, None] + s[None, None, :]
        stiffness = float(np.mean(geo.volume_density * np.einsum("aa...->...", geo.g_inv) / 3.0))
        total = stiffness * symbol + float(np.mean(coefficient * geo.volume_density))
        inv = np.where(total > 1e-14, 1.0 / np.where(total > 1e-14, total, 1.0), 0.0)

        def apply(v: np.ndarray) -> np.ndarray:
            return np.real(np.fft.ifftn(np.fft.fftn(v.reshape(shape)) * inv)).ravel()

        return LinearOperator((size, size), matvec=apply, dtype=float)
    raise ValueError(f"Unsupported preconditioner: {kind}")


def solve_scalar(
    geo: SliceGeometry,
    problem: EllipticProblem,
    settings: SolverSettings,
    guess: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Solve (-Delta_g + c) u = s for a scalar field.

    Zero-mean problems (c = 0) need a right-hand side with vanishing integral;
    the caller removes or reports the mean before calling. Their solution is
    returned with zero integral against d mu_g.

    Raises:
        SolverDiverged: If conjugate gradients hit the iteration cap
    """
    bg = geo.bg
    shape = bg.spatial_shape
    coefficient = np.broadcast_to(problem.coefficient, shape)
    rhs = np.broadcast_to(problem.rhs, shape)
    if bg.kind == "homogeneous":
        if problem.zero_mean:
            return np.zeros(shape)
        return rhs / coefficient

    operator, diagonal = _scalar_operator(geo, coefficient)
    b = geo.volume_density * rhs
    if problem.zero_mean:
        b = bg.project_null_modes(b)
    M = _preconditioner(geo, diagonal, coefficient, settings.preconditioner)
    x0 = None if guess is None else np.broadcast_to(guess, shape).ravel()
    counter = _Counter()
    solution, info = cg(
        operator, b.ravel(), x0=x0, rtol=problem.tol, atol=0.0,
        maxiter=problem.max_iter, M=M, callback=counter,
    )
    if info != 0:
        raise SolverDiverged(
            "conjugate gradients did not converge",
            {"info": int(info), "iterations": counter.calls},
        )
    logger.debug("Scalar solve converged in %d iterations", counter.calls)
    u = solution.reshape(shape)
    if problem.zero_mean:
        u = bg.project_null_modes(u)
        u = u - geo.mean(u)
    return u


def remove_mean(
    geo: SliceGeometry, rhs: np.ndarray, settings: SolverSettings, label: str
) -> Tuple[np.ndarray, float]:
    """
    Enforce the solvability condition of a zero-mean problem.

    Returns:
        (rhs with its d mu_g mean removed, removed mean)

    Raises:
        EllipticSolvabilityError: If the mean is not negligible and no
            neutralizing background is configured
    """
    mean = float(geo.mean(rhs))
    scale = float(np.max(np.abs(rhs))) if rhs.size else 0.0
    if abs(mean) <= settings.tol * max(scale, 1.0):
        return rhs - mean, mean
    if not settings.neutralizing_background:
        raise EllipticSolvabilityError(
            f"{label} right-hand side has nonzero mean", {"mean": mean}
        )
    return rhs - mean, mean


# ==================== Vector problems ====================


def _vector_laplacian(geo: SliceGeometry, X: np.ndarray) -> np.ndarray:
    """Delta X^i + R^i_j X^j."""
    ddX = geo.D(geo.D(X, "u"), "du")
    ric_mixed = np.einsum("ik...,kj...->ij...", geo.g_inv, geo.ricci)
    return np.einsum("ab...,abi...->i...", geo.g_inv, ddX) + np.einsum(
        "ij...,j...->i...", ric_mixed, X
    )


def _invariant_matrix(geo: SliceGeometry) -> np.ndarray:
    shape = geo.bg.spatial_shape
    columns = []
    for j in range(3):
        e = np.zeros((3,) + shape)
        e[j] = 1.0
        columns.append(_vector_laplacian(geo, e).reshape(3, -1)[:, 0])
    return np.array(columns).T


def solve_vector(
    geo: SliceGeometry,
    rhs: np.ndarray,
    settings: SolverSettings,
    guess: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Solve Delta X + Ric(X) = rhs for a vector field.

    The homogeneous background uses a direct 3x3 solve (least squares with a
    warning when ill-conditioned). On the torus, a kernel of constant fields
    is detected at runtime and projected out of both sides.
    """
    bg = geo.bg
    if bg.kind == "homogeneous":
        matrix = _invariant_matrix(geo)
        b = rhs.reshape(3, -1)[:, 0]
        cond = np.linalg.cond(matrix)
        if not np.isfinite(cond) or cond > 1e12:
            logger.warning("Shift operator is ill-conditioned (cond=%.3e); using least squares", cond)
            x = np.linalg.lstsq(matrix, b, rcond=None)[0]
        else:
            x = np.linalg.solve(matrix, b)
        return x[(...,) + (None,) * 3] * np.ones((3,) + bg.spatial_shape)

    shape = (3,) + bg.spatial_shape
    size = int(np.prod(shape))
    kernel = _has_constant_kernel(geo, settings)
    target = bg.project_null_modes(rhs) if kernel else rhs

    def matvec(v: np.ndarray) -> np.ndarray:
        return _vector_laplacian(geo, v.reshape(shape)).ravel()

    operator = LinearOperator((size, size), matvec=matvec, dtype=float)
    x0 = None if guess is None else guess.ravel()
    counter = _Counter()
    solution, info = gmres(
        operator, target.ravel(), x0=x0, rtol=settings.tol, atol=0.0, restart=60,
        maxiter=settings.krylov_max_iter, callback=counter, callback_type="pr_norm",
    )
    if info != 0:
        raise SolverDiverged("GMRES did not converge", {"info": int(info), "iterations": counter.calls})
    logger.debug("Vector solve converged in %d iterations", counter.calls)
    X = solution.reshape(shape)
    return bg.project_null_modes(X) if kernel else X


def _has_constant_kernel(geo: SliceGeometry, settings: SolverSettings) -> bool:
    shape = geo.bg.spatial_shape
    worst = 0.0
    for j in range(3):
        e = np.zeros((3,) + shape)
        e[j] = 1.0
        worst = max(worst, float(np.max(np.abs(_vector_laplacian(geo, e)))))
    kernel = worst <= settings.kernel_tol
    if kernel:
        logger.warning("Shift operator has a kernel of constant fields; projecting it out")
    return kernel


# ==================== Lapse and shift ====================


def lapse_coefficient(state: SliceState, eta: np.ndarray, geo: SliceGeometry) -> np.ndarray:
    """a = |Sigma|^2 + tau eta."""
    return geo.norm_sq(state.sigma.components, "dd") + state.tau * eta


def solve_lapse(
    state: SliceState,
    eta: np.ndarray,
    settings: Optional[SolverSettings] = None,
    geo: Optional[SliceGeometry] = None,
) -> np.ndarray:
    """
    Solve (Delta_g - 1/3) N = N(|Sigma|^2 + tau eta) - 1.

    Args:
        state: Current slice (g, Sigma, tau)
        eta: Rescaled pressure eta = rho + tau^2 eta_bar
        settings: Solver tolerances
        geo: Optional cached geometry

    Raises:
        LapsePositivityViolation: If the solution leaves 0 < N <= 3 + 1e-8
    """
    settings = settings or SolverSettings()
    geo = geo or SliceGeometry(state.background, state.g)
    a = lapse_coefficient(state, eta, geo)
    if state.background.kind == "homogeneous":
        N = 3.0 / (1.0 + 3.0 * a)
    else:
        problem = EllipticProblem(
            coefficient=1.0 / 3.0 + a,
            rhs=np.ones(state.background.spatial_shape),
            tol=settings.tol,
            max_iter=settings.krylov_max_iter,
        )
        N = solve_scalar(geo, problem, settings, guess=state.N)
    LapseShift(N=N, X=state.X).check_positive()
    return N


def shift_rhs(
    state: SliceState, j: np.ndarray, N: np.ndarray, X: np.ndarray, geo: SliceGeometry
) -> np.ndarray:
    """
    Right-hand side of the shift equation at a trial shift X.

    2 D_j N Sigma^{ij} - D^i(N/3 - 1) + 2 N tau^2 j^i
    - 2 (N Sigma^{jk} - D^j X^k)(Gamma - Gamma_hat)^i_{jk}
    """
    bg = state.background
    g_inv = geo.g_inv
    sigma_up = np.einsum("ia...,jb...,ab...->ij...", g_inv, g_inv, state.sigma.components)
    dN = bg.gradient(N)
    dX_up = np.einsum("ja...,ak...->jk...", g_inv, geo.D(X, "u"))
    gauge = np.einsum("jk...,ijk...->i...", N * sigma_up - dX_up, geo.christoffel_difference)
    return (
        2.0 * np.einsum("j...,ij...->i...", dN, sigma_up)
        - np.einsum("ij...,j...->i...", g_inv, dN) / 3.0
        + 2.0 * N * state.tau**2 * j
        - 2.0 * gauge
    )


def solve_shift(
    state: SliceState,
    j: np.ndarray,
    N: np.ndarray,
    settings: Optional[SolverSettings] = None,
    geo: Optional[SliceGeometry] = None,
) -> np.ndarray:
    """
    Solve Delta X + Ric(X) = shift_rhs(X) by fixed-point iteration over the gauge term.

    The iteration starts from the state's current shift and stops once the
    relative update drops below ``settings.tol``.

    Raises:
        SolverDiverged: After ``settings.max_iter`` iterations without convergence
    """
    settings = settings or SolverSettings()
    geo = geo or SliceGeometry(state.background, state.g)
    X = state.X
    for iteration in range(1, settings.max_iter + 1):
        updated = solve_vector(geo, shift_rhs(state, j, N, X, geo), settings, guess=X)
        change = float(np.max(np.abs(updated - X)))
        scale = max(float(np.max(np.abs(updated))), 1.0)
        X = updated
        if change <= settings.tol * scale:
            logger.debug("Shift fixed point converged after %d iterations", iteration)
            return X
    raise SolverDiverged("shift fixed point did not converge", {"iterations": settings.max_iter, "update": change})


# ==================== Time derivatives ====================


def _laplacian_commutator_scalar(geo: SliceGeometry, rates: GeometryRates, u: np.ndarray) -> np.ndarray:
    """[d_T, Delta] u = d_T g^{ab} D_a D_b u - g^{ab} d_T Gamma^c_{ab} D_c u."""
    du = geo.bg.gradient(u)
    return np.einsum("ab...,ab...->...", rates["dt_g_inv"], geo.hessian(u)) - np.einsum(
        "ab...,cab...,c...->...", geo.g_inv, rates["dt_christoffel"], du
    )


def solve_time_derivatives(
    state: SliceState,
    eta: np.ndarray,
    j: np.ndarray,
    S: np.ndarray,
    dt_eta: np.ndarray,
    dt_j: np.ndarray,
    settings: Optional[SolverSettings] = None,
    geo: Optional[SliceGeometry] = None,
) -> TimeDerivatives:
    """
    Solve the T-differentiated lapse and shift equations.

    Args:
        state: Slice with solved N and X
        eta: Rescaled pressure
        j: Rescaled current
        S: Rescaled stress
        dt_eta: d_T eta (backward difference between accepted steps)
        dt_j: d_T j (same)
        settings: Solver tolerances
        geo: Optional cached geometry

    Returns:
        TimeDerivatives with d_T N and d_T X
    """
    settings = settings or SolverSettings()
    bg = state.background
    geo = geo or SliceGeometry(bg, state.g)
    rates = geometric_time_derivatives(state, S, geo)
    N, X, tau = state.N, state.X, state.tau
    sigma = state.sigma.components

    a = lapse_coefficient(state, eta, geo)
    a_dot = rates["dt_sigma_sq"] - tau * eta + tau * dt_eta
    if bg.kind == "homogeneous":
        dt_N = -(N**2) * a_dot
    else:
        rhs = _laplacian_commutator_scalar(geo, rates, N) - N * a_dot
        problem = EllipticProblem(
            coefficient=1.0 / 3.0 + a,
            rhs=rhs,
            tol=settings.tol,
            max_iter=settings.krylov_max_iter,
        )
        dt_N = solve_scalar(geo, problem, settings)

    dt_g, dt_sigma = einstein_rhs(state, S, geo)
    g_inv = geo.g_inv
    dt_g_inv = rates["dt_g_inv"]
    sigma_up = np.einsum("ia...,jb...,ab...->ij...", g_inv, g_inv, sigma)
    dt_sigma_up = (
        np.einsum("ia...,jb...,ab...->ij...", dt_g_inv, g_inv, sigma)
        + np.einsum("ia...,jb...,ab...->ij...", g_inv, dt_g_inv, sigma)
        + np.einsum("ia...,jb...,ab...->ij...", g_inv, g_inv, dt_sigma)
    )
    dN = bg.gradient(N)
    d_dt_N = bg.gradient(dt_N)
    dX = geo.D(X, "u")
    upsilon = geo.christoffel_difference
    dt_upsilon = rates["dt_christoffel"]

    def differentiated_rhs(dt_X: np.ndarray) -> np.ndarray:
        dX_up = np.einsum("ja...,ak...->jk...", g_inv, dX)
        d_dt_X = geo.D(dt_X, "u") + np.einsum("ijb...,j...->bi...", dt_upsilon, X)
        dt_dX_up = np.einsum("ja...,ak...->jk...", dt_g_inv, dX) + np.einsum(
            "ja...,ak...->jk...", g_inv, d_dt_X
        )
        gauge_dot = np.einsum(
            "jk...,ijk...->i...", dt_N * sigma_up + N * dt_sigma_up - dt_dX_up, upsilon
        ) + np.einsum("jk...,ijk...->i...", N * sigma_up - dX_up, dt_upsilon)
        forcing = (
            2.0 * np.einsum("j...,ij...->i...", d_dt_N, sigma_up)
            + 2.0 * np.einsum("j...,ij...->i...", dN, dt_sigma_up)
            - np.einsum("ij...,j...->i...", dt_g_inv, dN) / 3.0
            - np.einsum("ij...,j...->i...", g_inv, d_dt_N) / 3.0
            + 2.0 * (dt_N * tau**2 - 2.0 * N * tau**2) * j
            + 2.0 * N * tau**2 * dt_j
            - 2.0 * gauge_dot
        )
        ric_dot_X = np.einsum("ij...,j...->i...", rates["dt_ricci_mixed"], X)
        return forcing - rates["commutator_laplacian_X"] - ric_dot_X

    dt_X = np.zeros_like(X)
    for iteration in range(1, settings.max_iter + 1):
        updated = solve_vector(geo, differentiated_rhs(dt_X), settings, guess=dt_X)
        change = float(np.max(np.abs(updated - dt_X)))
        dt_X = updated
        if change <= settings.tol * max(float(np.max(np.abs(updated))), 1.0):
            logger.debug("Shift-rate fixed point converged after %d iterations", iteration)
            break
    else:
        raise SolverDiverged("shift-rate fixed point did not converge", {"iterations": settings.max_iter})
    return {"dt_N": dt_N, "dt_X": dt_X}
