"""Type definitions for evm_milne results and report rows."""

from typing import Dict, List, Literal

import numpy as np
from typing_extensions import NotRequired, TypedDict


# ==================== Geometry ====================


class GeometryRates(TypedDict):
    """Time derivatives of geometric objects along the flow."""

    dt_g_inv: np.ndarray
    dt_christoffel: np.ndarray
    dt_sigma_sq: np.ndarray
    commutator_laplacian_X: np.ndarray
    dt_ricci_mixed: np.ndarray


# ==================== Kinetic ====================


class VerticalDerivatives(TypedDict):
    """Momentum derivatives B_a of the mass-shell functions."""

    p0: np.ndarray
    p_hat: np.ndarray
    P: np.ndarray
    eta_integrand: np.ndarray


class MomentumRates(TypedDict):
    """Time derivatives of the mass-shell functions at fixed p."""

    p_hat: np.ndarray
    p0: np.ndarray
    P: np.ndarray
    W_sq: np.ndarray


class TransportTerms(TypedDict):
    """The six terms of the transport right-hand side, evaluated separately."""

    horizontal: np.ndarray
    lapse_gradient: np.ndarray
    dilation: np.ndarray
    shear: np.ndarray
    shift_coupling: np.ndarray
    lorentz: np.ndarray


class CommutatorResiduals(TypedDict):
    """Max residuals of the horizontal/vertical commutation relations."""

    AA: float
    AB: float
    BB: float
    B_euler: float
    A_euler: float
    Gamma_euler: float


# ==================== Evolution ====================


class ConstraintResiduals(TypedDict):
    """Norms of the constraint and continuity residuals."""

    hamiltonian: float
    momentum: float
    divergence_rho: float
    divergence_j: float
    gauge_cmcsh: float


class TimeDerivatives(TypedDict):
    """Solved time derivatives of lapse and shift."""

    dt_N: np.ndarray
    dt_X: np.ndarray


class DecomposedRates(TypedDict):
    """Evolution of (g - gamma, 6 Sigma) split into leading part and remainder."""

    dt_strain: np.ndarray
    dt_six_sigma: np.ndarray
    remainder_strain: np.ndarray
    remainder_sigma: np.ndarray


# ==================== Energies ====================


class FitResult(TypedDict):
    """Decay-rate fit of log(value) against T."""

    exponent: float
    intercept: float
    stderr: float
    band: float
    samples: int
    window: float


class GronwallResult(TypedDict):
    """Measured discrete Gronwall inequality."""

    epsilon: float
    c_bar: float
    satisfied_fraction: float
    envelope_ok: bool
    nonlinear_ratio: float
    subordinate: bool


# ==================== Harness ====================


SeriesRow = Dict[str, float]

SuiteStatus = Literal["pass", "fail", "no-data"]


class SuiteResult(TypedDict):
    """Outcome of one verification suite."""

    suite: str
    checks: int
    max_residual: float
    residuals: Dict[str, float]
    status: SuiteStatus


class RunSummary(TypedDict):
    """JSON summary written next to the series CSV."""

    schema_version: int
    scenario: str
    status: SuiteStatus
    rows: int
    fits: Dict[str, FitResult]
    max_residuals: Dict[str, float]
    gates: Dict[str, bool]
    gronwall: NotRequired[GronwallResult]
    charge_defect: NotRequired[float]
    error: NotRequired[Dict[str, object]]
    columns: NotRequired[List[str]]
