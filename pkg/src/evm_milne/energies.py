#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Energy Monitor

The functionals of the stability argument evaluated on one slice: the
corrected geometric energy E_k, the Sasaki-weighted Vlasov energy, the
potential energy of omega, the Faraday norm, the density energy, the
momentum support radius, the weighted total energy and the smallness
measure. Decay-rate and Gronwall fits run over stored series.

All derivative orders are truncated at 2.
"""

import logging
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field, model_validator
from scipy import stats

from .backgrounds import BackgroundGeometry
from .errors import FitDomainError, InvalidWeights
from .geometry import SliceGeometry, lichnerowicz, lift, lowest_einstein_eigenvalue
from .kinetic import momentum_integral, sasaki_gradient, sasaki_hessian
from .maxwell import FaradayField, hodge_laplacian
from .models import FitResult, GronwallResult
from .moments import SourceSet
from .state import PotentialState, SliceState, SpatialMetric

logger = logging.getLogger(__name__)

SUPPORT_FLOOR = 1e-14
WEIGHT_TOL = 1e-12


# ==================== Weights ====================


class EnergyWeights(BaseModel):
    """
    Exponential weights of the total energy and the corrected-energy constants.

    delta_alpha is derived from lambda0: 0 when lambda0 > 1/9, otherwise
    sqrt(1 - 9 (lambda0 - alpha_epsilon)).
    """

    delta_E: float = Field(default=0.01, gt=0.0)
    delta_cal_E: float = Field(default=0.02, gt=0.0)
    delta_bb_E: float = Field(default=0.01, gt=0.0)
    lambda0: float = Field(default=1.0 / 3.0, description="Lowest admissible Einstein eigenvalue")
    epsilon_tot: float = Field(default=0.0, ge=0.0)
    alpha_epsilon: float = Field(default=1e-3, gt=0.0)

    @property
    def delta_alpha(self) -> float:
        if self.lambda0 > 1.0 / 9.0:
            return 0.0
        return float(np.sqrt(max(1.0 - 9.0 * (self.lambda0 - self.alpha_epsilon), 0.0)))

    @property
    def alpha(self) -> float:
        return 1.0 - self.delta_alpha

    @property
    def c_E(self) -> float:
        return 1.0 - self.delta_alpha**2

    @property
    def epsilon(self) -> float:
        return self.delta_cal_E + self.epsilon_tot

    @model_validator(mode="after")
    def _check_relations(self) -> "EnergyWeights":
        d_a = self.delta_alpha
        violations = []
        if 9.0 * self.lambda0 < 1.0 - WEIGHT_TOL:
            violations.append("9 lambda0 >= 1")
        if not self.delta_E < self.delta_cal_E:
            violations.append("delta_E < delta_cal_E")
        if abs(self.delta_E - (self.delta_bb_E - 2.0 * d_a)) > WEIGHT_TOL:
            violations.append("delta_E = delta_bb_E - 2 delta_alpha")
        if not 2.0 * d_a - WEIGHT_TOL < self.delta_bb_E < 2.0 * d_a + self.delta_cal_E:
            violations.append("2 delta_alpha < delta_bb_E < 2 delta_alpha + delta_cal_E")
        if not self.delta_E + self.delta_cal_E + self.delta_bb_E < 0.1:
            violations.append("delta_E + delta_cal_E + delta_bb_E < 0.1")
        if violations:
            raise InvalidWeights(
                "energy weights violate their relations",
                {
                    "violated": violations,
                    "delta_E": self.delta_E,
                    "delta_cal_E": self.delta_cal_E,
                    "delta_bb_E": self.delta_bb_E,
                    "delta_alpha": d_a,
                },
            )
        return self

    @classmethod
    def for_background(cls, bg: BackgroundGeometry, **weights: float) -> "EnergyWeights":
        """Weights with lambda0 computed from the discrete Einstein operator of ``bg``."""
        lambda0 = lowest_einstein_eigenvalue(bg)
        logger.debug("Lowest admissible Einstein eigenvalue %.6f on %s", lambda0, bg.kind)
        return cls(lambda0=lambda0, **weights)


class EnergyOrders(BaseModel):
    """Derivative orders at which the monitors are evaluated."""

    geometric: int = Field(default=2, ge=1, le=2)
    vlasov: int = Field(default=2, ge=0, le=2)
    mu: int = Field(default=4, ge=0)
    maxwell: int = Field(default=2, ge=1, le=2)
    faraday: int = Field(default=2, ge=0, le=2)
    density: int = Field(default=2, ge=0, le=2)


class EnergyReport(BaseModel):
    """All monitored functionals of one slice."""

    T: float
    tau: float
    E_k: float
    cal_E: float = Field(ge=0.0)
    bb_E: float
    faraday_norm: float = Field(ge=0.0)
    varrho_k: float = Field(ge=0.0)
    support_G: float = Field(ge=0.0)
    total: float
    smallness_delta: float = Field(ge=0.0)
    coercivity: float = 0.0
    faraday_ratio: float = 0.0

    def recomputed_total(self, weights: EnergyWeights) -> float:
        return total_energy(self.E_k, self.cal_E, self.bb_E, weights, self.T)


# ==================== Geometry ====================


def _gamma_inner(bg: BackgroundGeometry, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.einsum("ia...,jb...,ij...,ab...->...", bg.gamma_inv, bg.gamma_inv, u, v)


def geometric_energy(
    state: SliceState,
    weights: EnergyWeights,
    k: int = 1,
    geo: Optional[SliceGeometry] = None,
) -> float:
    """
    Corrected geometric energy E_k = sum_{m=1}^{k} [E_(m) + c_E Gamma_(m)].

    E_(m) = 18 <Sigma, L^{m-1} Sigma> + 9/2 <g - gamma, L^m (g - gamma)> and
    Gamma_(m) = 6 <Sigma, L^{m-1} (g - gamma)>, integrated against d mu_g with
    gamma inner products and L the weighted Lichnerowicz operator of g.
    Both tensors are first projected off the Einstein-operator kernel.
    """
    if k < 1:
        raise ValueError(f"Unsupported geometric energy order: {k}")
    bg = state.background
    geo = geo or SliceGeometry(bg, state.g)
    strain = bg.moduli_projector(state.g.components - bg.gamma)
    sigma = bg.moduli_projector(state.sigma.components)

    def L(u: np.ndarray) -> np.ndarray:
        return lichnerowicz(state.g, bg, u)

    total = 0.0
    sigma_power = sigma
    strain_power = strain
    for _ in range(k):
        strain_next = L(strain_power)
        energy = 18.0 * _gamma_inner(bg, sigma, sigma_power) + 4.5 * _gamma_inner(
            bg, strain, strain_next
        )
        correction = 6.0 * _gamma_inner(bg, sigma, strain_power)
        total += float(geo.integrate(energy + weights.c_E * correction))
        sigma_power = L(sigma_power)
        strain_power = strain_next
    return total


def coercivity_ratio(
    state: SliceState,
    weights: EnergyWeights,
    k: int = 1,
    geo: Optional[SliceGeometry] = None,
) -> float:
    """(||g - gamma||^2 + ||Sigma||^2) / E_k; 0 at the background."""
    bg = state.background
    geo = geo or SliceGeometry(bg, state.g)
    strain = bg.moduli_projector(state.g.components - bg.gamma)
    sigma = bg.moduli_projector(state.sigma.components)
    size = float(geo.integrate(_gamma_inner(bg, strain, strain) + _gamma_inner(bg, sigma, sigma)))
    energy = geometric_energy(state, weights, k, geo)
    if size == 0.0:
        return 0.0
    return size / energy if energy > 0.0 else float("inf")


# ==================== Vlasov ====================


def _vertical_weighted(
    g_inv: np.ndarray, weight_sq: np.ndarray, grad: np.ndarray
) -> np.ndarray:
    """|theta f|^2 with g^{-1} on horizontal and <p>^2 g^{-1} on vertical slots."""
    A, B = grad[:3], grad[3:]
    return np.einsum("ab...,a...,b...->...", g_inv, A, A) + weight_sq * np.einsum(
        "ab...,a...,b...->...", g_inv, B, B
    )


def _hessian_weighted(
    g_inv: np.ndarray, weight_sq: np.ndarray, hess: np.ndarray
) -> np.ndarray:
    out = np.zeros(hess.shape[2:])
    for row, row_w in ((slice(0, 3), 1.0), (slice(3, 6), weight_sq)):
        for col, col_w in ((slice(0, 3), 1.0), (slice(3, 6), weight_sq)):
            block = hess[row, col]
            out = out + row_w * col_w * np.einsum(
                "ac...,bd...,ab...,cd...->...", g_inv, g_inv, block, block
            )
    return out


def vlasov_energy(
    state: SliceState,
    ell: int = 2,
    mu: int = 4,
    metric: Optional[SpatialMetric] = None,
) -> float:
    """
    Sasaki-weighted energy of f.

    sqrt(sum_{k <= ell} int <p>^{2 mu + 4 (ell - k)} |D^k f|^2 d mu_p d mu_g),
    <p>^2 = 1 + |p|_g^2, with horizontal and vertical derivatives on the lattice.

    Args:
        state: Slice holding f
        ell: Derivative order, at most 2
        mu: Momentum weight
        metric: Metric used for weights, contractions and measures; defaults
            to the slice metric. Passing gamma gives the background energy.

    Raises:
        SupportOverflow: If f reaches the lattice boundary
    """
    if not 0 <= ell <= 2:
        raise ValueError(f"Unsupported Vlasov energy order: {ell}")
    state.distribution.check_support()
    f = state.f
    if not np.any(f):
        return 0.0
    bg = state.background
    metric = metric or state.g
    geo = SliceGeometry(bg, metric)
    lattice = state.lattice
    p = lattice.momenta
    g_inv = lift(metric.inverse)
    weight_sq = 1.0 + np.einsum("ab...,a...,b...->...", lift(metric.components), p, p)

    densities = [f**2]
    if ell >= 1:
        densities.append(_vertical_weighted(g_inv, weight_sq, sasaki_gradient(bg, geo.christoffel, f, lattice)))
    if ell >= 2:
        hess = sasaki_hessian(bg, geo.christoffel, geo.riemann, f, lattice)
        densities.append(_hessian_weighted(g_inv, weight_sq, hess))

    total = np.zeros(bg.spatial_shape)
    for k, density in enumerate(densities):
        weight = weight_sq ** (mu + 2 * (ell - k))
        total = total + momentum_integral(metric.components, weight * density, lattice)
    return float(np.sqrt(geo.integrate(total)))


def energy_equivalence(state: SliceState, ell: int = 2, mu: int = 4) -> float:
    """Ratio of the Vlasov energy measured with g to the one measured with gamma."""
    with_g = vlasov_energy(state, ell, mu)
    with_gamma = vlasov_energy(
        state, ell, mu, metric=SpatialMetric(components=state.background.gamma.copy())
    )
    if with_gamma == 0.0:
        return 1.0 if with_g == 0.0 else float("inf")
    return with_g / with_gamma


# ==================== Maxwell ====================


def _one_form_inner(geo: SliceGeometry, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.einsum("ab...,a...,b...->...", geo.g_inv, u, v)


def maxwell_energy(
    state: SliceState,
    pot: Optional[PotentialState] = None,
    k: int = 1,
    geo: Optional[SliceGeometry] = None,
) -> float:
    """E_k = sum_{l < k} int <Delta_H^l L_{e0} omega, L_{e0} omega> + <Delta_H^{l+1} omega, omega>."""
    pot = pot or state.potential
    geo = geo or SliceGeometry(state.background, state.g)
    omega, omega_dot = pot.omega, pot.omega_dot
    if not (np.any(omega) or np.any(omega_dot)):
        return 0.0
    total = 0.0
    rate_power, field_power = omega_dot, hodge_laplacian(geo, omega)
    for _ in range(k):
        density = _one_form_inner(geo, rate_power, omega_dot) + _one_form_inner(
            geo, field_power, omega
        )
        total += float(geo.integrate(density))
        rate_power = hodge_laplacian(geo, rate_power)
        field_power = hodge_laplacian(geo, field_power)
    return total


def faraday_norm(
    state: SliceState,
    F: FaradayField,
    k: int = 1,
    geo: Optional[SliceGeometry] = None,
) -> float:
    """||F||_k^2 = sum_{l <= k} int tau^2 |D^l F_0|^2 + |D^l F_ij|^2 d mu_g."""
    geo = geo or SliceGeometry(state.background, state.g)
    tau2 = state.tau**2
    total = 0.0
    electric, magnetic = F.F0, F.Fij
    e_var, m_var = "d", "dd"
    for _ in range(k + 1):
        density = tau2 * geo.norm_sq(electric, e_var) + geo.norm_sq(magnetic, m_var)
        total += float(geo.integrate(density))
        electric, magnetic = geo.D(electric, e_var), geo.D(magnetic, m_var)
        e_var, m_var = "d" + e_var, "d" + m_var
    return float(np.sqrt(total))


def faraday_equivalence_ratio(
    state: SliceState,
    F: FaradayField,
    k: int = 1,
    pot: Optional[PotentialState] = None,
    geo: Optional[SliceGeometry] = None,
) -> float:
    """||F||_k / (||Psi||_{k+1} + sqrt(E_{k+1}))."""
    pot = pot or state.potential
    geo = geo or SliceGeometry(state.background, state.g)
    numerator = faraday_norm(state, F, k, geo)
    energy = max(maxwell_energy(state, pot, k + 1, geo), 0.0)
    denominator = geo.sobolev_norm(pot.psi, "", k + 1) + float(np.sqrt(energy))
    if denominator == 0.0:
        return 0.0 if numerator == 0.0 else float("inf")
    return numerator / denominator


# ==================== Density and support ====================


def density_energy(
    state: SliceState,
    sources: SourceSet,
    k: int = 2,
    geo: Optional[SliceGeometry] = None,
) -> float:
    """varrho_k = sqrt(sum_{l <= k} int |D^l rho|^2 d mu_g)."""
    geo = geo or SliceGeometry(state.background, state.g)
    return geo.sobolev_norm(sources.rho, "", k)


def support_radius(state: SliceState) -> float:
    """Largest |p|_g over lattice points with f above 1e-14 max f."""
    f = state.f
    peak = float(np.max(f)) if f.size else 0.0
    if peak <= 0.0:
        return 0.0
    p = state.lattice.momenta
    p_sq = np.einsum("ab...,a...,b...->...", lift(state.g.components), p, p)
    p_sq = np.broadcast_to(p_sq, f.shape)
    return float(np.sqrt(np.max(p_sq[f > SUPPORT_FLOOR * peak])))


# ==================== Totals ====================


def total_energy(
    E: float, cal_E: float, bb_E: float, weights: EnergyWeights, T: float
) -> float:
    """e^{(1 + d_E) T} E + e^{-(1 - d_calE) T} calE^2 + e^{-(1 - d_bbE) T} bbE."""
    return float(
        np.exp((1.0 + weights.delta_E) * T) * E
        + np.exp(-(1.0 - weights.delta_cal_E) * T) * cal_E**2
        + np.exp(-(1.0 - weights.delta_bb_E) * T) * bb_E
    )


def smallness_check(
    state: SliceState,
    sources: SourceSet,
    F: Optional[FaradayField] = None,
    orders: Optional[EnergyOrders] = None,
    geo: Optional[SliceGeometry] = None,
) -> float:
    """
    delta = |tau|^{-1/2} (||g - gamma|| + ||Sigma||) + ||rho|| + |tau|^{1/2} calE + ||F||.

    Sobolev orders are those of ``orders``: the metric perturbation one above
    the Sigma order.
    """
    orders = orders or EnergyOrders()
    bg = state.background
    geo = geo or SliceGeometry(bg, state.g)
    abs_tau = abs(state.tau)
    strain = geo.sobolev_norm(bg.moduli_projector(state.g.components - bg.gamma), "dd", orders.geometric)
    sigma = geo.sobolev_norm(bg.moduli_projector(state.sigma.components), "dd", orders.geometric - 1)
    delta = abs_tau**-0.5 * (strain + sigma)
    delta += density_energy(state, sources, orders.density, geo)
    delta += abs_tau**0.5 * vlasov_energy(state, orders.vlasov, orders.mu)
    if F is not None:
        delta += faraday_norm(state, F, orders.faraday, geo)
    return float(delta)


def energy_report(
    state: SliceState,
    sources: SourceSet,
    weights: EnergyWeights,
    F: Optional[FaradayField] = None,
    orders: Optional[EnergyOrders] = None,
    geo: Optional[SliceGeometry] = None,
) -> EnergyReport:
    """Evaluate every monitor at the orders configured in ``orders``."""
    orders = orders or EnergyOrders()
    geo = geo or SliceGeometry(state.background, state.g)
    E = geometric_energy(state, weights, orders.geometric, geo)
    cal_E = vlasov_energy(state, orders.vlasov, orders.mu)
    bb_E = maxwell_energy(state, k=orders.maxwell, geo=geo)
    if F is None:
        f_norm, f_ratio = 0.0, 0.0
    else:
        f_norm = faraday_norm(state, F, orders.faraday, geo)
        f_ratio = faraday_equivalence_ratio(state, F, min(orders.faraday, 1), geo=geo)
    return EnergyReport(
        T=state.T,
        tau=state.tau,
        E_k=E,
        cal_E=cal_E,
        bb_E=bb_E,
        faraday_norm=f_norm,
        varrho_k=density_energy(state, sources, orders.density, geo),
        support_G=support_radius(state),
        total=total_energy(E, cal_E, bb_E, weights, state.T),
        smallness_delta=smallness_check(state, sources, F, orders, geo),
        coercivity=coercivity_ratio(state, weights, 1, geo),
        faraday_ratio=f_ratio,
    )


# ==================== Fits ====================


def decay_fit(
    T: Sequence[float],
    values: Sequence[float],
    window: Optional[float] = None,
    min_samples: int = 10,
    min_span: float = 3.0,
    confidence: float = 0.95,
) -> FitResult:
    """
    Least-squares slope of log(value) against T over the trailing window.

    Args:
        T: Sample times, increasing
        values: Positive monitored values
        window: Length of the trailing window in T; the whole series if None
        min_samples: Minimum number of samples inside the window
        min_span: Minimum T-span of the window
        confidence: Two-sided level of the reported band

    Raises:
        FitDomainError: If a value is not positive or the window is too short
    """
    t = np.asarray(T, dtype=float)
    y = np.asarray(values, dtype=float)
    if window is not None and t.size:
        keep = t >= t[-1] - window
        t, y = t[keep], y[keep]
    span = float(t[-1] - t[0]) if t.size else 0.0
    if t.size < min_samples or span < min_span - 1e-12:
        raise FitDomainError(
            "decay fit needs more samples", {"samples": int(t.size), "span": span}
        )
    if np.any(y <= 0.0) or not np.all(np.isfinite(y)):
        raise FitDomainError(
            "decay fit needs positive values", {"min_value": float(np.min(y))}
        )
    result = stats.linregress(t, np.log(y))
    stderr = float(result.stderr)
    band = stderr * float(stats.t.ppf(0.5 + confidence / 2.0, t.size - 2))
    return {
        "exponent": float(result.slope),
        "intercept": float(result.intercept),
        "stderr": stderr,
        "band": band,
        "samples": int(t.size),
        "window": span,
    }


def gronwall_check(
    T: Sequence[float],
    totals: Sequence[float],
    epsilon: float,
    quantile: float = 0.99,
    envelope_factor: float = 1.1,
) -> GronwallResult:
    """
    Fit C_bar in d_T E <= -(1 - eps) E + C_bar E^{3/2} and test the envelope.

    The discrete derivative is the forward difference between consecutive
    samples. C_bar is the ``quantile`` of the pointwise ratios, clipped at 0,
    and the envelope is E(T) <= factor E(T0) e^{-(1 - eps)(T - T0)}.

    Since C_bar is fitted to the same samples, ``satisfied_fraction`` stays
    close to ``quantile`` and does not discriminate on its own. The
    discriminating outputs are the envelope and ``nonlinear_ratio`` =
    C_bar max E^{1/2} / (1 - eps): the nonlinear term is subordinate to
    the linear decay when it is below 1.
    """
    t = np.asarray(T, dtype=float)
    e = np.asarray(totals, dtype=float)
    if t.size < 2:
        raise FitDomainError("Gronwall check needs two samples", {"samples": int(t.size)})
    rate = np.diff(e) / np.diff(t)
    left = e[:-1]
    decay = -(1.0 - epsilon) * left
    positive = left > 0.0
    if np.any(positive):
        ratios = (rate[positive] - decay[positive]) / left[positive] ** 1.5
        c_bar = max(float(np.quantile(ratios, quantile)), 0.0)
    else:
        c_bar = 0.0
    bound = decay + c_bar * np.clip(left, 0.0, None) ** 1.5
    scale = np.maximum(np.abs(left), 1e-300)
    satisfied = rate <= bound + 1e-12 * scale
    envelope = envelope_factor * e[0] * np.exp(-(1.0 - epsilon) * (t - t[0]))
    nonlinear_ratio = c_bar * float(np.sqrt(np.max(np.clip(left, 0.0, None)))) / (1.0 - epsilon)
    return {
        "epsilon": float(epsilon),
        "c_bar": c_bar,
        "satisfied_fraction": float(np.mean(satisfied)),
        "envelope_ok": bool(np.all(e <= envelope + 1e-300)),
        "nonlinear_ratio": nonlinear_ratio,
        "subordinate": nonlinear_ratio < 1.0,
    }
