#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Evolution

Time integration of the coupled rescaled system and constraint monitoring.

Every Runge-Kutta stage runs, in order: gauge projection of the potential,
moments and currents, the lapse, shift and Psi solves (iterated together
until N, X and Psi agree), then the right-hand sides of g, Sigma, f, omega
and L_{e0} omega. Sigma is projected back onto g-trace-free tensors at
every stage. Constraints are monitored, never re-imposed.
"""

import logging
import time
from abc import ABC, abstractmethod
from typing import Callable, Dict, Iterator, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, model_validator

from .elliptic import SolverSettings, solve_lapse, solve_shift, solve_time_derivatives
from .energies import support_radius
from .errors import EVMError, SolverDiverged, StepSizeViolation
from .geometry import (
    SliceGeometry,
    cmcsh_gauge_residual,
    covariant_derivative,
    einstein_rhs,
    lichnerowicz_pair,
    trace_free,
)
from .kinetic import (
    TransportScheme,
    momentum_kinematics,
    positivity_limit,
    transport_coefficients,
    transport_rhs,
)
from .maxwell import (
    CurrentDensities,
    FaradayField,
    currents,
    e0_derivative,
    faraday_from_potential,
    gauge_project,
    omega_wave_rhs,
    potential_rhs,
    psi_rate,
    solve_psi,
)
from .models import ConstraintResiduals, DecomposedRates
from .moments import SourceSet, assemble_sources
from .state import FieldModel, SliceState, SpatialMetric

logger = logging.getLogger(__name__)

# min f / max f below which a step is reported as an undershoot
POSITIVITY_FLOOR = -1e-12

Fields = Dict[str, np.ndarray]
RateFunction = Callable[[float, Fields], Fields]


# ==================== Configuration ====================


class EvolutionConfig(BaseModel):
    """Step size, time window and sector switches of a run."""

    dt: float = Field(default=0.05, gt=0.0)
    T_start: float = Field(default=0.0)
    T_end: float = Field(default=5.0)
    integrator: Literal["rk4"] = Field(default="rk4")
    cfl_guard: float = Field(default=0.5, gt=0.0, description="Max allowed |tau| G dt")
    cadence: int = Field(default=1, ge=1, description="Report every this many steps")
    transport_scheme: TransportScheme = Field(default="upwind")
    include_vlasov: bool = Field(default=True)
    include_maxwell: bool = Field(default=True)

    @model_validator(mode="after")
    def _check_window(self) -> "EvolutionConfig":
        if not self.T_end > self.T_start:
            raise ValueError(f"T_end ({self.T_end}) must exceed T_start ({self.T_start})")
        return self

    @property
    def steps(self) -> int:
        return int(np.ceil((self.T_end - self.T_start) / self.dt - 1e-9))

    def _create_strategy(self) -> "Integrator":
        if self.integrator == "rk4":
            return RungeKutta4()
        raise ValueError(f"Unsupported integrator: {self.integrator}")

    def create_integrator(self) -> "Integrator":
        return self._create_strategy()


# ==================== Integrators ====================


class Integrator(ABC):
    """One explicit step of a system of named array fields."""

    @abstractmethod
    def advance(self, fields: Fields, T: float, dt: float, rhs: RateFunction) -> Fields:
        """Return the fields at T + dt."""


class RungeKutta4(Integrator):
    """Classical four-stage Runge-Kutta."""

    def advance(self, fields: Fields, T: float, dt: float, rhs: RateFunction) -> Fields:
        def shifted(k: Fields, c: float) -> Fields:
            return {name: fields[name] + c * k[name] for name in fields}

        k1 = rhs(T, fields)
        k2 = rhs(T + 0.5 * dt, shifted(k1, 0.5 * dt))
        k3 = rhs(T + 0.5 * dt, shifted(k2, 0.5 * dt))
        k4 = rhs(T + dt, shifted(k3, dt))
        return {
            name: fields[name] + dt / 6.0 * (k1[name] + 2.0 * k2[name] + 2.0 * k3[name] + k4[name])
            for name in fields
        }


# ==================== Stage context ====================


class StageContext(FieldModel):
    """Everything solved on one stage slice."""

    state: SliceState
    sources: SourceSet
    faraday: Optional[FaradayField] = None
    currents: Optional[CurrentDensities] = None
    dt_N: np.ndarray
    dt_X: np.ndarray
    e0_psi: np.ndarray
    charge_defect: float = 0.0
    iterations: int = 0


class StepRecord(FieldModel):
    """A reported slice with its stage-one context."""

    step: int
    state: SliceState
    context: StageContext


class _History(FieldModel):
    """Sources and Psi of the last accepted slice, used for backward differences."""

    T: float
    eta: np.ndarray
    j: np.ndarray
    psi: np.ndarray


def _backward_rate(current: np.ndarray, previous: np.ndarray, dT: float) -> np.ndarray:
    if abs(dT) < 1e-14:
        return np.zeros_like(current)
    return (current - previous) / dT


def _potential_active(state: SliceState) -> bool:
    pot = state.potential
    return bool(np.any(pot.omega) or np.any(pot.omega_dot) or np.any(pot.psi))


# ==================== Evolver ====================


class SliceEvolver:
    """
    Advances slices with the configured integrator.

    The evolver keeps the sources and Psi of the last accepted step for the
    backward differences that feed d_T eta, d_T j and d_{e0} Psi. A failed
    step leaves that history untouched.
    """

    def __init__(
        self,
        config: Optional[EvolutionConfig] = None,
        settings: Optional[SolverSettings] = None,
    ):
        self.config = config or EvolutionConfig()
        self.settings = settings or SolverSettings()
        self.integrator = self.config.create_integrator()
        self._history: Optional[_History] = None
        self._last_rates: Optional[Fields] = None

    # ---------- sector switches ----------

    def vlasov_active(self, state: SliceState) -> bool:
        return self.config.include_vlasov and bool(np.any(state.f))

    def maxwell_active(self, state: SliceState) -> bool:
        if not self.config.include_maxwell:
            return False
        charged = state.charge != 0.0 and self.vlasov_active(state)
        return charged or _potential_active(state)

    # ---------- stage solve ----------

    def prepare(self, state: SliceState) -> StageContext:
        """
        Solve the constraint and gauge equations of one stage slice.

        Returns:
            StageContext whose state carries the gauged potential and the
            solved N, X and Psi

        Raises:
            SolverDiverged: If the coupled N, X, Psi iteration does not settle
        """
        settings = self.settings
        geo = SliceGeometry(state.background, state.g)
        maxwell = self.maxwell_active(state)
        if maxwell:
            pot = gauge_project(state, settings=settings, geo=geo)
            state = state.with_fields(omega=pot.omega, omega_dot=pot.omega_dot, psi=pot.psi)

        defect = 0.0
        cur: Optional[CurrentDensities] = None
        for iteration in range(1, settings.max_iter + 1):
            kin = momentum_kinematics(state) if self.vlasov_active(state) else None
            sources = assemble_sources(
                state,
                kin,
                include_vlasov=self.config.include_vlasov,
                include_maxwell=self.config.include_maxwell,
            )
            N = solve_lapse(state, sources.eta, settings, geo)
            X = solve_shift(state.with_fields(N=N), sources.j, N, settings, geo)
            updated = state.with_fields(N=N, X=X)
            if maxwell:
                kin = momentum_kinematics(updated) if self.vlasov_active(updated) else None
                cur = currents(updated, kin)
                psi, defect = solve_psi(updated, updated.potential, cur, settings, geo)
                updated = updated.with_fields(psi=psi)
            change = max(
                float(np.max(np.abs(updated.N - state.N))),
                float(np.max(np.abs(updated.X - state.X))),
                float(np.max(np.abs(updated.potential.psi - state.potential.psi))),
            )
            state = updated
            if change <= settings.tol * max(float(np.max(np.abs(state.N))), 1.0):
                break
        else:
            raise SolverDiverged(
                "lapse, shift and Psi did not settle", {"iterations": settings.max_iter, "update": change}
            )

        kin = momentum_kinematics(state) if self.vlasov_active(state) else None
        F = faraday_from_potential(state, geo=geo) if maxwell else None
        sources = assemble_sources(
            state,
            kin,
            faraday=F,
            include_vlasov=self.config.include_vlasov,
            include_maxwell=self.config.include_maxwell,
        )
        if maxwell:
            cur = currents(state, kin)

        dt_N, dt_X = np.zeros_like(state.N), np.zeros_like(state.X)
        if self.vlasov_active(state) or maxwell:
            dt_eta, dt_j = np.zeros_like(sources.eta), np.zeros_like(sources.j)
            if self._history is not None:
                dT = state.T - self._history.T
                dt_eta = _backward_rate(sources.eta, self._history.eta, dT)
                dt_j = _backward_rate(sources.j, self._history.j, dT)
            rates = solve_time_derivatives(
                state, sources.eta, sources.j, sources.S, dt_eta, dt_j, settings, geo
            )
            dt_N, dt_X = rates["dt_N"], rates["dt_X"]

        ctx = StageContext(
            state=state,
            sources=sources,
            faraday=F,
            currents=cur,
            dt_N=dt_N,
            dt_X=dt_X,
            e0_psi=np.zeros_like(state.N),
            charge_defect=defect,
            iterations=iteration,
        )
        if maxwell:
            ctx = ctx.model_copy(update={"e0_psi": self._e0_psi(ctx, geo)})
        return ctx

    def _e0_psi(self, ctx: StageContext, geo: SliceGeometry) -> np.ndarray:
        state = ctx.state
        psi = state.potential.psi
        if self.settings.psi_rate_mode == "differencing":
            if self._history is None:
                return np.zeros_like(psi)
            return psi_rate(state, psi, self._history.psi, state.T - self._history.T)
        if self.settings.psi_rate_mode != "differentiated":
            raise ValueError(f"Unsupported Psi rate mode: {self.settings.psi_rate_mode}")

        # re-solve Psi on a slice advanced along the current rates
        eps = 1e-6
        base = self._field_rates(ctx, geo, e0_psi=np.zeros_like(psi))
        if self._last_rates is not None:
            base["omega_dot"] = self._last_rates["omega_dot"]
        advanced = state.with_fields(
            g=state.g.components + eps * base["g"],
            sigma=state.sigma.components + eps * base["sigma"],
            f=state.f + eps * base["f"],
            omega=state.potential.omega + eps * base["omega"],
            omega_dot=state.potential.omega_dot + eps * base["omega_dot"],
            N=state.N + eps * ctx.dt_N,
            X=state.X + eps * ctx.dt_X,
            T=state.T + eps,
        )
        adv_geo = SliceGeometry(advanced.background, advanced.g)
        kin = momentum_kinematics(advanced) if self.vlasov_active(advanced) else None
        psi_eps, _ = solve_psi(
            advanced, advanced.potential, currents(advanced, kin), self.settings, adv_geo
        )
        return e0_derivative(state, psi, (psi_eps - psi) / eps)

    # ---------- right-hand sides ----------

    def _field_rates(
        self, ctx: StageContext, geo: SliceGeometry, e0_psi: Optional[np.ndarray] = None
    ) -> Fields:
        state = ctx.state
        dt_g, dt_sigma = einstein_rhs(state, ctx.sources.S, geo)
        rates: Fields = {
            "g": dt_g,
            "sigma": dt_sigma,
            "f": np.zeros_like(state.f),
            "omega": np.zeros_like(state.potential.omega),
            "omega_dot": np.zeros_like(state.potential.omega_dot),
        }
        F = ctx.faraday
        if self.vlasov_active(state):
            f0 = F.F0 if F is not None else np.zeros_like(state.X)
            fij = F.Fij if F is not None else np.zeros((3, 3) + state.N.shape)
            coeffs = transport_coefficients(state, geo.christoffel, ctx.dt_N, ctx.dt_X, f0, fij)
            rates["f"] = transport_rhs(state, coeffs, self.config.transport_scheme)
        if F is not None and ctx.currents is not None:
            e0_psi = ctx.e0_psi if e0_psi is None else e0_psi
            wave = omega_wave_rhs(state, state.potential, F, ctx.currents, e0_psi, ctx.dt_N, geo)
            rates["omega"], rates["omega_dot"] = potential_rhs(state, state.potential, wave, geo)
        return rates

    def rates(self, ctx: StageContext) -> Fields:
        """d_T of (g, Sigma, f, omega, L_{e0} omega) on a prepared stage."""
        geo = SliceGeometry(ctx.state.background, ctx.state.g)
        rates = self._field_rates(ctx, geo)
        self._last_rates = rates
        return rates

    # ---------- stepping ----------

    def check_step_size(self, state: SliceState) -> None:
        """Raise StepSizeViolation if |tau| G dt exceeds the guard."""
        speed = abs(state.tau) * support_radius(state)
        if speed * self.config.dt > self.config.cfl_guard:
            raise StepSizeViolation(
                "step exceeds the transport guard",
                {"tau_G_dt": speed * self.config.dt, "guard": self.config.cfl_guard},
            )

    def step(self, state: SliceState) -> Tuple[SliceState, StageContext]:
        """
        Advance one step.

        Returns:
            (state at T + dt, context of the first stage)

        Raises:
            EVMError: Any solver or domain failure; the input state and the
                evolver history are left as they were
        """
        self.check_step_size(state)
        started = time.perf_counter()
        first: List[StageContext] = []
        current: Dict[str, SliceState] = {"state": state}

        def stage_state(T: float, fields: Fields) -> SliceState:
            g = SpatialMetric(components=fields["g"])
            guess = current["state"]
            f = fields["f"]
            if self.config.transport_scheme == "upwind":
                f = positivity_limit(f)
            return guess.with_fields(
                g=g.components,
                sigma=trace_free(g, fields["sigma"]),
                f=f,
                omega=fields["omega"],
                omega_dot=fields["omega_dot"],
                T=T,
            )

        def rhs(T: float, fields: Fields) -> Fields:
            ctx = self.prepare(stage_state(T, fields))
            if not first:
                first.append(ctx)
            current["state"] = ctx.state
            return self.rates(ctx)

        fields: Fields = {
            "g": state.g.components,
            "sigma": state.sigma.components,
            "f": state.f,
            "omega": state.potential.omega,
            "omega_dot": state.potential.omega_dot,
        }
        try:
            advanced = self.integrator.advance(fields, state.T, self.config.dt, rhs)
            new_state = stage_state(state.T + self.config.dt, advanced)
        except EVMError as exc:
            logger.error("Step at T=%.6f failed: %s %s", state.T, type(exc).__name__, exc.details)
            raise

        ctx = first[0]
        self._history = _History(
            T=ctx.state.T,
            eta=ctx.sources.eta,
            j=ctx.sources.j,
            psi=ctx.state.potential.psi,
        )
        if self.vlasov_active(new_state) and new_state.distribution.min_ratio() < POSITIVITY_FLOOR:
            logger.warning(
                "Distribution undershoot %.3e at T=%.6f",
                new_state.distribution.min_ratio(),
                new_state.T,
            )
        logger.debug(
            "Step T=%.6f -> %.6f in %.3fs", state.T, new_state.T, time.perf_counter() - started
        )
        return new_state, ctx

    def run(self, state: SliceState) -> Iterator[StepRecord]:
        """
        Evolve from ``state`` until T_end, yielding every ``cadence`` steps.

        The initial slice is reported first and the final slice is always
        reported.
        """
        steps = self.config.steps
        cadence = self.config.cadence
        ctx = self.prepare(state)
        yield StepRecord(step=0, state=ctx.state, context=ctx)
        for n in range(1, steps + 1):
            state, _ = self.step(state)
            if n % cadence == 0 or n == steps:
                ctx = self.prepare(state)
                yield StepRecord(step=n, state=ctx.state, context=ctx)


def step(
    state: SliceState,
    cfg: Optional[EvolutionConfig] = None,
    settings: Optional[SolverSettings] = None,
) -> SliceState:
    """Advance ``state`` by one step of a fresh evolver."""
    new_state, _ = SliceEvolver(cfg, settings).step(state)
    return new_state


# ==================== Decomposed form ====================


def alternative_evolution_form(
    state: SliceState,
    sources: SourceSet,
    geo: Optional[SliceGeometry] = None,
) -> DecomposedRates:
    """
    Evolution of (g - gamma, 6 Sigma) split into leading linear part and remainder.

    d_T (g - gamma) = 2 N Sigma + F_strain with F_strain = 2 N_hat g - L_X g;
    d_T (6 Sigma) = -12 Sigma - 3 N L(g - gamma) + 6 N tau S - X^i D_hat_i (6 Sigma)
    + F_sigma with F_sigma = 6 [-N J + D^2 N + 2 N Sigma Sigma - N_hat g / 3
    - N_hat Sigma - (L_X Sigma - X^i D_hat_i Sigma)].
    """
    bg = state.background
    geo = geo or SliceGeometry(bg, state.g)
    g, sigma, N, X = geo.g, state.sigma.components, state.N, state.X
    n_hat = state.lapse_shift.N_hat
    lich, curvature = lichnerowicz_pair(state.g, bg, g - bg.gamma)

    remainder_strain = 2.0 * n_hat * g - geo.lie_derivative(X, g, 2)
    dt_strain = 2.0 * N * sigma + remainder_strain

    hat_advection = np.einsum(
        "i...,iab...->ab...", X, covariant_derivative(bg, bg.christoffel_gamma, sigma, "dd")
    )
    sigma_sq = np.einsum("ik...,kl...,lj...->ij...", sigma, geo.g_inv, sigma)
    remainder_sigma = 6.0 * (
        -N * curvature
        + geo.hessian(N)
        + 2.0 * N * sigma_sq
        - n_hat / 3.0 * g
        - n_hat * sigma
        - (geo.lie_derivative(X, sigma, 2) - hat_advection)
    )
    dt_six_sigma = (
        -12.0 * sigma
        - 3.0 * N * lich
        + 6.0 * N * state.tau * sources.S
        - 6.0 * hat_advection
        + remainder_sigma
    )
    return {
        "dt_strain": dt_strain,
        "dt_six_sigma": dt_six_sigma,
        "remainder_strain": remainder_strain,
        "remainder_sigma": remainder_sigma,
    }


# ==================== Constraints ====================


def _rms(geo: SliceGeometry, density: np.ndarray) -> float:
    """Volume-normalised L2 size of a non-negative pointwise density."""
    return float(np.sqrt(max(float(geo.mean(density)), 0.0)))


def continuity_rhs(
    state: SliceState, sources: SourceSet, geo: Optional[SliceGeometry] = None
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Right-hand sides of the continuity equations for rho and j.

    d_T rho = (3 - N) rho - X^a D_a rho + 1/2 tau N^-1 D_a (N^2 j^a)
    - 1/6 tau^2 N g_ab T^{ab} - 1/2 tau^2 N Sigma_ab T^{ab}

    d_T j^a = 5/3 (3 - N) j^a - X^b D_b j^a - j^b D^a X_b + tau D_b (N T^{ab})
    - 2 N Sigma^a_b j^b + 2 tau^-1 rho D^a N
    """
    bg = state.background
    geo = geo or SliceGeometry(bg, state.g)
    g, g_inv = geo.g, geo.g_inv
    sigma, N, X, tau = state.sigma.components, state.N, state.X, state.tau
    rho, j, T = sources.rho, sources.j, sources.T

    d_rho = bg.gradient(rho)
    flux = np.einsum("aa...->...", geo.D(N**2 * j, "u"))
    dt_rho = (
        (3.0 - N) * rho
        - np.einsum("a...,a...->...", X, d_rho)
        + 0.5 * tau / N * flux
        - tau**2 * N / 6.0 * np.einsum("ab...,ab...->...", g, T)
        - 0.5 * tau**2 * N * np.einsum("ab...,ab...->...", sigma, T)
    )

    X_low = np.einsum("ab...,b...->a...", g, X)
    d_x_low = geo.D(X_low, "d")
    stress_div = np.einsum("bab...->a...", geo.D(N * T, "uu"))
    dt_j = (
        5.0 / 3.0 * (3.0 - N) * j
        - np.einsum("b...,ba...->a...", X, geo.D(j, "u"))
        - np.einsum("ac...,cb...,b...->a...", g_inv, d_x_low, j)
        + tau * stress_div
        - 2.0 * N * np.einsum("ac...,cb...,b...->a...", g_inv, sigma, j)
        + 2.0 / tau * rho * np.einsum("ab...,b...->a...", g_inv, bg.gradient(N))
    )
    return dt_rho, dt_j


def constraint_residuals(
    state: SliceState,
    sources: SourceSet,
    geo: Optional[SliceGeometry] = None,
    dt_rho: Optional[np.ndarray] = None,
    dt_j: Optional[np.ndarray] = None,
) -> ConstraintResiduals:
    """
    Volume-normalised L2 norms of the constraint residuals.

    Hamiltonian R - |Sigma|^2 + 2/3 - 4 tau rho, momentum D^i Sigma_ij - tau^2 j_j
    and the CMCSH vector g^{ij} (Gamma - Gamma_hat)^l_{ij}. The continuity
    residuals compare measured d_T rho and d_T j against ``continuity_rhs``
    and are 0 when no measured rates are supplied.
    """
    geo = geo or SliceGeometry(state.background, state.g)
    g, g_inv = geo.g, geo.g_inv
    sigma, tau = state.sigma.components, state.tau

    hamiltonian = (
        geo.scalar_curvature
        - geo.norm_sq(sigma, "dd")
        + 2.0 / 3.0
        - 4.0 * tau * sources.rho
    )
    div_sigma = np.einsum("ia...,iaj...->j...", g_inv, geo.D(sigma, "dd"))
    momentum = div_sigma - tau**2 * np.einsum("ab...,b...->a...", g, sources.j)
    gauge = cmcsh_gauge_residual(geo)

    residuals: ConstraintResiduals = {
        "hamiltonian": _rms(geo, hamiltonian**2),
        "momentum": _rms(geo, geo.norm_sq(momentum, "d")),
        "divergence_rho": 0.0,
        "divergence_j": 0.0,
        "gauge_cmcsh": _rms(geo, geo.norm_sq(gauge, "u")),
    }
    if dt_rho is not None or dt_j is not None:
        rho_rate, j_rate = continuity_rhs(state, sources, geo)
        if dt_rho is not None:
            residuals["divergence_rho"] = _rms(geo, (dt_rho - rho_rate) ** 2)
        if dt_j is not None:
            residuals["divergence_j"] = _rms(geo, geo.norm_sq(dt_j - j_rate, "u"))
    return residuals
