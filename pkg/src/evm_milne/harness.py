#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Verification Harness

Randomized identity suites, the Milne fixed-point check, sector reductions
and scenario runs with acceptance gates. Every randomized check draws from
its own generator seeded with ``seed + index``, so suite results do not
depend on how the thread pool schedules them.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .backgrounds import BackgroundGeometry, HomogeneousHyperbolic
from .config import RunConfig, thread_count
from .elliptic import solve_lapse
from .energies import EnergyOrders, EnergyWeights, energy_report, gronwall_check
from .errors import EVMError
from .evolution import SliceEvolver, StepRecord, alternative_evolution_form, constraint_residuals
from .geometry import (
    SliceGeometry,
    christoffel,
    einstein_rhs,
    geometric_time_derivatives,
    lowest_einstein_eigenvalue,
    tensor_norm_sq,
    trace_free,
)
from .kinetic import (
    commutator_suite,
    kinematics,
    momentum_integral,
    momentum_kinematics,
    momentum_time_derivatives,
    momentum_vertical_derivatives,
    sasaki_connection,
)
from .maxwell import FaradayField, maxwell_stress, spacetime_stress
from .models import GronwallResult, RunSummary, SeriesRow, SuiteResult
from .moments import FOUR_PI, SourceSet, assemble_sources, vlasov_moments
from .particles import ParticleCloud, particle_moments
from .report import build_summary, emit_report, fit_series
from .scenarios import build_initial_state, momentum_bump
from .state import (
    DistributionGrid,
    FieldModel,
    LapseShift,
    MomentumLattice,
    PotentialState,
    SliceState,
    SpatialMetric,
    TraceFreeSym2,
)

logger = logging.getLogger(__name__)

SUITES: Tuple[str, ...] = ("identities", "commutators", "moments")
IDENTITY_CHECKS = 1000
RESIDUAL_GATE = 1e-5
FIXED_POINT_TOL = 1e-10
REDUCTION_TOL = 1e-12
LAPSE_TOL = 1e-8

_FD_STEP = 1e-3

# exponent bounds of the decay gates
DECAY_BOUNDS: Dict[str, Tuple[float, float]] = {
    "strain_norm": (-np.inf, -0.8),
    "sigma_norm": (-np.inf, -0.8),
    "lapse_deviation": (-np.inf, -0.9),
    "shift_norm": (-np.inf, -0.9),
    "cal_E": (-np.inf, 0.1),
    "bb_E": (-0.1, 0.1),
    "varrho_k": (-np.inf, 0.1),
}
GRONWALL_EPSILON_MAX = 0.2
GRONWALL_FRACTION = 0.99


class ScenarioOutcome(FieldModel):
    """Rows, summary and exit code of one scenario run."""

    rows: List[Dict[str, float]]
    summary: Dict[str, Any]
    exit_code: int
    final_state: Optional[SliceState] = None


# ==================== Random slices ====================


def _constant(bg: BackgroundGeometry, values: np.ndarray) -> np.ndarray:
    return values[(...,) + (None,) * 3] * np.ones(values.shape + bg.spatial_shape)


def _random_symmetric(rng: np.random.Generator, scale: float) -> np.ndarray:
    a = rng.uniform(-1.0, 1.0, size=(3, 3))
    return scale * 0.5 * (a + a.T)


def random_slice(
    rng: np.random.Generator,
    lattice: Optional[MomentumLattice] = None,
    bump_radius: float = 1.0,
) -> SliceState:
    """
    Random homogeneous slice near Milne with a momentum bump and a small shift.

    The metric stays within 10% of gamma, 0 < N <= 3 and |X / N|_g <= 0.1.
    """
    bg = HomogeneousHyperbolic()
    lattice = lattice or MomentumLattice(extent=2.0, n=7)
    gamma = bg.gamma_components
    g = _constant(bg, gamma + 9.0 * _random_symmetric(rng, 0.1))
    metric = SpatialMetric(components=g)
    sigma = trace_free(metric, _constant(bg, _random_symmetric(rng, 0.3)))
    N = np.full(bg.spatial_shape, rng.uniform(1.0, 3.0))
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    X = _constant(bg, 0.1 * N.ravel()[0] / 3.3 * direction * rng.uniform(0.0, 1.0))
    center = rng.uniform(-0.2, 0.2, size=3)
    bump = momentum_bump(lattice, list(center), bump_radius, rng.uniform(0.1, 1.0))
    return SliceState(
        background=bg,
        g=metric,
        sigma=TraceFreeSym2(components=sigma),
        lapse_shift=LapseShift(N=N, X=X),
        T=0.0,
        tau0=-rng.uniform(0.5, 3.0),
        distribution=DistributionGrid(values=bump[None, None, None], lattice=lattice),
        potential=PotentialState(omega=bg.zeros((3,)), omega_dot=bg.zeros((3,)), psi=bg.zeros()),
        charge=rng.uniform(-1.0, 1.0),
    )


# ==================== Residual helpers ====================


def _relative(actual: np.ndarray, expected: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(expected))), 1.0)
    return float(np.max(np.abs(actual - expected))) / scale


def _richardson(fn: Callable[[float], np.ndarray], h: float = _FD_STEP) -> np.ndarray:
    """Fourth-order derivative at 0 from two central differences."""

    def central(step: float) -> np.ndarray:
        return (fn(step) - fn(-step)) / (2.0 * step)

    return (4.0 * central(0.5 * h) - central(h)) / 3.0


def _unit(a: int, ndim: int) -> np.ndarray:
    e = np.zeros((3,) + (1,) * (ndim - 1))
    e[a] = 1.0
    return e


def _eta_integrand(state: SliceState, p: np.ndarray, kin: Any) -> np.ndarray:
    g, X = state.g.components[(...,) + (None,) * 3], state.X[(...,) + (None,) * 3]
    W = p + kin.p0 / state.tau * X
    return np.einsum("ab...,a...,b...->...", g, W, W) / kin.p_hat


# ==================== Suites ====================


def _check_identities(rng: np.random.Generator) -> Dict[str, float]:
    state = random_slice(rng)
    bg = state.background
    geo = SliceGeometry(bg, state.g)
    p = state.lattice.momenta
    out: Dict[str, float] = {}

    out["difference_tensor"] = _relative(christoffel(state.g, bg), bg.frame_christoffel(geo.g))
    coeffs = sasaki_connection(geo.christoffel, geo.riemann, p)
    out["sasaki_zero_families"] = max(
        float(np.max(np.abs(z))) for z in (coeffs.zero_I_aJ, coeffs.zero_a_IJ, coeffs.zero_I_JK)
    )

    # vertical derivatives
    kin = momentum_kinematics(state)
    vertical = momentum_vertical_derivatives(state, kin)
    out["vertical_p0_exact"] = _relative(vertical["p0"], -state.tau**2 * kin.P)
    worst = 0.0
    for a in range(3):
        e = _unit(a, p.ndim)

        def shell(s: float) -> Dict[str, np.ndarray]:
            k = momentum_kinematics(state, p + s * e)
            return {"p0": k.p0, "p_hat": k.p_hat, "P": k.P, "eta_integrand": _eta_integrand(state, p + s * e, k)}

        for name in ("p0", "p_hat", "P", "eta_integrand"):
            fd = _richardson(lambda s: shell(s)[name])
            worst = max(worst, _relative(vertical[name][a], fd))
    out["vertical_derivatives"] = worst

    # momentum time derivatives
    dt_g = _constant(bg, 9.0 * _random_symmetric(rng, 0.2))
    dt_N = np.full(bg.spatial_shape, rng.uniform(-0.5, 0.5))
    dt_X = _constant(bg, rng.uniform(-0.02, 0.02, size=3))
    rates = momentum_time_derivatives(state, dt_g, dt_N, dt_X, kin)

    def lifted(u: np.ndarray) -> np.ndarray:
        return u[(...,) + (None,) * 3]

    def along(s: float) -> Dict[str, np.ndarray]:
        g = lifted(state.g.components + s * dt_g)
        N, X = lifted(state.N + s * dt_N), lifted(state.X + s * dt_X)
        tau = state.tau0 * np.exp(-(state.T + s))
        k = kinematics(g, N, X, tau, p)
        W = p + k.p0 / tau * X
        return {
            "p_hat": k.p_hat,
            "p0": k.p0,
            "P": k.P,
            "W_sq": np.einsum("ab...,a...,b...->...", g, W, W),
        }

    out["momentum_time_derivatives"] = max(
        _relative(rates[name], _richardson(lambda s: along(s)[name]))  # type: ignore[literal-required]
        for name in ("p_hat", "p0", "P", "W_sq")
    )

    # geometric time derivatives along the Einstein flow
    S = _constant(bg, _random_symmetric(rng, 0.1))
    geo_rates = geometric_time_derivatives(state, S, geo)
    dg, dsigma = einstein_rhs(state, S, geo)

    def flowed(s: float) -> SliceGeometry:
        return SliceGeometry(bg, SpatialMetric(components=geo.g + s * dg))

    def laplacian_X(s: float) -> np.ndarray:
        flow = flowed(s)
        ddX = flow.D(flow.D(state.X, "u"), "du")
        return np.einsum("ab...,abi...->i...", flow.g_inv, ddX)

    def sigma_sq(s: float) -> np.ndarray:
        flow = flowed(s)
        return tensor_norm_sq(flow.g, flow.g_inv, state.sigma.components + s * dsigma, "dd")

    def ricci_mixed(s: float) -> np.ndarray:
        flow = flowed(s)
        return np.einsum("ik...,kj...->ij...", flow.g_inv, flow.ricci)

    out["dt_g_inv"] = _relative(geo_rates["dt_g_inv"], _richardson(lambda s: flowed(s).g_inv))
    out["dt_christoffel"] = _relative(
        geo_rates["dt_christoffel"], _richardson(lambda s: flowed(s).christoffel)
    )
    out["dt_sigma_sq"] = _relative(geo_rates["dt_sigma_sq"], _richardson(sigma_sq))
    out["commutator_laplacian_X"] = _relative(
        geo_rates["commutator_laplacian_X"], _richardson(laplacian_X)
    )
    out["dt_ricci_mixed"] = _relative(geo_rates["dt_ricci_mixed"], _richardson(ricci_mixed))

    # decomposed evolution form
    sources = assemble_sources(state, kin, include_maxwell=False)
    decomposed = alternative_evolution_form(state, sources, geo)
    dg_s, dsigma_s = einstein_rhs(state, sources.S, geo)
    out["alternative_form"] = max(
        _relative(decomposed["dt_strain"], dg_s),
        _relative(decomposed["dt_six_sigma"], 6.0 * dsigma_s),
    )
    return out


def _check_commutators(rng: np.random.Generator) -> Dict[str, float]:
    state = random_slice(rng)
    bg = state.background
    geo = SliceGeometry(bg, state.g)
    lattice = state.lattice
    p = lattice.momenta
    A = _random_symmetric(rng, 1.0)
    b = rng.uniform(-1.0, 1.0, size=3)
    f = (
        rng.uniform(-1.0, 1.0)
        + np.einsum("a,a...->...", b, p)
        + np.einsum("ab,a...,b...->...", A, p, p)
    )
    f = np.broadcast_to(f, bg.spatial_shape + (lattice.n,) * 3).copy()
    return dict(commutator_suite(bg, geo.christoffel, geo.riemann, f, lattice))


def _check_moments(rng: np.random.Generator) -> Dict[str, float]:
    state = random_slice(rng)
    bg = state.background
    tau = state.tau
    out: Dict[str, float] = {}

    vlasov = vlasov_moments(state)
    sources = assemble_sources(state, include_maxwell=False)
    out["orientation"] = max(
        0.0, float(np.max(-tau * sources.rho)), float(np.max(-tau * sources.eta))
    )

    at_rest = state.with_fields(X=bg.zeros((3,)))
    kin = momentum_kinematics(at_rest)
    expected = FOUR_PI * momentum_integral(at_rest.g.components, at_rest.f * kin.p_hat, at_rest.lattice)
    rest_rho = np.abs(vlasov_moments(at_rest, kin).rho)
    out["rest_density"] = float(np.max(np.abs(rest_rho - expected))) / max(
        float(np.max(expected)), 1e-300
    )

    cloud = ParticleCloud.from_state(state)
    rho_p, j_p = particle_moments(state, cloud)
    scale = max(float(np.max(np.abs(vlasov.rho))), 1e-300)
    out["particle_moments"] = max(
        float(np.max(np.abs(rho_p - vlasov.rho))) / scale,
        float(np.max(np.abs(j_p - vlasov.j))) / max(float(np.max(np.abs(vlasov.j))), scale),
    )

    F0 = _constant(bg, rng.uniform(-1.0, 1.0, size=3))
    raw = rng.uniform(-1.0, 1.0, size=(3, 3))
    F = FaradayField(F0=F0, Fij=_constant(bg, raw - raw.T), F_hat0=bg.zeros((3,)))
    rescaled, direct = maxwell_stress(state, F), spacetime_stress(state, F)
    out["maxwell_stress"] = max(
        float(np.max(np.abs(getattr(rescaled, name) - getattr(direct, name))))
        / max(float(np.max(np.abs(getattr(direct, name)))), 1e-300)
        for name in ("T00", "T0i", "Tij", "F_sq")
    )

    N = solve_lapse(state, sources.eta)
    out["lapse_bound"] = max(0.0, float(np.max(N)) - 3.0)
    return out


_SUITE_CHECKS: Dict[str, Callable[[np.random.Generator], Dict[str, float]]] = {
    "identities": _check_identities,
    "commutators": _check_commutators,
    "moments": _check_moments,
}


def verify(
    suite: str,
    seed: int = 0,
    checks: int = IDENTITY_CHECKS,
    workers: Optional[int] = None,
) -> SuiteResult:
    """
    Run ``checks`` randomized checks of one suite.

    Args:
        suite: ``identities``, ``commutators`` or ``moments``
        seed: Base seed; check ``i`` uses ``default_rng(seed + i)``
        checks: Number of randomized checks
        workers: Thread cap, defaulting to EVM_THREADS

    Returns:
        SuiteResult with the worst residual per identity

    Raises:
        ValueError: If the suite name is unknown
    """
    if suite not in _SUITE_CHECKS:
        raise ValueError(f"Unsupported verification suite: {suite}")
    check = _SUITE_CHECKS[suite]
    workers = workers or thread_count()

    def run_one(index: int) -> Dict[str, float]:
        return check(np.random.default_rng(seed + index))

    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(run_one, range(checks)))

    residuals: Dict[str, float] = {}
    for result in results:
        for name, value in result.items():
            residuals[name] = max(residuals.get(name, 0.0), float(value))
    max_residual = max(residuals.values(), default=0.0)
    if not results:
        status = "no-data"
    else:
        status = "pass" if max_residual <= RESIDUAL_GATE else "fail"
    logger.info("Suite %s: %d checks, max residual %.3e (%s)", suite, checks, max_residual, status)
    return {
        "suite": suite,
        "checks": checks,
        "max_residual": max_residual,
        "residuals": residuals,
        "status": status,  # type: ignore[typeddict-item]
    }


# ==================== Runs ====================


def _with_section(cfg: RunConfig, section: str, **values: Any) -> RunConfig:
    updated = getattr(cfg, section).model_copy(update=values)
    return cfg.model_copy(update={section: updated})


def _evolve(cfg: RunConfig) -> Iterator[StepRecord]:
    bg = cfg.background.to_config(cfg.solver.kernel_tol).create()
    state = build_initial_state(cfg, bg)
    evolver = SliceEvolver(cfg.evolution.to_config(), cfg.solver.to_settings())
    yield from evolver.run(state)


def _deviation(record: StepRecord) -> Dict[str, float]:
    state = record.state
    bg = state.background
    pot = state.potential
    return {
        "metric": float(np.max(np.abs(state.g.components - bg.gamma))),
        "sigma": float(np.max(np.abs(state.sigma.components))),
        "lapse": float(np.max(np.abs(state.N - 3.0))),
        "shift": float(np.max(np.abs(state.X))),
        "distribution": float(np.max(np.abs(state.f))) if state.f.size else 0.0,
        "potential": max(float(np.max(np.abs(a))) for a in (pot.omega, pot.omega_dot, pot.psi)),
    }


def fixed_point(cfg: Optional[RunConfig] = None) -> SuiteResult:
    """Evolve exact Milne data and report the largest deviation of every field."""
    cfg = (cfg or RunConfig()).model_copy(update={"scenario": "milne-exact"})
    residuals: Dict[str, float] = {}
    steps = 0
    for record in _evolve(cfg):
        steps += 1
        for name, value in _deviation(record).items():
            residuals[name] = max(residuals.get(name, 0.0), value)
    max_residual = max(residuals.values(), default=0.0)
    status = "pass" if max_residual <= FIXED_POINT_TOL else "fail"
    logger.info("Milne fixed point over %d slices: max deviation %.3e", steps, max_residual)
    return {
        "suite": "fixed-point",
        "checks": steps,
        "max_residual": max_residual,
        "residuals": residuals,
        "status": status,  # type: ignore[typeddict-item]
    }


def _final_state(cfg: RunConfig) -> SliceState:
    last: Optional[StepRecord] = None
    for record in _evolve(cfg):
        last = record
    assert last is not None
    return last.state


def _state_difference(a: SliceState, b: SliceState) -> Dict[str, float]:
    pairs = {
        "metric": (a.g.components, b.g.components),
        "sigma": (a.sigma.components, b.sigma.components),
        "lapse": (a.N, b.N),
        "shift": (a.X, b.X),
        "distribution": (a.f, b.f),
        "omega": (a.potential.omega, b.potential.omega),
        "omega_dot": (a.potential.omega_dot, b.potential.omega_dot),
        "psi": (a.potential.psi, b.potential.psi),
    }
    return {
        name: float(np.max(np.abs(x - y))) if x.size else 0.0 for name, (x, y) in pairs.items()
    }


def reduction_config(kind: str) -> RunConfig:
    """Default configuration of a reduction run."""
    if kind == "vlasov-only":
        return RunConfig.from_mapping(
            {"scenario": "perturbed", "evolution": {"T_end": 1.0}}
        )
    if kind == "maxwell-only":
        return RunConfig.from_mapping(
            {
                "scenario": "perturbed",
                "background": {"kind": "torus", "n": 8},
                "perturbation": {"f_mass": 0.0},
                "evolution": {"T_end": 0.5},
            }
        )
    raise ValueError(f"Unsupported reduction: {kind}")


def reduce(kind: str, cfg: Optional[RunConfig] = None) -> SuiteResult:
    """
    Compare a run of the full coupled system against the matching single-sector path.

    ``vlasov-only`` sets q = 0 and compares against a run without the Maxwell
    sector; ``maxwell-only`` sets f = 0 and compares against a run without
    the Vlasov sector. The final states must agree to 1e-12.
    """
    cfg = cfg or reduction_config(kind)
    if kind == "vlasov-only":
        cfg = cfg.model_copy(update={"charge": 0.0})
        if cfg.scenario == "charged-perturb":
            cfg = cfg.model_copy(update={"scenario": "perturbed"})
        full = _with_section(cfg, "evolution", include_vlasov=True, include_maxwell=True)
        reduced = _with_section(cfg, "evolution", include_vlasov=True, include_maxwell=False)
    elif kind == "maxwell-only":
        cfg = _with_section(cfg, "perturbation", f_mass=0.0)
        full = _with_section(cfg, "evolution", include_vlasov=True, include_maxwell=True)
        reduced = _with_section(cfg, "evolution", include_vlasov=False, include_maxwell=True)
    else:
        raise ValueError(f"Unsupported reduction: {kind}")

    residuals = _state_difference(_final_state(full), _final_state(reduced))
    max_residual = max(residuals.values())
    status = "pass" if max_residual <= REDUCTION_TOL else "fail"
    logger.info("Reduction %s: max drift %.3e (%s)", kind, max_residual, status)
    return {
        "suite": f"reduce-{kind}",
        "checks": 1,
        "max_residual": max_residual,
        "residuals": residuals,
        "status": status,  # type: ignore[typeddict-item]
    }


# ==================== Scenario rows ====================


def series_row(
    record: StepRecord,
    weights: EnergyWeights,
    orders: Optional[EnergyOrders] = None,
) -> SeriesRow:
    """All monitored values of one reported slice."""
    state, ctx = record.state, record.context
    bg = state.background
    geo = SliceGeometry(bg, state.g)
    report = energy_report(state, ctx.sources, weights, ctx.faraday, orders, geo)
    row: SeriesRow = {k: float(v) for k, v in report.model_dump().items()}
    row.update({k: float(v) for k, v in constraint_residuals(state, ctx.sources, geo).items()})
    strain = bg.moduli_projector(state.g.components - bg.gamma)
    row.update(
        {
            "N_min": float(np.min(state.N)),
            "N_max": float(np.max(state.N)),
            "strain_norm": geo.sobolev_norm(strain, "dd", 0),
            "sigma_norm": geo.sobolev_norm(bg.moduli_projector(state.sigma.components), "dd", 0),
            "lapse_deviation": geo.sobolev_norm(state.N - 3.0, "", 0),
            "shift_norm": geo.sobolev_norm(state.X, "u", 0),
            "tau_G": abs(state.tau) * report.support_G,
            "charge_defect": float(ctx.charge_defect),
            "iterations": float(ctx.iterations),
        }
    )
    return row


def _fill_divergence(
    rows: List[SeriesRow], snapshots: Sequence[Tuple[SliceState, SourceSet]]
) -> None:
    """Continuity residuals from fourth-order central differences of stored rho and j."""
    times = np.array([row["T"] for row in rows])
    if times.size < 5:
        return
    spacing = np.diff(times)
    for i in range(2, times.size - 2):
        local = spacing[i - 2 : i + 2]
        if np.ptp(local) > 1e-9 * max(float(np.max(local)), 1.0):
            continue
        dT = float(local[0])
        window = [snapshots[i + k][1] for k in (-2, -1, 1, 2)]
        dt_rho = (window[0].rho - 8.0 * window[1].rho + 8.0 * window[2].rho - window[3].rho) / (12.0 * dT)
        dt_j = (window[0].j - 8.0 * window[1].j + 8.0 * window[2].j - window[3].j) / (12.0 * dT)
        state, sources = snapshots[i]
        residuals = constraint_residuals(state, sources, dt_rho=dt_rho, dt_j=dt_j)
        rows[i]["divergence_rho"] = residuals["divergence_rho"]
        rows[i]["divergence_j"] = residuals["divergence_j"]


# ==================== Gates ====================


def fit_gronwall(
    T: Sequence[float], totals: Sequence[float], epsilon_min: float
) -> Optional[GronwallResult]:
    """Smallest epsilon on a grid up to 0.2 at which the discrete inequality holds."""
    if len(T) < 2 or not np.any(np.asarray(totals) > 0.0):
        return None
    result: Optional[GronwallResult] = None
    for epsilon in np.linspace(epsilon_min, GRONWALL_EPSILON_MAX, 20):
        result = gronwall_check(T, totals, float(epsilon))
        if (
            result["satisfied_fraction"] >= GRONWALL_FRACTION
            and result["envelope_ok"]
            and result["subordinate"]
        ):
            return result
    return result


def evaluate_gates(
    cfg: RunConfig,
    rows: Sequence[SeriesRow],
    fits: Dict[str, Any],
    gronwall: Optional[GronwallResult],
) -> Dict[str, bool]:
    """Acceptance gates of a scenario run."""
    if not rows:
        return {}
    gates = {
        "lapse_bound": all(0.0 < r["N_min"] and r["N_max"] <= 3.0 + LAPSE_TOL for r in rows),
        "energy_nonnegative": all(r["E_k"] >= -1e-12 for r in rows),
    }
    if cfg.scenario == "milne-exact":
        gates["fixed_point"] = all(
            max(abs(r[k]) for k in ("total", "strain_norm", "sigma_norm", "lapse_deviation", "shift_norm"))
            <= FIXED_POINT_TOL
            for r in rows
        )
        return gates
    for name, (low, high) in DECAY_BOUNDS.items():
        if name in fits:
            gates[f"decay_{name}"] = low <= fits[name]["exponent"] <= high
    if gronwall is not None:
        gates["gronwall"] = (
            gronwall["satisfied_fraction"] >= GRONWALL_FRACTION
            and gronwall["envelope_ok"]
            and gronwall["subordinate"]
            and gronwall["epsilon"] <= GRONWALL_EPSILON_MAX
        )
    tau_g = np.array([r["tau_G"] for r in rows])
    if np.any(tau_g > 0.0):
        tail = tau_g[len(tau_g) // 2 :]
        gates["support_monotone"] = bool(np.all(np.diff(tail) <= 1e-12 * float(np.max(tail))))
    return gates


# ==================== Scenarios ====================


def _identity_scenario(cfg: RunConfig, checks: int) -> ScenarioOutcome:
    results = [verify(suite, cfg.seed, checks) for suite in SUITES]
    gates = {r["suite"]: r["status"] == "pass" for r in results}
    max_residuals = {r["suite"]: r["max_residual"] for r in results}
    summary = build_summary(cfg.scenario, [], gates=gates, max_residuals=max_residuals)
    emit_report([], summary, cfg.output.path)
    return ScenarioOutcome(rows=[], summary=dict(summary), exit_code=0 if all(gates.values()) else 1)


def run_scenario(cfg: RunConfig, checks: int = IDENTITY_CHECKS) -> ScenarioOutcome:
    """
    Run the configured scenario and write ``series.csv`` and ``summary.json``.

    Exit code 0 when every enabled gate passes, 1 when a gate fails and 2
    when a module error stops the run; the error class, message and details
    then go into the summary.
    """
    logger.info("Starting scenario %s (seed %d)", cfg.scenario, cfg.seed)
    if cfg.scenario == "identity-suite":
        return _identity_scenario(cfg, checks)

    rows: List[SeriesRow] = []
    snapshots: List[Tuple[SliceState, SourceSet]] = []
    final: Optional[SliceState] = None
    try:
        bg = cfg.background.to_config(cfg.solver.kernel_tol).create()
        weights = cfg.energy_weights(lowest_einstein_eigenvalue(bg, cfg.solver.kernel_tol))
        orders = cfg.weights.orders()
        for record in _evolve(cfg):
            rows.append(series_row(record, weights, orders))
            snapshots.append((record.state, record.context.sources))
            final = record.state
    except EVMError as exc:
        logger.error("Scenario %s stopped: %s", cfg.scenario, exc)
        summary = build_summary(cfg.scenario, rows, error=exc)
        emit_report(rows, summary, cfg.output.path)
        return ScenarioOutcome(rows=rows, summary=dict(summary), exit_code=2, final_state=final)

    _fill_divergence(rows, snapshots)
    fits = fit_series(rows, cfg.gates.fit_window)
    gronwall = None
    if cfg.scenario != "milne-exact":
        gronwall = fit_gronwall([r["T"] for r in rows], [r["total"] for r in rows], weights.epsilon)
    gates = evaluate_gates(cfg, rows, fits, gronwall) if cfg.gates.enabled else {}
    defects = [abs(r["charge_defect"]) for r in rows]
    summary: RunSummary = build_summary(
        cfg.scenario,
        rows,
        fits=fits,
        gates=gates,
        gronwall=gronwall,
        charge_defect=max(defects, default=0.0),
    )
    emit_report(rows, summary, cfg.output.path, final if cfg.output.dump_final_state else None)
    exit_code = 0 if all(gates.values()) else 1
    logger.info("Finished scenario %s with status %s", cfg.scenario, summary["status"])
    return ScenarioOutcome(rows=rows, summary=dict(summary), exit_code=exit_code, final_state=final)
