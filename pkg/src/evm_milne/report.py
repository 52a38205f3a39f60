#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Run Reports

Fixed-column CSV series, the JSON run summary and the final-state dump.

Column order of ``series.csv`` (schema version 1):

    T, tau, E_k, cal_E, bb_E, faraday_norm, varrho_k, support_G, total,
    smallness_delta, coercivity, faraday_ratio, hamiltonian, momentum,
    divergence_rho, divergence_j, gauge_cmcsh, N_min, N_max, strain_norm,
    sigma_norm, lapse_deviation, shift_norm, tau_G, charge_defect, iterations
"""

import csv
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Union

import numpy as np

from .energies import decay_fit
from .errors import EVMError, FitDomainError
from .models import FitResult, GronwallResult, RunSummary, SeriesRow
from .state import SliceState

logger = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1

CSV_COLUMNS = (
    "T",
    "tau",
    "E_k",
    "cal_E",
    "bb_E",
    "faraday_norm",
    "varrho_k",
    "support_G",
    "total",
    "smallness_delta",
    "coercivity",
    "faraday_ratio",
    "hamiltonian",
    "momentum",
    "divergence_rho",
    "divergence_j",
    "gauge_cmcsh",
    "N_min",
    "N_max",
    "strain_norm",
    "sigma_norm",
    "lapse_deviation",
    "shift_norm",
    "tau_G",
    "charge_defect",
    "iterations",
)

FIT_COLUMNS = (
    "strain_norm",
    "sigma_norm",
    "lapse_deviation",
    "shift_norm",
    "cal_E",
    "bb_E",
    "varrho_k",
    "total",
)

RESIDUAL_COLUMNS = ("hamiltonian", "momentum", "divergence_rho", "divergence_j", "gauge_cmcsh")


def fit_series(rows: Sequence[SeriesRow], window: Optional[float] = None) -> Dict[str, FitResult]:
    """Decay fits of every fitted column; columns without a valid fit are left out."""
    fits: Dict[str, FitResult] = {}
    if not rows:
        return fits
    T = [row["T"] for row in rows]
    for column in FIT_COLUMNS:
        try:
            fits[column] = decay_fit(T, [row[column] for row in rows], window=window)
        except FitDomainError as exc:
            logger.debug("No decay fit for %s: %s", column, exc.details)
    return fits


def build_summary(
    scenario: str,
    rows: Sequence[SeriesRow],
    fits: Optional[Dict[str, FitResult]] = None,
    gates: Optional[Dict[str, bool]] = None,
    max_residuals: Optional[Dict[str, float]] = None,
    gronwall: Optional[GronwallResult] = None,
    charge_defect: Optional[float] = None,
    error: Optional[EVMError] = None,
) -> RunSummary:
    """
    Assemble the JSON summary of a run.

    The status is ``fail`` after a module error or a failed gate,
    ``no-data`` when there are neither rows nor gates, and ``pass`` otherwise.
    Fitted exponents are passed through unchanged.
    """
    gates = dict(gates or {})
    if max_residuals is None:
        max_residuals = {
            column: max((row[column] for row in rows if column in row), default=0.0)
            for column in RESIDUAL_COLUMNS
        }
    if error is not None:
        status = "fail"
    elif not rows and not gates:
        status = "no-data"
    else:
        status = "pass" if all(gates.values()) else "fail"

    summary: RunSummary = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "scenario": scenario,
        "status": status,  # type: ignore[typeddict-item]
        "rows": len(rows),
        "fits": dict(fits or {}),
        "max_residuals": dict(max_residuals),
        "gates": gates,
        "columns": list(CSV_COLUMNS),
    }
    if gronwall is not None:
        summary["gronwall"] = gronwall
    if charge_defect is not None:
        summary["charge_defect"] = charge_defect
    if error is not None:
        summary["error"] = error.to_dict()
    return summary


def _json_safe(value: Any) -> Any:
    """Recursively convert numpy scalars and map non-finite floats to None."""
    if isinstance(value, dict):
        return {str(k): _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, np.ndarray):
        return _json_safe(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def write_series(rows: Sequence[SeriesRow], path: Path) -> None:
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(CSV_COLUMNS), extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        for row in rows:
            out = {k: row.get(k, float("nan")) for k in CSV_COLUMNS}
            out["iterations"] = int(out["iterations"]) if math.isfinite(out["iterations"]) else ""
            writer.writerow(out)


def write_summary(summary: RunSummary, path: Path) -> None:
    text = json.dumps(_json_safe(summary), indent=2, sort_keys=True, allow_nan=False)
    path.write_text(text + "\n", encoding="utf-8")


def dump_state(state: SliceState, path: Path) -> None:
    """Write the fields of a slice to a ``.npz`` archive."""
    pot = state.potential
    np.savez(
        path,
        g=state.g.components,
        sigma=state.sigma.components,
        N=state.N,
        X=state.X,
        f=state.f,
        omega=pot.omega,
        omega_dot=pot.omega_dot,
        psi=pot.psi,
        T=state.T,
        tau0=state.tau0,
        charge=state.charge,
        lattice_extent=state.lattice.extent,
        lattice_n=state.lattice.n,
    )


def emit_report(
    rows: Sequence[SeriesRow],
    summary: RunSummary,
    out_dir: Union[str, Path],
    final_state: Optional[SliceState] = None,
) -> Dict[str, Path]:
    """
    Write ``series.csv``, ``summary.json`` and optionally ``final_state.npz``.

    Args:
        rows: Series rows in report order
        summary: Summary from ``build_summary``
        out_dir: Run directory, created if missing
        final_state: Slice to dump, if any

    Returns:
        Mapping of artifact name to written path

    Raises:
        OSError: If the directory or a file cannot be written
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {"series": out_dir / "series.csv", "summary": out_dir / "summary.json"}
    write_series(rows, paths["series"])
    write_summary(summary, paths["summary"])
    if final_state is not None:
        paths["final_state"] = out_dir / "final_state.npz"
        dump_state(final_state, paths["final_state"])
    logger.info("Wrote %d rows to %s", len(rows), out_dir)
    return paths
