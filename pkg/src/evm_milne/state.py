#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Slice State Models

Value models for one constant-mean-curvature slice of the rescaled system.
Arrays are never mutated in place; evolution builds new models with
``model_copy(update=...)``.
"""

from functools import cached_property
from typing import Any, Dict

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .backgrounds import BackgroundGeometry, metric_determinant, metric_inverse
from .errors import LapsePositivityViolation, SingularMetric, SupportOverflow


class FieldModel(BaseModel):
    """Base model holding numpy arrays."""

    model_config = ConfigDict(arbitrary_types_allowed=True)


class SpatialMetric(FieldModel):
    """Rescaled spatial metric g with cached inverse and determinant."""

    components: np.ndarray

    @model_validator(mode="after")
    def _check_positive(self) -> "SpatialMetric":
        g = self.components
        if g.shape[:2] != (3, 3):
            raise ValueError(f"metric must have leading shape (3, 3), got {g.shape}")
        if not np.all(np.isfinite(g)):
            raise SingularMetric("metric has non-finite components")
        if np.max(np.abs(g - np.swapaxes(g, 0, 1))) > 1e-12 * max(1.0, float(np.max(np.abs(g)))):
            raise SingularMetric("metric is not symmetric")
        eig = np.linalg.eigvalsh(np.moveaxis(g, (0, 1), (-2, -1)))
        if np.min(eig) <= 0.0:
            raise SingularMetric(
                "metric is not positive definite", {"min_eigenvalue": float(np.min(eig))}
            )
        return self

    @cached_property
    def inverse(self) -> np.ndarray:
        return metric_inverse(self.components)

    @cached_property
    def det(self) -> np.ndarray:
        return metric_determinant(self.components)

    def lower(self, v: np.ndarray) -> np.ndarray:
        """Lower the first index of ``v``."""
        return np.einsum("ab...,b...->a...", self.components, v)

    def raise_index(self, w: np.ndarray) -> np.ndarray:
        """Raise the first index of ``w``."""
        return np.einsum("ab...,b...->a...", self.inverse, w)

    def trace(self, u: np.ndarray) -> np.ndarray:
        """g-trace of a covariant 2-tensor."""
        return np.einsum("ij...,ij...->...", self.inverse, u)

    def inner(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Pointwise g-inner product of two covariant 2-tensors."""
        return np.einsum("ij...,kl...,ik...,jl...->...", u, v, self.inverse, self.inverse)


class TraceFreeSym2(FieldModel):
    """Trace-free symmetric 2-tensor Sigma."""

    components: np.ndarray

    def projected(self, g: SpatialMetric) -> "TraceFreeSym2":
        """Return the g-trace-free, symmetrised part."""
        s = 0.5 * (self.components + np.swapaxes(self.components, 0, 1))
        return TraceFreeSym2(components=s - g.trace(s) / 3.0 * g.components)

    def trace_ratio(self, g: SpatialMetric) -> float:
        """|tr_g Sigma| relative to the pointwise norm of Sigma."""
        norm = float(np.sqrt(np.max(g.inner(self.components, self.components))))
        return float(np.max(np.abs(g.trace(self.components)))) / max(norm, 1e-300)


class LapseShift(FieldModel):
    """Lapse N and shift X."""

    N: np.ndarray
    X: np.ndarray

    @property
    def N_hat(self) -> np.ndarray:
        return self.N / 3.0 - 1.0

    @property
    def X_hat(self) -> np.ndarray:
        return self.X / self.N

    def check_positive(self, tol: float = 1e-8) -> None:
        """Raise if the lapse leaves 0 < N <= 3 + tol."""
        n_min, n_max = float(np.min(self.N)), float(np.max(self.N))
        if n_min <= 0.0 or n_max > 3.0 + tol:
            raise LapsePositivityViolation(
                "lapse outside (0, 3]", {"N_min": n_min, "N_max": n_max}
            )


class MomentumLattice(FieldModel):
    """Symmetric momentum lattice [-P_max, P_max]^3 with n points per axis."""

    extent: float = Field(default=1.0, gt=0)
    n: int = Field(default=33, ge=5)

    @field_validator("n")
    @classmethod
    def _odd(cls, v: int) -> int:
        if v % 2 == 0:
            raise ValueError(f"lattice size must be odd, got {v}")
        return v

    @property
    def spacing(self) -> float:
        return 2.0 * self.extent / (self.n - 1)

    @property
    def cell_volume(self) -> float:
        return self.spacing ** 3

    @cached_property
    def axis(self) -> np.ndarray:
        return np.linspace(-self.extent, self.extent, self.n)

    @cached_property
    def momenta(self) -> np.ndarray:
        """Lattice momenta p^a, shape (3, 1, 1, 1, n, n, n)."""
        p = np.stack(np.meshgrid(self.axis, self.axis, self.axis, indexing="ij"))
        return p[:, None, None, None]

    def shell_mask(self, shells: int = 2) -> np.ndarray:
        """Boolean mask of the outermost ``shells`` lattice shells."""
        idx = np.arange(self.n)
        edge = (idx < shells) | (idx >= self.n - shells)
        return edge[:, None, None] | edge[None, :, None] | edge[None, None, :]


class DistributionGrid(FieldModel):
    """Distribution f on the momentum lattice per spatial sample, shape S + P."""

    values: np.ndarray
    lattice: MomentumLattice

    def check_support(self) -> None:
        """Raise SupportOverflow if f is nonzero on the two outer shells."""
        f = self.values
        peak = float(np.max(np.abs(f))) if f.size else 0.0
        if peak == 0.0:
            return
        edge = np.abs(f[..., self.lattice.shell_mask()])
        if np.max(edge) > 1e-14 * peak:
            raise SupportOverflow(
                "distribution reached the lattice boundary",
                {"edge_max": float(np.max(edge)), "peak": peak},
            )

    def min_ratio(self) -> float:
        """min f relative to max f; 0 for an empty distribution."""
        peak = float(np.max(self.values))
        return 0.0 if peak <= 0.0 else float(np.min(self.values)) / peak


class PotentialState(FieldModel):
    """Slice-adapted potential: omega, L_{e0} omega and Psi."""

    omega: np.ndarray
    omega_dot: np.ndarray
    psi: np.ndarray


class SliceState(FieldModel):
    """Full rescaled state on one CMC slice."""

    background: BackgroundGeometry
    g: SpatialMetric
    sigma: TraceFreeSym2
    lapse_shift: LapseShift
    T: float = 0.0
    tau0: float = -3.0
    distribution: DistributionGrid
    potential: PotentialState
    charge: float = 0.0

    @field_validator("tau0")
    @classmethod
    def _negative_tau(cls, v: float) -> float:
        if not v < 0.0:
            raise ValueError(f"mean curvature must be negative, got {v}")
        return v

    @property
    def tau(self) -> float:
        return float(self.tau0 * np.exp(-self.T))

    @property
    def N(self) -> np.ndarray:
        return self.lapse_shift.N

    @property
    def X(self) -> np.ndarray:
        return self.lapse_shift.X

    @property
    def f(self) -> np.ndarray:
        return self.distribution.values

    @property
    def lattice(self) -> MomentumLattice:
        return self.distribution.lattice

    def with_fields(self, **fields: Any) -> "SliceState":
        """Copy with updated fields; arrays are wrapped in their models."""
        update: Dict[str, Any] = {}
        if "g" in fields:
            update["g"] = SpatialMetric(components=fields.pop("g"))
        if "sigma" in fields:
            update["sigma"] = TraceFreeSym2(components=fields.pop("sigma"))
        if "N" in fields or "X" in fields:
            update["lapse_shift"] = LapseShift(
                N=fields.pop("N", self.N), X=fields.pop("X", self.X)
            )
        if "f" in fields:
            update["distribution"] = DistributionGrid(
                values=fields.pop("f"), lattice=self.lattice
            )
        pot_keys = {"omega", "omega_dot", "psi"} & set(fields)
        if pot_keys:
            pot = self.potential
            update["potential"] = PotentialState(
                omega=fields.pop("omega", pot.omega),
                omega_dot=fields.pop("omega_dot", pot.omega_dot),
                psi=fields.pop("psi", pot.psi),
            )
        update.update(fields)
        return self.model_copy(update=update)
