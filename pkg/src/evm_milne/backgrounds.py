#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Background Geometry Strategies

This module implements the strategy pattern for the spatial background the
rescaled system lives on: a left-invariant hyperbolic frame model (the
homogeneous surrogate of a compact negative Einstein space) and a flat
periodic grid used for discrete-operator verification.

Array conventions used across the package:

- Spatial sample shape ``S`` always has three axes: ``(1, 1, 1)`` for the
  homogeneous model and ``(n, n, n)`` for the torus.
- Tensor indices come first, samples last: a covector is ``(3,) + S``, a
  2-tensor ``(3, 3) + S`` and ``Gamma[i, j, k] = Gamma^i_{jk}``.
- Fields on the momentum lattice append three lattice axes after ``S``.
- Frame derivatives put the derivative index first: ``gradient(t)[a] = e_a t``.
"""

import logging
from abc import ABC, abstractmethod
from functools import cached_property
from typing import List, Literal, Tuple

import numpy as np
from pydantic import BaseModel, Field

logger = logging.getLogger(__name__)

BackgroundKind = Literal["homogeneous", "torus"]


class BackgroundGeometry(ABC):
    """Abstract base class for background geometries."""

    kind: str = ""

    @property
    @abstractmethod
    def spatial_shape(self) -> Tuple[int, int, int]:
        """Shape of one scalar field."""
        pass

    @property
    @abstractmethod
    def structure_constants(self) -> np.ndarray:
        """Frame structure constants C[a, b, c] with [e_b, e_c] = C^a_{bc} e_a."""
        pass

    @property
    @abstractmethod
    def gamma_components(self) -> np.ndarray:
        """Background metric components in the frame, shape (3, 3)."""
        pass

    @property
    @abstractmethod
    def quadrature_weights(self) -> np.ndarray:
        """Positive comoving-volume weights per sample, shape S."""
        pass

    @abstractmethod
    def partial(self, field: np.ndarray, axis: int, lattice: bool = False) -> np.ndarray:
        """Frame derivative e_axis of every component of ``field``."""
        pass

    @abstractmethod
    def one_sided(
        self, field: np.ndarray, axis: int, forward: bool, lattice: bool = False
    ) -> np.ndarray:
        """First-order one-sided frame derivative used by upwind transport."""
        pass

    @abstractmethod
    def einstein_kernel_basis(self) -> List[np.ndarray]:
        """Basis of the Einstein-operator kernel excluded from monitors."""
        pass

    # ==================== Shared helpers ====================

    @property
    def volume(self) -> float:
        """Declared comoving volume, the sum of quadrature weights."""
        return float(self.quadrature_weights.sum())

    @cached_property
    def gamma(self) -> np.ndarray:
        """Background metric broadcast over samples, shape (3, 3) + S."""
        return np.broadcast_to(
            self.gamma_components[(...,) + (None,) * 3], (3, 3) + self.spatial_shape
        ).copy()

    @cached_property
    def gamma_inv(self) -> np.ndarray:
        """Inverse background metric, shape (3, 3) + S."""
        inv = np.linalg.inv(self.gamma_components)
        return np.broadcast_to(inv[(...,) + (None,) * 3], (3, 3) + self.spatial_shape).copy()

    @cached_property
    def christoffel_gamma(self) -> np.ndarray:
        """Connection coefficients of the background metric."""
        return self.frame_christoffel(self.gamma)

    @cached_property
    def riemann_gamma(self) -> np.ndarray:
        """Riemann tensor of the background metric."""
        from .geometry import riemann_tensor

        return riemann_tensor(self, self.christoffel_gamma)

    @cached_property
    def ricci_gamma(self) -> np.ndarray:
        """Ricci tensor of the background metric."""
        return np.einsum("abad...->bd...", self.riemann_gamma)

    def zeros(self, lead: Tuple[int, ...] = ()) -> np.ndarray:
        """Zero field with the given leading tensor shape."""
        return np.zeros(lead + self.spatial_shape)

    def gradient(self, t: np.ndarray, lattice: bool = False) -> np.ndarray:
        """All frame derivatives of ``t`` stacked on a new leading axis."""
        return np.stack([self.partial(t, a, lattice=lattice) for a in range(3)])

    def frame_christoffel(self, g: np.ndarray) -> np.ndarray:
        """
        Connection coefficients of ``g`` in the background frame (Koszul formula).

        Args:
            g: Metric components, shape (3, 3) + S

        Returns:
            Gamma[i, b, c] with nabla_{e_b} e_c = Gamma^i_{bc} e_i
        """
        C = self.structure_constants
        dg = self.gradient(g)
        lowered = 0.5 * (
            np.einsum("bca...->abc...", dg)
            + np.einsum("cba...->abc...", dg)
            - dg
            + np.einsum("kbc,ka...->abc...", C, g)
            - np.einsum("kba,kc...->abc...", C, g)
            - np.einsum("kca,kb...->abc...", C, g)
        )
        return np.einsum("ia...,abc...->ibc...", metric_inverse(g), lowered)

    def moduli_projector(self, u: np.ndarray) -> np.ndarray:
        """Remove the Einstein-operator kernel from a symmetric 2-tensor field."""
        basis = self.einstein_kernel_basis()
        if not basis:
            return u
        inv = np.linalg.inv(self.gamma_components)
        stack = np.stack(basis)
        gram = np.einsum("mij,nkl,ik,jl->mn", stack, stack, inv, inv)
        overlaps = np.einsum("ij...,mkl,ik,jl->m...", u, stack, inv, inv)
        # basis is not assumed orthogonal
        coeffs = np.tensordot(np.linalg.inv(gram), overlaps, axes=1)
        return u - np.einsum("m...,mij->ij...", coeffs, stack)

    def spatial_axes(self, ndim: int, lattice: bool = False) -> Tuple[int, int, int]:
        """Axis positions of the three spatial sample axes."""
        start = ndim - (6 if lattice else 3)
        return (start, start + 1, start + 2)


class HomogeneousHyperbolic(BackgroundGeometry):
    """Left-invariant hyperbolic frame model with Ric[gamma] = -(2/9) gamma."""

    kind = "homogeneous"

    def __init__(self, kernel_tol: float = 1e-10):
        self.kernel_tol = kernel_tol

    @property
    def spatial_shape(self) -> Tuple[int, int, int]:
        return (1, 1, 1)

    @cached_property
    def structure_constants(self) -> np.ndarray:
        # [e1, e2] = e2, [e1, e3] = e3
        C = np.zeros((3, 3, 3))
        C[1, 0, 1], C[1, 1, 0] = 1.0, -1.0
        C[2, 0, 2], C[2, 2, 0] = 1.0, -1.0
        return C

    @cached_property
    def gamma_components(self) -> np.ndarray:
        return 9.0 * np.eye(3)

    @cached_property
    def quadrature_weights(self) -> np.ndarray:
        return np.ones(self.spatial_shape)

    def partial(self, field: np.ndarray, axis: int, lattice: bool = False) -> np.ndarray:
        # invariant fields have vanishing frame derivatives
        return np.zeros_like(field)

    def one_sided(
        self, field: np.ndarray, axis: int, forward: bool, lattice: bool = False
    ) -> np.ndarray:
        return np.zeros_like(field)

    @cached_property
    def _kernel(self) -> List[np.ndarray]:
        from .geometry import einstein_spectrum

        return [vec for val, vec in zip(*einstein_spectrum(self)) if abs(val) <= self.kernel_tol]

    def einstein_kernel_basis(self) -> List[np.ndarray]:
        return self._kernel


class FlatTorus(BackgroundGeometry):
    """Flat periodic grid of side 2*pi with central-difference frame derivatives."""

    kind = "torus"

    def __init__(self, n: int = 16, order: int = 2, length: float = 2.0 * np.pi):
        if order not in (2, 4):
            raise ValueError(f"Unsupported stencil order: {order}")
        if n < 4:
            raise ValueError(f"Torus needs at least 4 points per axis, got {n}")
        self.n = n
        self.order = order
        self.length = length

    @property
    def spacing(self) -> float:
        return self.length / self.n

    @property
    def spatial_shape(self) -> Tuple[int, int, int]:
        return (self.n, self.n, self.n)

    @cached_property
    def structure_constants(self) -> np.ndarray:
        return np.zeros((3, 3, 3))

    @cached_property
    def gamma_components(self) -> np.ndarray:
        return np.eye(3)

    @cached_property
    def quadrature_weights(self) -> np.ndarray:
        return np.full(self.spatial_shape, self.spacing ** 3)

    @cached_property
    def coordinates(self) -> np.ndarray:
        """Grid coordinates, shape (3,) + S."""
        x = np.arange(self.n) * self.spacing
        return np.stack(np.meshgrid(x, x, x, indexing="ij"))

    def partial(self, field: np.ndarray, axis: int, lattice: bool = False) -> np.ndarray:
        ax = self.spatial_axes(field.ndim, lattice)[axis]
        h = self.spacing
        f1 = np.roll(field, -1, axis=ax)
        b1 = np.roll(field, 1, axis=ax)
        if self.order == 2:
            return (f1 - b1) / (2.0 * h)
        f2 = np.roll(field, -2, axis=ax)
        b2 = np.roll(field, 2, axis=ax)
        return (-f2 + 8.0 * f1 - 8.0 * b1 + b2) / (12.0 * h)

    def one_sided(
        self, field: np.ndarray, axis: int, forward: bool, lattice: bool = False
    ) -> np.ndarray:
        ax = self.spatial_axes(field.ndim, lattice)[axis]
        if forward:
            return (np.roll(field, -1, axis=ax) - field) / self.spacing
        return (field - np.roll(field, 1, axis=ax)) / self.spacing

    def derivative_symbol(self, k: np.ndarray) -> np.ndarray:
        """Real symbol s(k) of the first-derivative stencil, d/dx e^{ikx} = i s(k) e^{ikx}."""
        h = self.spacing
        if self.order == 2:
            return np.sin(k * h) / h
        return (8.0 * np.sin(k * h) - np.sin(2.0 * k * h)) / (6.0 * h)

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Integer wavenumbers per axis in FFT order."""
        return np.fft.fftfreq(self.n, d=1.0 / self.n) * (2.0 * np.pi / self.length)

    @cached_property
    def null_modes(self) -> List[np.ndarray]:
        """Orthonormal (unit-weight) grid modes annihilated by every central difference."""
        idx = np.arange(self.n)
        patterns = [np.ones(self.n)]
        if self.n % 2 == 0:
            patterns.append((-1.0) ** idx)
        modes = []
        for px in patterns:
            for py in patterns:
                for pz in patterns:
                    m = px[:, None, None] * py[None, :, None] * pz[None, None, :]
                    modes.append(m / np.sqrt(float(np.sum(m * m))))
        return modes

    def project_null_modes(self, field: np.ndarray) -> np.ndarray:
        """Remove the stencil null modes from every component of ``field``."""
        out = field.copy()
        for m in self.null_modes:
            coeff = np.einsum("...xyz,xyz->...", out, m)
            out = out - coeff[..., None, None, None] * m
        return out

    def einstein_kernel_basis(self) -> List[np.ndarray]:
        return []

    @property
    def lowest_laplacian_eigenvalue(self) -> float:
        """Smallest nonzero eigenvalue of the nested-difference Laplacian."""
        return float(self.derivative_symbol(np.array(2.0 * np.pi / self.length)) ** 2)


class BackgroundConfig(BaseModel):
    """Background configuration selecting the strategy."""

    kind: BackgroundKind = Field(default="homogeneous")
    n: int = Field(default=16, ge=4)
    stencil_order: int = Field(default=2)
    kernel_tol: float = Field(default=1e-10, gt=0)

    def _create_strategy(self) -> BackgroundGeometry:
        """Create the background strategy for the configured kind."""
        if self.kind == "homogeneous":
            return HomogeneousHyperbolic(kernel_tol=self.kernel_tol)
        elif self.kind == "torus":
            return FlatTorus(n=self.n, order=self.stencil_order)
        else:
            raise ValueError(f"Unsupported background kind: {self.kind}")

    def create(self) -> BackgroundGeometry:
        """Return a fresh background strategy."""
        strategy = self._create_strategy()
        logger.debug("Created %s background with samples %s", strategy.kind, strategy.spatial_shape)
        return strategy


def metric_inverse(g: np.ndarray) -> np.ndarray:
    """Inverse of a (3, 3) + shape metric field."""
    inv = np.linalg.inv(np.moveaxis(g, (0, 1), (-2, -1)))
    return np.moveaxis(inv, (-2, -1), (0, 1))


def metric_determinant(g: np.ndarray) -> np.ndarray:
    """Determinant of a (3, 3) + shape metric field."""
    return np.linalg.det(np.moveaxis(g, (0, 1), (-2, -1)))

