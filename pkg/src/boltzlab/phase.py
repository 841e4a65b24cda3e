"""Phase-space grids, distribution fields, and conserved functionals.

The velocity domain is the cube [-v_max, v_max]^3 sampled at cell centers
v_i = -v_max + (i + 1/2) dv, dv = 2 v_max / n, so the node set is symmetric
under v -> -v and contains no node at the origin.  Space is either a single
periodic slab coordinate x in [0, period) (dimension 1, F varies in x_1 only)
or absent (dimension 0, one cell of volume `period`).

All integral functionals are midpoint Riemann sums evaluated with math.fsum
over C-order flattened arrays: exactly rounded and order-deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

MU_FLOOR = 1e-30  # below this Maxwellian value, perturbations are masked to 0
LOG_2PI = math.log(2.0 * math.pi)


def fsum(a):
    """Exactly rounded, fixed-order sum of an array (C-order flatten)."""
    return math.fsum(np.asarray(a, dtype=np.float64).ravel().tolist())


@dataclass(frozen=True)
class VelocityGrid:
    """Uniform cubic velocity lattice, node-symmetric under v -> -v."""

    v_max: float = 6.0
    n_per_axis: int = 24

    def __post_init__(self):
        if self.v_max <= 0:
            raise ValueError("v_max must be positive")
        n = self.n_per_axis
        if n < 4 or n % 2 != 0:
            raise ValueError("n_per_axis must be an even integer >= 4")

    @property
    def dv(self):
        return 2.0 * self.v_max / self.n_per_axis

    @property
    def n_nodes(self):
        return self.n_per_axis**3

    @property
    def axis(self):
        n = self.n_per_axis
        return -self.v_max + (np.arange(n) + 0.5) * self.dv

    def nodes(self):
        """Node coordinates, shape (n^3, 3), C-order."""
        ax = self.axis
        X, Y, Z = np.meshgrid(ax, ax, ax, indexing="ij")
        return np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)

    def speed_sq(self):
        """|v|^2 per node, shape (n^3,)."""
        ax2 = self.axis**2
        X, Y, Z = np.meshgrid(ax2, ax2, ax2, indexing="ij")
        return (X + Y + Z).ravel()

    def meta(self):
        return {"v_max": self.v_max, "n_per_axis": self.n_per_axis}


@dataclass(frozen=True)
class SpatialGrid:
    """Periodic slab (dimension 1) or homogeneous cell (dimension 0)."""

    dimension: int = 0
    period: float = 1.0
    n_cells: int = 1

    def __post_init__(self):
        if self.dimension not in (0, 1):
            raise ValueError("dimension must be 0 or 1")
        if self.period <= 0:
            raise ValueError("period must be positive")
        if self.dimension == 0 and self.n_cells != 1:
            raise ValueError("dimension 0 has exactly one cell")
        if self.n_cells < 1:
            raise ValueError("n_cells must be >= 1")

    @property
    def dx(self):
        return self.period / self.n_cells

    @property
    def axis(self):
        return (np.arange(self.n_cells) + 0.5) * self.dx

    def meta(self):
        return {
            "dimension": self.dimension,
            "period": self.period,
            "n_cells": self.n_cells,
        }


def _speed_sq_of(v):
    """|v|^2 for a VelocityGrid (its flat lattice) or an array of 3-vectors."""
    if isinstance(v, VelocityGrid):
        return v.speed_sq()
    v = np.asarray(v, dtype=np.float64)
    return (v * v).sum(axis=-1)


def maxwellian(v):
    """Global Maxwellian mu(v) = (2 pi)^{-3/2} exp(-|v|^2 / 2).

    Accepts a VelocityGrid (returns the flat lattice array) or 3-vectors.
    """
    return (2.0 * np.pi) ** (-1.5) * np.exp(-0.5 * _speed_sq_of(v))


def weight(v, beta):
    """Polynomial weight w_beta(v) = (1 + |v|^2)^{beta/2}; grid or 3-vectors."""
    return (1.0 + _speed_sq_of(v)) ** (0.5 * beta)


@dataclass
class DistributionField:
    """F >= 0 on the product grid; values shape (n_cells, n_per_axis^3)."""

    vgrid: VelocityGrid
    sgrid: SpatialGrid
    values: np.ndarray

    def __post_init__(self):
        want = (self.sgrid.n_cells, self.vgrid.n_nodes)
        self.values = np.ascontiguousarray(self.values, dtype=np.float64).reshape(want)

    def copy(self):
        return DistributionField(self.vgrid, self.sgrid, self.values.copy())


@dataclass
class PerturbationField:
    """f = (F - mu)/sqrt(mu); stored 0 where mu < MU_FLOOR (tail mask)."""

    vgrid: VelocityGrid
    sgrid: SpatialGrid
    values: np.ndarray
    n_masked: int = 0

    def __post_init__(self):
        want = (self.sgrid.n_cells, self.vgrid.n_nodes)
        self.values = np.ascontiguousarray(self.values, dtype=np.float64).reshape(want)


@dataclass(frozen=True)
class ConservedSnapshot:
    """Defect moments relative to mu and the defect entropy functional."""

    M0: float
    J0: tuple
    E0: float
    entropy: float


def equilibrium_field(vgrid, sgrid):
    mu = maxwellian(vgrid)
    vals = np.tile(mu, (sgrid.n_cells, 1))
    return DistributionField(vgrid, sgrid, vals)


def to_perturbation(field):
    """f = (F - mu)/sqrt(mu) with the Maxwellian tail mask.

    Where mu < MU_FLOOR the quotient is not representable; f is stored as 0
    there and the count of masked nodes carrying F != mu is recorded.
    """
    mu = maxwellian(field.vgrid)
    smu = np.sqrt(mu)
    mask = mu < MU_FLOOR
    diff = field.values - mu[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        f = diff / smu[None, :]
    n_masked = 0
    if mask.any():
        n_masked = int(np.count_nonzero(np.abs(diff[:, mask]) > 0))
        f[:, mask] = 0.0
    return PerturbationField(field.vgrid, field.sgrid, f, n_masked)


def from_perturbation(pert):
    """F = mu + sqrt(mu) f; masked tail reconstructs to mu exactly."""
    mu = maxwellian(pert.vgrid)
    smu = np.sqrt(mu)
    F = mu[None, :] + smu[None, :] * pert.values
    return DistributionField(pert.vgrid, pert.sgrid, F)


def conserved_snapshot(field):
    """Defect moments and defect entropy of F relative to mu.

    M0 = int int (F - mu), J0 = int int v (F - mu), E0 = int int |v|^2 (F - mu),
    entropy = int int (F ln F - mu ln mu) + (3/2 ln(2 pi) - 1) M0 + E0 / 2,
    with the convention 0 ln 0 = 0.  Nonnegative for F >= 0; zero at F = mu.
    """
    vg, sg = field.vgrid, field.sgrid
    mu = maxwellian(vg)
    v2 = vg.speed_sq()
    nodes = vg.nodes()
    dvol = vg.dv**3 * sg.dx
    diff = field.values - mu[None, :]
    M0 = fsum(diff) * dvol
    J0 = tuple(fsum(diff * nodes[None, :, i]) * dvol for i in range(3))
    E0 = fsum(diff * v2[None, :]) * dvol
    F = field.values
    flnf = np.where(F > 0.0, F * np.log(np.where(F > 0.0, F, 1.0)), 0.0)
    mulnmu = mu * np.log(mu)
    h_rel = fsum(flnf - mulnmu[None, :]) * dvol
    entropy = h_rel + (1.5 * LOG_2PI - 1.0) * M0 + 0.5 * E0
    return ConservedSnapshot(M0=M0, J0=J0, E0=E0, entropy=entropy)


def norms(pert, beta):
    """Weighted norms of a perturbation field.

    winf       = sup |w_beta f|
    l1x_linfv  = int_x sup_v |f| dx
    linfx_l1v  = sup_x int_v |f| dv
    l2         = (int int f^2)^{1/2}
    """
    vg, sg = pert.vgrid, pert.sgrid
    w = weight(vg, beta)
    f = pert.values
    af = np.abs(f)
    winf = float(np.max(af * w[None, :])) if f.size else 0.0
    sup_v = np.max(af, axis=1)
    l1x_linfv = fsum(sup_v) * sg.dx
    per_cell_l1 = [fsum(af[c]) * vg.dv**3 for c in range(sg.n_cells)]
    linfx_l1v = max(per_cell_l1)
    l2 = math.sqrt(fsum(f * f) * vg.dv**3 * sg.dx)
    return {
        "winf": winf,
        "l1x_linfv": l1x_linfv,
        "linfx_l1v": linfx_l1v,
        "l2": l2,
    }


def cell_moments(field):
    """Per-cell density/momentum/energy moments of F (not defect moments).

    Returns dict of arrays over cells: rho, jx, jy, jz, e.
    """
    vg, sg = field.vgrid, field.sgrid
    nodes = vg.nodes()
    v2 = vg.speed_sq()
    d3 = vg.dv**3
    C = sg.n_cells
    out = {k: np.empty(C) for k in ("rho", "jx", "jy", "jz", "e")}
    for c in range(C):
        F = field.values[c]
        out["rho"][c] = fsum(F) * d3
        out["jx"][c] = fsum(F * nodes[:, 0]) * d3
        out["jy"][c] = fsum(F * nodes[:, 1]) * d3
        out["jz"][c] = fsum(F * nodes[:, 2]) * d3
        out["e"][c] = fsum(F * v2) * d3
    return out
