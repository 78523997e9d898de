"""Periodic corrector problems on the perforated cell.

For each index pair (i, j) the corrector chi^ij is the Y-periodic field on Y*
with

    a_hat(chi^ij, w) = sum_kh int_{Y*} a_ijkh e_kh(w) dy   for all periodic w,

normalised to zero mean over Y*.  Only (0,0), (1,1) and (0,1) are solved;
(1,0) aliases (0,1).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .fem import (
    DofMap,
    assemble_cell_rhs,
    assemble_elastic,
    element_strains,
    integrate,
    interior_pin_node,
    material_points,
    shape_gradients,
)
from .geometry import periodic_wrap
from .linsolve import DEFAULT_TOL, solve_or_raise
from .locate import PointLocator
from .material import MaterialSpec, to_mandel, unit_strain
from .mesh import Mesh

DISTINCT_PAIRS = ((0, 0), (1, 1), (0, 1))
ALL_PAIRS = ((0, 0), (0, 1), (1, 0), (1, 1))


def mean_shift(mesh: Mesh, u: np.ndarray) -> np.ndarray:
    """Subtract the Y*-mean of each component."""
    return u - integrate(mesh, u) / mesh.area()


@dataclass(frozen=True, eq=False)
class CorrectorSet:
    chi: dict
    mesh: Mesh
    mat: MaterialSpec
    reports: dict = field(default_factory=dict)
    dofs: DofMap = None

    @cached_property
    def locator(self) -> PointLocator:
        return PointLocator(self.mesh)

    @cached_property
    def strains(self) -> dict:
        """Element strains e_y(chi^ij), (m, 2, 2) per pair."""
        return {ij: element_strains(self.mesh, self.chi[ij]) for ij in ALL_PAIRS}


def solve_correctors(mesh: Mesh, mat: MaterialSpec, tol: float = DEFAULT_TOL) -> CorrectorSet:
    dofs = DofMap.build(mesh, periodic=True, pin=interior_pin_node(mesh))
    K = assemble_elastic(mesh, mat, dofs)
    chi, reports = {}, {}
    for i, j in DISTINCT_PAIRS:
        b = assemble_cell_rhs(mesh, mat, dofs, i, j)
        x, rep = solve_or_raise(K, b, tol=tol, context=f"corrector ({i},{j})")
        u = mean_shift(mesh, dofs.expand(x))
        u.setflags(write=False)
        chi[(i, j)] = u
        reports[(i, j)] = rep
    chi[(1, 0)] = chi[(0, 1)]
    reports[(1, 0)] = reports[(0, 1)]
    return CorrectorSet(chi=chi, mesh=mesh, mat=mat, reports=reports, dofs=dofs)


def evaluate_many(cs: CorrectorSet, y) -> np.ndarray:
    """All corrector values at points y (k, 2): array (k, 2, 2, 2) indexed [k, i, j, component]."""
    y = periodic_wrap(np.asarray(y, dtype=float).reshape(-1, 2))
    if np.any(cs.mesh.cell.contains(y * (1.0 + 1e-9))):
        bad = y[cs.mesh.cell.contains(y * (1.0 + 1e-9))][:3]
        raise ValueError(f"correctors are undefined inside the inclusion, e.g. at {bad.tolist()}")
    tri, bary = cs.locator.locate(y)
    nodes = cs.mesh.triangles[tri]
    out = np.empty((len(y), 2, 2, 2))
    for i, j in ALL_PAIRS:
        out[:, i, j] = np.einsum("ka,kac->kc", bary, cs.chi[(i, j)][nodes])
    return out


def evaluate(cs: CorrectorSet, ij, y) -> np.ndarray:
    """chi^ij at a point (or points) y, wrapped into the cell first."""
    y = np.asarray(y, dtype=float)
    vals = evaluate_many(cs, y.reshape(-1, 2))[:, ij[0], ij[1]]
    return vals.reshape(y.shape)


def energy_matrix(cs: CorrectorSet, mat: MaterialSpec = None) -> np.ndarray:
    """E[p, q] = a_hat(chi^p - pi^p, chi^q - pi^q) over DISTINCT_PAIRS (no Mandel weights).

    The upper triangle is computed and mirrored, so E is exactly symmetric.
    """
    mat = cs.mat if mat is None else mat
    area, _ = shape_gradients(cs.mesh)
    A = mat.mandel_at(material_points(cs.mesh))
    d = [to_mandel(cs.strains[ij] - unit_strain(*ij)) for ij in DISTINCT_PAIRS]
    E = np.zeros((3, 3))
    for p in range(3):
        for q in range(p, 3):
            E[p, q] = np.sum(area * np.einsum("ta,tab,tb->t", d[p], A, d[q]))
            E[q, p] = E[p, q]
    return E


def _pair_index(ij) -> int:
    i, j = ij
    return 2 if i != j else i


def corrector_energy(cs: CorrectorSet, mat: MaterialSpec, ij, kh) -> float:
    """a_hat(chi^ij - pi^ij, chi^kh - pi^kh)."""
    return float(energy_matrix(cs, mat)[_pair_index(ij), _pair_index(kh)])


def galerkin_residual(cs: CorrectorSet) -> float:
    """max |a_hat(chi^ij, chi^kh) - F^ij(chi^kh)| over distinct pairs."""
    K = assemble_elastic(cs.mesh, cs.mat)
    worst = 0.0
    for ij in DISTINCT_PAIRS:
        F = assemble_cell_rhs(cs.mesh, cs.mat, None, *ij)
        for kh in DISTINCT_PAIRS:
            u, w = cs.chi[ij].ravel(), cs.chi[kh].ravel()
            worst = max(worst, abs(float(w @ (K @ u)) - float(F @ w)))
    return worst
