"""The oscillating problem on the perforated domain.

Elasticity with coefficients a(x/eps) on Omega^eps, a Robin term
eps * theta(x/eps) u on the hole boundaries, clamped on Gamma_1 and loaded
by f(x/eps) and the Gamma_2 tractions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MeshError, SolverError
from .fem import (
    DofMap,
    assemble_elastic,
    assemble_surface_mass,
    assemble_traction,
    assemble_volume_load,
    dirichlet_nodes,
    h1_seminorm,
    l2_norm,
)
from .geometry import CellGeometry, periodic_wrap
from .linsolve import DEFAULT_TOL, SolveReport, cg_solve
from .material import LoadSpec, MaterialSpec
from .mesh import Mesh, Tag


@dataclass(frozen=True, eq=False)
class FineSolution:
    mesh: Mesh
    u_eps: np.ndarray
    eps: float
    energy_norm: float
    surface_l2: float
    n_dofs: int
    report: SolveReport


def robin_weight(cell: CellGeometry, mat: MaterialSpec, eps: float):
    """x -> theta(x/eps), with theta parametrised by the arc angle around the hole centre."""
    return lambda x: mat.theta_at(cell.arc_angle(periodic_wrap(np.asarray(x) / eps)))


def fine_operator(mesh: Mesh, cell: CellGeometry, mat: MaterialSpec, eps: float):
    K = assemble_elastic(mesh, mat, eps=eps)
    M = assemble_surface_mass(mesh, Tag.HOLE, robin_weight(cell, mat, eps), scale=eps)
    return K + M


def fine_load(mesh: Mesh, load: LoadSpec, eps: float) -> np.ndarray:
    b = assemble_volume_load(mesh, lambda x: load.f(np.asarray(x) / eps))
    return b + assemble_traction(mesh, load.traction)


def surface_l2(mesh: Mesh, u: np.ndarray, eps: float) -> float:
    """eps * int_{dT^eps} |u|^2 dsigma."""
    M = assemble_surface_mass(mesh, Tag.HOLE, None, scale=eps)
    flat = np.asarray(u, dtype=float).ravel()
    return float(flat @ (M @ flat))


def solve_fine(
    mesh: Mesh,
    cell: CellGeometry,
    mat: MaterialSpec,
    load: LoadSpec,
    eps: float,
    tol: float = DEFAULT_TOL,
) -> FineSolution:
    mesh_eps = mesh.meta.get("eps")
    if mesh_eps is not None and abs(mesh_eps - eps) > 1e-14:
        raise MeshError(f"mesh was generated for eps = {mesh_eps}, solve requested eps = {eps}")
    if mesh.cell != cell and not (cell.is_empty and len(mesh.hole_centers) == 0):
        raise MeshError("mesh holes do not match the requested cell geometry")
    dofs = DofMap.build(mesh, dirichlet_nodes(mesh))
    A_full = fine_operator(mesh, cell, mat, eps)
    b_full = fine_load(mesh, load, eps)
    x, report = cg_solve(dofs.reduce_matrix(A_full), dofs.reduce_vector(b_full), tol=tol)
    if not report.converged:
        raise SolverError(
            f"fine solve at eps = {eps} did not converge ({report.iterations} iterations, "
            f"residual {report.relative_residual:.3e})"
        )
    u = dofs.expand(x)
    u.setflags(write=False)
    flat = u.ravel()
    return FineSolution(
        mesh=mesh,
        u_eps=u,
        eps=eps,
        energy_norm=float(np.sqrt(max(flat @ (A_full @ flat), 0.0))),
        surface_l2=surface_l2(mesh, u, eps),
        n_dofs=dofs.n_reduced,
        report=report,
    )


def apriori_quantities(sol: FineSolution):
    """(||u_eps||_{H1(Omega^eps)}, eps * int_{dT^eps} |u_eps|^2)."""
    u = sol.u_eps
    h1 = float(np.hypot(l2_norm(sol.mesh, u), h1_seminorm(sol.mesh, u)))
    return h1, surface_l2(sol.mesh, u, sol.eps)
