"""Homogenized problem on the unperforated domain.

    -div(q : e(u0)) + theta_tilde u0 = f_tilde  in Omega,
    u0 = 0 on Gamma_1,  (q : e(u0)) n = t on Gamma_2.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .effective import EffectiveModel, hooke_macro
from .errors import SolverError
from .fem import (
    DofMap,
    assemble_mass,
    assemble_traction,
    assemble_volume_load,
    dirichlet_nodes,
    element_strains,
    stiffness_from_mandel,
)
from .linsolve import DEFAULT_TOL, SolveReport, cg_solve
from .material import LoadSpec
from .mesh import Mesh


@dataclass(frozen=True, eq=False)
class MacroSolution:
    mesh: Mesh
    u0: np.ndarray
    strain: np.ndarray
    compliance: float
    energy: float
    model: EffectiveModel
    load: LoadSpec
    report: SolveReport

    @property
    def stress(self) -> np.ndarray:
        return hooke_macro(self.model, self.strain)


def macro_operator(model: EffectiveModel, mesh: Mesh):
    """Full-size matrix of the homogenized bilinear form."""
    return stiffness_from_mandel(mesh, model.q_mandel) + assemble_mass(mesh, model.theta_tilde)


def macro_load(model: EffectiveModel, mesh: Mesh, load: LoadSpec) -> np.ndarray:
    f = np.asarray(model.f_tilde, dtype=float)
    b = assemble_volume_load(mesh, lambda x: np.broadcast_to(f, x.shape))
    return b + assemble_traction(mesh, load.traction)


def solve_homogenized(
    model: EffectiveModel,
    mesh: Mesh,
    load: LoadSpec,
    tol: float = DEFAULT_TOL,
    x0: Optional[np.ndarray] = None,
) -> MacroSolution:
    if mesh.kind != "macro" or len(mesh.hole_centers):
        raise ValueError("the homogenized problem is posed on the unperforated macro mesh")
    dofs = DofMap.build(mesh, dirichlet_nodes(mesh))
    K_full = macro_operator(model, mesh)
    b_full = macro_load(model, mesh, load)
    K = dofs.reduce_matrix(K_full)
    b = dofs.reduce_vector(b_full)
    x, report = cg_solve(K, b, tol=tol, x0=None if x0 is None else dofs.restrict(x0))
    if not report.converged:
        raise SolverError(
            f"homogenized solve did not converge ({report.iterations} iterations, "
            f"residual {report.relative_residual:.3e})"
        )
    u0 = dofs.expand(x)
    u0.setflags(write=False)
    flat = u0.ravel()
    return MacroSolution(
        mesh=mesh,
        u0=u0,
        strain=element_strains(mesh, u0),
        compliance=float(b_full @ flat),
        energy=float(flat @ (K_full @ flat)),
        model=model,
        load=load,
        report=report,
    )


def compliance(sol: MacroSolution, load: Optional[LoadSpec] = None) -> float:
    """int_Omega f_tilde . u0 dx + int_{Gamma_2} t . u0 ds."""
    load = sol.load if load is None else load
    return float(macro_load(sol.model, sol.mesh, load) @ sol.u0.ravel())
