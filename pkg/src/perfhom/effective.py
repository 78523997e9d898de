"""Homogenized coefficients: effective tensor q, Robin average and load average."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corrector import ALL_PAIRS, DISTINCT_PAIRS, CorrectorSet, energy_matrix
from .errors import InvariantError
from .fem import EDGE_POINTS, EDGE_WEIGHTS, TRI_POINTS, TRI_WEIGHTS, material_points, shape_gradients
from .geometry import CellGeometry
from .material import LoadSpec, MaterialSpec, mandel_to_tensor, tensor_to_mandel, to_mandel, from_mandel
from .mesh import Mesh, Tag

CROSS_CHECK_TOL = 1e-6


def q_direct(cs: CorrectorSet, mat: MaterialSpec) -> np.ndarray:
    """q_ijkh = int a_ijkh - sum_pq int a_pqkh e_pq(chi^ij), element by element."""
    if mat is not cs.mat and mat != cs.mat:
        raise ValueError("material differs from the one the correctors were solved with")
    area, _ = shape_gradients(cs.mesh)
    a = mandel_to_tensor(mat.mandel_at(material_points(cs.mesh)))  # (m, 2, 2, 2, 2)
    q = np.einsum("t,tijkh->ijkh", area, a)
    for i, j in ALL_PAIRS:
        q[i, j] -= np.einsum("t,tpqkh,tpq->kh", area, a, cs.strains[(i, j)])
    return q


def q_energy(cs: CorrectorSet, mat: MaterialSpec) -> np.ndarray:
    """q_ijkh = a_hat(chi^ij - pi^ij, chi^kh - pi^kh)."""
    if mat is not cs.mat and mat != cs.mat:
        raise ValueError("material differs from the one the correctors were solved with")
    E = energy_matrix(cs, mat)
    slot = {(0, 0): 0, (1, 1): 1, (0, 1): 2, (1, 0): 2}
    q = np.empty((2, 2, 2, 2))
    for ij in ALL_PAIRS:
        for kh in ALL_PAIRS:
            q[ij + kh] = E[slot[ij], slot[kh]]
    return q


def voigt_tensor(mesh: Mesh, mat: MaterialSpec) -> np.ndarray:
    """Mandel matrix of int_{Y*} a dy over the cell mesh."""
    area, _ = shape_gradients(mesh)
    return np.einsum("t,tab->ab", area, mat.mandel_at(material_points(mesh)))


def averages(cell: CellGeometry, mat: MaterialSpec, load: LoadSpec, mesh: Mesh):
    """(theta_tilde, f_tilde): int_{dT} theta dsigma and int_{Y*} f dy by Gauss quadrature."""
    theta_tilde = 0.0
    e = mesh.tagged_edges(Tag.HOLE)
    if len(e):
        L = mesh.edge_lengths(e)
        p0, p1 = mesh.nodes[e[:, 0]], mesh.nodes[e[:, 1]]
        for xi, w in zip(EDGE_POINTS, EDGE_WEIGHTS):
            x = (1 - xi) * p0 + xi * p1
            theta_tilde += float(np.sum(w * L * mat.theta_at(cell.arc_angle(x))))
    area, _ = shape_gradients(mesh)
    p = mesh.nodes[mesh.triangles]
    f_tilde = np.zeros(2)
    for lam, w in zip(TRI_POINTS, TRI_WEIGHTS):
        x = np.einsum("a,tad->td", lam, p)
        f_tilde += np.einsum("t,td->d", w * area, load.f(x))
    return theta_tilde, f_tilde


@dataclass(frozen=True, eq=False)
class EffectiveModel:
    q: np.ndarray
    q_mandel: np.ndarray
    theta_tilde: float
    f_tilde: np.ndarray
    q_direct_mandel: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def to_text(self) -> str:
        lines = ["# effective model: q in Mandel order (11, 22, sqrt2*12)"]
        for key, val in self.meta.items():
            lines.append(f"# {key}: {val}")
        for p in range(3):
            for r in range(p, 3):
                lines.append(f"q_mandel_{p}{r} = {float(self.q_mandel[p, r])!r}")
        lines.append(f"theta_tilde = {float(self.theta_tilde)!r}")
        lines.append(f"f_tilde_0 = {float(self.f_tilde[0])!r}")
        lines.append(f"f_tilde_1 = {float(self.f_tilde[1])!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "EffectiveModel":
        kv = {}
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, val = line.partition("=")
            kv[key.strip()] = float(val)
        Q = np.zeros((3, 3))
        for p in range(3):
            for r in range(p, 3):
                Q[p, r] = Q[r, p] = kv[f"q_mandel_{p}{r}"]
        return cls(
            q=mandel_to_tensor(Q),
            q_mandel=Q,
            theta_tilde=kv["theta_tilde"],
            f_tilde=np.array([kv["f_tilde_0"], kv["f_tilde_1"]]),
        )


def hooke_macro(model: EffectiveModel, e) -> np.ndarray:
    """sigma0_ij = sum_kh q_ijkh e_kh for a symmetric strain (or a stack of them)."""
    return np.einsum("ijkh,...kh->...ij", model.q, np.asarray(e, dtype=float))


def check_structure(q_mandel: np.ndarray, rel_sym: float = 1e-10, rel_psd: float = 1e-9) -> None:
    """Major symmetry and positive semidefiniteness of q; raises InvariantError."""
    scale = np.abs(q_mandel).max()
    if np.abs(q_mandel - q_mandel.T).max() > rel_sym * scale:
        raise InvariantError("effective tensor violates q_ijkh = q_khij")
    lam = np.linalg.eigvalsh(0.5 * (q_mandel + q_mandel.T))
    if lam[0] < -rel_psd * lam[-1]:
        raise InvariantError(f"effective tensor is not positive semidefinite (eigenvalues {lam})")


def build_effective_model(
    cs: CorrectorSet, cell: CellGeometry, load: LoadSpec, cross_check_tol: float = CROSS_CHECK_TOL
) -> EffectiveModel:
    """Both q formulas, cross-checked, plus the averages; the energy form is stored."""
    mat = cs.mat
    qd = tensor_to_mandel(q_direct(cs, mat))
    qe = tensor_to_mandel(q_energy(cs, mat))
    gap = np.abs(qd - qe).max() / np.abs(qe).max()
    if gap > cross_check_tol:
        raise InvariantError(f"direct and energy formulas for q disagree: relative gap {gap:.3e}")
    check_structure(qe)
    theta_tilde, f_tilde = averages(cell, mat, load, cs.mesh)
    return EffectiveModel(
        q=mandel_to_tensor(qe),
        q_mandel=qe,
        theta_tilde=theta_tilde,
        f_tilde=f_tilde,
        q_direct_mandel=qd,
        meta={"cell_h": cs.mesh.h, "formula_gap": f"{gap:.3e}"},
    )
