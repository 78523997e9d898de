"""P1 vector finite elements on triangle meshes.

Dofs are node-major: dof 2*n + c is component c of node n.  Assembly
routines return full-size scipy sparse matrices or vectors; a DofMap folds
them onto the constrained (reduced) space via its prolongation P as P^T K P.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import MeshError
from .geometry import SIDES, periodic_wrap
from .material import SQRT2, MaterialSpec, to_mandel, unit_strain
from .mesh import Mesh, Tag

# interior 3-point rule, exact for quadratics
TRI_POINTS = np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]])
TRI_WEIGHTS = np.full(3, 1 / 3)
_g = 0.5 / np.sqrt(3.0)
EDGE_POINTS = np.array([0.5 - _g, 0.5 + _g])
EDGE_WEIGHTS = np.array([0.5, 0.5])


def shape_gradients(mesh: Mesh):
    """Areas (m,) and constant shape-function gradients (m, 3, 2)."""
    p = mesh.nodes[mesh.triangles]
    x, y = p[..., 0], p[..., 1]
    area = 0.5 * ((x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0]))
    b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    grads = np.stack([b, c], axis=-1) / (2.0 * area)[:, None, None]
    return area, grads


def strain_operator(grads: np.ndarray) -> np.ndarray:
    """Mandel strain-displacement matrices (m, 3, 6) for element dofs (u0x,u0y,u1x,...)."""
    m = len(grads)
    B = np.zeros((m, 3, 6))
    dx, dy = grads[..., 0], grads[..., 1]
    B[:, 0, 0::2] = dx
    B[:, 1, 1::2] = dy
    B[:, 2, 0::2] = dy / SQRT2
    B[:, 2, 1::2] = dx / SQRT2
    return B


def element_dofs(triangles: np.ndarray) -> np.ndarray:
    d = np.empty((len(triangles), 6), dtype=np.int64)
    d[:, 0::2] = 2 * triangles
    d[:, 1::2] = 2 * triangles + 1
    return d


def element_strains(mesh: Mesh, u: np.ndarray) -> np.ndarray:
    """Constant element strains (m, 2, 2) of a nodal field u (n, 2)."""
    _, grads = shape_gradients(mesh)
    g = np.einsum("tac,tad->tcd", u[mesh.triangles], grads)  # du_c / dx_d
    return 0.5 * (g + g.transpose(0, 2, 1))


def element_gradients(mesh: Mesh, u: np.ndarray) -> np.ndarray:
    _, grads = shape_gradients(mesh)
    return np.einsum("tac,tad->tcd", u[mesh.triangles], grads)


def material_points(mesh: Mesh, eps: Optional[float] = None) -> np.ndarray:
    """Cell coordinates at which coefficients are sampled (element centroids)."""
    c = mesh.centroids()
    return c if eps is None else periodic_wrap(c / eps)


def _scatter(n_dofs: int, dofs: np.ndarray, ke: np.ndarray) -> sp.csr_matrix:
    rows = np.repeat(dofs, dofs.shape[1], axis=1).ravel()
    cols = np.tile(dofs, (1, dofs.shape[1])).ravel()
    K = sp.coo_matrix((ke.ravel(), (rows, cols)), shape=(n_dofs, n_dofs)).tocsr()
    K.sum_duplicates()
    return K


def symmetrize(K: sp.spmatrix) -> sp.csr_matrix:
    """Rebuild K from its upper triangle so that K == K.T bit for bit."""
    U = sp.triu(K, format="csr")
    return (U + sp.triu(U, k=1).T).tocsr()


def stiffness_from_mandel(mesh: Mesh, A: np.ndarray) -> sp.csr_matrix:
    """sum_T |T| B^T A_T B for per-element (m, 3, 3) or constant (3, 3) Mandel matrices."""
    area, grads = shape_gradients(mesh)
    B = strain_operator(grads)
    A = np.broadcast_to(A, (mesh.n_triangles, 3, 3))
    ke = area[:, None, None] * np.einsum("tai,tab,tbj->tij", B, A, B)
    return symmetrize(_scatter(2 * mesh.n_nodes, element_dofs(mesh.triangles), ke))


def assemble_elastic(mesh: Mesh, mat: MaterialSpec, dofs: "Optional[DofMap]" = None, eps: Optional[float] = None):
    """Elastic stiffness with a sampled at centroids (cell coordinates x/eps when eps is given)."""
    K = stiffness_from_mandel(mesh, mat.mandel_at(material_points(mesh, eps)))
    return K if dofs is None else dofs.reduce_matrix(K)


def assemble_mass(mesh: Mesh, scale: float = 1.0) -> sp.csr_matrix:
    """Consistent P1 volume mass for vector fields."""
    area, _ = shape_gradients(mesh)
    local = (np.ones((3, 3)) + np.eye(3)) / 12.0
    me = np.zeros((mesh.n_triangles, 6, 6))
    me[:, 0::2, 0::2] = area[:, None, None] * local
    me[:, 1::2, 1::2] = area[:, None, None] * local
    return symmetrize(scale * _scatter(2 * mesh.n_nodes, element_dofs(mesh.triangles), me))


def assemble_surface_mass(
    mesh: Mesh, tag: Tag, weight: Optional[Callable] = None, scale: float = 1.0
) -> sp.csr_matrix:
    """scale * int_{tagged edges} weight u.v ds with 2-point Gauss per edge.

    ``weight`` maps physical points (k, 2) to values (k,); None means 1.
    """
    if tag not in (Tag.HOLE, Tag.GAMMA2, Tag.GAMMA1):
        raise ValueError(f"surface mass not defined on tag {tag!r}")
    e = mesh.tagged_edges(tag)
    n = 2 * mesh.n_nodes
    if len(e) == 0:
        return sp.csr_matrix((n, n))
    L = mesh.edge_lengths(e)
    p0, p1 = mesh.nodes[e[:, 0]], mesh.nodes[e[:, 1]]
    me = np.zeros((len(e), 2, 2))
    for xi, w in zip(EDGE_POINTS, EDGE_WEIGHTS):
        x = (1 - xi) * p0 + xi * p1
        wt = np.ones(len(e)) if weight is None else np.asarray(weight(x), dtype=float)
        N = np.array([1 - xi, xi])
        me += (w * L * wt)[:, None, None] * np.outer(N, N)[None]
    ke = np.zeros((len(e), 4, 4))
    ke[:, 0::2, 0::2] = me
    ke[:, 1::2, 1::2] = me
    d = np.empty((len(e), 4), dtype=np.int64)
    d[:, 0::2] = 2 * e
    d[:, 1::2] = 2 * e + 1
    return symmetrize(scale * _scatter(n, d, ke))


def assemble_volume_load(mesh: Mesh, f: Callable, dofs: "Optional[DofMap]" = None) -> np.ndarray:
    """int f . v dx with the 3-point rule; f maps physical points (k, 2) -> (k, 2)."""
    area, _ = shape_gradients(mesh)
    p = mesh.nodes[mesh.triangles]
    F = np.zeros((mesh.n_nodes, 2))
    for lam, w in zip(TRI_POINTS, TRI_WEIGHTS):
        x = np.einsum("a,tad->td", lam, p)
        fx = np.asarray(f(x), dtype=float).reshape(-1, 2)
        for a in range(3):
            np.add.at(F, mesh.triangles[:, a], (w * area * lam[a])[:, None] * fx)
    b = F.ravel()
    return b if dofs is None else dofs.reduce_vector(b)


def assemble_traction(mesh: Mesh, traction: dict, dofs: "Optional[DofMap]" = None) -> np.ndarray:
    """int_{Gamma_2} t . v ds for constant tractions keyed by side name."""
    F = np.zeros((mesh.n_nodes, 2))
    gamma2 = mesh.edge_mask(Tag.GAMMA2)
    for idx, side in enumerate(SIDES):
        if side not in traction:
            continue
        sel = gamma2 & (mesh.edge_sides == idx)
        e = mesh.boundary_edges[sel]
        if len(e) == 0:
            continue
        t = np.asarray(traction[side], dtype=float)
        half = 0.5 * mesh.edge_lengths(e)[:, None] * t[None]
        np.add.at(F, e[:, 0], half)
        np.add.at(F, e[:, 1], half)
    b = F.ravel()
    return b if dofs is None else dofs.reduce_vector(b)


def assemble_cell_rhs(mesh: Mesh, mat: MaterialSpec, dofs: "Optional[DofMap]", i: int, j: int) -> np.ndarray:
    """w -> sum_kh int_{Y*} a_ijkh e_kh(w) dy, as a vector over dofs."""
    if i not in (0, 1) or j not in (0, 1):
        raise ValueError(f"invalid index pair {(i, j)}")
    area, grads = shape_gradients(mesh)
    B = strain_operator(grads)
    A = mat.mandel_at(material_points(mesh))
    stress = A @ to_mandel(unit_strain(i, j))
    fe = area[:, None] * np.einsum("tai,ta->ti", B, stress)
    b = np.zeros(2 * mesh.n_nodes)
    np.add.at(b, element_dofs(mesh.triangles), fe)
    return b if dofs is None else dofs.reduce_vector(b)


@dataclass(frozen=True, eq=False)
class DofMap:
    """Reduced numbering after Dirichlet, periodic and pin constraints.

    ``index[n, c]`` is the reduced dof of component c at node n or -1 when the
    value is fixed to zero.  Slave nodes share the index of their master.
    """

    index: np.ndarray
    master: np.ndarray
    n_reduced: int
    dirichlet_nodes: np.ndarray
    pinned_node: int = -1

    @classmethod
    def build(
        cls,
        mesh: Mesh,
        dirichlet_nodes: Sequence[int] = (),
        periodic: bool = False,
        pin: Optional[int] = None,
    ) -> "DofMap":
        n = mesh.n_nodes
        master = np.arange(n)
        if periodic:
            if len(mesh.periodic_pairs) == 0:
                raise MeshError("periodic constraints need a cell mesh with periodic pairs")
            for m, s, _ in mesh.periodic_pairs:
                master[s] = m
            # corners are slaved twice; resolve chains to a fixed point
            for _ in range(3):
                master = master[master]
        fixed = np.zeros(n, dtype=bool)
        dirichlet_nodes = np.asarray(dirichlet_nodes, dtype=np.int64)
        fixed[dirichlet_nodes] = True
        if pin is not None:
            if pin in set(mesh.boundary_nodes().tolist()):
                raise MeshError(f"pinned node {pin} lies on the boundary; it must be interior")
            fixed[pin] = True
        fixed = fixed[master]
        index = -np.ones((n, 2), dtype=np.int64)
        reps = np.flatnonzero((master == np.arange(n)) & ~fixed)
        index[reps, 0] = 2 * np.arange(len(reps))
        index[reps, 1] = 2 * np.arange(len(reps)) + 1
        index = index[master]
        return cls(
            index=index,
            master=master,
            n_reduced=2 * len(reps),
            dirichlet_nodes=dirichlet_nodes,
            pinned_node=-1 if pin is None else int(pin),
        )

    @property
    def prolongation(self) -> sp.csr_matrix:
        flat = self.index.ravel()
        rows = np.flatnonzero(flat >= 0)
        return sp.csr_matrix(
            (np.ones(len(rows)), (rows, flat[rows])), shape=(len(flat), self.n_reduced)
        )

    def reduce_matrix(self, K: sp.spmatrix) -> sp.csr_matrix:
        P = self.prolongation
        return symmetrize(P.T @ K @ P)

    def reduce_vector(self, b: np.ndarray) -> np.ndarray:
        return self.prolongation.T @ np.asarray(b, dtype=float).ravel()

    def expand(self, x: np.ndarray) -> np.ndarray:
        """Reduced vector -> nodal field (n, 2); fixed dofs are exactly zero."""
        flat = self.index.ravel()
        out = np.zeros(len(flat))
        live = flat >= 0
        out[live] = x[flat[live]]
        return out.reshape(-1, 2)

    def restrict(self, u: np.ndarray) -> np.ndarray:
        """Nodal field -> reduced vector, reading master values."""
        flat = self.index.ravel()
        x = np.zeros(self.n_reduced)
        live = flat >= 0
        x[flat[live]] = np.asarray(u, dtype=float).ravel()[live]
        return x


@dataclass(frozen=True, eq=False)
class SparseSymSystem:
    """Symmetric system stored by its upper triangle, with its right-hand side."""

    upper: sp.csr_matrix
    rhs: np.ndarray
    dofs: DofMap

    @property
    def matrix(self) -> sp.csr_matrix:
        U = self.upper
        return (U + sp.triu(U, k=1).T).tocsr()


def apply_constraints(K: sp.spmatrix, rhs: np.ndarray, dofs: DofMap) -> SparseSymSystem:
    Kr = dofs.reduce_matrix(K)
    if Kr.shape[0] and np.any(Kr.diagonal() <= 0.0):
        raise MeshError("reduced system has a non-positive diagonal entry")
    return SparseSymSystem(upper=sp.triu(Kr, format="csr"), rhs=dofs.reduce_vector(rhs), dofs=dofs)


def dirichlet_nodes(mesh: Mesh) -> np.ndarray:
    return mesh.boundary_nodes(Tag.GAMMA1)


def interior_pin_node(mesh: Mesh) -> int:
    """Deterministic interior node for kernel removal: the one nearest to a
    point midway between the inclusion and the cell face on the y1 axis."""
    target = np.array([0.5 * (mesh.cell.extent + 0.5), 0.0])
    boundary = np.zeros(mesh.n_nodes, dtype=bool)
    boundary[mesh.boundary_nodes()] = True
    d = np.linalg.norm(mesh.nodes - target, axis=1)
    d[boundary] = np.inf
    return int(np.argmin(d))


def l2_norm(mesh: Mesh, u: np.ndarray) -> float:
    """Exact L2 norm of a P1 vector field."""
    area, _ = shape_gradients(mesh)
    v = np.asarray(u)[mesh.triangles]  # (m, 3, 2)
    s = (v**2).sum(axis=1) + v.sum(axis=1) ** 2
    return float(np.sqrt(np.sum(area[:, None] * s / 12.0)))


def h1_seminorm(mesh: Mesh, u: np.ndarray) -> float:
    area, _ = shape_gradients(mesh)
    g = element_gradients(mesh, np.asarray(u))
    return float(np.sqrt(np.sum(area * (g**2).sum(axis=(1, 2)))))


def integrate(mesh: Mesh, u: np.ndarray) -> np.ndarray:
    """Exact integral of a P1 field (n, k) -> (k,)."""
    area, _ = shape_gradients(mesh)
    return (area[:, None] * np.asarray(u)[mesh.triangles].sum(axis=1) / 3.0).sum(axis=0)


def volume_quadrature(mesh: Mesh):
    """3-point rule over all triangles: points (k, 2), weights (k,), and a
    P1 evaluation matrix (k, n_nodes) mapping nodal values to the points."""
    area, _ = shape_gradients(mesh)
    p = mesh.nodes[mesh.triangles]
    m = mesh.n_triangles
    x = np.einsum("qa,tad->tqd", TRI_POINTS, p).reshape(-1, 2)
    w = (area[:, None] * TRI_WEIGHTS[None]).ravel()
    rows = np.repeat(np.arange(3 * m), 3)
    cols = np.repeat(mesh.triangles, 3, axis=0).ravel()
    vals = np.tile(TRI_POINTS.ravel(), m)
    E = sp.csr_matrix((vals, (rows, cols)), shape=(3 * m, mesh.n_nodes))
    return x, w, E


def surface_quadrature(mesh: Mesh, tag: Tag):
    """2-point Gauss over tagged edges: points, weights and P1 evaluation matrix."""
    e = mesh.tagged_edges(tag)
    L = mesh.edge_lengths(e) if len(e) else np.zeros(0)
    p0, p1 = mesh.nodes[e[:, 0]], mesh.nodes[e[:, 1]]
    x = np.stack([(1 - xi) * p0 + xi * p1 for xi in EDGE_POINTS], axis=1).reshape(-1, 2)
    w = (L[:, None] * EDGE_WEIGHTS[None]).ravel()
    k = len(x)
    rows = np.repeat(np.arange(k), 2)
    cols = np.repeat(e, 2, axis=0).ravel()
    N = np.array([[1 - xi, xi] for xi in EDGE_POINTS])
    vals = np.tile(N.ravel(), len(e))
    E = sp.csr_matrix((vals, (rows, cols)), shape=(k, mesh.n_nodes))
    return x, w, E
