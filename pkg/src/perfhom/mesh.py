"""Conforming triangle meshes of the perforated cell Y* and the perforated domain.

Cell meshes are O-grids: the annulus between the inclusion boundary and the
cell boundary is split into four sectors, each a structured quad grid mapped
between the outer face and the inclusion, and every quad is cut along its
shorter diagonal.  One half-sector is built explicitly and the rest is
produced by exact mirror/rotation, so the mesh is invariant under the
symmetries of the square, bit for bit.  The outer faces carry m uniform
segments each, which makes the periodic traces match exactly.

Macro meshes tile the eps-scaled cell mesh over every lattice cell and fill
the remaining boundary band with structured rectangles whose divisions agree
with the neighbouring cells.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Optional

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import MeshError
from .geometry import (
    SIDES,
    CellGeometry,
    Disk,
    Empty,
    MacroGeometry,
    Square,
    lattice_cells,
)

H_CELL_RATIO = 1.0 / 8.0
MERGE_TOL = 1e-9


class Tag(IntEnum):
    GAMMA1 = 1
    GAMMA2 = 2
    HOLE = 3
    PERIODIC_X = 4
    PERIODIC_Y = 5


def _frozen(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """P1 triangle mesh with tagged boundary edges.

    ``boundary_edges`` are oriented as in their triangle (counter-clockwise),
    ``edge_sides`` holds the index into ``SIDES`` for outer macro edges and -1
    otherwise.  ``periodic_pairs`` rows are ``(master, slave, axis)``.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    edge_tags: np.ndarray
    h: float
    kind: str
    cell: CellGeometry
    edge_sides: np.ndarray = None
    periodic_pairs: np.ndarray = None
    hole_centers: np.ndarray = None
    hole_scale: float = 1.0
    macro: Optional[MacroGeometry] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)
        set_("nodes", _frozen(self.nodes, float).reshape(-1, 2))
        set_("triangles", _frozen(self.triangles, np.int64).reshape(-1, 3))
        set_("boundary_edges", _frozen(self.boundary_edges, np.int64).reshape(-1, 2))
        set_("edge_tags", _frozen(self.edge_tags, np.int64).reshape(-1))
        sides = self.edge_sides if self.edge_sides is not None else -np.ones(len(self.edge_tags))
        set_("edge_sides", _frozen(sides, np.int64).reshape(-1))
        pairs = self.periodic_pairs if self.periodic_pairs is not None else np.zeros((0, 3))
        set_("periodic_pairs", _frozen(pairs, np.int64).reshape(-1, 3))
        centers = self.hole_centers if self.hole_centers is not None else np.zeros((0, 2))
        set_("hole_centers", _frozen(centers, float).reshape(-1, 2))

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def area(self) -> float:
        return float(self.signed_areas().sum())

    def centroids(self) -> np.ndarray:
        return self.nodes[self.triangles].mean(axis=1)

    def edges(self) -> np.ndarray:
        """Unique undirected edges, sorted lexicographically."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        return np.unique(np.sort(e, axis=1), axis=0)

    def edge_mask(self, tag: Tag) -> np.ndarray:
        return self.edge_tags == int(tag)

    def tagged_edges(self, tag: Tag) -> np.ndarray:
        return self.boundary_edges[self.edge_mask(tag)]

    def edge_lengths(self, edges=None) -> np.ndarray:
        e = self.boundary_edges if edges is None else edges
        d = self.nodes[e[:, 1]] - self.nodes[e[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    def boundary_nodes(self, tag: Optional[Tag] = None) -> np.ndarray:
        e = self.boundary_edges if tag is None else self.tagged_edges(tag)
        return np.unique(e)

    def hole_loops(self) -> int:
        return _count_components(self.tagged_edges(Tag.HOLE), self.n_nodes)

    def euler_characteristic(self) -> int:
        return self.n_nodes - len(self.edges()) + self.n_triangles

    def min_angle(self) -> float:
        """Smallest interior angle over all triangles, in degrees."""
        p = self.nodes[self.triangles]
        angles = []
        for i in range(3):
            a = p[:, (i + 1) % 3] - p[:, i]
            b = p[:, (i + 2) % 3] - p[:, i]
            cos = (a * b).sum(1) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
            angles.append(np.degrees(np.arccos(np.clip(cos, -1.0, 1.0))))
        return float(np.min(angles))

    def check(self) -> None:
        """Assert the structural mesh invariants; raises MeshError."""
        if np.any(self.signed_areas() <= 0.0):
            raise MeshError("mesh has non-positive triangle areas")
        t = self.triangles
        e = np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
        _, counts = np.unique(e, axis=0, return_counts=True)
        if np.any(counts > 2):
            raise MeshError("edge shared by more than two triangles")
        if np.count_nonzero(counts == 1) != len(self.boundary_edges):
            raise MeshError("boundary edge list inconsistent with triangles")
        if not self.cell.is_empty and len(self.hole_centers):
            _, which = cKDTree(self.hole_centers).query(self.nodes)
            y = (self.nodes - self.hole_centers[which]) / self.hole_scale
            # nodes on the boundary may sit a rounding error inside
            shrink = 1.0 - 1e-9
            if np.any(self.cell.contains(y / shrink)):
                raise MeshError("node strictly inside an inclusion")
        for master, slave, axis in self.periodic_pairs:
            pm, ps = self.nodes[master], self.nodes[slave]
            if abs(pm[1 - axis] - ps[1 - axis]) > 1e-10 or abs(ps[axis] - pm[axis] - 1.0) > 1e-12:
                raise MeshError("periodic pair coordinates do not match")


def _count_components(edges: np.ndarray, n: int) -> int:
    if len(edges) == 0:
        return 0
    g = coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(n, n))
    _, labels = connected_components(g, directed=False)
    return len(np.unique(labels[np.unique(edges)]))


def _boundary_edges(triangles: np.ndarray) -> np.ndarray:
    """Edges used by a single triangle, in triangle orientation, sorted."""
    t = triangles
    directed = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    key = np.sort(directed, axis=1)
    _, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    inv = inv.reshape(-1)
    b = directed[counts[inv] == 1]
    order = np.lexsort((b[:, 1], b[:, 0]))
    return b[order]


def _structured(xs: np.ndarray, ys: np.ndarray):
    """Tensor grid on xs x ys, each square cut along its (/) diagonal."""
    nx, ny = len(xs) - 1, len(ys) - 1
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
    a = (j * (nx + 1) + i).ravel()
    b, c, d = a + 1, a + nx + 2, a + nx + 1
    tris = np.empty((2 * len(a), 3), dtype=np.int64)
    tris[0::2] = np.column_stack([a, b, c])
    tris[1::2] = np.column_stack([a, c, d])
    return nodes, tris


def _divisions(h_cell: float) -> int:
    """Even number of segments per cell face for a cell-relative size h."""
    return max(4, 2 * math.ceil(1.0 / (2.0 * h_cell) - 1e-9))


def _check_resolution(cell: CellGeometry, h_cell: float) -> None:
    if h_cell <= 0:
        raise MeshError(f"mesh size must be positive, got {h_cell}")
    if not cell.is_empty and h_cell > cell.gap / 2.0 * (1 + 1e-12):
        raise MeshError(
            f"h = {h_cell:g} cannot resolve the gap {cell.gap:g} between the inclusion "
            "and the cell boundary with two element layers"
        )


def _radial_params(cell: CellGeometry, m: int) -> np.ndarray:
    inc = cell.inclusion
    d_in = inc.radius * (math.pi / 2) / m if isinstance(inc, Disk) else 2 * inc.half_width / m
    d_out = 1.0 / m
    n_layers = max(2, math.ceil(cell.gap / (0.5 * (d_in + d_out))))
    d = d_in + (d_out - d_in) * (np.arange(n_layers) + 0.5) / n_layers
    t = np.concatenate([[0.0], np.cumsum(d) / d.sum()])
    t[-1] = 1.0
    return t


def _sector_nodes(cell: CellGeometry, m: int, t: np.ndarray) -> np.ndarray:
    """Nodes of the right sector, shape (m + 1, L + 1, 2), mirror-exact in y."""
    half = m // 2
    j = np.arange(half + 1)
    outer = np.column_stack([np.full(half + 1, 0.5), j / m])
    inc = cell.inclusion
    if isinstance(inc, Disk):
        phi = math.pi * j / (2 * m)
        inner = inc.radius * np.column_stack([np.cos(phi), np.sin(phi)])
        inner[0, 1] = 0.0
        inner[-1] = inc.radius * math.sqrt(0.5)
    elif isinstance(inc, Square):
        w = inc.half_width
        inner = np.column_stack([np.full(half + 1, w), w * 2.0 * j / m])
        inner[-1] = w
    else:
        raise MeshError("O-grid needs an inclusion")
    upper = inner[:, None, :] + t[None, :, None] * (outer - inner)[:, None, :]
    lower = upper[:0:-1].copy()
    lower[..., 1] = -lower[..., 1]
    return np.concatenate([lower, upper], axis=0)


def _ogrid(cell: CellGeometry, m: int):
    """O-grid of Y* with m segments per face; returns nodes, triangles."""
    t = _radial_params(cell, m)
    n_layers = len(t) - 1
    S = _sector_nodes(cell, m, t)
    half = m // 2

    # diagonal choice per quad of the sector: shorter diagonal on the upper
    # half, mirrored choice on the lower half
    use_a = np.zeros((m, n_layers), dtype=bool)
    for s in range(half, m):
        for l in range(n_layers):
            da = np.sum((S[s, l] - S[s + 1, l + 1]) ** 2)
            db = np.sum((S[s + 1, l] - S[s, l + 1]) ** 2)
            use_a[s, l] = da <= db
    use_a[:half] = ~use_a[half:][::-1]

    ring = 4 * m
    nodes = np.empty((n_layers + 1, ring, 2))
    sec = S[:m]
    for q in range(4):
        nodes[:, q * m:(q + 1) * m, :] = sec.transpose(1, 0, 2)
        sec = np.stack([-sec[..., 1], sec[..., 0]], axis=-1)
    nodes = nodes.reshape(-1, 2)

    g = np.arange(ring)
    l = np.arange(n_layers)
    G, Lg = np.meshgrid(g, l, indexing="ij")
    p00 = Lg * ring + G
    p10 = Lg * ring + (G + 1) % ring
    p01 = (Lg + 1) * ring + G
    p11 = (Lg + 1) * ring + (G + 1) % ring
    diag_a = np.tile(use_a, (4, 1))
    tris = []
    for a, b, c, d, flag in zip(p00.ravel(), p10.ravel(), p11.ravel(), p01.ravel(), diag_a.ravel()):
        if flag:
            tris.append((a, c, b))
            tris.append((a, d, c))
        else:
            tris.append((a, d, b))
            tris.append((b, d, c))
    return nodes, np.array(tris, dtype=np.int64)


def _periodic_pairs(nodes: np.ndarray) -> np.ndarray:
    pairs = []
    for axis in (0, 1):
        lo = np.flatnonzero(np.abs(nodes[:, axis] + 0.5) < 1e-12)
        hi = np.flatnonzero(np.abs(nodes[:, axis] - 0.5) < 1e-12)
        if len(lo) != len(hi):
            raise MeshError("opposite cell faces carry different node counts")
        lo = lo[np.argsort(nodes[lo, 1 - axis], kind="stable")]
        hi = hi[np.argsort(nodes[hi, 1 - axis], kind="stable")]
        if np.any(np.abs(nodes[lo, 1 - axis] - nodes[hi, 1 - axis]) > 1e-10):
            raise MeshError("opposite cell faces have non-matching node traces")
        pairs.extend((int(a), int(b), axis) for a, b in zip(lo, hi))
    return np.array(pairs, dtype=np.int64).reshape(-1, 3)


def _cell_tags(nodes: np.ndarray, bedges: np.ndarray) -> np.ndarray:
    p, q = nodes[bedges[:, 0]], nodes[bedges[:, 1]]
    on_x = (np.abs(np.abs(p[:, 0]) - 0.5) < 1e-12) & (np.abs(q[:, 0] - p[:, 0]) < 1e-12)
    on_y = (np.abs(np.abs(p[:, 1]) - 0.5) < 1e-12) & (np.abs(q[:, 1] - p[:, 1]) < 1e-12)
    tags = np.full(len(bedges), int(Tag.HOLE))
    tags[on_x] = Tag.PERIODIC_X
    tags[on_y] = Tag.PERIODIC_Y
    return tags


def generate_cell_mesh(cell: CellGeometry, h: float) -> Mesh:
    """Mesh of Y* = Y minus T with complete periodic pairing of the outer faces."""
    _check_resolution(cell, h)
    m = _divisions(h)
    if cell.is_empty:
        xs = -0.5 + np.arange(m + 1) / m
        xs[-1] = 0.5
        nodes, tris = _structured(xs, xs)
        centers = np.zeros((0, 2))
    else:
        nodes, tris = _ogrid(cell, m)
        centers = np.zeros((1, 2))
    bedges = _boundary_edges(tris)
    mesh = Mesh(
        nodes=nodes,
        triangles=tris,
        boundary_edges=bedges,
        edge_tags=_cell_tags(nodes, bedges),
        periodic_pairs=_periodic_pairs(nodes),
        h=1.0 / m,
        kind="cell",
        cell=cell,
        hole_centers=centers,
        hole_scale=1.0,
        meta={"divisions": m},
    )
    mesh.check()
    return mesh


def _macro_tags(macro: MacroGeometry, nodes: np.ndarray, bedges: np.ndarray):
    tol = 1e-10 * macro.scale
    p, q = nodes[bedges[:, 0]], nodes[bedges[:, 1]]
    bounds = {
        "left": (0, macro.x_min),
        "right": (0, macro.x_max),
        "bottom": (1, macro.y_min),
        "top": (1, macro.y_max),
    }
    sides = np.full(len(bedges), -1)
    for idx, name in enumerate(SIDES):
        axis, val = bounds[name]
        on = (np.abs(p[:, axis] - val) < tol) & (np.abs(q[:, axis] - val) < tol)
        sides[on & (sides < 0)] = idx
    tags = np.full(len(bedges), int(Tag.HOLE))
    for idx, name in enumerate(SIDES):
        tags[sides == idx] = Tag.GAMMA1 if name in macro.gamma1 else Tag.GAMMA2
    return tags, sides


def _merge_nodes(nodes: np.ndarray, tris: np.ndarray, tol: float):
    """Identify coincident nodes; representative is the lowest index."""
    pairs = cKDTree(nodes).query_pairs(tol, output_type="ndarray")
    n = len(nodes)
    if len(pairs):
        g = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
        _, labels = connected_components(g, directed=False)
        rep = np.full(labels.max() + 1, n)
        np.minimum.at(rep, labels, np.arange(n))
        rep_of = rep[labels]
    else:
        rep_of = np.arange(n)
    keep = np.unique(rep_of)
    new_index = np.full(n, -1)
    new_index[keep] = np.arange(len(keep))
    return nodes[keep], new_index[rep_of][tris]


def structured_mesh(macro: MacroGeometry, h: float) -> Mesh:
    """Hole-free mesh of the macro rectangle."""
    if h <= 0:
        raise MeshError(f"mesh size must be positive, got {h}")
    nx = max(1, math.ceil((macro.x_max - macro.x_min) / h - 1e-9))
    ny = max(1, math.ceil((macro.y_max - macro.y_min) / h - 1e-9))
    xs = np.linspace(macro.x_min, macro.x_max, nx + 1)
    ys = np.linspace(macro.y_min, macro.y_max, ny + 1)
    nodes, tris = _structured(xs, ys)
    bedges = _boundary_edges(tris)
    tags, sides = _macro_tags(macro, nodes, bedges)
    mesh = Mesh(
        nodes=nodes,
        triangles=tris,
        boundary_edges=bedges,
        edge_tags=tags,
        edge_sides=sides,
        h=h,
        kind="macro",
        cell=CellGeometry(inclusion=Empty()),
        macro=macro,
    )
    mesh.check()
    return mesh


def _breakpoints(lo: float, hi: float, cell_lo: list, eps: float, scale: float):
    """Sorted interval ends along one axis and the lattice index owning each interval."""
    pts = [lo, hi]
    for k in cell_lo:
        pts += [eps * (k - 0.5), eps * (k + 0.5)]
    pts = np.unique(np.array(pts))
    merged = [pts[0]]
    for p in pts[1:]:
        if p - merged[-1] > 1e-12 * scale:
            merged.append(p)
    owner = []
    kset = set(cell_lo)
    for a, b in zip(merged[:-1], merged[1:]):
        k = round(0.5 * (a + b) / eps)
        is_cell = k in kset and abs(a - eps * (k - 0.5)) < 1e-12 * scale and abs(b - eps * (k + 0.5)) < 1e-12 * scale
        owner.append(k if is_cell else None)
    return np.array(merged), owner


def generate_macro_mesh(
    macro: MacroGeometry, cell: CellGeometry, eps: float, h: Optional[float] = None
) -> Mesh:
    """Mesh of the perforated domain Omega minus T^eps."""
    if not 0.0 < eps < 1.0:
        raise MeshError(f"eps must lie in (0, 1), got {eps}")
    if h is None:
        h = eps * H_CELL_RATIO
    if cell.is_empty:
        return structured_mesh(macro, h)
    if h > eps * H_CELL_RATIO * (1 + 1e-9):
        raise MeshError(f"h = {h:g} under-resolves holes of size eps = {eps:g}; need h <= eps/8")
    _check_resolution(cell, h / eps)
    lattice = lattice_cells(macro, cell, eps)
    scale = macro.scale
    tol = 1e-12 * scale
    for k1, k2 in lattice.cells:
        if (
            eps * (k1 - 0.5) < macro.x_min - tol
            or eps * (k1 + 0.5) > macro.x_max + tol
            or eps * (k2 - 0.5) < macro.y_min - tol
            or eps * (k2 + 0.5) > macro.y_max + tol
        ):
            raise MeshError(f"lattice cell {(k1, k2)} straddles the domain boundary; unsupported")

    m = _divisions(h / eps)
    t_nodes, t_tris = _ogrid(cell, m)
    k1s = sorted({k[0] for k in lattice.cells})
    k2s = sorted({k[1] for k in lattice.cells})
    xb, xown = _breakpoints(macro.x_min, macro.x_max, k1s, eps, scale)
    yb, yown = _breakpoints(macro.y_min, macro.y_max, k2s, eps, scale)
    cells = set(lattice.cells)

    def divisions(a, b, owner):
        return m if owner is not None else max(1, math.ceil((b - a) / h - 1e-9))

    all_nodes, all_tris, offset = [], [], 0
    for iy in range(len(yb) - 1):
        for ix in range(len(xb) - 1):
            k = (xown[ix], yown[iy])
            if k in cells:
                nodes = eps * (t_nodes + np.array(k, dtype=float))
                tris = t_tris
            else:
                nx = divisions(xb[ix], xb[ix + 1], xown[ix])
                ny = divisions(yb[iy], yb[iy + 1], yown[iy])
                nodes, tris = _structured(
                    np.linspace(xb[ix], xb[ix + 1], nx + 1), np.linspace(yb[iy], yb[iy + 1], ny + 1)
                )
            all_nodes.append(nodes)
            all_tris.append(tris + offset)
            offset += len(nodes)
    nodes, tris = _merge_nodes(np.concatenate(all_nodes), np.concatenate(all_tris), MERGE_TOL * scale)
    bedges = _boundary_edges(tris)
    tags, sides = _macro_tags(macro, nodes, bedges)
    mesh = Mesh(
        nodes=nodes,
        triangles=tris,
        boundary_edges=bedges,
        edge_tags=tags,
        edge_sides=sides,
        h=h,
        kind="macro",
        cell=cell,
        hole_centers=lattice.centers,
        hole_scale=eps,
        macro=macro,
        meta={"eps": eps, "divisions": m, "lattice": lattice},
    )
    mesh.check()
    return mesh


def refine(mesh: Mesh) -> Mesh:
    """Uniform red refinement; new hole-boundary nodes are projected onto dT."""
    edges = mesh.edges()
    n = mesh.n_nodes
    mid = 0.5 * (mesh.nodes[edges[:, 0]] + mesh.nodes[edges[:, 1]])
    key = edges[:, 0] * n + edges[:, 1]

    def mid_index(a, b):
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        return n + np.searchsorted(key, lo * n + hi)

    hole = mesh.tagged_edges(Tag.HOLE)
    if len(hole) and not mesh.cell.is_empty:
        hm = mid_index(hole[:, 0], hole[:, 1]) - n
        p = mid[hm]
        _, which = cKDTree(mesh.hole_centers).query(p)
        c = mesh.hole_centers[which]
        mid[hm] = c + mesh.hole_scale * mesh.cell.project((p - c) / mesh.hole_scale)

    t = mesh.triangles
    a, b, c = t[:, 0], t[:, 1], t[:, 2]
    ab, bc, ca = mid_index(a, b), mid_index(b, c), mid_index(c, a)
    tris = np.stack(
        [np.column_stack(v) for v in ((a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca))], axis=1
    ).reshape(-1, 3)

    be = mesh.boundary_edges
    bm = mid_index(be[:, 0], be[:, 1])
    new_be = np.stack([np.column_stack([be[:, 0], bm]), np.column_stack([bm, be[:, 1]])], axis=1).reshape(-1, 2)
    nodes = np.concatenate([mesh.nodes, mid])
    out = Mesh(
        nodes=nodes,
        triangles=tris,
        boundary_edges=new_be,
        edge_tags=np.repeat(mesh.edge_tags, 2),
        edge_sides=np.repeat(mesh.edge_sides, 2),
        periodic_pairs=_periodic_pairs(nodes) if mesh.kind == "cell" else None,
        h=mesh.h / 2.0,
        kind=mesh.kind,
        cell=mesh.cell,
        hole_centers=mesh.hole_centers,
        hole_scale=mesh.hole_scale,
        macro=mesh.macro,
        meta={**mesh.meta, "refinements": mesh.meta.get("refinements", 0) + 1},
    )
    out.check()
    return out
