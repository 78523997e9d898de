"""Point location on triangle meshes with a uniform bin grid.

Ties (points on shared edges or vertices) go to the lowest triangle index.
"""

from __future__ import annotations

import numpy as np

from .errors import MeshError
from .mesh import Mesh


class PointLocator:
    def __init__(self, mesh: Mesh, tol: float = 1e-10):
        self.mesh = mesh
        self.tol = tol
        p = mesh.nodes[mesh.triangles]
        lo, hi = p.min(axis=1), p.max(axis=1)
        self.origin = mesh.nodes.min(axis=0)
        extent = mesh.nodes.max(axis=0) - self.origin
        size = 2.0 * np.sqrt(extent.prod() / max(mesh.n_triangles, 1))
        self.size = size
        self.shape = np.maximum(1, np.ceil(extent / size).astype(int) + 1)
        i0 = self._bin(lo - tol)
        i1 = self._bin(hi + tol)
        span = (i1 - i0).max(axis=0) + 1
        bins, tris = [], []
        t_idx = np.arange(mesh.n_triangles)
        for dx in range(span[0]):
            for dy in range(span[1]):
                ok = (i0[:, 0] + dx <= i1[:, 0]) & (i0[:, 1] + dy <= i1[:, 1])
                bx, by = i0[ok, 0] + dx, i0[ok, 1] + dy
                bins.append(bx * self.shape[1] + by)
                tris.append(t_idx[ok])
        bins, tris = np.concatenate(bins), np.concatenate(tris)
        order = np.lexsort((tris, bins))
        bins, tris = bins[order], tris[order]
        n_bins = int(self.shape.prod())
        self.start = np.searchsorted(bins, np.arange(n_bins + 1))
        self.tris = tris
        # barycentric transform per triangle: lam_{1,2} = T^{-1} (x - p0)
        d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        self.p0 = p[:, 0]
        self.inv = np.stack(
            [np.stack([d2[:, 1], -d2[:, 0]], -1), np.stack([-d1[:, 1], d1[:, 0]], -1)], axis=1
        ) / det[:, None, None]

    def _bin(self, x):
        i = np.floor((x - self.origin) / self.size).astype(int)
        return np.clip(i, 0, self.shape - 1)

    def _bary(self, tri, x):
        l12 = np.einsum("kij,kj->ki", self.inv[tri], x - self.p0[tri])
        return np.column_stack([1.0 - l12.sum(axis=1), l12])

    def locate(self, x, strict: bool = True):
        """Triangle index and barycentric coordinates for points x (k, 2).

        Unlocated points get index -1; with ``strict`` they raise MeshError.
        """
        x = np.asarray(x, dtype=float).reshape(-1, 2)
        b = self._bin(x)
        flat = b[:, 0] * self.shape[1] + b[:, 1]
        s, e = self.start[flat], self.start[flat + 1]
        counts = e - s
        width = int(counts.max()) if len(counts) else 0
        tri = -np.ones(len(x), dtype=np.int64)
        bary = np.zeros((len(x), 3))
        todo = np.ones(len(x), dtype=bool)
        for c in range(width):
            sel = todo & (c < counts)
            if not sel.any():
                continue
            cand = self.tris[s[sel] + c]
            lam = self._bary(cand, x[sel])
            hit = lam.min(axis=1) >= -self.tol
            idx = np.flatnonzero(sel)[hit]
            tri[idx] = cand[hit]
            bary[idx] = lam[hit]
            todo[idx] = False
        if strict and np.any(tri < 0):
            bad = x[tri < 0][:3]
            raise MeshError(f"point location failed for {int((tri < 0).sum())} points, e.g. {bad.tolist()}")
        return tri, bary

    def interpolate(self, values: np.ndarray, x, strict: bool = True) -> np.ndarray:
        """P1 interpolation of nodal values (n, ...) at points x."""
        tri, bary = self.locate(x, strict=strict)
        v = np.asarray(values)[self.mesh.triangles[np.maximum(tri, 0)]]
        out = np.einsum("ka,ka...->k...", bary, v)
        if not strict:
            out[tri < 0] = np.nan
        return out
