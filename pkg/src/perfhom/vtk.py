"""Legacy ASCII VTK writer for triangle meshes with point and cell fields."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from .mesh import Mesh


def _field_lines(name: str, values: np.ndarray) -> list:
    v = np.asarray(values, dtype=float)
    if v.ndim == 1:
        return [f"SCALARS {name} double 1", "LOOKUP_TABLE default"] + [repr(float(a)) for a in v]
    if v.ndim == 2 and v.shape[1] == 2:
        v = np.column_stack([v, np.zeros(len(v))])
    if v.ndim == 2 and v.shape[1] == 3:
        return [f"VECTORS {name} double"] + [" ".join(repr(float(a)) for a in row) for row in v]
    if v.ndim == 3 and v.shape[1:] == (2, 2):
        t = np.zeros((len(v), 3, 3))
        t[:, :2, :2] = v
        out = [f"TENSORS {name} double"]
        for m in t:
            out.extend(" ".join(repr(float(a)) for a in row) for row in m)
        return out
    raise ValueError(f"field {name!r} has unsupported shape {v.shape}")


def write_vtk(
    path,
    mesh: Mesh,
    point_data: Optional[Mapping[str, np.ndarray]] = None,
    cell_data: Optional[Mapping[str, np.ndarray]] = None,
    title: str = "perfhom",
) -> Path:
    """Write mesh and fields; vectors are padded to 3D and 2x2 tensors to 3x3."""
    path = Path(path)
    n, m = mesh.n_nodes, mesh.n_triangles
    lines = ["# vtk DataFile Version 3.0", title.replace("\n", " "), "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines.append(f"POINTS {n} double")
    lines.extend(f"{x!r} {y!r} 0.0" for x, y in mesh.nodes.tolist())
    lines.append(f"CELLS {m} {4 * m}")
    lines.extend(f"3 {a} {b} {c}" for a, b, c in mesh.triangles.tolist())
    lines.append(f"CELL_TYPES {m}")
    lines.extend(["5"] * m)
    for header, count, data in (("POINT_DATA", n, point_data), ("CELL_DATA", m, cell_data)):
        if not data:
            continue
        lines.append(f"{header} {count}")
        for name, values in data.items():
            if len(values) != count:
                raise ValueError(f"{header} field {name!r} has {len(values)} entries, expected {count}")
            lines.extend(_field_lines(name, values))
    path.write_text("\n".join(lines) + "\n")
    return path


def read_vtk_points(path) -> np.ndarray:
    """POINTS block of a file written by write_vtk (for round-trip checks)."""
    tokens = Path(path).read_text().split("\n")
    i = next(k for k, t in enumerate(tokens) if t.startswith("POINTS"))
    n = int(tokens[i].split()[1])
    return np.array([[float(a) for a in t.split()[:2]] for t in tokens[i + 1 : i + 1 + n]])
