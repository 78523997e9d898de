"""Analytic geometry of the unit cell, the inclusion and the perforated domain.

The cell is always Y = (-1/2, 1/2)^2 with the inclusion T centred at the
origin.  The macro domain is an axis-aligned rectangle whose edges are split
into a clamped part (Gamma_1) and a traction part (Gamma_2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

CONTAINMENT_MARGIN = 1e-12
SIDES = ("left", "right", "bottom", "top")


@dataclass(frozen=True)
class Disk:
    radius: float = 0.25

    def __post_init__(self):
        if not 0.0 < self.radius < 0.5:
            raise ValueError(f"disk radius must lie in (0, 1/2), got {self.radius}")


@dataclass(frozen=True)
class Square:
    half_width: float = 0.25

    def __post_init__(self):
        if not 0.0 < self.half_width < 0.5:
            raise ValueError(f"square half_width must lie in (0, 1/2), got {self.half_width}")


@dataclass(frozen=True)
class Empty:
    """No inclusion.  Test-only: exercises the q = int_Y a identity."""


Inclusion = Union[Disk, Square, Empty]


@dataclass(frozen=True)
class CellGeometry:
    inclusion: Inclusion = field(default_factory=Disk)

    @property
    def is_empty(self) -> bool:
        return isinstance(self.inclusion, Empty)

    @property
    def extent(self) -> float:
        """Half-size of the inclusion's bounding box (0 for Empty)."""
        inc = self.inclusion
        if isinstance(inc, Disk):
            return inc.radius
        if isinstance(inc, Square):
            return inc.half_width
        return 0.0

    @property
    def gap(self) -> float:
        """Smallest distance between the inclusion and the cell boundary."""
        return 0.5 - self.extent

    def contains(self, y) -> np.ndarray:
        """Strict interior test for points already in cell coordinates."""
        y = np.asarray(y, dtype=float)
        inc = self.inclusion
        if isinstance(inc, Disk):
            return np.hypot(y[..., 0], y[..., 1]) < inc.radius
        if isinstance(inc, Square):
            return np.maximum(np.abs(y[..., 0]), np.abs(y[..., 1])) < inc.half_width
        return np.zeros(y.shape[:-1], dtype=bool)

    def project(self, y) -> np.ndarray:
        """Closest point of the inclusion boundary (cell coordinates)."""
        y = np.array(y, dtype=float)
        inc = self.inclusion
        if isinstance(inc, Disk):
            rho = np.hypot(y[..., 0], y[..., 1])[..., None]
            return inc.radius * y / rho
        if isinstance(inc, Square):
            w = inc.half_width
            y = np.clip(y, -w, w)
            ax = np.abs(y)
            on_x = ax[..., 0] >= ax[..., 1]
            y[..., 0] = np.where(on_x, np.copysign(w, y[..., 0]), y[..., 0])
            y[..., 1] = np.where(on_x, y[..., 1], np.copysign(w, y[..., 1]))
            return y
        raise ValueError("Empty inclusion has no boundary")

    def arc_angle(self, y) -> np.ndarray:
        """Arc parameter used by boundary densities: polar angle around the centre."""
        y = np.asarray(y, dtype=float)
        return np.arctan2(y[..., 1], y[..., 0])


@dataclass(frozen=True)
class MacroGeometry:
    x_min: float = 0.0
    x_max: float = 1.0
    y_min: float = 0.0
    y_max: float = 1.0
    gamma1: tuple = ("left",)

    def __post_init__(self):
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ValueError("macro domain must have positive extent")
        g1 = tuple(self.gamma1)
        if not g1:
            raise ValueError("Gamma_1 must contain at least one edge")
        bad = [s for s in g1 if s not in SIDES]
        if bad:
            raise ValueError(f"unknown sides in gamma1: {bad}")
        object.__setattr__(self, "gamma1", tuple(s for s in SIDES if s in g1))

    @property
    def gamma2(self) -> tuple:
        return tuple(s for s in SIDES if s not in self.gamma1)

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    @property
    def scale(self) -> float:
        return max(self.x_max - self.x_min, self.y_max - self.y_min)

    def side_of(self, p, tol: float = 1e-10):
        """Names of the rectangle sides a point lies on."""
        x, y = float(p[0]), float(p[1])
        tol = tol * self.scale
        out = []
        if abs(x - self.x_min) <= tol:
            out.append("left")
        if abs(x - self.x_max) <= tol:
            out.append("right")
        if abs(y - self.y_min) <= tol:
            out.append("bottom")
        if abs(y - self.y_max) <= tol:
            out.append("top")
        return out


@dataclass(frozen=True)
class LatticeIndexSet:
    eps: float
    cells: tuple

    def __len__(self):
        return len(self.cells)

    @property
    def centers(self) -> np.ndarray:
        return self.eps * np.array(self.cells, dtype=float).reshape(-1, 2)


def lattice_cells(macro: MacroGeometry, cell: CellGeometry, eps: float) -> LatticeIndexSet:
    """All k in Z^2 with eps*(k + T) strictly inside the open macro domain."""
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if cell.is_empty:
        raise ValueError("lattice_cells needs a nonempty inclusion")
    half = eps * cell.extent
    m = CONTAINMENT_MARGIN
    kx = range(math.floor(macro.x_min / eps) - 1, math.ceil(macro.x_max / eps) + 2)
    ky = range(math.floor(macro.y_min / eps) - 1, math.ceil(macro.y_max / eps) + 2)
    cells = []
    for k2 in ky:
        cy = eps * k2
        if not (cy - half > macro.y_min + m and cy + half < macro.y_max - m):
            continue
        for k1 in kx:
            cx = eps * k1
            if cx - half > macro.x_min + m and cx + half < macro.x_max - m:
                cells.append((k1, k2))
    return LatticeIndexSet(eps=eps, cells=tuple(cells))


def cell_measures(cell: CellGeometry) -> tuple[float, float, float]:
    """(|T|, |Y*|, |dT|)."""
    inc = cell.inclusion
    if isinstance(inc, Disk):
        vol, perim = math.pi * inc.radius**2, 2.0 * math.pi * inc.radius
    elif isinstance(inc, Square):
        vol, perim = 4.0 * inc.half_width**2, 8.0 * inc.half_width
    else:
        vol, perim = 0.0, 0.0
    return vol, 1.0 - vol, perim


def periodic_wrap(x) -> np.ndarray:
    """Representative of x modulo Z^2 in [-1/2, 1/2)^2."""
    x = np.asarray(x, dtype=float)
    y = x - np.floor(x + 0.5)
    # x + 0.5 can round up to an integer for x just below a half-integer
    y = np.where(y >= 0.5, y - 1.0, y)
    return np.where(y < -0.5, y + 1.0, y)


def inside_inclusion(cell: CellGeometry, y) -> np.ndarray:
    """Characteristic function of the periodic inclusion set, evaluated at any x."""
    return cell.contains(periodic_wrap(y))


def surface_measure_deficit(macro: MacroGeometry, cell: CellGeometry, eps: float) -> float:
    """| eps * |dT^eps| - |Omega| * |dT| | from closed-form measures."""
    count = len(lattice_cells(macro, cell, eps))
    perim = cell_measures(cell)[2]
    return abs(eps**2 * count * perim - macro.area * perim)
