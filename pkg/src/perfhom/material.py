"""Elastic tensors, Robin densities and loads, plus Mandel packing.

Symmetric 2x2 tensors are packed as (e11, e22, sqrt(2) e12); a fourth-order
tensor with the minor and major symmetries becomes a symmetric 3x3 matrix
whose quadratic form equals the tensor contraction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

SQRT2 = math.sqrt(2.0)
MANDEL_PAIRS = ((0, 0), (1, 1), (0, 1))
_MANDEL_WEIGHT = np.array([1.0, 1.0, SQRT2])


def to_mandel(e) -> np.ndarray:
    """(..., 2, 2) symmetric tensor -> (..., 3) Mandel vector."""
    e = np.asarray(e, dtype=float)
    return np.stack([e[..., 0, 0], e[..., 1, 1], SQRT2 * 0.5 * (e[..., 0, 1] + e[..., 1, 0])], axis=-1)


def from_mandel(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    s = v[..., 2] / SQRT2
    return np.stack([np.stack([v[..., 0], s], -1), np.stack([s, v[..., 1]], -1)], axis=-2)


def tensor_to_mandel(a) -> np.ndarray:
    """(..., 2, 2, 2, 2) -> (..., 3, 3)."""
    a = np.asarray(a, dtype=float)
    out = np.empty(a.shape[:-4] + (3, 3))
    for p, (i, j) in enumerate(MANDEL_PAIRS):
        for q, (k, h) in enumerate(MANDEL_PAIRS):
            out[..., p, q] = _MANDEL_WEIGHT[p] * _MANDEL_WEIGHT[q] * a[..., i, j, k, h]
    return out


def mandel_to_tensor(m) -> np.ndarray:
    """(..., 3, 3) -> (..., 2, 2, 2, 2), filling the minor-symmetric slots."""
    m = np.asarray(m, dtype=float)
    out = np.empty(m.shape[:-2] + (2, 2, 2, 2))
    index = {(0, 0): 0, (1, 1): 1, (0, 1): 2, (1, 0): 2}
    for (i, j), p in index.items():
        for (k, h), q in index.items():
            out[..., i, j, k, h] = m[..., p, q] / (_MANDEL_WEIGHT[p] * _MANDEL_WEIGHT[q])
    return out


def unit_strain(i: int, j: int) -> np.ndarray:
    """Symmetrised e_i (x) e_j, the constant strain of the affine field y_i e_j."""
    e = np.zeros((2, 2))
    e[i, j] += 0.5
    e[j, i] += 0.5
    return e


@dataclass(frozen=True)
class Isotropic:
    lam: float
    mu: float

    def __post_init__(self):
        if not (self.lam >= 0.0 and self.mu > 0.0):
            raise ValueError(f"isotropic moduli need lambda >= 0 and mu > 0, got {self.lam}, {self.mu}")

    @property
    def alpha(self) -> float:
        return 2.0 * self.mu

    def mandel(self) -> np.ndarray:
        lam, mu = self.lam, self.mu
        return np.array([[lam + 2 * mu, lam, 0.0], [lam, lam + 2 * mu, 0.0], [0.0, 0.0, 2 * mu]])

    def tensor(self) -> np.ndarray:
        return mandel_to_tensor(self.mandel())


@dataclass(frozen=True)
class PiecewiseConstant:
    """Phases on a partition of Y: axis-aligned boxes over a background phase.

    ``boxes`` is a sequence of ``((y1_lo, y1_hi, y2_lo, y2_hi), phase)``; the
    first box containing a point wins.
    """

    background: Isotropic
    boxes: tuple = ()

    def phase_at(self, y: np.ndarray) -> np.ndarray:
        idx = np.zeros(len(y), dtype=np.int64)
        free = np.ones(len(y), dtype=bool)
        for b, ((x0, x1, y0, y1), _) in enumerate(self.boxes, start=1):
            inside = free & (y[:, 0] >= x0) & (y[:, 0] < x1) & (y[:, 1] >= y0) & (y[:, 1] < y1)
            idx[inside] = b
            free &= ~inside
        return idx

    @property
    def phases(self) -> list:
        return [self.background] + [p for _, p in self.boxes]


@dataclass(frozen=True)
class TrigTheta:
    """theta(phi) = c0 + sum_n (a_n cos(n phi) + b_n sin(n phi)) in the arc angle phi."""

    c0: float = 1.0
    cos: tuple = ()
    sin: tuple = ()

    def __call__(self, phi) -> np.ndarray:
        phi = np.asarray(phi, dtype=float)
        out = np.full(phi.shape, float(self.c0))
        for n, a in enumerate(self.cos, start=1):
            out += a * np.cos(n * phi)
        for n, b in enumerate(self.sin, start=1):
            out += b * np.sin(n * phi)
        return out

    def scaled(self, s: float) -> "TrigTheta":
        return TrigTheta(s * self.c0, tuple(s * a for a in self.cos), tuple(s * b for b in self.sin))


@dataclass(frozen=True)
class MaterialSpec:
    """Elastic tensor a(y), coercivity alpha, Robin density theta and its bound alpha0."""

    a: object = field(default_factory=lambda: Isotropic(1.0, 1.0))
    theta: TrigTheta = field(default_factory=TrigTheta)
    alpha: Optional[float] = None
    alpha0: Optional[float] = None

    def __post_init__(self):
        phases = self.a.phases if isinstance(self.a, PiecewiseConstant) else [self.a]
        mats = [p.mandel() for p in phases]
        for m in mats:
            t = mandel_to_tensor(m)
            if not (np.allclose(t, t.transpose(1, 0, 3, 2)) and np.allclose(t, t.transpose(2, 3, 0, 1))):
                raise ValueError("elastic tensor lacks the a_ijkh = a_jihk = a_khij symmetries")
        lam_min = min(float(np.linalg.eigvalsh(m)[0]) for m in mats)
        alpha = lam_min if self.alpha is None else self.alpha
        if not 0.0 < alpha <= lam_min * (1 + 1e-12):
            raise ValueError(f"coercivity constant {alpha} not satisfied (smallest Mandel eigenvalue {lam_min})")
        object.__setattr__(self, "alpha", alpha)
        if self.alpha0 is None:
            sample = self.theta(np.linspace(-math.pi, math.pi, 721))
            object.__setattr__(self, "alpha0", float(sample.min()))
        if not self.alpha0 > 0.0:
            raise ValueError("theta must be bounded below by a positive alpha0")

    def mandel_at(self, y: np.ndarray) -> np.ndarray:
        """Mandel matrices (n, 3, 3) at cell points y (n, 2)."""
        y = np.asarray(y, dtype=float).reshape(-1, 2)
        if isinstance(self.a, PiecewiseConstant):
            table = np.stack([p.mandel() for p in self.a.phases])
            return table[self.a.phase_at(y)]
        return np.broadcast_to(self.a.mandel(), (len(y), 3, 3))

    def theta_at(self, phi: np.ndarray) -> np.ndarray:
        """Robin density at arc angles; checked against alpha0."""
        val = self.theta(phi)
        if np.any(val < self.alpha0 - 1e-12):
            raise ValueError("theta drops below alpha0 at a surface quadrature point")
        return val

    def with_theta_scaled(self, s: float) -> "MaterialSpec":
        return MaterialSpec(a=self.a, theta=self.theta.scaled(s), alpha=self.alpha)


@dataclass(frozen=True)
class TrigField:
    """Y-periodic vector field c + sum_k (A_k cos(2 pi k.y) + B_k sin(2 pi k.y))."""

    constant: tuple = (0.0, 0.0)
    terms: tuple = ()  # ((k1, k2), (A1, A2), (B1, B2))

    def __call__(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float).reshape(-1, 2)
        out = np.tile(np.asarray(self.constant, dtype=float), (len(y), 1))
        for k, A, B in self.terms:
            arg = 2 * math.pi * (y @ np.asarray(k, dtype=float))
            out += np.cos(arg)[:, None] * np.asarray(A, dtype=float) + np.sin(arg)[:, None] * np.asarray(B, dtype=float)
        return out

    @property
    def is_constant(self) -> bool:
        return not self.terms


@dataclass(frozen=True)
class LoadSpec:
    """Volume force f(y) (Y-periodic) and constant tractions per Gamma_2 side."""

    f: TrigField = field(default_factory=lambda: TrigField((0.0, -1.0)))
    traction: dict = field(default_factory=dict)

    def __post_init__(self):
        for side, t in self.traction.items():
            if not np.all(np.isfinite(t)):
                raise ValueError(f"traction on {side} is not finite")

    def traction_on(self, side: str) -> np.ndarray:
        return np.asarray(self.traction.get(side, (0.0, 0.0)), dtype=float)


def constant_load(f: Sequence[float] = (0.0, -1.0), traction: Optional[dict] = None) -> LoadSpec:
    return LoadSpec(f=TrigField(tuple(f)), traction=dict(traction or {}))
