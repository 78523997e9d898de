"""Experiment orchestration: correctors, effective model, macro solve, fine
sweep, error norms, corrector reconstruction and two-scale pairing gaps.

Config files are flat ``section.key = value`` lines with ``#`` comments;
numbers may be written as fractions (``1/16``) and lists are comma
separated.  See README.md for the full grammar.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy.spatial import cKDTree

from .corrector import CorrectorSet, evaluate_many, solve_correctors
from .effective import EffectiveModel, build_effective_model
from .errors import ConfigError
from .fem import h1_seminorm, l2_norm, surface_quadrature, volume_quadrature
from .fine import FineSolution, solve_fine
from .geometry import SIDES, CellGeometry, Disk, Empty, MacroGeometry, Square, periodic_wrap
from .locate import PointLocator
from .macro import MacroSolution, solve_homogenized
from .material import Isotropic, LoadSpec, MaterialSpec, TrigField, TrigTheta, mandel_to_tensor
from .mesh import Mesh, Tag, generate_cell_mesh, generate_macro_mesh, refine, structured_mesh

APRIORI_FACTOR = 1.05

# ---------------------------------------------------------------- config


def _number(text: str, key: str) -> float:
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"{key}: cannot read {text.strip()!r} as a number") from None


def _numbers(text: str, key: str, count: Optional[int] = None) -> tuple:
    parts = [p for p in text.split(",") if p.strip()]
    vals = tuple(_number(p, key) for p in parts)
    if count is not None and len(vals) != count:
        raise ConfigError(f"{key}: expected {count} values, got {len(vals)}")
    return vals


def _flag(text: str, key: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"{key}: expected true/false, got {text.strip()!r}")


def _integer(text: str, key: str) -> int:
    v = _number(text, key)
    if v != int(v):
        raise ConfigError(f"{key}: expected an integer, got {text.strip()!r}")
    return int(v)


KEYS = {
    "domain.x_min", "domain.x_max", "domain.y_min", "domain.y_max", "domain.gamma1",
    "cell.shape", "cell.size",
    "material.lambda", "material.mu",
    "theta.c0", "theta.cos", "theta.sin",
    "load.f", "load.f_wave",
    "sweep.eps",
    "mesh.cell_h", "mesh.cell_refine", "mesh.macro_h",
    "solver.tol",
    "run.out", "run.workers",
    "twoscale.component",
    "flags.symmetric_mesh", "flags.oscillating_f",
}  # fmt: skip


def parse_pairs(text: str) -> dict:
    """Raw ``key -> value`` strings; rejects unknown or repeated keys."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected 'section.key = value', got {raw.strip()!r}")
        known = key in KEYS or (key.startswith("load.traction.") and key.split(".", 2)[2] in SIDES)
        if not known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: key {key!r} given twice")
        out[key] = value.strip()
    return out


@dataclass(frozen=True)
class RunConfig:
    macro: MacroGeometry = field(default_factory=MacroGeometry)
    cell: CellGeometry = field(default_factory=CellGeometry)
    mat: MaterialSpec = field(default_factory=MaterialSpec)
    load: LoadSpec = field(default_factory=LoadSpec)
    eps_list: tuple = (0.25, 0.125, 0.0625)
    cell_h: float = 0.125
    cell_refine: int = 2
    macro_h: float = 1 / 64
    tol: float = 1e-10
    out_dir: str = "out"
    workers: int = 1
    component: int = 1
    symmetric_mesh: bool = True
    oscillating_f: bool = False

    def __post_init__(self):
        eps = tuple(float(e) for e in self.eps_list)
        object.__setattr__(self, "eps_list", eps)
        if not eps:
            raise ConfigError("sweep.eps is empty")
        if any(not 0.0 < e < 1.0 for e in eps):
            raise ConfigError(f"sweep.eps values must lie in (0, 1), got {eps}")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ConfigError(f"sweep.eps must be strictly decreasing, got {eps}")
        if not (self.cell_h > 0 and self.macro_h > 0 and self.tol > 0):
            raise ConfigError("mesh.cell_h, mesh.macro_h and solver.tol must be positive")
        if self.cell_refine < 0 or self.workers < 1:
            raise ConfigError("mesh.cell_refine must be >= 0 and run.workers >= 1")
        if self.component not in (0, 1):
            raise ConfigError("twoscale.component must be 0 or 1")
        if not self.symmetric_mesh:
            raise ConfigError("flags.symmetric_mesh = false is not supported: cell meshes are always D4-symmetric")
        if self.oscillating_f == self.load.f.is_constant:
            raise ConfigError(
                "flags.oscillating_f must be true exactly when load.f_wave terms are given"
            )

    @property
    def effective_cell_h(self) -> float:
        return self.cell_h / 2**self.cell_refine

    def to_text(self) -> str:
        """Canonical config text; parse_config(to_text()) reproduces the config."""
        inc = self.cell.inclusion
        shape, size = {Disk: ("disk", getattr(inc, "radius", 0)), Square: ("square", getattr(inc, "half_width", 0))}.get(
            type(inc), ("empty", 0)
        )
        if not isinstance(self.mat.a, Isotropic):
            raise ConfigError("only isotropic materials can be written as config text")
        r = repr
        lines = [
            f"domain.x_min = {r(self.macro.x_min)}",
            f"domain.x_max = {r(self.macro.x_max)}",
            f"domain.y_min = {r(self.macro.y_min)}",
            f"domain.y_max = {r(self.macro.y_max)}",
            f"domain.gamma1 = {', '.join(self.macro.gamma1)}",
            f"cell.shape = {shape}",
        ]
        if shape != "empty":
            lines.append(f"cell.size = {r(float(size))}")
        lines += [
            f"material.lambda = {r(self.mat.a.lam)}",
            f"material.mu = {r(self.mat.a.mu)}",
            f"theta.c0 = {r(self.mat.theta.c0)}",
        ]
        if self.mat.theta.cos:
            lines.append("theta.cos = " + ", ".join(r(float(a)) for a in self.mat.theta.cos))
        if self.mat.theta.sin:
            lines.append("theta.sin = " + ", ".join(r(float(b)) for b in self.mat.theta.sin))
        lines.append("load.f = " + ", ".join(r(float(c)) for c in self.load.f.constant))
        if self.load.f.terms:
            waves = [", ".join(r(float(v)) for v in (*k, *A, *B)) for k, A, B in self.load.f.terms]
            lines.append("load.f_wave = " + " ; ".join(waves))
        for side in SIDES:
            if side in self.load.traction:
                lines.append(f"load.traction.{side} = " + ", ".join(r(float(c)) for c in self.load.traction[side]))
        lines += [
            "sweep.eps = " + ", ".join(r(e) for e in self.eps_list),
            f"mesh.cell_h = {r(self.cell_h)}",
            f"mesh.cell_refine = {self.cell_refine}",
            f"mesh.macro_h = {r(self.macro_h)}",
            f"solver.tol = {r(self.tol)}",
            f"run.out = {self.out_dir}",
            f"run.workers = {self.workers}",
            f"twoscale.component = {self.component}",
            f"flags.symmetric_mesh = {str(self.symmetric_mesh).lower()}",
            f"flags.oscillating_f = {str(self.oscillating_f).lower()}",
        ]
        return "\n".join(lines) + "\n"


def parse_config(text: str) -> RunConfig:
    """Build a RunConfig from config text; missing keys take default values."""
    kv = parse_pairs(text)
    get = kv.get
    try:
        d = MacroGeometry()
        macro = MacroGeometry(
            x_min=_number(get("domain.x_min", repr(d.x_min)), "domain.x_min"),
            x_max=_number(get("domain.x_max", repr(d.x_max)), "domain.x_max"),
            y_min=_number(get("domain.y_min", repr(d.y_min)), "domain.y_min"),
            y_max=_number(get("domain.y_max", repr(d.y_max)), "domain.y_max"),
            gamma1=tuple(s.strip() for s in get("domain.gamma1", "left").split(",") if s.strip()),
        )
        shape = get("cell.shape", "disk").lower()
        if shape == "disk":
            inc = Disk(_number(get("cell.size", "0.25"), "cell.size"))
        elif shape == "square":
            inc = Square(_number(get("cell.size", "0.25"), "cell.size"))
        elif shape == "empty":
            inc = Empty()
        else:
            raise ConfigError(f"cell.shape must be disk, square or empty, got {shape!r}")
        theta = TrigTheta(
            c0=_number(get("theta.c0", "1"), "theta.c0"),
            cos=_numbers(get("theta.cos", ""), "theta.cos"),
            sin=_numbers(get("theta.sin", ""), "theta.sin"),
        )
        mat = MaterialSpec(
            a=Isotropic(_number(get("material.lambda", "1"), "material.lambda"), _number(get("material.mu", "1"), "material.mu")),
            theta=theta,
        )
        terms = []
        for chunk in get("load.f_wave", "").split(";"):
            if chunk.strip():
                v = _numbers(chunk, "load.f_wave", 6)
                terms.append((v[0:2], v[2:4], v[4:6]))
        traction = {
            k.split(".", 2)[2]: _numbers(v, k, 2) for k, v in kv.items() if k.startswith("load.traction.")
        }
        load = LoadSpec(f=TrigField(_numbers(get("load.f", "0, -1"), "load.f", 2), tuple(terms)), traction=traction)
        return RunConfig(
            macro=macro,
            cell=CellGeometry(inc),
            mat=mat,
            load=load,
            eps_list=_numbers(get("sweep.eps", "1/4, 1/8, 1/16"), "sweep.eps"),
            cell_h=_number(get("mesh.cell_h", "1/8"), "mesh.cell_h"),
            cell_refine=_integer(get("mesh.cell_refine", "2"), "mesh.cell_refine"),
            macro_h=_number(get("mesh.macro_h", "1/64"), "mesh.macro_h"),
            tol=_number(get("solver.tol", "1e-10"), "solver.tol"),
            out_dir=get("run.out", "out"),
            workers=_integer(get("run.workers", "1"), "run.workers"),
            component=_integer(get("twoscale.component", "1"), "twoscale.component"),
            symmetric_mesh=_flag(get("flags.symmetric_mesh", "true"), "flags.symmetric_mesh"),
            oscillating_f=_flag(get("flags.oscillating_f", "false"), "flags.oscillating_f"),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def default_config_text() -> str:
    return resources.files("perfhom").joinpath("data/default.cfg").read_text()


def load_config(path=None) -> RunConfig:
    if path is None:
        return parse_config(default_config_text())
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


# ---------------------------------------------------------------- stages


def cell_mesh(config: RunConfig) -> Mesh:
    mesh = generate_cell_mesh(config.cell, config.cell_h)
    for _ in range(config.cell_refine):
        mesh = refine(mesh)
    return mesh


def effective_stage(config: RunConfig):
    """(CorrectorSet, EffectiveModel) on the configured cell mesh."""
    cs = solve_correctors(cell_mesh(config), config.mat, config.tol)
    return cs, build_effective_model(cs, config.cell, config.load)


def macro_stage(config: RunConfig, model: EffectiveModel) -> MacroSolution:
    return solve_homogenized(model, structured_mesh(config.macro, config.macro_h), config.load, config.tol)


def fine_stage(config: RunConfig, eps: float) -> FineSolution:
    mesh = generate_macro_mesh(config.macro, config.cell, eps)
    return solve_fine(mesh, config.cell, config.mat, config.load, eps, config.tol)


# ---------------------------------------------------------------- diagnostics


def lattice_mask(mesh: Mesh, eps: float, x: Optional[np.ndarray] = None) -> np.ndarray:
    """Points (default: mesh nodes) lying in a closed lattice cell eps*(k + Y)."""
    x = mesh.nodes if x is None else np.asarray(x, dtype=float).reshape(-1, 2)
    if len(mesh.hole_centers) == 0:
        return np.zeros(len(x), dtype=bool)
    d, _ = cKDTree(mesh.hole_centers).query(x, p=np.inf)
    return d <= 0.5 * eps * (1 + 1e-9)


def interpolate_macro(u0: MacroSolution, fine_mesh: Mesh):
    """(I u0 at fine nodes, macro strain e(u0) of the containing macro element)."""
    loc = PointLocator(u0.mesh)
    tri, bary = loc.locate(fine_mesh.nodes)
    vals = np.einsum("ka,kac->kc", bary, u0.u0[u0.mesh.triangles[tri]])
    return vals, u0.strain[tri]


def reconstruct(u0: MacroSolution, cs: CorrectorSet, eps: float, fine_mesh: Mesh) -> np.ndarray:
    """u0(x) - eps * sum_ij e_ij(u0)(x) chi^ij(x/eps) at the fine nodes.

    The corrector term is applied at nodes inside lattice cells; nodes of the
    boundary band outside every lattice cell keep the plain u0 value.
    """
    base, strain = interpolate_macro(u0, fine_mesh)
    inside = lattice_mask(fine_mesh, eps)
    chi = np.zeros((fine_mesh.n_nodes, 2, 2, 2))
    if inside.any() and not cs.mesh.cell.is_empty:
        chi[inside] = evaluate_many(cs, fine_mesh.nodes[inside] / eps)
    return base - eps * np.einsum("kij,kijc->kc", strain, chi)


class ErrorNorms(NamedTuple):
    l2: float
    l2_rel: float
    h1_plain: float
    h1_corrected: float


def error_norms(fine: FineSolution, u0: MacroSolution, u_rec: np.ndarray) -> ErrorNorms:
    """Norms over the perforated domain of u_eps - I u0 and u_eps - u_rec."""
    mesh = fine.mesh
    base, _ = interpolate_macro(u0, mesh)
    d = fine.u_eps - base
    l2 = l2_norm(mesh, d)
    ref = l2_norm(mesh, fine.u_eps)
    return ErrorNorms(
        l2=l2,
        l2_rel=l2 / ref if ref > 0 else (0.0 if l2 == 0 else math.inf),
        h1_plain=h1_seminorm(mesh, d),
        h1_corrected=h1_seminorm(mesh, fine.u_eps - u_rec),
    )


def _macro_integral(u0: MacroSolution, psi_macro: Callable, component: int) -> float:
    x, w, E = volume_quadrature(u0.mesh)
    return float(np.sum(w * (E @ u0.u0[:, component]) * psi_macro(x)))


def volume_pairing_gap(
    fine: FineSolution,
    u0: MacroSolution,
    psi_macro: Callable,
    psi_cell: Callable,
    cell_mesh: Mesh,
    component: int = 0,
) -> float:
    """|int_{Omega^eps} u_eps psi(x, x/eps) dx - int_Omega u0 psi_macro dx * int_{Y*} psi_cell dy|.

    ``psi_macro`` and ``psi_cell`` map points (k, 2) to values (k,); psi_cell
    must be Y-periodic.  ``component`` is 0-based.
    """
    x, w, E = volume_quadrature(fine.mesh)
    lhs = np.sum(w * (E @ fine.u_eps[:, component]) * psi_macro(x) * psi_cell(periodic_wrap(x / fine.eps)))
    y, wy, _ = volume_quadrature(cell_mesh)
    cell_int = np.sum(wy * psi_cell(y))
    return float(abs(lhs - _macro_integral(u0, psi_macro, component) * cell_int))


def surface_pairing_gap(
    fine: FineSolution,
    u0: MacroSolution,
    psi_macro: Callable,
    psi_cell: Callable,
    cell_mesh: Mesh,
    mat: Optional[MaterialSpec] = None,
    theta_mode: bool = False,
    component: int = 0,
) -> float:
    """|eps int_{dT^eps} [theta] u_eps psi dsigma - int_Omega u0 psi_macro dx * int_{dT} [theta] psi_cell dsigma|."""
    if theta_mode and mat is None:
        raise ValueError("theta_mode needs the material's theta")
    cell = cell_mesh.cell

    def weight(y):
        return mat.theta_at(cell.arc_angle(y)) if theta_mode else np.ones(len(y))

    x, w, E = surface_quadrature(fine.mesh, Tag.HOLE)
    y = periodic_wrap(x / fine.eps)
    lhs = fine.eps * np.sum(w * (E @ fine.u_eps[:, component]) * psi_macro(x) * psi_cell(y) * weight(y))
    yc, wc, _ = surface_quadrature(cell_mesh, Tag.HOLE)
    cell_int = np.sum(wc * psi_cell(yc) * weight(yc))
    return float(abs(lhs - _macro_integral(u0, psi_macro, component) * cell_int))


def one(x) -> np.ndarray:
    return np.ones(len(np.asarray(x).reshape(-1, 2)))


TEST_FUNCTIONS = {
    "one": (one, one),
    "cos_y1": (one, lambda y: np.cos(2 * math.pi * np.asarray(y)[:, 0])),
    "x1_cos_y2": (lambda x: np.asarray(x)[:, 0], lambda y: np.cos(2 * math.pi * np.asarray(y)[:, 1])),
    "sin_y1": (one, lambda y: np.sin(2 * math.pi * np.asarray(y)[:, 0])),
}


# ---------------------------------------------------------------- sweep

COLUMNS = (
    "eps", "h", "n_dofs", "cg_iterations", "energy_norm", "h1_norm", "surface_l2",
    "l2_error", "l2_rel", "h1_plain", "h1_corrected", "volume_gap", "surface_gap", "surface_gap_theta",
)  # fmt: skip
CHECK_COLUMNS = ("l2_rel_decreasing", "volume_gap_decreasing", "surface_gap_theta_decreasing", "apriori_bounded")

COLUMN_DOC = (
    "eps: period; h: fine mesh size; n_dofs: free dofs; cg_iterations; energy_norm: a_eps(u,u)^1/2; "
    "h1_norm: ||u_eps||_H1(Omega^eps); surface_l2: eps*int_{dT^eps}|u_eps|^2; l2_error, l2_rel: ||u_eps - I u0||; "
    "h1_plain, h1_corrected: H1 seminorm errors of u0 and of the reconstruction; volume_gap, surface_gap, "
    "surface_gap_theta: pairing gaps with psi = 1; *_decreasing / apriori_bounded: harness checks up to this row"
)


@dataclass
class SweepRow:
    eps: float
    h: float
    n_dofs: int
    cg_iterations: int
    energy_norm: float
    h1_norm: float
    surface_l2: float
    l2_error: float
    l2_rel: float
    h1_plain: float
    h1_corrected: float
    volume_gap: float
    surface_gap: float
    surface_gap_theta: float


@dataclass
class SweepReport:
    rows: list
    model: EffectiveModel
    macro_compliance: float
    checks: dict = field(default_factory=dict)
    config: Optional[RunConfig] = None

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    def to_csv(self) -> str:
        flags = check_flags(self)
        buf = io.StringIO()
        buf.write(f"# {COLUMN_DOC}\n")
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(COLUMNS + CHECK_COLUMNS)
        for k, row in enumerate(self.rows):
            vals = [_fmt(getattr(row, c)) for c in COLUMNS]
            wr.writerow(vals + [str(flags[c][k]).lower() for c in CHECK_COLUMNS])
        return buf.getvalue()


def _fmt(v) -> str:
    """Shortest round-trip text for floats, plain digits for integers."""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _strictly_decreasing_prefix(v) -> list:
    return [bool(np.all(np.diff(v[: k + 1]) < 0)) for k in range(len(v))]


def check_flags(report: SweepReport) -> dict:
    """Per-row monotonicity and a priori bound checks, cumulative along the sweep."""
    out = {
        "l2_rel_decreasing": _strictly_decreasing_prefix(report.column("l2_rel")),
        "volume_gap_decreasing": _strictly_decreasing_prefix(report.column("volume_gap")),
        "surface_gap_theta_decreasing": _strictly_decreasing_prefix(report.column("surface_gap_theta")),
    }
    h1, s = report.column("h1_norm"), report.column("surface_l2")
    ref_h1 = APRIORI_FACTOR * h1[:2].max()
    ref_s = APRIORI_FACTOR * s[:2].max()
    out["apriori_bounded"] = [bool(a <= ref_h1 and b <= ref_s) for a, b in zip(h1, s)]
    return out


def _fine_worker(args):
    config, eps = args
    return fine_stage(config, eps)


def fine_sweep(config: RunConfig) -> list:
    """Fine solves for every eps, in eps_list order (optionally in worker processes)."""
    jobs = [(config, e) for e in config.eps_list]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(config.workers, len(jobs))) as pool:
            return list(pool.map(_fine_worker, jobs))
    return [_fine_worker(j) for j in jobs]


def sweep_row(config, fine: FineSolution, u0: MacroSolution, cs: CorrectorSet) -> SweepRow:
    u_rec = reconstruct(u0, cs, fine.eps, fine.mesh)
    err = error_norms(fine, u0, u_rec)
    h1_norm = float(np.hypot(l2_norm(fine.mesh, fine.u_eps), h1_seminorm(fine.mesh, fine.u_eps)))
    c = config.component
    return SweepRow(
        eps=fine.eps,
        h=fine.mesh.h,
        n_dofs=fine.n_dofs,
        cg_iterations=fine.report.iterations,
        energy_norm=fine.energy_norm,
        h1_norm=h1_norm,
        surface_l2=fine.surface_l2,
        l2_error=err.l2,
        l2_rel=err.l2_rel,
        h1_plain=err.h1_plain,
        h1_corrected=err.h1_corrected,
        volume_gap=volume_pairing_gap(fine, u0, one, one, cs.mesh, component=c),
        surface_gap=surface_pairing_gap(fine, u0, one, one, cs.mesh, component=c),
        surface_gap_theta=surface_pairing_gap(fine, u0, one, one, cs.mesh, config.mat, True, component=c),
    )


@dataclass
class PipelineState:
    """Everything a full run produced, for artifact writers and tests."""

    config: RunConfig
    correctors: CorrectorSet
    model: EffectiveModel
    macro: MacroSolution
    fines: list
    report: SweepReport


def run_full(config: RunConfig) -> PipelineState:
    cs, model = effective_stage(config)
    u0 = macro_stage(config, model)
    fines = fine_sweep(config)
    rows = [sweep_row(config, f, u0, cs) for f in fines]
    report = SweepReport(rows=rows, model=model, macro_compliance=u0.compliance, config=config)
    report.checks = check_flags(report)
    return PipelineState(config, cs, model, u0, fines, report)


def run_pipeline(config: RunConfig, out_dir=None, write: bool = True) -> SweepReport:
    """Full deterministic run; writes report.csv, effective.txt and VTK fields."""
    state = run_full(config)
    if write:
        write_artifacts(state, Path(out_dir or config.out_dir))
    return state.report


def write_artifacts(state: PipelineState, out: Path) -> None:
    from .vtk import write_vtk

    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(state.report.to_csv())
    (out / "effective.txt").write_text(state.model.to_text())
    cs = state.correctors
    write_vtk(out / "cell.vtk", cs.mesh, {f"chi_{i}{j}": cs.chi[(i, j)] for i, j in ((0, 0), (1, 1), (0, 1))})
    u0 = state.macro
    write_vtk(out / "macro.vtk", u0.mesh, {"u0": u0.u0}, {"sigma0": u0.stress})
    for fine in state.fines:
        u_rec = reconstruct(u0, cs, fine.eps, fine.mesh)
        write_vtk(out / f"fine_eps{fine.eps:.6g}.vtk", fine.mesh, {"u_eps": fine.u_eps, "u_rec": u_rec})


def twoscale_table(state: PipelineState) -> str:
    """Pairing gaps for every fine solve and every named test function, as CSV."""
    buf = io.StringIO()
    buf.write("# pairing gaps |fine pairing - two-scale limit| for psi(x, y) = psi_macro(x) psi_cell(y)\n")
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(("eps", "test", "component", "volume_gap", "surface_gap", "surface_gap_theta"))
    cs, u0 = state.correctors, state.macro
    for fine in state.fines:
        for name, (pm, pc) in TEST_FUNCTIONS.items():
            for c in (0, 1):
                wr.writerow(
                    (
                        repr(fine.eps),
                        name,
                        c,
                        repr(volume_pairing_gap(fine, u0, pm, pc, cs.mesh, component=c)),
                        repr(surface_pairing_gap(fine, u0, pm, pc, cs.mesh, component=c)),
                        repr(surface_pairing_gap(fine, u0, pm, pc, cs.mesh, state.config.mat, True, component=c)),
                    )
                )
    return buf.getvalue()


# ---------------------------------------------------------------- mesh study


@dataclass
class ConvergenceStudy:
    h: list
    q: list  # Mandel matrices per level
    theta_tilde: list
    f_tilde: list
    differences: list
    ratios: list
    extrapolated: EffectiveModel


def richardson(coarse, fine, order: float = 2.0):
    """fine + (fine - coarse) / (2^order - 1) for a halving of h."""
    return fine + (fine - coarse) / (2.0**order - 1.0)


def convergence_study(config: RunConfig, levels: int = 3) -> ConvergenceStudy:
    """Effective model on ``levels`` successively refined cell meshes, starting at config.cell_h."""
    if levels < 3:
        raise ValueError("a convergence study needs at least three levels")
    mesh = generate_cell_mesh(config.cell, config.cell_h)
    hs, qs, th, fs = [], [], [], []
    for lev in range(levels):
        if lev:
            mesh = refine(mesh)
        cs = solve_correctors(mesh, config.mat, config.tol)
        model = build_effective_model(cs, config.cell, config.load)
        hs.append(mesh.h)
        qs.append(model.q_mandel)
        th.append(model.theta_tilde)
        fs.append(model.f_tilde)
    diffs = [float(np.linalg.norm(qs[k] - qs[k + 1])) for k in range(levels - 1)]
    ratios = [diffs[k] / diffs[k + 1] if diffs[k + 1] > 0 else math.inf for k in range(levels - 2)]
    q_r = richardson(qs[-2], qs[-1])
    q_r = 0.5 * (q_r + q_r.T)
    extrap = EffectiveModel(
        q=mandel_to_tensor(q_r),
        q_mandel=q_r,
        theta_tilde=float(richardson(th[-2], th[-1])),
        f_tilde=richardson(fs[-2], fs[-1]),
        meta={"richardson_levels": ", ".join(f"{h:.6g}" for h in hs), "difference_ratios": ", ".join(f"{r:.4f}" for r in ratios)},
    )
    return ConvergenceStudy(hs, qs, th, fs, diffs, ratios, extrap)


def fixture_text(study: ConvergenceStudy, config: RunConfig) -> str:
    """Extrapolated model followed by the producing config, all in one key-value file."""
    body = study.extrapolated.to_text()
    cfg = "".join(f"# config: {line}\n" for line in config.to_text().splitlines())
    return body + cfg


def compare_models(a: EffectiveModel, b: EffectiveModel) -> float:
    """Largest relative deviation of q entries, theta_tilde and f_tilde (scaled by magnitude)."""
    dq = np.abs(a.q_mandel - b.q_mandel).max() / np.abs(b.q_mandel).max()
    dt = abs(a.theta_tilde - b.theta_tilde) / max(abs(b.theta_tilde), 1e-300) if b.theta_tilde else abs(a.theta_tilde)
    df = np.abs(a.f_tilde - b.f_tilde).max() / max(np.abs(b.f_tilde).max(), 1e-300)
    return float(max(dq, dt, df))

