import csv
import dataclasses
import math
from pathlib import Path

import numpy as np
import pytest
from numpy.testing import assert_allclose

from perfhom import harness
from perfhom.corrector import solve_correctors
from perfhom.effective import build_effective_model
from perfhom.errors import ConfigError
from perfhom.fine import FineSolution
from perfhom.geometry import CellGeometry, Disk, Empty, MacroGeometry
from perfhom.linsolve import SolveReport
from perfhom.macro import solve_homogenized
from perfhom.material import MaterialSpec, constant_load
from perfhom.mesh import Tag, generate_cell_mesh, generate_macro_mesh, structured_mesh

FIXTURES = Path(__file__).parent / "fixtures"


def test_default_config(default_config):
    c = default_config
    assert c.eps_list == (0.25, 0.125, 0.0625)
    assert c.effective_cell_h == 1 / 32
    assert c.cell == CellGeometry(Disk(0.25))
    assert c.macro.gamma1 == ("left",)
    assert c.tol == 1e-10 and c.macro_h == 1 / 64
    assert c == harness.RunConfig()


def test_config_round_trip():
    text = """
    cell.shape = square   # trailing comment
    cell.size = 3/10
    theta.c0 = 2
    theta.cos = 0.5, 0.25
    load.f = 0, -1
    load.f_wave = 1, 0, 0.5, 0, 0, 0 ; 0, 1, 0, 0, 0, 0.1
    load.traction.right = 1/2, 0
    flags.oscillating_f = true
    sweep.eps = 1/5, 1/10
    """
    c = harness.parse_config(text)
    assert c.cell.inclusion.half_width == 0.3
    assert len(c.load.f.terms) == 2
    assert c.load.traction == {"right": (0.5, 0.0)}
    assert harness.parse_config(c.to_text()) == c


@pytest.mark.parametrize(
    "text, match",
    [
        ("sweep.eps = 1/8, 1/4", "strictly decreasing"),
        ("sweep.eps = 1/4, 1/4", "strictly decreasing"),
        ("sweep.eps = 1/2, 1", r"\(0, 1\)"),
        ("material.nu = 0.3", "unknown key"),
        ("cell.shape = hexagon", "cell.shape"),
        ("cell.size = 0.6", "radius"),
        ("solver.tol = abc", "cannot read"),
        ("material.mu = 0", "moduli"),
        ("flags.symmetric_mesh = false", "symmetric_mesh"),
        ("flags.oscillating_f = true", "oscillating_f"),
        ("load.f_wave = 1, 0, 1, 0, 0, 0", "oscillating_f"),
        ("load.f = 1", "expected 2"),
        ("just some words", "line 1"),
        ("solver.tol = 1e-8\nsolver.tol = 1e-9", "twice"),
        ("mesh.cell_refine = 1.5", "integer"),
        ("load.traction.north = 1, 0", "unknown key"),
    ],
)
def test_config_errors(text, match):
    with pytest.raises(ConfigError, match=match):
        harness.parse_config(text)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        harness.load_config(tmp_path / "nope.cfg")


def test_richardson_exact_for_quadratic_error():
    c, k = 1.25, 3.0
    assert harness.richardson(c + k * 0.1**2, c + k * 0.05**2) == pytest.approx(c, rel=1e-14)


# ------------------------------------------------------------ pipeline


def test_sweep_report(default_run):
    rep = default_run.report
    assert len(rep.rows) == 3
    assert all(all(v) for v in rep.checks.values())
    l2 = rep.column("l2_rel")
    assert np.all(np.diff(l2) < 0)
    last = rep.rows[-1]
    assert last.h1_corrected < last.h1_plain
    for name in ("volume_gap", "surface_gap", "surface_gap_theta"):
        assert np.all(rep.column(name) >= 0)


def test_report_matches_fixture(default_run):
    rows = list(csv.reader(l for l in (FIXTURES / "report_default.csv").read_text().splitlines()
                           if not l.startswith("#")))
    header, body = rows[0], rows[1:]
    current = list(csv.reader(l for l in default_run.report.to_csv().splitlines() if not l.startswith("#")))
    assert current[0] == header
    for ref, new in zip(body, current[1:]):
        for name, a, b in zip(header, ref, new):
            if a in ("true", "false") or name in ("n_dofs", "cg_iterations"):
                assert a == b, name
            else:
                assert float(b) == pytest.approx(float(a), rel=1e-6), name


def test_csv_deterministic(default_config, default_run):
    again = harness.run_full(default_config)
    assert again.report.to_csv() == default_run.report.to_csv()


def test_parallel_sweep_identical(default_config, default_run):
    cfg = dataclasses.replace(default_config, workers=2)
    assert harness.run_full(cfg).report.to_csv() == default_run.report.to_csv()


def test_check_flags_detect_violation(default_run):
    rep = dataclasses.replace(default_run.report, rows=[dataclasses.replace(r) for r in default_run.report.rows])
    rep.rows[2].l2_rel = 1.0
    rep.rows[2].h1_norm = 10.0
    flags = harness.check_flags(rep)
    assert flags["l2_rel_decreasing"] == [True, True, False]
    assert flags["apriori_bounded"] == [True, True, False]


def test_artifacts_written(tmp_path, default_run):
    harness.write_artifacts(default_run, tmp_path)
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["cell.vtk", "effective.txt", "fine_eps0.0625.vtk", "fine_eps0.125.vtk", "fine_eps0.25.vtk",
                     "macro.vtk", "report.csv"]
    lines = (tmp_path / "report.csv").read_text().splitlines()
    assert lines[0].startswith("# ") and len(lines) == 5


def test_twoscale_table(default_run):
    lines = harness.twoscale_table(default_run).splitlines()
    assert len(lines) == 2 + 3 * len(harness.TEST_FUNCTIONS) * 2


# ------------------------------------------------------------ reconstruction and norms


@pytest.fixture(scope="module")
def empty_setup():
    cell = CellGeometry(Empty())
    cs = solve_correctors(generate_cell_mesh(cell, 1 / 8), MaterialSpec())
    model = build_effective_model(cs, cell, constant_load())
    fine_mesh = generate_macro_mesh(MacroGeometry(), cell, 0.25)
    macro = solve_homogenized(model, structured_mesh(MacroGeometry(), 1 / 16), constant_load())
    return cs, fine_mesh, macro


def test_reconstruct_empty_is_interpolation(empty_setup):
    cs, fine_mesh, macro = empty_setup
    u_rec = harness.reconstruct(macro, cs, 0.25, fine_mesh)
    base, _ = harness.interpolate_macro(macro, fine_mesh)
    assert np.array_equal(u_rec, base)


def test_reconstruct_bound(default_run):
    st = default_run
    for fine in st.fines:
        u_rec = harness.reconstruct(st.macro, st.correctors, fine.eps, fine.mesh)
        base, strain = harness.interpolate_macro(st.macro, fine.mesh)
        from perfhom.fem import l2_norm

        chi_max = max(np.abs(st.correctors.chi[ij]).max() for ij in ((0, 0), (1, 1), (0, 1)))
        C = 4 * chi_max * np.abs(st.macro.strain).max()
        assert l2_norm(fine.mesh, u_rec - base) <= fine.eps * C * math.sqrt(fine.mesh.area())


def test_reconstruct_leaves_band_untouched(default_run):
    st = default_run
    fine = st.fines[0]
    u_rec = harness.reconstruct(st.macro, st.correctors, fine.eps, fine.mesh)
    base, _ = harness.interpolate_macro(st.macro, fine.mesh)
    band = ~harness.lattice_mask(fine.mesh, fine.eps)
    assert band.any()
    assert np.array_equal(u_rec[band], base[band])


def test_error_norms_identical_fields(default_run):
    fine = default_run.fines[0]
    same = dataclasses.replace(default_run.macro, mesh=fine.mesh, u0=fine.u_eps)
    err = harness.error_norms(fine, same, fine.u_eps)
    assert max(err) <= 1e-12


def _constant_pair(fine_mesh, macro_mesh, eps):
    ones = np.zeros((fine_mesh.n_nodes, 2))
    ones[:, 0] = 1.0
    fine = FineSolution(fine_mesh, ones, eps, 0.0, 0.0, 0, SolveReport(0, 0.0, True))
    u0 = np.zeros((macro_mesh.n_nodes, 2))
    u0[:, 0] = 1.0
    return fine, u0


def _macro_with(field, mesh, template):
    return dataclasses.replace(template, mesh=mesh, u0=field)


def test_volume_gap_zero_for_empty_cells(empty_setup):
    cs, fine_mesh, macro = empty_setup
    fine, u0 = _constant_pair(fine_mesh, macro.mesh, 0.25)
    m = _macro_with(u0, macro.mesh, macro)
    assert harness.volume_pairing_gap(fine, m, harness.one, harness.one, cs.mesh) <= 1e-14


def test_volume_gap_oscillation_cancels(default_run, disk_correctors_32):
    cos_y1 = harness.TEST_FUNCTIONS["cos_y1"][1]
    gaps = []
    for eps in (1 / 4, 1 / 8, 1 / 16):
        mesh = generate_macro_mesh(MacroGeometry(), CellGeometry(Disk(0.25)), eps)
        fine, u0 = _constant_pair(mesh, default_run.macro.mesh, eps)
        m = _macro_with(u0, default_run.macro.mesh, default_run.macro)
        gaps.append(harness.volume_pairing_gap(fine, m, harness.one, cos_y1, disk_correctors_32.mesh))
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[1] / gaps[2] >= 1.5


def test_surface_gap_geometry_closed_form(default_run, disk_correctors_32):
    mesh = generate_macro_mesh(MacroGeometry(), CellGeometry(Disk(0.25)), 0.25)
    fine, u0 = _constant_pair(mesh, default_run.macro.mesh, 0.25)
    m = _macro_with(u0, default_run.macro.mesh, default_run.macro)
    gap = harness.surface_pairing_gap(fine, m, harness.one, harness.one, disk_correctors_32.mesh)
    # |9/16 - 1| * pi/2, up to the polygonal perimeter of the meshes
    assert gap == pytest.approx(7 * math.pi / 32, rel=2e-3)
    perim_h = mesh.edge_lengths(mesh.tagged_edges(Tag.HOLE)).sum() / 9 / 0.25
    cell_perim = disk_correctors_32.mesh.edge_lengths(disk_correctors_32.mesh.tagged_edges(Tag.HOLE)).sum()
    assert gap == pytest.approx(abs(9 / 16 * perim_h - cell_perim), rel=1e-12)


def test_surface_gap_odd_test_function_vanishes(default_run, disk_correctors_32):
    sin_y1 = harness.TEST_FUNCTIONS["sin_y1"][1]
    mesh = generate_macro_mesh(MacroGeometry(), CellGeometry(Disk(0.25)), 0.125)
    fine, u0 = _constant_pair(mesh, default_run.macro.mesh, 0.125)
    m = _macro_with(u0, default_run.macro.mesh, default_run.macro)
    gap = harness.surface_pairing_gap(fine, m, harness.one, sin_y1, disk_correctors_32.mesh,
                                      MaterialSpec(), theta_mode=True)
    assert gap <= 1e-12
    with pytest.raises(ValueError):
        harness.surface_pairing_gap(fine, m, harness.one, sin_y1, disk_correctors_32.mesh, theta_mode=True)


def test_convergence_study(default_config):
    study = harness.convergence_study(default_config, 3)
    assert study.h == [0.125, 0.0625, 0.03125]
    assert study.ratios[0] >= 1.5
    ref = harness.EffectiveModel.from_text((FIXTURES / "effective_default.txt").read_text())
    assert harness.compare_models(study.extrapolated, ref) <= 1e-10
    with pytest.raises(ValueError):
        harness.convergence_study(default_config, 2)
