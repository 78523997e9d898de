"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (the verdict lines bypass
output capture, so ``-s`` is not needed).
"""

import dataclasses
import math
import time
from pathlib import Path

import numpy as np
import pytest

from perfhom import harness
from perfhom.corrector import solve_correctors
from perfhom.effective import EffectiveModel, build_effective_model, voigt_tensor
from perfhom.fem import DofMap, dirichlet_nodes, l2_norm
from perfhom.fine import fine_load, fine_operator, solve_fine
from perfhom.geometry import CellGeometry, Empty, lattice_cells, surface_measure_deficit
from perfhom.macro import macro_load, macro_operator, solve_homogenized
from perfhom.material import MaterialSpec, constant_load
from perfhom.mesh import generate_cell_mesh, generate_macro_mesh, structured_mesh

FIXTURE = Path(__file__).parent / "fixtures" / "effective_default.txt"
SEED = 20240611


@pytest.fixture
def verdict(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {number:2d}] {'PASS' if ok else 'FAIL'}: {title} ({detail})")
        return ok

    return emit


@pytest.fixture(scope="module")
def config():
    return harness.load_config()


@pytest.fixture(scope="module")
def timed_run(config):
    t0 = time.perf_counter()
    state = harness.run_full(config)
    return state, time.perf_counter() - t0


@pytest.fixture(scope="module")
def default_cell(config):
    """Correctors and model of the default configuration, i.e. cell_h = 1/32, with timing."""
    t0 = time.perf_counter()
    cs, model = harness.effective_stage(config)
    return cs, model, time.perf_counter() - t0


def test_criterion_01_empty_cell_identity(verdict):
    t0 = time.perf_counter()
    cell = CellGeometry(Empty())
    cs = solve_correctors(generate_cell_mesh(cell, 1 / 8), MaterialSpec())
    model = build_effective_model(cs, cell, constant_load())
    elapsed = time.perf_counter() - t0
    chi = max(l2_norm(cs.mesh, c) for c in cs.chi.values())
    dq = np.abs(model.q_mandel - np.array([[3.0, 1.0, 0.0], [1.0, 3.0, 0.0], [0.0, 0.0, 2.0]])).max()
    ok = chi <= 1e-10 and dq <= 1e-10 and elapsed < 5.0
    assert verdict(1, "empty cell recovers int_Y a", ok, f"|chi| = {chi:.2e}, |q - a| = {dq:.2e}, {elapsed:.2f} s")


def test_criterion_02_structure_of_q(verdict, default_cell):
    cs, model, elapsed = default_cell
    Q = model.q_mandel
    sym = np.abs(model.q - model.q.transpose(2, 3, 0, 1)).max() / np.abs(model.q).max()
    eig = np.linalg.eigvalsh(Q)
    ok = cs.mesh.h == pytest.approx(1 / 32) and sym <= 1e-10 and eig[0] >= -1e-9 * eig[-1] and elapsed < 30.0
    assert verdict(2, "q symmetric and positive", ok,
                   f"h = {cs.mesh.h:.5g}, asym = {sym:.2e}, eig = {eig.min():.4f}..{eig.max():.4f}, {elapsed:.2f} s")


def test_criterion_03_formula_equivalence(verdict, default_cell):
    _, model, _ = default_cell
    gap = np.abs(model.q_direct_mandel - model.q_mandel).max() / np.abs(model.q_mandel).max()
    assert verdict(3, "q_direct equals q_energy", gap <= 1e-8, f"relative gap {gap:.2e}")


def test_criterion_04_voigt_bound(verdict, default_cell, config):
    cs, model, _ = default_cell
    V = voigt_tensor(cs.mesh, config.mat)
    rng = np.random.default_rng(SEED)
    zetas = list(np.eye(3)) + list(rng.standard_normal((5, 3)))
    slack = [float(z @ V @ z - z @ model.q_mandel @ z) for z in zetas]
    ok = min(slack) >= 0.0
    assert verdict(4, "Voigt bound", ok, f"min slack {min(slack):.4e} over {len(zetas)} directions")


def test_criterion_05_mesh_convergence(verdict, config):
    study = harness.convergence_study(config, 3)
    ref = EffectiveModel.from_text(FIXTURE.read_text())
    dev = harness.compare_models(study.extrapolated, ref)
    ok = all(r >= 1.5 for r in study.ratios) and dev <= 0.01
    assert verdict(5, "cell mesh convergence of q", ok,
                   f"ratios {', '.join(f'{r:.3f}' for r in study.ratios)}, fixture deviation {dev:.2e}")


def test_criterion_06_l2_error_decreases(verdict, timed_run):
    state, elapsed = timed_run
    l2 = state.report.column("l2_rel")
    eps = state.report.column("eps")
    ok = list(eps) == [0.25, 0.125, 0.0625] and bool(np.all(np.diff(l2) < 0)) and elapsed < 600.0
    assert verdict(6, "relative L2 error decreases", ok,
                   f"l2_rel {', '.join(f'{v:.5f}' for v in l2)}, sweep {elapsed:.1f} s")


def test_criterion_07_corrector_improvement(verdict, timed_run):
    last = timed_run[0].report.rows[-1]
    ok = last.eps == 0.0625 and last.h1_corrected < last.h1_plain
    assert verdict(7, "corrector lowers the H1 error", ok,
                   f"eps = {last.eps}: corrected {last.h1_corrected:.5f} < plain {last.h1_plain:.5f}")


def test_criterion_08_surface_pairing(verdict, timed_run):
    state, _ = timed_run
    gaps = state.report.column("surface_gap_theta")
    monotone = bool(np.all(np.diff(gaps) < 0))
    cell, macro = state.config.cell, state.config.macro
    deficit = surface_measure_deficit(macro, cell, 0.25)
    # 9 cells, each contributing eps * eps * perim_T, against |Omega| * perim_T
    count = len(lattice_cells(macro, cell, 0.25))
    oracle = abs(count / 16 - 1) * math.pi / 2
    closed = abs(deficit - 7 * math.pi / 32)
    ok = monotone and count == 9 and closed <= 1e-10 and abs(deficit - oracle) <= 1e-10
    assert verdict(8, "surface pairing gap", ok,
                   f"gaps {', '.join(f'{g:.5f}' for g in gaps)}, deficit {deficit:.12f} vs 7pi/32 ({closed:.1e})")


def test_criterion_09_apriori_bounds(verdict, timed_run):
    rep = timed_run[0].report
    ok = True
    parts = []
    for name in ("h1_norm", "surface_l2"):
        v = rep.column(name)
        cap = 1.05 * max(v[:2])
        ok &= bool(np.all(v <= cap))
        parts.append(f"{name} max {v.max():.4f} <= {cap:.4f}")
    assert verdict(9, "a priori bounds", ok, "; ".join(parts))


def _residual(A_full, b_full, u, dofs):
    A, b = dofs.reduce_matrix(A_full), dofs.reduce_vector(b_full)
    x = dofs.restrict(u)
    return float(np.linalg.norm(b - A @ x) / np.linalg.norm(b))


def test_criterion_10_uniqueness_and_contracts(verdict, config, timed_run):
    state, _ = timed_run
    cell, mat = config.cell, config.mat
    zero = constant_load((0.0, 0.0))
    zero_model = dataclasses.replace(state.model, f_tilde=np.zeros(2))
    u0 = solve_homogenized(zero_model, structured_mesh(config.macro, 1 / 16), zero).u0
    fmesh = generate_macro_mesh(config.macro, cell, 0.25)
    ue = solve_fine(fmesh, cell, mat, zero, 0.25).u_eps
    zeros_ok = np.abs(u0).max() <= 1e-12 and np.abs(ue).max() <= 1e-12

    reports = list(state.correctors.reports.values()) + [state.macro.report] + [f.report for f in state.fines]
    contract_ok = all(r.converged and r.relative_residual <= config.tol for r in reports)
    # recompute the residuals independently of the solver's own bookkeeping
    m = state.macro
    res = [_residual(macro_operator(state.model, m.mesh), macro_load(state.model, m.mesh, config.load), m.u0,
                     DofMap.build(m.mesh, dirichlet_nodes(m.mesh)))]
    for f in state.fines:
        res.append(_residual(fine_operator(f.mesh, cell, mat, f.eps), fine_load(f.mesh, config.load, f.eps), f.u_eps,
                             DofMap.build(f.mesh, dirichlet_nodes(f.mesh))))
    contract_ok &= max(res) <= config.tol

    again = harness.run_full(config)
    identical = (
        again.report.to_csv() == state.report.to_csv()
        and np.array_equal(again.macro.u0, state.macro.u0)
        and all(np.array_equal(a.u_eps, b.u_eps) for a, b in zip(again.fines, state.fines))
        and all(np.array_equal(again.correctors.chi[k], state.correctors.chi[k]) for k in state.correctors.chi)
    )
    ok = zeros_ok and contract_ok and identical
    assert verdict(10, "uniqueness and solver contracts", ok,
                   f"zero-load max |u| {max(np.abs(u0).max(), np.abs(ue).max()):.1e}, "
                   f"max recomputed residual {max(res):.2e}, bit-identical rerun {identical}")


def test_criterion_11_robin_monotonicity(verdict, config, timed_run):
    state, _ = timed_run
    th = config.mat.theta
    doubled = dataclasses.replace(
        config.mat, theta=dataclasses.replace(th, c0=2 * th.c0, cos=tuple(2 * a for a in th.cos),
                                              sin=tuple(2 * b for b in th.sin))
    )
    cs2 = solve_correctors(state.correctors.mesh, doubled, config.tol)
    model2 = build_effective_model(cs2, config.cell, config.load)
    sol2 = harness.macro_stage(config, model2)
    c1, c2 = state.macro.compliance, sol2.compliance
    ratio = model2.theta_tilde / state.model.theta_tilde
    ok = ratio == pytest.approx(2.0, rel=1e-12) and c2 < c1
    assert verdict(11, "doubling theta lowers compliance", ok, f"theta_tilde x{ratio:.6f}: {c1:.6e} -> {c2:.6e}")
