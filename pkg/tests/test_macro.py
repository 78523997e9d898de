import dataclasses

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from perfhom.corrector import solve_correctors
from perfhom.effective import EffectiveModel, build_effective_model
from perfhom.fem import dirichlet_nodes, element_strains, l2_norm
from perfhom.geometry import CellGeometry, Empty, MacroGeometry
from perfhom.locate import PointLocator
from perfhom.macro import compliance, solve_homogenized
from perfhom.material import MaterialSpec, constant_load
from perfhom.mesh import generate_macro_mesh, generate_cell_mesh, structured_mesh


@pytest.fixture(scope="module")
def mesh16():
    return structured_mesh(MacroGeometry(), 1 / 16)


@pytest.fixture(scope="module")
def empty_model():
    cell = CellGeometry(Empty())
    cs = solve_correctors(generate_cell_mesh(cell, 1 / 4), MaterialSpec())
    return build_effective_model(cs, cell, constant_load((0.0, 0.0)))


def test_zero_load_zero_solution(disk_model_8, mesh16):
    model = dataclasses.replace(disk_model_8, f_tilde=np.zeros(2))
    sol = solve_homogenized(model, mesh16, constant_load((0.0, 0.0)))
    assert np.all(sol.u0 == 0.0)
    assert compliance(sol) == 0.0


def test_solution_contract(disk_model_8, mesh16, gravity):
    sol = solve_homogenized(disk_model_8, mesh16, gravity)
    assert np.all(sol.u0[dirichlet_nodes(mesh16)] == 0.0)
    assert_array_equal(sol.strain, element_strains(mesh16, sol.u0))
    assert sol.report.converged
    assert sol.compliance > 0
    assert abs(sol.compliance - sol.energy) <= 1e-8 * sol.compliance
    assert compliance(sol, gravity) == pytest.approx(sol.compliance, rel=1e-14)
    assert sol.stress.shape == (mesh16.n_triangles, 2, 2)


def test_doubling_theta_lowers_compliance(disk_model_8, mesh16, gravity):
    c1 = solve_homogenized(disk_model_8, mesh16, gravity).compliance
    stiffer = dataclasses.replace(disk_model_8, theta_tilde=2 * disk_model_8.theta_tilde)
    c2 = solve_homogenized(stiffer, mesh16, gravity).compliance
    assert c2 < c1


def test_starting_vector_irrelevant(disk_model_8, mesh16, gravity, rng):
    a = solve_homogenized(disk_model_8, mesh16, gravity)
    x0 = rng.standard_normal((mesh16.n_nodes, 2))
    b = solve_homogenized(disk_model_8, mesh16, gravity, x0=x0)
    scale = np.abs(a.u0).max()
    assert np.abs(a.u0 - b.u0).max() <= 1e-8 * scale


def test_uniaxial_extension(empty_model):
    load = constant_load((0.0, 0.0), {"right": (1.0, 0.0)})
    probe = np.array([[1.0, 0.5]])
    vals = []
    for h in (1 / 8, 1 / 16, 1 / 32):
        sol = solve_homogenized(empty_model, structured_mesh(MacroGeometry(), h), load)
        vals.append(PointLocator(sol.mesh).interpolate(sol.u0, probe)[0])
    # coarse answer within 2% of the twice-refined one
    assert abs(vals[0][0] - vals[2][0]) <= 0.02 * abs(vals[2][0])
    # plane-strain uniaxial stress for lambda = mu = 1: strain = sigma / (8/3)
    assert vals[2][0] == pytest.approx(3 / 8, rel=0.15)
    # the midline is a symmetry line up to the diagonal orientation of the mesh
    assert abs(vals[2][1]) < 0.01 * vals[2][0]


def test_self_convergence(disk_model_8, gravity):
    sols = [solve_homogenized(disk_model_8, structured_mesh(MacroGeometry(), h), gravity)
            for h in (1 / 8, 1 / 16, 1 / 32, 1 / 64)]
    diffs = []
    for c, f in zip(sols, sols[1:]):
        uc = PointLocator(c.mesh).interpolate(c.u0, f.mesh.nodes)
        diffs.append(l2_norm(f.mesh, f.u0 - uc))
    assert all(b < a for a, b in zip(diffs, diffs[1:]))


def test_rejects_perforated_mesh(disk_model_8, disk_cell, gravity):
    with pytest.raises(ValueError):
        solve_homogenized(disk_model_8, generate_macro_mesh(MacroGeometry(), disk_cell, 0.25), gravity)
