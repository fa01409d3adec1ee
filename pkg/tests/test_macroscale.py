import numpy as np
import pytest
from hypothesis import given, strategies as st

from prestrain_hom.algebra import build_sym_basis, q_value
from prestrain_hom.cellsolver import assemble_effective
from prestrain_hom.errors import UnsupportedDimension
from prestrain_hom.macroscale import (MacroProblem, energy_eps, gamma_diagram_report,
                                      hom_stiffness, nonlinear_energy_eps, read_field,
                                      recovery_field, solve_lin_eps, solve_lin_hom,
                                      unfolding_map, write_field)
from prestrain_hom.microstructure import build_cell, homogeneous_cell

DG = np.array([[0.1, 0.05], [-0.02, 0.03]])


@given(st.floats(0, 0.999), st.floats(0, 0.999), st.sampled_from([1 / 2, 1 / 4, 1 / 8]))
def test_unfolding_stays_in_the_same_cell(x, y, eps):
    T = unfolding_map(np.array([x]), np.array([y]), eps)
    assert np.floor(T / eps) == np.floor(x / eps)
    assert T[0] - eps * np.floor(x / eps) == pytest.approx(eps * y)


def test_affine_data_on_whole_boundary_is_reproduced():
    cell = homogeneous_cell(2, 2, 1.0, 1.0)
    prob = MacroProblem(cell, 1 / 4, "all", DG)
    sol = solve_lin_eps(prob)
    x = prob.mesh.node_coordinates()
    assert np.allclose(sol.u, x @ DG.T, atol=1e-9)
    assert sol.energy == pytest.approx(float(q_value(1.0, 1.0, DG)), rel=1e-9)


def test_homogeneous_cell_has_no_gap():
    cell = homogeneous_cell(2, 2, 1.0, 2.0, B=np.array([[0.1, 0.0], [0.0, -0.2]]))
    eff = assemble_effective(cell, keep_correctors=True)
    prob = MacroProblem(cell, 1 / 4, ("left",), DG)
    se, sh = solve_lin_eps(prob), solve_lin_hom(prob, eff)
    assert se.energy == pytest.approx(sh.energy, rel=1e-9, abs=1e-14)
    assert energy_eps(prob, se.u) == pytest.approx(se.energy, rel=1e-12)
    assert se.galerkin_residual < 1e-9


def test_hom_stiffness_represents_quadratic_form(rng):
    cell = build_cell("bilayer", 2, 2, {})
    eff = assemble_effective(cell)
    C = hom_stiffness(eff)
    basis = build_sym_basis(2)
    for _ in range(5):
        E = rng.standard_normal((2, 2))
        xi = basis.emb_inv(E)
        assert E.ravel() @ C @ E.ravel() == pytest.approx(xi @ eff.Qmat @ xi, rel=1e-12)


def test_gamma_diagram_gaps_decrease_on_coarse_cell():
    cell = build_cell("bilayer", 2, 2, {})
    rep = gamma_diagram_report(cell, [1 / 2, 1 / 4, 1 / 8])
    g, u = rep["gaps"], rep["unfold_gaps"]
    assert all(b < a for a, b in zip(g, g[1:]))
    assert all(b < a for a, b in zip(u, u[1:]))
    assert len(rep["grid"]["macro_M"]) == 3


def test_recovery_field_matches_boundary_data():
    cell = build_cell("bilayer", 2, 2, {})
    eff = assemble_effective(cell, keep_correctors=True)
    prob = MacroProblem(cell, 1 / 4, "left", DG)
    sh = solve_lin_hom(prob, eff)
    rec = recovery_field(prob, sh, eff)
    assert rec.shape == sh.u.shape
    x = prob.mesh.node_coordinates()
    assert np.allclose(rec[0], x[0] @ DG.T)


def test_nonlinear_energy_linearises():
    cell = homogeneous_cell(2, 2, 1.0, 1.0, B=np.array([[0.2, 0.1], [0.1, 0.0]]))
    prob = MacroProblem(cell, 1 / 2, "left", DG)
    u = solve_lin_eps(prob).u
    x = prob.mesh.node_coordinates()
    lin = energy_eps(prob, u)
    errs = [abs(nonlinear_energy_eps(prob, x + h * u, h) - lin) for h in (1e-2, 5e-3)]
    assert errs[1] < 0.6 * errs[0]


def test_problem_validation():
    with pytest.raises(UnsupportedDimension):
        MacroProblem(homogeneous_cell(3, 2), 1 / 2)
    cell = homogeneous_cell(2, 2)
    with pytest.raises(ValueError):
        MacroProblem(cell, 0.3)
    with pytest.raises(ValueError):
        MacroProblem(cell, 0.5, ("middle",))


def test_field_dump_round_trip(tmp_path, rng):
    arr = rng.standard_normal((3, 4, 2))
    p = tmp_path / "f.phfd"
    write_field(p, arr)
    raw = p.read_bytes()
    assert raw[:4] == b"PHFD" and len(raw) == 4 + 4 + 3 * 8 + arr.size * 8
    assert np.array_equal(read_field(p), arr)
    (tmp_path / "bad").write_bytes(b"XXXX")
    with pytest.raises(ValueError):
        read_field(tmp_path / "bad")
