import numpy as np
import pytest
import scipy.optimize as so
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from prestrain_hom.algebra import build_sym_basis
from prestrain_hom.cellsolver import assemble_effective, limit_energy
from prestrain_hom.errors import LineSearchFailure, NonConvergence
from prestrain_hom.microstructure import BilayerSpec, MicrostructureCell, bilayer_cell, homogeneous_cell
from prestrain_hom.nonlinear import (PrestrainedEnergy, _objective, cell_min_nonlinear,
                                     expansion_check, lbfgs, polar_check, svk_energy, svk_stress)
from prestrain_hom.verify import random_rotation

mats = arrays(np.float64, (3, 3), elements=st.floats(-2, 2))
moduli = st.tuples(st.floats(0.1, 3), st.floats(0.1, 3))
seeds = st.integers(0, 2 ** 31)


@given(mats, moduli, seeds)
def test_frame_indifference(F, lm, seed):
    R = random_rotation(np.random.default_rng(seed))
    lam, mu = lm
    diff = abs(svk_energy(lam, mu, R @ F) - svk_energy(lam, mu, F))
    assert diff <= 1e-12 * (1 + np.sum(F * F) ** 2)


@given(mats, moduli)
def test_stress_is_energy_derivative(X, lm):
    lam, mu = lm
    F = np.eye(3) + 0.3 * X
    P = svk_stress(lam, mu, F)
    fd = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            E = np.zeros((3, 3))
            E[i, j] = 1e-6
            fd[i, j] = (svk_energy(lam, mu, F + E) - svk_energy(lam, mu, F - E)) / 2e-6
    assert np.linalg.norm(fd - P) <= 1e-6 * max(np.linalg.norm(P), 1.0)


@given(seeds, st.floats(0.0, 0.2))
def test_prestrained_rest_state(seed, h):
    rng = np.random.default_rng(seed)
    spec = BilayerSpec(0.5, 1.0, 1.0, 2.0, 2.0, np.eye(3) + 0.1 * rng.standard_normal((3, 3)),
                       0.1 * rng.standard_normal(3), rng.standard_normal((3, 3)),
                       rng.standard_normal((3, 3)))
    W = PrestrainedEnergy(bilayer_cell(spec, 2), h)
    R = random_rotation(rng)
    assert np.abs(W.value(R @ W.Ah)).max() <= 1e-24 * (1 + np.abs(W.Ah).max() ** 4)


@pytest.mark.parametrize("h", [0.1, 1e-3])
def test_scaled_form_matches_direct_energy(h, rng):
    cell = bilayer_cell(BilayerSpec(0.5, 1.0, 1.0, 2.0, 3.0, np.diag([1.1, 1, 1]),
                                    np.array([0.2, 0.1, 0.0])), 2)
    W = PrestrainedEnergy(cell, h)
    X = rng.standard_normal((2, 2, 2, 3, 3))
    dens, dX, _ = W.scaled(X)
    direct = W.value(cell.A + h * X) / h ** 2
    assert np.allclose(dens, direct, rtol=1e-6 if h < 1e-2 else 1e-12)
    assert np.allclose(dX, W.gradient(cell.A + h * X) / h, rtol=1e-6, atol=1e-8)


def test_lbfgs_rosenbrock():
    fun = lambda x: (so.rosen(x), so.rosen_der(x))
    res = lbfgs(fun, np.array([-1.2, 1.0]), gtol=1e-10)
    assert np.allclose(res.x, 1.0, atol=1e-7)
    assert all(b <= a for a, b in zip(res.history, res.history[1:]))


def test_lbfgs_failures():
    with pytest.raises(LineSearchFailure):
        lbfgs(lambda x: (np.inf, None), np.zeros(2), 1e-8)
    with pytest.raises(NonConvergence):
        lbfgs(lambda x: (so.rosen(x), so.rosen_der(x)), np.array([-1.2, 1.0]), 1e-12, maxiter=2)


def test_cell_minimum_agrees_with_scipy(rng):
    N, h = 4, 0.05
    cell = MicrostructureCell(2, N, rng.uniform(1, 2, (N, N)), rng.uniform(1, 2, (N, N)),
                              np.eye(2), 0.5 * rng.standard_normal((N, N, 2, 2)))
    G = np.array([[0.2, 0.1], [0.0, -0.1]])
    ours = cell_min_nonlinear(cell, G, h)
    fun, _ = _objective(cell, PrestrainedEnergy(cell, h), G, False)
    ref = so.minimize(lambda x: fun(x), np.zeros(N * N * 2), jac=True, method="L-BFGS-B",
                      options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 5000})
    assert ours.value == pytest.approx(ref.fun, rel=1e-10)


def test_h_outside_range():
    cell = homogeneous_cell(2, 2)
    with pytest.raises(ValueError):
        cell_min_nonlinear(cell, None, 0.5)
    with pytest.raises(ValueError):
        cell_min_nonlinear(cell, None, 0.0)


def test_homogeneous_cell_without_prestrain_has_explicit_minimum():
    cell = homogeneous_cell(3, 2, 1.0, 1.0)
    G = np.diag([0.1, 0.0, 0.0])
    h = 0.1
    r = cell_min_nonlinear(cell, G, h, init="zero")
    assert r.value == pytest.approx(svk_energy(1.0, 1.0, np.eye(3) + h * G) / h ** 2, rel=1e-12)


def test_expansion_error_halves_on_coarse_bilayer():
    cell = bilayer_cell(BilayerSpec(0.5, 1.0, 1.0, 2.0, 2.0), 4)
    eff = assemble_effective(cell)
    G2 = build_sym_basis(3).matrices[1]
    rep = expansion_check(cell, G2, [0.1, 0.05, 0.025], eff)
    assert rep["limit_prediction"] == pytest.approx(limit_energy(eff, G2))
    assert all(r <= 0.6 for r in rep["ratios"])
    with pytest.raises(ValueError):
        expansion_check(cell, G2, [0.05, 0.1], eff)


def test_polar_factor_for_constant_prestrain():
    B = np.array([[0.5, 0.2, 0], [0.2, -0.3, 0], [0, 0, 0.1]])
    cell = homogeneous_cell(3, 2, 1.0, 1.0, B)
    out = polar_check(cell, 0.01)
    # the rest state A_h = I + hB is reached exactly, so the deviation is O(h)
    assert out["deviation"] <= 0.01 * np.abs(B).max() * 5
