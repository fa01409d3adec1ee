import numpy as np
import pytest
from hypothesis import given, strategies as st

from prestrain_hom.fem import VoxelMesh


@pytest.mark.parametrize("dim,periodic", [(2, True), (3, True), (2, False), (3, False)])
def test_affine_field_has_exact_gradient(dim, periodic, rng):
    mesh = VoxelMesh(dim, 5, periodic=periodic, length=2.0)
    M = rng.standard_normal((dim, dim))
    x = mesh.node_coordinates()
    u = x @ M.T
    if periodic:
        # periodic fields cannot carry a linear part; use a constant instead
        u = np.broadcast_to(M[0], mesh.node_shape + (dim,)).copy()
        assert np.allclose(mesh.gradient(u), 0)
    else:
        assert np.allclose(mesh.gradient(u), M, atol=1e-12)
        pts = rng.uniform(0, 2, (7, dim))
        assert np.allclose(mesh.gradient_at(u, pts), M, atol=1e-12)


@given(st.integers(2, 6), st.sampled_from([2, 3]), st.booleans(), st.integers(0, 2 ** 31))
def test_divergence_is_weighted_adjoint_of_gradient(n, dim, periodic, seed):
    rng = np.random.default_rng(seed)
    mesh = VoxelMesh(dim, n, periodic=periodic)
    u = rng.standard_normal(mesh.node_shape + (dim,))
    P = rng.standard_normal((mesh.nq,) + mesh.elem_shape + (dim, dim))
    lhs = mesh.integrate(np.einsum("...ij,...ij->...", P, mesh.gradient(u)))
    rhs = float(np.sum(mesh.divergence(P) * u))
    assert np.isclose(lhs, rhs, rtol=1e-10, atol=1e-10)


@pytest.mark.parametrize("dim", [2, 3])
def test_integration_of_constants(dim):
    mesh = VoxelMesh(dim, 4, length=3.0)
    f = np.ones((mesh.nq,) + mesh.elem_shape)
    assert np.isclose(mesh.integrate(f), 3.0 ** dim)


def test_shapes():
    m = VoxelMesh(3, 4)
    assert m.node_shape == (4, 4, 4) and m.elem_shape == (4, 4, 4) and m.nq == 8
    m = VoxelMesh(2, 4, periodic=False)
    assert m.node_shape == (5, 5) and m.elem_shape == (4, 4) and m.nq == 4


def test_quadratic_integrand_exact(rng):
    # 2-point Gauss integrates the product of two Q1 gradients exactly
    mesh = VoxelMesh(2, 3, periodic=False)
    x = mesh.node_coordinates()
    u = (x[..., 0] * x[..., 1])[..., None]
    g = mesh.gradient(u)
    val = mesh.integrate(np.einsum("...ij,...ij->...", g, g))
    assert np.isclose(val, 2 / 3)  # int_0^1 int_0^1 x^2 + y^2


def test_center_gradient_matches_pointwise():
    mesh = VoxelMesh(2, 4)
    rng = np.random.default_rng(3)
    u = rng.standard_normal(mesh.node_shape + (2,))
    c = mesh.element_centers()
    assert np.allclose(mesh.center_gradient(u), mesh.gradient_at(u, c), atol=1e-12)
