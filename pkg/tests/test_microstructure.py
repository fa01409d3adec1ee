import json

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from prestrain_hom.errors import (ConstraintViolation, GeometryMismatch, NonPositiveDeterminant,
                                  RankOneViolation)
from prestrain_hom.microstructure import (
    BilayerSpec, MicrostructureCell, abeta_spec, appendix_laminate_sfj, bilayer_cell,
    bilayer_profile, build_cell, cell_from_json, hat_transform, homogeneous_cell,
    make_checkerboard_sfj, make_laminate_sfj, make_single_material_sfj, make_smooth_sfj,
    rotation_factors, single_material_matrices, theta_hat, validate_sfj, validate_voxel_field)

JOINTS = [appendix_laminate_sfj, make_checkerboard_sfj, make_smooth_sfj, make_single_material_sfj]


@pytest.mark.parametrize("make", JOINTS, ids=lambda f: f.__name__)
def test_appendix_joints_validate(make):
    rep = validate_sfj(make(), N=16)
    assert rep.passed, rep.failures
    assert rep.min_det > 0
    assert rep.continuity <= 1e-12 and rep.rank_one <= 1e-12
    assert np.allclose(rep.Abar_quadrature, rep.Abar, atol=1e-12)


def test_checkerboard_mean():
    J = make_checkerboard_sfj()
    assert np.allclose(J.Abar, [[1, 0, 0], [0.25, 1, 0], [0, 0, 1]])


def test_laminate_rank_one_check():
    e1, e2 = np.eye(3)[0], np.eye(3)[1]
    # a jump of the form c e1^T is compatible across an interface normal to e1
    make_laminate_sfj([(0.5, np.eye(3)), (0.5, np.eye(3) + np.outer(e2, e1))])
    with pytest.raises(RankOneViolation):
        make_laminate_sfj([(0.5, np.eye(3)), (0.5, np.eye(3) + np.outer(e1, e2))])


def test_zero_width_layer_is_dropped():
    J = make_laminate_sfj([(1.0, np.eye(3)), (0.0, 5 * np.eye(3))])
    assert len(J.matrices) == 1


def test_single_material_constraint():
    with pytest.raises(ConstraintViolation):
        single_material_matrices(0.5, [1.0, 1.0, 2.0])
    mats = single_material_matrices(1 / np.sqrt(2), [np.sqrt(0.75), 1.0, np.sqrt(1.5)])
    sv = np.linalg.svd(mats, compute_uv=False)
    assert np.allclose(sv, sv[0], atol=1e-12)
    assert np.allclose(sorted(sv[0]), sorted([np.sqrt(1.5), 1.0, np.sqrt(0.75)]))
    for A in mats[1:]:
        R, Q = rotation_factors(A, mats[0])
        assert np.allclose(R @ mats[0] @ Q, A, atol=1e-12)
        assert np.isclose(np.linalg.det(R), 1) and np.isclose(np.linalg.det(Q), 1)


def test_single_material_alpha_one_requires_equal_c():
    single_material_matrices(1.0, [1.2, 1.2, 0.7])
    with pytest.raises(ConstraintViolation):
        single_material_matrices(1.0, [1.0, 1.2, 0.7])


def test_smooth_amplitude_limit():
    with pytest.raises(NonPositiveDeterminant):
        make_smooth_sfj(0.06)


def test_cell_reports_voxel_of_bad_determinant():
    A = np.broadcast_to(np.eye(2), (4, 4, 2, 2)).copy()
    A[2, 1] = np.diag([1.0, -1.0])
    with pytest.raises(NonPositiveDeterminant, match=r"\(2, 1\)"):
        MicrostructureCell(2, 4, 1.0, 1.0, A, np.zeros((2, 2)))
    rep = validate_voxel_field(A)
    assert not rep.passed and rep.min_det_index == (2, 1)


def test_cell_rejects_bad_moduli():
    with pytest.raises(ValueError):
        homogeneous_cell(3, 2, lam=1.0, mu=-1.0)


def test_json_round_trip_preserves_fields(rng):
    lam = rng.uniform(1, 2, (3, 3))
    A = np.eye(2) + 0.1 * rng.standard_normal((3, 3, 2, 2))
    B = rng.standard_normal((3, 3, 2, 2))
    cell = MicrostructureCell(2, 3, lam, 1.0, A, B)
    back = cell_from_json(json.loads(json.dumps(cell.to_json())))
    for name in ("lam", "mu", "A", "B"):
        assert np.array_equal(getattr(cell, name), getattr(back, name))


def test_json_flattening_has_first_index_fastest():
    lam = np.arange(4.0).reshape(2, 2)
    cell = MicrostructureCell(2, 2, lam, 1.0, np.eye(2), np.zeros((2, 2)))
    # voxel (i1, i2) = (1, 0) comes second
    assert cell.to_json()["fields"]["lambda"] == [0.0, 2.0, 1.0, 3.0]


def test_builtin_families_build():
    for fam in ("homogeneous", "bilayer", "abeta", "laminate_a", "checkerboard", "smooth",
                "single_material"):
        cell = build_cell(fam, 3, 4, {})
        assert cell.A.shape == (4, 4, 4, 3, 3)
        assert np.all(np.linalg.det(cell.A) > 0)
    with pytest.raises(ValueError):
        build_cell("nope", 3, 4, {})


def test_cell_mean_matches_joint_mean():
    for make in (appendix_laminate_sfj, make_checkerboard_sfj):
        J = make()
        cell = build_cell({"appendix_laminate_sfj": "laminate_a",
                           "make_checkerboard_sfj": "checkerboard"}[make.__name__], 3, 8, {})
        assert np.allclose(cell.Abar, J.Abar, atol=1e-14)


bilayer_specs = st.builds(
    lambda th, l1, m1, l2, m2, a, c: BilayerSpec(th, l1, m1, l2, m2, np.eye(3) + a, c),
    st.floats(0.01, 0.99), st.floats(0.1, 3), st.floats(0.1, 3), st.floats(0.1, 3),
    st.floats(0.1, 3),
    st.builds(lambda v: np.asarray(v).reshape(3, 3), st.lists(st.floats(-0.3, 0.3), min_size=9, max_size=9)),
    st.builds(np.asarray, st.lists(st.floats(-0.5, 0.5), min_size=3, max_size=3)),
)


@given(st.data())
def test_distorted_fraction_identities(data):
    try:
        s = data.draw(bilayer_specs)
    except NonPositiveDeterminant:
        assume(False)
    assume(np.linalg.det(s.A1) > 1e-2 and np.linalg.det(s.A2) > 1e-2)
    th = theta_hat(s)
    dA = np.linalg.det(s.Abar)
    assert np.isclose(s.theta / th, dA / np.linalg.det(s.A1), rtol=1e-11)
    assert np.isclose((1 - s.theta) / (1 - th), dA / np.linalg.det(s.A2), rtol=1e-11)
    p = bilayer_profile(s)
    assert np.isclose(p.widths.sum(), 1.0, rtol=1e-12)
    assert np.isclose(p.mean(p.mu), s.theta * s.mu1 + (1 - s.theta) * s.mu2, rtol=1e-12)
    assert np.isclose(p.mean(p.lam), s.theta * s.lam1 + (1 - s.theta) * s.lam2, rtol=1e-12)


@pytest.mark.parametrize("beta", [0.5, 1.0, 1.5])
def test_abeta_distorted_fraction(beta):
    s = abeta_spec(beta)
    assert np.isclose(theta_hat(s), beta / 2)
    assert np.allclose(s.Abar, np.eye(3))


def test_abeta_rejects_out_of_range():
    with pytest.raises(ConstraintViolation):
        abeta_spec(2.0)


def test_hat_transform_of_sampled_cell_matches_spec():
    s = abeta_spec(1.5)
    p = hat_transform(bilayer_cell(s, 8))
    q = bilayer_profile(s)
    assert np.isclose(p.widths[:4].sum(), q.widths[0])
    assert np.allclose(p.mean(p.mu), q.mean(q.mu))


def test_hat_transform_rejects_non_laminates():
    with pytest.raises(GeometryMismatch):
        hat_transform(build_cell("checkerboard", 3, 4, {}))


def test_bilayer_requires_positive_determinants():
    with pytest.raises(NonPositiveDeterminant):
        BilayerSpec(0.5, 1, 1, 1, 1, np.eye(3), np.array([-2.0, 0, 0]))
