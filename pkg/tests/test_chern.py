import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kodairalab import chern as C
from kodairalab import geometry as G
from kodairalab import jets as J
from kodairalab.fields import toric_bump
from kodairalab.sections import BundleSpec


def pts(n, count=12, seed=0):
    return G.sample_points(np.random.default_rng(seed), n, count).best_chart()


def test_flat_metric_has_zero_curvature():
    h = J.MatrixJet.identity(2, 2, (3,))
    assert not np.any(C.raw_curvature(h))
    for k in (1, 2):
        assert np.allclose(C.chern_form(k, h).coeffs, 0)


def test_fs_line_curvature_is_omega():
    x = pts(1)
    c1 = C.chern_form(1, C.scalar_frame(G.fs_weight_jet(x)))
    assert np.allclose(c1.coeffs, G.omega_matrix(x), atol=1e-15)
    center = G.ChartPoint.center(1)
    assert np.isclose(C.chern_form(1, C.scalar_frame(G.fs_weight_jet(center))).coeffs[0, 0, 0], 1 / (2 * np.pi))


@pytest.mark.parametrize("p", [1, 3, 10])
def test_line_power_curvature_scales(p):
    x = pts(2)
    c1 = C.chern_form(1, C.scalar_frame(J.power(G.fs_weight_jet(x), p)))
    assert np.allclose(c1.coeffs, p * G.omega_matrix(x), atol=1e-13)


def test_invariant_polynomial_low_degrees():
    rng = np.random.default_rng(3)
    a = C.MatrixOfForms(rng.standard_normal((1, 2, 2, 2, 2)) + 0j)
    assert np.allclose(C.invariant_polynomial(0, a).coeffs, 1)
    assert np.allclose(C.invariant_polynomial(1, a).coeffs, a.trace().coeffs)


def test_invariant_polynomial_diagonal_is_product():
    rng = np.random.default_rng(4)
    al = rng.standard_normal((1, 2, 2)) + 0j
    be = rng.standard_normal((1, 2, 2)) + 0j
    coeffs = np.zeros((1, 2, 2, 2, 2), complex)
    coeffs[:, 0, 0], coeffs[:, 1, 1] = al, be
    p2 = C.invariant_polynomial(2, C.MatrixOfForms(coeffs))
    want = J.wedge(J.FormAtPoint.from_11(al), J.FormAtPoint.from_11(be))
    assert np.allclose(p2.coeffs, want.coeffs)


def test_split_bundle_first_chern_form_on_cp1():
    x = pts(1)
    spec = BundleSpec(1, 1, (2, 3), allow_rank_exceeds_dim=True)
    c1 = C.chern_form(1, spec.e_frame(x))
    assert np.allclose(c1.coeffs, 5 * G.omega_matrix(x), atol=1e-13)


def test_chern_forms_are_real():
    x = pts(2)
    spec = BundleSpec(2, 3, (1, 2), twists=(toric_bump(2, 0.4), toric_bump(2, -0.3)))
    for k in (1, 2):
        assert np.max(C.chern_form(k, spec.frame_metric(x)).reality_defect()) < 1e-12


def test_c2_of_split_bundle_integrates_to_one():
    spec = BundleSpec(2, 1, (1, 1))
    rule = G.make_rule(2, 12, 1).torus_reduced()
    assert abs(C.chern_integral(2, spec.e_frame, rule) - 1) < 1e-12
    assert abs(C.chern_integral(1, spec.e_frame, rule) - 2) < 1e-12


def test_chern_integral_is_metric_independent():
    spec = BundleSpec(2, 1, (1, 2), twists=(toric_bump(2, 0.4), toric_bump(2, -0.3)))
    rule = G.make_rule(2, 24, 1).torus_reduced()
    # c(O(1)⊕O(2)) = 1 + 3ω + 2ω²
    assert abs(C.chern_integral(1, spec.e_frame, rule) - 3) < 1e-9
    assert abs(C.chern_integral(2, spec.e_frame, rule) - 2) < 1e-9


def test_intermediate_degrees():
    spec = BundleSpec(2, 1, (1, 1))
    rule = G.make_rule(2, 12, 1).torus_reduced()
    h0 = 6
    assert abs(C.intermediate_degree(5, spec.e_frame, 2, h0, rule) - 1) < 1e-12
    assert abs(C.intermediate_degree(4, spec.e_frame, 2, h0, rule) - 2) < 1e-12
    line = BundleSpec(2, 1, (3,))
    assert abs(C.intermediate_degree(9, line.e_frame, 1, 10, rule) - 3) < 1e-12
    with pytest.raises(ValueError):
        C.intermediate_degree(2, spec.e_frame, 2, h0, rule)


def test_tensor_identity_line_bundle_and_k0():
    x = pts(2)
    spec = BundleSpec(2, 1, (2,), twists=(toric_bump(2, 0.5),))
    assert C.tensor_chern_identity_residual(4, 1, spec.line_weight(x), spec.e_frame(x)) < 1e-9
    assert C.tensor_chern_identity_residual(4, 0, spec.line_weight(x), spec.e_frame(x)) == 0


def test_tensor_identity_rank_two():
    x = pts(2)
    spec = BundleSpec(2, 1, (1, 2), twists=(toric_bump(2, 0.4), toric_bump(2, -0.3)))
    assert C.tensor_chern_identity_residual(3, 2, spec.line_weight(x), spec.e_frame(x)) < 1e-8


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 10), st.floats(-0.6, 0.6), st.floats(-0.6, 0.6))
def test_tensor_identity_property(p, a, b):
    x = pts(2, 6, seed=p)
    spec = BundleSpec(2, 1, (0, 1), twists=(toric_bump(2, a), toric_bump(2, b)),
                      line_twist=toric_bump(2, 0.2))
    for k in (1, 2):
        assert C.tensor_chern_identity_residual(p, k, spec.line_weight(x), spec.e_frame(x)) < 1e-8


def test_top_density_of_omega_power():
    x = pts(2)
    assert np.allclose(C.top_density(G.kaehler_form(x).power(2), x), 1)
