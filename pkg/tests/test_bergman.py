import math

import numpy as np
import pytest

from kodairalab import bergman as B
from kodairalab import chern as C
from kodairalab import geometry as G
from kodairalab import jets as J
from kodairalab.fields import toric_bump
from kodairalab.sections import BundleSpec, build_space

TWISTS = (toric_bump(2, 0.4), toric_bump(2, -0.3))


def pts(n, count=20, seed=0):
    return G.sample_points(np.random.default_rng(seed), n, count).best_chart()


@pytest.mark.parametrize("p", [1, 7, 32, 128])
def test_cp1_bergman_constant(p):
    sp = build_space(BundleSpec(1, p))
    P = B.bergman_diagonal(sp, pts(1, 100)).P.value[:, 0, 0].real
    assert np.max(np.abs(P - (p + 1))) / (p + 1) < 1e-8


def test_cp2_bergman_constant():
    p = 6
    sp = build_space(BundleSpec(2, p))
    P = B.bergman_diagonal(sp, pts(2, 30)).P.value[:, 0, 0].real
    # dim / vol with vol = 1/2
    assert np.allclose(P, (p + 1) * (p + 2), rtol=1e-10)


def test_split_fs_bundle_blocks_are_constant():
    p = 5
    sp = build_space(BundleSpec(2, p, (1, 2)))
    P = B.bergman_diagonal(sp, pts(2)).P.value
    want = np.diag([math.comb(p + 3, 2) * 2, math.comb(p + 4, 2) * 2])
    assert np.allclose(P, want[None], rtol=1e-10, atol=1e-9)


def test_trace_integral_is_dimension():
    spec = BundleSpec(2, 1, (1, 2), twists=TWISTS)
    for p in (1, 6):
        sp = build_space(spec.with_p(p))
        assert abs(B.trace_integral(sp) - sp.dim) / sp.dim < 1e-10


def test_expansion_residual_cp1():
    rep = B.bergman_expansion_check(BundleSpec(1, 1), [4, 8, 16, 32, 64], pts(1, 10))
    assert np.allclose(rep["residual"], 1, atol=1e-9)
    assert abs(rep["slope"]) < 1e-6
    assert rep["dim_leading_times_nfact"] == 1


def test_expansion_residual_cp2_grows_linearly():
    # dim/vol − p² = 3p + 2
    rep = B.bergman_expansion_check(BundleSpec(2, 1), [4, 6, 8, 10, 12], pts(2, 5))
    assert np.allclose(rep["residual"], [3 * p + 2 for p in rep["p_grid"]], rtol=1e-9)
    assert rep["dim_leading_times_nfact"] == 1


def test_dim_leading_coefficient_rank_two():
    # n-th difference of dim in p is n!·(r/n!)·∫c₁(L)ⁿ = r
    rep = B.bergman_expansion_check(BundleSpec(2, 1, (1, 2)), [3], pts(2, 2))
    assert rep["dim_leading_times_nfact"] == 2


@pytest.mark.parametrize("d", [0, 1, 3])
def test_veronese_pullback(d):
    x = pts(1)
    for p in (1, 5, 17):
        sp = build_space(BundleSpec(1, p, (d,)))
        diff = B.pullback_chern_form(sp, 1, x) - G.kaehler_form(x) * float(p + d)
        assert np.max(J.form_norm(diff, G.omega_matrix(x))) < 1e-8


def test_pullback_metric_cp1_closed_form():
    p = 6
    x = pts(1)
    h = B.kodaira_pullback_metric(build_space(BundleSpec(1, p)), x).value[:, 0, 0].real
    w = (1 + np.abs(x.coords[:, 0]) ** 2) ** (-p)
    assert np.allclose(h, w / (p + 1), rtol=1e-10)


def test_pullback_metric_positive():
    sp = build_space(BundleSpec(2, 4, (1, 2), twists=TWISTS))
    h = B.kodaira_pullback_metric(sp, pts(2)).value
    assert np.all(np.linalg.eigvalsh(0.5 * (h + np.conj(np.swapaxes(h, 1, 2)))) > 0)


def test_curvature_transfer():
    assert B.curvature_transfer_residual(build_space(BundleSpec(1, 5)), pts(1)) < 1e-9
    sp = build_space(BundleSpec(2, 5, (1, 2), twists=TWISTS))
    assert B.curvature_transfer_residual(sp, pts(2, 49)) < 1e-7


def test_pullback_chern_integrals_are_topological():
    spec = BundleSpec(2, 3, (1, 2), twists=TWISTS)
    sp = build_space(spec)
    rule = G.make_rule(2, 16, 1).torus_reduced()
    c1 = B.pullback_chern_integral(sp, 1, rule)
    c2 = B.pullback_chern_integral(sp, 2, rule)
    # pullback of T* is L^p⊗E in cohomology: c₁ = 2p + 3, c₂ = (p+1)(p+2)
    assert abs(c1 - 9) < 1e-8 and abs(c2 - 20) < 1e-8
    assert abs(B.bundle_chern_integral(spec, 2, rule) - 20) < 1e-8


def test_fit_slope():
    p = np.array([5, 8, 12, 17, 25])
    assert abs(B.fit_slope(p, 3.0 * p ** -1.5) + 1.5) < 1e-12
    # the smallest grid point is excluded
    r = 3.0 * p ** -1.5
    r[0] = 1e6
    assert abs(B.fit_slope(p, r) + 1.5) < 1e-12
    with pytest.raises(ValueError):
        B.fit_slope([1, 2, 3], [1, 1, 1])


def test_tian_residual_vanishes_in_veronese_case():
    rep = B.tian_residual(1, BundleSpec(1, 1), [2, 4, 8, 16], pts(1, 10))
    assert max(rep.residual1) < 1e-10
    assert max(rep.residual2) < 1e-10


def test_tian_residual_rejects_bad_degree():
    with pytest.raises(ValueError):
        B.tian_residual(3, BundleSpec(2, 1, (1, 2)), [2, 3, 4, 5], pts(2, 2))


def test_tian_bound_equals_p_times_second_order_for_k1():
    # k = 1 prequantum: Φ*c₁ − c₁(L^p⊗E) = p·(p⁻¹Φ*c₁ − r ω − p⁻¹c₁(E))
    spec = BundleSpec(2, 1, (1, 2), twists=TWISTS)
    x = pts(2, 8)
    for p in (3, 5):
        r1, r2, bound = B.tian_point(1, spec, p, x)
        assert abs(bound - p * r2) < 1e-9 * max(1, bound)


def test_tian_rates_first_order():
    spec = BundleSpec(2, 1, (1, 2), twists=TWISTS)
    rep = B.tian_residual(1, spec, (5, 8, 12, 17, 25), pts(2, 50))
    assert rep.slope1 <= -0.8
    assert rep.slope2 <= -1.7
