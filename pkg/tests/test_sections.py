import math

import numpy as np
import pytest

from kodairalab import geometry as G
from kodairalab import sections as S
from kodairalab.fields import MatrixTwist, toric_bump, wave_field
from kodairalab.sections import BundleSpec, build_space


def test_dimension_formula():
    assert BundleSpec(2, 4, (4, 4)).dim == 2 * math.comb(2 + 8, 2)
    assert BundleSpec(2, 5, (1, 2)).dim == math.comb(8, 2) + math.comb(9, 2)
    assert BundleSpec(1, 3, (0, 0, 0), allow_rank_exceeds_dim=True).dim == 12
    assert S.h0_dimension(2, (1, 1)) == 6


def test_spec_validation():
    with pytest.raises(ValueError):
        BundleSpec(1, 3, (0, 0))
    with pytest.raises(ValueError):
        BundleSpec(1, 0)
    with pytest.raises(ValueError):
        BundleSpec(1, 2, (-3,))
    with pytest.raises(ValueError):
        BundleSpec(1, 2, (0,), twists=(toric_bump(1, 0.1), toric_bump(1, 0.1)))


def test_cp1_o1_gram():
    sp = build_space(BundleSpec(1, 1))
    assert np.allclose(sp.gram, np.diag([0.5, 0.5]), atol=1e-15)


@pytest.mark.parametrize("p", [1, 5, 12, 20])
def test_cp1_gram_closed_form(p):
    sp = build_space(BundleSpec(1, p))
    want = np.array([1 / ((p + 1) * math.comb(p, int(b[1]))) for b in sp.beta])
    assert np.allclose(np.diag(sp.gram).real, want, rtol=1e-12, atol=0)
    assert np.max(np.abs(sp.gram - np.diag(np.diag(sp.gram)))) < 1e-12


def test_cp2_o1_gram():
    # ∫ |Z_j|²/|Z|² ω²/2 = (1/3)(1/2)
    sp = build_space(BundleSpec(2, 1))
    assert np.allclose(sp.gram, np.eye(3) / 6, atol=1e-15)


@pytest.mark.parametrize("spec", [
    BundleSpec(2, 4, (1, 2), twists=(toric_bump(2, 0.4), toric_bump(2, -0.3))),
    BundleSpec(1, 6, (0, 1), twists=(wave_field(0.3), toric_bump(1, 0.2)), allow_rank_exceeds_dim=True),
    BundleSpec(1, 5, (0,), line_twist=toric_bump(1, 0.3)),
])
def test_gram_is_hermitian_and_orthonormalized(spec):
    sp = build_space(spec)
    g = sp.gram
    assert np.allclose(g, g.conj().T)
    assert np.all(np.linalg.eigvalsh(g) > 0)
    m = sp.orthonormalizer
    assert np.allclose(m @ g @ m.conj().T, np.eye(sp.dim), atol=1e-10)


def test_gram_against_brute_force_quadrature():
    spec = BundleSpec(1, 3, (0,), twists=(wave_field(0.4),))
    sp = build_space(spec)
    rule = G.make_rule(1, 96, 96)
    x = rule.nodes
    vals, _ = S.monomials(sp, x)
    h = spec.frame_metric(x).value[:, 0, 0]
    brute = np.einsum("n,ni,nj,n->ij", rule.weights, np.conj(vals), vals, h)
    assert np.allclose(sp.gram, brute, atol=1e-13)


def test_resolution_error_for_coarse_rule():
    with pytest.raises(S.ResolutionError):
        build_space(BundleSpec(1, 40), G.make_rule(1, 8, 4))


def test_monomial_evaluation_and_linearity():
    sp = build_space(BundleSpec(1, 3))
    x = G.ChartPoint(0, [[0.5 + 0.2j], [1.3 - 0.4j]])
    for i, b in enumerate(sp.beta):
        c = np.zeros(sp.dim)
        c[i] = 1
        jet = S.evaluate_section_jet(sp, c, x)[0]
        z = x.coords[:, 0]
        assert np.allclose(jet.value, z ** b[1])
    rng = np.random.default_rng(0)
    a, b = rng.standard_normal((2, sp.dim)) + 0j
    va = S.evaluate_section_jet(sp, a, x)[0].value
    vb = S.evaluate_section_jet(sp, b, x)[0].value
    assert np.allclose(S.evaluate_section_jet(sp, 2 * a - 3j * b, x)[0].value, 2 * va - 3j * vb)


def test_pointwise_norm_of_constant_section():
    p = 4
    sp = build_space(BundleSpec(1, p))
    x = G.ChartPoint(0, [[0.3 + 0.4j], [2.0]])
    c = np.zeros(sp.dim)
    c[[i for i, b in enumerate(sp.beta) if b[1] == 0][0]] = 1
    n2 = S.pointwise_norm2(sp, c, x)
    assert np.allclose(n2.value.real, (1 + np.abs(x.coords[:, 0]) ** 2) ** (-p))


def test_gaussian_norm_and_covariance():
    sp = build_space(BundleSpec(1, 3, (0, 1), allow_rank_exceeds_dim=True))
    rng = np.random.default_rng(1)
    c = S.sample_gaussian_section(sp, rng, 10_000)
    n2 = S.l2_norm2(sp, c)
    assert abs(n2.mean() - sp.dim) < 4 * n2.std() / math.sqrt(len(n2))
    # coordinates against the orthonormal basis are white
    u = c @ np.conj(np.linalg.cholesky(sp.gram))
    cov = u.T @ np.conj(u) / len(u)
    assert np.max(np.abs(cov - np.eye(sp.dim))) < 4 / math.sqrt(len(u)) * 2


def test_fs_sections_have_unit_norm():
    sp = build_space(BundleSpec(2, 2))
    c = S.sample_fs_section(sp, np.random.default_rng(2), 50)
    assert np.allclose(S.l2_norm2(sp, c), 1)


def test_fs_pushforward_matches_quadrature():
    # on P V₁ = P¹ the normalized Gaussian is FS distributed, so |u_0|² is uniform
    sp = build_space(BundleSpec(1, 1))
    c = S.sample_fs_section(sp, np.random.default_rng(3), 20_000)
    u = c @ np.conj(np.linalg.cholesky(sp.gram))
    t = np.abs(u[:, 0]) ** 2
    assert abs(t.mean() - 0.5) < 4 * math.sqrt(1 / 12 / len(t))
    assert abs((t ** 2).mean() - 1 / 3) < 4 * math.sqrt((1 / 5 - 1 / 9) / len(t))


def test_constant_twist_rejects_bad_matrices():
    with pytest.raises(ValueError):
        S.constant_twist_spec(1, 3, np.array([[1, 2], [0, 1]]))
    with pytest.raises(ValueError):
        S.constant_twist_spec(1, 3, np.array([[1, 0], [0, -1]]))
    with pytest.raises(ValueError):
        S.constant_twist_spec(1, 3, np.diag([1, 1e-10]))


def test_covariance_identity_matrix():
    spec = S.constant_twist_spec(1, 3, np.eye(2))
    rep = S.covariance_experiment(build_space(spec), build_space(BundleSpec(1, 3)), 10_000,
                                  np.random.default_rng(4))
    assert np.allclose(rep["target"], 4 * np.eye(2))
    assert np.all(np.abs(rep["estimate"] - rep["target"]) <= 4 * rep["sigma"])


def test_covariance_twisted_rank_two():
    a = np.array([[2.0, 1.0], [1.0, 1.0]])
    spec = S.constant_twist_spec(1, 5, a)
    rep = S.covariance_experiment(build_space(spec), build_space(BundleSpec(1, 5)), 10_000,
                                  np.random.default_rng(5))
    est = rep["estimate"]
    assert np.allclose(rep["target"], 6 * a)
    assert abs(est[0, 1] - 6) <= 4 * rep["sigma"][0, 1]
    assert np.allclose(est, est.conj().T, atol=1e-12)
    assert np.all(rep["coordinate_z"] < 4) and np.all(rep["shape_z"] < 4)


def test_matrix_twist_needs_equal_degrees():
    tw = MatrixTwist(((1.0, 0.0), (0.0, 1.0)))
    with pytest.raises(ValueError):
        BundleSpec(1, 2, (0, 1), matrix=tw, allow_rank_exceeds_dim=True)
