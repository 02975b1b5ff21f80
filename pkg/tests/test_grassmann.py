import numpy as np
import pytest

from kodairalab import chern as C
from kodairalab import geometry as G
from kodairalab import grassmann as GR
from kodairalab import jets as J

CASES = [(1, 3), (2, 4), (2, 5), (3, 6)]


def test_universal_metric_at_center():
    x = GR.GrassChartPoint.center(2, 4)
    k = GR.universal_metric(x)
    assert np.allclose(k.value[0], np.eye(2)) and not k.d.any()
    # mixed_{(jl),(kl')} of entry (k, j): 1 iff k, j match the coordinates and l = l'
    for a in range(4):
        for b in range(4):
            j, l = divmod(a, 2)
            k2, l2 = divmod(b, 2)
            want = np.zeros((2, 2))
            if l == l2:
                want[j, k2] = 1
            assert np.allclose(k.mixed[0, :, :, a, b], want)


def test_universal_metric_jets_against_finite_differences():
    from kodairalab import oracles
    rng = np.random.default_rng(0)
    x = GR.GrassChartPoint.random(rng, 2, 4, 1)
    z0 = x.Z[0].ravel()
    k = GR.universal_metric(x)
    for i in range(2):
        for j in range(2):
            def f(pts, i=i, j=j):
                z = pts.reshape(-1, 2, 2)
                return (np.eye(2)[None] + z @ np.conj(np.swapaxes(z, 1, 2)))[:, i, j]
            v, d, db, mx = oracles.wirtinger_fd(f, z0)
            assert np.allclose(k.d[0, i, j], d, atol=1e-7)
            assert np.allclose(k.mixed[0, i, j], mx, atol=1e-7)


def test_g12_is_projective_line():
    z = np.array([[[0.4 - 0.7j]]])
    x = GR.GrassChartPoint(1, 2, z)
    assert np.isclose(GR.universal_metric(x).value[0, 0, 0], 1 + abs(z[0, 0, 0]) ** 2)
    assert np.isclose(GR.dual_universal_metric(x).value[0, 0, 0], 1 / (1 + abs(z[0, 0, 0]) ** 2))
    c1 = GR.chern_form_dual_universal(1, x).coeffs
    assert np.allclose(c1, G.omega_matrix(G.ChartPoint(0, z[:, 0, :])), atol=1e-16)


def test_dual_metric_inverts_transpose():
    rng = np.random.default_rng(1)
    x = GR.GrassChartPoint.random(rng, 2, 5, 10)
    k = GR.universal_metric(x).value
    h = GR.dual_universal_metric(x).value
    assert np.allclose(h @ np.swapaxes(k, 1, 2), np.eye(2))
    assert np.allclose(GR.dual_universal_metric(GR.GrassChartPoint.center(2, 5)).value[0], np.eye(2))


def test_universal_metric_positive_definite():
    rng = np.random.default_rng(2)
    x = GR.GrassChartPoint.random(rng, 3, 6, 50, scale=3.0)
    assert np.all(np.linalg.eigvalsh(GR.universal_metric(x).value) > 0)


@pytest.mark.parametrize("r,m", CASES)
def test_center_curvature_formula(r, m):
    got = C.raw_curvature(GR.dual_universal_metric(GR.GrassChartPoint.center(r, m)))[0]
    assert np.max(np.abs(got - GR.center_curvature_dual(r, m))) < 1e-12


@pytest.mark.parametrize("r,m", CASES)
def test_dual_is_minus_transpose(r, m):
    rng = np.random.default_rng(r * 10 + m)
    n = 1000 if (r, m) != (3, 6) else 200
    assert GR.dual_transpose_defect(GR.GrassChartPoint.random(rng, r, m, n)) < 1e-12


def test_center_first_chern_form_g24():
    c1 = GR.chern_form_dual_universal(1, GR.GrassChartPoint.center(2, 4)).coeffs[0]
    assert np.allclose(c1, np.eye(4) / (2 * np.pi), atol=1e-15)
    assert np.allclose(GR.chern_form_dual_universal(0, GR.GrassChartPoint.center(2, 4)).coeffs, 1)


@pytest.mark.parametrize("r,m", [(1, 3), (2, 4), (2, 5), (3, 6)])
def test_first_chern_form_positive(r, m):
    rng = np.random.default_rng(9)
    assert np.all(GR.c1_min_eigenvalue(GR.GrassChartPoint.random(rng, r, m, 30)) > 0)


@pytest.mark.parametrize("m", [2, 3, 4])
def test_line_integral(m):
    assert abs(GR.line_integral_c1(m) - 1) < 1e-8


def test_rotated_pairing_is_unitary_invariant():
    rng = np.random.default_rng(4)
    for m in (2, 3):
        base = GR.rotated_pairing(m)
        u = GR.random_unitary(rng, m)
        assert np.allclose(u.conj().T @ u, np.eye(m))
        assert abs(GR.rotated_pairing(m, u) - base) < 1e-10
    with pytest.raises(ValueError):
        GR.rotated_pairing(4)


def test_bad_shapes():
    with pytest.raises(ValueError):
        GR.GrassChartPoint(3, 2, np.zeros((1, 3, 0)))
    with pytest.raises(ValueError):
        GR.GrassChartPoint(2, 4, np.zeros((1, 2, 3)))
    with pytest.raises(ValueError):
        GR.chern_form_dual_universal(3, GR.GrassChartPoint.center(2, 4))
