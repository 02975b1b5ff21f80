import math

import numpy as np
import pytest

from kodairalab import geometry as G
from kodairalab import jets as J
from kodairalab import oracles


def test_model_space_bounds():
    assert G.ModelSpace(2).volume == 0.5
    with pytest.raises(ValueError):
        G.ModelSpace(3)


def test_fs_weight_at_center_and_unit_circle():
    x = G.ChartPoint(0, [[0.0], [1.0]])
    phi = G.fs_weight_jet(x)
    assert np.allclose(phi.value, [1.0, 0.5])
    assert np.isclose(J.log(phi).mixed[0, 0, 0], -1)
    g = G.omega_matrix(x)[:, 0, 0].real
    assert np.isclose(g[0], 1 / (2 * np.pi))
    assert np.isclose(g[1] / g[0], 0.25)


def test_omega_density_against_finite_differences():
    z0 = np.array([0.6 - 0.3j, 0.2 + 0.9j])
    _, _, _, mx = oracles.wirtinger_fd(lambda pts: np.log(1 + np.sum(np.abs(pts) ** 2, axis=1)), z0)
    assert np.allclose(G.omega_matrix(G.ChartPoint(0, [z0]))[0], mx / (2 * np.pi), atol=1e-8)


def test_homogeneous_roundtrip():
    rng = np.random.default_rng(0)
    Z = rng.standard_normal((20, 3)) + 1j * rng.standard_normal((20, 3))
    x = G.ChartPoint.from_homogeneous(Z)
    assert np.all(np.abs(x.coords) <= 1 + 1e-12)
    back = x.homogeneous()
    # same projective point: proportional rows
    ratio = back / Z
    assert np.allclose(ratio, ratio[:, :1])


def test_omega_is_chart_independent():
    rng = np.random.default_rng(1)
    x = G.sample_fs_point(rng, 2, 30)
    for chart in range(3):
        ok = np.abs(x.homogeneous()[:, chart]) > 1e-3
        xs = x[np.flatnonzero(ok)]
        jac = G.transition_jacobian(xs, chart)
        moved = G.omega_matrix(xs.to_chart(chart))
        assert np.allclose(G.pullback_11(moved, jac), G.omega_matrix(xs), atol=1e-12)


def test_quadrature_total_mass():
    assert np.isclose(G.make_rule(1, 16, 4).total_mass, 1.0)
    assert np.isclose(G.make_rule(2, 8, 4).total_mass, 0.5)


def test_integrate_constant_and_radial():
    one = lambda x: np.ones(len(x))
    assert abs(G.integrate(one, G.make_rule(1)) - 1) < 1e-13
    assert abs(G.integrate(one, G.make_rule(2)) - 0.5) < 1e-13
    # ∫₀^∞ (1+u)⁻³ du = 1/2
    f = lambda x: 1 / (1 + np.abs(x.coords[:, 0]) ** 2)
    assert abs(G.integrate(f, G.make_rule(1)) - 0.5) < 1e-13
    assert abs(G.integrate(f, G.make_rule(1, 32, 8)) - G.integrate(f, G.make_rule(1, 64, 16))) < 1e-14


def test_integral_of_omega_power_is_one():
    for n in (1, 2):
        rule = G.make_rule(n, 16, 8)
        dens = lambda x: G.kaehler_form(x).power(x.n).top().real / np.linalg.det(G.omega_matrix(x)).real
        # ωⁿ/det g = n!, so the ratio integrates to n!·(1/n!) = 1
        assert abs(G.integrate(dens, rule) - 1) < 1e-12


def test_integrate_rejects_nonfinite():
    with pytest.raises(G.EvaluationError):
        G.integrate(lambda x: np.full(len(x), np.nan), G.make_rule(1, 4, 4))


def test_fs_sampling_statistics():
    rng = np.random.default_rng(7)
    x = G.sample_fs_point(rng, 1, 100_000)
    z = np.abs(x.to_chart(0).coords[:, 0])
    assert abs(np.median(z) - 1) < 0.01
    f = 1 / (1 + z**2)
    assert abs(f.mean() - 0.5) < 3 * f.std() / math.sqrt(len(f))
    assert np.all(np.abs(x.coords) <= 1 + 1e-12)


def test_sample_points_starts_at_center():
    x = G.sample_points(np.random.default_rng(0), 2, 5)
    assert len(x) == 6 and x.chart[0] == 0 and np.all(x.coords[0] == 0)


def test_chordal_distance():
    a = G.ChartPoint(0, [[0.0]])
    b = G.ChartPoint(1, [[0.0]])
    assert np.isclose(G.chordal_distance(a, b)[0], 1)
    assert np.isclose(G.chordal_distance(a, a)[0], 0)
