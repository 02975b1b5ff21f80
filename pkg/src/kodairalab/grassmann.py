"""Chart-level geometry of the universal bundle on the Grassmannian G(r, m).

A point W near the base plane W₀ is the row space of [I | Z] with Z an
r×(m−r) complex matrix.  The coordinate z_{jl} has flat index
a = j·(m−r) + l.  The tautological frame has metric K = I + ZZ*, and the
dual frame of T* has metric H = (K⁻¹)ᵀ = (I + Z̄Zᵀ)⁻¹.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import chern as C
from . import geometry as G
from . import jets as J


@dataclass(frozen=True, eq=False)
class GrassChartPoint:
    """Batch of chart points; ``Z`` has shape (N, r, m−r)."""

    r: int
    m: int
    Z: np.ndarray

    def __post_init__(self):
        if not 1 <= self.r <= self.m:
            raise ValueError(f"need 1 <= r <= m, got r={self.r}, m={self.m}")
        z = np.asarray(self.Z, dtype=complex)
        if z.ndim == 2:
            z = z[None]
        if z.shape[1:] != (self.r, self.m - self.r):
            raise ValueError(f"Z has shape {z.shape[1:]}, expected {(self.r, self.m - self.r)}")
        if not np.all(np.isfinite(z)):
            raise ValueError("chart coordinates must be finite")
        object.__setattr__(self, "Z", z)

    @property
    def dim(self) -> int:
        return self.r * (self.m - self.r)

    def __len__(self) -> int:
        return self.Z.shape[0]

    @classmethod
    def center(cls, r: int, m: int) -> "GrassChartPoint":
        return cls(r, m, np.zeros((1, r, m - r), complex))

    @classmethod
    def random(cls, rng: np.random.Generator, r: int, m: int, size: int, scale: float = 1.0) -> "GrassChartPoint":
        shape = (size, r, m - r)
        z = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * (scale / math.sqrt(2))
        return cls(r, m, z)

    def index(self, j: int, l: int) -> int:
        return j * (self.m - self.r) + l


def universal_metric(x: GrassChartPoint) -> J.MatrixJet:
    """Jet of K = I + ZZ* in the coordinates z_{jl}."""
    r, q = x.r, x.m - x.r
    n, dim = len(x), x.dim
    z = x.Z
    value = np.eye(r, dtype=complex)[None] + z @ np.conj(np.swapaxes(z, 1, 2))
    d = np.zeros((n, r, r, dim), complex)
    dbar = np.zeros((n, r, r, dim), complex)
    mixed = np.zeros((n, r, r, dim, dim), complex)
    for i in range(r):
        for l in range(q):
            a = x.index(i, l)
            # ∂/∂z_{il} K_{kj} = δ_{ki} z̄_{jl};  ∂/∂z̄_{il} K_{kj} = z_{kl} δ_{ji}
            d[:, i, :, a] = np.conj(z[:, :, l])
            dbar[:, :, i, a] = z[:, :, l]
            for i2 in range(r):
                mixed[:, i, i2, a, x.index(i2, l)] = 1.0
    return J.MatrixJet(value, d, dbar, mixed)


def dual_universal_metric(x: GrassChartPoint) -> J.MatrixJet:
    """Jet of H = (K⁻¹)ᵀ, the metric of the dual frame of T*."""
    return J.matrix_jet_inverse(universal_metric(x).transpose())


def curvature_universal(x: GrassChartPoint) -> C.MatrixOfForms:
    """iR^T/2π for the universal bundle."""
    return C.curvature_from_metric_frame(universal_metric(x))


def curvature_dual_universal(x: GrassChartPoint) -> C.MatrixOfForms:
    """iR^{T*}/2π for the dual universal bundle."""
    return C.curvature_from_metric_frame(dual_universal_metric(x))


def center_curvature_dual(r: int, m: int) -> np.ndarray:
    """Closed form of R^{T*}(W₀): entry (k, j) is Σ_l dz_{jl}∧dz̄_{kl}.

    Returns raw coefficients of shape (r, r, dim, dim).
    """
    q = m - r
    out = np.zeros((r, r, r * q, r * q), complex)
    for k in range(r):
        for j in range(r):
            for l in range(q):
                out[k, j, j * q + l, k * q + l] = 1.0
    return out


def dual_transpose_defect(x: GrassChartPoint) -> float:
    """max |R^{T*} + (R^T)ᵀ| over the batch."""
    rt = C.raw_curvature(universal_metric(x))
    rd = C.raw_curvature(dual_universal_metric(x))
    return float(np.max(np.abs(rd + np.swapaxes(rt, 1, 2))))


def chern_form_dual_universal(k: int, x: GrassChartPoint) -> J.FormAtPoint:
    """c_k(T*, h^{T*}) at the chart points."""
    if not 0 <= k <= x.r:
        raise ValueError(f"Chern degree {k} outside [0, {x.r}]")
    return C.chern_form(k, dual_universal_metric(x))


def c1_min_eigenvalue(x: GrassChartPoint) -> np.ndarray:
    """Smallest eigenvalue of the Hermitian coefficient matrix of c₁(T*)."""
    c = chern_form_dual_universal(1, x).coeffs
    herm = 0.5 * (c + np.conj(np.swapaxes(c, -1, -2)))
    return np.linalg.eigvalsh(herm)[:, 0]


# ---------------------------------------------------------------------------
# G(1, m) ≅ P^{m−1}


def _projective_to_grass(x: G.ChartPoint) -> GrassChartPoint:
    """The line through (1, z) as a point of the chart around W₀ = [1:0:...:0]."""
    if np.any(x.chart != 0):
        raise ValueError("points must lie in chart 0")
    return GrassChartPoint(1, x.n + 1, x.coords[:, None, :])


def line_integral_c1(m: int, radial: int = 256, angles: int = 1) -> float:
    """∫ c₁(T*) over the projective line {Z = (z, 0, ..., 0)} of G(1, m)."""
    rule = G.make_rule(1, radial, angles)

    def density(x):
        z = np.zeros((len(x), 1, m - 1), complex)
        z[:, 0, 0] = x.coords[:, 0]
        c = chern_form_dual_universal(1, GrassChartPoint(1, m, z)).coeffs[:, 0, 0]
        return (c / G.omega_matrix(x)[:, 0, 0]).real

    return float(G.integrate(density, rule))


def random_unitary(rng: np.random.Generator, m: int) -> np.ndarray:
    """Haar unitary via QR with phase correction."""
    a = (rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))) / math.sqrt(2)
    q, r = np.linalg.qr(a)
    return q * (np.diag(r) / np.abs(np.diag(r)))[None, :]


def _test_function(v: np.ndarray) -> np.ndarray:
    """A smooth non-invariant function of unit vectors in C^m."""
    t0 = np.abs(v[:, 0]) ** 2
    return t0**2 + np.real(v[:, 1] * np.conj(v[:, 0])) + 0.3 * np.imag(v[:, -1] * np.conj(v[:, 0]))


def rotated_pairing(m: int, u: np.ndarray | None = None, radial: int = 16, angles: int = 16) -> float:
    """∫_{G(1,m)} φ(U·W) c₁(T*)∧ω^{m−2}, for m ∈ {2, 3}.

    ω is the Fubini-Study form of P^{m−1}; the pairing is unitary invariant
    because c₁(T*) is.
    """
    if m not in (2, 3):
        raise ValueError("grassmannian integration is implemented for G(1,2) and G(1,3)")
    n = m - 1
    u = np.eye(m, dtype=complex) if u is None else np.asarray(u, complex)
    rule = G.make_rule(n, radial, angles)

    def density(x):
        c1 = chern_form_dual_universal(1, _projective_to_grass(x))
        form = J.wedge(c1, G.kaehler_form(x).power(n - 1))
        v = x.normalized() @ u.T
        return _test_function(v) * C.top_density(form, x)

    return float(G.integrate(density, rule)) * math.factorial(n)
