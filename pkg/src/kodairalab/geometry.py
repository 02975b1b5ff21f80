"""Model manifolds CP¹ and CP² with the Fubini-Study structure.

Conventions
-----------
* ω = (i/2π) ∂∂̄ log(1 + ‖z‖²) in every affine chart, so ∫ ωⁿ = 1.
* The L² volume form is ωⁿ/n!; quadrature weights sum to 1/n!.
* Points are batches: a :class:`ChartPoint` holds N chart indices and N
  affine coordinate vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from . import jets as J


class EvaluationError(ValueError):
    """An integrand returned non-finite values at quadrature nodes."""


@dataclass(frozen=True)
class ModelSpace:
    n: int

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ValueError(f"only CP^1 and CP^2 are modelled, got n={self.n}")

    @property
    def charts(self) -> int:
        return self.n + 1

    @property
    def volume(self) -> float:
        """∫ ωⁿ/n!."""
        return 1.0 / math.factorial(self.n)


def slot(k: int, chart) -> np.ndarray:
    """Affine coordinate slot of homogeneous index ``k`` in chart ``chart``."""
    chart = np.asarray(chart)
    return k - (k > chart).astype(int)


@dataclass(frozen=True, eq=False)
class ChartPoint:
    """A batch of points, each given by a chart index and affine coordinates."""

    chart: np.ndarray
    coords: np.ndarray

    def __post_init__(self):
        coords = np.atleast_2d(np.asarray(self.coords, dtype=complex))
        chart = np.broadcast_to(np.asarray(self.chart, dtype=int), coords.shape[:1]).copy()
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "chart", chart)
        if np.any(chart < 0) or np.any(chart > coords.shape[1]):
            raise ValueError("chart index out of range")

    @property
    def n(self) -> int:
        return self.coords.shape[1]

    def __len__(self) -> int:
        return self.coords.shape[0]

    def __getitem__(self, idx) -> "ChartPoint":
        if isinstance(idx, (int, np.integer)):
            idx = slice(idx, idx + 1)
        return ChartPoint(self.chart[idx], self.coords[idx])

    @classmethod
    def center(cls, n: int) -> "ChartPoint":
        return cls(0, np.zeros((1, n)))

    @classmethod
    def from_homogeneous(cls, Z, chart=None) -> "ChartPoint":
        """Affine representative of homogeneous vectors ``Z`` (N, n+1).

        Without ``chart`` the chart of the largest-modulus coordinate is used.
        """
        Z = np.atleast_2d(np.asarray(Z, dtype=complex))
        N, n1 = Z.shape
        if chart is None:
            chart = np.argmax(np.abs(Z), axis=1)
        chart = np.broadcast_to(np.asarray(chart, dtype=int), (N,))
        zc = Z[np.arange(N), chart]
        if np.any(zc == 0):
            raise ValueError("point not representable in the requested chart")
        keep = np.ones((N, n1), bool)
        keep[np.arange(N), chart] = False
        coords = (Z / zc[:, None])[keep].reshape(N, n1 - 1)
        return cls(chart, coords)

    def homogeneous(self) -> np.ndarray:
        """Homogeneous vectors with coordinate ``chart`` equal to 1."""
        N, n = self.coords.shape
        Z = np.empty((N, n + 1), complex)
        for k in range(n + 1):
            s = np.clip(slot(k, self.chart), 0, n - 1)
            Z[:, k] = np.where(self.chart == k, 1.0, self.coords[np.arange(N), s])
        return Z

    def to_chart(self, chart) -> "ChartPoint":
        return ChartPoint.from_homogeneous(self.homogeneous(), chart)

    def best_chart(self) -> "ChartPoint":
        return ChartPoint.from_homogeneous(self.homogeneous())

    def normalized(self) -> np.ndarray:
        """Unit homogeneous representatives."""
        Z = self.homogeneous()
        return Z / np.linalg.norm(Z, axis=1, keepdims=True)


def chordal_distance(x: ChartPoint, y: ChartPoint) -> np.ndarray:
    """sin of the FS angle between the points, pairwise in the batch."""
    a, b = x.normalized(), y.normalized()
    c = np.abs(np.sum(a * np.conj(b), axis=1))
    return np.sqrt(np.clip(1 - c**2, 0, None))


# ---------------------------------------------------------------------------
# jets of homogeneous quantities


def homogeneous_jets(x: ChartPoint) -> list[J.MixedJet2]:
    """Jets of Z_0..Z_n in the chart of each point (Z_chart ≡ 1)."""
    N, n = x.coords.shape
    Z = x.homogeneous()
    out = []
    rows = np.arange(N)
    for k in range(n + 1):
        d = np.zeros((N, n), complex)
        mask = x.chart != k
        d[rows[mask], slot(k, x.chart)[mask]] = 1.0
        out.append(J.MixedJet2(Z[:, k], d, np.zeros((N, n), complex), np.zeros((N, n, n), complex)))
    return out


def norm2_jet(x: ChartPoint) -> J.MixedJet2:
    """Jet of 1 + ‖w‖² = |Z|² in the chart of each point."""
    zs = homogeneous_jets(x)
    total = J.abs2(zs[0])
    for z in zs[1:]:
        total = total + J.abs2(z)
    return total


def fs_weight_jet(x: ChartPoint) -> J.MixedJet2:
    """Jet of φ_L = 1/(1 + ‖z‖²), the squared norm of the O(1) frame."""
    return J.reciprocal(norm2_jet(x))


def moment_jets(x: ChartPoint) -> list[J.MixedJet2]:
    """Jets of the moment coordinates t_k = |Z_k|²/|Z|², k = 0..n."""
    inv = fs_weight_jet(x)
    return [J.abs2(z) * inv for z in homogeneous_jets(x)]


def omega_matrix(x: ChartPoint) -> np.ndarray:
    """Coefficients g_ab of ω in the basis i dz_a∧dz̄_b, shape (N, n, n)."""
    return (J.log(norm2_jet(x)).mixed / (2 * np.pi))


def kaehler_form(x: ChartPoint) -> J.FormAtPoint:
    return J.FormAtPoint.from_11(omega_matrix(x))


def transition_jacobian(x: ChartPoint, chart) -> np.ndarray:
    """∂w'_i/∂w_a for the change from the chart of ``x`` to ``chart``."""
    N, n = x.coords.shape
    new_chart = np.broadcast_to(np.asarray(chart, dtype=int), (N,))
    Z = x.homogeneous()
    dZ = np.zeros((N, n + 1, n), complex)
    rows = np.arange(N)
    for k in range(n + 1):
        mask = x.chart != k
        dZ[rows[mask], k, slot(k, x.chart)[mask]] = 1.0
    zc = Z[rows, new_chart]
    dzc = dZ[rows, new_chart]
    jac = np.zeros((N, n, n), complex)
    for k in range(n + 1):
        mask = new_chart != k
        i = slot(k, new_chart)
        val = (dZ[:, k] * zc[:, None] - Z[:, k, None] * dzc) / zc[:, None] ** 2
        jac[rows[mask], i[mask]] = val[mask]
    return jac


def pullback_11(coeffs: np.ndarray, jac: np.ndarray) -> np.ndarray:
    """Pull back (1,1) coefficients along a holomorphic map with Jacobian ``jac``."""
    return np.einsum("...ia,...ij,...jb->...ab", jac, coeffs, np.conj(jac))


# ---------------------------------------------------------------------------
# quadrature


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Tensor rule in moment coordinates times uniform angles.

    In the moment coordinates t_k = |Z_k|²/|Z|² the measure ωⁿ/n! becomes
    dt dθ/(2π)ⁿ on simplex × torus, so a Gauss rule in t and the trapezoid
    rule in θ integrate FS-polynomial integrands exactly.
    """

    n: int
    t: np.ndarray          # (R, n) moment coordinates t_1..t_n
    t_weights: np.ndarray  # (R,)
    angles: int            # M per angular coordinate
    nodes: ChartPoint
    weights: np.ndarray
    reduced: bool = False

    @property
    def size(self) -> int:
        return len(self.weights)

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.weights))

    @property
    def exact_degree(self) -> int:
        """Total degree in t integrated exactly by the radial rule."""
        r = len(self.t_weights) if self.n == 1 else int(round(math.sqrt(len(self.t_weights))))
        return 2 * r - 1

    def torus_reduced(self) -> "QuadratureRule":
        """Rule with one angle per radial node; valid for torus-invariant integrands."""
        return _build_rule(self.n, self.t, self.t_weights, 1, reduced=True)


def _build_rule(n, t, tw, angles, reduced=False) -> QuadratureRule:
    t0 = 1.0 - t.sum(axis=1)
    rho = np.sqrt(t / t0[:, None])
    theta = 2 * np.pi * (np.arange(angles) + 0.5) / angles
    if angles == 1:
        theta = np.zeros(1)
    if n == 1:
        ph = np.exp(1j * theta)[:, None]
        coords = (rho[:, None, :] * ph[None]).reshape(-1, 1)
    else:
        t1, t2 = np.meshgrid(theta, theta, indexing="ij")
        ph = np.stack([np.exp(1j * t1.ravel()), np.exp(1j * t2.ravel())], axis=1)
        coords = (rho[:, None, :] * ph[None]).reshape(-1, 2)
    w = np.repeat(tw / angles**n, angles**n)
    return QuadratureRule(n, t, tw, angles, ChartPoint(0, coords), w, reduced)


def make_rule(n: int, radial: int | None = None, angles: int | None = None) -> QuadratureRule:
    """Build the default quadrature rule on CPⁿ.

    Parameters
    ----------
    n : int
        1 or 2.
    radial : int
        Gauss nodes per moment coordinate (default 256 for CP¹, 32 for CP²).
    angles : int
        Trapezoid nodes per angle (default 256 for CP¹, 32 for CP²).
    """
    ModelSpace(n)
    if n == 1:
        radial = radial or 256
        angles = angles or 256
        x, w = roots_legendre(radial)
        t = ((x + 1) / 2)[:, None]
        tw = w / 2
    else:
        radial = radial or 32
        angles = angles or 32
        xs, ws = roots_jacobi(radial, 1.0, 0.0)
        s = (xs + 1) / 2
        sw = ws / 4
        xv, wv = roots_legendre(radial)
        v = (xv + 1) / 2
        vw = wv / 2
        S, V = np.meshgrid(s, v, indexing="ij")
        t = np.stack([S.ravel(), ((1 - S) * V).ravel()], axis=1)
        tw = np.outer(sw, vw).ravel()
    return _build_rule(n, t, tw, angles)


def integrate(f, rule: QuadratureRule, chunk: int = 8192):
    """Σ weights·f(nodes) with a fixed chunked reduction order.

    ``f`` maps a :class:`ChartPoint` batch to an array whose leading axis
    matches the batch; trailing axes are integrated componentwise.
    """
    partial = []
    for start in range(0, rule.size, chunk):
        pts = rule.nodes[start:start + chunk]
        vals = np.asarray(f(pts))
        if not np.all(np.isfinite(vals)):
            raise EvaluationError("integrand is not finite at some quadrature nodes")
        w = rule.weights[start:start + chunk].reshape((-1,) + (1,) * (vals.ndim - 1))
        partial.append(np.sum(w * vals, axis=0))
    return np.sum(np.stack(partial), axis=0)


def sample_fs_point(rng: np.random.Generator, n: int, size: int = 1) -> ChartPoint:
    """FS-distributed points, each in the chart of its largest coordinate."""
    Z = (rng.standard_normal((size, n + 1)) + 1j * rng.standard_normal((size, n + 1))) / math.sqrt(2)
    return ChartPoint.from_homogeneous(Z)


def sample_points(rng: np.random.Generator, n: int, count: int) -> ChartPoint:
    """``count`` FS-random points plus the chart-0 center (first entry)."""
    c = ChartPoint.center(n)
    x = sample_fs_point(rng, n, count)
    return ChartPoint(np.concatenate([c.chart, x.chart]), np.concatenate([c.coords, x.coords]))
