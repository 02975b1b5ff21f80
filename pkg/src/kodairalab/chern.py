"""Curvature of metric frames and Chern forms via invariant polynomials."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import geometry as G
from . import jets as J


@dataclass(frozen=True, eq=False)
class MatrixOfForms:
    """r×r matrix of (1,1)-forms; ``coeffs`` has shape (..., r, r, m, m)."""

    coeffs: np.ndarray

    @property
    def rank(self) -> int:
        return self.coeffs.shape[-3]

    @property
    def dim(self) -> int:
        return self.coeffs.shape[-1]

    def entry(self, i: int, j: int) -> J.FormAtPoint:
        return J.FormAtPoint.from_11(self.coeffs[..., i, j, :, :])

    def trace(self) -> J.FormAtPoint:
        return J.FormAtPoint.from_11(np.einsum("...iiab->...ab", self.coeffs))

    def transpose(self) -> "MatrixOfForms":
        return MatrixOfForms(np.swapaxes(self.coeffs, -3, -4))

    def conjugate(self, q: np.ndarray) -> "MatrixOfForms":
        """q⁻¹ A q for a matrix-valued function ``q`` (..., r, r)."""
        qi = np.linalg.inv(q)
        return MatrixOfForms(np.einsum("...ij,...jkab,...kl->...ilab", qi, self.coeffs, q))

    def hermitian_defect(self) -> np.ndarray:
        """Deviation of the matrix from form-sense Hermitian symmetry."""
        c = self.coeffs
        partner = np.conj(np.swapaxes(np.swapaxes(c, -3, -4), -1, -2))
        return np.max(np.abs(c - partner), axis=(-1, -2, -3, -4))


def raw_curvature(h: J.MatrixJet) -> np.ndarray:
    """Coefficients R_ab of dz_a∧dz̄_b in R = H⁻¹∂̄∂H − H⁻¹∂̄H∧H⁻¹∂H.

    Returns shape (..., r, r, m, m).
    """
    hi = J.matrix_jet_inverse(h).value
    term1 = -np.einsum("...ij,...jkab->...ikab", hi, h.mixed)
    term2 = np.einsum("...ij,...jkb,...kl,...lma->...imab", hi, h.dbar, hi, h.d)
    return term1 + term2


def curvature_from_metric_frame(h: J.MatrixJet) -> MatrixOfForms:
    """iR/2π for the Chern connection of the frame metric ``h``.

    ``h[j, k]`` is ⟨e_k, e_j⟩ for the local holomorphic frame e.  The result
    is expressed in the basis i dz_a∧dz̄_b.
    """
    return MatrixOfForms(raw_curvature(h) / (2 * np.pi))


def _perm_sign(perm) -> int:
    return J._perm_sign(perm)


def invariant_polynomial(k: int, a: MatrixOfForms) -> J.FormAtPoint:
    """P^k(A) = Σ over k-subsets I of det A_{I,I}, expanded by permutations."""
    r, m = a.rank, a.dim
    if not 0 <= k <= r:
        raise ValueError(f"invariant polynomial degree {k} outside [0, {r}]")
    batch = a.coeffs.shape[:-4]
    if k > m:
        raise ValueError(f"a ({k},{k})-form does not fit in dimension {m}")
    total = J.FormAtPoint.zero(k, m, batch)
    for sub in itertools.combinations(range(r), k):
        for perm in itertools.permutations(sub):
            term = J.FormAtPoint.unit(m, batch)
            for i, j in zip(sub, perm):
                term = J.wedge(term, a.entry(i, j))
            total = total + term * float(_perm_sign(perm))
    return total


def chern_form(k: int, h: J.MatrixJet) -> J.FormAtPoint:
    """c_k of the bundle metric given by the frame matrix jet ``h``."""
    if not 0 <= k <= h.rank:
        raise ValueError(f"Chern degree {k} outside [0, {h.rank}]")
    if k == 0:
        return J.FormAtPoint.unit(h.dim, h.value.shape[:-2])
    return invariant_polynomial(k, curvature_from_metric_frame(h))


def scalar_frame(weight: J.MixedJet2) -> J.MatrixJet:
    """1×1 matrix jet from a scalar metric weight."""
    return J.MatrixJet.from_entries([[weight]])


def tensor_chern_identity_residual(p: int, k: int, line_weight: J.MixedJet2, frame: J.MatrixJet) -> float:
    """Sup residual of c_k(L^p⊗E) = Σ_j C(r−j, k−j) c_j(E)∧c₁(L^p)^{k−j}.

    Parameters
    ----------
    line_weight : MixedJet2
        |e_L|² of the line bundle frame at a batch of points.
    frame : MatrixJet
        Frame metric of E at the same points.
    """
    r = frame.rank
    if not 0 <= k <= r:
        raise ValueError(f"k={k} outside [0, {r}]")
    m = frame.dim
    if k > m:
        return 0.0          # both sides vanish identically
    lp = J.power(line_weight, p)
    lhs = chern_form(k, frame * lp)
    c1 = chern_form(1, scalar_frame(lp))
    batch = frame.value.shape[:-2]
    rhs = J.FormAtPoint.zero(k, m, batch)
    for j in range(k + 1):
        if j > m or k - j > m:
            continue
        term = J.wedge(chern_form(j, frame), c1.power(k - j))
        rhs = rhs + term * float(math.comb(r - j, k - j))
    return float(np.max(np.abs(lhs.coeffs - rhs.coeffs))) if lhs.coeffs.size else 0.0


def top_density(alpha: J.FormAtPoint, x: G.ChartPoint) -> np.ndarray:
    """Ratio α/ωⁿ for a top-degree form at the points ``x``."""
    omega_n = G.kaehler_form(x).power(x.n)
    return (alpha.top() / omega_n.top()).real


def chern_integral(k: int, frame_fn, rule: G.QuadratureRule) -> float:
    """∫_X c_k(E,h)∧ω^{n−k}.

    ``frame_fn`` maps a :class:`ChartPoint` batch to the frame metric jet;
    the integrand is chart independent, so each node is evaluated in its
    best-conditioned chart.
    """
    n = rule.n
    if not 0 <= k <= n:
        raise ValueError(f"k={k} outside [0, {n}]")

    def density(x):
        x = x.best_chart()
        h = frame_fn(x)
        form = J.wedge(chern_form(k, h), G.kaehler_form(x).power(n - k))
        return top_density(form, x)

    return float(G.integrate(density, rule)) * math.factorial(n)


def intermediate_degree(k: int, frame_fn, rank: int, h0_dim: int, rule: G.QuadratureRule) -> float:
    """λ_k = ∫ c_{k−N+r}(E)∧ω^{N+n−r−k} with N + 1 = dim H⁰(X, E)."""
    big_n = h0_dim - 1
    n = rule.n
    if not big_n - rank <= k <= big_n:
        raise ValueError(f"k={k} outside [{big_n - rank}, {big_n}]")
    j = k - big_n + rank
    if j > n:
        raise ValueError(f"c_{j} exceeds the dimension {n}")
    return chern_integral(j, frame_fn, rule)
