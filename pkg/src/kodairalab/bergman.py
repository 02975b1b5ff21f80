"""Bergman kernel diagonals and the Kodaira pullback of the dual universal bundle.

With orthonormal sections S_k whose frame components are f_k, the Bergman
kernel on the diagonal acts in the frame t_j = v_j ⊗ e_L^p by the matrix
P = B·H, where B = Σ_k f_k f_k* and H is the frame metric of L^p⊗E.  The
pullback metric of T* along the Kodaira map is H^Φ = H·P⁻¹.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from . import chern as C
from . import geometry as G
from . import jets as J
from .sections import BundleSpec, SectionSpace, build_space, orthonormal_frame_components

FRAME_CONVENTION = "frame t_j = v_j (x) e_L^p in the chart of each point; P[b, c] = t_b-coefficient of P t_c"


@dataclass(frozen=True, eq=False)
class BergmanDiagonal:
    x: G.ChartPoint
    P: J.MatrixJet
    B: J.MatrixJet
    H: J.MatrixJet
    frame: str = FRAME_CONVENTION


def bergman_sum(space: SectionSpace, x: G.ChartPoint) -> J.MatrixJet:
    """B = Σ_k f_k f_k* with full jets, f_k the frame components of S_k."""
    fv, fd = orthonormal_frame_components(space, x)
    value = np.einsum("nkb,nka->nba", fv, np.conj(fv))
    d = np.einsum("nkbi,nka->nbai", fd, np.conj(fv))
    dbar = np.einsum("nkb,nkaj->nbaj", fv, np.conj(fd))
    mixed = np.einsum("nkbi,nkaj->nbaij", fd, np.conj(fd))
    return J.MatrixJet(value, d, dbar, mixed)


def bergman_diagonal(space: SectionSpace, x: G.ChartPoint) -> BergmanDiagonal:
    """P_p(x, x) in the standard local frame, with jets."""
    b = bergman_sum(space, x)
    h = space.spec.frame_metric(x)
    return BergmanDiagonal(x, b @ h, b, h)


def kodaira_pullback_metric(space: SectionSpace, x: G.ChartPoint) -> J.MatrixJet:
    """H^Φ = H^{L^p⊗E} Q with Q = P⁻¹ in the frame t."""
    bd = bergman_diagonal(space, x)
    q = J.matrix_jet_inverse(bd.P)
    return bd.H @ q


def pullback_chern_form(space: SectionSpace, k: int, x: G.ChartPoint) -> J.FormAtPoint:
    """Φ_p^* c_k(T*, h^{T*}) at the points ``x``."""
    return C.chern_form(k, kodaira_pullback_metric(space, x))


def curvature_transfer_residual(space: SectionSpace, x: G.ChartPoint) -> float:
    """Compare R^Φ with Q⁻¹(R^{L^p⊗E} + A_p)Q, A_p assembled from the jets of Q.

    Returns the largest coefficient difference, scaled as iR/2π.
    """
    bd = bergman_diagonal(space, x)
    q = J.matrix_jet_inverse(bd.P)
    lhs = C.raw_curvature(bd.H @ q)
    he = space.spec.e_frame(x)
    hei = np.linalg.inv(he.value)
    qi = np.linalg.inv(q.value)
    y = np.einsum("nij,njka->nika", hei, he.d)                   # Y_a = (H^E)⁻¹ ∂_a H^E
    xb = np.einsum("nijb,njk->nikb", q.dbar, qi)                 # X_b = (∂̄_b Q) Q⁻¹
    a_p = (np.einsum("nijb,njk,nkla,nlm->nimab", q.dbar, qi, q.d, qi)
           - np.einsum("nijab,njk->nikab", q.mixed, qi)
           - np.einsum("nija,njkb->nikab", y, xb)
           + np.einsum("nijb,njka->nikab", xb, y))
    r_lpe = C.raw_curvature(bd.H)
    rhs = np.einsum("nij,njkab,nkl->nilab", qi, r_lpe + a_p, q.value)
    return float(np.max(np.abs(lhs - rhs)) / (2 * np.pi))


# ---------------------------------------------------------------------------
# integrals


def _integrate_invariant(space: SectionSpace, fn, rule: G.QuadratureRule | None):
    """Integrate a chart-independent scalar over X, nodes in their best chart."""
    if rule is None:
        rule = G.make_rule(space.n) if space.n == 1 else G.make_rule(2)
    if space.spec.is_toric and not rule.reduced:
        rule = rule.torus_reduced()
    return G.integrate(lambda x: fn(x.best_chart()), rule, chunk=2048)


def trace_integral(space: SectionSpace, rule: G.QuadratureRule | None = None) -> float:
    """∫ tr P_p(x, x) ωⁿ/n!, which equals dim V_p."""
    return float(np.real(_integrate_invariant(
        space, lambda x: np.trace(bergman_diagonal(space, x).P.value, axis1=1, axis2=2).real, rule)))


def pullback_chern_integral(space: SectionSpace, k: int, rule: G.QuadratureRule | None = None) -> float:
    """∫ Φ_p^* c_k(T*) ∧ ω^{n−k}."""
    n = space.n

    def dens(x):
        form = J.wedge(pullback_chern_form(space, k, x), G.kaehler_form(x).power(n - k))
        return C.top_density(form, x)

    return float(_integrate_invariant(space, dens, rule)) * math.factorial(n)


def bundle_chern_integral(spec: BundleSpec, k: int, rule: G.QuadratureRule | None = None) -> float:
    """∫ c_k(L^p⊗E, h) ∧ ω^{n−k}."""
    if rule is None:
        rule = G.make_rule(spec.n)
    if spec.is_toric and not rule.reduced:
        rule = rule.torus_reduced()
    return C.chern_integral(k, spec.frame_metric, rule)


# ---------------------------------------------------------------------------
# expansions and rates


def fit_slope(p_grid, residuals, floor: float = 1e-300) -> float:
    """Least-squares slope of log residual against log p, smallest p excluded."""
    p = np.asarray(p_grid, float)
    r = np.asarray(residuals, float)
    if len(p) < 4:
        raise ValueError(f"grid too short for slope fitting: {len(p)} < 4 points")
    order = np.argsort(p)
    p, r = p[order][1:], r[order][1:]
    xs, ys = np.log(p), np.log(np.maximum(r, floor))
    return float(np.polyfit(xs, ys, 1)[0])


def _orthonormal_frame_matrix(p_val: np.ndarray, h_val: np.ndarray) -> np.ndarray:
    """Endomorphism matrix in an h-orthonormal frame."""
    ell = np.linalg.cholesky(np.swapaxes(h_val, -1, -2))
    lt = np.conj(np.swapaxes(ell, -1, -2))
    return lt @ p_val @ np.linalg.inv(lt)


def line_chern_form(spec: BundleSpec, x: G.ChartPoint) -> J.FormAtPoint:
    """c₁(L, h^L)."""
    return C.chern_form(1, C.scalar_frame(spec.line_weight(x)))


def bergman_expansion_check(spec: BundleSpec, p_grid, x: G.ChartPoint, rule=None) -> dict:
    """sup_x ‖P_p(x,x) − pⁿ b₀(x)‖ over a grid of p, with b₀ = det(Ṙ^L/2π).

    Norms are Frobenius norms in an h-orthonormal frame.  The report also
    checks that the leading coefficient of dim V_p is r/n! exactly.
    """
    n = spec.n
    x = x.best_chart()
    cl = line_chern_form(spec, x)
    b0 = C.top_density(cl.power(n), x)
    res = []
    for p in p_grid:
        sp_ = build_space(spec.with_p(p), rule)
        bd = bergman_diagonal(sp_, x)
        po = _orthonormal_frame_matrix(bd.P.value, bd.H.value)
        diff = po - (p**n) * b0[:, None, None] * np.eye(spec.rank)
        res.append(float(np.max(np.sqrt(np.sum(np.abs(diff) ** 2, axis=(1, 2))))))
    dims = [spec.with_p(p).dim for p in range(1, n + 2)]
    lead = np.diff(dims, n)[0]
    return {"p_grid": list(p_grid), "residual": res, "slope": fit_slope(p_grid, res) if len(p_grid) >= 4 else None,
            "dim_leading_times_nfact": int(lead), "rank": spec.rank}


@dataclass
class TianResidualReport:
    k: int
    p_grid: list
    residual1: list
    residual2: list | None
    slope1: float
    slope2: float | None
    bound_residual: list = field(default_factory=list)
    bound_slope: float | None = None


def tian_point(k: int, spec: BundleSpec, p: int, x: G.ChartPoint, rule=None) -> tuple:
    """(residual₁, residual₂ or None, bound residual) at a single p."""
    r = spec.rank
    x = x.best_chart()
    g = G.omega_matrix(x)
    lead = line_chern_form(spec, x).power(k) * float(math.comb(r, k))
    sp_ = build_space(spec.with_p(p), rule)
    pull = pullback_chern_form(sp_, k, x)
    d1 = pull * (1.0 / p**k) - lead
    res1 = float(np.max(J.form_norm(d1, g)))
    res2 = None
    if spec.prequantum:
        c1e = C.chern_form(1, spec.e_frame(x))
        sub = J.wedge(c1e, G.kaehler_form(x).power(k - 1)) * float(math.comb(r - 1, k - 1))
        res2 = float(np.max(J.form_norm(d1 - sub * (1.0 / p), g)))
    ck = C.chern_form(k, spec.with_p(p).frame_metric(x))
    bound = float(np.max(J.form_norm(pull - ck, g)))
    return res1, res2, bound


def _tian_task(p, k, spec, x, rule):
    return tian_point(k, spec, p, x, rule)


def tian_residual(k: int, spec: BundleSpec, p_grid, x: G.ChartPoint, rule=None, mapper=map) -> TianResidualReport:
    """Residuals of the first- and second-order Chern form expansions.

    residual₁ = sup‖p^{−k}Φ^*c_k − C(r,k) c₁(L)^k‖;
    residual₂ (prequantum only) additionally subtracts
    p^{−1} C(r−1,k−1) c₁(E)∧ω^{k−1}.  Also records the pointwise bound
    sup‖Φ^*c_k − c_k(L^p⊗E)‖.  Norms are pointwise ω-norms; sup is over ``x``.
    """
    r, n = spec.rank, spec.n
    if not 1 <= k <= min(r, n):
        raise ValueError(f"k={k} outside [1, {min(r, n)}]")
    if len(p_grid) < 4:
        raise ValueError(f"grid too short for slope fitting: {len(p_grid)} < 4 points")
    vals = list(mapper(partial(_tian_task, k=k, spec=spec, x=x, rule=rule), list(p_grid)))
    res1 = [v[0] for v in vals]
    res2 = [v[1] for v in vals] if spec.prequantum else None
    bound = [v[2] for v in vals]
    return TianResidualReport(k, list(p_grid), res1, res2,
                              fit_slope(p_grid, res1), fit_slope(p_grid, res2) if res2 is not None else None,
                              bound, fit_slope(p_grid, bound))
