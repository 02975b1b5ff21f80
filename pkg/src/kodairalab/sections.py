"""Spaces of holomorphic sections H⁰(CPⁿ, O(p)⊗E) as coefficient spaces.

E = ⊕_j O(d_j) with per-summand conformal twists, or E = O(d)^{⊕r} with a
matrix-valued twist.  A basis element is a pair (summand j, homogeneous
exponent β with |β| = p + d_j); in chart c it is the polynomial
Π_{k≠c} w^{β_k} times the standard local frame.

Frame metric convention: ``H[j, k] = ⟨t_k, t_j⟩`` for the local frame t.
Gram convention: ``gram[i, i'] = (S_{i'}, S_i)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from . import geometry as G
from . import jets as J
from .fields import ZERO, MatrixTwist, ScalarField


class GramError(ValueError):
    """Gram matrix is not numerically positive definite."""

    def __init__(self, pivot: int, label):
        super().__init__(f"Gram factorization failed at pivot {pivot} (basis label {label}); "
                         "increase the quadrature resolution")
        self.pivot = pivot
        self.label = label


class ResolutionError(ValueError):
    """The quadrature rule is too coarse for the requested space."""


@dataclass(frozen=True)
class BundleSpec:
    """Metric data for L^p⊗E on CPⁿ with L = O(1).

    Parameters
    ----------
    n : int
        Complex dimension (1 or 2).
    p : int
        Tensor power of L.
    degrees : tuple of int
        Summand degrees d_j; L^p⊗O(d_j) = O(p + d_j).
    twists : tuple of ScalarField
        Per-summand weights e^{−ψ_j} multiplying the FS metric of O(d_j).
    matrix : MatrixTwist or None
        Matrix-valued frame metric H(x) on O(d)^{⊕r} (equal degrees only).
    line_twist : ScalarField
        h^L = h_FS e^{−χ}; the model is prequantum when χ = 0.
    allow_rank_exceeds_dim : bool
        Permit r > n (determinant experiments on CP¹).
    """

    n: int
    p: int
    degrees: tuple = (0,)
    twists: tuple = ()
    matrix: MatrixTwist | None = None
    line_twist: ScalarField = ZERO
    allow_rank_exceeds_dim: bool = False

    def __post_init__(self):
        G.ModelSpace(self.n)
        object.__setattr__(self, "degrees", tuple(int(d) for d in self.degrees))
        object.__setattr__(self, "twists", tuple(self.twists))
        if self.p < 1:
            raise ValueError("p must be at least 1")
        r = len(self.degrees)
        if r < 1:
            raise ValueError("at least one summand is required")
        if r > self.n and not self.allow_rank_exceeds_dim:
            raise ValueError(f"rank {r} exceeds dimension {self.n}; set allow_rank_exceeds_dim")
        if self.twists and len(self.twists) != r:
            raise ValueError("one twist per summand is required")
        if self.matrix is not None:
            if self.twists:
                raise ValueError("use either per-summand twists or a matrix twist")
            if len(set(self.degrees)) != 1:
                raise ValueError("matrix twists need equal summand degrees")
            if self.matrix.rank != r:
                raise ValueError("matrix twist rank does not match the bundle rank")
        if min(self.degrees) + self.p < 0:
            raise ValueError("negative total degree has no sections")

    @property
    def rank(self) -> int:
        return len(self.degrees)

    @property
    def total_degrees(self) -> tuple:
        return tuple(self.p + d for d in self.degrees)

    @property
    def prequantum(self) -> bool:
        return self.line_twist.is_zero

    @property
    def is_toric(self) -> bool:
        ok = self.line_twist.is_toric and all(t.is_toric for t in self.twists)
        return ok and (self.matrix is None or self.matrix.is_toric)

    @property
    def diagonal(self) -> bool:
        """True when the frame metric is diagonal (no matrix twist)."""
        return self.matrix is None

    @property
    def dim(self) -> int:
        return sum(math.comb(self.n + q, self.n) for q in self.total_degrees)

    def with_p(self, p: int) -> "BundleSpec":
        return replace(self, p=p)

    # metric jets ---------------------------------------------------------
    def line_weight(self, x: G.ChartPoint) -> J.MixedJet2:
        """|e_L|² = e^{−χ}/(1 + ‖w‖²)."""
        phi = G.fs_weight_jet(x)
        if self.line_twist.is_zero:
            return phi
        return phi * J.exp(-self.line_twist.jet(x))

    def e_frame(self, x: G.ChartPoint) -> J.MatrixJet:
        """Frame metric H^E of E alone."""
        phi = G.fs_weight_jet(x)
        if self.matrix is not None:
            return self.matrix.jet(x) * J.power(phi, self.degrees[0])
        entries = []
        for j, d in enumerate(self.degrees):
            w = J.power(phi, d)
            if self.twists and not self.twists[j].is_zero:
                w = w * J.exp(-self.twists[j].jet(x))
            entries.append(w)
        return J.MatrixJet.diag(entries)

    def frame_metric(self, x: G.ChartPoint) -> J.MatrixJet:
        """H^{L^p⊗E} = H^E φ_L^p."""
        return self.e_frame(x) * J.power(self.line_weight(x), self.p)

    def twist_values(self, x: G.ChartPoint) -> np.ndarray:
        """Frame metric with the FS factors removed, shape (N, r, r)."""
        r = self.rank
        scale = np.ones(len(x))
        if not self.line_twist.is_zero:
            scale = np.exp(-self.p * self.line_twist.value(x))
        if self.matrix is not None:
            return self.matrix.value(x) * scale[:, None, None]
        out = np.zeros((len(x), r, r), complex)
        for j in range(r):
            w = scale
            if self.twists and not self.twists[j].is_zero:
                w = w * np.exp(-self.twists[j].value(x))
            out[:, j, j] = w
        return out


def h0_dimension(n: int, degrees) -> int:
    """dim H⁰(CPⁿ, ⊕ O(q_j)) = Σ C(n + q_j, n)."""
    return sum(math.comb(n + q, n) for q in degrees if q >= 0)


@lru_cache(maxsize=None)
def exponents(n: int, q: int) -> np.ndarray:
    """Homogeneous exponents β (|β| = q) ordered by the chart-0 exponent α."""
    rows = []
    for alpha in itertools.product(range(q + 1), repeat=n):
        if sum(alpha) <= q:
            rows.append((q - sum(alpha),) + alpha)
    if n == 2:
        rows.sort(key=lambda b: (b[1] + b[2], b[1]))
    out = np.array(rows, dtype=int)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class SectionSpace:
    spec: BundleSpec
    comp: np.ndarray        # (D,) summand of each basis element
    beta: np.ndarray        # (D, n+1) homogeneous exponents
    gram: np.ndarray
    orthonormalizer: np.ndarray   # M = L⁻¹ with gram = L L*
    coeff_map: np.ndarray          # C = M*, orthonormal sections S_k = Σ_i C_ik e_i
    angular_diagonal: bool = True
    diagnostics: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return len(self.comp)

    @property
    def labels(self) -> list:
        return [(int(j), tuple(int(b) for b in beta)) for j, beta in zip(self.comp, self.beta)]

    @property
    def n(self) -> int:
        return self.spec.n

    def sparse_coeff_map(self):
        c = self.coeff_map
        if np.count_nonzero(c) < 0.1 * c.size:
            return sp.csr_matrix(c)
        return c


def _labels(spec: BundleSpec):
    comp, beta = [], []
    for j, q in enumerate(spec.total_degrees):
        e = exponents(spec.n, q)
        comp.extend([j] * len(e))
        beta.append(e)
    return np.array(comp, dtype=int), np.concatenate(beta, axis=0)


def _log_radial(beta: np.ndarray, t: np.ndarray) -> np.ndarray:
    """log of |Z^β|²/|Z|^{2q} at moment coordinates t (R, n): Σ_k β_k log t_k."""
    t0 = 1.0 - t.sum(axis=1)
    full = np.concatenate([t0[:, None], t], axis=1)
    return np.log(full) @ beta.T.astype(float)


def _gram_toric(spec, rule, comp, beta):
    """Gram matrix for torus-invariant metrics (diagonal in the exponent)."""
    red = rule.torus_reduced()
    tw = spec.twist_values(red.nodes)               # (R, r, r)
    lr = _log_radial(beta, red.t)                   # (R, D)
    rad = np.exp(lr)
    D = len(comp)
    gram = np.zeros((D, D), complex)
    idx = {}
    for i, (j, b) in enumerate(zip(comp, beta)):
        idx[(j, tuple(b))] = i
    for i in range(D):
        a = comp[i]
        for c in range(spec.rank):
            i2 = idx.get((c, tuple(beta[i])))
            if i2 is None or (c != a and spec.diagonal):
                continue
            gram[i, i2] = np.sum(red.t_weights * rad[:, i] * tw[:, a, c])
    return gram


def _angular_modes(spec, rule):
    """Angular Fourier modes Ŵ[k] of the twist at each radial node."""
    n, M = rule.n, rule.angles
    R = len(rule.t_weights)
    tw = spec.twist_values(rule.nodes).reshape((R,) + (M,) * n + (spec.rank, spec.rank))
    axes = tuple(range(1, n + 1))
    return np.fft.fftn(tw, axes=axes) / M**n


def _gram_general(spec, rule, comp, beta):
    """Gram matrix for metrics with angular dependence, via angular FFT."""
    n, M = rule.n, rule.angles
    modes = _angular_modes(spec, rule)              # (R, M.., r, r)
    # aliasing guard: significant modes must stay well inside the band
    mag = np.max(np.abs(modes), axis=(0,) + tuple(range(n + 1, n + 3)))
    ks = np.fft.fftfreq(M, 1.0 / M).astype(int)
    kmag = np.zeros((M,) * n, int)
    for ax in range(n):
        shape = [1] * n
        shape[ax] = M
        kmag = np.maximum(kmag, np.abs(ks).reshape(shape))
    significant = mag > 1e-13 * mag.max()
    bandwidth = int(kmag[significant].max())
    qmax = max(spec.total_degrees)
    if bandwidth >= M // 2 - 1 or qmax + bandwidth >= M:
        raise ResolutionError(f"angular resolution {M} too small for degree {qmax} "
                              f"and twist bandwidth {bandwidth}")
    lr = _log_radial(beta, rule.t)                  # (R, D)
    alpha = beta[:, 1:]
    q = beta.sum(axis=1)
    D = len(comp)
    gram = np.zeros((D, D), complex)
    half = 0.5 * lr
    for a in range(spec.rank):
        for c in range(spec.rank):
            if spec.diagonal and a != c:
                continue
            ia = np.nonzero(comp == a)[0]
            ic = np.nonzero(comp == c)[0]
            if q[ia[0]] != q[ic[0]]:
                continue
            k = alpha[ia][:, None, :] - alpha[ic][None, :, :]      # (Da, Dc, n)
            phase = np.exp(-1j * np.pi * k.sum(axis=2) / M)
            idx = tuple(np.mod(k[..., ax], M) for ax in range(n))
            block = np.zeros((len(ia), len(ic)), complex)
            for r0 in range(0, len(rule.t_weights), 64):
                sl = slice(r0, r0 + 64)
                rad = np.exp(half[sl][:, ia, None] + half[sl][:, None, ic])
                wk = modes[(sl,) + idx + (a, c)]
                block += np.einsum("r,rij,rij->ij", rule.t_weights[sl], rad, wk)
            gram[np.ix_(ia, ic)] = block * phase
    return gram


def _cholesky(gram: np.ndarray, labels) -> np.ndarray:
    try:
        return np.linalg.cholesky(gram)
    except np.linalg.LinAlgError:
        lo, hi = 1, gram.shape[0]
        while lo < hi:
            mid = (lo + hi) // 2
            try:
                np.linalg.cholesky(gram[:mid, :mid])
                lo = mid + 1
            except np.linalg.LinAlgError:
                hi = mid
        raise GramError(lo - 1, labels[lo - 1]) from None


def build_space(spec: BundleSpec, rule: G.QuadratureRule | None = None, validate: bool = True) -> SectionSpace:
    """Assemble the Gram matrix by quadrature and factor it.

    Parameters
    ----------
    spec : BundleSpec
    rule : QuadratureRule, optional
        Defaults to :func:`default_rule` for the space.
    validate : bool
        For twisted metrics, recompute the diagonal with a 1.5× finer radial
        rule and require agreement to 1e-9 relative.
    """
    if rule is None:
        rule = default_rule(spec)
    if rule.n != spec.n:
        raise ValueError("quadrature rule lives on a different model space")
    qmax = max(spec.total_degrees)
    if rule.exact_degree < qmax:
        raise ResolutionError(f"radial rule exact to degree {rule.exact_degree} < {qmax}")
    comp, beta = _labels(spec)
    toric = spec.is_toric
    if toric:
        gram = _gram_toric(spec, rule, comp, beta)
    else:
        if rule.reduced:
            raise ResolutionError("non-toric metric needs a rule with angular nodes")
        gram = _gram_general(spec, rule, comp, beta)
    gram = 0.5 * (gram + gram.conj().T)
    twisted = not (spec.line_twist.is_zero and all(t.is_zero for t in spec.twists)
                   and (spec.matrix is None or spec.matrix.is_constant))
    diagnostics = {}
    if validate and twisted:
        finer = _refined(rule)
        g2 = _gram_toric(spec, finer, comp, beta) if toric else _gram_general(spec, finer, comp, beta)
        d1, d2 = np.real(np.diag(gram)), np.real(np.diag(g2))
        rel = float(np.max(np.abs(d1 - d2) / np.abs(d2)))
        diagnostics["resolution_defect"] = rel
        if rel > 1e-9:
            raise ResolutionError(f"Gram diagonal changes by {rel:.2e} under radial refinement")
    labels = [(int(j), tuple(int(b) for b in bb)) for j, bb in zip(comp, beta)]
    ell = _cholesky(gram, labels)
    m = sla.solve_triangular(ell, np.eye(len(comp)), lower=True)
    return SectionSpace(spec, comp, beta, gram, m, m.conj().T, toric, diagnostics)


def _refined(rule: G.QuadratureRule) -> G.QuadratureRule:
    if rule.n == 1:
        return G.make_rule(1, len(rule.t_weights) * 3 // 2, rule.angles)
    side = int(round(math.sqrt(len(rule.t_weights))))
    return G.make_rule(2, side * 3 // 2, rule.angles)


def default_rule(spec: BundleSpec) -> G.QuadratureRule:
    """A rule exact for the polynomial part of every Gram entry."""
    qmax = max(spec.total_degrees)
    if spec.n == 1:
        radial = max(64, qmax // 2 + 24)
        angles = max(64, 2 * qmax + 32) if not spec.is_toric else 1
        angles = 1 << (angles - 1).bit_length()
        return G.make_rule(1, radial, angles)
    radial = max(24, qmax // 2 + 12)
    angles = 1 if spec.is_toric else 1 << (2 * qmax + 16 - 1).bit_length()
    return G.make_rule(2, radial, angles)


# ---------------------------------------------------------------------------
# evaluation


def monomials(space: SectionSpace, x: G.ChartPoint):
    """Values (N, D) and holomorphic derivatives (N, D, n) of the basis polynomials."""
    N, n = x.coords.shape
    vals = np.zeros((N, space.dim), complex)
    ders = np.zeros((N, space.dim, n), complex)
    for c in np.unique(x.chart):
        rows = np.nonzero(x.chart == c)[0]
        w = x.coords[rows]                                       # (Nc, n)
        e = np.delete(space.beta, c, axis=1)                     # (D, n)
        pw = w[:, None, :] ** e[None]                            # (Nc, D, n)
        v = np.prod(pw, axis=2)
        vals[rows] = v
        for a in range(n):
            em = e[:, a]
            lower = np.where(em > 0, w[:, None, a] ** np.maximum(em - 1, 0)[None], 0)
            others = np.prod(np.delete(pw, a, axis=2), axis=2)
            ders[rows, :, a] = em[None] * lower * others
    return vals, ders


def frame_components(space: SectionSpace, coeffs: np.ndarray, x: G.ChartPoint):
    """Frame components of sections: values (N, K, r) and derivatives (N, K, r, n).

    ``coeffs`` has shape (K, D) (or (D,) for a single section).
    """
    coeffs = np.atleast_2d(coeffs)
    vals, ders = monomials(space, x)
    r = space.spec.rank
    out_v = np.zeros((len(x), coeffs.shape[0], r), complex)
    out_d = np.zeros((len(x), coeffs.shape[0], r, x.n), complex)
    for j in range(r):
        idx = space.comp == j
        out_v[:, :, j] = vals[:, idx] @ coeffs[:, idx].T
        out_d[:, :, j, :] = np.einsum("nda,kd->nka", ders[:, idx], coeffs[:, idx])
    return out_v, out_d


def evaluate_section_jet(space: SectionSpace, coeffs, x: G.ChartPoint) -> list[J.MixedJet2]:
    """Per-summand holomorphic jets of a section in the standard local frame."""
    v, d = frame_components(space, np.asarray(coeffs), x)
    n = x.n
    out = []
    for j in range(space.spec.rank):
        out.append(J.MixedJet2(v[:, 0, j], d[:, 0, j], np.zeros_like(d[:, 0, j]),
                               np.zeros((len(x), n, n), complex)))
    return out


def pointwise_norm2(space: SectionSpace, coeffs, x: G.ChartPoint) -> J.MixedJet2:
    """Jet of |s|²_h = Σ s_a conj(s_c) H_{ca}."""
    s = evaluate_section_jet(space, coeffs, x)
    h = space.spec.frame_metric(x)
    total = None
    for a in range(len(s)):
        for c in range(len(s)):
            term = s[a] * s[c].conj() * h.entry(c, a)
            total = term if total is None else total + term
    return total


def orthonormal_frame_components(space: SectionSpace, x: G.ChartPoint):
    """Frame components of the orthonormal basis: values (N, D, r), derivatives (N, D, r, n)."""
    vals, ders = monomials(space, x)
    cm = space.sparse_coeff_map()
    r = space.spec.rank
    N, D = len(x), space.dim
    fv = np.zeros((N, D, r), complex)
    fd = np.zeros((N, D, r, x.n), complex)
    for j in range(r):
        mask = (space.comp == j).astype(float)
        # f^j_k = Σ_{i in summand j} C_ik mono_i
        sel = cm.multiply(mask[:, None]).tocsr() if sp.issparse(cm) else cm * mask[:, None]
        fv[:, :, j] = np.asarray((sel.T @ vals.T).T)
        for a in range(x.n):
            fd[:, :, j, a] = np.asarray((sel.T @ ders[:, :, a].T).T)
    return fv, fd


# ---------------------------------------------------------------------------
# random sections


def standard_complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """Independent complex Gaussians with E|ξ|² = 1."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)


def sample_gaussian_section(space: SectionSpace, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Coefficients of L²-Gaussian sections: c = M* ξ."""
    shape = (space.dim,) if size is None else (size, space.dim)
    xi = standard_complex_normal(rng, shape)
    return xi @ space.coeff_map.T


def sample_fs_section(space: SectionSpace, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Gaussian sections normalized to unit L² norm (FS measure on P V_p)."""
    shape = (space.dim,) if size is None else (size, space.dim)
    xi = standard_complex_normal(rng, shape)
    xi = xi / np.linalg.norm(xi, axis=-1, keepdims=True)
    return xi @ space.coeff_map.T


def l2_norm2(space: SectionSpace, coeffs: np.ndarray) -> np.ndarray:
    """‖s‖² = c* G c for coefficient vectors (..., D)."""
    return np.real(np.einsum("...i,ij,...j->...", np.conj(coeffs), space.gram, coeffs))


# ---------------------------------------------------------------------------
# constant matrix twists


def constant_twist_spec(n: int, p: int, a: np.ndarray) -> BundleSpec:
    """E₀ = trivial rank r with h_A(u, v) = ⟨A⁻¹u, v⟩, so the frame metric is A⁻¹."""
    a = np.asarray(a, dtype=complex)
    if not np.allclose(a, a.conj().T):
        raise ValueError("A must be Hermitian")
    ev = np.linalg.eigvalsh(a)
    if ev.min() <= 0:
        raise ValueError("A must be positive definite")
    if ev.max() / ev.min() > 1e8:
        raise ValueError(f"A is degenerate: condition {ev.max() / ev.min():.2e} > 1e8")
    h = np.linalg.inv(a)
    h = 0.5 * (h + h.conj().T)
    twist = MatrixTwist(tuple(tuple(complex(v) for v in row) for row in h))
    return BundleSpec(n, p, (0,) * a.shape[0], matrix=twist, allow_rank_exceeds_dim=True)


def covariance_experiment(space: SectionSpace, scalar: SectionSpace, samples: int, rng: np.random.Generator) -> dict:
    """Monte Carlo estimate of E[(s_j, s_l)_p] for a constant matrix twist.

    Parameters
    ----------
    space : SectionSpace
        Built from :func:`constant_twist_spec`.
    scalar : SectionSpace
        H⁰(X, L^p) with the untwisted metric; its Gram pairs the components.

    Returns
    -------
    dict with ``estimate`` (r×r), ``sigma`` (r×r), ``marginal_ratio`` (per j
    mean |u|²/a_jj over orthonormal coordinates), ``marginal_sigma``,
    ``coordinate_z`` (worst per-coordinate variance deviation in standard
    errors) and ``shape_z`` (variance of |u|²/a_jj against the Exp(1) value).
    """
    spec = space.spec
    if spec.matrix is None or not spec.matrix.is_constant:
        raise ValueError("covariance experiment needs a constant matrix twist")
    r = spec.rank
    a = np.linalg.inv(spec.matrix.matrix)
    c = sample_gaussian_section(space, rng, samples)            # (N, D)
    comps = [c[:, space.comp == j] for j in range(r)]
    g0 = scalar.gram
    pair = np.zeros((samples, r, r), complex)
    for j in range(r):
        for l in range(r):
            # (s_j, s_l)_p = Σ c_{l,α}* G0[α, α'] c_{j,α'}
            pair[:, j, l] = np.einsum("ni,ij,nj->n", np.conj(comps[l]), g0, comps[j])
    est = pair.mean(axis=0)
    sig = np.sqrt(pair.real.var(axis=0, ddof=1) + pair.imag.var(axis=0, ddof=1)) / math.sqrt(samples)
    ell0 = np.linalg.cholesky(g0)
    ratio, rsig, coord_z, shape_z = [], [], [], []
    for j in range(r):
        u = comps[j] @ np.conj(ell0)                              # orthonormal coordinates L0* c
        m2 = np.abs(u) ** 2 / a[j, j].real                         # Exp(1) when u ~ CN(0, a_jj)
        ratio.append(float(m2.mean()))
        rsig.append(float(m2.std(ddof=1) / math.sqrt(m2.size)))
        # per-coordinate variance test: mean of Exp(1) is 1 with standard error 1/sqrt(N)
        coord_z.append(float(np.max(np.abs(m2.mean(axis=0) - 1) * math.sqrt(samples))))
        # shape test: Var Exp(1) = 1, sample variance has standard error sqrt(8/M)
        shape_z.append(float(abs(m2.var(ddof=1) - 1) / math.sqrt(8.0 / m2.size)))
    return {"estimate": est, "sigma": sig, "target": scalar.dim * a,
            "marginal_ratio": np.array(ratio), "marginal_sigma": np.array(rsig),
            "coordinate_z": np.array(coord_z), "shape_z": np.array(shape_z)}
