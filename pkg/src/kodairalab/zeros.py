"""Zero sets and degeneracy sets of random sections, and the Monte Carlo
experiments built on them.

Polynomials are homogeneous: a :class:`HomPoly` holds exponents β (K, n+1)
and coefficients c (K,), representing Σ c_β Z^β.  On CP¹ the exponent rows
are (q − a, a), so the chart-0 polynomial is Σ c_a w^a.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache, partial

import numpy as np
import scipy.linalg as sla

from . import bergman as B
from . import chern as C
from . import geometry as G
from . import jets as J
from .fields import PairingFunction
from .rng import stream
from .sections import (BundleSpec, SectionSpace, build_space, exponents,
                       sample_fs_section, sample_gaussian_section)

ROOT_RESIDUAL_WARN = 1e-6
MERGE_DISTANCE = 1e-7
MAX_REDRAWS = 20
SINGULAR_COND = 1e10


class DegenerateSampleError(ValueError):
    """The sampled sections lie in the measure-zero exceptional set."""


class UnsupportedRegimeError(ValueError):
    pass


SUPPORTED_REGIMES = (
    "(a) CP1, E = O(d)^r with any metric, k = r",
    "(b) CP2, r = 2, k in {1, 2}",
    "(c) CP2, r = 1, k = 1 (paired zeros of two independent sections)",
)


@dataclass(frozen=True, eq=False)
class HomPoly:
    beta: np.ndarray
    coeffs: np.ndarray

    @property
    def degree(self) -> int:
        return int(self.beta[0].sum())

    @property
    def nvars(self) -> int:
        return self.beta.shape[1]

    def __call__(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        mono = np.prod(X[:, None, :] ** self.beta[None], axis=2)
        return mono @ self.coeffs

    def grad(self, X: np.ndarray) -> np.ndarray:
        """Partial derivatives ∂/∂Z_k, shape (N, n+1)."""
        X = np.atleast_2d(X)
        out = np.zeros(X.shape, complex)
        for k in range(self.nvars):
            e = self.beta.copy()
            bk = e[:, k].copy()
            e[:, k] = np.maximum(bk - 1, 0)
            mono = np.prod(X[:, None, :] ** e[None], axis=2)
            out[:, k] = mono @ (self.coeffs * bk)
        return out

    def scale(self, X: np.ndarray) -> np.ndarray:
        """Σ |c_β||Z^β|, the natural size for relative residuals."""
        X = np.atleast_2d(X)
        return np.abs(np.prod(X[:, None, :] ** self.beta[None], axis=2)) @ np.abs(self.coeffs)


def section_polys(space: SectionSpace, coeffs) -> list[HomPoly]:
    """Per-summand homogeneous polynomials of a section's coefficient vector."""
    c = np.asarray(coeffs)
    return [HomPoly(space.beta[space.comp == j], c[space.comp == j]) for j in range(space.spec.rank)]


# ---------------------------------------------------------------------------
# CP¹


def _newton_1d(c: np.ndarray, z: np.ndarray, steps: int = 3) -> np.ndarray:
    """Polish roots of Σ c_a z^a (c ascending), vectorized over ``z``."""
    hi = c[::-1]
    der = np.polyder(hi)
    z = np.asarray(z, dtype=complex).copy()
    for _ in range(steps):
        fp = np.polyval(der, z)
        ok = fp != 0
        step = np.where(ok, np.polyval(hi, z) / np.where(ok, fp, 1), 0)
        z = z - step
        if np.all(np.abs(step) <= 1e-15 * np.maximum(1.0, np.abs(z))):
            break
    return z


def _relative_residual(c: np.ndarray, z: np.ndarray) -> np.ndarray:
    return np.abs(np.polyval(c[::-1], z)) / np.polyval(np.abs(c[::-1]), np.abs(z))


def roots_on_cp1(coeffs, report: dict | None = None) -> G.ChartPoint:
    """All q roots of a section of O(q) on CP¹.

    ``coeffs[a]`` multiplies w^a in chart 0.  Roots with |w| > 1 are computed
    on the degree-reversed polynomial and returned in chart 1; vanishing
    end coefficients give roots at 0 and at infinity with multiplicity.
    Residuals above 1e-6 after polishing are recorded in ``report``.
    """
    c = np.asarray(coeffs, dtype=complex)
    q = len(c) - 1
    if not np.any(c != 0):
        raise ValueError("the zero section has no isolated zeros")
    nz = np.nonzero(c)[0]
    k0, kinf = int(nz[0]), int(q - nz[-1])
    core = c[k0:q + 1 - kinf]
    z = np.roots(core[::-1]) if len(core) > 1 else np.zeros(0, complex)
    inner = np.abs(z) <= 1
    zi = _newton_1d(core, z[inner])
    uo = _newton_1d(core[::-1], 1 / z[~inner])
    charts = np.concatenate([np.zeros(len(zi), int), np.ones(len(uo), int),
                             np.zeros(k0, int), np.ones(kinf, int)])
    coords = np.concatenate([zi, uo, np.zeros(k0 + kinf, complex)])
    resid = np.concatenate([_relative_residual(core, zi), _relative_residual(core[::-1], uo), [0.0]])
    if report is not None:
        worst = float(resid.max())
        report["max_residual"] = max(report.get("max_residual", 0.0), worst)
        if worst > ROOT_RESIDUAL_WARN:
            report.setdefault("warnings", []).append(f"root residual {worst:.2e} exceeds {ROOT_RESIDUAL_WARN}")
    return G.ChartPoint(charts, coords[:, None])


def determinant_section(matrix) -> np.ndarray:
    """Coefficients of det[s_{ij}] for chart-0 coefficient vectors s_{ij} on CP¹."""
    r = len(matrix)
    entries = [[np.asarray(matrix[i][j], dtype=complex) for j in range(r)] for i in range(r)]
    total = np.zeros(1, complex)
    for perm in itertools.permutations(range(r)):
        term = np.ones(1, complex)
        for i, j in enumerate(perm):
            term = np.convolve(term, entries[i][j])
        sign = J._perm_sign(perm)
        if len(term) > len(total):
            total = np.concatenate([total, np.zeros(len(term) - len(total), complex)])
        total[:len(term)] += sign * term
    return total


# ---------------------------------------------------------------------------
# CP²


def _sylvester(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Sylvester matrix of polynomials with ascending coefficients (..., q+1)."""
    qa, qb = a.shape[-1] - 1, b.shape[-1] - 1
    size = qa + qb
    s = np.zeros(a.shape[:-1] + (size, size), complex)
    for i in range(qb):
        s[..., i, i:i + qa + 1] = a[..., ::-1]
    for i in range(qa):
        s[..., qb + i, i:i + qb + 1] = b[..., ::-1]
    return s


def _coeffs_in_y2(f: HomPoly, u: np.ndarray, y1: np.ndarray) -> np.ndarray:
    """Ascending y2-coefficients of f(U·(1, y1, y2)) for each y1, via FFT."""
    q = f.degree
    m = q + 1
    y2 = np.exp(2j * np.pi * np.arange(m) / m)
    Y = np.stack(np.broadcast_arrays(np.ones((len(y1), m)), y1[:, None], y2[None]), axis=-1)
    vals = f(Y.reshape(-1, 3) @ u.T).reshape(len(y1), m)
    return np.fft.fft(vals, axis=1) / m


def _polish_cp2(f: HomPoly, g: HomPoly, X: np.ndarray, steps: int = 30):
    """Batched Newton on (f, g), each point in its best chart.

    Returns unit vectors (K, 3), relative residuals (K,) and the condition
    numbers of the scaled Jacobians (K,).
    """
    X = np.atleast_2d(np.asarray(X, dtype=complex))
    rows = np.arange(len(X))
    c = np.argmax(np.abs(X), axis=1)
    X = X / X[rows, c][:, None]
    free = np.array([[k for k in range(3) if k != ci] for ci in c])
    active = np.ones(len(X), bool)
    for _ in range(steps):
        if not active.any():
            break
        xa = X[active]
        fa = free[active]
        F = np.stack([f(xa), g(xa)], axis=1)
        Jm = np.stack([np.take_along_axis(f.grad(xa), fa, 1), np.take_along_axis(g.grad(xa), fa, 1)], axis=1)
        det = Jm[:, 0, 0] * Jm[:, 1, 1] - Jm[:, 0, 1] * Jm[:, 1, 0]
        ok = det != 0
        det = np.where(ok, det, 1)
        s0 = (Jm[:, 1, 1] * F[:, 0] - Jm[:, 0, 1] * F[:, 1]) / det
        s1 = (-Jm[:, 1, 0] * F[:, 0] + Jm[:, 0, 0] * F[:, 1]) / det
        step = np.where(ok[:, None], np.stack([s0, s1], axis=1), 0)
        idx = np.nonzero(active)[0]
        X[idx[:, None], fa] -= step
        done = (np.max(np.abs(step), axis=1) < 1e-15 * np.max(np.abs(X[idx]), axis=1)) | ~ok
        done |= ~np.all(np.isfinite(X[idx]), axis=1)
        active[idx[done]] = False
    finite = np.all(np.isfinite(X), axis=1)
    X = np.where(finite[:, None], X, 1.0)
    fs, gs = f.scale(X), g.scale(X)
    # a vanishing scale means every monomial vanishes: no meaningful residual
    finite &= (fs > 0) & (gs > 0)
    fs, gs = np.where(finite, fs, 1.0), np.where(finite, gs, 1.0)
    res = np.maximum(np.abs(f(X)) / fs, np.abs(g(X)) / gs)
    res = np.where(finite, res, np.inf)
    Jm = np.stack([np.take_along_axis(f.grad(X), free, 1) / fs[:, None],
                   np.take_along_axis(g.grad(X), free, 1) / gs[:, None]], axis=1)
    cond = np.full(len(X), np.inf)
    ok = finite & np.all(np.isfinite(Jm), axis=(1, 2))
    if ok.any():
        cond[ok] = np.linalg.cond(Jm[ok])
    return X / np.linalg.norm(X, axis=1, keepdims=True), res, cond


def _haar_unitary(rng: np.random.Generator, m: int) -> np.ndarray:
    a = (rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))) / math.sqrt(2)
    q, r = np.linalg.qr(a)
    return q * (np.diag(r) / np.abs(np.diag(r)))[None, :]


def _bivariate_coeffs(f: HomPoly, u: np.ndarray) -> np.ndarray:
    """c[i, k] = coefficient of y1^i y2^k in f(U·(1, y1, y2)), via a 2-D FFT."""
    m = f.degree + 1
    t = np.exp(2j * np.pi * np.arange(m) / m)
    y1, y2 = np.meshgrid(t, t, indexing="ij")
    pts = np.stack([np.ones_like(y1), y1, y2], axis=-1).reshape(-1, 3) @ u.T
    return np.fft.fft2(f(pts).reshape(m, m)) / (m * m)


def _resultant_roots(f: HomPoly, g: HomPoly, u: np.ndarray) -> np.ndarray:
    """Roots y1 of Res_{y2}(f∘U, g∘U) as eigenvalues of the Sylvester matrix polynomial.

    S(y1) = Σ_j S_j y1^j is linearized to a companion pencil; its finite
    eigenvalues are the resultant roots.  This avoids forming the resultant
    polynomial, whose sampled values suffer heavy cancellation.
    """
    cf, cg = _bivariate_coeffs(f, u), _bivariate_coeffs(g, u)
    q1, q2 = f.degree, g.degree
    d, n = max(q1, q2), q1 + q2
    blocks = []
    for j in range(d + 1):
        a = cf[j] if j <= q1 else np.zeros(q1 + 1, complex)
        b = cg[j] if j <= q2 else np.zeros(q2 + 1, complex)
        blocks.append(_sylvester(a, b))
    size = n * d
    A = np.zeros((size, size), complex)
    Bm = np.eye(size, dtype=complex)
    Bm[:n, :n] = blocks[d]
    for j in range(d):
        A[:n, j * n:(j + 1) * n] = -blocks[d - 1 - j]
    for j in range(1, d):
        A[j * n:(j + 1) * n, (j - 1) * n:j * n] = np.eye(n)
    w = sla.eigvals(A, Bm)
    return w[np.isfinite(w) & (np.abs(w) < 1e10)]


def common_zeros_cp2(f: HomPoly, g: HomPoly, rng: np.random.Generator | None = None,
                     rotations: int = 4, tol: float = 1e-10, report: dict | None = None) -> G.ChartPoint:
    """All deg f · deg g common zeros of two homogeneous polynomials on CP².

    After a random unitary change of coordinates the resultant roots in y1
    are found as eigenvalues of the Sylvester matrix polynomial.  Every root is
    lifted with a univariate solve and polished by Newton on the original
    system in its best chart.  Roots missed under one rotation are recovered
    under further rotations and merged by chordal distance.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    q1, q2 = f.degree, g.degree
    want = q1 * q2
    found = np.zeros((0, 3), complex)
    worst = 0.0
    for _ in range(rotations):
        u = _haar_unitary(rng, 3)
        r1 = _resultant_roots(f, g, u)
        if len(r1) == 0:
            continue
        ay = _coeffs_in_y2(f, u, r1)
        by = _coeffs_in_y2(g, u, r1)
        r2 = np.zeros(len(r1), complex)
        for i in range(len(r1)):
            c2 = np.roots(ay[i, ::-1])
            if len(c2) == 0:
                r2[i] = np.inf
                continue
            bv = np.abs(np.polyval(by[i, ::-1], c2)) / np.polyval(np.abs(by[i, ::-1]), np.abs(c2))
            r2[i] = c2[np.argmin(bv)]
        keep = np.isfinite(r2)
        X0 = np.stack([np.ones(keep.sum()), r1[keep], r2[keep]], axis=1) @ u.T
        X, res, cond = _polish_cp2(f, g, X0)
        good = res < tol
        if np.any(cond[good] > SINGULAR_COND):
            # a singular system at a zero means a shared curve or a multiple root
            raise DegenerateSampleError(f"singular common zero (Jacobian condition {cond[good].max():.1e})")
        for xk, rk in zip(X[good], res[good]):
            if len(found):
                dist = np.sqrt(np.clip(1 - np.abs(found @ np.conj(xk)) ** 2, 0, None))
                if np.min(dist) < MERGE_DISTANCE:
                    continue
            found = np.vstack([found, xk])
            worst = max(worst, float(rk))
        if len(found) >= want:
            break
    if report is not None:
        report["max_residual"] = max(report.get("max_residual", 0.0), worst)
    if len(found) != want:
        raise DegenerateSampleError(f"found {len(found)} of {want} common zeros")
    return G.ChartPoint.from_homogeneous(found)


def line_intersections(polys_fn, degree: int, rng: np.random.Generator) -> tuple[int, float]:
    """Intersect {F = 0} with a random projective line.

    ``polys_fn`` maps homogeneous points (N, 3) to values of F.  Returns the
    number of intersection points (finite ones plus those at the line's
    point at infinity) and the largest relative residual.
    """
    a, b = (rng.standard_normal((2, 3)) + 1j * rng.standard_normal((2, 3)))
    m = 2 * degree + 2
    t = np.exp(2j * np.pi * np.arange(m) / m)
    vals = polys_fn(a[None] + t[:, None] * b[None])
    coef = np.fft.fft(vals) / m
    big = np.max(np.abs(coef))
    # numerical degree: last coefficient above roundoff
    nzc = np.nonzero(np.abs(coef) > 1e-11 * big)[0]
    deg = int(nzc[-1])
    roots = np.roots(coef[:deg + 1][::-1])
    pts = a[None] + roots[:, None] * b[None]
    if len(roots):
        scale = np.abs(polys_fn(pts)) / (big * np.maximum(1, np.abs(roots)) ** deg)
        worst = float(np.max(scale))
    else:
        worst = 0.0
    return deg, worst


# ---------------------------------------------------------------------------
# measures


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    points: G.ChartPoint
    weight: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.weight > 0:
            raise ValueError("weight must be positive")

    @property
    def count(self) -> int:
        return len(self.points)


def pair_measure(mu: EmpiricalMeasure, phi: PairingFunction) -> float:
    """weight · Σ φ(points)."""
    if mu.count == 0:
        return 0.0
    return float(mu.weight * np.sum(phi.value(mu.points.best_chart())))


def omega_pairing(phi: PairingFunction, n: int, rule: G.QuadratureRule | None = None) -> float:
    """∫ φ ωⁿ with ω of unit total mass."""
    if phi.kind == "const":
        return 1.0
    rule = rule or G.make_rule(n)
    return float(G.integrate(lambda x: phi.value(x.best_chart()), rule)) * math.factorial(n)


def form_pairing(form_fn, phi: PairingFunction, n: int, rule: G.QuadratureRule) -> float:
    """∫ φ α for a top-degree form α given as a function of chart points."""
    def dens(x):
        x = x.best_chart()
        return phi.value(x) * C.top_density(form_fn(x), x)
    return float(G.integrate(dens, rule, chunk=2048)) * math.factorial(n)


# ---------------------------------------------------------------------------
# equidistribution


def sample_zero_measure(space: SectionSpace, rng: np.random.Generator, kind: str = "gaussian",
                        meta: dict | None = None) -> EmpiricalMeasure:
    """p^{−n}[s = 0] for one random section of a rank-n bundle (r = n)."""
    spec = space.spec
    if spec.rank != spec.n:
        raise UnsupportedRegimeError(f"zero measures need r = n; got r={spec.rank}, n={spec.n}")
    sampler = sample_gaussian_section if kind == "gaussian" else sample_fs_section
    meta = dict(meta or {})
    redraws = 0
    while True:
        c = sampler(space, rng)
        polys = section_polys(space, c)
        try:
            if spec.n == 1:
                pts = roots_on_cp1(polys[0].coeffs, meta)
            else:
                pts = common_zeros_cp2(polys[0], polys[1], rng, report=meta)
            break
        except DegenerateSampleError:
            redraws += 1
            if redraws > MAX_REDRAWS:
                raise
    meta.update(p=spec.p, r=spec.rank, redraws=redraws)
    return EmpiricalMeasure(pts, 1.0 / spec.p ** spec.n, meta)


def fitted_constant(p_grid, mean_errors) -> list[float]:
    """C(P) = max over p ≤ P of mean_error(p)·p/log p."""
    out, best = [], 0.0
    for p, e in zip(p_grid, mean_errors):
        best = max(best, e * p / math.log(p))
        out.append(best)
    return out


@lru_cache(maxsize=32)
def cached_space(spec: BundleSpec) -> SectionSpace:
    """Per-process cache so that sample tasks reuse the orthonormal basis."""
    return build_space(spec)


def zero_sample_task(spec: BundleSpec, battery: tuple, seed: int, experiment: str, index: int) -> dict:
    """One equidistribution sample: pairings, root count and redraws."""
    space = cached_space(spec)
    mu = sample_zero_measure(space, stream(seed, experiment, spec.p, index))
    return {"pairings": [pair_measure(mu, phi) for phi in battery], "count": mu.count,
            "redraws": mu.meta["redraws"], "max_residual": mu.meta.get("max_residual", 0.0)}


def equidistribution_experiment(spec: BundleSpec, p_grid, battery, seed: int,
                                mean_samples: int = 100, experiment: str = "equidistribution",
                                mapper=map) -> dict:
    """Pairing errors |⟨p^{−n}[s_p = 0] − ωⁿ, φ⟩| over a grid of p.

    Per p and φ the report holds the single-sample error (sample 0), the
    mean over ``mean_samples`` samples and the tail fraction of samples
    exceeding the fitted bound C·log p/p.  ``mapper`` may be a pool's map;
    results are assembled in task order, so they do not depend on it.
    """
    n = spec.n
    battery = tuple(battery)
    refs = {phi.name: omega_pairing(phi, n) for phi in battery}
    tasks = [(spec.with_p(p), i) for p in p_grid for i in range(mean_samples)]
    fn = partial(_run_zero_task, battery=battery, seed=seed, experiment=experiment)
    results = list(mapper(fn, tasks))
    single = {phi.name: [] for phi in battery}
    mean = {phi.name: [] for phi in battery}
    all_errs = {phi.name: [] for phi in battery}
    redraws, exact, worst = [], True, 0.0
    for jp, p in enumerate(p_grid):
        chunk = results[jp * mean_samples:(jp + 1) * mean_samples]
        redraws.append(sum(r["redraws"] for r in chunk))
        exact &= all(r["count"] == p ** n for r in chunk)
        worst = max([worst] + [r["max_residual"] for r in chunk])
        vals = np.array([r["pairings"] for r in chunk])
        for j, phi in enumerate(battery):
            e = np.abs(vals[:, j] - refs[phi.name])
            single[phi.name].append(float(e[0]))
            mean[phi.name].append(float(e.mean()))
            all_errs[phi.name].append(e)
    fit = {name: fitted_constant(p_grid, mean[name]) for name in mean}
    tail = {}
    for name in mean:
        c = fit[name][-1]
        tail[name] = [float(np.mean(e > c * math.log(p) / p)) for p, e in zip(p_grid, all_errs[name])]
    return {"p_grid": list(p_grid), "reference": refs, "single": single, "mean": mean,
            "fitted_C": fit, "tail_fraction": tail, "redraws": redraws,
            "counts_exact": bool(exact), "max_root_residual": worst}


def _run_zero_task(task, battery, seed, experiment):
    spec, index = task
    return zero_sample_task(spec, battery, seed, experiment, index)


def bezout_check(spec: BundleSpec, p_values, samples: int, seed: int, experiment: str = "bezout",
                 mapper=map) -> dict:
    """Root counts of random sections of a rank-n bundle against c_n."""
    tasks = [(spec.with_p(p), i) for p in p_values for i in range(samples)]
    fn = partial(_run_zero_task, battery=(), seed=seed, experiment=experiment)
    results = list(mapper(fn, tasks))
    out = {}
    for jp, p in enumerate(p_values):
        chunk = results[jp * samples:(jp + 1) * samples]
        want = int(np.prod(spec.with_p(p).total_degrees))
        out[p] = {"expected": want, "counts": [r["count"] for r in chunk],
                  "redraws": sum(r["redraws"] for r in chunk),
                  "max_residual": max(r["max_residual"] for r in chunk)}
    return out


# ---------------------------------------------------------------------------
# expectation currents


@dataclass
class ExpectationEstimate:
    phi: str
    mean: float
    stderr: float
    prediction: float
    samples: int
    kind: str
    two_term: float | None = None
    redraws: int = 0

    def z_score(self, target: float | None = None) -> float:
        t = self.prediction if target is None else target
        if self.stderr > 0:
            return abs(self.mean - t) / self.stderr
        # zero variance (φ ≡ 1): the mass is exact, compare to quadrature accuracy
        return 0.0 if abs(self.mean - t) <= 1e-9 * max(1.0, abs(t)) else math.inf


def _regime(spec: BundleSpec, k: int) -> str:
    r, n = spec.rank, spec.n
    if n == 1 and k == r:
        return "a"
    if n == 2 and r == 2 and k == 1:
        return "b1"
    if n == 2 and r == 2 and k == 2:
        return "b2"
    if n == 2 and r == 1 and k == 1:
        return "c"
    raise UnsupportedRegimeError(f"unsupported regime n={n}, r={r}, k={k}; supported: " + "; ".join(SUPPORTED_REGIMES))


def degeneracy_measure(space: SectionSpace, k: int, rng: np.random.Generator, kind: str = "gaussian") -> EmpiricalMeasure:
    """Weighted point measure p^{−(r+1−k)}[D_k] for one draw (point regimes only)."""
    spec = space.spec
    reg = _regime(spec, k)
    sampler = sample_gaussian_section if kind == "gaussian" else sample_fs_section
    p, r = spec.p, spec.rank
    redraws = 0
    meta: dict = {}
    while True:
        try:
            if reg == "a":
                sec = sampler(space, rng, k)
                mat = [[section_polys(space, sec[j])[i].coeffs for j in range(k)] for i in range(r)]
                pts = roots_on_cp1(determinant_section(mat), meta)
            elif reg == "b1":
                polys = section_polys(space, sampler(space, rng))
                pts = common_zeros_cp2(polys[0], polys[1], rng, report=meta)
            elif reg == "c":
                sec = sampler(space, rng, 2)
                pts = common_zeros_cp2(section_polys(space, sec[0])[0], section_polys(space, sec[1])[0],
                                       rng, report=meta)
            else:
                raise UnsupportedRegimeError("the k = 2 degeneracy set on CP2 is a curve; use degeneracy_degree")
            break
        except DegenerateSampleError:
            redraws += 1
            if redraws > MAX_REDRAWS:
                raise
    codim = spec.n if reg != "a" else 1
    meta.update(p=p, r=r, k=k, redraws=redraws)
    return EmpiricalMeasure(pts, 1.0 / p ** codim, meta)


def degeneracy_degree(space: SectionSpace, rng: np.random.Generator, kind: str = "gaussian") -> tuple[int, int, float]:
    """Degree of D_2(s₁, s₂) on CP² (r = 2) by intersection with a random line.

    Returns (measured count, predicted degree of c₁(L^p⊗E), max residual).
    """
    spec = space.spec
    if not (spec.n == 2 and spec.rank == 2):
        raise UnsupportedRegimeError("degree test is for CP2, r = 2")
    sampler = sample_gaussian_section if kind == "gaussian" else sample_fs_section
    sec = sampler(space, rng, 2)
    p1, p2 = section_polys(space, sec[0]), section_polys(space, sec[1])

    def det(X):
        return p1[0](X) * p2[1](X) - p2[0](X) * p1[1](X)

    want = sum(spec.total_degrees)
    count, worst = line_intersections(det, want, rng)
    return count, want, worst


def _prediction_rule(spec: BundleSpec, battery) -> G.QuadratureRule:
    if spec.n == 1:
        rule = G.make_rule(1, 96, 16)
    else:
        rule = G.make_rule(2, 20, 8)
    if spec.is_toric and all(phi.kind != "re_bump" for phi in battery):
        rule = rule.torus_reduced()
    return rule


def expectation_prediction(space: SectionSpace, k: int, phi: PairingFunction, rule=None) -> tuple[float, float | None]:
    """Quadrature value of the predicted pairing and its two-term expansion.

    Regime (a): (1/p)⟨Φ^*c₁(T*), φ⟩, expansion r⟨ω, φ⟩ + (1/p)⟨c₁(E, h), φ⟩.
    Regime (b1): p^{−2}⟨Φ^*c₂(T*), φ⟩.  Regime (c): p^{−2}⟨(Φ^*c₁(T*))², φ⟩.
    """
    spec = space.spec
    reg = _regime(spec, k)
    rule = rule or _prediction_rule(spec, (phi,))
    p, n, r = spec.p, spec.n, spec.rank
    if reg == "a":
        exact = form_pairing(lambda x: B.pullback_chern_form(space, 1, x), phi, n, rule) / p
        e1 = form_pairing(lambda x: C.chern_form(1, spec.e_frame(x)), phi, n, rule)
        two = r * omega_pairing(phi, n, rule) + e1 / p
        return exact, two
    if reg == "b1":
        return form_pairing(lambda x: B.pullback_chern_form(space, 2, x), phi, n, rule) / p**2, None
    if reg == "c":
        return form_pairing(lambda x: B.pullback_chern_form(space, 1, x).power(2), phi, n, rule) / p**2, None
    raise UnsupportedRegimeError("no point-measure prediction for this regime")


def _run_degeneracy_task(index, spec, k, battery, seed, experiment, kind):
    space = cached_space(spec)
    mu = degeneracy_measure(space, k, stream(seed, f"{experiment}:{kind}", index), kind)
    return [pair_measure(mu, phi) for phi in battery], mu.meta["redraws"]


def expectation_experiment(spec: BundleSpec, k: int, samples: int, battery, seed: int,
                           kind: str = "gaussian", experiment: str = "expectation",
                           rule=None, mapper=map) -> list[ExpectationEstimate]:
    """MC means of ⟨p^{−(r+1−k)}[D_k], φ⟩ against their quadrature predictions."""
    if kind not in ("gaussian", "fubini-study"):
        raise ValueError(f"unknown measure kind {kind!r}")
    _regime(spec, k)
    battery = tuple(battery)
    fn = partial(_run_degeneracy_task, spec=spec, k=k, battery=battery, seed=seed,
                 experiment=experiment, kind=kind)
    results = list(mapper(fn, range(samples)))
    vals = np.array([r[0] for r in results])
    redraws = sum(r[1] for r in results)
    space = cached_space(spec)
    out = []
    rule = rule or _prediction_rule(spec, battery)
    for j, phi in enumerate(battery):
        pred, two = expectation_prediction(space, k, phi, rule)
        out.append(ExpectationEstimate(phi.name, float(vals[:, j].mean()),
                                       float(vals[:, j].std(ddof=1) / math.sqrt(samples)),
                                       pred, samples, kind, two, redraws))
    return out
