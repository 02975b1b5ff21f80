"""Mixed 2-jets over m complex coordinates and (k,k)-forms at a point.

A :class:`MixedJet2` stores the value, the holomorphic derivatives
``d[a] = ∂_a f``, the antiholomorphic derivatives ``dbar[a] = ∂̄_a f`` and
the mixed second derivatives ``mixed[a, b] = ∂_a ∂̄_b f`` of a smooth
function.  All arrays may carry leading batch axes; the derivative axes are
always the trailing ones.  The pure second derivatives ∂∂ and ∂̄∂̄ are not
tracked, and the algebra below is closed without them.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

COND_BOUND = 1e12


class JetError(ValueError):
    """Rejected input to a jet operation."""


class SingularInputError(JetError):
    """A scalar composition was evaluated outside its domain."""


class ConditioningError(JetError):
    """A matrix inverse was requested for a near-singular value part."""

    def __init__(self, cond: float, bound: float = COND_BOUND):
        super().__init__(f"condition estimate {cond:.3e} exceeds bound {bound:.1e}")
        self.cond = float(cond)
        self.bound = float(bound)


def _c(x) -> np.ndarray:
    return np.asarray(x, dtype=complex)


@dataclass(frozen=True, eq=False)
class MixedJet2:
    """Mixed 2-jet of a scalar function, batched over leading axes."""

    value: np.ndarray
    d: np.ndarray
    dbar: np.ndarray
    mixed: np.ndarray

    @property
    def dim(self) -> int:
        return self.d.shape[-1]

    @property
    def shape(self) -> tuple:
        return np.shape(self.value)

    # constructors -------------------------------------------------------
    @classmethod
    def constant(cls, value, dim: int) -> "MixedJet2":
        v = _c(value)
        return cls(v, np.zeros(v.shape + (dim,), complex), np.zeros(v.shape + (dim,), complex),
                   np.zeros(v.shape + (dim, dim), complex))

    @classmethod
    def coordinate(cls, z, index: int) -> "MixedJet2":
        """Seed jet of the chart coordinate ``z_index``; ``z`` has shape (..., m)."""
        z = _c(z)
        m = z.shape[-1]
        d = np.zeros(z.shape, complex)
        d[..., index] = 1.0
        return cls(z[..., index], d, np.zeros(z.shape, complex),
                   np.zeros(z.shape + (m,), complex))

    @classmethod
    def conj_coordinate(cls, z, index: int) -> "MixedJet2":
        return cls.coordinate(z, index).conj()

    # algebra ------------------------------------------------------------
    def conj(self) -> "MixedJet2":
        # ∂_a conj(f) = conj(∂̄_a f) and ∂_a∂̄_b conj(f) = conj(∂_b∂̄_a f)
        return MixedJet2(np.conj(self.value), np.conj(self.dbar), np.conj(self.d),
                         np.conj(np.swapaxes(self.mixed, -1, -2)))

    @property
    def real(self) -> "MixedJet2":
        c = self.conj()
        return (self + c) * 0.5

    def _lift(self, other) -> "MixedJet2":
        if isinstance(other, MixedJet2):
            if other.dim != self.dim:
                raise JetError(f"jet dimension mismatch: {self.dim} vs {other.dim}")
            return other
        return MixedJet2.constant(other, self.dim)

    def __add__(self, other):
        o = self._lift(other)
        return MixedJet2(self.value + o.value, self.d + o.d, self.dbar + o.dbar, self.mixed + o.mixed)

    __radd__ = __add__

    def __neg__(self):
        return MixedJet2(-self.value, -self.d, -self.dbar, -self.mixed)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        if isinstance(other, MixedJet2):
            return jet_mul(self, other)
        s = _c(other)
        return MixedJet2(self.value * s, self.d * s[..., None], self.dbar * s[..., None],
                         self.mixed * s[..., None, None])

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, MixedJet2):
            return jet_mul(self, reciprocal(other))
        return self * (1.0 / _c(other))

    def __rtruediv__(self, other):
        return reciprocal(self) * other

    def __pow__(self, exponent):
        return power(self, exponent)

    def __getitem__(self, idx) -> "MixedJet2":
        if not isinstance(idx, tuple):
            idx = (idx,)
        return MixedJet2(self.value[idx], self.d[idx], self.dbar[idx], self.mixed[idx])


def jet_mul(a: MixedJet2, b: MixedJet2) -> MixedJet2:
    """Leibniz rule for mixed 2-jets."""
    if a.dim != b.dim:
        raise JetError(f"jet dimension mismatch: {a.dim} vs {b.dim}")
    av, bv = a.value[..., None], b.value[..., None]
    mixed = (a.mixed * bv[..., None] + a.d[..., :, None] * b.dbar[..., None, :]
             + a.dbar[..., None, :] * b.d[..., :, None] + av[..., None] * b.mixed)
    return MixedJet2(a.value * b.value, a.d * bv + av * b.d, a.dbar * bv + av * b.dbar, mixed)


def jet_compose(u: Callable, du: Callable, d2u: Callable, f: MixedJet2) -> MixedJet2:
    """Apply a holomorphic scalar function ``u`` with derivatives ``du``, ``d2u``."""
    v = f.value
    u0, u1, u2 = _c(u(v)), _c(du(v)), _c(d2u(v))
    mixed = u2[..., None, None] * f.d[..., :, None] * f.dbar[..., None, :] + u1[..., None, None] * f.mixed
    return MixedJet2(u0, u1[..., None] * f.d, u1[..., None] * f.dbar, mixed)


def _positive_real(f: MixedJet2, what: str) -> np.ndarray:
    v = np.asarray(f.value)
    re = v.real
    if np.any(~np.isfinite(v)) or np.any(re <= 0) or np.any(np.abs(v.imag) > 1e-12 * np.maximum(1.0, np.abs(re))):
        raise SingularInputError(f"{what} requires a positive real value")
    return re


def log(f: MixedJet2) -> MixedJet2:
    _positive_real(f, "log")
    return jet_compose(lambda v: np.log(v.real), lambda v: 1.0 / v, lambda v: -1.0 / v**2, f)


def exp(f: MixedJet2) -> MixedJet2:
    return jet_compose(np.exp, np.exp, np.exp, f)


def reciprocal(f: MixedJet2) -> MixedJet2:
    if np.any(np.asarray(f.value) == 0):
        raise SingularInputError("reciprocal of zero")
    return jet_compose(lambda v: 1.0 / v, lambda v: -1.0 / v**2, lambda v: 2.0 / v**3, f)


def power(f: MixedJet2, s) -> MixedJet2:
    """``f**s``; non-integer exponents need a positive real base."""
    if float(s).is_integer() and s >= 0:
        s = int(s)
        return jet_compose(lambda v: v**s, lambda v: s * v ** max(s - 1, 0) if s else 0 * v,
                           lambda v: s * (s - 1) * v ** max(s - 2, 0) if s > 1 else 0 * v, f)
    if float(s).is_integer():
        if np.any(np.asarray(f.value) == 0):
            raise SingularInputError("negative power of zero")
    else:
        _positive_real(f, "non-integer power")
        f = MixedJet2(np.asarray(f.value).real.astype(complex), f.d, f.dbar, f.mixed)
    return jet_compose(lambda v: v**s, lambda v: s * v ** (s - 1), lambda v: s * (s - 1) * v ** (s - 2), f)


def abs2(f: MixedJet2) -> MixedJet2:
    """Jet of ``|f|²``."""
    return jet_mul(f, f.conj())


def seeds(z) -> list[MixedJet2]:
    """Coordinate jets ``z_a`` at the points ``z`` (shape (..., m))."""
    z = _c(z)
    return [MixedJet2.coordinate(z, a) for a in range(z.shape[-1])]


# ---------------------------------------------------------------------------
# matrix jets


@dataclass(frozen=True, eq=False)
class MatrixJet:
    """r×r matrix of jets: value (..., r, r), d (..., r, r, m), mixed (..., r, r, m, m)."""

    value: np.ndarray
    d: np.ndarray
    dbar: np.ndarray
    mixed: np.ndarray

    @property
    def rank(self) -> int:
        return self.value.shape[-1]

    @property
    def dim(self) -> int:
        return self.d.shape[-1]

    @classmethod
    def from_entries(cls, rows) -> "MatrixJet":
        """Assemble from a nested list of :class:`MixedJet2` entries."""
        r = len(rows)
        comp = []
        for name in ("value", "d", "dbar", "mixed"):
            arr = [[np.asarray(getattr(rows[i][j], name)) for j in range(r)] for i in range(r)]
            shape = np.broadcast_shapes(*[a.shape for row in arr for a in row])
            stacked = np.stack([np.stack([np.broadcast_to(a, shape) for a in row], axis=0) for row in arr], axis=0)
            ndim = {"value": 0, "d": 1, "dbar": 1, "mixed": 2}[name]
            # move the two matrix axes behind the batch axes
            nb = stacked.ndim - 2 - ndim
            order = list(range(2, 2 + nb)) + [0, 1] + list(range(2 + nb, stacked.ndim))
            comp.append(np.transpose(stacked, order).astype(complex))
        return cls(*comp)

    @classmethod
    def diag(cls, entries) -> "MatrixJet":
        m = entries[0].dim
        batch = np.broadcast_shapes(*[e.shape for e in entries])
        zero = MixedJet2.constant(np.zeros(batch), m)
        return cls.from_entries([[entries[i] if i == j else zero for j in range(len(entries))]
                                 for i in range(len(entries))])

    @classmethod
    def identity(cls, r: int, dim: int, batch: tuple = ()) -> "MatrixJet":
        v = np.broadcast_to(np.eye(r, dtype=complex), batch + (r, r)).copy()
        return cls(v, np.zeros(v.shape + (dim,), complex), np.zeros(v.shape + (dim,), complex),
                   np.zeros(v.shape + (dim, dim), complex))

    def entry(self, i: int, j: int) -> MixedJet2:
        return MixedJet2(self.value[..., i, j], self.d[..., i, j, :], self.dbar[..., i, j, :],
                         self.mixed[..., i, j, :, :])

    def conj_transpose(self) -> "MatrixJet":
        sw = lambda x, extra: np.swapaxes(x, -1 - extra - 1, -1 - extra)
        return MatrixJet(np.conj(sw(self.value, 0)), np.conj(sw(self.dbar, 1)), np.conj(sw(self.d, 1)),
                         np.conj(np.swapaxes(sw(self.mixed, 2), -1, -2)))

    def transpose(self) -> "MatrixJet":
        sw = lambda x, extra: np.swapaxes(x, -1 - extra - 1, -1 - extra)
        return MatrixJet(sw(self.value, 0), sw(self.d, 1), sw(self.dbar, 1), sw(self.mixed, 2))

    def __matmul__(self, other: "MatrixJet") -> "MatrixJet":
        return matrix_jet_mul(self, other)

    def __mul__(self, s):
        if isinstance(s, MixedJet2):
            a = s
            v = self.value
            av = a.value[..., None, None]
            d = self.d * av[..., None] + v[..., None] * a.d[..., None, None, :]
            db = self.dbar * av[..., None] + v[..., None] * a.dbar[..., None, None, :]
            mixed = (self.mixed * av[..., None, None]
                     + self.d[..., :, None] * a.dbar[..., None, None, None, :]
                     + self.dbar[..., None, :] * a.d[..., None, None, :, None]
                     + v[..., None, None] * a.mixed[..., None, None, :, :])
            return MatrixJet(self.value * av, d, db, mixed)
        s = _c(s)
        return MatrixJet(self.value * s, self.d * s, self.dbar * s, self.mixed * s)

    __rmul__ = __mul__

    def __add__(self, other: "MatrixJet") -> "MatrixJet":
        return MatrixJet(self.value + other.value, self.d + other.d, self.dbar + other.dbar,
                         self.mixed + other.mixed)

    def __sub__(self, other: "MatrixJet") -> "MatrixJet":
        return MatrixJet(self.value - other.value, self.d - other.d, self.dbar - other.dbar,
                         self.mixed - other.mixed)

    def det(self) -> MixedJet2:
        """Determinant as a scalar jet, by permutation expansion."""
        r = self.rank
        total = None
        for perm in itertools.permutations(range(r)):
            term = self.entry(0, perm[0])
            for i in range(1, r):
                term = term * self.entry(i, perm[i])
            term = term * float(_perm_sign(perm))
            total = term if total is None else total + term
        return total


def matrix_jet_mul(a: MatrixJet, b: MatrixJet) -> MatrixJet:
    """Product of matrix jets, factor order preserved."""
    if a.dim != b.dim:
        raise JetError(f"jet dimension mismatch: {a.dim} vs {b.dim}")
    value = a.value @ b.value
    d = np.einsum("...ijc,...jk->...ikc", a.d, b.value) + np.einsum("...ij,...jkc->...ikc", a.value, b.d)
    dbar = (np.einsum("...ijc,...jk->...ikc", a.dbar, b.value)
            + np.einsum("...ij,...jkc->...ikc", a.value, b.dbar))
    mixed = (np.einsum("...ijcb,...jk->...ikcb", a.mixed, b.value)
             + np.einsum("...ijc,...jkb->...ikcb", a.d, b.dbar)
             + np.einsum("...ijb,...jkc->...ikcb", a.dbar, b.d)
             + np.einsum("...ij,...jkcb->...ikcb", a.value, b.mixed))
    return MatrixJet(value, d, dbar, mixed)


def matrix_jet_inverse(h: MatrixJet, bound: float = COND_BOUND) -> MatrixJet:
    """Inverse of a matrix jet.

    Raises
    ------
    ConditioningError
        If the 2-norm condition number of any value part exceeds ``bound``.
    """
    cond = np.linalg.cond(h.value)
    worst = float(np.max(cond)) if np.size(cond) else 0.0
    if not np.isfinite(worst) or worst > bound:
        raise ConditioningError(worst, bound)
    hi = np.linalg.inv(h.value)
    d = -np.einsum("...ij,...jkc,...kl->...ilc", hi, h.d, hi)
    dbar = -np.einsum("...ij,...jkc,...kl->...ilc", hi, h.dbar, hi)
    hd = np.einsum("...ij,...jkc->...ikc", hi, h.d)      # H⁻¹∂H
    hdb = np.einsum("...ij,...jkc->...ikc", hi, h.dbar)  # H⁻¹∂̄H
    mixed = (-np.einsum("...ij,...jkcb,...kl->...ilcb", hi, h.mixed, hi)
             + np.einsum("...ijc,...jkb,...kl->...ilcb", hd, hdb, hi)
             + np.einsum("...ijb,...jkc,...kl->...ilcb", hdb, hd, hi))
    return MatrixJet(hi, d, dbar, mixed)


# ---------------------------------------------------------------------------
# (k,k)-forms at a point


@lru_cache(maxsize=None)
def subsets(m: int, k: int) -> tuple:
    return tuple(itertools.combinations(range(m), k))


def _perm_sign(seq) -> int:
    seq = list(seq)
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


@lru_cache(maxsize=None)
def _wedge_table(m: int, k: int, l: int) -> np.ndarray:
    """Signs T[K, I, I'] with dz_I ∧ dz_I' = T dz_K (0 when I, I' overlap)."""
    out = subsets(m, k + l)
    pos = {s: i for i, s in enumerate(out)}
    table = np.zeros((len(out), len(subsets(m, k)), len(subsets(m, l))))
    for a, i in enumerate(subsets(m, k)):
        for b, j in enumerate(subsets(m, l)):
            if set(i) & set(j):
                continue
            merged = i + j
            table[pos[tuple(sorted(merged))], a, b] = _perm_sign(merged)
    return table


@dataclass(frozen=True, eq=False)
class FormAtPoint:
    """A (k,k)-form in the basis e_{I,J} = ∧_t (i dz_{I_t} ∧ dz̄_{J_t}).

    ``coeffs`` has shape (..., C(m,k), C(m,k)) indexed by increasing k-subsets.
    """

    k: int
    m: int
    coeffs: np.ndarray

    @classmethod
    def unit(cls, m: int, batch: tuple = ()) -> "FormAtPoint":
        return cls(0, m, np.ones(batch + (1, 1), complex))

    @classmethod
    def zero(cls, k: int, m: int, batch: tuple = ()) -> "FormAtPoint":
        n = len(subsets(m, k))
        return cls(k, m, np.zeros(batch + (n, n), complex))

    @classmethod
    def from_11(cls, matrix) -> "FormAtPoint":
        """(1,1)-form Σ c_ab i dz_a∧dz̄_b from its coefficient matrix (..., m, m)."""
        matrix = _c(matrix)
        return cls(1, matrix.shape[-1], matrix)

    def __add__(self, other: "FormAtPoint") -> "FormAtPoint":
        if (self.k, self.m) != (other.k, other.m):
            raise JetError("cannot add forms of different bidegree or dimension")
        return FormAtPoint(self.k, self.m, self.coeffs + other.coeffs)

    def __sub__(self, other: "FormAtPoint") -> "FormAtPoint":
        return self + other * -1.0

    def __mul__(self, s) -> "FormAtPoint":
        s = _c(s)
        return FormAtPoint(self.k, self.m, self.coeffs * s[..., None, None])

    __rmul__ = __mul__

    def wedge(self, other: "FormAtPoint") -> "FormAtPoint":
        return wedge(self, other)

    def power(self, j: int) -> "FormAtPoint":
        out = FormAtPoint.unit(self.m, self.coeffs.shape[:-2])
        for _ in range(j):
            out = wedge(out, self)
        return out

    def top(self) -> np.ndarray:
        """Coefficient of the top form (only for k = m)."""
        if self.k != self.m:
            raise JetError("not a top-degree form")
        return self.coeffs[..., 0, 0]

    def reality_defect(self) -> np.ndarray:
        """max |c_{JI} − conj(c_{IJ})| per point."""
        c = self.coeffs
        return np.max(np.abs(np.swapaxes(c, -1, -2) - np.conj(c)), axis=(-1, -2))


def wedge(a: FormAtPoint, b: FormAtPoint) -> FormAtPoint:
    """Wedge product of a (k,k)- and an (l,l)-form."""
    if a.m != b.m:
        raise JetError(f"form dimension mismatch: {a.m} vs {b.m}")
    if a.k + b.k > a.m:
        raise JetError(f"degree overflow: ({a.k}+{b.k}) > {a.m}")
    t = _wedge_table(a.m, a.k, b.k)
    # e_{I,J} ∧ e_{I',J'} = sgn(I,I') sgn(J,J') e_{I∪I', J∪J'}; the factors i dz∧dz̄ commute
    coeffs = np.einsum("KIi,LJj,...IJ,...ij->...KL", t, t, a.coeffs, b.coeffs)
    return FormAtPoint(a.k + b.k, a.m, coeffs)


def compound(x: np.ndarray, k: int) -> np.ndarray:
    """k-th compound matrix (all k×k minors) of a batch of square matrices."""
    m = x.shape[-1]
    idx = subsets(m, k)
    if k == 0:
        return np.ones(x.shape[:-2] + (1, 1), dtype=x.dtype)
    out = np.empty(x.shape[:-2] + (len(idx), len(idx)), dtype=complex)
    for a, i in enumerate(idx):
        for b, j in enumerate(idx):
            out[..., a, b] = np.linalg.det(x[..., list(i), :][..., list(j)])
    return out


def form_norm(alpha: FormAtPoint, g: np.ndarray) -> np.ndarray:
    """Pointwise norm of a (k,k)-form relative to the Kähler metric ``g``.

    ``g`` is the (1,1) coefficient matrix of ω in the same basis.  The
    coefficients are moved to an ω-orthonormal coframe and the Frobenius norm
    is returned, so that |ω| = sqrt(m).
    """
    ginv = np.linalg.inv(g)
    ell = np.linalg.cholesky(ginv)
    x = np.conj(np.swapaxes(ell, -1, -2))
    cx = compound(x, alpha.k)
    c = cx @ alpha.coeffs @ np.conj(np.swapaxes(cx, -1, -2))
    return np.sqrt(np.sum(np.abs(c) ** 2, axis=(-1, -2)))
