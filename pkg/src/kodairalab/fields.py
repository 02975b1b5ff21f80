"""Smooth global functions on CPⁿ used as metric twists and test functions.

Every field is written in homogeneous quantities (moment coordinates
t_k = |Z_k|²/|Z|² and Re(a Z_i Z̄_j)/|Z|²), so it is evaluated in any chart
and is globally smooth.  Fields are frozen dataclasses: hashable, picklable
and usable as cache keys.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry as G
from . import jets as J


@dataclass(frozen=True)
class ScalarField:
    """ψ = Σ c_γ t^γ + Σ Re(a_ij Z_i Z̄_j)/|Z|².

    Parameters
    ----------
    poly : tuple of (gamma, coeff)
        gamma is a tuple of n+1 nonnegative exponents of (t_0, ..., t_n).
    waves : tuple of (i, j, coeff)
        Angular terms; a field without waves is torus invariant.
    """

    poly: tuple = ()
    waves: tuple = ()

    @property
    def is_zero(self) -> bool:
        return not self.poly and not self.waves

    @property
    def is_toric(self) -> bool:
        return not self.waves

    def jet(self, x: G.ChartPoint) -> J.MixedJet2:
        n = x.n
        out = J.MixedJet2.constant(np.zeros(len(x)), n)
        if self.poly:
            t = G.moment_jets(x)
            for gamma, c in self.poly:
                term = J.MixedJet2.constant(np.full(len(x), float(c)), n)
                for k, e in enumerate(gamma):
                    for _ in range(e):
                        term = term * t[k]
                out = out + term
        if self.waves:
            zs = G.homogeneous_jets(x)
            inv = G.fs_weight_jet(x)
            for i, j, a in self.waves:
                w = zs[i] * zs[j].conj() * inv * complex(a)
                out = out + w.real
        return out

    def value(self, x: G.ChartPoint) -> np.ndarray:
        Z = x.homogeneous()
        nrm = np.sum(np.abs(Z) ** 2, axis=1)
        out = np.zeros(len(x))
        if self.poly:
            t = np.abs(Z) ** 2 / nrm[:, None]
            for gamma, c in self.poly:
                out = out + float(c) * np.prod(t ** np.asarray(gamma), axis=1)
        for i, j, a in self.waves:
            out = out + np.real(complex(a) * Z[:, i] * np.conj(Z[:, j])) / nrm
        return out


ZERO = ScalarField()


@dataclass(frozen=True)
class MatrixTwist:
    """Frame metric H(x) = D(x) A0 D(x), D = diag(exp(ψ_j/2)).

    ``a0`` is a Hermitian positive-definite matrix given as nested tuples.
    With all ψ_j zero the twist is the constant matrix A0.
    """

    a0: tuple
    psi: tuple = ()

    def __post_init__(self):
        a = self.matrix
        if a.shape[0] != a.shape[1] or not np.allclose(a, a.conj().T):
            raise ValueError("matrix twist must be Hermitian")
        ev = np.linalg.eigvalsh(a)
        if ev.min() <= 0:
            raise ValueError("matrix twist must be positive definite")
        if ev.max() / ev.min() > 1e8:
            raise ValueError(f"matrix twist condition {ev.max() / ev.min():.2e} exceeds 1e8")

    @property
    def matrix(self) -> np.ndarray:
        return np.array(self.a0, dtype=complex)

    @property
    def rank(self) -> int:
        return len(self.a0)

    def fields(self) -> tuple:
        return tuple(self.psi) if self.psi else (ZERO,) * self.rank

    @property
    def is_toric(self) -> bool:
        return all(f.is_toric for f in self.fields())

    @property
    def is_constant(self) -> bool:
        return all(f.is_zero for f in self.fields())

    def jet(self, x: G.ChartPoint) -> J.MatrixJet:
        a = self.matrix
        half = [J.exp(f.jet(x) * 0.5) for f in self.fields()]
        r = self.rank
        rows = [[half[i] * half[j] * a[i, j] for j in range(r)] for i in range(r)]
        return J.MatrixJet.from_entries(rows)

    def value(self, x: G.ChartPoint) -> np.ndarray:
        half = np.stack([np.exp(0.5 * f.value(x)) for f in self.fields()], axis=1)
        return half[:, :, None] * self.matrix[None] * half[:, None, :]


@dataclass(frozen=True)
class PairingFunction:
    """A named real test function on CPⁿ, evaluated through its jet."""

    name: str
    kind: str
    param: float = 0.0

    def jet(self, x: G.ChartPoint) -> J.MixedJet2:
        n = x.n
        if self.kind == "const":
            return J.MixedJet2.constant(np.ones(len(x)), n)
        t = G.moment_jets(x)
        if self.kind == "re_bump":
            # Re(Z_1 Z̄_0)/|Z|² · exp(−t_1): smooth, angle dependent
            zs = G.homogeneous_jets(x)
            w = (zs[1] * zs[0].conj() * G.fs_weight_jet(x)).real
            return w * J.exp(t[1] * -1.0)
        if self.kind == "radial_bump":
            return t[0] * t[0]
        if self.kind == "c2_kink":
            # (t_0 − 1/2)_+^3 is C² but not C³ across t_0 = 1/2
            c = self.param or 0.5
            return J.jet_compose(lambda v: np.maximum(v.real - c, 0) ** 3,
                                 lambda v: 3 * np.maximum(v.real - c, 0) ** 2,
                                 lambda v: 6 * np.maximum(v.real - c, 0), t[0])
        raise ValueError(f"unknown test function kind {self.kind!r}")

    def value(self, x: G.ChartPoint) -> np.ndarray:
        return self.jet(x).value.real


BATTERY = (
    PairingFunction("one", "const"),
    PairingFunction("re_bump", "re_bump"),
    PairingFunction("radial_bump", "radial_bump"),
    PairingFunction("c2_kink", "c2_kink", 0.5),
)


def c2_norm(phi: PairingFunction, rule: G.QuadratureRule) -> float:
    """max over nodes of |φ| + |∂φ|_ω + |∂∂̄φ|_ω (the mixed Hessian part of C²)."""
    best = 0.0
    for start in range(0, rule.size, 8192):
        x = rule.nodes[start:start + 8192].best_chart()
        jet = phi.jet(x)
        g = G.omega_matrix(x)
        ginv = np.linalg.inv(g)
        grad = np.sqrt(np.abs(np.einsum("na,nab,nb->n", jet.d, ginv, np.conj(jet.d))))
        hess = J.form_norm(J.FormAtPoint.from_11(jet.mixed), g)
        best = max(best, float(np.max(np.abs(jet.value) + grad + hess)))
    return best


def toric_bump(n: int, amplitude: float, seed_terms: tuple | None = None) -> ScalarField:
    """amplitude times a fixed low-degree polynomial in the moment coordinates."""
    if seed_terms is None:
        if n == 1:
            seed_terms = (((0, 1), 1.0), ((1, 1), 2.0), ((0, 2), -0.5))
        else:
            seed_terms = (((0, 1, 0), 1.0), ((1, 1, 0), 2.0), ((0, 1, 1), -1.5), ((0, 0, 2), 0.7))
    return ScalarField(tuple((g, amplitude * c) for g, c in seed_terms))


def wave_field(amplitude: float, i: int = 1, j: int = 0) -> ScalarField:
    """amplitude · Re(Z_i Z̄_j)/|Z|², a non-toric smooth field."""
    return ScalarField((), ((i, j, amplitude),))
