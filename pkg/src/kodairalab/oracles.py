"""Independent numerical oracles: finite differences and random expressions.

These do not use the jet algebra and serve as reference values for it.
"""

from __future__ import annotations

import numpy as np

from . import jets as J


def wirtinger_fd(f, z, h: float = 1e-3, richardson: bool = True):
    """Value, ∂, ∂̄ and ∂∂̄ of ``f`` at ``z`` by central differences.

    Parameters
    ----------
    f : callable
        Maps complex arrays of shape (N, m) to shape (N,).
    z : array_like, shape (m,)
    h : float
        Base step; with ``richardson`` the steps h and h/2 are combined.

    Returns
    -------
    value, d, dbar, mixed : ndarray
    """
    z = np.asarray(z, dtype=complex)
    m = z.shape[0]
    dirs = np.zeros((2 * m, m), complex)
    for a in range(m):
        dirs[2 * a, a] = 1.0
        dirs[2 * a + 1, a] = 1j

    def partials(step):
        # first partials along real directions x_a, y_a
        shifts = [step * dirs[u] for u in range(2 * m)] + [-step * dirs[u] for u in range(2 * m)]
        pairs = []
        for u in range(2 * m):
            for v in range(2 * m):
                for su, sv in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                    pairs.append(step * (su * dirs[u] + sv * dirs[v]))
        pts = z + np.array(shifts + pairs)
        vals = f(pts)
        first = (vals[: 2 * m] - vals[2 * m: 4 * m]) / (2 * step)
        q = vals[4 * m:].reshape(2 * m, 2 * m, 4)
        second = (q[..., 0] - q[..., 1] - q[..., 2] + q[..., 3]) / (4 * step * step)
        return first, second

    f1, s1 = partials(h)
    if richardson:
        f2, s2 = partials(h / 2)
        f1 = (4 * f2 - f1) / 3
        s1 = (4 * s2 - s1) / 3
    fx, fy = f1[0::2], f1[1::2]
    sxx, syy = s1[0::2, 0::2], s1[1::2, 1::2]
    sxy, syx = s1[0::2, 1::2], s1[1::2, 0::2]
    d = 0.5 * (fx - 1j * fy)
    dbar = 0.5 * (fx + 1j * fy)
    mixed = 0.25 * (sxx + syy + 1j * (sxy - syx))
    value = f(z[None, :])[0]
    return value, d, dbar, mixed


# ---------------------------------------------------------------------------
# random expressions in (z, z̄)

_UNARY = ("exp", "log1p", "recip1p", "pow1p", "conj", "scale")
_BINARY = ("add", "mul", "sub")


def random_expression(rng: np.random.Generator, m: int, depth: int = 4):
    """A random expression tree built from polynomials and elementary functions.

    Every node stays in the domain of its function: ``log1p`` and ``pow1p``
    act on 1 + |f|², ``recip1p`` is 1/(1 + |f|²).
    """
    if depth <= 0 or rng.random() < 0.2:
        kind = rng.integers(3)
        if kind == 0:
            return ("z", int(rng.integers(m)))
        if kind == 1:
            return ("zbar", int(rng.integers(m)))
        c = complex(rng.normal(), rng.normal())
        return ("const", c)
    if rng.random() < 0.45:
        op = _UNARY[rng.integers(len(_UNARY))]
        arg = random_expression(rng, m, depth - 1)
        if op == "pow1p":
            return (op, float(rng.uniform(-2.5, 2.5)), arg)
        if op == "scale":
            return (op, complex(rng.normal(), rng.normal()) * 0.5, arg)
        return (op, arg)
    op = _BINARY[rng.integers(len(_BINARY))]
    return (op, random_expression(rng, m, depth - 1), random_expression(rng, m, depth - 1))


def eval_array(expr, z: np.ndarray) -> np.ndarray:
    """Evaluate on complex arrays ``z`` of shape (N, m)."""
    tag = expr[0]
    if tag == "z":
        return z[:, expr[1]]
    if tag == "zbar":
        return np.conj(z[:, expr[1]])
    if tag == "const":
        return np.full(z.shape[0], expr[1], complex)
    if tag in _BINARY:
        a, b = eval_array(expr[1], z), eval_array(expr[2], z)
        return a + b if tag == "add" else a * b if tag == "mul" else a - b
    if tag == "pow1p":
        a = eval_array(expr[2], z)
        return (1 + np.abs(a) ** 2) ** expr[1]
    if tag == "scale":
        return expr[1] * eval_array(expr[2], z)
    a = eval_array(expr[1], z)
    if tag == "exp":
        return np.exp(0.3 * a)
    if tag == "log1p":
        return np.log(1 + np.abs(a) ** 2)
    if tag == "recip1p":
        return 1 / (1 + np.abs(a) ** 2)
    if tag == "conj":
        return np.conj(a)
    raise ValueError(tag)


def eval_jet(expr, z: np.ndarray) -> J.MixedJet2:
    """Evaluate the same expression with the jet algebra at points (N, m)."""
    tag = expr[0]
    m = z.shape[-1]
    if tag == "z":
        return J.MixedJet2.coordinate(z, expr[1])
    if tag == "zbar":
        return J.MixedJet2.conj_coordinate(z, expr[1])
    if tag == "const":
        return J.MixedJet2.constant(np.full(z.shape[:-1], expr[1], complex), m)
    if tag in _BINARY:
        a, b = eval_jet(expr[1], z), eval_jet(expr[2], z)
        return a + b if tag == "add" else a * b if tag == "mul" else a - b
    if tag == "pow1p":
        a = eval_jet(expr[2], z)
        return J.power(1 + J.abs2(a), expr[1])
    if tag == "scale":
        return eval_jet(expr[2], z) * expr[1]
    a = eval_jet(expr[1], z)
    if tag == "exp":
        return J.exp(a * 0.3)
    if tag == "log1p":
        return J.log(1 + J.abs2(a))
    if tag == "recip1p":
        return J.reciprocal(1 + J.abs2(a))
    if tag == "conj":
        return a.conj()
    raise ValueError(tag)


def jet_fd_discrepancy(expr, z: np.ndarray, h: float = 1e-3, refine: int = 3) -> float:
    """Relative discrepancy between the jet and its finite-difference oracle.

    The error is max over components divided by max(1, largest component
    magnitude), measured at a single point ``z`` of shape (m,).  When the
    discrepancy exceeds 1e-8 the step is cut by 4 up to ``refine`` times and
    the smallest discrepancy is kept: steep expressions need smaller steps
    before truncation error drops below the tolerance.
    """
    jet = eval_jet(expr, z[None, :])
    got = np.concatenate([jet.value.ravel(), jet.d[0], jet.dbar[0], jet.mixed[0].ravel()])
    best = np.inf
    for _ in range(refine + 1):
        v, d, db, mx = wirtinger_fd(lambda pts: eval_array(expr, pts), z, h=h)
        ref = np.concatenate([[v], d, db, mx.ravel()])
        scale = max(1.0, float(np.max(np.abs(ref))))
        best = min(best, float(np.max(np.abs(got - ref)) / scale))
        if best < 1e-8:
            break
        h /= 4
    return best
