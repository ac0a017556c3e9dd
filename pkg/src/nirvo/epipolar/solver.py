"""Five-point minimal solver for the essential matrix.

E is written as x*X0 + y*X1 + z*X2 + X3 over the nullspace of the 5x9
epipolar design matrix. The cubic constraints det(E) = 0 and
2 E E^T E - tr(E E^T) E = 0 give ten equations in twenty monomials; after
Gauss-Jordan elimination three 'z-hidden' rows form a 3x3 matrix whose
determinant is a degree-10 polynomial in z.
"""

from __future__ import annotations

import itertools

import numpy as np

from ..errors import DegenerateSample
from .pose import EssentialMatrix, homogeneous

# monomial exponents (x, y, z); the first ten are eliminated
MONOMIALS = [
    (3, 0, 0), (0, 3, 0), (2, 1, 0), (1, 2, 0), (2, 0, 1), (2, 0, 0), (0, 2, 1), (0, 2, 0), (1, 1, 1), (1, 1, 0),
    (1, 0, 2), (1, 0, 1), (1, 0, 0), (0, 1, 2), (0, 1, 1), (0, 1, 0), (0, 0, 3), (0, 0, 2), (0, 0, 1), (0, 0, 0),
]
RANK_TOL = 1e-10
IMAG_TOL = 1e-8
POLISH_ITERS = 4
ACCEPT_TOL = 1e-9

# Fixed generic rotation of the nullspace basis. The solver sets the X3
# coefficient to 1, so a true E orthogonal to X3 would be lost at infinity.
# Raw SVD bases can line up with structured data (pure sideways translation
# puts E exactly in span(X0, X1, X2)); after mixing this needs a coincidence.
_MIX = np.linalg.qr(np.random.default_rng(0x5F1E).normal(size=(4, 4)))[0]


def _triple_map() -> np.ndarray:
    """(64, 20) map from ordered index triples over (x, y, z, 1) to monomial columns."""
    col = {m: i for i, m in enumerate(MONOMIALS)}
    out = np.zeros((64, 20))
    for n, (k, l, m) in enumerate(itertools.product(range(4), repeat=3)):
        exp = [0, 0, 0]
        for v in (k, l, m):
            if v < 3:
                exp[v] += 1
        out[n, col[tuple(exp)]] = 1.0
    return out


_TRIPLES = _triple_map()
_LEVI = np.zeros((3, 3, 3))
for _p in itertools.permutations(range(3)):
    _LEVI[_p] = np.linalg.det(np.eye(3)[list(_p)])


def design_matrix(x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    h1, h2 = homogeneous(x1), homogeneous(x2)
    return (h2[:, :, None] * h1[:, None, :]).reshape(len(h1), 9)


def constraint_matrix(basis: np.ndarray) -> np.ndarray:
    """(10, 20) coefficients of the cubic constraints for basis (4, 3, 3)."""
    det = np.einsum("abc,pa,qb,rc->pqr", _LEVI, basis[:, 0, :], basis[:, 1, :], basis[:, 2, :])
    eet = np.einsum("kij,lmj->klim", basis, basis)  # X_k X_l^T
    tr = np.einsum("klii->kl", eet)
    trace = 2.0 * np.einsum("klij,mjn->klmin", eet, basis) - tr[:, :, None, None, None] * basis[None, None]
    rows = np.vstack([det.reshape(1, 64), trace.reshape(64, 9).T])
    return rows @ _TRIPLES


def _hidden_rows(b: np.ndarray, i: int):
    """Row i minus z * row i+1 of the reduced system as (x, y, 1) coefficients in z (ascending)."""
    p, q = b[i], b[i + 1]
    cx = np.array([p[2], p[1] - q[2], p[0] - q[1], -q[0]])
    cy = np.array([p[5], p[4] - q[5], p[3] - q[4], -q[3]])
    c1 = np.array([p[9], p[8] - q[9], p[7] - q[8], p[6] - q[7], -q[6]])
    return [cx, cy, c1]


def _poly_det3(m) -> np.ndarray:
    P = np.polynomial.polynomial
    out = np.zeros(1)
    for (a, b, c), sign in ((( 0, 1, 2), 1), ((1, 2, 0), 1), ((2, 0, 1), 1), ((0, 2, 1), -1), ((1, 0, 2), -1), ((2, 1, 0), -1)):
        out = P.polyadd(out, sign * P.polymul(P.polymul(m[0][a], m[1][b]), m[2][c]))
    return out


def _eval_rows(m, z: float) -> np.ndarray:
    P = np.polynomial.polynomial
    return np.array([[P.polyval(z, c) for c in row] for row in m])


_EI = np.array(MONOMIALS, dtype=np.intp)
_EI_DOWN = np.maximum(_EI - 1, 0)


def _monomials(v: np.ndarray):
    """Monomial values (20,) and their Jacobian (20, 3) at v = (x, y, z)."""
    pw = v[:, None] ** np.arange(4)[None, :]  # pw[j, k] = v_j ** k
    f = pw[[0, 1, 2], _EI]  # (20, 3) per-variable factors
    vals = f[:, 0] * f[:, 1] * f[:, 2]
    d = _EI * pw[[0, 1, 2], _EI_DOWN]
    jac = np.column_stack([d[:, 0] * f[:, 1] * f[:, 2], f[:, 0] * d[:, 1] * f[:, 2], f[:, 0] * f[:, 1] * d[:, 2]])
    return vals, jac


def _residual(c: np.ndarray, vals: np.ndarray, scale: float) -> float:
    return float(np.abs(c @ vals).max() / (scale * max(1.0, np.abs(vals).max())))


def _polish(c: np.ndarray, v: np.ndarray):
    """Gauss-Newton on the ten cubic constraints; returns (v, scaled residual)."""
    scale = np.abs(c).max()
    vals, jac = _monomials(v)
    res = _residual(c, vals, scale)
    for _ in range(POLISH_ITERS):
        if res <= 1e-14:
            break
        step = np.linalg.lstsq(c @ jac, -(c @ vals), rcond=None)[0]
        v = v + step
        vals, jac = _monomials(v)
        res = _residual(c, vals, scale)
    return v, res


def _cross(a, b):
    return np.array([a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]])


def five_point(x1, x2) -> list[EssentialMatrix]:
    """All real essential matrices consistent with five normalized correspondences."""
    x1 = np.asarray(x1, dtype=np.float64).reshape(-1, 2)
    x2 = np.asarray(x2, dtype=np.float64).reshape(-1, 2)
    if len(x1) != 5 or len(x2) != 5:
        raise ValueError("five_point needs exactly 5 correspondences")
    a = design_matrix(x1, x2)
    _, s, vt = np.linalg.svd(a)
    if s[4] <= RANK_TOL * s[0]:
        raise DegenerateSample("epipolar design matrix has rank < 5")
    basis = (_MIX @ vt[5:]).reshape(4, 3, 3)
    c = constraint_matrix(basis)
    try:
        b = np.linalg.solve(c[:, :10], c[:, 10:])
    except np.linalg.LinAlgError:
        raise DegenerateSample("cubic constraint system is singular") from None
    m = [_hidden_rows(b, 4), _hidden_rows(b, 6), _hidden_rows(b, 8)]
    poly = _poly_det3(m)
    nz = np.nonzero(np.abs(poly) > 1e-300)[0]
    if len(nz) == 0:
        raise DegenerateSample("degenerate hidden-variable polynomial")
    poly = poly[: nz[-1] + 1]
    dpoly = np.polynomial.polynomial.polyder(poly)
    out = []
    for root in np.roots(poly[::-1]):
        if abs(root.imag) > IMAG_TOL * max(1.0, abs(root)):
            continue
        z = root.real
        dv = np.polynomial.polynomial.polyval(z, dpoly)
        if dv != 0:
            z -= np.polynomial.polynomial.polyval(z, poly) / dv
        rows = _eval_rows(m, z)
        cands = [_cross(rows[0], rows[1]), _cross(rows[0], rows[2]), _cross(rows[1], rows[2])]
        v = max(cands, key=np.linalg.norm)
        if abs(v[2]) < 1e-14 * max(np.linalg.norm(v), 1e-300):
            continue
        sol, res = _polish(c, np.array([v[0] / v[2], v[1] / v[2], z]))
        if not res <= ACCEPT_TOL:
            continue
        e = sol[0] * basis[0] + sol[1] * basis[1] + sol[2] * basis[2] + basis[3]
        if np.linalg.norm(e) == 0 or not np.all(np.isfinite(e)):
            continue
        out.append(EssentialMatrix(e))
    return out
