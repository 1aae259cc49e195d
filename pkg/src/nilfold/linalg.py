"""Row-echelon linear algebra, exact over Q and thresholded over R.

Matrices are lists of rows.  A matrix is *exact* when every entry is an int,
a Fraction or a rational :class:`ExactScalar`; anything else is handled in
float64 with the singular-value / pivot threshold ``TOL``.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Sequence

import numpy as np

from .ring import ExactScalar

TOL = 1e-10


def _exact_entry(x):
    if isinstance(x, bool):
        return None
    if isinstance(x, (int, Fraction)):
        return Fraction(x)
    if isinstance(x, ExactScalar) and x.is_rational:
        return x.coeffs[0]
    return None


def _float_entry(x) -> float:
    if isinstance(x, ExactScalar):
        return x.evaluate()
    return float(x)


def to_exact(rows) -> list[list[Fraction]] | None:
    """Rows as Fractions, or None if some entry is not rational."""
    out = []
    for row in rows:
        conv = []
        for x in row:
            q = _exact_entry(x)
            if q is None:
                return None
            conv.append(q)
        out.append(conv)
    return out


def to_float(rows, ncols: int | None = None) -> np.ndarray:
    rows = list(rows)
    if not rows:
        return np.zeros((0, ncols or 0))
    return np.array([[_float_entry(x) for x in row] for row in rows], dtype=float)


def is_exact(rows) -> bool:
    return to_exact(rows) is not None


# -- exact ------------------------------------------------------------------
def rref_exact(rows: Sequence[Sequence[Fraction]], col_order=None):
    """Reduced row echelon form over Q.

    ``col_order`` fixes the order in which columns are tried as pivots.
    Returns (nonzero rows, pivot columns).
    """
    A = [list(map(Fraction, r)) for r in rows]
    if not A:
        return [], []
    ncols = len(A[0])
    order = list(range(ncols)) if col_order is None else list(col_order)
    pivots = []
    r = 0
    for c in order:
        p = next((i for i in range(r, len(A)) if A[i][c] != 0), None)
        if p is None:
            continue
        A[r], A[p] = A[p], A[r]
        piv = A[r][c]
        A[r] = [x / piv for x in A[r]]
        for i in range(len(A)):
            if i != r and A[i][c] != 0:
                f = A[i][c]
                A[i] = [a - f * b for a, b in zip(A[i], A[r])]
        pivots.append(c)
        r += 1
        if r == len(A):
            break
    return A[:r], pivots


def nullspace_exact(rows, ncols: int) -> list[list[Fraction]]:
    R, piv = rref_exact(rows) if rows else ([], [])
    free = [c for c in range(ncols) if c not in piv]
    basis = []
    for f in free:
        v = [Fraction(0)] * ncols
        v[f] = Fraction(1)
        for row, p in zip(R, piv):
            v[p] = -row[f]
        basis.append(v)
    return basis


# -- float ------------------------------------------------------------------
def rref_float(A: np.ndarray, col_order=None, tol: float = TOL):
    """Float RREF with partial pivoting; entries below ``tol`` (relative to
    the matrix scale) count as zero."""
    A = np.array(A, dtype=float, copy=True)
    if A.size == 0:
        return A.reshape(0, A.shape[1] if A.ndim == 2 else 0), []
    scale = max(1.0, float(np.abs(A).max()))
    thr = tol * scale
    nrows, ncols = A.shape
    order = range(ncols) if col_order is None else col_order
    pivots = []
    r = 0
    for c in order:
        if r == nrows:
            break
        p = r + int(np.argmax(np.abs(A[r:, c])))
        if abs(A[p, c]) <= thr:
            continue
        A[[r, p]] = A[[p, r]]
        A[r] /= A[r, c]
        for i in range(nrows):
            if i != r:
                A[i] -= A[i, c] * A[r]
        A[np.abs(A) <= thr] = 0.0
        pivots.append(c)
        r += 1
    return A[:r], pivots


def rank_float(A: np.ndarray, tol: float = TOL) -> int:
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    return int(np.sum(s > tol * max(1.0, s[0])))


# -- dispatch ---------------------------------------------------------------
def rank(rows, ncols: int | None = None) -> int:
    rows = [list(r) for r in rows]
    if not rows:
        return 0
    ex = to_exact(rows)
    if ex is not None:
        return len(rref_exact(ex)[0])
    return rank_float(to_float(rows))


def row_basis(rows, ncols: int):
    """A basis of the row span (exact rows when possible)."""
    rows = [list(r) for r in rows]
    if not rows:
        return []
    ex = to_exact(rows)
    if ex is not None:
        return rref_exact(ex)[0]
    R, _ = rref_float(to_float(rows, ncols))
    return [list(r) for r in R]


def span_dim_sum(W, V, ncols: int) -> int:
    """dim(W + V)."""
    return rank(list(W) + list(V), ncols)


def intersection_dim(W, V, ncols: int) -> int:
    return rank(W, ncols) + rank(V, ncols) - span_dim_sum(W, V, ncols)


def solve_rows(basis, v):
    """Coefficients c with v = sum_k c_k basis[k]; exact when possible.

    Raises ValueError when v is outside the span.
    """
    basis = [list(b) for b in basis]
    ex_b, ex_v = to_exact(basis), to_exact([v])
    k = len(basis)
    if ex_b is not None and ex_v is not None:
        # columns are unknowns: solve B^T c = v
        ncols = len(ex_v[0])
        aug = [[ex_b[j][i] for j in range(k)] + [ex_v[0][i]] for i in range(ncols)]
        R, piv = rref_exact(aug)
        if k in piv:
            raise ValueError("vector is not in the span")
        c = [Fraction(0)] * k
        for row, p in zip(R, piv):
            c[p] = row[k]
        return c
    B = to_float(basis)
    x = to_float([v])[0]
    c, *_ = np.linalg.lstsq(B.T, x, rcond=None)
    if np.linalg.norm(B.T @ c - x) > 1e-8 * max(1.0, np.linalg.norm(x)):
        raise ValueError("vector is not in the span")
    return list(c)


def det_exact(M) -> Fraction:
    A = [list(map(Fraction, r)) for r in M]
    n = len(A)
    det = Fraction(1)
    for c in range(n):
        p = next((i for i in range(c, n) if A[i][c] != 0), None)
        if p is None:
            return Fraction(0)
        if p != c:
            A[c], A[p] = A[p], A[c]
            det = -det
        det *= A[c][c]
        for i in range(c + 1, n):
            if A[i][c] != 0:
                f = A[i][c] / A[c][c]
                A[i] = [a - f * b for a, b in zip(A[i], A[c])]
    return det


def inverse_exact(M) -> list[list[Fraction]]:
    n = len(M)
    aug = [list(map(Fraction, row)) + [Fraction(int(i == j)) for j in range(n)] for i, row in enumerate(M)]
    R, piv = rref_exact(aug)
    if piv[:n] != list(range(n)) or len(R) < n:
        raise ValueError("matrix is singular")
    return [row[n:] for row in R]
