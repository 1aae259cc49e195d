"""Filtered vector spaces, degree functions and limit subspaces under dilations.

Vectors are rows in ambient coordinates of ``R^n``.  Data made of rationals is
handled exactly; anything else falls back to thresholded float elimination.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import linalg as la


class DegreeError(ValueError):
    pass


def _rows(vs) -> list[list]:
    return [list(v) for v in vs]


def _is_zero_vec(v) -> bool:
    ex = la.to_exact([v])
    if ex is not None:
        return not any(ex[0])
    return float(np.abs(la.to_float([v])).max(initial=0.0)) <= la.TOL


class FilteredSpace:
    """V = V_1 ⊇ V_2 ⊇ ... ⊇ V_r ⊋ {0}, each V_i given by spanning rows."""

    def __init__(self, dim: int, filtration: Sequence[Sequence[Sequence]]):
        self.dim = dim
        filt = [_rows(V) for V in filtration]
        while filt and la.rank(filt[-1], dim) == 0:
            filt.pop()
        if not filt:
            raise DegreeError("filtration is empty")
        for V in filt:
            for v in V:
                if len(v) != dim:
                    raise DegreeError(f"vector of length {len(v)} in a space of dimension {dim}")
        self.filtration = filt
        self.exact = all(la.is_exact(V) for V in filt if V)
        self.dims = [la.rank(V, dim) for V in filt]
        if self.dims[0] != dim:
            raise DegreeError("V_1 must be the whole space")
        for i in range(len(filt) - 1):
            if la.span_dim_sum(filt[i], filt[i + 1], dim) != self.dims[i]:
                raise DegreeError(f"V_{i + 2} is not contained in V_{i + 1}")
        self._build_adapted()

    @property
    def length(self) -> int:
        return len(self.filtration)

    def _build_adapted(self):
        # greedy from the deepest step outwards; ties follow input order
        chosen: list[tuple[int, list]] = []
        current: list[list] = []
        for i in range(self.length, 0, -1):
            for v in self.filtration[i - 1]:
                if la.rank(current + [v], self.dim) > len(current):
                    current.append(v)
                    chosen.append((i, v))
        chosen.sort(key=lambda dv: dv[0])  # stable: ascending degree
        self.adapted_basis = [v for _, v in chosen]
        self.degrees = [d for d, _ in chosen]
        if self.exact:
            self.basis_matrix = la.to_exact(self.adapted_basis)
            self._inv = la.inverse_exact(self.basis_matrix)
        else:
            self.basis_matrix = la.to_float(self.adapted_basis)
            self._inv = np.linalg.inv(self.basis_matrix)

    def coords(self, v) -> list:
        """Coefficients of v in the adapted basis."""
        ex = la.to_exact([v]) if self.exact else None
        if ex is not None:
            row = ex[0]
            return [sum(row[j] * self._inv[j][k] for j in range(self.dim)) for k in range(self.dim)]
        x = la.to_float([v])[0]
        inv = np.array(self._inv, dtype=float)
        return list(x @ inv)

    @property
    def homogeneous_dimension(self) -> int:
        return sum(self.dims)


# -- degree functions ---------------------------------------------------------
def degree_of_vector(v, F: FilteredSpace) -> int:
    """max{i : v ∈ V_i} by rank tests against the filtration steps."""
    if _is_zero_vec(v):
        raise DegreeError("degree of the zero vector is undefined")
    deg = 1
    for i, V in enumerate(F.filtration, start=1):
        if la.rank(V + [list(v)], F.dim) == F.dims[i - 1]:
            deg = i
        else:
            break
    return deg


def _minor_nonzero(sub) -> tuple[bool, float]:
    ex = la.to_exact(sub)
    if ex is not None:
        d = la.det_exact(ex)
        return d != 0, float(abs(d))
    d = float(np.linalg.det(np.array(sub, dtype=float)))
    return True, abs(d)


def degree_of_wedge(vectors: Sequence[Sequence], F: FilteredSpace) -> int:
    """Degree of f_1 ∧ ... ∧ f_k: the least deg(e_I) over nonzero minors of the
    coordinate matrix in the adapted basis."""
    vectors = _rows(vectors)
    k = len(vectors)
    if k == 0:
        return 0
    if la.rank(vectors, F.dim) < k:
        raise DegreeError("wedge of linearly dependent vectors")
    C = [F.coords(v) for v in vectors]
    n = F.dim
    if math.comb(n, k) > 20000:
        return _wedge_degree_greedy(C, F)
    best = None
    scored = []
    for I in itertools.combinations(range(n), k):
        sub = [[row[j] for j in I] for row in C]
        nz, mag = _minor_nonzero(sub)
        if nz:
            scored.append((sum(F.degrees[j] for j in I), mag))
    if la.to_exact(C) is None:
        top = max(m for _, m in scored)
        scored = [(d, m) for d, m in scored if m > la.TOL * max(1.0, top)]
    best = min(d for d, _ in scored)
    return best


def _wedge_degree_greedy(C, F: FilteredSpace) -> int:
    # min-weight basis of the column matroid, columns taken by ascending degree
    order = sorted(range(F.dim), key=lambda j: F.degrees[j])
    cols: list[list] = []
    total = 0
    for j in order:
        cand = cols + [[row[j] for row in C]]
        if la.rank(cand) > len(cols):
            cols = cand
            total += F.degrees[j]
        if len(cols) == len(C):
            break
    return total


def degree_of_subspace(W: Sequence[Sequence], F: FilteredSpace) -> int:
    """Σ_j dim(W ∩ V_j).  The zero subspace has degree 0 by convention."""
    W = _rows(W)
    if la.rank(W, F.dim) == 0:
        return 0
    return sum(la.intersection_dim(W, V, F.dim) for V in F.filtration)


# -- dilations ----------------------------------------------------------------
class DilationGroup:
    """δ_t(e) = t^{deg e} e on a layered basis m_1 ⊕ ... ⊕ m_r.

    ``layers[p-1]`` spans m_p.  By default m_p is spanned by the adapted-basis
    vectors of degree p.
    """

    def __init__(self, F: FilteredSpace, layers: Sequence[Sequence[Sequence]] | None = None):
        self.space = F
        n = F.dim
        if layers is None:
            layers = [
                [v for v, d in zip(F.adapted_basis, F.degrees) if d == p]
                for p in range(1, F.length + 1)
            ]
        layers = [_rows(m) for m in layers]
        if len(layers) != F.length:
            raise DegreeError(f"need {F.length} layers, got {len(layers)}")
        basis, degrees = [], []
        for p, m in enumerate(layers, start=1):
            Vp = F.filtration[p - 1]
            Vnext = F.filtration[p] if p < F.length else []
            want = F.dims[p - 1] - (F.dims[p] if p < F.length else 0)
            if la.span_dim_sum(Vp, m, n) != F.dims[p - 1]:
                raise DegreeError(f"layer m_{p} is not contained in V_{p}")
            if la.rank(m, n) != want or (Vnext and la.intersection_dim(m, Vnext, n) != 0):
                raise DegreeError(f"V_{p} is not m_{p} ⊕ V_{p + 1}")
            if len(m) != want:
                m = la.row_basis(m, n)
            basis.extend(m)
            degrees.extend([p] * want)
        self.layers = layers
        self.basis = basis
        self.degrees = degrees
        self.exact = F.exact and la.is_exact(basis)
        if self.exact:
            self.basis_matrix = la.to_exact(basis)
            self._inv = la.inverse_exact(self.basis_matrix)
        else:
            self.basis_matrix = la.to_float(basis)
            self._inv = np.linalg.inv(self.basis_matrix)

    @property
    def dim(self) -> int:
        return self.space.dim

    @property
    def depth(self) -> int:
        return self.space.length

    def coords(self, v) -> list:
        ex = la.to_exact([v]) if self.exact else None
        if ex is not None:
            row = ex[0]
            n = self.dim
            return [sum(row[j] * self._inv[j][k] for j in range(n)) for k in range(n)]
        return list(la.to_float([v])[0] @ np.asarray(self._inv, dtype=float))

    def from_coords(self, c) -> list:
        n = self.dim
        if self.exact and la.is_exact([c]):
            return [sum(Fraction(c[k]) * self.basis_matrix[k][j] for k in range(n)) for j in range(n)]
        return list(np.asarray(c, dtype=float) @ np.asarray(self.basis_matrix, dtype=float))

    def dilate(self, v, t):
        c = self.coords(v)
        return self.from_coords([ck * t**d for ck, d in zip(c, self.degrees)])

    def layer_component(self, v, p: int):
        c = self.coords(v)
        return self.from_coords([ck if d == p else 0 * ck for ck, d in zip(c, self.degrees)])

    def vector_degree(self, v) -> int:
        c = self.coords(v)
        ex = la.to_exact([c])
        if ex is not None:
            nz = [d for x, d in zip(ex[0], self.degrees) if x != 0]
        else:
            scale = max(1.0, max(abs(float(x)) for x in c))
            nz = [d for x, d in zip(c, self.degrees) if abs(float(x)) > la.TOL * scale]
        if not nz:
            raise DegreeError("degree of the zero vector is undefined")
        return min(nz)

    def leading_part(self, v):
        return self.layer_component(v, self.vector_degree(v))


def adapted_basis_of(W: Sequence[Sequence], D: DilationGroup) -> tuple[list, list[int]]:
    """Basis (f_k) of W adapted to the induced filtration W ∩ V_i.

    Row-reduces the layered coordinates with columns ordered by ascending
    degree, so each row's pivot column carries the row's degree.
    """
    W = _rows(W)
    C = [D.coords(w) for w in W]
    order = sorted(range(D.dim), key=lambda j: (D.degrees[j], j))
    ex = la.to_exact(C)
    if ex is not None:
        R, piv = la.rref_exact(ex, col_order=order)
    else:
        R, piv = la.rref_float(np.array(C, dtype=float), col_order=order)
        R = [list(r) for r in R]
    if not R:
        raise DegreeError("limit of the zero subspace is undefined")
    degs = [D.degrees[p] for p in piv]
    return [D.from_coords(r) for r in R], degs


def limit_subspace(W: Sequence[Sequence], D: DilationGroup) -> list[list]:
    """m_∞: span of the leading homogeneous parts of an adapted basis of W."""
    F, degs = adapted_basis_of(W, D)
    lead = [D.layer_component(f, d) for f, d in zip(F, degs)]
    if la.rank(lead, D.dim) != len(F):
        raise AssertionError("leading parts are dependent; adapted basis is broken")
    return lead


def _gram_det(rows, gram):
    ex_r, ex_g = la.to_exact(rows), la.to_exact(gram)
    if ex_r is not None and ex_g is not None:
        k, n = len(ex_r), len(ex_r[0])
        M = [
            [
                sum(ex_r[a][i] * ex_g[i][j] * ex_r[b][j] for i in range(n) for j in range(n) if ex_g[i][j])
                for b in range(k)
            ]
            for a in range(k)
        ]
        return la.det_exact(M)
    A = la.to_float(rows)
    G = la.to_float(gram)
    return float(np.linalg.det(A @ G @ A.T))


def c_M_constant(W: Sequence[Sequence], D: DilationGroup, gram=None) -> float:
    """‖f_1 ∧ ... ∧ f_d‖ / ‖ξ‖ with ξ the wedge of leading homogeneous parts.

    ``gram`` is the inner product on ambient coordinates (identity by default).
    """
    n = D.dim
    if gram is None:
        gram = [[int(i == j) for j in range(n)] for i in range(n)]
    F, degs = adapted_basis_of(W, D)
    lead = [D.layer_component(f, d) for f, d in zip(F, degs)]
    num = _gram_det(F, gram)
    den = _gram_det(lead, gram)
    if isinstance(num, Fraction) and isinstance(den, Fraction):
        return math.sqrt(num / den)
    return math.sqrt(float(num) / float(den))


def is_delta_invariant(W: Sequence[Sequence], D: DilationGroup) -> bool:
    """W is closed under every δ_t iff it is the sum of its layer slices."""
    W = _rows(W)
    k = la.rank(W, D.dim)
    comps = [D.layer_component(w, p) for w in W for p in range(1, D.depth + 1)]
    return la.span_dim_sum(W, comps, D.dim) == k


@dataclass(frozen=True)
class WedgeLimit:
    """Record of t^{-d} δ_t(ξ) evaluated on a schedule of t → 0."""

    degree: int
    ts: tuple
    norms: tuple = field(default=())


def dilated_wedge_norms(vectors, D: DilationGroup, d: int, ts=(1e-2, 1e-4, 1e-6)) -> WedgeLimit:
    """‖t^{-d} δ_t(f_1 ∧ ... ∧ f_k)‖ for each t.

    The norm is the Plücker norm in the layered basis; minors are taken once
    and scaled by t^{deg(e_I)}, which avoids cancellation at tiny t.
    """
    vectors = _rows(vectors)
    k = len(vectors)
    C = np.array([[float(x) for x in D.coords(v)] for v in vectors])
    minors, weights = [], []
    for I in itertools.combinations(range(D.dim), k):
        minors.append(np.linalg.det(C[:, I]))
        weights.append(sum(D.degrees[j] for j in I))
    minors = np.array(minors)
    weights = np.array(weights, dtype=float)
    out = []
    for t in ts:
        scaled = minors * np.power(t, weights - d)
        out.append(float(np.sqrt(np.sum(scaled**2))))
    return WedgeLimit(d, tuple(ts), tuple(out))
