"""Nilpotent Lie algebras by structure constants and their BCH group law.

Group elements are coordinate tuples in exponential coordinates of the first
kind.  A tuple is *exact* when its entries are ints, Fractions or
ExactScalars, and *real* when they are floats.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from . import linalg as la
from .bch import bch_polynomials
from .filtration import DilationGroup, FilteredSpace, degree_of_vector
from .ring import ExactScalar, RingError

MAX_CLASS = 6


class AlgebraError(ValueError):
    pass


class ModeError(TypeError):
    """Exact and floating coordinates mixed in one operation."""


def _frac(c) -> Fraction:
    if isinstance(c, float):
        raise AlgebraError("structure constants must be rational")
    return Fraction(c)


class NilpotentAlgebra:
    """Lie algebra with basis e_1..e_n and [e_i, e_j] = Σ_k c_ij^k e_k.

    ``brackets`` holds quadruples (i, j, k, c) with 1-based indices; the
    antisymmetric partner (j, i, k, -c) is implied.  ``layers`` optionally
    fixes the complements m_p (rows in basis coordinates).
    """

    def __init__(self, dim: int, brackets: Iterable = (), layers=None, name: str = ""):
        self.dim = dim
        self.name = name
        struct: list[dict] = [dict() for _ in range(dim)]
        for quad in brackets:
            if len(quad) != 4:
                raise AlgebraError(f"bracket entry must be (i, j, k, c), got {quad!r}")
            i, j, k, c = quad
            i, j, k = int(i) - 1, int(j) - 1, int(k) - 1
            if not (0 <= i < dim and 0 <= j < dim and 0 <= k < dim):
                raise AlgebraError(f"index out of range in {quad!r}")
            c = _frac(c)
            if c == 0:
                continue
            if i == j:
                raise AlgebraError(f"[e_{i + 1}, e_{i + 1}] must vanish")
            for a, b, s in ((i, j, c), (j, i, -c)):
                cur = struct[a].setdefault(b, {})
                if k in cur and cur[k] != s:
                    raise AlgebraError(
                        f"inconsistent constants for [e_{a + 1}, e_{b + 1}] along e_{k + 1}"
                    )
                cur[k] = s
        self.struct = struct
        self._check_jacobi()
        self.series = self._central_series()
        self.nil_class = len(self.series)
        self.filtered = FilteredSpace(dim, self.series)
        self.dilations = DilationGroup(self.filtered, layers)
        self._layers_arg = layers

    # -- basic structure ------------------------------------------------------
    @classmethod
    def abelian(cls, dim: int) -> "NilpotentAlgebra":
        return cls(dim, (), name=f"R^{dim}")

    @classmethod
    def heisenberg(cls) -> "NilpotentAlgebra":
        return cls(3, [(1, 2, 3, 1)], name="heisenberg")

    @property
    def quadruples(self) -> list[tuple[int, int, int, Fraction]]:
        out = []
        for i in range(self.dim):
            for j, consts in self.struct[i].items():
                if i < j:
                    out.extend((i + 1, j + 1, k + 1, c) for k, c in sorted(consts.items()))
        return sorted(out)

    def bracket(self, u: Sequence, v: Sequence) -> list:
        out = [0 * u[0] * v[0] if self.dim else 0 for _ in range(self.dim)]
        for i in range(self.dim):
            if not u[i]:
                continue
            for j, consts in self.struct[i].items():
                if not v[j]:
                    continue
                uv = u[i] * v[j]
                for k, c in consts.items():
                    out[k] = out[k] + uv * c
        return out

    def basis_vector(self, k: int) -> list[Fraction]:
        return [Fraction(int(i == k)) for i in range(self.dim)]

    def _check_jacobi(self):
        E = [self.basis_vector(k) for k in range(self.dim)]
        for a, b, c in itertools.combinations(range(self.dim), 3):
            x, y, z = E[a], E[b], E[c]
            terms = [
                self.bracket(x, self.bracket(y, z)),
                self.bracket(y, self.bracket(z, x)),
                self.bracket(z, self.bracket(x, y)),
            ]
            s = [sum(t[k] for t in terms) for k in range(self.dim)]
            if any(s):
                raise AlgebraError(
                    f"Jacobi identity fails on (e_{a + 1}, e_{b + 1}, e_{c + 1})"
                )

    def _central_series(self) -> list[list[list[Fraction]]]:
        n = self.dim
        current = [self.basis_vector(k) for k in range(n)]
        series = [current]
        while True:
            gens = [self.bracket(self.basis_vector(i), v) for i in range(n) for v in current]
            nxt = la.row_basis([g for g in gens if any(g)], n)
            if not nxt:
                break
            if len(nxt) == len(la.row_basis(current, n)):
                raise AlgebraError("algebra is not nilpotent")
            series.append(nxt)
            current = nxt
            if len(series) > n:
                raise AlgebraError("algebra is not nilpotent")
        return series

    @cached_property
    def series_dims(self) -> list[int]:
        return [la.rank(C, self.dim) for C in self.series]

    def homogeneous_dimension(self) -> int:
        """d(N) = Σ_p dim C^p."""
        return sum(self.series_dims)

    @cached_property
    def coordinate_degrees(self) -> list[int]:
        return [degree_of_vector(self.basis_vector(k), self.filtered) for k in range(self.dim)]

    @cached_property
    def is_adapted(self) -> bool:
        """C^i = span{e_k : deg(e_k) >= i} for every i."""
        degs = self.coordinate_degrees
        return all(
            sum(1 for d in degs if d >= i) == dim_i
            for i, dim_i in enumerate(self.series_dims, start=1)
        )

    @cached_property
    def is_layered(self) -> bool:
        """The layered basis of the dilation group is the coordinate basis."""
        B = self.dilations.basis_matrix
        return self.dilations.exact and all(
            B[a][b] == int(a == b) for a in range(self.dim) for b in range(self.dim)
        )

    @property
    def layer_degrees(self) -> list[int]:
        return list(self.dilations.degrees)

    def layer_sizes(self) -> list[int]:
        degs = self.layer_degrees
        return [degs.count(p) for p in range(1, self.nil_class + 1)]

    # -- change of basis ------------------------------------------------------
    def adapted(self) -> "NilpotentAlgebra":
        """Same algebra written in its layered basis (so layers are coordinate
        blocks and δ_t is diagonal)."""
        D = self.dilations
        if not D.exact:
            raise AlgebraError("layered basis is not rational; cannot rewrite exactly")
        B = D.basis_matrix
        quads = []
        for a in range(self.dim):
            for b in range(a + 1, self.dim):
                w = D.coords(self.bracket(B[a], B[b]))
                quads.extend((a + 1, b + 1, k + 1, c) for k, c in enumerate(w) if c)
        return NilpotentAlgebra(self.dim, quads, name=self.name)

    def with_layers(self, layers) -> "NilpotentAlgebra":
        return NilpotentAlgebra(self.dim, self.quadruples, layers=layers, name=self.name)

    # -- gradation ------------------------------------------------------------
    def gradation_defect(self) -> float:
        """max over layered basis pairs of |component of [u, v] outside m_{p+q}|."""
        D = self.dilations
        worst = 0.0
        for a in range(self.dim):
            for b in range(a + 1, self.dim):
                w = D.coords(self.bracket(D.basis[a], D.basis[b]))
                target = D.degrees[a] + D.degrees[b]
                off = [float(x) for x, d in zip(w, D.degrees) if d != target]
                worst = max(worst, math.sqrt(sum(x * x for x in off)))
        return worst

    def graded_limit(self) -> "NilpotentAlgebra":
        """n_0 in the layered basis: [x, y]_0 = π_{p+q}[x, y]."""
        D = self.dilations
        if not D.exact:
            raise AlgebraError("graded limit needs rational layers")
        quads = []
        for a in range(self.dim):
            for b in range(a + 1, self.dim):
                w = D.coords(self.bracket(D.basis[a], D.basis[b]))
                target = D.degrees[a] + D.degrees[b]
                quads.extend(
                    (a + 1, b + 1, k + 1, c)
                    for k, (c, d) in enumerate(zip(w, D.degrees))
                    if c and d == target
                )
        return NilpotentAlgebra(self.dim, quads, name=f"gr({self.name})")

    def deformed_bracket(self, x, y, t):
        """δ_t[δ_{1/t} x, δ_{1/t} y] in layered coordinates."""
        D = self.dilations
        inv = 1 / t if not isinstance(t, (int, Fraction)) else Fraction(1) / t
        xs = D.from_coords([c * inv**d for c, d in zip(x, D.degrees)])
        ys = D.from_coords([c * inv**d for c, d in zip(y, D.degrees)])
        br = D.coords(self.bracket(xs, ys))
        return [c * t**d for c, d in zip(br, D.degrees)]

    def layer_bracket_closed(self, rows) -> bool:
        """Span of ``rows`` is closed under this algebra's bracket."""
        rows = [list(r) for r in rows]
        k = la.rank(rows, self.dim)
        brs = [self.bracket(u, v) for u in rows for v in rows]
        return la.span_dim_sum(rows, [b for b in brs if any(b)], self.dim) == k

    def __repr__(self):
        return f"NilpotentAlgebra({self.name or self.dim}, class={self.nil_class})"


# -- group law ------------------------------------------------------------------
def coordinate_mode(g: Sequence) -> str:
    modes = set()
    for c in g:
        if isinstance(c, (ExactScalar, Fraction)) or (isinstance(c, int) and not isinstance(c, bool)):
            modes.add("exact")
        elif isinstance(c, (float, np.floating)):
            modes.add("real")
        else:
            raise ModeError(f"unsupported coordinate type {type(c).__name__}")
    if len(modes) > 1:
        raise ModeError("element mixes exact and floating coordinates")
    return modes.pop() if modes else "exact"


@dataclass(frozen=True)
class Term:
    coef: Fraction
    xexp: tuple[int, ...]
    yexp: tuple[int, ...]


def _power(v, e: int):
    out = v
    for _ in range(e - 1):
        out = out * v
    return out


class BCHProduct:
    """(xy)_i = x_i + y_i + P_i(x, y) with P_i stored as sparse monomial maps."""

    def __init__(self, algebra: NilpotentAlgebra, check_degrees: bool = True):
        if algebra.nil_class > MAX_CLASS:
            raise AlgebraError(
                f"nilpotency class {algebra.nil_class} exceeds the supported cap {MAX_CLASS}"
            )
        self.algebra = algebra
        n = algebra.dim
        Z = bch_polynomials(algebra.struct, n, algebra.nil_class)
        polys = []
        for i in range(n):
            P = dict(Z[i])
            for lin in (i, n + i):
                e = tuple(int(k == lin) for k in range(2 * n))
                P[e] = P.get(e, 0) - 1
                if not P[e]:
                    del P[e]
            polys.append(P)
        self.polys = polys
        self.terms = [
            [Term(c, e[:n], e[n:]) for e, c in sorted(P.items())] for P in polys
        ]
        self.degree_checked = False
        if check_degrees and algebra.is_adapted:
            self._check_degree_bound()
            self.degree_checked = True

    @property
    def dim(self) -> int:
        return self.algebra.dim

    def _check_degree_bound(self):
        degs = self.algebra.coordinate_degrees
        for i, terms in enumerate(self.terms):
            for t in terms:
                da = sum(a * d for a, d in zip(t.xexp, degs))
                db = sum(b * d for b, d in zip(t.yexp, degs))
                if da < 1 or db < 1 or da + db > degs[i]:
                    raise AssertionError(
                        f"BCH monomial {t} in coordinate {i + 1} violates the degree bound"
                    )

    def max_monomial_degree(self) -> int:
        return max((sum(t.xexp) + sum(t.yexp) for ts in self.terms for t in ts), default=0)

    # -- exact / scalar mode ----------------------------------------------------
    def multiply(self, g: Sequence, h: Sequence) -> tuple:
        if len(g) != self.dim or len(h) != self.dim:
            raise AlgebraError("element dimension does not match the algebra")
        mg, mh = coordinate_mode(g), coordinate_mode(h)
        if mg != mh:
            raise ModeError(f"cannot multiply {mg} and {mh} elements")
        out = []
        for i in range(self.dim):
            acc = g[i] + h[i]
            for t in self.terms[i]:
                m = t.coef
                for v, e in zip(g, t.xexp):
                    if e:
                        m = m * _power(v, e) if mg == "exact" else m * v**e
                for v, e in zip(h, t.yexp):
                    if e:
                        m = m * _power(v, e) if mg == "exact" else m * v**e
                if mg == "real":
                    m = float(m)
                acc = acc + m
            out.append(acc)
        return tuple(out)

    def identity(self, like=None) -> tuple:
        if like is not None and coordinate_mode(like) == "real":
            return (0.0,) * self.dim
        return (Fraction(0),) * self.dim

    @staticmethod
    def inverse(g: Sequence) -> tuple:
        return tuple(-c for c in g)

    @staticmethod
    def power(g: Sequence, k: int) -> tuple:
        return tuple(k * c for c in g)

    def product(self, elements: Sequence[Sequence]) -> tuple:
        out = None
        for e in elements:
            out = tuple(e) if out is None else self.multiply(out, e)
        return out if out is not None else self.identity()

    # -- batch float mode -------------------------------------------------------
    def multiply_batch(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        X, Y = np.broadcast_arrays(X, Y)
        out = X + Y
        for i in range(self.dim):
            for t in self.terms[i]:
                m = np.full(out.shape[:-1], float(t.coef))
                for j, e in enumerate(t.xexp):
                    if e:
                        m = m * X[..., j] ** e
                for j, e in enumerate(t.yexp):
                    if e:
                        m = m * Y[..., j] ** e
                out[..., i] = out[..., i] + m
        return out

    # -- right multiplication by a fixed element ----------------------------------
    def right_program(self, s: Sequence) -> list[list[tuple[object, tuple[int, ...]]]]:
        """P_i(x, s) as polynomials in x with coefficients in the ring of s."""
        prog = []
        for i in range(self.dim):
            acc: dict = {}
            for t in self.terms[i]:
                c = t.coef
                for v, e in zip(s, t.yexp):
                    if e:
                        c = c * _power(v, e)
                if isinstance(c, ExactScalar) and c.is_zero:
                    continue
                if not isinstance(c, ExactScalar) and c == 0:
                    continue
                acc[t.xexp] = acc[t.xexp] + c if t.xexp in acc else c
            prog.append([(c, e) for e, c in sorted(acc.items()) if (c if not isinstance(c, ExactScalar) else not c.is_zero)])
        return prog


# -- second-kind coordinates -----------------------------------------------------
def second_kind_coordinates(g: Sequence, P: BCHProduct) -> tuple:
    """x' with g = exp(x'_1 e_1) ... exp(x'_n e_n), by successive division."""
    n = P.dim
    h = tuple(g)
    zero = 0 * h[0] if n else 0
    out = []
    for k in range(n):
        xk = h[k]
        out.append(xk)
        inv = tuple(-xk if j == k else zero for j in range(n))
        h = P.multiply(inv, h)
    if any(c != 0 for c in h):
        raise AlgebraError("second-kind decomposition failed; basis is not adapted")
    return tuple(out)


def from_second_kind(xs: Sequence, P: BCHProduct) -> tuple:
    n = P.dim
    zero = 0 * xs[0] if n else 0
    factors = [tuple(xs[k] if j == k else zero for j in range(n)) for k in range(n)]
    return P.product(factors)
