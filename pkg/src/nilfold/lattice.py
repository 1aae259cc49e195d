"""Exact breadth-first enumeration of word balls S^n and quasi-norm balls Γ ∩ D_t.

Elements are stored as integer rows.  Coordinate i of an element is the ring
element sum_m row[i*R + m] / D_i * basis_m, where R is the ring rank and D_i a
per-coordinate denominator that grows (with a rescale of everything stored)
whenever a product needs a finer grid.  Rows are deduplicated through
mixed-radix integer keys built from the exact numerators, so no floating value
ever decides whether two elements coincide.

Right multiplication by a generator s is a polynomial map
(γ s)_i = γ_i + s_i + P_i(γ, s) with P_i(·, s) precompiled per generator.
Because S is symmetric the Cayley graph is undirected, so the next sphere only
has to be checked against the current and previous spheres.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .nilgroup import BCHProduct
from .ring import RATIONALS, ExactScalar, RingSpec

INT_LIMIT = 1 << 62
PURE_PYTHON_WORK = 4096


class LatticeError(ValueError):
    pass


class PruningSlackError(LatticeError):
    """Pruned BFS missed elements found by the unpruned cross-check."""


class TruncatedBallError(LatticeError):
    pass


def _lcm(*xs: int) -> int:
    return math.lcm(*xs) if xs else 1


# -- generating sets ------------------------------------------------------------------
def as_exact_element(g: Sequence, spec: RingSpec) -> tuple:
    out = []
    for c in g:
        if isinstance(c, float):
            raise LatticeError("floating coordinates are refused for exact enumeration")
        out.append(spec.scalar(c))
    return tuple(out)


@dataclass
class GeneratingSet:
    """S = {1, a_1, ..., a_s, a_1^{-1}, ..., a_s^{-1}} with exact coordinates."""

    elements: list
    spec: RingSpec = RATIONALS

    def __post_init__(self):
        self.elements = [as_exact_element(g, self.spec) for g in self.elements]
        keys = {self._key(g) for g in self.elements}
        n = self.dim
        zero = tuple(self.spec.zero() for _ in range(n))
        if self._key(zero) not in keys:
            raise LatticeError("generating set must contain the identity")
        for g in self.elements:
            if self._key(tuple(-c for c in g)) not in keys:
                raise LatticeError(f"generating set is not symmetric: missing inverse of {g}")

    @staticmethod
    def _key(g) -> tuple:
        return tuple(c.hash_key() for c in g)

    @classmethod
    def symmetric(cls, generators: Sequence[Sequence], spec: RingSpec = RATIONALS) -> "GeneratingSet":
        """{1} ∪ generators ∪ inverses, deduplicated, in a fixed order."""
        gens = [as_exact_element(g, spec) for g in generators]
        if not gens:
            raise LatticeError("need at least one generator")
        n = len(gens[0])
        out, seen = [], set()
        for g in [tuple(spec.zero() for _ in range(n))] + gens + [tuple(-c for c in g) for g in gens]:
            k = cls._key(g)
            if k not in seen:
                seen.add(k)
                out.append(g)
        return cls(out, spec)

    @property
    def dim(self) -> int:
        return len(self.elements[0])

    def __len__(self):
        return len(self.elements)


# -- integer codec ----------------------------------------------------------------------
class Codec:
    """Integer rows <-> exact elements for per-coordinate denominators D."""

    def __init__(self, n: int, spec: RingSpec, D: Sequence[int] | None = None):
        self.n = n
        self.spec = spec
        self.R = spec.rank
        self.D = list(D) if D is not None else [1] * n

    @property
    def width(self) -> int:
        return self.n * self.R

    def required(self, g) -> list[int]:
        return [_lcm(*(c.denominator for c in x.coeffs)) for x in g]

    def encode(self, g) -> tuple[int, ...]:
        row = []
        for i, x in enumerate(g):
            for c in x.coeffs:
                v = c * self.D[i]
                if v.denominator != 1:
                    raise LatticeError("denominator grid too coarse for element")
                row.append(int(v))
        return tuple(row)

    def decode(self, row) -> tuple:
        R = self.R
        out = []
        for i in range(self.n):
            coeffs = [Fraction(int(row[i * R + m]), self.D[i]) for m in range(R)]
            out.append(ExactScalar(self.spec, coeffs))
        return tuple(out)

    def floats(self, rows: np.ndarray) -> np.ndarray:
        rows = np.asarray(rows)
        R = self.R
        out = np.zeros((rows.shape[0], self.n))
        approx = self.spec.floats
        for i in range(self.n):
            acc = np.zeros(rows.shape[0])
            for m in range(R):
                col = rows[:, i * R + m]
                if col.dtype == object:
                    col = np.array([float(Fraction(int(v), self.D[i])) for v in col])
                    acc += col * approx[m]
                else:
                    acc += (col / self.D[i]) * approx[m]
            out[:, i] = acc
        return out


# -- compiled right multiplication ---------------------------------------------------------
@dataclass
class _Term:
    coef: list  # integer ring vector
    den: int
    exps: tuple  # exponent per coordinate


class RightProgram:
    """γ ↦ γ·s on integer rows."""

    def __init__(self, P: BCHProduct, s: tuple, spec: RingSpec):
        self.spec = spec
        self.n = P.dim
        self.s = s
        self.terms = []
        for poly in P.right_program(s):
            lst = []
            for c, e in poly:
                c = spec.scalar(c)
                den = _lcm(*(q.denominator for q in c.coeffs))
                lst.append(_Term([int(q * den) for q in c.coeffs], den, tuple(e)))
            self.terms.append(lst)
        self.linear = not any(self.terms)
        self.s_num = [[int(q * _lcm(*(x.denominator for x in c.coeffs))) for q in c.coeffs] for c in s]
        self.s_den = [_lcm(*(x.denominator for x in c.coeffs)) for c in s]


class NeedRescale(Exception):
    def __init__(self, coord: int, new_den: int):
        super().__init__(coord, new_den)
        self.coord = coord
        self.new_den = new_den


def _ring_mul(U, du, V, dv, spec: RingSpec):
    Dt, T = spec.common_table
    R = len(U)
    if R == 1:
        return [U[0] * V[0] * T[0][0][0]], du * dv * Dt
    out = [0] * R
    for p in range(R):
        for q in range(R):
            tv = T[p][q]
            prod = None
            for m in range(R):
                if tv[m]:
                    if prod is None:
                        prod = U[p] * V[q]
                    out[m] = out[m] + tv[m] * prod
    return out, du * dv * Dt


def _maxabs(col) -> int:
    if isinstance(col, np.ndarray):
        if col.size == 0:
            return 0
        return int(max(abs(int(col.max())), abs(int(col.min()))))
    return abs(int(col))


def _divisible(x, L: int) -> bool:
    if isinstance(x, np.ndarray):
        return bool(np.all(x % L == 0))
    return x % L == 0


def _gcd_all(x) -> int:
    if isinstance(x, np.ndarray):
        if x.dtype == object:
            g = 0
            for v in x:
                g = math.gcd(g, int(v))
            return g
        return int(np.gcd.reduce(np.abs(x))) if x.size else 0
    return abs(int(x))


def apply_program(prog: RightProgram, cols: list, D: list[int]) -> list:
    """Right multiply; ``cols[i][m]`` are numerator columns (arrays or ints)."""
    n, spec = prog.n, prog.spec
    R = spec.rank
    out = []
    for i in range(n):
        if prog.linear or not prog.terms[i]:
            if D[i] % prog.s_den[i]:
                raise NeedRescale(i, _lcm(D[i], prog.s_den[i]))
            f = D[i] // prog.s_den[i]
            out.append([cols[i][m] + prog.s_num[i][m] * f for m in range(R)])
            continue
        parts = [(cols[i], D[i]), (prog.s_num[i], prog.s_den[i])]
        for t in prog.terms[i]:
            val, den = list(t.coef), t.den
            for j, e in enumerate(t.exps):
                for _ in range(e):
                    val, den = _ring_mul(val, den, cols[j], D[j], spec)
            parts.append((val, den))
        L = _lcm(*(d for _, d in parts))
        total = [0] * R
        for val, den in parts:
            f = L // den
            for m in range(R):
                total[m] = total[m] + val[m] * f
        if D[i] % L == 0:
            f = D[i] // L
            out.append([x * f for x in total])
            continue
        g = 0
        for x in total:
            g = math.gcd(g, _gcd_all(x))
        need = L // math.gcd(L, g) if g else 1
        if D[i] % need:
            raise NeedRescale(i, _lcm(D[i], need))
        out.append([(x * D[i]) // L for x in total])
    return out


def _program_bound(prog: RightProgram, B: list[int], D: list[int]) -> int:
    """Crude bound on intermediate magnitudes for int64 safety."""
    spec = prog.spec
    Dt, T = spec.common_table
    R = spec.rank
    tmax = max((abs(x) for row in T for vec in row for x in vec), default=1)
    worst = max(B + [1])
    for i in range(prog.n):
        parts = [(B[i], D[i]), (max(map(abs, prog.s_num[i])), prog.s_den[i])]
        for t in prog.terms[i]:
            v, den = max(map(abs, t.coef)), t.den
            for j, e in enumerate(t.exps):
                for _ in range(e):
                    v, den = v * B[j] * tmax * R * R, den * D[j] * Dt
            parts.append((v, den))
        L = _lcm(*(d for _, d in parts))
        tot = sum(v * (L // d) for v, d in parts)
        worst = max(worst, tot * max(D[i], 1), *(v for v, _ in parts))
    return worst


# -- the ball --------------------------------------------------------------------------------
@dataclass
class LatticeBall:
    """Spheres of a breadth-first search from the identity.

    ``spheres[k]`` holds the integer rows at BFS depth k, sorted by their
    exact numerators.  ``counts[k]`` survives even when storage is truncated.
    """

    codec: Codec
    gens: GeneratingSet
    product: BCHProduct
    spheres: list = field(default_factory=list)
    counts: list = field(default_factory=list)
    truncated: bool = False
    kind: str = "word"
    radius: float = 0
    prune_radius: float | None = None

    @classmethod
    def identity(cls, gens: GeneratingSet, product: BCHProduct) -> "LatticeBall":
        if product.dim != gens.dim:
            raise LatticeError("generators do not live in the algebra's dimension")
        codec = Codec(gens.dim, gens.spec)
        for g in gens.elements:
            need = codec.required(g)
            codec.D = [_lcm(a, b) for a, b in zip(codec.D, need)]
        zero = np.zeros((1, codec.width), dtype=np.int64)
        return cls(codec, gens, product, [zero], [1])

    @property
    def depth(self) -> int:
        return len(self.counts) - 1

    def __len__(self) -> int:
        return sum(self.counts)

    @property
    def size(self) -> int:
        return len(self)

    def rows(self, upto: int | None = None) -> np.ndarray:
        if self.truncated:
            raise TruncatedBallError("ball storage was truncated")
        sph = self.spheres if upto is None else self.spheres[: upto + 1]
        dtype = object if any(s.dtype == object for s in sph) else np.int64
        return np.concatenate([s.astype(dtype) for s in sph]) if sph else np.zeros((0, self.codec.width), dtype)

    def floats(self, upto: int | None = None) -> np.ndarray:
        return self.codec.floats(self.rows(upto))

    def elements(self, upto: int | None = None) -> list[tuple]:
        return [self.codec.decode(r) for r in self.rows(upto)]

    def element_keys(self, upto: int | None = None) -> set:
        """Exact keys (tuples of ExactScalar hash keys)."""
        return {tuple(c.hash_key() for c in g) for g in self.elements(upto)}

    def contains(self, g) -> bool:
        g = as_exact_element(g, self.codec.spec)
        try:
            row = self.codec.encode(g)
        except LatticeError:
            return False
        for s in self.spheres:
            if len(s) and np.any(np.all(s == np.array(row, dtype=s.dtype), axis=1)):
                return True
        return False

    def _rescale(self, coord: int, new_den: int):
        f = new_den // self.codec.D[coord]
        R = self.codec.R
        for k, s in enumerate(self.spheres):
            s = s.copy()
            cols = slice(coord * R, (coord + 1) * R)
            if s.dtype != object and len(s) and _maxabs(s[:, cols]) * f >= INT_LIMIT:
                s = s.astype(object)
            s[:, cols] = s[:, cols] * f
            self.spheres[k] = s
        self.codec.D[coord] = new_den


# -- keys ---------------------------------------------------------------------------------------
def _packed_keys(arrays: list[np.ndarray]) -> list[np.ndarray]:
    """Mixed-radix keys with column 0 most significant, consistent across arrays."""
    nonempty = [a for a in arrays if len(a)]
    width = nonempty[0].shape[1] if nonempty else 0
    if not nonempty:
        return [np.zeros(0, dtype=np.int64) for _ in arrays]
    lo = [min(int(a[:, c].min()) for a in nonempty) for c in range(width)]
    hi = [max(int(a[:, c].max()) for a in nonempty) for c in range(width)]
    radix = [h - l + 1 for l, h in zip(lo, hi)]
    total = math.prod(radix)
    use_obj = total >= INT_LIMIT or any(a.dtype == object for a in nonempty)
    strides = [0] * width
    acc = 1
    for c in range(width - 1, -1, -1):
        strides[c] = acc
        acc *= radix[c]
    out = []
    for a in arrays:
        if not len(a):
            out.append(np.zeros(0, dtype=object if use_obj else np.int64))
            continue
        if use_obj:
            A = a.astype(object)
            k = np.zeros(len(a), dtype=object)
            for c in range(width):
                k = k + (A[:, c] - lo[c]) * strides[c]
        else:
            k = np.zeros(len(a), dtype=np.int64)
            for c in range(width):
                k += (a[:, c].astype(np.int64) - lo[c]) * strides[c]
        out.append(k)
    return out


# -- BFS ------------------------------------------------------------------------------------------
Prune = Callable[[np.ndarray], np.ndarray]


def _level_numpy(ball: LatticeBall, progs, prune: Prune | None, force_object: bool):
    cur = ball.spheres[-1]
    prev = ball.spheres[-2] if len(ball.spheres) > 1 else cur[:0]
    codec = ball.codec
    R, n = codec.R, codec.n
    B = [max((_maxabs(cur[:, i * R + m]) for m in range(R)), default=0) for i in range(n)]
    obj = force_object or cur.dtype == object or any(_program_bound(p, B, codec.D) >= INT_LIMIT for p in progs)
    A = cur.astype(object) if obj else cur
    cols = [[A[:, i * R + m] for m in range(R)] for i in range(n)]
    cands = []
    for p in progs:
        out = apply_program(p, cols, codec.D)
        cands.append(np.column_stack([c for coord in out for c in coord]))
    C = np.concatenate(cands)
    if not obj and C.dtype != np.int64:
        C = C.astype(np.int64)
    if prune is not None and len(C):
        C = C[prune(codec.floats(C))]
    kc, k0, k1 = _packed_keys([C, cur, prev])
    uk, idx = np.unique(kc, return_index=True)
    keep = ~np.isin(uk, k0) & ~np.isin(uk, k1)
    return C[idx[keep]]


def _level_python(ball: LatticeBall, progs, prune: Prune | None):
    cur = ball.spheres[-1]
    prev = ball.spheres[-2] if len(ball.spheres) > 1 else cur[:0]
    codec = ball.codec
    R, n = codec.R, codec.n
    seen = set(map(tuple, cur.tolist())) | set(map(tuple, prev.tolist()))
    new = set()
    rows = cur.tolist()
    for p in progs:
        if p.linear:
            for i in range(n):
                if codec.D[i] % p.s_den[i]:
                    raise NeedRescale(i, _lcm(codec.D[i], p.s_den[i]))
            shift = [p.s_num[i][m] * (codec.D[i] // p.s_den[i]) for i in range(n) for m in range(R)]
            for r in rows:
                new.add(tuple(a + b for a, b in zip(r, shift)))
        else:
            for r in rows:
                cols = [[r[i * R + m] for m in range(R)] for i in range(n)]
                out = apply_program(p, cols, codec.D)
                new.add(tuple(int(x) for coord in out for x in coord))
    new -= seen
    if not new:
        return np.zeros((0, codec.width), dtype=cur.dtype)
    out = sorted(new)
    big = any(abs(x) >= INT_LIMIT for r in out for x in r)
    arr = np.array(out, dtype=object if (big or cur.dtype == object) else np.int64)
    if prune is not None:
        arr = arr[prune(codec.floats(arr))]
    return arr


def expand_ball(ball: LatticeBall, gens: GeneratingSet | None = None, steps: int = 1,
                mem_budget_mb: float | None = None, prune: Prune | None = None,
                force_object: bool = False) -> LatticeBall:
    """Extend ``ball`` in place by ``steps`` BFS levels and return it.

    Stops early when the frontier dies out (pruned balls) or when storing the
    next sphere would exceed ``mem_budget_mb``; the latter sets ``truncated``.
    """
    gens = gens or ball.gens
    if gens is not ball.gens and gens.elements != ball.gens.elements:
        raise LatticeError("ball was started with a different generating set")
    progs = [RightProgram(ball.product, s, gens.spec) for s in gens.elements if any(not c.is_zero for c in s)]
    budget = None if mem_budget_mb is None else mem_budget_mb * 2**20
    stored = sum(s.nbytes for s in ball.spheres)
    for _ in range(steps):
        if ball.truncated or (ball.counts and ball.counts[-1] == 0):
            break
        while True:
            try:
                work = len(ball.spheres[-1]) * len(progs)
                if work < PURE_PYTHON_WORK and not force_object:
                    nxt = _level_python(ball, progs, prune)
                else:
                    nxt = _level_numpy(ball, progs, prune, force_object)
                break
            except NeedRescale as r:
                ball._rescale(r.coord, r.new_den)
        if budget is not None:
            if stored + nxt.nbytes > budget:
                ball.counts.append(len(nxt))
                ball.truncated = True
                break
        ball.spheres.append(nxt)
        ball.counts.append(len(nxt))
        stored += nxt.nbytes
        ball.radius = ball.depth
        if len(nxt) == 0:
            break
    return ball


def word_ball(gens: GeneratingSet, product: BCHProduct, n: int, **kw) -> LatticeBall:
    """S^n by BFS from the identity."""
    return expand_ball(LatticeBall.identity(gens, product), gens, n, **kw)


# -- quasi-norm balls -------------------------------------------------------------------------------
def filter_by_norm(ball: LatticeBall, Q, t: float, rows: np.ndarray | None = None) -> np.ndarray:
    """Boolean mask of rows with |γ| <= t; near-ties are settled exactly."""
    rows = ball.rows() if rows is None else rows
    X = ball.codec.floats(rows)
    v = Q.batch(X)
    inside = v <= t
    near = np.flatnonzero(np.abs(v - t) <= 1e-9 * max(1.0, t))
    tq = Fraction(t)  # a float radius is an exact dyadic rational; rounding it would move the boundary
    for j in near:
        g = ball.codec.decode(rows[j])
        try:
            inside[j] = Q.power_exact(g) <= tq ** (2 * Q.L)
        except Exception:
            pass
    return inside


def quasinorm_ball_points(gens: GeneratingSet, product: BCHProduct, Q, t: float,
                          beta: float | None = None, alpha: float | None = None,
                          cross_check: bool = False, check_margin: int = 2,
                          mem_budget_mb: float | None = None) -> LatticeBall:
    """Γ ∩ D_t by BFS pruned at |γ| > βt (β defaults to 2α).

    With ``cross_check`` the result is compared against the unpruned word ball
    of radius (pruned depth + check_margin); any element missed by the pruned
    search raises :class:`PruningSlackError`.
    """
    if beta is None:
        if alpha is None:
            from .quasinorm import QuasiNormBalls, doubling_constant

            alpha = doubling_constant(QuasiNormBalls(Q), product, max(t, 1.0))
        beta = 2.0 * alpha
    cut = beta * t * (1 + 1e-9)
    ball = LatticeBall.identity(gens, product)
    expand_ball(ball, gens, 10**9, mem_budget_mb=mem_budget_mb, prune=lambda X: Q.batch(X) <= cut)
    ball.kind = "quasinorm"
    mask = filter_by_norm(ball, Q, t)
    # keep BFS spheres but restricted to D_t
    start = 0
    spheres = []
    for s in ball.spheres:
        spheres.append(s[mask[start : start + len(s)]])
        start += len(s)
    depth = ball.depth
    out = LatticeBall(ball.codec, gens, product, spheres, [len(s) for s in spheres],
                      ball.truncated, "quasinorm", t, cut)
    if cross_check:
        ref = word_ball(gens, product, depth + check_margin)
        refmask = filter_by_norm(ref, Q, t)
        ref_keys = {tuple(c.hash_key() for c in ref.codec.decode(r)) for r in ref.rows()[refmask]}
        got = out.element_keys()
        missing = ref_keys - got
        if missing:
            raise PruningSlackError(
                f"pruned search at beta={beta:.3g} missed {len(missing)} elements of D_{t}; increase beta"
            )
    return out


# -- dump / load ----------------------------------------------------------------------------------------
def dump_ball(ball: LatticeBall, path) -> None:
    """Columnar text: '#' header, then one element per line, coordinates
    separated by ';' and ring coefficients by ','."""
    spec = ball.codec.spec
    with open(path, "w") as fh:
        fh.write(f"# nilfold ball kind={ball.kind} radius={ball.radius} depth={ball.depth}\n")
        fh.write(f"# ring {' '.join(spec.names)}\n")
        fh.write(f"# dim {ball.codec.n}\n")
        for g in ball.gens.elements:
            fh.write("# generator " + ";".join(c.to_text() for c in g) + "\n")
        fh.write("# counts " + " ".join(map(str, ball.counts)) + "\n")
        for g in ball.elements():
            fh.write(";".join(c.to_text() for c in g) + "\n")


def load_ball(path, spec: RingSpec = RATIONALS) -> tuple[dict, list[tuple]]:
    header: dict = {"generators": []}
    elements = []
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                parts = line[1:].split(None, 1)
                if not parts:
                    continue
                if parts[0] == "generator":
                    header["generators"].append(parts[1])
                else:
                    header[parts[0]] = parts[1] if len(parts) > 1 else ""
                continue
            coords = []
            for c in line.split(";"):
                coeffs = [Fraction(x) for x in c.split(",")]
                coords.append(ExactScalar(spec, coeffs))
            elements.append(tuple(coords))
    return header, elements
