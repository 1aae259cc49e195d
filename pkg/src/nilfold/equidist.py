"""Counting estimators for equidistribution, ratio limits and rescaled measures."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, HalfspaceIntersection

from . import linalg as la
from .filtration import c_M_constant, degree_of_subspace, limit_subspace
from .lattice import LatticeBall, TruncatedBallError, expand_ball
from .nilgroup import NilpotentAlgebra
from .quasinorm import orthonormal_rows
from .ring import RATIONALS, ExactScalar, RingSpec

BOUNDARY_EPS = 1e-9


class EquidistError(ValueError):
    pass


class HomomorphismError(EquidistError):
    pass


# -- homomorphisms ----------------------------------------------------------------------
class Homomorphism:
    """Lie algebra epimorphism φ: n → g given by a dim g × dim n matrix.

    In exponential coordinates the induced group map is the same linear map.
    """

    def __init__(self, matrix: Sequence[Sequence], source: NilpotentAlgebra, target: NilpotentAlgebra,
                 spec: RingSpec = RATIONALS):
        self.spec = spec
        self.source = source
        self.target = target
        M = [[spec.scalar(x) for x in row] for row in matrix]
        if len(M) != target.dim or any(len(row) != source.dim for row in M):
            raise HomomorphismError(
                f"φ must be a {target.dim} x {source.dim} matrix, got "
                f"{len(M)} x {len(M[0]) if M else 0}"
            )
        self.matrix = M
        self._check_bracket()
        self.rank = la.rank([[x for x in row] for row in M], source.dim)
        if self.rank != target.dim:
            raise HomomorphismError(f"φ is not surjective: rank {self.rank} < dim g = {target.dim}")
        self.float_matrix = np.array([[x.evaluate() for x in row] for row in M])

    def column(self, j: int) -> list:
        return [row[j] for row in self.matrix]

    def apply(self, v: Sequence) -> list:
        return [sum((a * x for a, x in zip(row, v)), self.spec.zero()) for row in self.matrix]

    def _check_bracket(self):
        N, G = self.source, self.target
        zero = self.spec.zero()
        for i in range(N.dim):
            for j in range(i + 1, N.dim):
                lhs = self.apply(N.bracket(N.basis_vector(i), N.basis_vector(j)))
                ci, cj = self.column(i), self.column(j)
                rhs = [zero + x for x in G.bracket(ci, cj)]
                if [zero + x for x in lhs] != rhs:
                    raise HomomorphismError(
                        f"φ is not a homomorphism: φ[e_{i + 1}, e_{j + 1}] = {lhs} "
                        f"but [φ e_{i + 1}, φ e_{j + 1}] = {rhs}"
                    )

    def images(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.float_matrix.T

    def jacobian(self) -> float:
        """sqrt(det φ φ^T), the coarea factor of φ."""
        A = self.float_matrix
        return math.sqrt(float(np.linalg.det(A @ A.T)))

    def kernel(self) -> list[list]:
        """Basis of ker φ (exact when φ is rational)."""
        rows = [[x.to_fraction() if x.is_rational else None for x in row] for row in self.matrix]
        if all(x is not None for row in rows for x in row):
            return la.nullspace_exact(rows, self.source.dim)
        A = self.float_matrix
        _, s, vt = np.linalg.svd(A)
        k = int(np.sum(s > la.TOL * max(1.0, s[0])))
        basis = vt[k:]
        R, _ = la.rref_float(basis)
        return [list(r) for r in R]

    def exponent(self) -> int:
        return self.source.homogeneous_dimension() - self.target.homogeneous_dimension()


# -- regions ------------------------------------------------------------------------------
@dataclass
class BoxRegion:
    """Finite disjoint union of boxes; with ``fold`` points are read mod 1."""

    boxes: list
    fold: bool = False

    def __post_init__(self):
        self.boxes = [np.array(b, dtype=float).reshape(-1, 2) for b in self.boxes]
        if not self.boxes:
            self.boxes = []
            return
        d = self.boxes[0].shape[0]
        for b in self.boxes:
            if b.shape[0] != d:
                raise EquidistError("boxes of a region must share a dimension")
            if np.any(b[:, 0] > b[:, 1]):
                raise EquidistError(f"box with lo > hi: {b.tolist()}")
            if self.fold and (np.any(b[:, 0] < 0) or np.any(b[:, 1] > 1)):
                raise EquidistError("folded boxes must lie inside [0, 1]")
        for i in range(len(self.boxes)):
            for j in range(i + 1, len(self.boxes)):
                a, b = self.boxes[i], self.boxes[j]
                if np.all(np.minimum(a[:, 1], b[:, 1]) > np.maximum(a[:, 0], b[:, 0])):
                    raise EquidistError("boxes of a region overlap")

    @classmethod
    def interval(cls, lo: float, hi: float, fold: bool = False) -> "BoxRegion":
        return cls([[[lo, hi]]], fold)

    @classmethod
    def empty(cls, dim: int = 1) -> "BoxRegion":
        r = cls([], False)
        r._dim = dim
        return r

    @property
    def dim(self) -> int:
        return self.boxes[0].shape[0] if self.boxes else getattr(self, "_dim", 1)

    @property
    def volume(self) -> float:
        return float(sum(np.prod(b[:, 1] - b[:, 0]) for b in self.boxes))

    def union(self, other: "BoxRegion") -> "BoxRegion":
        if self.fold != other.fold:
            raise EquidistError("cannot join folded and unfolded regions")
        return BoxRegion([b.tolist() for b in self.boxes + other.boxes], self.fold)

    def translate(self, x: Sequence[float]) -> "BoxRegion":
        x = np.asarray(x, dtype=float)[:, None]
        return BoxRegion([(b + x).tolist() for b in self.boxes], self.fold)

    def classify(self, Y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(counted, boundary_risk) masks; points within 1e-9 of ∂B are counted
        and flagged."""
        Y = np.asarray(Y, dtype=float).reshape(len(Y), -1)
        if self.fold:
            Y = np.mod(Y, 1.0)
        counted = np.zeros(len(Y), dtype=bool)
        risk = np.zeros(len(Y), dtype=bool)
        for b in self.boxes:
            lo, hi = b[:, 0], b[:, 1]
            near_in = np.all((Y >= lo - BOUNDARY_EPS) & (Y <= hi + BOUNDARY_EPS), axis=1)
            deep = np.all((Y > lo + BOUNDARY_EPS) & (Y < hi - BOUNDARY_EPS), axis=1)
            counted |= near_in
            risk |= near_in & ~deep
            if self.fold:
                # 0 and 1 are the same point of the circle
                for edge in (0.0, 1.0):
                    wrap = np.any(np.isclose(lo, edge) | np.isclose(hi, edge))
                    if wrap:
                        close = np.any(np.abs(Y - (1.0 - edge)) <= BOUNDARY_EPS, axis=1)
                        risk |= close
        return counted, risk

    def bounds(self) -> np.ndarray:
        """Bounding box of the union, shape (dim, 2)."""
        lo = np.min([b[:, 0] for b in self.boxes], axis=0)
        hi = np.max([b[:, 1] for b in self.boxes], axis=0)
        return np.column_stack([lo, hi])


# -- counting --------------------------------------------------------------------------------
@dataclass(frozen=True)
class FiberCount:
    count: int
    boundary_risk: int


def _ball_images(ball: LatticeBall, phi: Homomorphism) -> tuple[np.ndarray, np.ndarray]:
    if ball.truncated:
        raise TruncatedBallError("cannot count in a truncated ball")
    X = ball.floats()
    levels = np.repeat(np.arange(len(ball.spheres)), [len(s) for s in ball.spheres])
    return phi.images(X), levels


def count_in_fiber(ball: LatticeBall, phi: Homomorphism, B: BoxRegion) -> FiberCount:
    """#{γ ∈ ball : φ(γ) ∈ B}, with boundary-risk count reported separately."""
    if not B.boxes:
        return FiberCount(0, 0)
    Y, _ = _ball_images(ball, phi)
    counted, risk = B.classify(Y)
    return FiberCount(int(counted.sum()), int((counted & risk).sum()))


@dataclass
class ConvergenceReport:
    label: str
    parameters: list = field(default_factory=list)
    raw_counts: list = field(default_factory=list)
    estimates: list = field(default_factory=list)
    boundary_risk: list = field(default_factory=list)
    tolerance: float = 0.05
    target: float | None = None
    passed: bool = False
    note: str = ""
    exact: list = field(default_factory=list)

    @property
    def cauchy(self) -> list:
        out = [float("nan")]
        for a, b in zip(self.estimates, self.estimates[1:]):
            out.append(abs(b - a) / abs(b) if b else float("inf"))
        return out

    @property
    def last(self) -> float:
        return self.estimates[-1]

    def rows(self) -> list[list]:
        return [
            [p, c, e, r, d]
            for p, c, e, r, d in zip(self.parameters, self.raw_counts, self.estimates,
                                     self.boundary_risk, self.cauchy)
        ]

    def to_csv(self, fh=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["parameter", "raw_count", "estimate", "boundary_risk", "cauchy_delta"])
        for p, c, e, r, d in self.rows():
            w.writerow([_fmt(p), c, _fmt(e), r, _fmt(d)])
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text

    def summary(self) -> dict:
        return {
            "label": self.label,
            "passed": bool(self.passed),
            "tolerance": self.tolerance,
            "target": self.target,
            "last_estimate": self.estimates[-1] if self.estimates else None,
            "last_cauchy": self.cauchy[-1] if self.estimates else None,
            "note": self.note,
        }


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return repr(round(x, 12))


def _check_increasing(radii):
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise EquidistError("radii must be strictly increasing")


def _counts_by_radius(ball: LatticeBall, phi: Homomorphism, B: BoxRegion, radii, norm=None):
    Y, levels = _ball_images(ball, phi)
    counted, risk = B.classify(Y)
    if norm is not None:
        r = norm.batch(ball.floats())
        keys = r
    else:
        keys = levels
    out = []
    for t in radii:
        if norm is None and t > ball.depth:
            raise EquidistError(f"ball only reaches radius {ball.depth}, asked for {t}")
        inside = keys <= t
        out.append((int((counted & inside).sum()), int((counted & risk & inside).sum()), int(inside.sum())))
    return out


def equidist_limit(ball: LatticeBall, phi: Homomorphism, B: BoxRegion, radii: Sequence,
                   tolerance: float = 0.05, norm=None, exponent: int | None = None) -> ConvergenceReport:
    """count(radius) / radius^{d(Γ) - d(G)}; with a folded B the count is
    divided by the ball size instead (compact quotient)."""
    radii = list(radii)
    _check_increasing(radii)
    k = phi.exponent() if exponent is None else exponent
    if not B.fold and k <= 0:
        raise EquidistError(f"exponent d(Γ) - d(G) = {k} must be positive")
    rows = _counts_by_radius(ball, phi, B, radii, norm)
    rep = ConvergenceReport("equidist", tolerance=tolerance)
    for t, (c, r, size) in zip(radii, rows):
        rep.parameters.append(t)
        rep.raw_counts.append(c)
        rep.estimates.append(c / size if B.fold else c / float(t) ** k)
        rep.boundary_risk.append(r)
    if B.fold:
        rep.target = B.volume
        rep.passed = abs(rep.last - rep.target) <= tolerance
        rep.note = "count / |ball| against vol(B)"
    else:
        rep.passed = len(rep.estimates) > 1 and rep.cauchy[-1] < tolerance
        rep.note = f"count / radius^{k}; Cauchy gate on the last two radii"
    return rep


def proportional(rep_a: ConvergenceReport, rep_b: ConvergenceReport, vol_a: float, vol_b: float,
                 tolerance: float) -> tuple[bool, float]:
    """estimate(B)/estimate(B') against vol(B)/vol(B') at the last radius."""
    ratio = rep_a.last / rep_b.last
    target = vol_a / vol_b
    return abs(ratio - target) <= tolerance * target, ratio


def ratio_limit(ball: LatticeBall, phi: Homomorphism, U: BoxRegion, V: BoxRegion, radii: Sequence,
                tolerance: float = 0.05, norm=None) -> ConvergenceReport:
    """R_n(U, V) = |S^n ∩ φ^{-1}U| / |S^n ∩ φ^{-1}V| (kept exactly as Fractions)."""
    radii = list(radii)
    _check_increasing(radii)
    cu = _counts_by_radius(ball, phi, U, radii, norm)
    cv = _counts_by_radius(ball, phi, V, radii, norm)
    if cv[0][0] == 0:
        raise EquidistError(f"denominator region V={[b.tolist() for b in V.boxes]} is empty at radius {radii[0]}")
    rep = ConvergenceReport("ratio", tolerance=tolerance, target=U.volume / V.volume)
    for t, (a, ra, _), (b, rb, _) in zip(radii, cu, cv):
        if b == 0:
            raise EquidistError(f"denominator region V is empty at radius {t}")
        q = Fraction(a, b)
        rep.parameters.append(t)
        rep.raw_counts.append(a)
        rep.exact.append(q)
        rep.estimates.append(float(q))
        rep.boundary_risk.append(ra + rb)
    rep.passed = abs(rep.last - rep.target) <= tolerance * rep.target
    rep.note = "R_n(U,V) against vol(U)/vol(V)"
    return rep


# -- rescaled empirical measure -----------------------------------------------------------------
def box_slice_volume(box: np.ndarray, M) -> float:
    """k-dimensional volume of box ∩ span(M) (orthonormal parametrization)."""
    box = np.asarray(box, dtype=float).reshape(-1, 2)
    Qm = orthonormal_rows(M)
    k = Qm.shape[0]
    A = np.vstack([Qm.T, -Qm.T])
    b = np.concatenate([box[:, 1], -box[:, 0]])
    if k == 1:
        a = A[:, 0]
        lo, hi = -np.inf, np.inf
        for ai, bi in zip(a, b):
            if abs(ai) < 1e-15:
                if bi < 0:
                    return 0.0
            elif ai > 0:
                hi = min(hi, bi / ai)
            else:
                lo = max(lo, bi / ai)
        return max(0.0, hi - lo)
    # Chebyshev centre gives an interior point (or proves emptiness)
    norms = np.linalg.norm(A, axis=1)
    res = linprog(np.r_[np.zeros(k), -1.0], A_ub=np.column_stack([A, norms]), b_ub=b,
                  bounds=[(None, None)] * k + [(0, None)], method="highs")
    if res.status != 0 or res.x[-1] <= 1e-12:
        return 0.0
    hs = HalfspaceIntersection(np.column_stack([A, -b]), res.x[:k])
    return float(ConvexHull(hs.intersections).volume)


def dilate_rows(X: np.ndarray, degrees, s: float) -> np.ndarray:
    return np.asarray(X, dtype=float) * float(s) ** np.asarray(degrees)


def rescaled_empirical(ball: LatticeBall, phi: Homomorphism, B: BoxRegion, Ts: Sequence[float],
                       test_box, covolume: float = 1.0, tolerance: float = 0.10) -> ConvergenceReport:
    """#{γ : φ(γ) ∈ B, δ_{1/T} γ ∈ box} / T^{deg M} against
    c_M · vol_G(B) · vol_{M∞}(box ∩ M∞) / (covolume · J_φ).

    The ball must contain every such γ for the largest T (see fiber_region_ball).
    """
    Ts = list(Ts)
    _check_increasing(Ts)
    N = phi.source
    if not N.is_layered:
        raise EquidistError("rescaling needs a layered source algebra")
    M = phi.kernel()
    deg = degree_of_subspace(M, N.filtered)
    cM = c_M_constant(M, N.dilations)
    Minf = limit_subspace(M, N.dilations)
    box = np.asarray(test_box, dtype=float).reshape(-1, 2)
    slice_vol = box_slice_volume(box, Minf)
    expected = cM * B.volume * slice_vol / (covolume * phi.jacobian())
    X = ball.floats()
    Y = phi.images(X)
    counted, risk = B.classify(Y)
    degrees = N.layer_degrees
    rep = ConvergenceReport("unifdist", tolerance=tolerance, target=expected)
    for T in Ts:
        Z = dilate_rows(X[counted], degrees, 1.0 / T)
        inside = np.all((Z >= box[:, 0]) & (Z <= box[:, 1]), axis=1)
        c = int(inside.sum())
        rep.parameters.append(T)
        rep.raw_counts.append(c)
        rep.estimates.append(c / float(T) ** deg)
        rep.boundary_risk.append(int((inside & risk[counted]).sum()))
    if expected == 0:
        rep.passed = rep.last <= tolerance and rep.last <= rep.estimates[0] + 1e-12
        rep.note = "test box misses M_inf: normalized count must vanish"
    else:
        rep.passed = abs(rep.last - expected) <= tolerance * expected
        rep.note = (f"c_M={cM:.6g}, vol_G(B)={B.volume:.6g}, vol_Minf(box)={slice_vol:.6g}, "
                    f"J_phi={phi.jacobian():.6g}, covolume={covolume:g}")
    return rep


def fiber_region_ball(gens, product, phi: Homomorphism, B: BoxRegion, test_box, T: float,
                      fiber_slack: float | None = None, box_slack: float = 4.0,
                      mem_budget_mb: float | None = None) -> LatticeBall:
    """BFS restricted to a neighbourhood of φ^{-1}(B) ∩ δ_T(box).

    Elements are kept while φ(γ) stays within ``fiber_slack`` of B and every
    coordinate of degree p stays within box_slack·T^{p-1} of δ_T(box).
    """
    N = phi.source
    deg = np.asarray(N.layer_degrees)
    box = np.asarray(test_box, dtype=float).reshape(-1, 2)
    if fiber_slack is None:
        fiber_slack = float(sum(np.abs(phi.images(np.array([[float(c) for c in g]]))).sum()
                                for g in gens.elements))
    lo_b, hi_b = B.bounds()[:, 0] - fiber_slack, B.bounds()[:, 1] + fiber_slack
    scale = float(T) ** deg
    margin = box_slack * float(T) ** (deg - 1)
    lo_n, hi_n = box[:, 0] * scale - margin, box[:, 1] * scale + margin

    def prune(X):
        Y = phi.images(X)
        return (np.all((Y >= lo_b) & (Y <= hi_b), axis=1)
                & np.all((X >= lo_n) & (X <= hi_n), axis=1))

    ball = LatticeBall.identity(gens, product)
    expand_ball(ball, gens, 10**9, mem_budget_mb=mem_budget_mb, prune=prune)
    ball.kind = "fiber-region"
    ball.radius = T
    return ball
