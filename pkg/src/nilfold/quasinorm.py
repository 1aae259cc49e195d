"""Homogeneous quasi-norms, ball families and the nicely-growing audit.

All quasi-norms live on an algebra whose coordinate basis is layered
(``algebra.is_layered``), so δ_t multiplies coordinate i by t^{deg_i}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from . import linalg as la
from .filtration import c_M_constant, degree_of_subspace, limit_subspace
from .mc import Estimate, binomial_estimate, block_rng, combined_se, map_blocks
from .nilgroup import BCHProduct, NilpotentAlgebra
from .ring import ExactScalar

LAYER_KINDS = ("sup", "euclidean")
DEFECT_FLOOR = 1e-9


def _tup(x) -> tuple:
    return tuple(round(float(v), 12) for v in x)


class QuasiNormError(ValueError):
    pass


class NotSubalgebraError(QuasiNormError):
    pass


def _rational(x):
    if isinstance(x, ExactScalar):
        return x.to_fraction() if x.is_rational else None
    if isinstance(x, (int, Fraction)) and not isinstance(x, bool):
        return Fraction(x)
    return None


class QuasiNorm:
    """|x| = max_p (λ_p ‖π_p x‖_p)^{1/p}."""

    def __init__(self, algebra: NilpotentAlgebra, kinds: Sequence[str] | None = None, weights=None):
        if not algebra.is_layered:
            raise QuasiNormError("quasi-norms need a layered coordinate basis; use algebra.adapted()")
        r = algebra.nil_class
        kinds = list(kinds) if kinds is not None else ["sup"] * r
        weights = list(weights) if weights is not None else [1] * r
        if len(kinds) != r or len(weights) != r:
            raise QuasiNormError(f"need one norm kind and one weight per layer ({r})")
        for k in kinds:
            if k not in LAYER_KINDS:
                raise QuasiNormError(f"unknown layer norm {k!r}")
        self.weights = [Fraction(w) if not isinstance(w, float) else w for w in weights]
        if any(w <= 0 for w in self.weights):
            raise QuasiNormError("layer weights must be positive")
        self.algebra = algebra
        self.kinds = kinds
        self.degrees = np.array(algebra.layer_degrees)
        self.layers = [np.flatnonzero(self.degrees == p) for p in range(1, r + 1)]
        self.L = math.lcm(*range(1, r + 1))
        self._wf = np.array([float(w) for w in self.weights])

    @property
    def dim(self) -> int:
        return self.algebra.dim

    @property
    def depth(self) -> int:
        return len(self.layers)

    def with_weights(self, weights) -> "QuasiNorm":
        return QuasiNorm(self.algebra, self.kinds, weights)

    def describe(self) -> str:
        return ", ".join(f"m{p + 1}:{k}*{w}" for p, (k, w) in enumerate(zip(self.kinds, self.weights)))

    # -- evaluation ----------------------------------------------------------------
    def batch(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        flat = X.reshape(-1, self.dim)
        out = np.zeros(flat.shape[0])
        for p, idx in enumerate(self.layers, start=1):
            v = flat[:, idx]
            if self.kinds[p - 1] == "sup":
                nrm = np.abs(v).max(axis=1)
            else:
                nrm = np.sqrt(np.einsum("ij,ij->i", v, v))
            np.maximum(out, (self._wf[p - 1] * nrm) ** (1.0 / p), out=out)
        return out.reshape(X.shape[:-1])

    def power_exact(self, g: Sequence) -> Fraction:
        """|g|^{2L} with L = lcm(1..r), exact for rational coordinates and weights."""
        q = [_rational(c) for c in g]
        if any(c is None for c in q) or any(isinstance(w, float) for w in self.weights):
            raise QuasiNormError("exact norm power needs rational coordinates and weights")
        best = Fraction(0)
        for p, idx in enumerate(self.layers, start=1):
            sq = [q[i] * q[i] for i in idx]
            n2 = max(sq) if self.kinds[p - 1] == "sup" else sum(sq)
            best = max(best, (self.weights[p - 1] ** 2 * n2) ** (self.L // p))
        return best

    def __call__(self, g: Sequence) -> float:
        try:
            pw = self.power_exact(g)
        except QuasiNormError:
            return float(self.batch(np.array([[float(c) for c in g]]))[0])
        return float(pw) ** (1.0 / (2 * self.L)) if pw else 0.0

    def dilate(self, g: Sequence, t) -> tuple:
        return tuple(c * t**int(d) for c, d in zip(g, self.degrees))

    def dilate_batch(self, X, t) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        t = np.asarray(t, dtype=float)
        if t.ndim == 0:
            return X * t**self.degrees
        return X * t[:, None] ** self.degrees

    def coordinate_constant(self) -> float:
        """C with |x_i| <= C |x|^{deg e_i}."""
        return max(1.0 / float(w) for w in self.weights)

    def coordinate_bounds(self, t: float) -> np.ndarray:
        """Half-widths of a coordinate box containing D_t."""
        return np.array([t ** int(d) / float(self.weights[d - 1]) for d in self.degrees])


# -- Guivarc'h rescaling ------------------------------------------------------------
@dataclass(frozen=True)
class DefectWitness:
    c: float
    x: tuple
    y: tuple


def _pair_sample(Q: QuasiNorm, samples: int, seed: int):
    rng = block_rng(seed, 0, stream=11)
    U = rng.uniform(-1, 1, (samples, Q.dim))
    V = rng.uniform(-1, 1, (samples, Q.dim))
    su = 10.0 ** rng.uniform(-1, 1, samples)
    sv = 10.0 ** rng.uniform(-1, 1, samples)
    return Q.dilate_batch(U, su), Q.dilate_batch(V, sv)


def triangle_defect(Q: QuasiNorm, P: BCHProduct, X, Y, XY=None) -> DefectWitness:
    """max(0, max over pairs of |xy| - |x| - |y|)."""
    XY = P.multiply_batch(X, Y) if XY is None else XY
    d = Q.batch(XY) - Q.batch(X) - Q.batch(Y)
    k = int(np.argmax(d))
    c = float(d[k])
    if not np.isfinite(c):
        raise QuasiNormError(f"triangle defect is not finite at x={X[k]}, y={Y[k]}")
    return DefectWitness(c if c > DEFECT_FLOOR else 0.0, _tup(X[k]), _tup(Y[k]))


def guivarch_rescale(Q: QuasiNorm, P: BCHProduct, samples: int = 10_000, seed: int = 0,
                     exponents: Sequence[int] = tuple(range(-10, 11))):
    """Layer-descending line search over λ_p ∈ λ_p·2^k minimizing the sampled
    additive constant; returns (rescaled norm, empirical c)."""
    X, Y = _pair_sample(Q, samples, seed)
    XY = P.multiply_batch(X, Y)
    weights = list(Q.weights)
    for p in range(Q.depth, 1, -1):
        best = None
        for k in exponents:
            cand = list(weights)
            cand[p - 1] = weights[p - 1] * Fraction(2) ** k
            c = triangle_defect(Q.with_weights(cand), P, X, Y, XY).c
            key = (c, abs(k))
            if best is None or key < best[0]:
                best = (key, cand)
        weights = best[1]
    out = Q.with_weights(weights)
    return out, triangle_defect(out, P, X, Y, XY).c


# -- ball families -------------------------------------------------------------------
class QuasiNormBalls:
    """D_t = {|x| <= t}."""

    def __init__(self, Q: QuasiNorm):
        self.norm = Q
        self.name = f"D_t[{Q.describe()}]"

    @property
    def dim(self) -> int:
        return self.norm.dim

    def gauge(self, X) -> np.ndarray:
        return self.norm.batch(X)

    def contains(self, X, t: float) -> np.ndarray:
        return self.gauge(X) <= t

    def coordinate_bounds(self, t: float) -> np.ndarray:
        return self.norm.coordinate_bounds(t)

    def _directions(self, m: int, rng) -> np.ndarray:
        U = rng.uniform(-1, 1, (m, self.dim)) * self.norm.coordinate_bounds(1.0)
        nrm = self.norm.batch(U)
        U[nrm == 0, 0] = 1.0
        return U

    def boundary_points(self, t: float, m: int, rng) -> np.ndarray:
        U = self._directions(m, rng)
        return self.norm.dilate_batch(U, t / self.norm.batch(U))


class SpikedBalls(QuasiNormBalls):
    """A_t = D_t ∪ {|x| <= 2t, |x_axis| <= width}.

    Monotone and exhausting, but a bounded translation moves the slab part of
    A_t far outside A_{t(1+ε)}, so the sandwich axiom fails.
    """

    def __init__(self, Q: QuasiNorm, width: float = 0.5, axis: int = 1):
        super().__init__(Q)
        self.width = width
        self.axis = axis
        self.name = f"spiked[{Q.describe()}, w={width}, axis={axis}]"

    def gauge(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        g = self.norm.batch(X)
        slab = np.abs(X[..., self.axis]) <= self.width
        return np.where(slab, g / 2, g)

    def coordinate_bounds(self, t: float) -> np.ndarray:
        return self.norm.coordinate_bounds(2 * t)

    def boundary_points(self, t: float, m: int, rng) -> np.ndarray:
        half = m // 2
        A = super().boundary_points(t, m - half, rng)
        U = self._directions(half, rng)
        U[:, self.axis] = 0.0
        U[self.norm.batch(U) == 0, 0] = 1.0
        B = self.norm.dilate_batch(U, 2 * t / self.norm.batch(U))
        return np.vstack([A, B])


# -- subgroup volumes -----------------------------------------------------------------
def orthonormal_rows(M) -> np.ndarray:
    A = la.to_float([list(r) for r in M])
    Qm, R = np.linalg.qr(A.T)
    k = la.rank_float(A)
    return Qm[:, :k].T


def parameter_box(Qm: np.ndarray, bounds: np.ndarray) -> np.ndarray:
    """Half-widths h with {s : |(s Qm)_i| <= bounds_i} ⊆ Π[-h_j, h_j]."""
    k = Qm.shape[0]
    A_ub = np.vstack([Qm.T, -Qm.T])
    b_ub = np.concatenate([bounds, bounds])
    h = np.empty(k)
    for j in range(k):
        c = np.zeros(k)
        c[j] = -1.0
        res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=[(None, None)] * k, method="highs")
        if res.status != 0:
            raise QuasiNormError(f"slice of the ball is unbounded along parameter {j}")
        h[j] = -res.fun
    return h * (1 + 1e-9) + 1e-12


def slice_volume(family, M, t: float, samples: int, seed: int, workers: int = 1,
                 stream: int = 0) -> Estimate:
    """Monte Carlo vol_M(A_t ∩ M) in orthonormal coordinates on span(M)."""
    Qm = orthonormal_rows(M)
    if Qm.shape[0] == 0:
        raise QuasiNormError("subgroup M = {0} is not allowed")
    h = parameter_box(Qm, family.coordinate_bounds(t))
    box = float(np.prod(2 * h))

    def run(b, m):
        rng = block_rng(seed, b, stream=100 + stream)
        S = rng.uniform(-1, 1, (m, len(h))) * h
        return int(np.count_nonzero(family.gauge(S @ Qm) <= t))

    hits = sum(map_blocks(run, samples, workers))
    return binomial_estimate(hits, samples, scale=box)


def check_subalgebra(algebra: NilpotentAlgebra, M):
    if la.rank([list(r) for r in M], algebra.dim) == 0:
        raise QuasiNormError("subgroup M = {0} is not allowed")
    if not algebra.layer_bracket_closed(M):
        raise NotSubalgebraError("M is not closed under the bracket")


def ball_volume_on_subgroup(Q: QuasiNorm, M, t: float, samples: int, seed: int,
                            workers: int = 1) -> Estimate:
    check_subalgebra(Q.algebra, M)
    if t <= 0:
        raise QuasiNormError("radius must be positive")
    return slice_volume(QuasiNormBalls(Q), M, t, samples, seed, workers)


@dataclass
class LimitVolumeReport:
    radii: list
    estimates: list  # vol_M(D_t ∩ M) / t^deg
    degree: int
    c_M: float
    limit_volume: Estimate  # vol_{M∞}(D_1)
    cauchy: list
    passed: bool

    @property
    def direct(self) -> Estimate:
        return self.estimates[-1]

    @property
    def predicted(self) -> Estimate:
        v = self.limit_volume
        return Estimate(self.c_M * v.value, self.c_M * v.se)

    def message(self) -> str:
        return (f"direct {self.direct} vs c_M*vol(M_inf ∩ D_1) = {self.predicted} "
                f"(c_M={self.c_M:.6g}, deg={self.degree})")


def limit_volume_constant(Q: QuasiNorm, M, radii: Sequence[float], samples: int = 1_000_000,
                          seed: int = 0, workers: int = 1, sigmas: float = 3.0) -> LimitVolumeReport:
    """Compare lim vol_M(D_t ∩ M)/t^deg against c_M · vol_{M∞}(D_1)."""
    radii = list(radii)
    if len(radii) < 4 or any(b <= a for a, b in zip(radii, radii[1:])):
        raise QuasiNormError("need at least four increasing radii")
    check_subalgebra(Q.algebra, M)
    A = Q.algebra
    deg = degree_of_subspace(M, A.filtered)
    fam = QuasiNormBalls(Q)
    ests = []
    for i, t in enumerate(radii):
        v = slice_volume(fam, M, t, samples, seed, workers, stream=i)
        ests.append(Estimate(v.value / t**deg, v.se / t**deg, v.hits, v.samples))
    cauchy = [abs(b.value - a.value) / abs(b.value) for a, b in zip(ests, ests[1:])]
    cM = c_M_constant(M, A.dilations)
    Minf = limit_subspace(M, A.dilations)
    vinf = slice_volume(fam, Minf, 1.0, samples, seed, workers, stream=len(radii) + 1)
    gap = abs(ests[-1].value - cM * vinf.value)
    # slack for LP rounding when the sampled box is exactly the slice (zero variance)
    ok = gap <= sigmas * combined_se(ests[-1].se, cM * vinf.se) + 1e-8 * abs(cM * vinf.value)
    return LimitVolumeReport(radii, ests, deg, cM, vinf, cauchy, bool(ok))


# -- nicely growing audit ----------------------------------------------------------------
@dataclass
class AuditTolerances:
    eps_max: float = 0.5
    cauchy_rel: float = 0.05
    alpha_max: float = 4.0
    points: int = 2000
    pairs_per_point: int = 32
    lower_points: int = 400
    k_points: int = 16
    vol_samples: int = 200_000


@dataclass
class AxiomResult:
    axiom: str
    passed: bool
    values: dict = field(default_factory=dict)
    witness: object = None
    message: str = ""


@dataclass
class AuditReport:
    family: str
    radii: list
    axioms: list

    @property
    def passed(self) -> bool:
        return all(a.passed for a in self.axioms)

    def __getitem__(self, name: str) -> AxiomResult:
        for a in self.axioms:
            if a.axiom == name:
                return a
        raise KeyError(name)

    def failures(self) -> list[str]:
        return [a.axiom for a in self.axioms if not a.passed]

    def lines(self) -> list[str]:
        out = [f"audit of {self.family} at radii {self.radii}"]
        for a in self.axioms:
            out.append(f"  ({a.axiom}) {'pass' if a.passed else 'FAIL'}: {a.message}")
            if not a.passed and a.witness is not None:
                out.append(f"      witness: {a.witness}")
        return out


def default_compact(dim: int, k_points: int, seed: int) -> np.ndarray:
    rng = block_rng(seed, 0, stream=21)
    return np.vstack([np.zeros((1, dim)), rng.uniform(-1, 1, (k_points, dim))])


def doubling_constant(family, P: BCHProduct, t: float, points: int = 2000, seed: int = 0,
                      witness: bool = False):
    """Empirical α_t = max ρ(x y^{-1}) / t over sampled x, y ∈ A_t."""
    rng = block_rng(seed, 0, stream=51)
    Q = family.norm
    X = family.boundary_points(t, points, rng)
    Y = family.boundary_points(t, points, rng)
    Y = Q.dilate_batch(Y, rng.uniform(0.0, 1.0, len(Y)))
    keep = family.gauge(Y) <= t
    X, Y = X[keep], Y[keep]
    r = family.gauge(P.multiply_batch(X, -Y)) / t
    j = int(np.argmax(r))
    if witness:
        return float(r[j]), {"x": _tup(X[j]), "y": _tup(Y[j])}
    return float(r[j])


def _strictly_decreasing(seq) -> bool:
    return all(b < a or (a == 0 and b == 0) for a, b in zip(seq, seq[1:]))


def nicely_growing_audit(family, P: BCHProduct, K=None, subgroups: Sequence = (),
                         radii: Sequence[float] = (10, 20, 40, 80), seed: int = 0,
                         tol: AuditTolerances | None = None, workers: int = 1) -> AuditReport:
    """Empirical check of axioms (i)-(iv) for a gauge family A_t = {ρ <= t}."""
    tol = tol or AuditTolerances()
    radii = [float(t) for t in radii]
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise QuasiNormError("radii must be increasing")
    n = family.dim
    K = default_compact(n, tol.k_points, seed) if K is None else np.asarray(K, dtype=float)
    Q = family.norm
    axioms = []

    # (i) monotone and exhausting
    rng = block_rng(seed, 0, stream=31)
    X = rng.uniform(-1, 1, (tol.points, n)) * family.coordinate_bounds(radii[-1])
    X = np.vstack([X] + [family.boundary_points(t, tol.points // 4, rng) for t in radii])
    viol = None
    for t, s in zip(radii, radii[1:]):
        bad = family.contains(X, t) & ~family.contains(X, s)
        if bad.any():
            viol = (t, s, _tup(X[np.argmax(bad)]))
            break
    unit = rng.uniform(-1, 1, (tol.points, n))
    exhaust = bool(family.contains(unit, radii[-1]).all())
    axioms.append(AxiomResult(
        "i", viol is None and exhaust, {"exhausts_unit_box": exhaust}, viol,
        "monotone on sampled points" + ("" if exhaust else "; unit box not exhausted"),
    ))

    # (ii) sandwich A_{t(1-ε)} ⊆ k A_t k' ⊆ A_{t(1+ε)}
    eps, wit = [], []
    for i, t in enumerate(radii):
        rng = block_rng(seed, i, stream=41)
        B = family.boundary_points(t, tol.points, rng)
        Xr = np.repeat(B, tol.pairs_per_point, axis=0)
        ki = rng.integers(0, len(K), len(Xr))
        kj = rng.integers(0, len(K), len(Xr))
        Z = P.multiply_batch(P.multiply_batch(K[ki], Xr), K[kj])
        ratio = family.gauge(Z) / t
        j = int(np.argmax(ratio))
        up = max(0.0, float(ratio[j]) - 1.0)
        up_w = {"x": _tup(Xr[j]), "k": _tup(K[ki[j]]), "k'": _tup(K[kj[j]]), "rho/t": float(ratio[j])}

        Y = family.boundary_points(t, tol.lower_points, rng)
        Y = Q.dilate_batch(Y, rng.uniform(0.5, 1.0, len(Y)))
        rho_y = family.gauge(Y)
        Kinv = -K
        worst = np.zeros(len(Y))
        for a in range(len(K)):
            left = P.multiply_batch(np.broadcast_to(Kinv[a], Y.shape), Y)
            for b in range(len(K)):
                g = family.gauge(P.multiply_batch(left, np.broadcast_to(Kinv[b], Y.shape)))
                np.maximum(worst, g, out=worst)
        fail = (worst > t) & (rho_y <= t)
        low, low_w = 0.0, None
        if fail.any():
            gap = np.where(fail, 1.0 - rho_y / t, -np.inf)
            j = int(np.argmax(gap))
            low = max(0.0, float(gap[j]))
            low_w = {"y": _tup(Y[j]), "rho(y)/t": float(rho_y[j] / t)}
        eps.append(max(up, low))
        wit.append(up_w if up >= low else low_w)
    ok = _strictly_decreasing(eps) and eps[-1] <= tol.eps_max
    axioms.append(AxiomResult(
        "ii", ok, {"eps": eps}, None if ok else {"t": radii[-1], **(wit[-1] or {})},
        "eps_t = " + ", ".join(f"{e:.4g}" for e in eps),
    ))

    # (iii) slice volumes / t^deg Cauchy across radii
    vals, ok3, msgs = {}, True, []
    A = Q.algebra
    for m_i, M in enumerate(subgroups):
        check_subalgebra(A, M)
        deg = degree_of_subspace(M, A.filtered)
        ests = []
        for i, t in enumerate(radii):
            v = slice_volume(family, M, t, tol.vol_samples, seed + 7919 * (m_i + 1), workers, stream=i)
            ests.append(Estimate(v.value / t**deg, v.se / t**deg, v.hits, v.samples))
        a, b = ests[-2], ests[-1]
        good = b.value > 0 and abs(a.value - b.value) <= tol.cauchy_rel * abs(b.value) + 3 * combined_se(a.se, b.se)
        ok3 &= good
        vals[f"M{m_i}"] = [e.value for e in ests]
        msgs.append(f"M{m_i} (deg {deg}): " + ", ".join(f"{e.value:.4g}" for e in ests))
    axioms.append(AxiomResult("iii", ok3, vals, None, "; ".join(msgs) or "no subgroups given"))

    # (iv) A_t A_t^{-1} ⊆ A_{αt}
    alphas, wit4 = [], None
    for i, t in enumerate(radii):
        a, w = doubling_constant(family, P, t, tol.points, seed + i, witness=True)
        alphas.append(a)
        if wit4 is None or a > wit4["alpha"]:
            wit4 = {"t": t, **w, "alpha": a}
    ok4 = max(alphas) <= tol.alpha_max
    axioms.append(AxiomResult("iv", ok4, {"alpha": alphas}, None if ok4 else wit4,
                              "alpha_t = " + ", ".join(f"{a:.4g}" for a in alphas)))
    return AuditReport(family.name, radii, axioms)
