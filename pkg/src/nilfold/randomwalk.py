"""Symmetric finitely supported random walks: exact convolution powers, Monte
Carlo endpoints, local limit estimates and sub-Laplacian coefficients."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import linalg as la
from .mc import Estimate, binomial_estimate, map_blocks
from .nilgroup import BCHProduct, NilpotentAlgebra
from .ring import RATIONALS, ExactScalar, RingSpec, sqrt2_ring

ENTRY_BYTES = 256  # rough footprint of one dict entry with exact coordinates


class WalkError(ValueError):
    pass


class BudgetExceeded(WalkError):
    pass


def _key(g) -> tuple:
    return tuple(c.hash_key() for c in g)


@dataclass
class WalkMeasure:
    """μ = Σ μ(s) δ_s with rational weights; symmetric under s ↦ s^{-1} = -s."""

    support: list
    probs: list
    spec: RingSpec = RATIONALS

    def __post_init__(self):
        if len(self.support) != len(self.probs) or not self.support:
            raise WalkError("support and probabilities must be non-empty and of equal length")
        self.support = [tuple(self.spec.scalar(c) for c in g) for g in self.support]
        self.probs = [Fraction(p) for p in self.probs]
        if any(p <= 0 for p in self.probs):
            raise WalkError("probabilities must be positive")
        if sum(self.probs) != 1:
            raise WalkError(f"probabilities sum to {sum(self.probs)}, not 1")
        table = {}
        for g, p in zip(self.support, self.probs):
            k = _key(g)
            if k in table:
                raise WalkError(f"repeated support point {g}")
            table[k] = p
        for g, p in zip(self.support, self.probs):
            if table.get(_key(tuple(-c for c in g))) != p:
                raise WalkError(f"measure is not symmetric at {g}")
        self.denominator = math.lcm(*(p.denominator for p in self.probs))
        self.weights = [int(p * self.denominator) for p in self.probs]

    @property
    def dim(self) -> int:
        return len(self.support[0])

    def float_support(self) -> np.ndarray:
        return np.array([[c.evaluate() for c in g] for g in self.support])


# -- exact convolution ---------------------------------------------------------------------
@dataclass
class ExactDistribution:
    """μ^{*n} as integer weights over the common denominator W^n."""

    n: int
    denominator: int
    points: dict  # key -> (element, weight)

    def total_mass(self) -> Fraction:
        return Fraction(sum(w for _, w in self.points.values()), self.denominator)

    def mass(self, g) -> Fraction:
        item = self.points.get(_key(g))
        return Fraction(item[1] if item else 0, self.denominator)

    def is_symmetric(self) -> bool:
        for g, w in self.points.values():
            other = self.points.get(_key(tuple(-c for c in g)))
            if other is None or other[1] != w:
                return False
        return True

    def box_mass(self, B) -> Fraction:
        if not self.points:
            return Fraction(0)
        els = [g for g, _ in self.points.values()]
        w = np.array([w for _, w in self.points.values()], dtype=object)
        X = np.array([[c.evaluate() for c in g] for g in els])
        counted, _ = B.classify(X)
        return Fraction(int(w[counted].sum()) if counted.any() else 0, self.denominator)


def convolve_exact(mu: WalkMeasure, n: int, product: BCHProduct,
                   mem_budget_mb: float | None = 512) -> ExactDistribution:
    """Exact μ^{*n} by dynamic programming over exact group elements."""
    zero = tuple(mu.spec.zero() for _ in range(mu.dim))
    state = {_key(zero): (zero, 1)}
    budget = None if mem_budget_mb is None else mem_budget_mb * 2**20
    for step in range(n):
        nxt: dict = {}
        for g, c in state.values():
            for s, w in zip(mu.support, mu.weights):
                h = product.multiply(g, s)
                k = _key(h)
                if k in nxt:
                    nxt[k] = (nxt[k][0], nxt[k][1] + c * w)
                else:
                    nxt[k] = (h, c * w)
            if budget is not None and len(nxt) * ENTRY_BYTES > budget:
                raise BudgetExceeded(
                    f"support of μ^*{step + 1} exceeds the memory budget; use Monte Carlo mode"
                )
        state = nxt
    return ExactDistribution(n, mu.denominator**n, state)


# -- factorized exact mass for steps {0, ±1, ±√2} on R ------------------------------------------
def _sign_p_q_sqrt2(p: int, q: int) -> int:
    """Sign of p + q√2 for integers p, q."""
    if p >= 0 and q >= 0:
        return int(p > 0 or q > 0)
    if p <= 0 and q <= 0:
        return -int(p < 0 or q < 0)
    d = p * p - 2 * q * q
    s = (d > 0) - (d < 0)
    return s if p > 0 else -s


class FactoredLineWalk:
    """μ = p0·δ_0 + (1-p0)/4·(δ_1 + δ_{-1} + δ_√2 + δ_{-√2}) on R.

    The four-point part is the law of σ + τ with σ = ±h1, τ = ±h2 fair and
    independent, h1 = (1+√2)/2, h2 = (1-√2)/2.  After k non-lazy steps the
    position is i·h1 + j·h2 with i, j ≡ k (mod 2), weighted by two binomial
    rows, so μ^{*n}(I) is a finite sum of exact integers.
    """

    def __init__(self, p0=Fraction(1, 5)):
        self.p0 = Fraction(p0)
        if not 0 <= self.p0 < 1:
            raise WalkError("lazy probability must be in [0, 1)")
        self.h1 = (1 + math.sqrt(2)) / 2
        self.h2 = (1 - math.sqrt(2)) / 2

    def measure(self) -> WalkMeasure:
        spec = sqrt2_ring()
        r2 = spec.constant("sqrt2")
        q = (1 - self.p0) / 4
        support, probs = [], []
        if self.p0:
            support.append((0,))
            probs.append(self.p0)
        for s in (1, -1, r2, -r2):
            support.append((s,))
            probs.append(q)
        return WalkMeasure(support, probs, spec)

    def _pos_cmp(self, i: int, j: int, c: Fraction) -> int:
        """Sign of i·h1 + j·h2 - c."""
        # 2·den·(pos - c) = (i+j)·den - 2·num + (i-j)·den·√2
        num, den = c.numerator, c.denominator
        return _sign_p_q_sqrt2((i + j) * den - 2 * num, (i - j) * den)

    def _j_range(self, k: int, i: int, a: Fraction, b: Fraction):
        """Inclusive range of j ≡ k (mod 2), |j| <= k, with a <= pos(i, j) <= b."""
        # pos decreases in j
        jb = (float(b) - i * self.h1) / self.h2
        ja = (float(a) - i * self.h1) / self.h2
        lo = max(-k, math.ceil(jb) - 2)
        hi = min(k, math.floor(ja) + 2)
        if (lo - k) % 2:
            lo += 1
        if (hi - k) % 2:
            hi -= 1
        while lo <= hi and self._pos_cmp(i, lo, b) > 0:
            lo += 2
        while hi >= lo and self._pos_cmp(i, hi, a) < 0:
            hi -= 2
        return lo, hi

    def box_mass(self, n: int, a, b) -> Fraction:
        """μ^{*n}([a, b]) exactly, for rational a < b."""
        a, b = Fraction(a), Fraction(b)
        P, Qd = self.p0.numerator, self.p0.denominator
        Qm = Qd - P
        total = 0
        row = [1]
        binom_n = 1
        for k in range(n + 1):
            if k > 0:
                row = [1] + [row[t - 1] + row[t] for t in range(1, k)] + [1]
                binom_n = binom_n * (n - k + 1) // k
            weight = binom_n * P ** (n - k) * Qm**k
            if weight == 0:
                continue
            pref = [0]
            for x in row:
                pref.append(pref[-1] + x)
            # i range that can reach [a, b]: j ≈ (c - i h1)/h2 must stay in [-k, k]
            inner = 0
            for i in range(-k, k + 1, 2):
                lo, hi = self._j_range(k, i, a, b)
                if lo > hi:
                    continue
                tl, th = (k + lo) // 2, (k + hi) // 2
                inner += row[(k + i) // 2] * (pref[th + 1] - pref[tl])
            if inner:
                total += weight * inner * 4 ** (n - k)
        return Fraction(total, Qd**n * 4**n)

    def total_mass(self, n: int) -> Fraction:
        P, Qd = self.p0.numerator, self.p0.denominator
        Qm = Qd - P
        total = 0
        for k in range(n + 1):
            rowsum = 2**k  # Σ_i C(k, (k+i)/2)
            total += math.comb(n, k) * P ** (n - k) * Qm**k * rowsum * rowsum * 4 ** (n - k)
        return Fraction(total, Qd**n * 4**n)

    def variance(self) -> Fraction:
        return (1 - self.p0) * Fraction(3, 2)


# -- Monte Carlo --------------------------------------------------------------------------------
_M64 = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLD = np.uint64(0x9E3779B97F4A7C15)
_C1 = np.uint64(0xBF58476D1CE4E5B9)
_C2 = np.uint64(0x94D049BB133111EB)


def splitmix64(x: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer on uint64 arrays (wrapping arithmetic)."""
    with np.errstate(over="ignore"):
        z = (x + _GOLD).astype(np.uint64)
        z = (z ^ (z >> np.uint64(30))) * _C1
        z = (z ^ (z >> np.uint64(27))) * _C2
        return z ^ (z >> np.uint64(31))


def path_keys(seed: int, start: int, count: int) -> np.ndarray:
    base = splitmix64(np.array([seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64))[0]
    idx = np.arange(start, start + count, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return splitmix64(idx * _C2 + base)


def step_choices(keys: np.ndarray, step: int, cum_weights: np.ndarray, total: int) -> np.ndarray:
    """Support index per path at ``step``: counter-based, so each (path, step)
    pair always gets the same draw."""
    with np.errstate(over="ignore"):
        u = splitmix64(keys ^ (np.uint64(step + 1) * _GOLD))
    r = ((u >> np.uint64(32)) * np.uint64(total)) >> np.uint64(32)
    return np.searchsorted(cum_weights, r, side="right")


@dataclass
class SampleState:
    """Endpoint coordinates of independent walks, one array per recorded n."""

    paths: int
    endpoints: dict = field(default_factory=dict)

    def hits(self, n: int, B) -> int:
        counted, _ = B.classify(self.endpoints[n])
        return int(counted.sum())


def sample_paths(mu: WalkMeasure, n: int | Sequence[int], paths: int, seed: int,
                 product: BCHProduct, workers: int = 1, block: int = 1 << 16) -> SampleState:
    """Endpoints after each n in ``n`` (largest n sets the walk length)."""
    record = sorted({int(n)} if np.isscalar(n) else {int(x) for x in n})
    steps = record[-1]
    S = mu.float_support()
    w = np.array(mu.weights, dtype=np.uint64)
    cum = np.cumsum(w)
    total = int(cum[-1])
    if total >= 2**32:
        raise WalkError("probability denominator too large for 32-bit draws")
    state = SampleState(paths, {k: np.empty((paths, mu.dim)) for k in record})
    def run(b, m):
        start = b * block
        keys = path_keys(seed, start, m)
        X = np.zeros((m, mu.dim))
        if 0 in state.endpoints:
            state.endpoints[0][start : start + m] = X
        for t in range(1, steps + 1):
            idx = step_choices(keys, t, cum, total)
            X = product.multiply_batch(X, S[idx])
            if t in state.endpoints:
                state.endpoints[t][start : start + m] = X
        return m

    map_blocks(run, paths, workers, block)
    return state


def llt_estimate(state, B, n: int, d_G: int) -> Estimate:
    """n^{d(G)/2} · μ^{*n}(B); Monte Carlo states carry a binomial error."""
    scale = float(n) ** (d_G / 2)
    if isinstance(state, ExactDistribution):
        return Estimate(scale * float(state.box_mass(B)), 0.0)
    return binomial_estimate(state.hits(n, B), state.paths, scale)


# -- sub-Laplacian -------------------------------------------------------------------------------
def sublaplacian_coefficients(mu: WalkMeasure, algebra: NilpotentAlgebra):
    """a_ij = Σ μ(s) s_i s_j on the first layer, b_i = Σ μ(s) s_i on the second.

    Warns when a is singular (the support then cannot generate a dense
    subgroup).
    """
    degs = algebra.layer_degrees
    first = [i for i, d in enumerate(degs) if d == 1]
    second = [i for i, d in enumerate(degs) if d == 2]
    zero = mu.spec.zero()
    a = [[sum((p * s[i] * s[j] for s, p in zip(mu.support, mu.probs)), zero) for j in first] for i in first]
    b = [sum((p * s[i] for s, p in zip(mu.support, mu.probs)), zero) for i in second]
    if la.rank(a, len(first)) < len(first):
        warnings.warn("first-layer covariance is singular; the walk's support does not generate a dense subgroup",
                      RuntimeWarning, stacklevel=2)
    return a, b


# -- heat kernel scaling ----------------------------------------------------------------------------
def gaussian_kernel(t, x, variance: float = 1.0):
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    return np.exp(-(x * x) / (2 * variance * t)) / np.sqrt(2 * np.pi * variance * t)


@dataclass(frozen=True)
class ScalingReport:
    max_violation: float
    ts: tuple
    grid: tuple

    @property
    def passed(self) -> bool:
        return self.max_violation < 1e-12


def scaling_check(ts=(2.0, 4.0, 9.0), grid=None, d: int = 1) -> ScalingReport:
    """max |t^{d/2} p_t(δ_√t x) - p_1(x)| for the Gaussian kernel on R."""
    if d != 1:
        raise WalkError("only the abelian Gaussian kernel on R is implemented")
    grid = np.linspace(-3, 3, 601) if grid is None else np.asarray(grid, dtype=float)
    worst = 0.0
    for t in ts:
        lhs = t ** (d / 2) * gaussian_kernel(t, np.sqrt(t) * grid)
        worst = max(worst, float(np.max(np.abs(lhs - gaussian_kernel(1.0, grid)))))
    return ScalingReport(worst, tuple(ts), (float(grid[0]), float(grid[-1]), len(grid)))
