import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nilfold import linalg as la
from nilfold.filtration import limit_subspace
from nilfold.mc import combined_se
from nilfold.nilgroup import BCHProduct, NilpotentAlgebra
from nilfold.quasinorm import (AuditTolerances, NotSubalgebraError, QuasiNorm, QuasiNormBalls, QuasiNormError,
                               SpikedBalls, _pair_sample, ball_volume_on_subgroup, guivarch_rescale,
                               limit_volume_constant, nicely_growing_audit, triangle_defect)
from nilfold.ring import sqrt2_ring

HEIS = NilpotentAlgebra.heisenberg()
P_H = BCHProduct(HEIS)
FILIFORM4 = NilpotentAlgebra(4, [(1, 2, 3, 1), (1, 3, 4, 1)])
CLASS5 = NilpotentAlgebra(6, [(1, 2, 3, 1), (1, 3, 4, 1), (1, 4, 5, 1), (1, 5, 6, 1), (2, 3, 5, 1), (2, 4, 6, 1)])

small = st.fractions(min_value=-20, max_value=20, max_denominator=7)


@settings(max_examples=300)
@given(st.sampled_from([HEIS, FILIFORM4, CLASS5]), st.data(),
       st.fractions(min_value=Fraction(1, 20), max_value=20, max_denominator=20),
       st.sampled_from(["sup", "euclidean"]))
def test_homogeneity_exact(A, data, t, kind):
    Q = QuasiNorm(A, [kind] * A.nil_class, [Fraction(k + 1, 2) for k in range(A.nil_class)])
    x = data.draw(st.tuples(*[small] * A.dim))
    # |δ_t x|^{2L} = t^{2L} |x|^{2L} exactly
    assert Q.power_exact(Q.dilate(x, t)) == t ** (2 * Q.L) * Q.power_exact(x)
    assert Q(Q.dilate(x, t)) == pytest.approx(float(t) * Q(x), rel=1e-15, abs=0)


def test_norm_examples():
    Q = QuasiNorm(HEIS)
    assert Q((0, 0, 0)) == 0
    assert Q((0, 0, 4)) == 2
    x = (Fraction(3), Fraction(-1), Fraction(5))
    assert Q(Q.dilate(x, 2)) == 2 * Q(x)


def test_quasinorms_are_equivalent():
    Qs = QuasiNorm(HEIS, ["sup", "sup"])
    Qe = QuasiNorm(HEIS, ["euclidean", "euclidean"], [Fraction(1, 3), 5])
    rng = np.random.default_rng(3)
    X = rng.uniform(-1, 1, (10_000, 3))
    ratios = []
    for s in (1.0, 10.0, 100.0):
        Y = Qs.dilate_batch(X, s)
        r = Qs.batch(Y) / Qe.batch(Y)
        assert np.all(np.isfinite(r)) and r.min() > 0
        ratios.append((r.min(), r.max()))
    for lo, hi in ratios[1:]:
        assert lo == pytest.approx(ratios[0][0], rel=1e-9)
        assert hi == pytest.approx(ratios[0][1], rel=1e-9)


def test_norm_continuity_trend():
    Q = QuasiNorm(HEIS)
    rng = np.random.default_rng(4)
    fam = QuasiNormBalls(Q)
    m = 20_000
    C = 10.0
    Y = fam.boundary_points(1.0, m, rng)
    Y = Q.dilate_batch(Y, C * 10 ** rng.uniform(0, 2, m))
    ny = Q.batch(Y)
    eps = []
    for delta in (0.1, 0.03, 0.01):
        X = fam.boundary_points(1.0, m, rng)
        X = Q.dilate_batch(X, delta * ny * rng.uniform(0, 1, m))
        eps.append(float(np.max(np.abs(Q.batch(P_H.multiply_batch(X, Y)) - ny) / ny)))
    assert eps[0] > eps[1] > eps[2]


def _closure(A, rows):
    rows = la.row_basis(rows, A.dim)
    while True:
        new = la.row_basis(rows + [A.bracket(u, v) for u in rows for v in rows], A.dim)
        if len(new) == len(rows):
            return rows
        rows = new


@settings(max_examples=60)
@given(st.integers(0, 2**32 - 1))
def test_limit_subalgebra_closed_under_graded_bracket(seed):
    rng = np.random.default_rng(seed)
    skew = FILIFORM4.with_layers([[[1, 0, 0, 0], [0, 1, 1, 0]], [[0, 0, 1, 0]], [[0, 0, 0, 1]]])
    A = [skew, CLASS5, HEIS][seed % 3]
    k = int(rng.integers(1, 3))
    M = _closure(A, rng.integers(-3, 4, (k, A.dim)).tolist())
    if not M:
        return
    D = A.dilations
    Minf = limit_subspace(M, D)
    G = A.graded_limit()  # written in the layered basis
    assert G.layer_bracket_closed([D.coords(v) for v in Minf])


def test_guivarch_rescale():
    Qa = QuasiNorm(NilpotentAlgebra.abelian(3))
    X, Y = _pair_sample(Qa, 2000, 0)
    assert triangle_defect(Qa, BCHProduct(Qa.algebra), X, Y).c == 0
    bad = QuasiNorm(HEIS, ["sup", "sup"], [1, 100])
    before = triangle_defect(bad, P_H, *_pair_sample(bad, 10_000, 0)).c
    good, after = guivarch_rescale(bad, P_H, samples=10_000, seed=0)
    assert before > 5
    assert after == 0
    assert good.weights[1] < 100


def test_ball_volume_examples():
    Q1 = QuasiNorm(NilpotentAlgebra.abelian(1))
    assert ball_volume_on_subgroup(Q1, [[1]], 3.0, 10_000, 0).value == pytest.approx(6.0)
    Q = QuasiNorm(HEIS)
    for t in (1.5, 4.0):
        v = ball_volume_on_subgroup(Q, [[0, 0, 1]], t, 100_000, 1)
        assert abs(v.value - 2 * t * t) <= 3 * v.se + 1e-8 * t * t  # LP box is padded by 1e-9
    Qe = QuasiNorm(HEIS, ["euclidean", "sup"])
    a = ball_volume_on_subgroup(Qe, [[1, 0, 0], [0, 1, 0], [0, 0, 1]], 3.0, 400_000, 2)
    b = ball_volume_on_subgroup(Qe, [[1, 0, 0], [0, 1, 0], [0, 0, 1]], 6.0, 400_000, 3)
    assert abs(b.value / a.value - 2**4) <= 3 * 16 * math.hypot(a.se / a.value, b.se / b.value)
    assert abs(a.value - 2 * math.pi * 3.0**4) <= 3 * a.se


def test_subgroup_must_be_subalgebra():
    Q = QuasiNorm(HEIS)
    with pytest.raises(NotSubalgebraError):
        ball_volume_on_subgroup(Q, [[1, 0, 0], [0, 1, 0]], 2.0, 1000, 0)
    with pytest.raises(QuasiNormError):
        QuasiNorm(HEIS.with_layers([[[1, 0, 1], [0, 1, 0]], [[0, 0, 1]]]))


def test_limit_volume_examples():
    Q = QuasiNorm(HEIS)
    rep = limit_volume_constant(Q, [[0, 0, 1]], [4, 8, 16, 32], samples=100_000, seed=0)
    assert rep.passed and rep.direct.value == pytest.approx(2.0)
    r2 = sqrt2_ring().constant("sqrt2")
    rep = limit_volume_constant(Q, [[-r2, 1, 0], [0, 0, 1]], [4, 8, 16, 32], samples=200_000, seed=0)
    assert rep.passed and rep.degree == 3
    # non-degenerate Monte Carlo: round layer-1 norm, whole group
    Qe = QuasiNorm(HEIS, ["euclidean", "sup"])
    rep = limit_volume_constant(Qe, [[1, 0, 0], [0, 1, 0], [0, 0, 1]], [2, 4, 8, 16], samples=400_000, seed=0)
    assert rep.passed
    assert 0 < rep.direct.se and abs(rep.direct.value - 2 * math.pi) <= 3 * rep.direct.se
    assert abs(rep.direct.value - rep.predicted.value) <= 3 * combined_se(rep.direct.se, rep.predicted.se)


FAST = AuditTolerances(points=1000, lower_points=200, vol_samples=50_000)


def test_audit_abelian_euclidean():
    A = NilpotentAlgebra.abelian(2)
    Q = QuasiNorm(A, ["euclidean"])
    rep = nicely_growing_audit(QuasiNormBalls(Q), BCHProduct(A), subgroups=[[[1, 0], [0, 1]]], tol=FAST)
    assert rep.passed, rep.lines()
    eps = rep["ii"].values["eps"]
    assert eps[-1] * 80 == pytest.approx(eps[0] * 10, rel=0.3)  # O(1/t)
    assert rep["iv"].values["alpha"][-1] == pytest.approx(2.0, abs=0.05)


def test_audit_heisenberg_and_counterexample():
    Q = QuasiNorm(HEIS)
    rep = nicely_growing_audit(QuasiNormBalls(Q), P_H, subgroups=[[[0, 0, 1]]], tol=FAST)
    assert rep.passed, rep.lines()
    bad = nicely_growing_audit(SpikedBalls(Q), P_H, tol=FAST)
    assert not bad["ii"].passed and bad["ii"].witness is not None
    assert bad["i"].passed
