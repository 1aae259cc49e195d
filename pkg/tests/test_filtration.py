import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nilfold import linalg as la
from nilfold.filtration import (DegreeError, DilationGroup, FilteredSpace, c_M_constant, degree_of_subspace,
                                degree_of_vector, degree_of_wedge, dilated_wedge_norms, is_delta_invariant,
                                limit_subspace)
from nilfold.nilgroup import NilpotentAlgebra
from nilfold.ring import sqrt2_ring

H = NilpotentAlgebra.heisenberg()
F_H = H.filtered
D_H = H.dilations
e1, e2, e3 = [1, 0, 0], [0, 1, 0], [0, 0, 1]


def _full_rank(rng, rows, n, lo=-3, hi=3):
    while True:
        M = rng.integers(lo, hi + 1, (rows, n)).tolist()
        if la.rank(M, n) == rows:
            return M


def random_filtered(rng, max_dim=6):
    """Nested filtration V_1 = V ⊋ ... ⊋ V_r given by tails of a random
    invertible integer basis."""
    n = int(rng.integers(2, max_dim + 1))
    B = _full_rank(rng, n, n)
    cuts = sorted({int(c) for c in rng.integers(1, n, int(rng.integers(0, n)))})
    dims = [n] + [n - c for c in cuts]
    return FilteredSpace(n, [B[n - d:] for d in dims])


@st.composite
def filtered_with_subspace(draw):
    rng = np.random.default_rng(draw(st.integers(0, 2**32 - 1)))
    F = random_filtered(rng)
    k = int(rng.integers(1, F.dim + 1))
    return F, _full_rank(rng, k, F.dim, -4, 4)


def test_degree_of_vector_examples():
    assert degree_of_vector(e3, F_H) == 2
    assert degree_of_vector([1, 0, 1], F_H) == 1
    F = NilpotentAlgebra.abelian(2).filtered
    assert degree_of_vector([3, -1], F) == 1
    with pytest.raises(DegreeError):
        degree_of_vector([0, 0, 0], F_H)


def test_degree_of_wedge_examples():
    assert degree_of_wedge([e1, e3], F_H) == 3
    assert degree_of_wedge([e1, e2, e3], F_H) == 4
    assert degree_of_wedge([[1, 0, 1], e3], F_H) == 3
    with pytest.raises(DegreeError):
        degree_of_wedge([e1, [2, 0, 0]], F_H)


def test_degree_of_subspace_examples():
    R = sqrt2_ring()
    r2 = R.constant("sqrt2")
    M = [[-r2, 1, 0], [0, 0, 1]]
    assert degree_of_subspace(M, F_H) == 3
    assert degree_of_subspace([e1, e2, e3], F_H) == H.homogeneous_dimension() == 4
    assert degree_of_subspace([e3], F_H) == 2 * 1
    assert degree_of_subspace([[0, 0, 0]], F_H) == 0


@settings(max_examples=200)
@given(filtered_with_subspace())
def test_wedge_and_subspace_degree_agree(case):
    F, W = case
    assert degree_of_wedge(W, F) == degree_of_subspace(W, F)


@settings(max_examples=100)
@given(filtered_with_subspace(), st.data())
def test_degree_invariant_under_change_of_basis(case, data):
    F, W = case
    k = len(W)
    G = _full_rank(np.random.default_rng(data.draw(st.integers(0, 2**32 - 1))), k, k)
    W2 = [[sum(G[a][b] * W[b][j] for b in range(k)) for j in range(F.dim)] for a in range(k)]
    assert degree_of_subspace(W2, F) == degree_of_subspace(W, F)
    assert degree_of_wedge(W2, F) == degree_of_wedge(W, F)


@settings(max_examples=100)
@given(filtered_with_subspace())
def test_dilated_wedge_has_finite_nonzero_limit_exactly_at_its_degree(case):
    F, W = case
    D = DilationGroup(F)
    d = degree_of_wedge(W, F)
    # the first correction is relative order t^2 times a ratio of minors, which
    # for unlucky integer bases exceeds 1e-6 at t = 1e-4; one more point settles it
    ts = (1e-2, 1e-4, 1e-6, 1e-8)
    at = dilated_wedge_norms(W, D, d, ts).norms
    assert at[-1] > 0
    assert abs(at[-1] / at[-2] - 1) < 1e-6
    above = dilated_wedge_norms(W, D, d + 1, ts).norms  # blows up like 1/t
    assert above[-1] > 1e3 * above[0]
    if d > 0:
        below = dilated_wedge_norms(W, D, d - 1, ts).norms  # vanishes like t
        assert below[-1] < 1e-3 * below[0]


@settings(max_examples=100)
@given(filtered_with_subspace(), st.fractions(min_value=Fraction(1, 10), max_value=10))
def test_limit_subspace_is_dilation_invariant(case, t):
    F, W = case
    D = DilationGroup(F)
    L = limit_subspace(W, D)
    assert is_delta_invariant(L, D)
    k = la.rank(L, F.dim)
    assert k == len(W)
    for v in L:
        assert la.rank(L + [D.dilate(v, t)], F.dim) == k
    assert degree_of_subspace(L, F) == degree_of_subspace(W, F)


@settings(max_examples=100)
@given(filtered_with_subspace())
def test_c_M_positive(case):
    F, W = case
    assert c_M_constant(W, DilationGroup(F)) > 0


def test_limit_subspace_examples():
    assert la.rank(limit_subspace([[1, 0, 1]], D_H) + [e1], 3) == 1
    R = sqrt2_ring()
    r2 = R.constant("sqrt2")
    M = [[-r2, 1, 0], [0, 0, 1]]
    L = limit_subspace(M, D_H)
    assert la.intersection_dim(L, M, 3) == 2
    Wh = [e1, e3]
    assert la.intersection_dim(limit_subspace(Wh, D_H), Wh, 3) == 2


def test_c_M_examples():
    assert c_M_constant([e1, e3], D_H) == 1
    assert c_M_constant([e1, e2, e3], D_H) == 1
    assert c_M_constant([[1, 0, 1]], D_H) == pytest.approx(math.sqrt(2), abs=1e-15)
    # δ-invariant but non-orthonormal basis still gives 1 (ratio is basis free)
    assert c_M_constant([[2, 1, 0], [0, 0, 3]], D_H) == pytest.approx(1.0)


def test_filtration_errors():
    with pytest.raises(DegreeError):
        FilteredSpace(2, [[[1, 0]]])  # V_1 is not the whole space
    with pytest.raises(DegreeError):
        FilteredSpace(3, [[e1, e2, e3], [e1, e2], [e3]])  # not nested
    with pytest.raises(DegreeError):
        DilationGroup(F_H, [[e1, [0, 1, 1]], [[1, 1, 0]]])  # m_2 not in V_2


def test_skewed_layers_are_allowed():
    D = DilationGroup(F_H, [[e1, [0, 1, 1]], [e3]])
    assert D.vector_degree([0, 1, 1]) == 1
    assert D.vector_degree(e2) == 1
    assert np.allclose(np.array(D.dilate(e2, Fraction(2)), dtype=float), [0, 2, -2])  # e_2 = (e_2+e_3) - e_3
