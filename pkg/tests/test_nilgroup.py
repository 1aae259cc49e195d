from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nilfold.filtration import degree_of_subspace
from nilfold.nilgroup import (AlgebraError, BCHProduct, ModeError, NilpotentAlgebra, from_second_kind,
                              second_kind_coordinates)
from nilfold.ring import sqrt2_ring

HEIS = NilpotentAlgebra.heisenberg()
FILIFORM4 = NilpotentAlgebra(4, [(1, 2, 3, 1), (1, 3, 4, 1)], name="filiform4")
FREE23 = NilpotentAlgebra(6, [(1, 2, 4, 1), (1, 3, 5, 1), (2, 3, 6, 1)], name="free(3,2)")
CLASS5 = NilpotentAlgebra(6, [(1, 2, 3, 1), (1, 3, 4, 1), (1, 4, 5, 1), (1, 5, 6, 1), (2, 3, 5, 1), (2, 4, 6, 1)],
                          name="class5")
ALGEBRAS = [HEIS, FILIFORM4, FREE23, CLASS5]
PRODUCTS = {A.name: BCHProduct(A) for A in ALGEBRAS}

small = st.fractions(min_value=-5, max_value=5, max_denominator=6)


def elements(dim):
    return st.tuples(*[small] * dim)


@pytest.mark.parametrize("A", ALGEBRAS, ids=lambda A: A.name)
def test_associativity_exact(A):
    P = PRODUCTS[A.name]

    @settings(max_examples=1000)
    @given(elements(A.dim), elements(A.dim), elements(A.dim))
    def check(x, y, z):
        assert P.multiply(P.multiply(x, y), z) == P.multiply(x, P.multiply(y, z))

    check()


@pytest.mark.parametrize("A", ALGEBRAS, ids=lambda A: A.name)
def test_associativity_real(A):
    P = PRODUCTS[A.name]
    rng = np.random.default_rng(0)
    X, Y, Z = (rng.uniform(-1, 1, (1000, A.dim)) for _ in range(3))
    lhs = P.multiply_batch(P.multiply_batch(X, Y), Z)
    rhs = P.multiply_batch(X, P.multiply_batch(Y, Z))
    assert np.max(np.abs(lhs - rhs)) <= 1e-12


@pytest.mark.parametrize("A", ALGEBRAS, ids=lambda A: A.name)
def test_degree_bound_checked_at_build(A):
    P = PRODUCTS[A.name]
    assert P.degree_checked
    degs = A.coordinate_degrees
    for i, terms in enumerate(P.terms):
        for t in terms:
            dx = sum(a * d for a, d in zip(t.xexp, degs))
            dy = sum(b * d for b, d in zip(t.yexp, degs))
            assert dx >= 1 and dy >= 1 and dx + dy <= degs[i]


@pytest.mark.parametrize("A", ALGEBRAS, ids=lambda A: A.name)
def test_homogeneous_dimension_matches_degree(A):
    whole = [A.basis_vector(k) for k in range(A.dim)]
    assert A.homogeneous_dimension() == degree_of_subspace(whole, A.filtered)


@settings(max_examples=200)
@given(st.sampled_from(ALGEBRAS), st.data(), st.fractions(min_value=Fraction(1, 8), max_value=8))
def test_dilation_is_automorphism_of_graded_limit(A, data, t):
    G = A.graded_limit()
    P = BCHProduct(G)
    degs = G.layer_degrees
    x = data.draw(elements(A.dim))
    y = data.draw(elements(A.dim))
    dil = lambda g: tuple(c * t**d for c, d in zip(g, degs))  # noqa: E731
    assert dil(P.multiply(x, y)) == P.multiply(dil(x), dil(y))


def test_heisenberg_polynomials():
    P = PRODUCTS["heisenberg"]
    n = 3
    assert P.polys[0] == {} and P.polys[1] == {}
    e = lambda *k: tuple(int(j in k) for j in range(2 * n))  # noqa: E731
    assert P.polys[2] == {e(0, 4): Fraction(1, 2), e(1, 3): Fraction(-1, 2)}
    assert P.multiply((1, 0, 0), (0, 1, 0)) == (1, 1, Fraction(1, 2))


def test_abelian_has_no_corrections():
    P = BCHProduct(NilpotentAlgebra.abelian(4))
    assert all(p == {} for p in P.polys)


@given(elements(6))
def test_identity_and_inverse(x):
    P = PRODUCTS["class5"]
    e = P.identity()
    assert P.multiply(x, e) == x and P.multiply(e, x) == x
    assert all(c == 0 for c in P.multiply(x, P.inverse(x)))
    assert P.multiply(P.power(x, 2), P.power(x, 3)) == P.power(x, 5)


def test_homogeneous_dimension_examples():
    assert HEIS.homogeneous_dimension() == 4
    assert NilpotentAlgebra.abelian(5).homogeneous_dimension() == 5
    assert FREE23.homogeneous_dimension() == 9
    assert CLASS5.nil_class == 5


def test_gradation_defect():
    assert HEIS.gradation_defect() == 0
    assert NilpotentAlgebra.abelian(3).gradation_defect() == 0
    # In Heisenberg every complement of the centre is a graded layer; a skewed
    # m_1 only shows a defect once the algebra has class >= 3.
    skew_h = HEIS.with_layers([[[1, 0, 1], [0, 1, 0]], [[0, 0, 1]]])
    assert skew_h.gradation_defect() == 0
    skew = FILIFORM4.with_layers([[[1, 0, 0, 0], [0, 1, 1, 0]], [[0, 0, 1, 0]], [[0, 0, 0, 1]]])
    assert skew.gradation_defect() > 0
    assert FILIFORM4.gradation_defect() == 0


def test_graded_limit():
    assert HEIS.graded_limit().quadruples == HEIS.quadruples
    assert FILIFORM4.graded_limit().quadruples == FILIFORM4.quadruples
    skew = FILIFORM4.with_layers([[[1, 0, 0, 0], [0, 1, 1, 0]], [[0, 0, 1, 0]], [[0, 0, 0, 1]]])
    G = skew.graded_limit()
    assert G.nil_class == 3 and G.gradation_defect() == 0
    rng = np.random.default_rng(1)
    x, y = rng.normal(size=4), rng.normal(size=4)
    D = G.dilations
    limit = np.array(D.coords(G.bracket(D.from_coords(x), D.from_coords(y))), dtype=float)
    errs = [np.linalg.norm(np.array(skew.deformed_bracket(x, y, t), dtype=float) - limit)
            for t in (1e-1, 1e-2, 1e-3, 1e-4)]
    assert errs[-1] < 1e-3
    for a, b in zip(errs, errs[1:]):  # O(t)
        assert b < 0.2 * a


def test_second_kind_coordinates():
    P = PRODUCTS["heisenberg"]
    assert second_kind_coordinates((0, 0, 0), P) == (0, 0, 0)
    assert second_kind_coordinates((0, 0, Fraction(7, 3)), P) == (0, 0, Fraction(7, 3))
    assert second_kind_coordinates((1, 1, 0), P) == (1, 1, Fraction(-1, 2))


@given(elements(6))
def test_second_kind_round_trip(x):
    P = PRODUCTS["class5"]
    assert from_second_kind(second_kind_coordinates(x, P), P) == x


def test_irrational_coordinates():
    R = sqrt2_ring()
    r2 = R.constant("sqrt2")
    P = PRODUCTS["heisenberg"]
    g = P.multiply((r2, R.zero(), R.zero()), (R.zero(), r2, R.zero()))
    assert g[2] == 1


def test_errors():
    with pytest.raises(AlgebraError):  # Jacobi fails
        NilpotentAlgebra(3, [(1, 2, 3, 1), (2, 3, 1, 1)])
    with pytest.raises(AlgebraError):
        NilpotentAlgebra(2, [(1, 1, 2, 1)])
    with pytest.raises(AlgebraError):
        NilpotentAlgebra(2, [(1, 2, 3, 1)])
    chain = [(1, k, k + 1, 1) for k in range(2, 9)]
    with pytest.raises(AlgebraError):  # class 7 exceeds the cap
        BCHProduct(NilpotentAlgebra(9, chain))
    P = PRODUCTS["heisenberg"]
    with pytest.raises(ModeError):
        P.multiply((1, 0, 0), (0.5, 0.0, 0.0))
