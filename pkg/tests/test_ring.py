from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nilfold.ring import (RATIONALS, SQRT2, ExactScalar, RingError, RingSpec, golden_ring, sqrt2_ring,
                          sqrt23_ring)

R2 = sqrt2_ring()
R23 = sqrt23_ring()
GOLD = golden_ring()

fractions = st.fractions(min_value=-1000, max_value=1000, max_denominator=50)


def scalars(spec):
    return st.lists(fractions, min_size=spec.rank, max_size=spec.rank).map(lambda c: ExactScalar(spec, c))


@settings(max_examples=1000)
@given(scalars(R23), scalars(R23), scalars(R23))
def test_ring_axioms(a, b, c):
    assert (a * b) * c == a * (b * c)
    assert a * (b + c) == a * b + a * c
    assert a * b == b * a
    assert a + b == b + a
    assert (a - b) + b == a


@settings(max_examples=300)
@given(scalars(R23), scalars(R23))
def test_evaluate_is_homomorphism(a, b):
    assert abs((a + b).evaluate() - (a.evaluate() + b.evaluate())) <= 1e-12 * max(1.0, abs(a.evaluate()) + abs(b.evaluate()))
    prod = (a * b).evaluate()
    assert abs(prod - a.evaluate() * b.evaluate()) <= 1e-12 * max(1.0, abs(a.evaluate() * b.evaluate()), 1e3)


@given(scalars(R2), scalars(R2))
def test_hash_key_injective(a, b):
    assert (a.hash_key() == b.hash_key()) == (a == b)


def test_multiplication_examples():
    r2 = R2.constant("sqrt2")
    assert r2 * r2 == 2
    assert (1 + r2) * (1 - r2) == -1
    phi = GOLD.constant("phi")
    assert phi * phi == phi + 1


def test_evaluate_examples():
    assert R2.scalar(1).evaluate() == 1.0
    assert abs(R2.constant("sqrt2").evaluate() - 1.4142135623730951) < 1e-16
    x = R2.parse("3/2 + 2*sqrt2")
    assert x.evaluate() == pytest.approx(4.32842712474619, abs=1e-14)
    assert x.evaluate() == float(Fraction(3, 2) + 2 * Fraction(SQRT2))


def test_hash_key_examples():
    r2 = R2.constant("sqrt2")
    assert (Fraction(1, 2) + r2).hash_key() == (r2 + Fraction(1, 2)).hash_key()
    assert R2.scalar(Fraction(2, 4)).hash_key() == R2.scalar(Fraction(1, 2)).hash_key()
    assert r2.hash_key() != R2.scalar(Fraction("1.41421356")).hash_key()


def test_floats_are_refused():
    with pytest.raises(RingError):
        R2.scalar(1.5)
    with pytest.raises(RingError):
        R2.constant("sqrt2") + 0.5


def test_spec_validation():
    with pytest.raises(RingError):
        RingSpec({"s": "1.41"}, {("s", "s"): {"1": 2}})  # too few digits
    with pytest.raises(RingError):
        RingSpec({"s": SQRT2}, {("s", "s"): {"1": 3}})  # inconsistent with the decimal
    with pytest.raises(RingError):
        RingSpec({"s": SQRT2}, {})  # products not closed


def test_config_round_trip():
    for spec in (RATIONALS, R2, R23, GOLD):
        assert RingSpec.from_config(spec.to_config()) == spec


def test_division_by_rationals_only():
    r2 = R2.constant("sqrt2")
    assert r2 / 2 * 2 == r2
    with pytest.raises(RingError):
        R2.one() / r2
