"""Exact arithmetic over a user-declared ring of real constants.

A :class:`RingSpec` fixes a basis of monomials ``1, c_1, ..., c_m`` together
with a multiplication table whose entries are rational combinations of the
basis.  An :class:`ExactScalar` is a vector of reduced fractions in that basis,
so structural equality coincides with equality in the ring and hashing never
touches floating point.

Example::

    >>> Q2 = RingSpec({"sqrt2": SQRT2}, {("sqrt2", "sqrt2"): {"1": 2}})
    >>> r2 = Q2.constant("sqrt2")
    >>> (1 + r2) * (1 - r2)
    ExactScalar(-1)
"""

from __future__ import annotations

import math
import re
from decimal import Decimal
from fractions import Fraction
from functools import cached_property
from numbers import Rational
from typing import Iterable, Mapping

SQRT2 = "1.41421356237309504880168872420969807856967187537694807317667973799"
SQRT3 = "1.73205080756887729352744634150587236694280525381038062805580697945"
SQRT6 = "2.44948974278317809819728407470589139196594748065667012843269256725"
GOLDEN = "1.61803398874989484820458683436563811772030917980576286213544862270"

_MIN_DIGITS = 30
_TABLE_TOL = Fraction(1, 10**25)


class RingError(ValueError):
    """Invalid ring declaration or a mix of incompatible scalars."""


def _as_fraction(value) -> Fraction:
    if isinstance(value, bool):
        raise RingError("booleans are not ring scalars")
    if isinstance(value, (int, Fraction)):
        return Fraction(value)
    if isinstance(value, Rational):
        return Fraction(value.numerator, value.denominator)
    if isinstance(value, str):
        return Fraction(value.strip())
    raise RingError(f"expected a rational value, got {type(value).__name__}")


def _significant_digits(text: str) -> int:
    digits = re.sub(r"[^0-9]", "", text.split("e")[0].split("E")[0])
    return len(digits.lstrip("0"))


class RingSpec:
    """Basis monomials, their decimal approximations and the product table.

    ``constants`` maps each non-unit basis monomial to a decimal string with at
    least 30 significant digits.  ``products`` maps unordered pairs of non-unit
    monomials to their expansion in the basis; every pair must be present.
    """

    def __init__(
        self,
        constants: Mapping[str, str] | None = None,
        products: Mapping[tuple[str, str], Mapping[str, object]] | None = None,
    ):
        constants = dict(constants or {})
        products = dict(products or {})
        if "1" in constants:
            raise RingError("basis monomial '1' is implicit and cannot be redeclared")
        self.names: tuple[str, ...] = ("1",) + tuple(constants)
        self._index = {name: i for i, name in enumerate(self.names)}
        self.decimals: tuple[str, ...] = ("1",) + tuple(str(v) for v in constants.values())
        for name, text in zip(self.names[1:], self.decimals[1:]):
            if _significant_digits(text) < _MIN_DIGITS:
                raise RingError(
                    f"constant {name!r} needs >= {_MIN_DIGITS} significant digits, got {text!r}"
                )
        self.approx: tuple[Fraction, ...] = tuple(Fraction(Decimal(t)) for t in self.decimals)
        self.floats: tuple[float, ...] = tuple(float(a) for a in self.approx)
        self.table = self._build_table(products)
        self._check_table()

    # -- construction -----------------------------------------------------
    def _vector(self, expansion: Mapping[str, object]) -> tuple[Fraction, ...]:
        out = [Fraction(0)] * len(self.names)
        for name, coeff in expansion.items():
            if name not in self._index:
                raise RingError(f"product lands outside the declared basis: {name!r}")
            out[self._index[name]] += _as_fraction(coeff)
        return tuple(out)

    def _build_table(self, products):
        R = len(self.names)
        unit = [tuple(Fraction(int(k == m)) for m in range(R)) for k in range(R)]
        table = [[None] * R for _ in range(R)]
        for k in range(R):
            table[0][k] = unit[k]
            table[k][0] = unit[k]
        for (a, b), expansion in products.items():
            if a not in self._index or b not in self._index or "1" in (a, b):
                raise RingError(f"bad product key ({a!r}, {b!r})")
            i, j = self._index[a], self._index[b]
            vec = self._vector(expansion)
            for p, q in ((i, j), (j, i)):
                if table[p][q] is not None and table[p][q] != vec:
                    raise RingError(f"multiplication table is not commutative at ({a}, {b})")
                table[p][q] = vec
        missing = [
            (self.names[i], self.names[j])
            for i in range(1, R)
            for j in range(i, R)
            if table[i][j] is None
        ]
        if missing:
            raise RingError(f"multiplication table does not close; missing products {missing}")
        return tuple(tuple(row) for row in table)

    def _check_table(self):
        R = len(self.names)
        for i in range(1, R):
            for j in range(i, R):
                lhs = self.approx[i] * self.approx[j]
                rhs = sum(c * a for c, a in zip(self.table[i][j], self.approx))
                if abs(lhs - rhs) > _TABLE_TOL:
                    raise RingError(
                        f"{self.names[i]}*{self.names[j]} disagrees with the decimal "
                        f"approximations by {float(abs(lhs - rhs)):.3e}"
                    )
        # the table must define an associative product on basis triples
        for i in range(1, R):
            for j in range(1, R):
                for k in range(1, R):
                    left = self._mul_vec(self._mul_vec(_unit(R, i), _unit(R, j)), _unit(R, k))
                    right = self._mul_vec(_unit(R, i), self._mul_vec(_unit(R, j), _unit(R, k)))
                    if left != right:
                        raise RingError(
                            f"table is not associative on ({self.names[i]}, "
                            f"{self.names[j]}, {self.names[k]})"
                        )

    def _mul_vec(self, a, b):
        R = len(self.names)
        out = [Fraction(0)] * R
        for i, ai in enumerate(a):
            if not ai:
                continue
            for j, bj in enumerate(b):
                if not bj:
                    continue
                c = ai * bj
                for m, t in enumerate(self.table[i][j]):
                    if t:
                        out[m] += c * t
        return tuple(out)

    # -- identity ---------------------------------------------------------
    @cached_property
    def fingerprint(self) -> tuple:
        return (self.names, self.decimals, self.table)

    def __eq__(self, other):
        return isinstance(other, RingSpec) and (
            self is other or self.fingerprint == other.fingerprint
        )

    def __hash__(self):
        return hash(self.fingerprint)

    def __repr__(self):
        return f"RingSpec({', '.join(self.names)})"

    @property
    def rank(self) -> int:
        return len(self.names)

    @cached_property
    def is_rational(self) -> bool:
        return self.rank == 1

    # -- scalar factories -------------------------------------------------
    def scalar(self, value) -> "ExactScalar":
        """Coerce ``value`` into the ring.

        Accepts ints, fractions, rational strings ("3/2"), linear expressions in
        the basis names ("3/2 + 2*sqrt2"), mappings ``{name: coeff}`` and
        existing scalars of this ring.  Floats are refused.
        """
        if isinstance(value, ExactScalar):
            if value.spec != self:
                raise RingError("scalar belongs to a different ring")
            return value
        if isinstance(value, float):
            raise RingError("floating values cannot enter an exact ring")
        if isinstance(value, Mapping):
            return ExactScalar(self, self._vector(value))
        if isinstance(value, str):
            return self.parse(value)
        q = _as_fraction(value)
        return ExactScalar(self, (q,) + (Fraction(0),) * (self.rank - 1))

    def constant(self, name: str) -> "ExactScalar":
        return ExactScalar(self, _unit(self.rank, self._index[name]))

    def zero(self) -> "ExactScalar":
        return ExactScalar(self, (Fraction(0),) * self.rank)

    def one(self) -> "ExactScalar":
        return ExactScalar(self, _unit(self.rank, 0))

    _TERM = re.compile(r"\s*([+-]?)\s*([^+\-\s][^+\-]*)")

    def parse(self, text: str) -> "ExactScalar":
        text = text.strip()
        if not text:
            raise RingError("empty scalar expression")
        coeffs = [Fraction(0)] * self.rank
        pos = 0
        # split on top-level + and - while keeping signs of exponents-free rationals
        for m in self._TERM.finditer(text):
            if m.start() != pos and text[pos : m.start()].strip():
                raise RingError(f"cannot parse scalar {text!r}")
            pos = m.end()
            sign = -1 if m.group(1) == "-" else 1
            term = m.group(2).strip()
            coeff, name = Fraction(1), "1"
            if "*" in term:
                left, right = (s.strip() for s in term.split("*", 1))
                if right in self._index:
                    coeff, name = Fraction(left), right
                elif left in self._index:
                    coeff, name = Fraction(right), left
                else:
                    raise RingError(f"unknown monomial in {term!r}")
            elif term in self._index:
                name = term
            else:
                try:
                    coeff = Fraction(term)
                except ValueError as exc:
                    raise RingError(f"cannot parse scalar term {term!r}") from exc
            coeffs[self._index[name]] += sign * coeff
        if text[pos:].strip():
            raise RingError(f"cannot parse scalar {text!r}")
        return ExactScalar(self, tuple(coeffs))

    def index(self, name: str) -> int:
        return self._index[name]

    @cached_property
    def common_table(self) -> tuple[int, tuple]:
        """Table as integers over one common denominator: ``(D, T_int)``."""
        den = 1
        for row in self.table:
            for vec in row:
                for c in vec:
                    den = math.lcm(den, c.denominator)
        tint = tuple(
            tuple(tuple(int(c * den) for c in vec) for vec in row) for row in self.table
        )
        return den, tint

    def to_config(self) -> dict:
        products = []
        for i in range(1, self.rank):
            for j in range(i, self.rank):
                expansion = {
                    self.names[m]: str(c) for m, c in enumerate(self.table[i][j]) if c
                }
                products.append([self.names[i], self.names[j], expansion])
        return {
            "constants": dict(zip(self.names[1:], self.decimals[1:])),
            "products": products,
        }

    @classmethod
    def from_config(cls, cfg: Mapping | None) -> "RingSpec":
        if not cfg:
            return RATIONALS
        products = {}
        raw = cfg.get("products", [])
        if isinstance(raw, Mapping):
            raw = [k.split("*") + [v] for k, v in raw.items()]
        for entry in raw:
            if len(entry) != 3:
                raise RingError(f"product rule must be [a, b, expansion], got {entry!r}")
            a, b, expansion = entry
            products[(a.strip(), b.strip())] = expansion
        return cls(cfg.get("constants", {}), products)


def _unit(R: int, k: int) -> tuple[Fraction, ...]:
    return tuple(Fraction(int(i == k)) for i in range(R))


class ExactScalar:
    """Immutable ring element with canonical (fully reduced) coefficients."""

    __slots__ = ("spec", "coeffs", "_hash", "_value")

    def __init__(self, spec: RingSpec, coeffs: Iterable):
        coeffs = tuple(_as_fraction(c) for c in coeffs)
        if len(coeffs) != spec.rank:
            raise RingError(f"expected {spec.rank} coefficients, got {len(coeffs)}")
        self.spec = spec
        self.coeffs = coeffs
        self._hash = None
        self._value = None

    # -- coercion ---------------------------------------------------------
    def _coerce(self, other) -> "ExactScalar":
        if isinstance(other, ExactScalar):
            if other.spec is not self.spec and other.spec != self.spec:
                raise RingError("cannot combine scalars from different ring specs")
            return other
        if isinstance(other, float):
            raise RingError("floating value mixed with an exact scalar")
        return self.spec.scalar(other)

    # -- arithmetic -------------------------------------------------------
    def __add__(self, other):
        try:
            o = self._coerce(other)
        except RingError:
            if isinstance(other, float):
                raise
            return NotImplemented
        return ExactScalar(self.spec, tuple(a + b for a, b in zip(self.coeffs, o.coeffs)))

    __radd__ = __add__

    def __neg__(self):
        return ExactScalar(self.spec, tuple(-a for a in self.coeffs))

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)) and not isinstance(other, bool):
            q = Fraction(other)
            return ExactScalar(self.spec, tuple(a * q for a in self.coeffs))
        o = self._coerce(other)
        return ExactScalar(self.spec, self.spec._mul_vec(self.coeffs, o.coeffs))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, ExactScalar):
            if not other.is_rational:
                raise RingError("division is only defined by rational scalars")
            other = other.coeffs[0]
        q = _as_fraction(other)
        return ExactScalar(self.spec, tuple(a / q for a in self.coeffs))

    def __pow__(self, k: int):
        if not isinstance(k, int) or k < 0:
            raise RingError("only non-negative integer powers are supported")
        out = self.spec.one()
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    # -- comparison and hashing ------------------------------------------
    def __eq__(self, other):
        if isinstance(other, ExactScalar):
            return self.spec == other.spec and self.coeffs == other.coeffs
        if isinstance(other, (int, Fraction)) and not isinstance(other, bool):
            return self.is_rational and self.coeffs[0] == other
        return NotImplemented

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(self.hash_key())
        return self._hash

    def hash_key(self) -> tuple:
        """Key built from the exact coefficients only."""
        return (self.spec.names, tuple((c.numerator, c.denominator) for c in self.coeffs))

    @property
    def is_rational(self) -> bool:
        return not any(self.coeffs[1:])

    @property
    def is_zero(self) -> bool:
        return not any(self.coeffs)

    def __bool__(self):
        return not self.is_zero

    def to_fraction(self) -> Fraction:
        if not self.is_rational:
            raise RingError(f"{self!r} is not rational")
        return self.coeffs[0]

    def evaluate(self) -> float:
        """Correctly rounded double of sum(coeff_i * approx_i)."""
        if self._value is None:
            self._value = float(sum(c * a for c, a in zip(self.coeffs, self.spec.approx)))
        return self._value

    __float__ = evaluate

    def __repr__(self):
        parts = []
        for name, c in zip(self.spec.names, self.coeffs):
            if not c:
                continue
            if name == "1":
                parts.append(str(c))
            elif c == 1:
                parts.append(name)
            else:
                parts.append(f"{c}*{name}")
        return f"ExactScalar({' + '.join(parts) or '0'})"

    def to_text(self) -> str:
        """Rational coefficients in basis order, comma separated."""
        return ",".join(str(c) for c in self.coeffs)


RATIONALS = RingSpec()


def sqrt2_ring() -> RingSpec:
    return RingSpec({"sqrt2": SQRT2}, {("sqrt2", "sqrt2"): {"1": 2}})


def golden_ring() -> RingSpec:
    return RingSpec({"phi": GOLDEN}, {("phi", "phi"): {"1": 1, "phi": 1}})


def sqrt23_ring() -> RingSpec:
    """Q(sqrt2, sqrt3) with basis 1, sqrt2, sqrt3, sqrt6."""
    return RingSpec(
        {"sqrt2": SQRT2, "sqrt3": SQRT3, "sqrt6": SQRT6},
        {
            ("sqrt2", "sqrt2"): {"1": 2},
            ("sqrt3", "sqrt3"): {"1": 3},
            ("sqrt6", "sqrt6"): {"1": 6},
            ("sqrt2", "sqrt3"): {"sqrt6": 1},
            ("sqrt2", "sqrt6"): {"sqrt3": 2},
            ("sqrt3", "sqrt6"): {"sqrt2": 3},
        },
    )
