"""Truncated Baker-Campbell-Hausdorff series with exact coefficients.

``bch_words(r)`` expands log(exp X exp Y) in the free associative algebra on
{X, Y} up to word length r.  By the Dynkin-Specht-Wever lemma a homogeneous
Lie element P of degree m equals (1/m) times its left-normed bracketing, so
the group law of a class-r algebra is

    Z = sum_w z_w / |w| [[...[w_1, w_2], ...], w_m].
"""

from __future__ import annotations

import math
from fractions import Fraction
from functools import lru_cache

Word = tuple[int, ...]  # 0 stands for X, 1 for Y


def _mul(a: dict, b: dict, r: int) -> dict:
    out: dict = {}
    for wa, ca in a.items():
        for wb, cb in b.items():
            if len(wa) + len(wb) > r:
                continue
            w = wa + wb
            out[w] = out.get(w, 0) + ca * cb
    return {w: c for w, c in out.items() if c}


@lru_cache(maxsize=None)
def bch_words(r: int) -> tuple[tuple[Word, Fraction], ...]:
    """Nonzero coefficients z_w of log(exp X exp Y) for 1 <= |w| <= r."""
    T: dict = {}
    for a in range(r + 1):
        for b in range(r + 1 - a):
            if a + b == 0:
                continue
            T[(0,) * a + (1,) * b] = Fraction(1, math.factorial(a) * math.factorial(b))
    Z: dict = {}
    power = dict(T)
    for m in range(1, r + 1):
        sign = 1 if m % 2 else -1
        for w, c in power.items():
            Z[w] = Z.get(w, 0) + sign * c / m
        power = _mul(power, T, r)
    return tuple(sorted(((w, c) for w, c in Z.items() if c), key=lambda wc: (len(wc[0]), wc[0])))


def dynkin_terms(r: int) -> tuple[tuple[Word, Fraction], ...]:
    """Pairs (w, z_w/|w|) whose left-normed brackets sum to the BCH series."""
    return tuple((w, c / len(w)) for w, c in bch_words(r))


# -- polynomial vectors --------------------------------------------------------
# A polynomial is a dict: exponent tuple (length 2n; x's then y's) -> Fraction.

def poly_mul(p: dict, q: dict) -> dict:
    out: dict = {}
    for ea, ca in p.items():
        for eb, cb in q.items():
            e = tuple(a + b for a, b in zip(ea, eb))
            out[e] = out.get(e, 0) + ca * cb
    return {e: c for e, c in out.items() if c}


def poly_add_into(acc: dict, p: dict, scale=1):
    for e, c in p.items():
        v = acc.get(e, 0) + scale * c
        if v:
            acc[e] = v
        else:
            acc.pop(e, None)


def bracket_polyvec(A: list, B: list, struct) -> list:
    """[A, B]_k = sum_{i,j} c_ij^k A_i B_j for polynomial vectors."""
    n = len(A)
    out = [dict() for _ in range(n)]
    for i in range(n):
        if not A[i]:
            continue
        for j, consts in struct[i].items():
            if not B[j]:
                continue
            prod = poly_mul(A[i], B[j])
            for k, c in consts.items():
                poly_add_into(out[k], prod, c)
    return out


def bch_polynomials(struct, n: int, r: int) -> list[dict]:
    """Z_i(x, y) as polynomials; ``struct[i][j][k] = c_ij^k`` (sparse dicts)."""
    def gen(letter: int) -> list:
        vec = []
        for i in range(n):
            e = [0] * (2 * n)
            e[i + letter * n] = 1
            vec.append({tuple(e): Fraction(1)})
        return vec

    gens = (gen(0), gen(1))
    cache: dict = {}

    def left_normed(w: Word) -> list:
        if w in cache:
            return cache[w]
        if len(w) == 1:
            v = gens[w[0]]
        else:
            v = bracket_polyvec(left_normed(w[:-1]), gens[w[-1]], struct)
        cache[w] = v
        return v

    Z = [dict() for _ in range(n)]
    for w, c in dynkin_terms(r):
        vec = left_normed(w)
        for i in range(n):
            if vec[i]:
                poly_add_into(Z[i], vec[i], c)
    return Z
