"""Exact local limit table for the walk {0, ±1, ±√2} on R (lazy mass 1/5).

√n·μ^{*n}(I) should approach |I| / sqrt(2π σ²) with σ² = 6/5.
"""

import math
from fractions import Fraction

from nilfold.randomwalk import FactoredLineWalk


def main():
    fw = FactoredLineWalk(Fraction(1, 5))
    var = float(fw.variance())
    boxes = [(Fraction(-1, 2), Fraction(1, 2)), (Fraction(-1), Fraction(1)), (Fraction(0), Fraction(3))]
    print(f"{'n':>6s} " + " ".join(f"{f'[{a},{b}]':>14s}" for a, b in boxes))
    for n in (50, 100, 200, 500, 1000, 2000):
        vals = [math.sqrt(n) * float(fw.box_mass(n, a, b)) for a, b in boxes]
        print(f"{n:6d} " + " ".join(f"{v:14.6f}" for v in vals))
    limit = [float(b - a) / math.sqrt(2 * math.pi * var) for a, b in boxes]
    print(f"{'limit':>6s} " + " ".join(f"{v:14.6f}" for v in limit))


if __name__ == "__main__":
    main()
