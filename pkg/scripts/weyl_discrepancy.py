"""Discrepancy of k·φ mod 1 over |k| <= n against a grid of intervals.

Prints n, the worst |count/(2n+1) - (b-a)| over the grid, and that value
times n / log n (bounded for badly approximable rotation numbers).
"""

import math

import numpy as np

from nilfold.equidist import BoxRegion, Homomorphism, count_in_fiber
from nilfold.lattice import GeneratingSet, word_ball
from nilfold.nilgroup import BCHProduct, NilpotentAlgebra
from nilfold.ring import golden_ring


def main(n_max=100_000, grid=20):
    R = golden_ring()
    Z = NilpotentAlgebra.abelian(1)
    phi = Homomorphism([["phi"]], Z, Z, R)
    ball = word_ball(GeneratingSet.symmetric([(1,)], R), BCHProduct(Z), n_max)
    edges = np.linspace(0, 1, grid + 1)
    print(f"{'n':>8s} {'discrepancy':>12s} {'D·n/log n':>10s}")
    for n in (10, 100, 1000, 10_000, n_max):
        sub = word_ball(GeneratingSet.symmetric([(1,)], R), BCHProduct(Z), n) if n < n_max else ball
        worst = 0.0
        for i in range(grid):
            for j in range(i + 1, grid + 1):
                B = BoxRegion.interval(edges[i], edges[j], fold=True)
                c = count_in_fiber(sub, phi, B).count
                worst = max(worst, abs(c / len(sub) - B.volume))
        print(f"{n:8d} {worst:12.3e} {worst * n / math.log(n):10.4f}")


if __name__ == "__main__":
    main()
