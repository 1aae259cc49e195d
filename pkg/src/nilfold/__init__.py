"""Exact nilpotent group arithmetic, lattice balls, equidistribution and
local limit experiments."""

from .ring import RATIONALS, ExactScalar, RingSpec
from .nilgroup import BCHProduct, NilpotentAlgebra
from .filtration import DilationGroup, FilteredSpace
from .quasinorm import QuasiNorm
from .lattice import GeneratingSet, word_ball
from .equidist import BoxRegion, Homomorphism
from .randomwalk import WalkMeasure

__version__ = "0.1.0"
