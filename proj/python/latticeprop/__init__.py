"""Lattice correlation propagation engine.

Thin Python surface over the C++ core: lattice construction, forward
propagation, greedy path inference, Markov clustering, training on synthetic
scenes and the box geometry pipeline.
"""

from latticeprop._core import *  # noqa: F401,F403
from latticeprop._core import __version__  # noqa: F401
