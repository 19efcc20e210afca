"""Fractional diffusion on [-1, 1] with Grünwald-type boundary conditions.

Submodules:

``fraccalc``    Grünwald weights, power functions, H series
``grid``        grids, projection and grid functions
``generators``  rate matrices and λ-interpolated transition operators
``semigroup``   forward/backward evolution, resolvents, stopped process
``stochastic``  exact path simulation and empirical estimators
``verify``      identities, probes and convergence studies
``cli``         command-line front end
"""

from .generators import SUPPORTED_PAIRS, BoundaryPair, rate_matrix, transition_operator
from .grid import C0, L1, Grid, GridFunction
from .semigroup import EvolutionProblem, evolve, make_initial, semigroup_apply

__version__ = "0.1.0"

__all__ = [
    "BoundaryPair", "C0", "EvolutionProblem", "Grid", "GridFunction", "L1", "SUPPORTED_PAIRS",
    "evolve", "make_initial", "rate_matrix", "semigroup_apply", "transition_operator",
]
