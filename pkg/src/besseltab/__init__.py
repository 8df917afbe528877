"""Table-driven evaluation of Bessel functions via nonoscillatory phase
functions and piecewise bivariate Chebyshev expansions."""

from besseltab.cheb import (
    ChebGrid,
    UnivariateExpansion,
    PiecewiseChebFn,
    BivariateExpansion,
    CompressedBivariateExpansion,
    cheb_nodes,
)

__version__ = "0.1.0"
