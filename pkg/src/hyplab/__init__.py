"""Numerical laboratory for weighted resolvent estimates of asymptotically
hyperbolic model operators.

The package decomposes a model Laplacian on a funnel end into radial mode
operators, builds the smooth weight scale and escape-function conjugate
operators used in commutator positivity arguments, and measures weighted
resolvent norms across an energy ladder.
"""

from hyplab.errors import (
    ConfigError,
    FlowExitsGrid,
    NumericalFailure,
    RegimeError,
)

__all__ = [
    "ConfigError",
    "FlowExitsGrid",
    "NumericalFailure",
    "RegimeError",
    "__version__",
]

__version__ = "0.1.0"
