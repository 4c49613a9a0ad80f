"""Joint precoder / reflecting-surface optimization for multigroup multicast.

Maximizes the sum over groups of the minimum user rate by alternating
majorization-minimization updates of the base-station precoding matrix and
the reflection coefficients. Two solvers are provided: a convex-subproblem
method (alg1) and a faster closed-form method with extrapolation (alg2),
plus the channel generator, baselines, and a simulation harness.
"""

__version__ = "0.1.0"

from ._kernels import BACKEND

__all__ = ["BACKEND", "__version__"]
