"""Complex linear-algebra kernels shared by every other module.

Only two contracts live here: the largest eigenvalue of a Hermitian matrix
(power iteration, no general eigendecomposition) and the smoothed minimum
used by the log-sum-exp lower bound. Everything is a pure function.
"""

import numpy as np

from . import _kernels

DEFAULT_EIG_TOL = 1e-10
EIG_ITER_CAP = 10_000
HERMITIAN_RTOL = 1e-12


class NonHermitianError(ValueError):
    """Input to an eigen kernel violates the Hermitian tolerance."""

    def __init__(self, residual, scale):
        self.residual = residual
        self.scale = scale
        super().__init__(
            f"matrix is not Hermitian: max|X - X^H| = {residual:.3e} "
            f"exceeds {HERMITIAN_RTOL:.0e} relative to max|X| = {scale:.3e}"
        )


class PowerIterationError(RuntimeError):
    """Power iteration hit the iteration cap before the tolerance."""

    def __init__(self, best_estimate, iterations):
        self.best_estimate = best_estimate
        self.iterations = iterations
        super().__init__(
            f"power iteration did not converge in {iterations} iterations; "
            f"best estimate {best_estimate!r}"
        )


def lambda_max_hermitian(X, tol: float = DEFAULT_EIG_TOL, max_iter=None) -> float:
    """Largest eigenvalue of Hermitian X via shifted power iteration.

    Deterministic (fixed start vector). Raises NonHermitianError when
    max|X - X^H| exceeds 1e-12 relative to max|X|, PowerIterationError when
    the Rayleigh quotient has not settled after the iteration cap (10 000
    by default; callers that only need a coarse one-sided bound may pass a
    smaller max_iter and catch the error, which carries the estimate).
    """
    X = np.asarray(X, dtype=np.complex128)
    if X.ndim != 2 or X.shape[0] != X.shape[1] or X.shape[0] < 1:
        raise ValueError(f"expected a square matrix, got shape {X.shape}")
    if not (tol > 0.0):
        raise ValueError(f"tol must be positive, got {tol}")
    resid = float(np.max(np.abs(X - X.conj().T)))
    scale = max(float(np.max(np.abs(X))), 1e-12)  # absolute fallback near zero
    if resid > HERMITIAN_RTOL * scale:
        raise NonHermitianError(resid, scale)
    cap = EIG_ITER_CAP if max_iter is None else int(max_iter)
    lam, iters, converged = _kernels.lambda_max_power(X, tol, cap)
    if not converged:
        raise PowerIterationError(lam, iters)
    return lam


def logsumexp_stable(values, mu: float) -> float:
    """Smoothed minimum -(1/mu) * log(sum_k exp(-mu * v_k)).

    Max-shifted so no overflow occurs for |mu * v| up to 1e4. Bounds the true
    minimum: result <= min(v) <= result + log(len(v))/mu.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1 or values.size == 0:
        raise ValueError("values must be a nonempty 1-D collection")
    if not (mu > 0.0):
        raise ValueError(f"mu must be positive, got {mu}")
    return _kernels.lse_min(values, mu)
