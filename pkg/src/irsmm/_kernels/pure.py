"""Pure-numpy kernel backend.

Mirrors the compiled backend in ``_speedups.pyx`` operation for operation;
``irsmm._kernels`` picks one at import time. Keep the two in sync.
"""

import numpy as np


def _start_vector(n):
    # deterministic pseudo-random start (31-bit LCG) so both backends and
    # repeated calls produce the same iterates bit for bit
    s = 42
    v = np.empty(n)
    for i in range(n):
        s = (1103515245 * s + 12345) & 0x7FFFFFFF
        v[i] = s / 2147483648.0 - 0.5
    return v


def lambda_max_power(X, tol, max_iter):
    """Largest eigenvalue of a Hermitian matrix by shifted power iteration.

    A Gershgorin shift makes the iterated matrix PSD so the dominant
    eigenvalue in magnitude is also the algebraically largest. Stops on the
    Rayleigh-quotient delta |lam_t - lam_{t-1}| <= max(tol*|lam_t|, floor)
    where floor = 1e-12*max(1, shift): relative in the eigenvalue, with an
    absolute fallback tied to the matrix scale so near-singular extremes
    (lam ~ 0 for a large-norm matrix) still terminate instead of chasing a
    relative target below roundoff.

    Returns (lam, iterations, converged). No Hermitian check here; the
    numerics wrapper owns validation.
    """
    X = np.ascontiguousarray(X, dtype=np.complex128)
    n = X.shape[0]
    diag = np.real(np.diag(X))
    off = np.sum(np.abs(X), axis=1) - np.abs(np.diag(X))
    lo = np.min(diag - off)
    shift = -lo if lo < 0.0 else 0.0
    floor = 1e-12 * max(1.0, shift)

    v = _start_vector(n).astype(np.complex128)
    v /= np.linalg.norm(v)
    lam = 0.0
    lam_prev = 0.0
    for it in range(1, max_iter + 1):
        w = X @ v + shift * v
        lam = float(np.real(np.vdot(v, w))) - shift
        nw = float(np.linalg.norm(w))
        if nw == 0.0:
            # v is in the nullspace of the shifted matrix; Rayleigh value exact
            return lam, it, True
        v = w / nw
        if it > 1 and abs(lam - lam_prev) <= max(tol * abs(lam), floor):
            return lam, it, True
        lam_prev = lam
    return lam, max_iter, False


def lse_min(values, mu):
    """Smoothed minimum -(1/mu)*log(sum_k exp(-mu*v_k)), max-shifted.

    The shift by min(v) keeps every exponent <= 0, so no overflow for
    |mu*v| up to 1e4 and beyond.
    """
    values = np.asarray(values, dtype=np.float64)
    m = float(values.min())
    acc = float(np.sum(np.exp(-mu * (values - m))))
    return m - np.log(acc) / mu


def softmin_weights(values, mu):
    """Weights exp(-mu*v_k)/sum exp(-mu*v), the gradient of lse_min."""
    values = np.asarray(values, dtype=np.float64)
    w = np.exp(-mu * (values - values.min()))
    return w / w.sum()


def eq_products(H, e, F):
    """Per-user products with the stacked equivalent channels.

    H: (K, M+1, N), e: (M+1,), F: (N, G). Returns
      T (K, G)    = e^H H_k F      (received signal amplitudes)
      W (K, N)    = e^H H_k        (effective downlink row per user)
      V (K, M+1, G) = H_k F        (per-element signal before combining)
    T is computed as W @ F so both backends share the summation order.
    """
    H = np.asarray(H, dtype=np.complex128)
    e = np.asarray(e, dtype=np.complex128)
    F = np.asarray(F, dtype=np.complex128)
    W = np.einsum("m,kmn->kn", e.conj(), H)
    V = H @ F
    T = W @ F
    return T, W, V


def unit_phases(z):
    """exp(j*angle(z)) elementwise; zeros map to 1 (angle(0) = 0)."""
    z = np.asarray(z, dtype=np.complex128)
    mag = np.abs(z)
    out = np.ones_like(z)
    nz = mag > 0.0
    out[nz] = z[nz] / mag[nz]
    return out
