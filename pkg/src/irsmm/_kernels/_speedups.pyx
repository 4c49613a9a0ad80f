# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel backend. Mirrors pure.py; keep the two in sync."""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, log, exp, sqrt

cnp.import_array()


def lambda_max_power(X, double tol, long max_iter):
    """Largest eigenvalue of a Hermitian matrix by shifted power iteration.

    Same algorithm as the pure backend: Gershgorin shift, LCG start vector,
    Rayleigh-quotient delta stopping. Returns (lam, iterations, converged).
    """
    cdef cnp.ndarray[cnp.complex128_t, ndim=2, mode="c"] Xa = \
        np.ascontiguousarray(X, dtype=np.complex128)
    cdef Py_ssize_t n = Xa.shape[0]
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] v = np.empty(n, dtype=np.complex128)
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] w = np.empty(n, dtype=np.complex128)
    cdef double complex[:, ::1] Xm = Xa
    cdef double complex[::1] vm = v
    cdef double complex[::1] wm = w

    cdef Py_ssize_t i, j
    cdef long it, s
    cdef double lo, row, shift, nrm, lam, lam_prev, nw, ray, floor, gate
    cdef double complex acc

    # Gershgorin lower bound
    lo = 1e300
    for i in range(n):
        row = 0.0
        for j in range(n):
            if j != i:
                row += abs(Xm[i, j])
        if Xm[i, i].real - row < lo:
            lo = Xm[i, i].real - row
    shift = -lo if lo < 0.0 else 0.0
    floor = 1e-12 * (shift if shift > 1.0 else 1.0)

    # 31-bit LCG start, identical to pure._start_vector
    s = 42
    nrm = 0.0
    for i in range(n):
        s = (1103515245 * s + 12345) & 0x7FFFFFFF
        vm[i] = s / 2147483648.0 - 0.5
        nrm += vm[i].real * vm[i].real
    nrm = sqrt(nrm)
    for i in range(n):
        vm[i] = vm[i] / nrm

    lam = 0.0
    lam_prev = 0.0
    for it in range(1, max_iter + 1):
        ray = 0.0
        nw = 0.0
        for i in range(n):
            acc = 0
            for j in range(n):
                acc = acc + Xm[i, j] * vm[j]
            acc = acc + shift * vm[i]
            wm[i] = acc
            ray += vm[i].real * acc.real + vm[i].imag * acc.imag
            nw += acc.real * acc.real + acc.imag * acc.imag
        lam = ray - shift
        nw = sqrt(nw)
        if nw == 0.0:
            return lam, it, True
        for i in range(n):
            vm[i] = wm[i] / nw
        gate = tol * fabs(lam)
        if gate < floor:
            gate = floor
        if it > 1 and fabs(lam - lam_prev) <= gate:
            return lam, it, True
        lam_prev = lam
    return lam, max_iter, False


def lse_min(values, double mu):
    """Smoothed minimum -(1/mu)*log(sum exp(-mu*v_k)), max-shifted."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] va = \
        np.ascontiguousarray(values, dtype=np.float64)
    cdef double[::1] vm = va
    cdef Py_ssize_t k, n = va.shape[0]
    cdef double m = vm[0]
    cdef double acc = 0.0
    for k in range(1, n):
        if vm[k] < m:
            m = vm[k]
    for k in range(n):
        acc += exp(-mu * (vm[k] - m))
    return m - log(acc) / mu


def softmin_weights(values, double mu):
    """Weights exp(-mu*v_k)/sum exp(-mu*v)."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] va = \
        np.ascontiguousarray(values, dtype=np.float64)
    cdef double[::1] vm = va
    cdef Py_ssize_t k, n = va.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef double[::1] om = out
    cdef double m = vm[0]
    cdef double acc = 0.0
    for k in range(1, n):
        if vm[k] < m:
            m = vm[k]
    for k in range(n):
        om[k] = exp(-mu * (vm[k] - m))
        acc += om[k]
    for k in range(n):
        om[k] /= acc
    return out


def eq_products(H, e, F):
    """Per-user products e^H H_k F (T), e^H H_k (W), H_k F (V).

    Shapes: H (K, M+1, N), e (M+1,), F (N, G) -> T (K,G), W (K,N), V (K,M+1,G).
    """
    cdef cnp.ndarray[cnp.complex128_t, ndim=3, mode="c"] Ha = \
        np.ascontiguousarray(H, dtype=np.complex128)
    cdef cnp.ndarray[cnp.complex128_t, ndim=1, mode="c"] ea = \
        np.ascontiguousarray(e, dtype=np.complex128)
    cdef cnp.ndarray[cnp.complex128_t, ndim=2, mode="c"] Fa = \
        np.ascontiguousarray(F, dtype=np.complex128)
    cdef Py_ssize_t K = Ha.shape[0], M1 = Ha.shape[1], N = Ha.shape[2]
    cdef Py_ssize_t G = Fa.shape[1]
    cdef cnp.ndarray[cnp.complex128_t, ndim=2] T = np.empty((K, G), dtype=np.complex128)
    cdef cnp.ndarray[cnp.complex128_t, ndim=2] W = np.empty((K, N), dtype=np.complex128)
    cdef cnp.ndarray[cnp.complex128_t, ndim=3] V = np.empty((K, M1, G), dtype=np.complex128)
    cdef double complex[:, :, ::1] Hm = Ha
    cdef double complex[::1] em = ea
    cdef double complex[:, ::1] Fm = Fa
    cdef double complex[:, ::1] Tm = T
    cdef double complex[:, ::1] Wm = W
    cdef double complex[:, :, ::1] Vm = V
    cdef Py_ssize_t k, m, n, g
    cdef double complex acc

    for k in range(K):
        for n in range(N):
            acc = 0
            for m in range(M1):
                acc = acc + em[m].conjugate() * Hm[k, m, n]
            Wm[k, n] = acc
        for m in range(M1):
            for g in range(G):
                acc = 0
                for n in range(N):
                    acc = acc + Hm[k, m, n] * Fm[n, g]
                Vm[k, m, g] = acc
        for g in range(G):
            acc = 0
            for n in range(N):
                acc = acc + Wm[k, n] * Fm[n, g]
            Tm[k, g] = acc
    return T, W, V


def unit_phases(z):
    """exp(j*angle(z)) elementwise; zeros map to 1."""
    cdef cnp.ndarray[cnp.complex128_t, ndim=1, mode="c"] za = \
        np.ascontiguousarray(z, dtype=np.complex128)
    cdef Py_ssize_t i, n = za.shape[0]
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] out = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] zm = za
    cdef double complex[::1] om = out
    cdef double mag
    for i in range(n):
        mag = abs(zm[i])
        if mag > 0.0:
            om[i] = zm[i] / mag
        else:
            om[i] = 1.0
    return out
