"""Concave lower bound of the per-user rate and its quadratic forms.

At an expansion point (F_n, e_n), with t = e_n^H H_k f_g, r_minus the
interference-plus-noise power and r = r_minus + |t|^2, the rate in nats is
minorized by the tight concave surrogate

    R~_k(F, e) = const_k + 2 Re{a_k e^H H_k f_g} - b_k sum_i |e^H H_k f_i|^2
    a_k = conj(t) / r_minus
    b_k = |t|^2 / (r_minus * r)
    const_k = R_k(nats) - b_k sigma_k^2 - b_k r

For fixed e = e_n this is a quadratic in F with B_k = b_k H_k^H e e^H H_k and
C_k^H = a_k t_g e^H H_k (t_g the group-g selection vector); for fixed F it is
a quadratic in e with A_k = b_k H_k F F^H H_k^H and avec_k = a_k H_k f_g.
Everything internal is in nats; surrogate_rate converts to bps/Hz.
"""

from dataclasses import dataclass

import numpy as np

from ._kernels import eq_products
from .model import LN2

FORMS = ("joint", "F-quadratic", "e-quadratic")


@dataclass(frozen=True)
class SurrogateCoeffs:
    """Per-user Lemma coefficients at one expansion point (arrays over k)."""

    a: np.ndarray  # (K,) complex
    b: np.ndarray  # (K,) real, >= 0
    const: np.ndarray  # (K,) real, nats
    B: np.ndarray  # (K, N, N) PSD rank <= 1
    C: np.ndarray  # (K, N, G), only the group column nonzero
    A: np.ndarray  # (K, M+1, M+1) PSD, built at F_n
    avec: np.ndarray  # (K, M+1), built at F_n
    F_n: np.ndarray
    e_n: np.ndarray
    group: np.ndarray  # (K,) group index of each user
    H: np.ndarray  # (K, M+1, N) equivalent channels (reference)


def lemma1_coeffs(scenario, channels, F_n, e_n):
    """Expand the rate bound at (F_n, e_n) for every user."""
    H = np.asarray(channels.H, dtype=np.complex128)
    F_n = np.asarray(F_n, dtype=np.complex128)
    e_n = np.asarray(e_n, dtype=np.complex128)
    T, W, V = eq_products(H, e_n, F_n)  # T (K,G), W (K,N), V (K,M+1,G)
    grp = scenario.group_of
    k_idx = np.arange(scenario.K)

    p = np.abs(T) ** 2
    t = T[k_idx, grp]
    sig = p[k_idx, grp]
    r = p.sum(axis=1) + channels.sigma2
    r_minus = r - sig
    rate_nats = np.log1p(sig / r_minus)

    a = t.conj() / r_minus
    b = sig / (r_minus * r)
    const = rate_nats - b * channels.sigma2 - b * r

    B = b[:, None, None] * (W.conj()[:, :, None] * W[:, None, :])
    C = np.zeros((scenario.K, scenario.N, scenario.G), dtype=np.complex128)
    C[k_idx, :, grp] = a.conj()[:, None] * W.conj()
    A = b[:, None, None] * np.einsum("kmg,kng->kmn", V, V.conj())
    avec = a[:, None] * V[k_idx, :, grp]

    return SurrogateCoeffs(
        a=a, b=b, const=const, B=B, C=C, A=A, avec=avec,
        F_n=F_n.copy(), e_n=e_n.copy(), group=grp, H=H,
    )


def joint_nats(coeffs, F, e):
    """Surrogate rates (nats) at arbitrary (F, e), all users."""
    T, _, _ = eq_products(coeffs.H, e, F)
    k_idx = np.arange(T.shape[0])
    t = T[k_idx, coeffs.group]
    return coeffs.const + 2.0 * np.real(coeffs.a * t) - coeffs.b * np.sum(np.abs(T) ** 2, axis=1)


def f_quadratic_nats(coeffs, F):
    """Surrogate rates (nats) as the quadratic in F, valid at e = e_n."""
    lin = 2.0 * np.real(np.einsum("kng,ng->k", coeffs.C.conj(), F))
    quad = np.real(np.einsum("ng,knm,mg->k", F.conj(), coeffs.B, F))
    return coeffs.const + lin - quad


def e_quadratic_nats(const, A, avec, e):
    """Surrogate rates (nats) as the quadratic in e for given (A, avec)."""
    lin = 2.0 * np.real(np.einsum("km,m->k", avec.conj(), e))
    quad = np.real(np.einsum("m,kmn,n->k", e.conj(), A, e))
    return const + lin - quad


def e_form_at(coeffs, F):
    """(A, avec) of the e-quadratic rebuilt at a different F.

    The scalar coefficients (a, b, const) stay tied to the original
    expansion point; only the precoder entering the quadratic changes.
    """
    V = coeffs.H @ np.asarray(F, dtype=np.complex128)  # (K, M+1, G)
    k_idx = np.arange(V.shape[0])
    A = coeffs.b[:, None, None] * np.einsum("kmg,kng->kmn", V, V.conj())
    avec = coeffs.a[:, None] * V[k_idx, :, coeffs.group]
    return A, avec


def surrogate_rate(coeffs, F, e, k, form="joint"):
    """Surrogate rate of user k in bps/Hz, evaluated in the requested form.

    The quadratic forms are only defined at the counterpart they were built
    with: F-quadratic needs e = e_n, e-quadratic needs F = F_n.
    """
    if form not in FORMS:
        raise ValueError(f"unknown form {form!r}, expected one of {FORMS}")
    F = np.asarray(F, dtype=np.complex128)
    e = np.asarray(e, dtype=np.complex128)
    if form == "joint":
        val = joint_nats(coeffs, F, e)[k]
    elif form == "F-quadratic":
        if not np.allclose(e, coeffs.e_n, rtol=0.0, atol=1e-12):
            raise ValueError("F-quadratic form requires e equal to the expansion e_n")
        val = f_quadratic_nats(coeffs, F)[k]
    else:
        if not np.allclose(F, coeffs.F_n, rtol=0.0, atol=1e-12):
            raise ValueError("e-quadratic form requires F equal to the expansion F_n")
        val = e_quadratic_nats(coeffs.const, coeffs.A, coeffs.avec, e)[k]
    return float(val) / LN2
