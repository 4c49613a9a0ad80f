"""Smoothed max-min solver with closed-form block updates and SQUAREM.

The group minimum is replaced by a log-sum-exp soft minimum, each block
objective is minorized twice (per-user rate surrogate, then a single
quadratic whose maximizer is closed form), and the resulting fixed-point
maps are accelerated with a SQUAREM extrapolation guarded by objective
backtracking. No convex subproblem is solved anywhere on this path.

Unit convention: rates and smoothing run in nats internally (the smoothing
parameter mu multiplies rates in nats); every public objective value is
converted to bps/Hz at return.
"""

import logging
import time
from dataclasses import dataclass

import numpy as np

from .model import (
    LN2,
    ConvergenceTrace,
    SolveResult,
    precoder_feasible,
    rate_gradients,
    reflect_feasible,
    sinr_all,
    sum_rate,
)
from .numerics import lambda_max_hermitian
from .surrogate import e_quadratic_nats, f_quadratic_nats, joint_nats, lemma1_coeffs
from ._kernels import lse_min, softmin_weights, unit_phases

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Alg2Config:
    eps: float = 1e-6
    max_outer: int = 500
    mu: float = 100.0
    accelerate: bool = True
    backtrack_cap: int = 60

    def __post_init__(self):
        if self.eps <= 0.0 or self.mu <= 0.0:
            raise ValueError("eps and mu must be positive")
        if self.max_outer < 1 or self.backtrack_cap < 0:
            raise ValueError("max_outer must be >= 1 and backtrack_cap >= 0")


@dataclass(frozen=True)
class MinorizerF:
    """Quadratic minorizer of the smoothed precoder objective at F_n.

    Per group g the minorizer is cons[g] + 2Re{Tr[U[g]^H F]} + alpha[g]*||F||_F^2.
    """

    weights: np.ndarray  # (K,) softmin weights, simplex per group
    U: np.ndarray  # (G, N, G)
    alpha: np.ndarray  # (G,) curvature bounds, negative
    tp: np.ndarray  # (K,) gradient-norm bounds entering alpha
    cons: np.ndarray  # (G,)


@dataclass(frozen=True)
class MinorizerE:
    """Linear (on the unit-modulus set) minorizer of the smoothed
    reflection objective at e_n: cons[g] + 2Re{u[g]^H e}."""

    weights: np.ndarray  # (K,)
    u: np.ndarray  # (G, M+1)
    beta: np.ndarray  # (G,) curvature bounds, negative
    tp2: np.ndarray  # (K,)
    cons: np.ndarray  # (G,)


@dataclass(frozen=True)
class SquaremState:
    """Diagnostics of one accelerated block step."""

    omega: float
    backtracks: int
    x1: np.ndarray
    x2: np.ndarray


def _per_group_mu(mu, n_groups):
    mus = np.broadcast_to(np.asarray(mu, dtype=float), (n_groups,))
    if not (mus > 0.0).all():
        raise ValueError("mu must be positive")
    return mus


def _group_lse_nats(values, group, mus):
    out = np.empty(mus.shape[0])
    for g in range(mus.shape[0]):
        out[g] = lse_min(values[group == g], mus[g])
    return out


def smoothed_group_objective(coeffs, F, e, mu_g):
    """Soft minimum of the surrogate rates per group, in bps/Hz.

    Computes -(1/mu) log sum exp(-mu R~_k) over each group with the rates
    in nats, then converts. The soft-min sandwich
    f_g <= min_k R~_k <= f_g + log|K_g|/mu_g is asserted on every call.
    """
    group = np.asarray(coeffs.group, dtype=int)
    G = int(group.max()) + 1
    mus = _per_group_mu(mu_g, G)
    vals = joint_nats(coeffs, F, e)
    out = np.empty(G)
    for g in range(G):
        sub = vals[group == g]
        f_g = lse_min(sub, mus[g])
        m = float(sub.min())
        assert f_g <= m + 1e-12
        assert m <= f_g + np.log(sub.size) / mus[g] + 1e-12
        out[g] = f_g
    return out / LN2


def smoothed_true_objective_nats(scenario, channels, F, e, mus):
    """Smoothed true objective: sum over groups of the soft minimum of the
    actual user rates (nats). The monotone metric of the whole algorithm."""
    r_nats = np.log1p(sinr_all(scenario, channels, F, e))
    return float(_group_lse_nats(r_nats, scenario.group_of, mus).sum())


def build_minorizer_F(scenario, coeffs, F_n, mus):
    """Theorem-level quadratic minorizer of the smoothed F-objective."""
    group = scenario.group_of
    K, G = scenario.K, scenario.G
    rt = f_quadratic_nats(coeffs, F_n)
    weights = np.empty(K)
    lamB = np.einsum("knn->k", coeffs.B).real  # rank-1 B_k: trace = lambda_max
    tp = np.empty(K)
    sqrt_pt = np.sqrt(scenario.P_T)
    for k in range(K):
        normC2 = float(np.sum(np.abs(coeffs.C[k]) ** 2))
        normBC = float(np.linalg.norm(coeffs.B[k] @ coeffs.C[k]))
        tp[k] = scenario.P_T * lamB[k] ** 2 + normC2 + 2.0 * sqrt_pt * normBC
    U = np.empty((G, scenario.N, G), dtype=complex)
    alpha = np.empty(G)
    cons = np.empty(G)
    grad = coeffs.C - np.einsum("kij,jg->kig", coeffs.B, F_n)
    for g in range(G):
        members = np.flatnonzero(group == g)
        w = softmin_weights(rt[members], mus[g])
        weights[members] = w
        alpha[g] = -float(lamB[members].max()) - 2.0 * mus[g] * float(tp[members].max())
        D = np.einsum("k,kng->ng", w, grad[members])
        U[g] = D - alpha[g] * F_n
        f_g = lse_min(rt[members], mus[g])
        cons[g] = (
            f_g
            + alpha[g] * float(np.sum(np.abs(F_n) ** 2))
            - 2.0 * float(np.real(np.vdot(D, F_n)))
        )
    return MinorizerF(weights=weights, U=U, alpha=alpha, tp=tp, cons=cons)


def minorizer_F_value(minor, F):
    """Evaluate the per-group quadratic minorizer at F (nats)."""
    nf2 = float(np.sum(np.abs(F) ** 2))
    lin = np.array([2.0 * np.real(np.vdot(minor.U[g], F)) for g in range(minor.U.shape[0])])
    return minor.cons + lin + minor.alpha * nf2


def minorizer_E_value(minor, e):
    """Evaluate the per-group linear minorizer at unit-modulus e (nats)."""
    lin = np.array([2.0 * np.real(np.vdot(minor.u[g], e)) for g in range(minor.u.shape[0])])
    return minor.cons + lin


def mm_map_F(scenario, coeffs, F_n, e, mu):
    """One closed-form ascent step of the smoothed precoder objective.

    Maximizes the Theorem-level quadratic minorizer over the power ball:
    the unconstrained stationary point when it is feasible, otherwise the
    radial boundary solution. Degenerate all-zero linear term returns F_n.
    """
    mus = _per_group_mu(mu, scenario.G)
    minor = build_minorizer_F(scenario, coeffs, F_n, mus)
    Usum = minor.U.sum(axis=0)
    asum = float(minor.alpha.sum())
    nU = float(np.linalg.norm(Usum))
    if nU == 0.0 or asum == 0.0:
        return F_n
    F_int = -Usum / asum
    if float(np.sum(np.abs(F_int) ** 2)) <= scenario.P_T:
        return F_int
    return np.sqrt(scenario.P_T) * Usum / nU


def build_minorizer_E(scenario, coeffs, e_n, mus):
    """Theorem-level minorizer of the smoothed reflection objective.

    Linear on the unit-modulus set after absorbing the curvature through
    ||e - e_n||^2 = 2(M+1) - 2Re{e_n^H e}; the constant produced by that
    substitution is checked against tightness at e_n on every build.
    """
    group = scenario.group_of
    K, G = scenario.K, scenario.G
    M1 = scenario.M + 1
    rt = e_quadratic_nats(coeffs.const, coeffs.A, coeffs.avec, e_n)
    weights = np.empty(K)
    lamA = np.empty(K)
    tp2 = np.empty(K)
    for k in range(K):
        A = coeffs.A[k]
        lamA[k] = lambda_max_hermitian(A)
        lamAA = lambda_max_hermitian(A @ A)
        tp2[k] = (
            float(np.sum(np.abs(coeffs.avec[k]) ** 2))
            + M1 * lamAA
            + 2.0 * float(np.sum(np.abs(A @ coeffs.avec[k])))
        )
    grad = coeffs.avec - np.einsum("kmn,n->km", coeffs.A, e_n)
    u = np.empty((G, M1), dtype=complex)
    beta = np.empty(G)
    cons = np.empty(G)
    for g in range(G):
        members = np.flatnonzero(group == g)
        w = softmin_weights(rt[members], mus[g])
        weights[members] = w
        beta[g] = -float(lamA[members].max()) - 2.0 * mus[g] * float(tp2[members].max())
        d = np.einsum("k,km->m", w, grad[members])
        u[g] = d - beta[g] * e_n
        f_g = lse_min(rt[members], mus[g])
        cons[g] = f_g + 2.0 * M1 * beta[g] - 2.0 * float(np.real(np.vdot(d, e_n)))
        # tightness at e_n validates the constant produced by the
        # unit-modulus substitution; the slack tracks the magnitude of the
        # +-2(M+1)beta pair that cancels inside it
        tight = cons[g] + 2.0 * float(np.real(np.vdot(u[g], e_n)))
        assert abs(tight - f_g) <= 1e-12 * max(1.0, abs(f_g), 2.0 * M1 * abs(beta[g]))
    return MinorizerE(weights=weights, u=u, beta=beta, tp2=tp2, cons=cons)


def mm_map_e(scenario, coeffs, e_n, F, mu):
    """One closed-form ascent step of the smoothed reflection objective.

    The linear minorizer is maximized element-wise over unit moduli and the
    result is rotated so the pinned entry is exactly 1. A zero pinned
    component of the combined linear term keeps e_n (warned, degenerate).
    """
    mus = _per_group_mu(mu, scenario.G)
    minor = build_minorizer_E(scenario, coeffs, e_n, mus)
    s = minor.u.sum(axis=0)
    pivot = s[-1]
    if pivot == 0.0:
        logger.warning("reflection map pivot is zero; keeping previous iterate")
        return e_n
    out = unit_phases(s * (pivot.conjugate() / abs(pivot)))
    out[-1] = 1.0
    return out


def squarem_accelerate(map_fn, x_n, objective, projector, backtrack_cap=60):
    """One SQUAREM step of a monotone fixed-point map.

    Applies the map twice, extrapolates with omega = -||J1||/||J2||, projects
    back to the feasible set, and halves omega toward -1 until the objective
    does not drop below objective(x_n); omega = -1 reproduces the plain
    double map step x2, which the MM property guarantees acceptable, so the
    backtracking terminates. projector receives (candidate, x2).

    Returns (x_next, SquaremState).
    """
    x1 = map_fn(x_n)
    x2 = map_fn(x1)
    J1 = x1 - x_n
    J2 = x2 - 2.0 * x1 + x_n
    n2 = float(np.linalg.norm(J2))
    if n2 == 0.0:
        return x2, SquaremState(omega=-1.0, backtracks=0, x1=x1, x2=x2)
    omega = -float(np.linalg.norm(J1)) / n2
    obj_n = objective(x_n)
    backtracks = 0
    while True:
        cand = projector(x_n - 2.0 * omega * J1 + omega * omega * J2, x2)
        if objective(cand) >= obj_n:
            break
        if backtracks >= backtrack_cap:
            cand = x2
            omega = -1.0
            break
        omega = (omega - 1.0) / 2.0
        backtracks += 1
    return cand, SquaremState(omega=omega, backtracks=backtracks, x1=x1, x2=x2)


def project_precoder(X, ref):
    """Rescale X to the Frobenius radius of the reference map output."""
    r = float(np.linalg.norm(ref))
    nX = float(np.linalg.norm(X))
    if nX == 0.0:
        return ref
    return X * (r / nX)


def project_reflect(z, ref):
    """Element-wise unit moduli with the last entry re-pinned to 1."""
    out = unit_phases(z)
    out[-1] = 1.0
    return out


def _kkt_residuals(scenario, channels, F, e, mus):
    """Stationarity residuals of the smoothed problem at (F, e).

    The multipliers are the softmin weights of the true rates (the chain
    rule of the soft minimum); the power multiplier is fitted along F and
    clipped to the cone; the reflection side measures the tangential
    component, radial parts being absorbed by the modulus multipliers.
    """
    group = scenario.group_of
    r_nats = np.log1p(sinr_all(scenario, channels, F, e))
    w = np.empty(scenario.K)
    for g in range(scenario.G):
        members = np.flatnonzero(group == g)
        w[members] = softmin_weights(r_nats[members], mus[g])
    gradF, grade = rate_gradients(scenario, channels, F, e)
    hF = np.einsum("k,kng->ng", w, gradF)
    nF2 = float(np.sum(np.abs(F) ** 2))
    tau = max(0.0, float(np.real(np.vdot(F, hF))) / nF2) if nF2 > 0.0 else 0.0
    res_f = float(np.linalg.norm(hF - tau * F)) / max(1.0, float(np.linalg.norm(hF)))
    he = np.einsum("k,km->m", w, grade)
    tang = np.imag(np.conj(e[:-1]) * he[:-1])
    res_e = float(np.linalg.norm(tang)) / max(1.0, float(np.linalg.norm(he)))
    return {
        "stationarity_F": res_f,
        "stationarity_e": res_e,
        "power_multiplier": tau,
        "power_slack": scenario.P_T - nF2,
    }


def run_algorithm2(scenario, channels, F0, e0, config=None):
    """Alternating accelerated MM on the smoothed objective.

    Each block step re-expands the rate surrogate at its input, applies the
    closed-form map (twice, under SQUAREM), and never lets the smoothed true
    objective decrease. Stops when the unsmoothed objective changes by at
    most config.eps between outer iterations. The trace records the smoothed
    objective in bps/Hz, one row per block step.
    """
    cfg = config if config is not None else Alg2Config()
    if not precoder_feasible(F0, scenario.P_T):
        raise ValueError("initial precoder violates the power budget")
    if not reflect_feasible(e0):
        raise ValueError("initial reflection vector is not unit modulus with pinned last entry")
    F = np.array(F0, dtype=complex)
    e = np.array(e0, dtype=complex)
    mus = _per_group_mu(cfg.mu, scenario.G)
    t0 = time.perf_counter()
    trace = ConvergenceTrace()
    step = 0
    trace.append(step, smoothed_true_objective_nats(scenario, channels, F, e, mus) / LN2, 0.0)
    obj = sum_rate(scenario, channels, F, e)
    converged = False
    it = 0
    for it in range(1, cfg.max_outer + 1):
        def map_F(X):
            co = lemma1_coeffs(scenario, channels, X, e)
            return mm_map_F(scenario, co, X, e, mus)

        def obj_F(X):
            return smoothed_true_objective_nats(scenario, channels, X, e, mus)

        if cfg.accelerate:
            F, st = squarem_accelerate(map_F, F, obj_F, project_precoder, cfg.backtrack_cap)
            omega_f, bts_f = st.omega, st.backtracks
        else:
            F = map_F(F)
            omega_f, bts_f = 0.0, 0
        step += 1
        tau_active = float(np.sum(np.abs(F) ** 2)) >= scenario.P_T * (1.0 - 1e-9)
        trace.append(
            step,
            smoothed_true_objective_nats(scenario, channels, F, e, mus) / LN2,
            (time.perf_counter() - t0) * 1e3,
            omega=omega_f,
            tau_active=tau_active,
            backtracks=bts_f,
        )

        def map_e(Z):
            co = lemma1_coeffs(scenario, channels, F, Z)
            return mm_map_e(scenario, co, Z, F, mus)

        def obj_e(Z):
            return smoothed_true_objective_nats(scenario, channels, F, Z, mus)

        if cfg.accelerate:
            e, st = squarem_accelerate(map_e, e, obj_e, project_reflect, cfg.backtrack_cap)
            omega_e, bts_e = st.omega, st.backtracks
        else:
            e = map_e(e)
            omega_e, bts_e = 0.0, 0
        step += 1
        trace.append(
            step,
            smoothed_true_objective_nats(scenario, channels, F, e, mus) / LN2,
            (time.perf_counter() - t0) * 1e3,
            omega=omega_e,
            tau_active=tau_active,
            backtracks=bts_e,
        )
        obj_new = sum_rate(scenario, channels, F, e)
        if abs(obj_new - obj) <= cfg.eps:
            obj = obj_new
            converged = True
            break
        obj = obj_new
    kkt = _kkt_residuals(scenario, channels, F, e, mus)
    return SolveResult(F=F, e=e, trace=trace, kkt=kkt, iterations=it, converged=converged)
