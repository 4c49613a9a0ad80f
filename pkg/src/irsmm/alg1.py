"""Alternating max-min MM solver with exact per-block subproblems.

Each outer iteration expands the concave per-user rate surrogate at the
current point, solves the precoder block as a max-min QCQP over the power
ball, re-expands the reflection quadratics at the new precoder, solves the
reflection block over the unit-modulus relaxation, and projects the result
back to unit modulus with an acceptance check. Both block solves go through
the embedded barrier solver; monotonicity of the true objective trail is
enforced by keeping the previous block iterate whenever a candidate fails
to improve the surrogate.
"""

import logging
import time
from dataclasses import dataclass

import numpy as np

from .model import (
    ConvergenceTrace,
    SolveResult,
    precoder_feasible,
    rate_gradients,
    reflect_feasible,
    sum_rate,
)
from .subsolver import MaxMinQcqp, lift_hermitian, lift_vector, solve_maxmin_qcqp, unlift_vector
from .surrogate import e_form_at, f_quadratic_nats, joint_nats, lemma1_coeffs
from ._kernels import unit_phases

logger = logging.getLogger(__name__)

# shrink factor pulling warm starts strictly inside the feasible ball
WARM_SHRINK = 1.0 - 1e-6


@dataclass(frozen=True)
class Alg1Config:
    eps: float = 1e-6
    max_outer: int = 200
    sub_tol: float = 1e-7

    def __post_init__(self):
        if self.eps <= 0.0 or self.sub_tol <= 0.0:
            raise ValueError("tolerances must be positive")
        if self.max_outer < 1:
            raise ValueError("max_outer must be at least 1")


def _groupmin_sum(values, group, n_groups):
    """Sum over groups of the per-group minimum of a per-user vector."""
    out = 0.0
    for g in range(n_groups):
        out += values[group == g].min()
    return out


def f_subproblem(coeffs, scenario, F_n, tol=1e-7):
    """Solve the precoder block at fixed reflection.

    Builds the per-user surrogate quadratics in the stacked precoder
    variable and hands them to the barrier solver over the power ball.
    Returns (F_new, solution); F_new is the unstacked optimizer, the raw
    solution keeps the dual certificate for KKT diagnostics.
    """
    N, G, K = scenario.N, scenario.G, scenario.K
    dim = N * G
    c = np.asarray(coeffs.const, dtype=float)
    L = np.empty((K, 2 * dim))
    Q = np.empty((K, 2 * dim, 2 * dim))
    eye_g = np.eye(G)
    for k in range(K):
        L[k] = lift_vector(coeffs.C[k].reshape(-1, order="F"))
        Q[k] = lift_hermitian(np.kron(eye_g, coeffs.B[k]))
    prob = MaxMinQcqp(
        c=c,
        L=L,
        Q=Q,
        group=np.asarray(coeffs.group, dtype=int),
        n_groups=G,
        ball_kind="power",
        ball_r2=scenario.P_T,
    )
    x0 = lift_vector(F_n.reshape(-1, order="F"))
    nrm2 = float(x0 @ x0)
    if nrm2 > scenario.P_T * WARM_SHRINK:
        x0 = x0 * np.sqrt(scenario.P_T * WARM_SHRINK / nrm2)
    sol = solve_maxmin_qcqp(prob, x0, tol=tol)
    F_new = unlift_vector(sol.x).reshape(N, G, order="F")
    return F_new, sol


def e_subproblem(coeffs, scenario, e_n, F=None, tol=1e-7):
    """Solve the relaxed reflection block at fixed precoder.

    The reflection quadratics are re-expanded at F when given (otherwise
    the expansion precoder of coeffs is used), the pinned last entry is
    eliminated by substitution, and the free part is optimized over the
    per-element modulus ball relaxation. Returns (e_relaxed, solution)
    where e_relaxed has the pinned entry restored; moduli of the free part
    may be below one, so callers must project before use.
    """
    M = scenario.M
    if F is not None:
        A, avec = e_form_at(coeffs, F)
    else:
        A, avec = coeffs.A, coeffs.avec
    const = coeffs.const
    K = const.shape[0]
    # substitute e_{M+1} = 1: quadratic in the free block e_{1..M}
    c = np.empty(K)
    L = np.empty((K, 2 * M))
    Q = np.empty((K, 2 * M, 2 * M))
    for k in range(K):
        A11 = A[k][:M, :M]
        a1m = A[k][:M, M]
        c[k] = const[k] + 2.0 * np.real(avec[k][M]) - np.real(A[k][M, M])
        L[k] = lift_vector(avec[k][:M] - a1m)
        Q[k] = lift_hermitian(A11)
    prob = MaxMinQcqp(
        c=c,
        L=L,
        Q=Q,
        group=np.asarray(coeffs.group, dtype=int),
        n_groups=scenario.G,
        ball_kind="moduli",
        ball_r2=1.0,
    )
    x0 = lift_vector(e_n[:M] * WARM_SHRINK)
    sol = solve_maxmin_qcqp(prob, x0, tol=tol)
    e_rel = np.empty(M + 1, dtype=complex)
    e_rel[:M] = unlift_vector(sol.x)
    e_rel[M] = 1.0
    return e_rel, sol


def project_and_accept(e_relaxed, e_n, F, coeffs):
    """Map a relaxed reflection vector back to unit modulus, keeping it
    only if the surrogate objective does not drop.

    The relaxed optimizer is rotated so its pinned entry is positive real,
    every element is normalized to unit modulus, and the candidate is
    compared against e_n on the surrogate group-min sum at the given F.
    A zero pinned entry aborts the projection (e_n is kept).
    """
    pivot = e_relaxed[-1]
    if pivot == 0.0:
        logger.warning("reflection projection pivot is zero; keeping previous iterate")
        return e_n, False
    cand = unit_phases(e_relaxed * (pivot.conjugate() / abs(pivot)))
    cand[-1] = 1.0
    group = np.asarray(coeffs.group, dtype=int)
    n_groups = int(group.max()) + 1
    val_new = _groupmin_sum(joint_nats(coeffs, F, cand), group, n_groups)
    val_old = _groupmin_sum(joint_nats(coeffs, F, e_n), group, n_groups)
    if val_new >= val_old:
        return cand, True
    return e_n, False


def _kkt_residuals(scenario, channels, F, e, sub_tol):
    """Scaled stationarity residuals at (F, e) from fresh block solves.

    Re-expands the surrogate at the final point, re-solves both blocks to
    harvest dual certificates, and measures how far the dual-weighted true
    rate gradients are from the constraint normals. All residuals are
    scaled by max(1, gradient norm).
    """
    coeffs = lemma1_coeffs(scenario, channels, F, e)
    _, sol_f = f_subproblem(coeffs, scenario, F, tol=sub_tol)
    _, sol_e = e_subproblem(coeffs, scenario, e, F=None, tol=sub_tol)
    gradF, grade = rate_gradients(scenario, channels, F, e)

    lam = sol_f.lambda_cons
    hF = np.einsum("k,kng->ng", lam, gradF)
    # fitted power multiplier (least squares along F, clipped to the cone)
    nF2 = float(np.sum(np.abs(F) ** 2))
    tau = max(0.0, float(np.real(np.vdot(F, hF))) / nF2) if nF2 > 0.0 else 0.0
    scale_f = max(1.0, float(np.linalg.norm(hF)))
    res_f = float(np.linalg.norm(hF - tau * F)) / scale_f
    group = scenario.group_of
    simplex = sum(
        abs(1.0 - lam[group == g].sum()) for g in range(scenario.G)
    )

    nu = sol_e.lambda_cons
    he = np.einsum("k,km->m", nu, grade)
    scale_e = max(1.0, float(np.linalg.norm(he)))
    tang = np.imag(np.conj(e[:-1]) * he[:-1])
    res_e = float(np.linalg.norm(tang)) / scale_e
    return {
        "stationarity_F": res_f + simplex,
        "stationarity_e": res_e,
        "power_multiplier": tau,
        "power_slack": scenario.P_T - nF2,
    }


def run_algorithm1(scenario, channels, F0, e0, config=None):
    """Alternating MM with exact block solves; returns a SolveResult.

    Stops when the true sum of group-minimum rates changes by at most
    config.eps between outer iterations, or at the iteration cap. The
    recorded objective trail is nondecreasing by construction: a block
    candidate that lowers the surrogate group-min sum is discarded.
    """
    cfg = config if config is not None else Alg1Config()
    if not precoder_feasible(F0, scenario.P_T):
        raise ValueError("initial precoder violates the power budget")
    if not reflect_feasible(e0):
        raise ValueError("initial reflection vector is not unit modulus with pinned last entry")
    F = np.array(F0, dtype=complex)
    e = np.array(e0, dtype=complex)
    group = scenario.group_of
    t0 = time.perf_counter()
    trace = ConvergenceTrace()
    obj = sum_rate(scenario, channels, F, e)
    trace.append(0, obj, 0.0)
    converged = False
    it = 0
    for it in range(1, cfg.max_outer + 1):
        coeffs = lemma1_coeffs(scenario, channels, F, e)
        F_cand, _ = f_subproblem(coeffs, scenario, F, tol=cfg.sub_tol)
        # keep the previous precoder if the solve came back worse
        if _groupmin_sum(f_quadratic_nats(coeffs, F_cand), group, scenario.G) >= _groupmin_sum(
            f_quadratic_nats(coeffs, F), group, scenario.G
        ):
            F = F_cand
        e_rel, _ = e_subproblem(coeffs, scenario, e, F=F, tol=cfg.sub_tol)
        e, _ = project_and_accept(e_rel, e, F, coeffs)
        obj_new = sum_rate(scenario, channels, F, e)
        trace.append(it, obj_new, (time.perf_counter() - t0) * 1e3)
        if abs(obj_new - obj) <= cfg.eps:
            obj = obj_new
            converged = True
            break
        obj = obj_new
    kkt = _kkt_residuals(scenario, channels, F, e, cfg.sub_tol)
    return SolveResult(F=F, e=e, trace=trace, kkt=kkt, iterations=it, converged=converged)
