"""Dense max-min concave-QCQP solver (log-barrier interior point).

Solves  max_{x, gamma} sum_g gamma_g
        s.t. q_j(x) >= gamma_{g(j)},   q_j(x) = c_j + 2 <l_j, x> - x^T Q_j x
             ||x||^2 <= r             (power ball), or
             x_m^2 + x_{m+P}^2 <= 1   (per-pair moduli, P pairs)

over a real decision vector x (complex problems are lifted: x = [Re; Im],
Hermitian Q becomes [[Re Q, -Im Q], [Im Q, Re Q]]). All constraints are
smooth concave quadratics, so a plain log barrier with Newton centering is
enough; no cone machinery. Barrier parameter multiplies by 10 per centering
until (#constraints)/t falls below the gap target.
"""

from dataclasses import dataclass, field

import json

import numpy as np

from .numerics import PowerIterationError, lambda_max_hermitian

ARMIJO_C = 0.3
ARMIJO_SHRINK = 0.8
NEWTON_DECREMENT_TOL = 1e-14
STALL_ACCEPT = 1e-7  # roundoff can stop the decrement short of the target;
# the induced objective error is decrement/t, negligible by then
MAX_NEWTON_PER_CENTER = 100
MAX_NEWTON_TOTAL = 5000  # across all centerings of one solve
T_INIT = 1.0
T_GROWTH = 10.0
GAMMA_INIT_MARGIN = 1e-9


class InfeasibleWarmStartError(ValueError):
    pass


class NewtonFailureError(RuntimeError):
    def __init__(self, msg, t, decrement, centering):
        self.t = t
        self.decrement = decrement
        self.centering = centering
        super().__init__(f"{msg} (t={t:.3e}, decrement={decrement:.3e}, centering={centering})")


def lift_hermitian(Q):
    """[[Re Q, -Im Q], [Im Q, Re Q]] so x^H Q x = x_r^T Q_r x_r."""
    Q = np.asarray(Q, dtype=np.complex128)
    return np.block([[Q.real, -Q.imag], [Q.imag, Q.real]])


def lift_vector(l):
    """[Re l; Im l] so Re(l^H x) = l_r . x_r."""
    l = np.asarray(l, dtype=np.complex128)
    return np.concatenate([l.real, l.imag])


def unlift_vector(x):
    """Inverse of lift_vector: rebuild the complex vector from [Re; Im]."""
    x = np.asarray(x, dtype=float)
    if x.size % 2:
        raise ValueError("lifted vector must have even length")
    half = x.size // 2
    return x[:half] + 1j * x[half:]


@dataclass(frozen=True)
class MaxMinQcqp:
    """One subproblem instance, already in real-lifted form.

    ball_kind "power": ||x||^2 <= ball_r2. ball_kind "moduli": dim must be
    2*P and pair m is (x[m], x[m+P]) with squared modulus <= 1.
    """

    c: np.ndarray  # (J,)
    L: np.ndarray  # (J, n) linear terms l_j
    Q: np.ndarray  # (J, n, n) PSD
    group: np.ndarray  # (J,) epigraph group of each constraint
    n_groups: int
    ball_kind: str
    ball_r2: float = 1.0

    def __post_init__(self):
        if self.ball_kind not in ("power", "moduli"):
            raise ValueError(f"unknown ball kind {self.ball_kind!r}")
        if self.ball_kind == "power" and self.ball_r2 <= 0:
            raise ValueError("ball radius^2 must be positive")
        n = self.L.shape[1]
        if self.ball_kind == "moduli" and n % 2 != 0:
            raise ValueError("moduli constraints need an even real dimension")
        for j in range(self.Q.shape[0]):
            Qj = self.Q[j]
            try:
                lam = lambda_max_hermitian(-(Qj + Qj.T) / 2.0, tol=1e-8, max_iter=400)
            except PowerIterationError as err:
                # rank-deficient PSD inputs put the extreme eigenvalue at ~0
                # inside a degenerate cluster, where the Rayleigh stop can
                # creep forever; the estimate is a lower bound on
                # lambda_max(-Q), so a clean matrix can never be rejected
                # through it while a genuinely indefinite one still trips
                lam = err.best_estimate
            if lam > 1e-10:
                raise ValueError(f"Q_{j} is not PSD (lambda_min = {-lam:.3e})")

    @property
    def dim(self):
        return self.L.shape[1]

    @property
    def n_pairs(self):
        return self.dim // 2

    def q_values(self, x):
        lin = 2.0 * (self.L @ x)
        quad = np.einsum("n,jnm,m->j", x, self.Q, x)
        return self.c + lin - quad

    def q_grads(self, x):
        # grad q_j = 2 (l_j - Q_j x)
        return 2.0 * (self.L - self.Q @ x)

    def ball_slacks(self, x):
        if self.ball_kind == "power":
            return np.array([self.ball_r2 - float(x @ x)])
        P = self.n_pairs
        return 1.0 - (x[:P] ** 2 + x[P:] ** 2)

    def to_json(self):
        return json.dumps({
            "c": self.c.tolist(),
            "L": self.L.tolist(),
            "Q": self.Q.tolist(),
            "group": self.group.tolist(),
            "n_groups": self.n_groups,
            "ball_kind": self.ball_kind,
            "ball_r2": self.ball_r2,
        })

    @staticmethod
    def from_json(s):
        d = json.loads(s)
        return MaxMinQcqp(
            c=np.array(d["c"], dtype=float),
            L=np.array(d["L"], dtype=float),
            Q=np.array(d["Q"], dtype=float),
            group=np.array(d["group"], dtype=int),
            n_groups=int(d["n_groups"]),
            ball_kind=d["ball_kind"],
            ball_r2=float(d["ball_r2"]),
        )


@dataclass
class QcqpSolution:
    x: np.ndarray
    gamma: np.ndarray
    objective: float
    lambda_cons: np.ndarray  # duals of q_j >= gamma constraints
    lambda_ball: np.ndarray  # dual(s) of the ball / moduli constraints
    residuals: dict
    iterations: int
    centerings: int
    path_objectives: list = field(default_factory=list)


def _barrier_state(prob, x, gamma):
    """Slacks of every inequality at (x, gamma). None entries if infeasible."""
    s_cons = prob.q_values(x) - gamma[prob.group]
    s_ball = prob.ball_slacks(x)
    return s_cons, s_ball


def _phi(prob, t, x, gamma):
    s_cons, s_ball = _barrier_state(prob, x, gamma)
    if np.min(s_cons) <= 0 or np.min(s_ball) <= 0:
        return np.inf
    return -t * gamma.sum() - np.sum(np.log(s_cons)) - np.sum(np.log(s_ball))


def _grad_hess(prob, t, x, gamma):
    n, G, J = prob.dim, prob.n_groups, prob.c.shape[0]
    s_cons, s_ball = _barrier_state(prob, x, gamma)
    grads = prob.q_grads(x)  # (J, n)

    gx = -(grads / s_cons[:, None]).sum(axis=0)
    ggamma = np.full(G, -t)
    np.add.at(ggamma, prob.group, 1.0 / s_cons)

    Hxx = np.einsum("j,jn,jm->nm", 1.0 / s_cons**2, grads, grads)
    Hxx += np.einsum("j,jnm->nm", 2.0 / s_cons, prob.Q)
    if prob.ball_kind == "power":
        sb = s_ball[0]
        Hxx += np.outer(2.0 * x, 2.0 * x) / sb**2 + (2.0 / sb) * np.eye(n)
        gx += 2.0 * x / sb
    else:
        P = prob.n_pairs
        for m in range(P):
            sm = s_ball[m]
            g = np.zeros(n)
            g[m] = 2.0 * x[m]
            g[m + P] = 2.0 * x[m + P]
            Hxx += np.outer(g, g) / sm**2
            Hxx[m, m] += 2.0 / sm
            Hxx[m + P, m + P] += 2.0 / sm
            gx += g / sm

    Hgg = np.zeros(G)
    np.add.at(Hgg, prob.group, 1.0 / s_cons**2)
    Hxg = np.zeros((n, G))
    for j in range(J):
        Hxg[:, prob.group[j]] -= grads[j] / s_cons[j] ** 2

    grad = np.concatenate([gx, ggamma])
    H = np.zeros((n + G, n + G))
    H[:n, :n] = Hxx
    H[:n, n:] = Hxg
    H[n:, :n] = Hxg.T
    H[n:, n:] = np.diag(Hgg)
    return grad, H


def _center(prob, t, x, gamma):
    """Newton with Armijo backtracking until the decrement is tiny.

    Returns (x, gamma, used, decrement2, stalled). stalled is True only
    when the line search cannot find any acceptable step; running out of
    the per-call iteration budget while still making progress is not a
    stall, the caller may simply center again from the returned point.
    """
    for it in range(1, MAX_NEWTON_PER_CENTER + 1):
        grad, H = _grad_hess(prob, t, x, gamma)
        try:
            d = np.linalg.solve(H, -grad)
        except np.linalg.LinAlgError:
            d = np.linalg.solve(H + 1e-12 * np.trace(H) * np.eye(H.shape[0]), -grad)
        decrement2 = float(-grad @ d)
        if decrement2 <= NEWTON_DECREMENT_TOL:
            return x, gamma, it - 1, decrement2, False
        n = prob.dim
        phi0 = _phi(prob, t, x, gamma)
        slope = float(grad @ d)
        # phi is O(t); real decrements near convergence fall below its
        # floating-point resolution, so allow that much slack in the test
        roundoff = 64.0 * np.finfo(float).eps * abs(phi0)
        alpha = 1.0
        while alpha > 1e-18:
            xn = x + alpha * d[:n]
            gn = gamma + alpha * d[n:]
            if _phi(prob, t, xn, gn) <= phi0 + ARMIJO_C * alpha * slope + roundoff:
                break
            alpha *= ARMIJO_SHRINK
        else:
            return x, gamma, it, decrement2, True
        x, gamma = xn, gn
    grad, H = _grad_hess(prob, t, x, gamma)
    d = np.linalg.solve(H, -grad)
    return x, gamma, MAX_NEWTON_PER_CENTER, float(-grad @ d), False


def _fit_duals(prob, x, lam_cons0, lam_ball0):
    """Polish the dual certificate for the returned primal point.

    The barrier duals 1/(t*s) inherit the cancellation noise of tiny slacks;
    a nonnegative least-squares fit of the stationarity system gives a
    certificate for the same x with residuals at the level x deserves.
    Returns whichever pair (fitted or barrier) certifies better.
    """
    J = prob.c.shape[0]
    n, G = prob.dim, prob.n_groups
    grads = prob.q_grads(x)
    cols = []
    for j in range(J):
        col = np.zeros(n + G)
        col[:n] = grads[j]
        col[n + prob.group[j]] = -1.0
        cols.append(col)
    if prob.ball_kind == "power":
        col = np.zeros(n + G)
        col[:n] = -2.0 * x
        cols.append(col)
    else:
        P = prob.n_pairs
        for i in range(P):
            col = np.zeros(n + G)
            col[i] = -2.0 * x[i]
            col[i + P] = -2.0 * x[i + P]
            cols.append(col)
    C = np.stack(cols, axis=1)
    d = np.concatenate([np.zeros(n), np.ones(G)])

    lam0 = np.concatenate([lam_cons0, lam_ball0])
    best = lam0
    best_r = float(np.linalg.norm(C @ lam0 + d))
    support = np.ones(lam0.size, dtype=bool)
    for _ in range(lam0.size):
        lam = np.zeros(lam0.size)
        sol, *_ = np.linalg.lstsq(C[:, support], -d, rcond=None)
        lam[support] = sol
        if np.all(lam >= 0.0):
            r = float(np.linalg.norm(C @ lam + d))
            if r < best_r:
                best, best_r = lam, r
            break
        clipped = np.clip(lam, 0.0, None)
        r = float(np.linalg.norm(C @ clipped + d))
        if r < best_r:
            best, best_r = clipped, r
        support[int(np.argmin(lam))] = False
        if not support.any():
            break
    return best[:J], best[J:]


def solve_maxmin_qcqp(prob, warm_start, tol):
    """Barrier solve; warm_start must have strictly positive slacks.

    Centering continues until (#constraints)/t <= tol, so the returned
    objective is within tol of the subproblem optimum. Going much deeper
    than 1e-8 is counterproductive in doubles: active slacks reach the
    cancellation floor of q_j(x) - gamma and the residuals stop improving.
    """
    x = np.asarray(warm_start, dtype=float).copy()
    if x.shape != (prob.dim,):
        raise ValueError(f"warm start has dimension {x.shape}, expected ({prob.dim},)")
    q0 = prob.q_values(x)
    gamma = np.array(
        [q0[prob.group == g].min() - GAMMA_INIT_MARGIN for g in range(prob.n_groups)]
    )
    s_cons, s_ball = _barrier_state(prob, x, gamma)
    if np.min(s_ball) <= 0:
        raise InfeasibleWarmStartError(
            f"warm start violates ball/moduli constraints (min slack {np.min(s_ball):.3e})"
        )
    if np.min(s_cons) <= 0:  # cannot happen with the margin, kept as a guard
        raise InfeasibleWarmStartError("warm start leaves no epigraph slack")

    if not (tol > 0):
        raise ValueError(f"tol must be positive, got {tol}")
    m = prob.c.shape[0] + (1 if prob.ball_kind == "power" else prob.n_pairs)
    gap_target = tol
    t = T_INIT
    total_newton = 0
    centerings = 0
    path = []
    restarted = False
    x0, gamma0 = x.copy(), gamma.copy()

    while True:
        x, gamma, used, decrement2, stalled = _center(prob, t, x, gamma)
        total_newton += used
        centerings += 1
        if decrement2 > STALL_ACCEPT:
            if not stalled:
                # ran out of the per-call Newton budget while the damped
                # phase was still lowering phi (badly centered warm start);
                # keep centering at the same t from where it left off
                if total_newton > MAX_NEWTON_TOTAL:
                    raise NewtonFailureError(
                        "Newton budget exhausted", t, decrement2, centerings
                    )
                continue
            if not restarted:
                restarted = True
                x, gamma = x0.copy(), gamma0.copy()
                continue
            raise NewtonFailureError(
                "Newton centering stalled twice", t, decrement2, centerings
            )
        path.append(float(gamma.sum()))
        if m / t <= gap_target:
            break
        t *= T_GROWTH

    s_cons, s_ball = _barrier_state(prob, x, gamma)
    lam_cons, lam_ball = _fit_duals(prob, x, 1.0 / (t * s_cons), 1.0 / (t * s_ball))

    grads = prob.q_grads(x)
    stat_x = (lam_cons[:, None] * grads).sum(axis=0)
    if prob.ball_kind == "power":
        stat_x -= lam_ball[0] * 2.0 * x
    else:
        P = prob.n_pairs
        stat_x[:P] -= lam_ball * 2.0 * x[:P]
        stat_x[P:] -= lam_ball * 2.0 * x[P:]
    stat_gamma = 1.0 - np.array(
        [lam_cons[prob.group == g].sum() for g in range(prob.n_groups)]
    )
    residuals = {
        "stationarity": float(np.linalg.norm(np.concatenate([stat_x, stat_gamma]))),
        "primal": float(-min(np.min(s_cons), np.min(s_ball), 0.0)),
        "complementarity": float(lam_cons @ s_cons + lam_ball @ s_ball),
    }
    return QcqpSolution(
        x=x, gamma=gamma, objective=float(gamma.sum()),
        lambda_cons=lam_cons, lambda_ball=lam_ball,
        residuals=residuals, iterations=total_newton, centerings=centerings,
        path_objectives=path,
    )
