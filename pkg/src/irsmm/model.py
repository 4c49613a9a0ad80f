"""Problem instance, rate evaluation, feasibility, and initialization.

Precoders F are plain complex (N, G) arrays, reflect vectors e plain (M+1,)
arrays with |e_m| = 1 for m < M and e[M] = 1. Rates are bps/Hz throughout
this module; natural-log forms live inside the surrogate machinery only.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import eq_products

LN2 = math.log(2.0)

POWER_SLACK = 1e-9
MODULUS_SLACK = 1e-9


@dataclass(frozen=True)
class Scenario:
    """Dimensions, grouping, power budget, and nominal noise power."""

    N: int
    M: int
    G: int
    groups: tuple  # groups[g] = tuple of user indices in group g
    P_T: float  # watts
    sigma2: float  # watts

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(tuple(g) for g in self.groups))
        if len(self.groups) != self.G:
            raise ValueError(f"expected {self.G} groups, got {len(self.groups)}")
        if any(len(g) == 0 for g in self.groups):
            raise ValueError("every group must be nonempty")
        users = [k for g in self.groups for k in g]
        if sorted(users) != list(range(len(users))):
            raise ValueError("groups must be disjoint and cover users 0..K-1")
        if len(users) < self.G:
            raise ValueError("need at least one user per group")
        if self.P_T <= 0:
            raise ValueError("P_T must be positive")
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")

    @property
    def K(self):
        return sum(len(g) for g in self.groups)

    @property
    def group_of(self):
        out = np.empty(self.K, dtype=int)
        for g, members in enumerate(self.groups):
            for k in members:
                out[k] = g
        return out


@dataclass
class ConvergenceTrace:
    """Per-iteration log of one solver run. Objective is the solver's
    monotone metric in bps/Hz; nondecreasing up to 1e-9 per step."""

    iteration: list = field(default_factory=list)
    objective_bpshz: list = field(default_factory=list)
    wall_ms: list = field(default_factory=list)
    omega: list = field(default_factory=list)  # extrapolation step, alg2 only
    tau_active: list = field(default_factory=list)  # power constraint tight
    backtracks: list = field(default_factory=list)

    def append(self, it, obj, wall, omega=0.0, tau_active=False, backtracks=0):
        self.iteration.append(it)
        self.objective_bpshz.append(obj)
        self.wall_ms.append(wall)
        self.omega.append(omega)
        self.tau_active.append(tau_active)
        self.backtracks.append(backtracks)


def precoder_feasible(F, P_T, slack=POWER_SLACK):
    return float(np.sum(np.abs(F) ** 2)) <= P_T + slack


def reflect_feasible(e, slack=MODULUS_SLACK):
    e = np.asarray(e)
    if e[-1] != 1.0:
        return False
    return bool(np.max(np.abs(np.abs(e[:-1]) - 1.0)) <= slack)


def sinr_all(scenario, channels, F, e):
    """Per-user SINR given the full precoder and reflect vector."""
    T, _, _ = eq_products(channels.H, e, F)  # (K, G): T[k, i] = e^H H_k f_i
    p = np.abs(T) ** 2
    grp = scenario.group_of
    k_idx = np.arange(scenario.K)
    sig = p[k_idx, grp]
    total = p.sum(axis=1) + channels.sigma2
    return sig / (total - sig)


def rates_all(scenario, channels, F, e):
    """Per-user rate log2(1 + SINR), shape (K,)."""
    return np.log2(1.0 + sinr_all(scenario, channels, F, e))


def rate_k(scenario, channels, F, e, k):
    """Rate of user k in bps/Hz."""
    if not 0 <= k < scenario.K:
        raise IndexError(f"user index {k} out of range")
    return float(rates_all(scenario, channels, F, e)[k])


def group_min_rates(scenario, channels, F, e):
    r = rates_all(scenario, channels, F, e)
    return np.array([min(r[k] for k in members) for members in scenario.groups])


def sum_rate(scenario, channels, F, e):
    """Sum over groups of the minimum user rate, bps/Hz."""
    return float(group_min_rates(scenario, channels, F, e).sum())


@dataclass
class SolveResult:
    """What a solver run returns: final point, trace, KKT diagnostics."""

    F: np.ndarray
    e: np.ndarray
    trace: ConvergenceTrace
    kkt: dict
    iterations: int
    converged: bool


def rate_gradients(scenario, channels, F, e):
    """Wirtinger gradients of the per-user rate in nats.

    Returns (gradF, grade): gradF[k] is dR_k/dconj(F) with shape (N, G),
    grade[k] is dR_k/dconj(e) with shape (M+1,). Used by the KKT residual
    diagnostics of both solvers.
    """
    T, W, V = eq_products(channels.H, e, F)
    grp = scenario.group_of
    k_idx = np.arange(scenario.K)
    p = np.abs(T) ** 2
    sig = p[k_idx, grp]
    r = p.sum(axis=1) + channels.sigma2
    r_minus = r - sig
    # R_k = ln r_k - ln r_minus,k; the group column only enters the first term
    coef = np.broadcast_to((1.0 / r - 1.0 / r_minus)[:, None], (scenario.K, scenario.G)).copy()
    coef[k_idx, grp] = 1.0 / r
    w = W.conj()  # H_k^H e
    gradF = w[:, :, None] * (T * coef)[:, None, :]
    grade = np.einsum("kmi,ki->km", V, T.conj() * coef)
    return gradF, grade


def init_point(scenario, channels=None, random_directions=False, rng=None):
    """Starting point: uniform power split across groups, all-ones reflect.

    Each column carries P_T/G along the normalized all-ones direction; with
    random_directions=True the direction is drawn CN(0, I) instead (used by
    the initialization-robustness experiment).
    """
    N, G, M = scenario.N, scenario.G, scenario.M
    if random_directions:
        if rng is None:
            rng = np.random.default_rng()
        D = rng.standard_normal((N, G)) + 1j * rng.standard_normal((N, G))
    else:
        D = np.ones((N, G), dtype=np.complex128)
    D = D / np.linalg.norm(D, axis=0, keepdims=True)
    F = np.sqrt(scenario.P_T / G) * D
    e = np.ones(M + 1, dtype=np.complex128)
    return F, e
