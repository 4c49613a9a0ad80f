import numpy as np
import pytest

from irsmm.channel import ChannelConfig, gen_channels
from irsmm.model import (
    ConvergenceTrace,
    Scenario,
    init_point,
    precoder_feasible,
    rate_k,
    rates_all,
    reflect_feasible,
    sum_rate,
)


def scenario(N=2, M=4, G=2, K=4, P_T=0.1):
    groups = tuple(tuple(range(g, K, G)) for g in range(G))
    return Scenario(N=N, M=M, G=G, groups=groups, P_T=P_T, sigma2=10 ** -13.4)


def feasible_point(sc, rng):
    F = rng.normal(size=(sc.N, sc.G)) + 1j * rng.normal(size=(sc.N, sc.G))
    F *= np.sqrt(sc.P_T) / np.linalg.norm(F)
    e = np.empty(sc.M + 1, dtype=complex)
    e[: sc.M] = np.exp(1j * rng.uniform(0, 2 * np.pi, sc.M))
    e[sc.M] = 1.0
    return F, e


# ------------------------------------------------------------------ scenario


def test_scenario_validation():
    with pytest.raises(ValueError):
        Scenario(N=2, M=4, G=2, groups=((0,),), P_T=0.1, sigma2=1.0)  # wrong count
    with pytest.raises(ValueError):
        Scenario(N=2, M=4, G=2, groups=((0,), ()), P_T=0.1, sigma2=1.0)  # empty group
    with pytest.raises(ValueError):
        Scenario(N=2, M=4, G=2, groups=((0, 1), (1,)), P_T=0.1, sigma2=1.0)  # overlap
    with pytest.raises(ValueError):
        Scenario(N=2, M=4, G=1, groups=((0, 2),), P_T=0.1, sigma2=1.0)  # gap
    with pytest.raises(ValueError):
        Scenario(N=2, M=4, G=1, groups=((0,),), P_T=0.0, sigma2=1.0)
    sc = scenario()
    assert sc.K == 4
    assert list(sc.group_of) == [0, 1, 0, 1]


# --------------------------------------------------------------------- rates


def test_zero_precoder_zero_rate():
    sc = scenario()
    cs = gen_channels(ChannelConfig(), sc, seed=1)
    F = np.zeros((sc.N, sc.G), dtype=complex)
    _, e = init_point(sc)
    assert sum_rate(sc, cs, F, e) == 0.0
    assert rate_k(sc, cs, F, e, 0) == 0.0


def test_matched_single_user_rate():
    # G=1, no IRS path, matched beamformer: rate = log2(1 + P_T) at sigma2 = 1
    class FakeSet:
        pass

    N, M, P_T = 3, 4, 5.0
    sc = Scenario(N=N, M=M, G=1, groups=((0,),), P_T=P_T, sigma2=1.0)
    u = np.zeros(N, dtype=complex)
    u[1] = 1.0
    H = np.zeros((1, M + 1, N), dtype=complex)
    H[0, M, :] = u.conj()  # h_d = u, IRS rows zero
    cs = FakeSet()
    cs.H = H
    cs.sigma2 = np.array([1.0])
    F = np.sqrt(P_T) * u[:, None]
    e = np.ones(M + 1, dtype=complex)
    assert rate_k(sc, cs, F, e, 0) == pytest.approx(np.log2(1 + P_T), rel=1e-12)


def test_rate_matches_direct_evaluation():
    sc = scenario(N=2, M=4, G=2, K=2)
    cs = gen_channels(ChannelConfig(), sc, seed=3)
    rng = np.random.default_rng(4)
    F, e = feasible_point(sc, rng)
    for k in range(sc.K):
        g = sc.group_of[k]
        t = np.array([e.conj() @ cs.H[k] @ F[:, i] for i in range(sc.G)])
        p = np.abs(t) ** 2
        want = np.log2(1 + p[g] / (p.sum() - p[g] + cs.sigma2[k]))
        assert rate_k(sc, cs, F, e, k) == pytest.approx(want, rel=1e-12)


def test_sum_rate_is_min_then_sum():
    sc = scenario(K=6, G=2)
    cs = gen_channels(ChannelConfig(), sc, seed=5)
    rng = np.random.default_rng(6)
    F, e = feasible_point(sc, rng)
    r = rates_all(sc, cs, F, e)
    want = sum(min(r[k] for k in members) for members in sc.groups)
    assert sum_rate(sc, cs, F, e) == pytest.approx(want, rel=1e-12)


def test_singleton_groups_sum_all_rates():
    sc = Scenario(N=2, M=4, G=3, groups=((0,), (1,), (2,)), P_T=0.1, sigma2=1e-13)
    cs = gen_channels(ChannelConfig(), sc, seed=7)
    rng = np.random.default_rng(8)
    F, e = feasible_point(sc, rng)
    assert sum_rate(sc, cs, F, e) == pytest.approx(rates_all(sc, cs, F, e).sum(), rel=1e-12)


def test_sum_rate_permutation_invariance():
    sc = scenario(K=4, G=2)
    cs = gen_channels(ChannelConfig(), sc, seed=9)
    rng = np.random.default_rng(10)
    F, e = feasible_point(sc, rng)
    base = sum_rate(sc, cs, F, e)
    # permute users within groups
    sc_p = Scenario(N=sc.N, M=sc.M, G=2, groups=((2, 0), (3, 1)), P_T=sc.P_T, sigma2=sc.sigma2)
    assert sum_rate(sc_p, cs, F, e) == pytest.approx(base, rel=1e-12)
    # swap group labels together with precoder columns
    sc_s = Scenario(N=sc.N, M=sc.M, G=2, groups=(sc.groups[1], sc.groups[0]), P_T=sc.P_T, sigma2=sc.sigma2)
    # relabeling groups changes which users belong to group 0, so rebuild the map:
    # users 1,3 are now group 0 and users 0,2 group 1, matched by swapping F's columns
    assert sum_rate(sc_s, cs, F[:, ::-1], e) == pytest.approx(base, rel=1e-12)


def test_rate_invariant_to_unit_scalar_on_column():
    sc = scenario()
    cs = gen_channels(ChannelConfig(), sc, seed=11)
    rng = np.random.default_rng(12)
    F, e = feasible_point(sc, rng)
    F2 = F.copy()
    F2[:, 0] *= np.exp(1j * 0.73)
    for k in range(sc.K):
        assert rate_k(sc, cs, F2, e, k) == pytest.approx(rate_k(sc, cs, F, e, k), rel=1e-12)


# -------------------------------------------------------------- feasibility


def test_feasibility_helpers():
    sc = scenario()
    F, e = init_point(sc)
    assert precoder_feasible(F, sc.P_T)
    assert reflect_feasible(e)
    assert not precoder_feasible(2 * F, sc.P_T)
    bad = e.copy()
    bad[0] = 1.5
    assert not reflect_feasible(bad)
    bad2 = e.copy()
    bad2[-1] = np.exp(1j * 0.1)
    assert not reflect_feasible(bad2)


# ------------------------------------------------------------------- init


def test_init_point_uniform_power():
    sc = scenario(N=4, G=2, K=4, P_T=0.25)
    F, e = init_point(sc)
    assert np.sum(np.abs(F) ** 2) == pytest.approx(sc.P_T, abs=1e-12 * sc.P_T)
    for g in range(sc.G):
        assert np.sum(np.abs(F[:, g]) ** 2) == pytest.approx(sc.P_T / 2, rel=1e-12)
    assert np.all(np.abs(np.abs(e[:-1]) - 1) < 1e-15)
    assert e[-1] == 1.0


def test_init_point_random_directions():
    sc = scenario(N=4, G=2, K=4)
    rng = np.random.default_rng(0)
    F, e = init_point(sc, random_directions=True, rng=rng)
    assert np.sum(np.abs(F) ** 2) == pytest.approx(sc.P_T, rel=1e-12)
    for g in range(sc.G):
        assert np.sum(np.abs(F[:, g]) ** 2) == pytest.approx(sc.P_T / sc.G, rel=1e-12)
    F2, _ = init_point(sc, random_directions=True, rng=np.random.default_rng(0))
    np.testing.assert_array_equal(F, F2)


# ------------------------------------------------------------------- trace


def test_trace_append():
    tr = ConvergenceTrace()
    tr.append(0, 1.0, 0.5)
    tr.append(1, 1.2, 1.0, omega=-1.5, tau_active=True, backtracks=2)
    assert tr.iteration == [0, 1]
    assert tr.objective_bpshz == [1.0, 1.2]
    assert tr.omega[1] == -1.5
    assert tr.tau_active == [False, True]
