import numpy as np
import pytest

from irsmm.channel import ChannelConfig, ChannelSet, assemble_equivalent, gen_channels
from irsmm.model import (
    LN2,
    Scenario,
    init_point,
    precoder_feasible,
    reflect_feasible,
    sum_rate,
)
from irsmm.surrogate import e_quadratic_nats, f_quadratic_nats, joint_nats, lemma1_coeffs
from irsmm.subsolver import MaxMinQcqp, lift_hermitian, lift_vector, solve_maxmin_qcqp
from irsmm._kernels import lse_min, softmin_weights, unit_phases
from irsmm.alg2 import (
    Alg2Config,
    SquaremState,
    build_minorizer_E,
    build_minorizer_F,
    minorizer_E_value,
    minorizer_F_value,
    mm_map_F,
    mm_map_e,
    run_algorithm2,
    smoothed_group_objective,
    squarem_accelerate,
)

SIGMA2 = 10 ** -13.4
MU = 100.0


def desk_scenario(P_T=0.1):
    return Scenario(N=4, M=16, G=2, groups=((0, 1), (2, 3)), P_T=P_T, sigma2=SIGMA2)


def instance(seed, P_T=0.1):
    sc = desk_scenario(P_T)
    ch = gen_channels(ChannelConfig(), sc, seed)
    F0, e0 = init_point(sc)
    return sc, ch, lemma1_coeffs(sc, ch, F0, e0), F0, e0


def synthetic_channels(sc, seed, scale=1e-6):
    rng = np.random.default_rng(seed)
    cplx = lambda *s: (rng.normal(size=s) + 1j * rng.normal(size=s)) * scale
    h_d, h_r, H_dr = cplx(sc.K, sc.N), cplx(sc.K, sc.M), cplx(sc.M, sc.N)
    return ChannelSet(
        h_d=h_d, h_r=h_r, H_dr=H_dr, H=assemble_equivalent(h_d, h_r, H_dr),
        sigma2=np.full(sc.K, SIGMA2), user_pos=np.zeros((sc.K, 2)),
        g_bu=np.ones(sc.K), g_iu=np.ones(sc.K), g_bi=1.0,
    )


def random_feasible_F(sc, rng):
    F = rng.normal(size=(sc.N, sc.G)) + 1j * rng.normal(size=(sc.N, sc.G))
    return F * np.sqrt(sc.P_T) * rng.random() ** 0.25 / np.linalg.norm(F)


def random_torus_e(sc, rng):
    e = unit_phases(rng.normal(size=sc.M + 1) + 1j * rng.normal(size=sc.M + 1))
    e[-1] = 1.0
    return e


def group_lse_F(coeffs, sc, F, mu=MU):
    rt = f_quadratic_nats(coeffs, F)
    return np.array([lse_min(rt[sc.group_of == g], mu) for g in range(sc.G)])


def group_lse_e(coeffs, sc, e, mu=MU):
    rt = e_quadratic_nats(coeffs.const, coeffs.A, coeffs.avec, e)
    return np.array([lse_min(rt[sc.group_of == g], mu) for g in range(sc.G)])


# ---- test-only explicit Hessians of the smoothed block objectives ----

def phi_matrix(coeffs, sc, f, g, mu=MU):
    """Complex-stacked Hessian of the smoothed F-objective of group g at
    vec F = f; curvature along direction d is [d; d*]^H Phi [d; d*]."""
    members = np.flatnonzero(sc.group_of == g)
    F = f.reshape(sc.N, sc.G, order="F")
    rt = f_quadratic_nats(coeffs, F)
    w = softmin_weights(rt[members], mu)
    Qs = [np.kron(np.eye(sc.G), coeffs.B[k]) for k in members]
    ps = [coeffs.C[k].reshape(-1, order="F") - Qs[i] @ f for i, k in enumerate(members)]
    m = sum(w[i] * ps[i] for i in range(len(members)))
    A1 = -sum(w[i] * Qs[i] for i in range(len(members)))
    A1 = A1 - mu * (
        sum(w[i] * np.outer(ps[i], ps[i].conj()) for i in range(len(members)))
        - np.outer(m, m.conj())
    )
    A2 = -mu * (
        sum(w[i] * np.outer(ps[i], ps[i]) for i in range(len(members))) - np.outer(m, m)
    )
    return np.vstack([np.hstack([A1, A2]), np.hstack([A2.conj(), A1.conj()])])


def psi_matrix(coeffs, sc, e, g, mu=MU):
    """Same construction for the smoothed reflection objective."""
    members = np.flatnonzero(sc.group_of == g)
    rt = e_quadratic_nats(coeffs.const, coeffs.A, coeffs.avec, e)
    w = softmin_weights(rt[members], mu)
    ps = [coeffs.avec[k] - coeffs.A[k] @ e for k in members]
    m = sum(w[i] * ps[i] for i in range(len(members)))
    A1 = -sum(w[i] * coeffs.A[k] for i, k in enumerate(members))
    A1 = A1 - mu * (
        sum(w[i] * np.outer(ps[i], ps[i].conj()) for i in range(len(members)))
        - np.outer(m, m.conj())
    )
    A2 = -mu * (
        sum(w[i] * np.outer(ps[i], ps[i]) for i in range(len(members))) - np.outer(m, m)
    )
    return np.vstack([np.hstack([A1, A2]), np.hstack([A2.conj(), A1.conj()])])


def test_phi_matrix_matches_finite_differences():
    sc, _, co, F0, _ = instance(seed=2)
    rng = np.random.default_rng(0)
    f = (rng.normal(size=8) + 1j * rng.normal(size=8)) * np.sqrt(sc.P_T) * 0.3
    for g in range(sc.G):
        Phi = phi_matrix(co, sc, f, g)
        assert np.abs(Phi - Phi.conj().T).max() < 1e-12
        for _ in range(3):
            d = rng.normal(size=8) + 1j * rng.normal(size=8)
            d /= np.linalg.norm(d)
            h = 1e-5

            def val(x):
                return group_lse_F(co, sc, x.reshape(sc.N, sc.G, order="F"))[g]

            fd2 = (val(f + h * d) - 2 * val(f) + val(f - h * d)) / h**2
            zeta = np.concatenate([d, d.conj()])
            quad = float(np.real(zeta.conj() @ Phi @ zeta))
            assert fd2 == pytest.approx(quad, rel=2e-4, abs=1e-8)


def test_alpha_certifies_curvature_on_segments():
    # alpha_g must lower-bound the smallest eigenvalue of the Hessian at
    # every point of every feasible segment; sample 10 gammas per segment
    for seed in range(3):
        sc, _, co, F0, _ = instance(seed=seed)
        minor = build_minorizer_F(sc, co, F0, np.full(sc.G, MU))
        rng = np.random.default_rng(seed + 50)
        f0 = F0.reshape(-1, order="F")
        f1 = random_feasible_F(sc, rng).reshape(-1, order="F")
        for gamma in np.linspace(0.0, 1.0, 10):
            f = (1.0 - gamma) * f0 + gamma * f1
            for g in range(sc.G):
                lam_min = np.linalg.eigvalsh(phi_matrix(co, sc, f, g))[0]
                scale = max(1.0, abs(lam_min))
                assert minor.alpha[g] <= lam_min + 1e-8 * scale


def test_beta_certifies_curvature_on_segments():
    for seed in range(3):
        sc, _, co, _, e0 = instance(seed=seed)
        minor = build_minorizer_E(sc, co, e0, np.full(sc.G, MU))
        rng = np.random.default_rng(seed + 70)
        e1 = random_torus_e(sc, rng)
        for gamma in np.linspace(0.0, 1.0, 10):
            e = (1.0 - gamma) * e0 + gamma * e1  # convex hull of the torus
            for g in range(sc.G):
                lam_min = np.linalg.eigvalsh(psi_matrix(co, sc, e, g))[0]
                scale = max(1.0, abs(lam_min))
                assert minor.beta[g] <= lam_min + 1e-8 * scale


def test_tp_bounds_gradient_norms():
    sc, _, co, F0, e0 = instance(seed=4)
    minor_f = build_minorizer_F(sc, co, F0, np.full(sc.G, MU))
    minor_e = build_minorizer_E(sc, co, e0, np.full(sc.G, MU))
    rng = np.random.default_rng(9)
    for _ in range(100):
        F = random_feasible_F(sc, rng)
        grad = co.C - np.einsum("kij,jg->kig", co.B, F)
        norms2 = np.sum(np.abs(grad) ** 2, axis=(1, 2))
        assert (norms2 <= minor_f.tp + 1e-9 * np.maximum(1.0, minor_f.tp)).all()
        # moduli <= 1 covers the convex hull the segment bound needs
        e = random_torus_e(sc, rng) * rng.random(sc.M + 1)
        ge = co.avec - np.einsum("kmn,n->km", co.A, e)
        norms2e = np.sum(np.abs(ge) ** 2, axis=1)
        assert (norms2e <= minor_e.tp2 + 1e-9 * np.maximum(1.0, minor_e.tp2)).all()


def test_minorizer_F_below_objective_and_tight():
    for seed in range(3):
        sc, _, co, F0, _ = instance(seed=seed)
        minor = build_minorizer_F(sc, co, F0, np.full(sc.G, MU))
        ref = group_lse_F(co, sc, F0)
        at_f0 = minorizer_F_value(minor, F0)
        scale = np.maximum(1.0, np.abs(minor.alpha) * float(np.sum(np.abs(F0) ** 2)))
        np.testing.assert_allclose(at_f0, ref, rtol=0, atol=1e-11 * scale.max())
        rng = np.random.default_rng(seed)
        for _ in range(500):
            F = random_feasible_F(sc, rng)
            lhs = minorizer_F_value(minor, F)
            rhs = group_lse_F(co, sc, F)
            assert (lhs <= rhs + 1e-9 * np.maximum(1.0, np.abs(rhs))).all()


def test_minorizer_E_below_objective_on_torus_and_tight():
    for seed in range(3):
        sc, _, co, _, e0 = instance(seed=seed)
        minor = build_minorizer_E(sc, co, e0, np.full(sc.G, MU))
        ref = group_lse_e(co, sc, e0)
        at_e0 = minorizer_E_value(minor, e0)
        scale = np.maximum(1.0, np.abs(minor.beta) * 2.0 * (sc.M + 1))
        np.testing.assert_allclose(at_e0, ref, rtol=0, atol=1e-11 * scale.max())
        rng = np.random.default_rng(seed)
        for _ in range(500):
            e = random_torus_e(sc, rng)
            lhs = minorizer_E_value(minor, e)
            rhs = group_lse_e(co, sc, e)
            assert (lhs <= rhs + 1e-9 * np.maximum(1.0, np.abs(rhs))).all()


def test_minorizer_F_tangent_at_expansion():
    sc, _, co, F0, _ = instance(seed=6)
    minor = build_minorizer_F(sc, co, F0, np.full(sc.G, MU))
    rng = np.random.default_rng(3)
    h = 1e-6
    for _ in range(5):
        D = rng.normal(size=(sc.N, sc.G)) + 1j * rng.normal(size=(sc.N, sc.G))
        D /= np.linalg.norm(D)
        num = (group_lse_F(co, sc, F0 + h * D) - group_lse_F(co, sc, F0 - h * D)) / (2 * h)
        for g in range(sc.G):
            lin = 2.0 * np.real(np.vdot(minor.U[g], D))
            lin += 2.0 * minor.alpha[g] * np.real(np.vdot(F0, D))
            assert num[g] == pytest.approx(lin, rel=1e-5, abs=1e-6)


def test_minorizer_E_tangent_along_torus_curves():
    # tangency holds along curves that stay on the torus: e(s) = e0 * exp(j s phi)
    sc, _, co, _, e0 = instance(seed=6)
    minor = build_minorizer_E(sc, co, e0, np.full(sc.G, MU))
    rng = np.random.default_rng(4)
    h = 1e-6
    for _ in range(5):
        phi = rng.normal(size=sc.M + 1)
        phi[-1] = 0.0  # keep the pin
        curve = lambda s: e0 * np.exp(1j * s * phi)
        num = (group_lse_e(co, sc, curve(h)) - group_lse_e(co, sc, curve(-h))) / (2 * h)
        # minorizer side analytically: d/ds 2Re{u^H e(s)} at s=0
        vel = 1j * phi * e0
        ana = np.array([2.0 * np.real(np.vdot(minor.u[g], vel)) for g in range(sc.G)])
        np.testing.assert_allclose(num, ana, rtol=1e-5, atol=1e-5)


def test_weights_live_on_group_simplices():
    sc, _, co, F0, e0 = instance(seed=1)
    for minor in (
        build_minorizer_F(sc, co, F0, np.full(sc.G, MU)),
        build_minorizer_E(sc, co, e0, np.full(sc.G, MU)),
    ):
        assert (minor.weights >= 0.0).all()
        for g in range(sc.G):
            assert minor.weights[sc.group_of == g].sum() == pytest.approx(1.0, abs=1e-12)
    minor_f = build_minorizer_F(sc, co, F0, np.full(sc.G, MU))
    minor_e = build_minorizer_E(sc, co, e0, np.full(sc.G, MU))
    assert (minor_f.alpha < 0.0).all() and (minor_e.beta < 0.0).all()
    assert (minor_f.tp >= 0.0).all() and (minor_e.tp2 >= 0.0).all()


def test_weights_concentrate_at_large_mu():
    values = np.array([0.42, 0.45, 0.60])
    w = softmin_weights(values, 1e4)
    assert w[0] > 1.0 - 1e-3
    assert abs(w.sum() - 1.0) < 1e-12


def test_smoothing_sandwich():
    sc, ch, co, F0, e0 = instance(seed=3)
    rng = np.random.default_rng(2)
    for mu in (10.0, 100.0, 1000.0):
        for _ in range(10):
            F = random_feasible_F(sc, rng)
            e = random_torus_e(sc, rng)
            f_bps = smoothed_group_objective(co, F, e, mu)
            vals = joint_nats(co, F, e) / LN2
            for g in range(sc.G):
                sub = vals[sc.group_of == g]
                gap = np.log(sub.size) / (mu * LN2)
                assert f_bps[g] <= sub.min() + 1e-12
                assert sub.min() <= f_bps[g] + gap + 1e-12


def test_map_F_matches_embedded_solver():
    # the quadratic the map maximizes in closed form, handed to the barrier
    # solver as a single-constraint max-min program, must agree in value
    for seed in range(5):
        sc, _, co, F0, e0 = instance(seed=seed)
        mus = np.full(sc.G, MU)
        minor = build_minorizer_F(sc, co, F0, mus)
        F_new = mm_map_F(sc, co, F0, e0, MU)
        assert precoder_feasible(F_new, sc.P_T)
        Usum = minor.U.sum(axis=0)
        asum = float(minor.alpha.sum())
        csum = float(minor.cons.sum())
        # the argmax is invariant to positive rescaling; normalizing by the
        # curvature keeps the barrier solver on O(1) data
        s = abs(asum)
        dim = sc.N * sc.G
        prob = MaxMinQcqp(
            c=np.array([csum / s]),
            L=lift_vector(Usum.reshape(-1, order="F") / s)[None, :],
            Q=lift_hermitian(np.eye(dim))[None, :, :],
            group=np.zeros(1, dtype=int),
            n_groups=1,
            ball_kind="power",
            ball_r2=sc.P_T,
        )
        x0 = lift_vector(F0.reshape(-1, order="F") * 0.5)
        sol = solve_maxmin_qcqp(prob, x0, tol=1e-9)
        val_map = csum + 2.0 * np.real(np.vdot(Usum, F_new)) + asum * np.sum(np.abs(F_new) ** 2)
        assert val_map / s >= sol.objective - 1e-6 * max(1.0, abs(sol.objective))


def test_map_e_beats_phase_grid_at_m2():
    sc = Scenario(N=4, M=2, G=2, groups=((0, 1), (2, 3)), P_T=0.001, sigma2=SIGMA2)
    ch = synthetic_channels(sc, seed=12)
    F0, e0 = init_point(sc)
    co = lemma1_coeffs(sc, ch, F0, e0)
    mus = np.full(sc.G, MU)
    minor = build_minorizer_E(sc, co, e0, mus)
    e_new = mm_map_e(sc, co, e0, F0, MU)
    assert reflect_feasible(e_new) and e_new[-1] == 1.0
    val_map = minorizer_E_value(minor, e_new).sum()
    phases = np.linspace(0.0, 2.0 * np.pi, 100, endpoint=False)
    p1, p2 = np.meshgrid(phases, phases, indexing="ij")
    E = np.stack(
        [np.exp(1j * p1.ravel()), np.exp(1j * p2.ravel()), np.ones(p1.size)], axis=1
    )
    s = minor.u.sum(axis=0)
    vals = minor.cons.sum() + 2.0 * np.real(E @ s.conj())
    assert val_map >= vals.max() - 1e-6


def test_map_degenerate_inputs_return_previous():
    sc, _, co, F0, e0 = instance(seed=0)
    # zero linear data: fabricate coefficients with a=0, b=0
    zeroed = type(co)(
        a=np.zeros_like(co.a), b=np.zeros_like(co.b), const=co.const,
        B=np.zeros_like(co.B), C=np.zeros_like(co.C),
        A=np.zeros_like(co.A), avec=np.zeros_like(co.avec),
        F_n=co.F_n, e_n=co.e_n, group=co.group, H=co.H,
    )
    F_out = mm_map_F(sc, zeroed, F0, e0, MU)
    assert F_out is F0
    e_out = mm_map_e(sc, zeroed, e0, F0, MU)
    assert e_out is e0


def test_squarem_omega_minus_one_reproduces_double_step():
    rng = np.random.default_rng(5)
    x_n = rng.normal(size=(4, 2)) + 1j * rng.normal(size=(4, 2))
    x1 = rng.normal(size=(4, 2)) + 1j * rng.normal(size=(4, 2))
    x2 = rng.normal(size=(4, 2)) + 1j * rng.normal(size=(4, 2))
    J1 = x1 - x_n
    J2 = x2 - 2.0 * x1 + x_n
    omega = -1.0
    cand = x_n - 2.0 * omega * J1 + omega**2 * J2
    np.testing.assert_allclose(cand, x2, rtol=0, atol=1e-12)


def test_squarem_zero_j2_returns_double_step():
    step = np.full(3, 0.25 + 0.0j)
    out, st = squarem_accelerate(
        lambda x: x + step, np.zeros(3, dtype=complex), lambda x: 0.0, lambda x, ref: x
    )
    np.testing.assert_allclose(out, 2 * step, rtol=0, atol=0)
    assert isinstance(st, SquaremState)
    assert st.omega == -1.0 and st.backtracks == 0


def test_squarem_backtracks_to_double_step_at_cap():
    # objective rejects every extrapolated candidate, so omega halves to the
    # cap and the plain double step is taken outright (J2 must be nonzero or
    # the shortcut path skips extrapolation entirely)
    calls = {"n": 0}

    def map_fn(x):
        calls["n"] += 1
        return 1.5 * x + np.ones(2)

    x_n = np.zeros(2)
    x2_expected = 1.5 * (1.5 * x_n + np.ones(2)) + np.ones(2)

    def objective(x):
        return 1.0 if np.array_equal(x, x_n) else 0.0

    out, st = squarem_accelerate(map_fn, x_n, objective, lambda x, ref: x, backtrack_cap=7)
    np.testing.assert_allclose(out, x2_expected, rtol=0, atol=0)
    assert st.backtracks == 7
    assert st.omega == -1.0
    assert calls["n"] == 2  # map applied exactly twice regardless of backtracking


def test_squarem_accepts_exact_extrapolation_of_linear_map():
    # for an affine contraction the extrapolated point is the fixed point
    target = np.array([1.0, -2.0])
    out, st = squarem_accelerate(
        lambda x: target + 0.5 * (x - target),
        np.zeros(2),
        lambda x: -float(np.sum((x - target) ** 2)),
        lambda x, ref: x,
    )
    np.testing.assert_allclose(out, target, rtol=0, atol=1e-12)
    assert st.backtracks == 0


def test_run_monotone_and_feasible():
    for seed in range(5):
        sc = desk_scenario()
        ch = gen_channels(ChannelConfig(), sc, seed)
        F0, e0 = init_point(sc)
        res = run_algorithm2(sc, ch, F0, e0, Alg2Config(eps=1e-6, max_outer=120))
        d = np.diff(res.trace.objective_bpshz)
        assert (d >= -1e-9).all()
        assert precoder_feasible(res.F, sc.P_T)
        assert reflect_feasible(res.e)
        assert len(res.trace.objective_bpshz) == 2 * res.iterations + 1


def test_accelerated_run_dominates_plain_run():
    sc = desk_scenario(P_T=0.001)
    ch = gen_channels(ChannelConfig(), sc, seed=8)
    F0, e0 = init_point(sc)
    plain = run_algorithm2(
        sc, ch, F0, e0, Alg2Config(eps=1e-12, max_outer=300, accelerate=False)
    )
    accel = run_algorithm2(
        sc, ch, F0, e0, Alg2Config(eps=1e-12, max_outer=300)
    )
    d = np.diff(plain.trace.objective_bpshz)
    assert (d >= -1e-9).all()
    assert (np.asarray(plain.trace.omega) == 0.0).all()
    assert accel.trace.objective_bpshz[-1] >= plain.trace.objective_bpshz[-1] - 1e-9


def test_converged_run_reports_small_kkt():
    sc = desk_scenario(P_T=0.001)
    ch = gen_channels(ChannelConfig(), sc, seed=7)
    F0, e0 = init_point(sc)
    res = run_algorithm2(sc, ch, F0, e0, Alg2Config(eps=1e-10, max_outer=20000))
    assert res.converged
    assert res.kkt["stationarity_F"] < 1e-3
    assert res.kkt["stationarity_e"] < 1e-3
    assert res.kkt["power_multiplier"] >= 0.0


def test_rejects_infeasible_initial_points():
    sc = desk_scenario()
    ch = gen_channels(ChannelConfig(), sc, seed=0)
    F0, e0 = init_point(sc)
    with pytest.raises(ValueError):
        run_algorithm2(sc, ch, 3.0 * F0, e0)
    bad = e0.copy()
    bad[0] = 0.5
    with pytest.raises(ValueError):
        run_algorithm2(sc, ch, F0, bad)


def test_config_validation():
    with pytest.raises(ValueError):
        Alg2Config(mu=0.0)
    with pytest.raises(ValueError):
        Alg2Config(eps=-1.0)
    with pytest.raises(ValueError):
        Alg2Config(backtrack_cap=-1)
