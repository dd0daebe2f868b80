import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crprecoder import (ChannelSet, DualIterate, LineSearchStalled, MaxIterations, NewtonStep,
                        Scenario, SolverOptions, assemble_newton, build_spc_context,
                        build_zf_context, generate_channels, kkt_residual, line_search,
                        mac_objective, solve_saddle)
from crprecoder.baselines import _DenseKkt, dense_newton_step, naive_newton_oracle
from crprecoder.saddle import SaddleProblem, build_layout

from conftest import db, instance, random_complex, random_pd


def scalar_instance(h=1.0, P=10.0):
    sc = Scenario(N=1, n=(1,), n_pu=(), P_total=P, I=())
    ch = ChannelSet(H=[np.array([[h]], dtype=complex)])
    return sc, ch, build_zf_context(sc, ch)


def scalar_kkt_point(h, P, t):
    """Hand-solved centered point of the 1-user, 1-antenna barrier problem.

    With Omega = psi and Pi = psi + |h|^2 q, the budgets force q = P and
    psi = 1 (p = [P]). Stationarity in q: |h|^2/Pi + 1/(t q) = mu1.
    Stationarity in psi: 1/Pi - 1/psi - 1/(t psi) + mu2 P = 0.
    """
    h2 = abs(h) ** 2
    Pi = 1.0 + h2 * P
    mu1 = h2 / Pi + 1.0 / (t * P)
    mu2 = (1.0 + 1.0 / t - 1.0 / Pi) / P
    return DualIterate([np.array([[P]], dtype=complex)], np.array([1.0]), mu1, mu2, t)


def explicit_omegas(ctx, scenario, psi):
    """Omega_k from Lambda = diag(eta) + sum_m lambda_m G_m^H G_m (PAPC)."""
    N = ctx.N
    Lam = np.diag(psi[:N]).astype(complex)
    out = []
    for k, V in enumerate(ctx.Vbar):
        Om = V.conj().T @ Lam @ V
        for m, G in enumerate(ctx.Geff[k]):
            Om = Om + psi[N + m] * G.conj().T @ G
        out.append(Om)
    return out


# -- objective ----------------------------------------------------------------

def test_objective_zero_covariances(small_scenario):
    sc, _, ctx = instance(small_scenario)
    it = DualIterate([np.zeros((2, 2), complex)] * 2, np.ones(sc.N + sc.M), 1.0, 1.0, 50.0)
    assert mac_objective(ctx, it) == 0.0


def test_objective_scalar():
    _, _, ctx = scalar_instance(h=0.7 - 0.2j)
    it = DualIterate([np.array([[3.0 + 0j]])], np.array([0.4]), 1.0, 1.0, 50.0)
    expected = np.log(0.4 + abs(0.7 - 0.2j) ** 2 * 3.0) - np.log(0.4)
    assert mac_objective(ctx, it) == pytest.approx(expected, abs=1e-14)


def test_objective_matches_eigenvalue_oracle(rng):
    sc, _, ctx = instance(Scenario.uniform(8, 2, 2, P=10.0, I=1.0), 2)
    psi = rng.uniform(0.2, 2.0, sc.N + sc.M)
    Q = [random_pd(rng, 2) for _ in range(2)]
    it = DualIterate(Q, psi, 1.0, 1.0, 50.0)
    total = 0.0
    for H, Qk, Om in zip(ctx.Heff, Q, explicit_omegas(ctx, sc, psi)):
        lam = np.linalg.eigvals(np.linalg.solve(Om, Om + H.conj().T @ Qk @ H))
        total += np.sum(np.log(lam.real))
    assert mac_objective(ctx, it) == pytest.approx(total, abs=1e-12 * max(1.0, abs(total)))


# -- residual -------------------------------------------------------------------

@pytest.mark.parametrize("t", [1.0, 50.0, 1e4])
def test_residual_vanishes_at_analytic_kkt_point(t):
    sc, _, ctx = scalar_instance(h=1.3, P=10.0)
    r, parts = kkt_residual(ctx, scalar_kkt_point(1.3, 10.0, t), sc)
    assert r < 1e-9
    assert set(parts) == {"stationarity_Q", "u", "w", "trace_Q", "budget_psi"}


def test_residual_below_tolerance_after_solve(small_scenario):
    sc, _, ctx = instance(small_scenario)
    it, _ = solve_saddle(ctx, sc)
    assert kkt_residual(ctx, it, sc)[0] < 1e-5


def test_residual_grows_linearly_under_perturbation():
    sc, _, ctx = scalar_instance(h=1.3)
    base = scalar_kkt_point(1.3, 10.0, 50.0)
    growth = []
    for d in (1e-4, 1e-5, 1e-6):
        it = base.copy()
        it.psi = it.psi + d
        growth.append(kkt_residual(ctx, it, sc)[0] / d)
    assert growth[0] == pytest.approx(growth[2], rel=1e-2)
    assert growth[1] == pytest.approx(growth[2], rel=1e-3)


# -- Newton step ------------------------------------------------------------------

def test_step_is_zero_at_kkt_point():
    sc, _, ctx = scalar_instance(h=1.3)
    step = assemble_newton(ctx, scalar_kkt_point(1.3, 10.0, 50.0), sc)
    assert np.max(np.abs(step.as_vector())) < 1e-9


def _oracle_small():
    sc = Scenario(N=3, n=(1,), n_pu=(1,), P_total=4.0, I=(0.5,))
    return instance(sc, 1)


def test_step_matches_dense_oracle_small():
    sc, _, ctx = _oracle_small()
    prob = SaddleProblem(ctx, build_layout(ctx, sc))
    it = prob.initial_iterate(50.0)
    for _ in range(6):
        a = prob.newton_step(it)
        b = dense_newton_step(ctx, sc, it)
        assert np.max(np.abs(a.as_vector() - b.as_vector())) <= 1e-8 * max(
            1.0, np.max(np.abs(b.as_vector())))
        _, it, _ = prob.line_search(it, a, SolverOptions())


@pytest.mark.parametrize("mode", ["PAPC", "SPC"])
def test_step_solves_linearized_kkt(mode):
    sc, _, ctx = instance(Scenario.uniform(6, 2, 1, P=10.0, I=1.0, power_mode=mode), 4)
    prob = SaddleProblem(ctx, build_layout(ctx, sc))
    dense = _DenseKkt(ctx, sc)
    it = prob.initial_iterate(50.0)
    for _ in range(3):
        step = prob.newton_step(it)
        Fv = dense.residual(it)
        Jm = dense.jacobian(it)
        from crprecoder.baselines import hermitian_to_vec
        dx = np.concatenate([hermitian_to_vec(dQ) for dQ in step.dQ]
                            + [step.dpsi, [step.dmu1, step.dmu2]])
        assert np.linalg.norm(Jm @ dx + Fv) <= 1e-8 * (1.0 + np.linalg.norm(Fv))
        _, it, _ = prob.line_search(it, step, SolverOptions())


def test_dense_jacobian_matches_finite_differences():
    sc, _, ctx = _oracle_small()
    dense = _DenseKkt(ctx, sc)
    it = SaddleProblem(ctx, build_layout(ctx, sc)).initial_iterate(50.0)
    it.Q = [np.array([[1.7 + 0j]])]
    it.psi = np.array([0.8, 1.1, 0.6, 1.4])
    Jm = dense.jacobian(it)
    h = 1e-6
    from crprecoder.baselines import vec_to_hermitian
    x0 = np.concatenate([[1.7], it.psi, [it.mu1, it.mu2]])
    for c in range(x0.size):
        cols = []
        for sgn in (1, -1):
            x = x0.copy()
            x[c] += sgn * h
            cand = DualIterate([vec_to_hermitian(x[:1], 1)], x[1:5], x[5], x[6], it.t)
            cols.append(dense.residual(cand))
        fd = (cols[0] - cols[1]) / (2 * h)
        np.testing.assert_allclose(Jm[:, c], fd, rtol=1e-5, atol=1e-6)


def test_reduced_matrix_is_real(small_scenario):
    sc, _, ctx = instance(small_scenario)
    prob = SaddleProblem(ctx, build_layout(ctx, sc))
    it = prob.initial_iterate(50.0)
    for _ in range(3):
        A, b, sigmas, imag = prob.reduced_system(it)
        assert imag <= 1e-12
        assert A.dtype == float and A.shape == (sc.N + sc.M + 2,) * 2
        assert len(sigmas) == sc.K and sigmas[0].shape == (sc.N + sc.M + 2, 2, 2)
        for S in sigmas:
            np.testing.assert_allclose(S, np.swapaxes(S, -1, -2).conj(), atol=1e-12)
        _, it, _ = prob.line_search(it, prob.newton_step(it), SolverOptions())


# -- line search ----------------------------------------------------------------

def test_line_search_full_step_near_solution(small_scenario):
    sc, _, ctx = instance(small_scenario)
    it, _ = solve_saddle(ctx, sc, SolverOptions(eps_residual=1e-3, gamma=1.0))
    step = assemble_newton(ctx, it, sc)
    assert line_search(ctx, it, step, SolverOptions(), sc) == 1.0


def test_line_search_rejects_zero_step(small_scenario):
    # r(it + s*0) = r(it) never meets the sufficient-decrease test when r > 0
    sc, _, ctx = instance(small_scenario)
    it = SaddleProblem(ctx, build_layout(ctx, sc)).initial_iterate(50.0)
    with pytest.raises(LineSearchStalled):
        line_search(ctx, it, NewtonStep.zero_like(it), SolverOptions(), sc)


def test_line_search_keeps_q_positive(small_scenario):
    sc, _, ctx = instance(small_scenario)
    prob = SaddleProblem(ctx, build_layout(ctx, sc))
    it = prob.initial_iterate(50.0)
    step = prob.newton_step(it)
    # make the full step leave the cone: Q + dQ has eigenvalue -1
    step.dQ[0] = -2.0 * np.eye(2)
    s, cand, r1 = prob.line_search(it, step, SolverOptions())
    assert s < 1.0
    assert np.linalg.eigvalsh(cand.Q[0]).min() > 0
    assert r1 <= (1 - 0.01 * s) * prob.residual(it)[0]


def test_line_search_stalls_on_bad_direction(small_scenario):
    sc, _, ctx = instance(small_scenario)
    prob = SaddleProblem(ctx, build_layout(ctx, sc))
    it = prob.initial_iterate(50.0)
    step = prob.newton_step(it)
    bad = NewtonStep([-dQ for dQ in step.dQ], -step.dpsi, -step.dmu1, -step.dmu2)
    with pytest.raises(LineSearchStalled):
        prob.line_search(it, bad, SolverOptions())


# -- full solve -----------------------------------------------------------------

def test_single_link_value():
    sc, _, ctx = scalar_instance(h=1.0, P=10.0)
    it, _ = solve_saddle(ctx, sc)
    assert mac_objective(ctx, it) == pytest.approx(np.log(11.0), abs=1e-6)
    assert it.Q[0][0, 0].real == pytest.approx(10.0, abs=1e-6)


@pytest.mark.parametrize("N", [6, 8, 10])
def test_two_user_traces_converge(N):
    sc, _, ctx = instance(Scenario.uniform(N, 2, 1, P=db(10), I=db(5)))
    it, trace = solve_saddle(ctx, sc, SolverOptions(gamma=1.0))
    assert trace.residual[-1] < 1e-5
    assert trace.inner_iterations <= 100
    assert trace.step[-1] == 1.0 and trace.step[-2] == 1.0


def test_trajectory_stays_in_domain_and_decreases(small_scenario):
    sc, _, ctx = instance(small_scenario)
    prob = SaddleProblem(ctx, build_layout(ctx, sc))
    opts = SolverOptions()
    it = prob.initial_iterate(opts.t0)
    r = prob.residual(it)[0]
    while r >= opts.eps_residual:
        s, it, r_new = prob.line_search(it, prob.newton_step(it), opts, r)
        assert np.min(it.psi) > 0
        assert all(np.linalg.eigvalsh(Q).min() > 0 for Q in it.Q)
        assert r_new <= (1 - opts.alpha * s) * r
        r = r_new


def test_equalities_hold_at_convergence(small_scenario):
    sc, _, ctx = instance(small_scenario)
    it, _ = solve_saddle(ctx, sc)
    p = np.concatenate([sc.per_antenna, sc.I])
    assert abs(sum(np.trace(Q).real for Q in it.Q) - sc.P_total) <= 1e-6 * sc.P_total
    assert abs(p @ it.psi - sc.P_total) <= 1e-6 * sc.P_total


def test_gap_schedule(small_scenario):
    sc, _, ctx = instance(small_scenario)
    opts = SolverOptions(gamma=10.0, eps_gap=1e-4)
    it, trace = solve_saddle(ctx, sc, opts)
    m_total = sum(sc.n) + sc.N + sc.M
    assert trace.gap[-1] == pytest.approx(m_total / it.t)
    assert trace.gap[-1] <= 1e-4 and trace.gap[-2] > 1e-4
    _, single = solve_saddle(ctx, sc, SolverOptions(gamma=1.0))
    assert single.gap == [m_total / 50.0]


def test_max_iterations_carries_trace(small_scenario):
    sc, _, ctx = instance(small_scenario)
    with pytest.raises(MaxIterations) as info:
        solve_saddle(ctx, sc, SolverOptions(max_inner=2))
    assert len(info.value.trace.residual) == 3


def test_options_validation():
    for bad in (dict(alpha=0.6), dict(beta=1.0), dict(t0=0.0), dict(gamma=0.5)):
        with pytest.raises(ValueError):
            SolverOptions(**bad)


def test_objective_matches_oracle_solver():
    sc, _, ctx = instance(Scenario(N=4, n=(1, 1), n_pu=(1,), P_total=5.0, I=(0.5,)), 2)
    it, _ = solve_saddle(ctx, sc)
    ref, _ = naive_newton_oracle(ctx, sc)
    f, fr = mac_objective(ctx, it), mac_objective(ctx, ref)
    assert abs(f - fr) <= 1e-4 * abs(fr)


# -- sum power variant -------------------------------------------------------------

def water_filling_value(gains, P):
    """Sum-power capacity of parallel channels, by bisection on the water level."""
    lo, hi = 0.0, P + 1.0 / np.min(gains)
    for _ in range(200):
        nu = 0.5 * (lo + hi)
        if np.sum(np.maximum(nu - 1.0 / gains, 0.0)) > P:
            hi = nu
        else:
            lo = nu
    q = np.maximum(lo - 1.0 / gains, 0.0)
    return float(np.sum(np.log1p(gains * q)))


def test_spc_without_pu_is_water_filling():
    sc = Scenario.uniform(6, 2, 0, P=10.0, power_mode="SPC")
    sc, _, ctx = instance(sc, 5)
    lay = build_spc_context(ctx, sc)
    assert lay.J == 1 and lay.mode == "SPC"
    it, _ = solve_saddle(ctx, sc, SolverOptions(eps_gap=1e-8), layout=lay)
    gains = np.concatenate([np.linalg.svd(H, compute_uv=False) ** 2 for H in ctx.Heff])
    f = mac_objective(ctx, it)
    assert f == pytest.approx(water_filling_value(gains, sc.P_total), abs=1e-6)
    from crprecoder import recover_precoders
    sol = recover_precoders(ctx, sc, it)
    assert sum(np.trace(S).real for S in sol.S) == pytest.approx(sc.P_total, rel=1e-6)
    # water level: eta * P equals ... the dual of the sum-power budget
    assert it.psi[0] == pytest.approx(1.0, rel=1e-6)


def test_spc_dominates_papc():
    for trial in range(5):
        base = Scenario.uniform(8, 2, 1, P=10.0, I=1.0)
        _, _, ctx = instance(base, trial)
        f_papc = mac_objective(ctx, solve_saddle(ctx, base)[0])
        spc = base.replace(power_mode="SPC")
        f_spc = mac_objective(ctx, solve_saddle(ctx, spc)[0])
        assert f_spc >= f_papc - 1e-6


def test_spc_matches_oracle():
    sc, _, ctx = instance(Scenario(N=4, n=(1, 1), n_pu=(1,), P_total=5.0, I=(0.5,),
                                   power_mode="SPC"), 3)
    it, _ = solve_saddle(ctx, sc)
    ref, _ = naive_newton_oracle(ctx, sc)
    assert abs(mac_objective(ctx, it) - mac_objective(ctx, ref)) <= 1e-4 * mac_objective(ctx, ref)


# -- saddle certificate -----------------------------------------------------------

def inner_max(ctx, scenario, psi):
    """max over sum tr Q = P of the objective at fixed psi (pooled water-filling)."""
    gains = []
    for H, Om in zip(ctx.Heff, explicit_omegas(ctx, scenario, psi)):
        gains.append(np.linalg.eigvalsh(H @ np.linalg.solve(Om, H.conj().T)))
    return water_filling_value(np.concatenate(gains), scenario.P_total)


def test_saddle_point_certificate():
    sc, _, ctx = instance(Scenario.uniform(6, 2, 1, P=10.0, I=1.0), 7)
    it, _ = solve_saddle(ctx, sc, SolverOptions(eps_gap=1e-9))
    p = np.concatenate([sc.per_antenna, sc.I])
    f_star = mac_objective(ctx, it)
    v_star = inner_max(ctx, sc, it.psi)
    # Q side: no feasible Q does better than the computed one at psi*
    assert v_star <= f_star + 1e-6
    # psi side: moving psi along the budget plane cannot lower the inner max
    for j in range(p.size):
        psi = it.psi.copy()
        psi[j] += 1e-4
        psi *= sc.P_total / (p @ psi)
        assert inner_max(ctx, sc, psi) >= v_star - 1e-6


@settings(max_examples=25, deadline=None)
@given(h=st.floats(0.05, 5.0), P_db=st.floats(-10.0, 30.0))
def test_single_link_property(h, P_db):
    P = db(P_db)
    sc, _, ctx = scalar_instance(h=h, P=P)
    it, _ = solve_saddle(ctx, sc)
    assert mac_objective(ctx, it) == pytest.approx(np.log1p(h * h * P), rel=1e-6, abs=1e-8)
    assert kkt_residual(ctx, scalar_kkt_point(h, P, it.t), sc)[0] < 1e-9 * max(1.0, P)
