import itertools

import numpy as np
import pytest

import prefmpc as pm
from prefmpc.mpc import Condenser
from conftest import ORACLE_Q, ORACLE_R

SCALAR = pm.LinearSystem(A=[[1.0]], B=[[1.0]], C=[[1.0]])


def brute_force_box_qp(H, f, lb, ub):
    """Enumerate active-set assignments; return the KKT-certified minimizer."""
    n = len(f)
    best_x = None
    best_obj = np.inf
    for assignment in itertools.product((0, 1, 2), repeat=n):
        mask = np.array(assignment)
        x = np.where(mask == 1, lb, np.where(mask == 2, ub, 0.0)).astype(float)
        free = np.nonzero(mask == 0)[0]
        if len(free):
            fixed = np.nonzero(mask != 0)[0]
            rhs = -f[free]
            if len(fixed):
                rhs = rhs - H[np.ix_(free, fixed)] @ x[fixed]
            try:
                x_free = np.linalg.solve(H[np.ix_(free, free)], rhs)
            except np.linalg.LinAlgError:
                continue
            if np.any(x_free < lb[free] - 1e-10) or np.any(x_free > ub[free] + 1e-10):
                continue
            x[free] = x_free
        g = H @ x + f
        if np.any(g[mask == 1] < -1e-8) or np.any(g[mask == 2] > 1e-8):
            continue
        obj = 0.5 * x @ H @ x + f @ x
        if obj < best_obj:
            best_obj = obj
            best_x = x
    return best_x


def random_box_qp(rng, n):
    A = rng.standard_normal((n, n))
    H = A @ A.T + n * np.eye(n)
    f = rng.standard_normal(n) * 3.0
    lb = -rng.uniform(0.1, 1.5, n)
    ub = rng.uniform(0.1, 1.5, n)
    return pm.QpProblem(H=H, f=f, lb=lb, ub=ub)


def test_spec_validation(system):
    with pytest.raises(ValueError):
        pm.MpcSpec(system, 0, ORACLE_Q, ORACLE_R)
    with pytest.raises(ValueError):
        pm.MpcSpec(system, 5, np.eye(5), ORACLE_R)
    with pytest.raises(ValueError):
        pm.MpcSpec(system, 5, ORACLE_Q, ORACLE_R, u_lo=np.array([0.5, -1.0]),
                   u_hi=np.array([1.0, 1.0]))
    with pytest.raises(ValueError):
        pm.MpcSpec(system, 5, ORACLE_Q, ORACLE_R, u_lo=-np.ones(2), u_hi=None)


def test_qp_problem_rejects_asymmetric_h():
    with pytest.raises(ValueError):
        pm.QpProblem(H=np.array([[1.0, 0.5], [0.0, 1.0]]), f=np.zeros(2))


def test_condense_zero_state_zero_minimizer(system):
    spec = pm.MpcSpec(system, 10, ORACLE_Q, ORACLE_R)
    qp = pm.condense(spec, np.zeros(6))
    assert np.all(qp.f == 0.0)
    U, iters, status = pm.solve_box_qp(qp)
    assert np.allclose(U, 0.0, atol=1e-12)
    assert status == "optimal"


def test_condense_scalar_hand_example():
    spec = pm.MpcSpec(SCALAR, 2, np.eye(1), np.eye(1))
    cond = Condenser(spec)
    qp = cond.qp([1.0])
    U, _, _ = pm.solve_box_qp(qp)
    assert np.allclose(U, [-0.5, 0.0], atol=1e-10)
    x = np.array([1.0])
    opt_cost = 0.5 * U @ qp.H @ U + qp.f @ U + x @ cond.const_map @ x
    assert abs(opt_cost - 1.5) < 1e-10


@pytest.mark.parametrize("horizon", [1, 2, 10, 15])
def test_condensation_cost_identity(system, horizon):
    rng = np.random.default_rng(horizon)
    spec = pm.MpcSpec(system, horizon, ORACLE_Q, ORACLE_R)
    cond = Condenser(spec)
    for _ in range(5):
        x = rng.uniform(-0.4, 0.4, 6)
        U = rng.uniform(-1.0, 1.0, (horizon, 2))
        qp = cond.qp(x)
        u = U.ravel()
        qp_value = 0.5 * u @ qp.H @ u + qp.f @ u + x @ cond.const_map @ x
        sim_value = pm.quad_cost(pm.simulate(system, x, U), ORACLE_Q, ORACLE_R)
        assert abs(qp_value - sim_value) <= 1e-9 * max(1.0, abs(sim_value))


def test_box_qp_zero_rhs():
    H = 2.0 * np.eye(3)
    qp = pm.QpProblem(H=H, f=np.zeros(3), lb=-np.ones(3), ub=np.ones(3))
    U, iters, status = pm.solve_box_qp(qp)
    assert np.all(U == 0.0)
    assert status == "optimal"


def test_box_qp_scalar_clipped_example():
    spec = pm.MpcSpec(SCALAR, 2, np.eye(1), np.eye(1), u_lo=[-0.3], u_hi=[0.3])
    cond = Condenser(spec)
    qp = cond.qp([1.0])
    U, _, status = pm.solve_box_qp(qp)
    assert status == "optimal"
    assert np.allclose(U, [-0.3, 0.0], atol=1e-8)
    x = np.array([1.0])
    cost = 0.5 * U @ qp.H @ U + qp.f @ U + x @ cond.const_map @ x
    assert abs(cost - 1.58) < 1e-8


def test_box_qp_matches_enumeration_oracle():
    rng = np.random.default_rng(77)
    for _ in range(60):
        n = int(rng.integers(1, 7))
        qp = random_box_qp(rng, n)
        U, _, status = pm.solve_box_qp(qp)
        expected = brute_force_box_qp(qp.H, qp.f, qp.lb, qp.ub)
        assert expected is not None
        assert status == "optimal"
        assert np.max(np.abs(U - expected)) <= 1e-6


def test_unconstrained_solve_optimality(system):
    rng = np.random.default_rng(21)
    spec = pm.MpcSpec(system, 10, ORACLE_Q, ORACLE_R)
    cond = Condenser(spec)
    for _ in range(5):
        x = rng.uniform(-0.4, 0.4, 6)
        qp = cond.qp(x)
        U, _, _ = pm.solve_box_qp(qp)
        assert np.linalg.norm(qp.H @ U + qp.f) <= 1e-8 * (1.0 + np.linalg.norm(qp.f))


def test_box_qp_kkt_conditions():
    rng = np.random.default_rng(31)
    for _ in range(25):
        n = int(rng.integers(2, 7))
        qp = random_box_qp(rng, n)
        U, _, status = pm.solve_box_qp(qp)
        assert status == "optimal"
        g = qp.H @ U + qp.f
        for k in range(n):
            if U[k] <= qp.lb[k] + 1e-10:
                assert g[k] >= -1e-6
            elif U[k] >= qp.ub[k] - 1e-10:
                assert g[k] <= 1e-6
            else:
                assert abs(g[k]) <= 1e-6


def test_box_qp_feasible_even_at_iteration_cap():
    rng = np.random.default_rng(41)
    qp = random_box_qp(rng, 5)
    U, iters, status = pm.solve_box_qp(qp, max_iters=2)
    assert np.all(U >= qp.lb) and np.all(U <= qp.ub)


def test_mpc_step_cases():
    spec = pm.MpcSpec(SCALAR, 2, np.eye(1), np.eye(1))
    assert np.allclose(pm.mpc_step(spec, [0.0]), 0.0, atol=1e-12)
    assert np.allclose(pm.mpc_step(spec, [1.0]), -0.5, atol=1e-10)
    bounded = pm.MpcSpec(SCALAR, 2, np.eye(1), np.eye(1), u_lo=[-0.3], u_hi=[0.3])
    assert np.allclose(pm.mpc_step(bounded, [1.0]), -0.3, atol=1e-8)


def test_closed_loop_zero_initial_state(system):
    spec = pm.MpcSpec(system, 10, ORACLE_Q, ORACLE_R, -np.ones(2), np.ones(2))
    result = pm.closed_loop(spec, np.zeros(6), 10)
    assert np.all(result.trajectory.X == 0.0)
    assert np.all(result.trajectory.U == 0.0)


def test_closed_loop_respects_bounds(system):
    rng = np.random.default_rng(51)
    spec = pm.MpcSpec(system, 10, ORACLE_Q, ORACLE_R, -np.ones(2), np.ones(2))
    for _ in range(3):
        x0 = pm.sample_initial_state(rng, (-0.3, 0.3), (-0.05, 0.05))
        result = pm.closed_loop(spec, x0, 30)
        assert pm.max_input_inf_norm(result.trajectory) <= 1.0 + 1e-9
        cost = pm.quad_cost(result.trajectory, ORACLE_Q, ORACLE_R)
        assert np.isfinite(cost) and cost > 0.0


def test_closed_loop_settles_with_oracle_weights(system):
    rng = np.random.default_rng(61)
    spec = pm.MpcSpec(system, 10, ORACLE_Q, ORACLE_R, -np.ones(2), np.ones(2))
    for _ in range(5):
        x0 = pm.sample_initial_state(rng, (-0.3, 0.3), (-0.05, 0.05))
        result = pm.closed_loop(spec, x0, 30)
        settle = pm.settling_time(result.trajectory, 0.1)
        assert settle.settled and settle.index < 30


def test_closed_loop_scale_invariant(system):
    rng = np.random.default_rng(71)
    x0 = pm.sample_initial_state(rng, (-0.3, 0.3), (-0.05, 0.05))
    base = pm.MpcSpec(system, 10, ORACLE_Q, ORACLE_R, -np.ones(2), np.ones(2))
    for c in (0.5, 8.0):
        scaled = pm.MpcSpec(system, 10, c * ORACLE_Q, c * ORACLE_R, -np.ones(2), np.ones(2))
        a = pm.closed_loop(base, x0, 20).trajectory
        b = pm.closed_loop(scaled, x0, 20).trajectory
        assert np.max(np.abs(a.U - b.U)) <= 1e-8


def test_campaign_reference_row_normalizes_to_one(system):
    rng = np.random.default_rng(81)
    x0s = [pm.sample_initial_state(rng, (-0.3, 0.3), (-0.05, 0.05)) for _ in range(4)]
    spec = pm.MpcSpec(system, 10, ORACLE_Q, ORACLE_R, -np.ones(2), np.ones(2))
    other = pm.MpcSpec(system, 10, np.eye(6), np.eye(2), -np.ones(2), np.ones(2))
    campaign = pm.evaluate_campaign(
        [("oracle", spec), ("other", other)], x0s,
        perf_q=ORACLE_Q, perf_r=ORACLE_R, ref_name="oracle",
    )
    assert campaign.cost_stats("oracle")["avg"] == 1.0


def test_campaign_single_spec_single_state(system):
    spec = pm.MpcSpec(system, 10, ORACLE_Q, ORACLE_R, -np.ones(2), np.ones(2))
    x0 = np.array([0.2, -0.1, 0.1, 0.0, 0.0, 0.0])
    campaign = pm.evaluate_campaign([("only", spec)], [x0], perf_q=ORACLE_Q, perf_r=ORACLE_R)
    stats = campaign.cost_stats("only")
    assert stats["avg"] == stats["max"] == stats["min"] == 1.0


def test_campaign_metrics_recomputable_from_trajectories(system):
    rng = np.random.default_rng(91)
    x0s = [pm.sample_initial_state(rng, (-0.3, 0.3), (-0.05, 0.05)) for _ in range(3)]
    spec = pm.MpcSpec(system, 10, ORACLE_Q, ORACLE_R, -np.ones(2), np.ones(2))
    campaign = pm.evaluate_campaign([("c", spec)], x0s, perf_q=ORACLE_Q, perf_r=ORACLE_R,
                                    settle_eps=0.1)
    row = campaign.row("c")
    for k, traj in enumerate(row.trajectories):
        assert row.costs[k] == pm.quad_cost(traj, ORACLE_Q, ORACLE_R)
        assert row.settle_idx[k] == pm.settling_time(traj, 0.1).index
        assert row.max_inputs[k] == pm.max_input_inf_norm(traj)


def test_campaign_per_simulation_specs(system):
    rng = np.random.default_rng(101)
    x0s = [pm.sample_initial_state(rng, (-0.3, 0.3), (-0.05, 0.05)) for _ in range(3)]
    specs = tuple(
        pm.MpcSpec(system, 10, pm.random_pd_matrix(rng, 6, (0.1, 10.0), 0.05),
                   pm.random_pd_matrix(rng, 2, (0.1, 10.0), 0.05), -np.ones(2), np.ones(2))
        for _ in range(3)
    )
    campaign = pm.evaluate_campaign([("rand", specs)], x0s, perf_q=ORACLE_Q, perf_r=ORACLE_R)
    assert len(campaign.row("rand").trajectories) == 3
    with pytest.raises(ValueError):
        pm.evaluate_campaign([("rand", specs[:2])], x0s)
