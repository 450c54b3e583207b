import math

import numpy as np
import pytest

import prefmpc as pm
from prefmpc.learner import (
    Theta,
    TrainConfig,
    pack_lower,
    theta_lower_bounds,
    unpack_lower,
)
from conftest import ORACLE_Q, ORACLE_R, scalar_trajectory


def _quad_oracle(a, b):
    return pm.pref_quadratic(a, b, ORACLE_Q, ORACLE_R)


def _random_theta(rng, n_x, n_u):
    Q = pm.random_pd_matrix(rng, n_x, (0.1, 10.0), 0.05)
    R = pm.random_pd_matrix(rng, n_u, (0.1, 10.0), 0.05)
    return pm.theta_from_matrices(Q, R)


def _tiny_dataset(rng, n_x, n_u, n_trajs=6, n_pairs=10, horizon=5):
    # scales mirror the pool-sampling ranges so finite differences at
    # step 1e-6 stay well inside their accuracy budget
    trajs = []
    for _ in range(n_trajs):
        trajs.append(
            pm.Trajectory(
                X=rng.uniform(-0.5, 0.5, (horizon + 1, n_x)),
                U=rng.uniform(-0.5, 0.5, (horizon, n_u)),
                Y=rng.uniform(-0.5, 0.5, (horizon, 1)),
            )
        )
    pool = pm.TrajectoryPool(trajectories=tuple(trajs))
    Q = pm.random_pd_matrix(rng, n_x, (0.1, 10.0), 0.05)
    R = pm.random_pd_matrix(rng, n_u, (0.1, 10.0), 0.05)
    return pm.build_pairs(pool, n_pairs, lambda a, b: pm.pref_quadratic(a, b, Q, R), rng)


def test_theta_dim_values():
    assert pm.theta_dim(6, 2) == 24
    assert pm.theta_dim(1, 1) == 2
    assert pm.theta_dim(2, 1) == 4


def test_pack_unpack_round_trip():
    rng = np.random.default_rng(0)
    for n in (1, 2, 6):
        M = pm.random_pd_matrix(rng, n, (0.1, 10.0), 0.05)
        L = np.linalg.cholesky(M)
        assert np.array_equal(unpack_lower(pack_lower(L), n), L)
        theta = pm.theta_from_matrices(M, np.eye(1))
        Q_back, _ = pm.theta_to_matrices(theta)
        assert np.max(np.abs(Q_back - M)) < 1e-12


def test_theta_to_matrices_identity_pattern():
    theta = pm.theta_from_matrices(np.eye(3), np.eye(2))
    Q, R = pm.theta_to_matrices(theta)
    assert np.array_equal(Q, np.eye(3))
    assert np.array_equal(R, np.eye(2))


def test_theta_minimum_bound_matrices():
    lb = theta_lower_bounds(3, 2)
    values = np.where(np.isfinite(lb), lb, 0.0)
    Q, R = pm.theta_to_matrices(Theta(values, 3, 2))
    assert np.allclose(np.diag(Q), [1.0, 1e-4, 1e-4])
    assert np.allclose(np.diag(R), [1e-4, 1e-4])
    assert np.count_nonzero(Q - np.diag(np.diag(Q))) == 0


def test_theta_lower_bound_layout():
    lb = theta_lower_bounds(2, 2)
    # packed order: q(0,0) q(1,0) q(1,1) r(0,0) r(1,0) r(1,1)
    assert lb[0] == 1.0
    assert lb[2] == 0.01 and lb[3] == 0.01 and lb[5] == 0.01
    assert np.isinf(lb[1]) and np.isinf(lb[4])


def test_theta_wrong_length_rejected():
    with pytest.raises(ValueError):
        Theta(np.zeros(5), 2, 2)


def test_score_matches_quad_cost_exactly(small_pool):
    rng = np.random.default_rng(1)
    theta = _random_theta(rng, 6, 2)
    Q, R = pm.theta_to_matrices(theta)
    for traj in small_pool.trajectories[:5]:
        assert pm.score(traj, theta) == pm.quad_cost(traj, Q, R)


def test_score_zero_trajectory():
    theta = pm.theta_from_matrices(np.eye(1), np.eye(1))
    traj = scalar_trajectory([0.0, 0.0], [0.0])
    assert pm.score(traj, theta) == 0.0


def test_score_single_step_unit_state():
    theta = pm.theta_from_matrices(ORACLE_Q, ORACLE_R)
    X = np.zeros((2, 6))
    X[0, 0] = 1.0
    traj = pm.Trajectory(X=X, U=np.zeros((1, 2)), Y=np.zeros((1, 3)))
    assert abs(pm.score(traj, theta) - 40.0) < 1e-12


def test_pref_prob_half_at_equal_scores():
    theta = pm.theta_from_matrices(np.eye(1), np.eye(1))
    traj = scalar_trajectory([1.0, 0.0], [0.5])
    assert pm.pref_prob(traj, traj, theta) == 0.5


def test_pref_prob_log3_gap():
    theta = pm.theta_from_matrices(np.eye(1), np.eye(1))
    ti = scalar_trajectory([math.sqrt(math.log(3.0)), 0.0], [0.0])
    tj = scalar_trajectory([0.0, 0.0], [0.0])
    assert abs(pm.pref_prob(ti, tj, theta) - 0.25) < 1e-12


def test_pref_prob_complement_identity(small_pool):
    rng = np.random.default_rng(2)
    theta = _random_theta(rng, 6, 2)
    trajs = small_pool.trajectories
    for i, j in ((0, 1), (3, 7), (5, 2)):
        total = pm.pref_prob(trajs[i], trajs[j], theta) + pm.pref_prob(trajs[j], trajs[i], theta)
        assert abs(total - 1.0) <= 1e-12


def test_pref_prob_saturates_at_clamp():
    theta = pm.theta_from_matrices(np.eye(1), np.eye(1))
    huge = scalar_trajectory([50.0, 0.0], [0.0])
    tiny = scalar_trajectory([0.0, 0.0], [0.0])
    assert pm.pref_prob(huge, tiny, theta) == 1e-12
    assert pm.pref_prob(tiny, huge, theta) == 1.0 - 1e-12


def test_pref_prob_decreases_as_first_score_grows():
    theta = pm.theta_from_matrices(np.eye(1), np.eye(1))
    tj = scalar_trajectory([1.0, 0.0], [0.0])
    probs = [
        pm.pref_prob(scalar_trajectory([a, 0.0], [0.0]), tj, theta) for a in (0.0, 0.5, 1.0, 2.0)
    ]
    assert all(p1 > p2 for p1, p2 in zip(probs, probs[1:]))


def test_surrogate_pref_tie_and_threshold(small_pool):
    rng = np.random.default_rng(3)
    theta = _random_theta(rng, 6, 2)
    trajs = small_pool.trajectories
    t0 = trajs[0]
    assert pm.surrogate_pref(t0, t0, theta) == 1
    for i, j in ((0, 1), (4, 9), (2, 6), (8, 3)):
        label = pm.surrogate_pref(trajs[i], trajs[j], theta)
        assert label == (1 if pm.pref_prob(trajs[i], trajs[j], theta) >= 0.5 else 0)
        assert label == (1 if pm.score(trajs[i], theta) <= pm.score(trajs[j], theta) else 0)


def test_surrogate_labels_scale_invariant(small_pool):
    rng = np.random.default_rng(4)
    theta = _random_theta(rng, 6, 2)
    trajs = small_pool.trajectories
    for c in (0.5, 2.0, 40.0):
        scaled = theta.scaled(c)
        for i, j in ((0, 1), (4, 9), (2, 6)):
            assert pm.surrogate_pref(trajs[i], trajs[j], theta) == pm.surrogate_pref(
                trajs[i], trajs[j], scaled
            )


def _identical_pair_dataset():
    traj = scalar_trajectory([1.0, 2.0, 0.0], [0.5, -0.5])
    pool = pm.TrajectoryPool(trajectories=(traj, traj))
    return pm.PreferenceDataset(pool, [0, 1], [1, 0], [1, 0])


def test_loss_ln2_at_maximal_uncertainty():
    theta = pm.theta_from_matrices(np.eye(1), np.eye(1))
    assert abs(pm.loss(theta, _identical_pair_dataset(), rho=0.0) - math.log(2.0)) < 1e-12


def test_loss_near_zero_for_confident_correct():
    theta = pm.theta_from_matrices(np.eye(1), np.eye(1))
    lo = scalar_trajectory([0.0, 0.0], [0.0])
    hi = scalar_trajectory([50.0, 0.0], [0.0])
    pool = pm.TrajectoryPool(trajectories=(lo, hi))
    ds = pm.PreferenceDataset(pool, [0], [1], [1])
    assert pm.loss(theta, ds, rho=0.0) <= -math.log(1.0 - 1e-12) + 1e-15


def test_loss_single_pair_ln4():
    theta = pm.theta_from_matrices(np.eye(1), np.eye(1))
    ti = scalar_trajectory([math.sqrt(math.log(3.0)), 0.0], [0.0])
    tj = scalar_trajectory([0.0, 0.0], [0.0])
    pool = pm.TrajectoryPool(trajectories=(ti, tj))
    ds = pm.PreferenceDataset(pool, [0], [1], [1])
    assert abs(pm.loss(theta, ds, rho=0.0) - math.log(4.0)) < 1e-12


def test_gradient_reduces_to_regularizer_on_identical_pairs():
    theta = pm.theta_from_matrices(2.0 * np.eye(1), 3.0 * np.eye(1))
    grad = pm.loss_gradient(theta, _identical_pair_dataset(), rho=0.5)
    assert np.allclose(grad, 2.0 * 0.5 * theta.values, atol=1e-15)


def central_difference_gradient(theta, ds, rho, h=1e-6):
    fd = np.empty_like(theta.values)
    for k in range(len(fd)):
        vp = theta.values.copy()
        vm = theta.values.copy()
        vp[k] += h
        vm[k] -= h
        fd[k] = (
            pm.loss(Theta(vp, theta.n_x, theta.n_u), ds, rho=rho)
            - pm.loss(Theta(vm, theta.n_x, theta.n_u), ds, rho=rho)
        ) / (2.0 * h)
    return fd


@pytest.mark.parametrize("dims", [(1, 1), (2, 1), (6, 2)])
def test_gradient_matches_central_differences(dims):
    n_x, n_u = dims
    rng = np.random.default_rng(100 + 10 * n_x + n_u)
    for _ in range(5):
        ds = _tiny_dataset(rng, n_x, n_u)
        theta = _random_theta(rng, n_x, n_u)
        grad = pm.loss_gradient(theta, ds, rho=1e-6)
        fd = central_difference_gradient(theta, ds, rho=1e-6)
        assert np.linalg.norm(grad - fd) / np.linalg.norm(fd) <= 1e-5


def test_projected_gradient_small_at_trained_point(quad_dataset):
    rng = np.random.default_rng(5)
    config = TrainConfig(restarts=1)
    model = pm.train(quad_dataset, config, _random_theta(rng, 6, 2))
    grad = pm.loss_gradient(model.theta, quad_dataset, rho=config.rho)
    lb = theta_lower_bounds(6, 2)
    at_bound = model.theta.values <= lb + 1e-12
    projected = np.where(at_bound, np.minimum(grad, 0.0), grad)
    assert np.linalg.norm(projected) <= 1e-6


def test_train_perfect_initialization_stays_perfect(quad_dataset):
    theta_true = pm.theta_from_matrices(ORACLE_Q, ORACLE_R)
    scale = max(1.0, 1.0 / theta_true.q_factor[0])
    theta0 = theta_true.scaled(scale)
    assert pm.model_accuracy(theta0, quad_dataset) == 1.0
    model = pm.train(quad_dataset, TrainConfig(), theta0)
    assert model.train_accuracy == 1.0


def test_train_loss_non_increasing(quad_dataset):
    rng = np.random.default_rng(6)
    theta0 = _random_theta(rng, 6, 2).projected()
    config = TrainConfig()
    initial = pm.loss(theta0, quad_dataset, rho=config.rho)
    model = pm.train(quad_dataset, config, theta0)
    assert model.final_loss <= initial + 1e-15
    assert abs(pm.loss(model.theta, quad_dataset, rho=config.rho) - model.final_loss) < 1e-12


def test_train_result_feasible_even_from_infeasible_init(quad_dataset):
    values = np.full(pm.theta_dim(6, 2), -5.0)
    model = pm.train(quad_dataset, TrainConfig(adam_iters=5, lbfgs_max_iters=5), Theta(values, 6, 2))
    assert model.theta.satisfies_bounds()


def test_train_multistart_single_restart_reduces_to_train(quad_dataset):
    config = TrainConfig(restarts=1)
    sampler = pm.make_matrix_init_sampler(
        lambda rng: (
            pm.random_pd_matrix(rng, 6, (0.1, 10.0), 0.05),
            pm.random_pd_matrix(rng, 2, (0.1, 10.0), 0.05),
        )
    )
    best = pm.train_multistart(quad_dataset, quad_dataset, config, sampler, seed=7)
    rng = np.random.default_rng(np.random.SeedSequence(7).spawn(1)[0])
    direct = pm.train(quad_dataset, config, sampler(rng), test_set=quad_dataset, seed=7)
    assert np.array_equal(best.theta.values, direct.theta.values)
    assert best.test_accuracy == direct.test_accuracy


def test_train_multistart_selects_best_and_is_deterministic(quad_dataset):
    config = TrainConfig(restarts=3, adam_iters=40, lbfgs_max_iters=60)
    sampler = pm.make_matrix_init_sampler(
        lambda rng: (
            pm.random_pd_matrix(rng, 6, (0.1, 10.0), 0.05),
            pm.random_pd_matrix(rng, 2, (0.1, 10.0), 0.05),
        )
    )
    test_set = quad_dataset.subset(30)
    best = pm.train_multistart(quad_dataset, test_set, config, sampler, seed=8)
    repeat = pm.train_multistart(quad_dataset, test_set, config, sampler, seed=8)
    assert np.array_equal(best.theta.values, repeat.theta.values)
    streams = np.random.SeedSequence(8).spawn(config.restarts)
    for idx, stream in enumerate(streams):
        rng = np.random.default_rng(stream)
        single = pm.train(quad_dataset, config, sampler(rng), test_set=test_set, restart_index=idx)
        assert best.test_accuracy >= single.test_accuracy


def test_trained_model_round_trip(quad_dataset):
    rng = np.random.default_rng(9)
    model = pm.train(quad_dataset, TrainConfig(adam_iters=20, lbfgs_max_iters=20),
                     _random_theta(rng, 6, 2), test_set=quad_dataset)
    back = pm.TrainedModel.from_dict(model.to_dict())
    assert np.array_equal(back.theta.values, model.theta.values)
    assert back.test_accuracy == model.test_accuracy
    assert back.final_loss == model.final_loss


def test_loss_rejects_empty_dataset(small_pool):
    empty = pm.PreferenceDataset(small_pool, [], [], [])
    theta = pm.theta_from_matrices(np.eye(6), np.eye(2))
    with pytest.raises(ValueError):
        pm.loss(theta, empty, rho=0.0)
