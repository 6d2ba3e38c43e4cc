import numpy as np
import numpy.testing as npt
import pytest

from feddl.errors import NumericalAbort
from feddl.federation import (
    Aggregation,
    ClientShard,
    FedConfig,
    LandmarkInit,
    aggregate,
    convergence_diagnostic,
    init_landmarks,
    local_update,
    perturb_shards,
    run_feddl,
    shards_meta,
)
from feddl.kernels import KernelParams, mmd, mmd_gradient
from feddl.privacy import PrivacySpec

PARAMS = KernelParams(gamma=0.5)


def make_shards(n_clients=3, per=8, seed=0):
    r = np.random.default_rng(seed)
    shards = []
    total = n_clients * per
    for p in range(n_clients):
        X = r.normal(size=(2, per)) + 3.0 * p
        shards.append(
            ClientShard(
                client_id=p,
                data=X,
                weight=per / total,
                indices=np.arange(p * per, (p + 1) * per),
            )
        )
    return shards


def test_single_client_single_step_matches_centralized_descent():
    r = np.random.default_rng(3)
    X = r.normal(size=(2, 12))
    Y0 = r.normal(size=(2, 5))
    steps = 20
    cfg = FedConfig(rounds=steps, local_steps=1, step_size=0.5, n_landmarks=5)
    fed = run_feddl([ClientShard(0, X, 1.0)], cfg, PARAMS, Y0=Y0)
    Y = Y0.copy()
    for _ in range(steps):
        Y = Y - 0.5 * mmd_gradient(X, Y, PARAMS)
    assert np.max(np.abs(fed.landmarks - Y)) <= 1e-12


def test_identical_shards_match_single_client():
    r = np.random.default_rng(5)
    X = r.normal(size=(2, 9))
    Y0 = r.normal(size=(2, 4))
    cfg = FedConfig(rounds=4, local_steps=2, step_size=0.3, n_landmarks=4)
    one = run_feddl([ClientShard(0, X, 1.0)], cfg, PARAMS, Y0=Y0)
    clones = [ClientShard(p, X.copy(), 1.0 / 3.0) for p in range(3)]
    three = run_feddl(clones, cfg, PARAMS, Y0=Y0)
    npt.assert_allclose(three.landmarks, one.landmarks, rtol=0, atol=1e-12)


def test_aggregate_weighted_mean_hand_value():
    out = aggregate(
        [np.array([[2.0]]), np.array([[6.0]])],
        [0.25, 0.75],
        FedConfig(aggregation=Aggregation.AVERAGE_LANDMARKS),
    )
    npt.assert_array_equal(out, [[5.0]])


def test_aggregate_gradients_hand_value():
    cfg = FedConfig(aggregation=Aggregation.AVERAGE_GRADIENTS, server_step_size=0.1)
    out = aggregate(
        [np.array([[2.0]]), np.array([[4.0]])],
        [0.5, 0.5],
        cfg,
        Y_prev=np.array([[1.0]]),
    )
    npt.assert_allclose(out, [[0.7]], rtol=0, atol=1e-15)


def test_aggregate_validation():
    cfg = FedConfig()
    with pytest.raises(ValueError, match="sum to 1"):
        aggregate([np.zeros((1, 1))], [0.5], cfg)
    with pytest.raises(ValueError, match="equally sized"):
        aggregate([np.zeros((1, 1))], [0.5, 0.5], cfg)
    with pytest.raises(ValueError, match="previous global landmarks"):
        aggregate(
            [np.zeros((1, 1))],
            [1.0],
            FedConfig(aggregation=Aggregation.AVERAGE_GRADIENTS),
        )


def test_local_update_single_step_exact():
    r = np.random.default_rng(11)
    X = r.normal(size=(2, 6))
    Y = r.normal(size=(2, 3))
    out, grads = local_update(
        X, Y, step_size=0.2, local_steps=1, kernel_params=PARAMS
    )
    assert len(grads) == 1
    npt.assert_array_equal(out, Y - 0.2 * grads[0])
    npt.assert_array_equal(grads[0], mmd_gradient(X, Y, PARAMS))


def test_trace_objective_matches_external_reconstruction():
    shards = make_shards(n_clients=2, per=6, seed=9)
    r = np.random.default_rng(1)
    Y0 = r.normal(size=(2, 4))
    cfg = FedConfig(rounds=3, local_steps=2, step_size=0.4, n_landmarks=4)
    fed = run_feddl(shards, cfg, PARAMS, Y0=Y0)
    weights = [s.weight for s in shards]

    def global_objective(Y):
        return sum(w * mmd(s.data, Y, PARAMS) for w, s in zip(weights, shards))

    # replay the protocol by hand
    Y = Y0
    expected_f, expected_d = [], []
    for _ in range(cfg.rounds):
        locals_prev = [Y] * len(shards)
        prev_virtual = Y
        finals = []
        for t in range(cfg.local_steps):
            locals_t = []
            for p, s in enumerate(shards):
                g = mmd_gradient(s.data, locals_prev[p], PARAMS)
                locals_t.append(locals_prev[p] - cfg.step_size * g)
            virtual = sum(w * L for w, L in zip(weights, locals_t))
            expected_f.append(global_objective(virtual))
            expected_d.append(np.linalg.norm(virtual - prev_virtual) ** 2)
            prev_virtual = virtual
            locals_prev = locals_t
        finals = locals_prev
        Y = sum(w * L for w, L in zip(weights, finals))
    npt.assert_allclose(fed.trace.objective, expected_f, rtol=0, atol=1e-12)
    npt.assert_allclose(fed.trace.displacement_sq, expected_d, rtol=1e-9, atol=1e-15)
    npt.assert_allclose(fed.landmarks, Y, rtol=0, atol=1e-12)


def test_trace_shape_and_ordering():
    shards = make_shards()
    cfg = FedConfig(rounds=4, local_steps=3, n_landmarks=3, step_size=0.1)
    fed = run_feddl(shards, cfg, PARAMS)
    n = 4 * 3
    assert fed.trace.round_idx.shape == (n,)
    expected_rounds = np.repeat(np.arange(1, 5), 3)
    expected_steps = np.tile(np.arange(1, 4), 4)
    npt.assert_array_equal(fed.trace.round_idx, expected_rounds)
    npt.assert_array_equal(fed.trace.local_step, expected_steps)
    assert np.all(fed.trace.elapsed_ms >= 0)
    assert convergence_diagnostic(fed.trace) == pytest.approx(
        float(np.mean(fed.trace.displacement_sq))
    )


def test_zero_rounds_returns_initial_landmarks():
    shards = make_shards()
    Y0 = np.random.default_rng(0).normal(size=(2, 3))
    fed = run_feddl(
        shards, FedConfig(rounds=0, local_steps=2, n_landmarks=3), PARAMS, Y0=Y0
    )
    npt.assert_array_equal(fed.landmarks, Y0)
    assert fed.trace.objective.shape == (0,)


def test_fedconfig_validation():
    with pytest.raises(ValueError):
        FedConfig(rounds=-1)
    with pytest.raises(ValueError):
        FedConfig(local_steps=0)
    with pytest.raises(ValueError):
        FedConfig(step_size=0.0)
    with pytest.raises(ValueError):
        FedConfig(n_landmarks=0)
    with pytest.raises(ValueError):
        FedConfig(workers=0)


def test_seed_sample_constant_point_reproduced_exactly():
    point = np.array([1.5, -2.0])
    shards = [
        ClientShard(p, np.tile(point[:, None], (1, 4)), 0.5) for p in range(2)
    ]
    meta = shards_meta(shards, with_moments=True)
    Y = init_landmarks(meta, FedConfig(n_landmarks=6, init=LandmarkInit.SEED_SAMPLE))
    npt.assert_array_equal(Y, np.tile(point[:, None], (1, 6)))


def test_seed_sample_pools_shard_moments():
    r = np.random.default_rng(2)
    shards = [ClientShard(p, r.normal(size=(3, 50)) + p, 0.5) for p in range(2)]
    meta = shards_meta(shards, with_moments=True)
    Y = init_landmarks(
        meta, FedConfig(n_landmarks=4000, init=LandmarkInit.SEED_SAMPLE, seed=1)
    )
    pooled = np.hstack([s.data for s in shards])
    npt.assert_allclose(Y.mean(axis=1), pooled.mean(axis=1), atol=0.15)
    npt.assert_allclose(Y.std(axis=1), pooled.std(axis=1), atol=0.15)


def test_gaussian_init_is_seeded_and_scaled():
    meta = shards_meta(make_shards())
    cfg = FedConfig(n_landmarks=5, init=LandmarkInit.GAUSSIAN_SCALED, init_scale=3.0, seed=4)
    A = init_landmarks(meta, cfg)
    B = init_landmarks(meta, cfg)
    npt.assert_array_equal(A, B)
    base = init_landmarks(
        meta,
        FedConfig(n_landmarks=5, init=LandmarkInit.GAUSSIAN_SCALED, init_scale=1.0, seed=4),
    )
    npt.assert_allclose(A, 3.0 * base, rtol=0, atol=0)


def test_worker_count_does_not_change_results():
    shards = make_shards(n_clients=4, per=6, seed=21)
    Y0 = np.random.default_rng(2).normal(size=(2, 3))
    base = run_feddl(
        shards, FedConfig(rounds=3, local_steps=2, n_landmarks=3, workers=1), PARAMS, Y0=Y0
    )
    threaded = run_feddl(
        shards, FedConfig(rounds=3, local_steps=2, n_landmarks=3, workers=4), PARAMS, Y0=Y0
    )
    npt.assert_array_equal(base.landmarks, threaded.landmarks)
    npt.assert_array_equal(base.trace.objective, threaded.trace.objective)


def test_divergent_step_size_aborts():
    shards = make_shards()
    with pytest.raises(NumericalAbort, match="divergence threshold"):
        run_feddl(
            shards,
            FedConfig(rounds=3, local_steps=2, step_size=1e12, n_landmarks=3),
            PARAMS,
        )


def test_run_feddl_input_validation():
    shards = make_shards(n_clients=2)
    bad_weights = [ClientShard(0, shards[0].data, 0.9), ClientShard(1, shards[1].data, 0.9)]
    with pytest.raises(ValueError, match="sum to 1"):
        run_feddl(bad_weights, FedConfig(n_landmarks=2, rounds=1), PARAMS)
    dup = [ClientShard(0, shards[0].data, 0.5), ClientShard(0, shards[1].data, 0.5)]
    with pytest.raises(ValueError, match="unique"):
        run_feddl(dup, FedConfig(n_landmarks=2, rounds=1), PARAMS)


def test_variable_mode_zero_sigma_is_bit_identical():
    shards = make_shards(seed=13)
    Y0 = np.random.default_rng(1).normal(size=(2, 3))
    cfg = FedConfig(rounds=2, local_steps=2, n_landmarks=3, step_size=0.2)
    clean = run_feddl(shards, cfg, PARAMS, Y0=Y0)
    silent = run_feddl(
        shards, cfg, PARAMS, privacy=PrivacySpec(mode="variable", sigma=0.0), Y0=Y0
    )
    npt.assert_array_equal(clean.landmarks, silent.landmarks)
    noisy = run_feddl(
        shards, cfg, PARAMS, privacy=PrivacySpec(mode="variable", sigma=0.5), Y0=Y0
    )
    assert np.any(noisy.landmarks != clean.landmarks)


def test_gradient_mode_budget_resolves_per_client_sigmas():
    shards = make_shards(n_clients=2, per=6)
    spec = PrivacySpec(
        mode="gradient", epsilon=1.0, delta=1e-5, tau_x=1.0, tau_y=2.0, upsilon=0.5
    )
    cfg = FedConfig(rounds=3, local_steps=1, n_landmarks=4, step_size=0.1)
    fed = run_feddl(shards, cfg, PARAMS, privacy=spec, Y0=np.zeros((2, 4)))
    assert fed.gradient_sigmas is not None and len(fed.gradient_sigmas) == 2
    from feddl.privacy import SensitivityParams, gaussian_sigma_for_dp, sensitivity_delta

    for s, got in zip(shards, fed.gradient_sigmas):
        d = sensitivity_delta(
            SensitivityParams(
                tau_x=1.0, tau_y=2.0, upsilon=0.5, gamma=PARAMS.gamma,
                n_p=s.n_points, n_y=4,
            )
        )
        assert got == gaussian_sigma_for_dp(1.0, 1e-5, 3, d)


def test_gradient_mode_beta_zero_matches_clean_run():
    shards = make_shards(seed=17)
    Y0 = np.random.default_rng(6).normal(size=(2, 3))
    cfg = FedConfig(rounds=2, local_steps=2, n_landmarks=3, step_size=0.2)
    clean = run_feddl(shards, cfg, PARAMS, Y0=Y0)
    silent = run_feddl(
        shards, cfg, PARAMS, privacy=PrivacySpec(mode="gradient", beta=0.0), Y0=Y0
    )
    npt.assert_array_equal(clean.landmarks, silent.landmarks)
    noisy = run_feddl(
        shards, cfg, PARAMS, privacy=PrivacySpec(mode="gradient", beta=1.0), Y0=Y0
    )
    assert np.any(noisy.landmarks != clean.landmarks)


def test_perturb_shards_only_in_data_mode(rng):
    shards = make_shards(seed=23)
    same = perturb_shards(shards, PrivacySpec(mode="variable", sigma=1.0))
    assert all(a.data is b.data for a, b in zip(same, shards))
    noisy = perturb_shards(shards, PrivacySpec(mode="data", sigma=0.3))
    assert all(np.any(a.data != b.data) for a, b in zip(noisy, shards))
    silent = perturb_shards(shards, PrivacySpec(mode="data", sigma=0.0))
    for a, b in zip(silent, shards):
        npt.assert_array_equal(a.data, b.data)


def test_shards_meta_rejects_mixed_dims():
    with pytest.raises(ValueError, match="feature dim"):
        shards_meta(
            [ClientShard(0, np.zeros((2, 4)), 0.5), ClientShard(1, np.zeros((3, 4)), 0.5)]
        )
