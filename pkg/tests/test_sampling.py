import numpy as np
import pytest

from tdsvrg.errors import EmptySource, MissingOracle
from tdsvrg.mdp import fixed_point, random_mdp, reset_transform, td_update, update_deviation
from tdsvrg.rng import stream
from tdsvrg.sampling import (BatchSchedule, Dataset, IidSource, MarkovSource,
                             estimation_batch_size, iid_stream, is_balanced, mean_path_update,
                             sample_balanced_dataset, sample_trajectory)


def test_one_state_trajectory(one_state):
    ds = sample_trajectory(one_state, 5, 0)
    assert len(ds) == 5 and ds.balanced
    assert set(ds.transitions) == {(0, 0, 1.0)}


def test_flip_chain_trajectory(flip):
    ds = sample_trajectory(flip, 4, 9, start=0)
    assert list(ds.s) == [0, 1, 0, 1] and list(ds.s2) == [1, 0, 1, 0]
    assert ds.balanced


def test_trajectory_deterministic(small_mdp):
    a, b = sample_trajectory(small_mdp, 300, 5), sample_trajectory(small_mdp, 300, 5)
    assert np.array_equal(a.s, b.s) and np.array_equal(a.r, b.r)


def test_balance_flag():
    assert is_balanced(np.array([0, 1, 2]), np.array([1, 2, 0]))
    assert not is_balanced(np.array([0, 1]), np.array([1, 1]))
    assert not Dataset.from_transitions([(0, 1, 0.0)]).balanced


def test_balanced_dataset_every_seed():
    mdp = random_mdp(15, 3, 4, 0.8, 2)
    reset, _ = reset_transform(mdp, 0)
    for seed in range(10):
        ds = sample_balanced_dataset(reset, 0, 1000, seed)
        assert ds.balanced
        assert 1000 <= len(ds) <= 1000 + 100 / reset.reset_prob
        assert ds.s[0] == 0 and ds.s2[-1] == 0


def test_iid_frequencies(small_mdp):
    s, s2, r = IidSource(small_mdp).draw(stream(4), 200_000)
    freq = np.bincount(s, minlength=small_mdp.n_states) / s.size
    assert np.max(np.abs(freq - small_mdp.stationary)) < 5e-3
    mask = s == 0
    row = np.bincount(s2[mask], minlength=small_mdp.n_states) / mask.sum()
    assert np.max(np.abs(row - small_mdp.P[0])) < 1.5e-2
    np.testing.assert_array_equal(r, small_mdp.rewards[s, s2])


def test_iid_stream_one_state(one_state):
    gen = iid_stream(one_state, 0, block=8)
    assert [next(gen) for _ in range(20)] == [(0, 0, 1.0)] * 20


def test_markov_source_continues(small_mdp):
    src = MarkovSource(small_mdp, start=3)
    s, s2, _ = src.draw(stream(1), 50)
    assert s[0] == 3
    t, _, _ = src.draw(stream(2), 10)
    assert t[0] == s2[-1]


def test_mean_path_single_and_fixed_point(small_mdp):
    ds = Dataset.from_transitions([(2, 5, 0.3)])
    theta = np.array([0.1, -0.2, 0.3, 0.4])
    phi = small_mdp.features
    np.testing.assert_allclose(mean_path_update(ds, small_mdp, theta),
                               td_update(phi[2], phi[5], 0.3, small_mdp.gamma, theta))
    big = sample_trajectory(small_mdp, 2000, 1)
    sol = fixed_point(big, small_mdp)
    np.testing.assert_allclose(mean_path_update(big, small_mdp, sol.theta_star), 0, atol=1e-10)
    with pytest.raises(EmptySource):
        mean_path_update(Dataset.from_transitions([]), small_mdp, theta)


def test_minibatch_unbiased(small_mdp):
    ds = sample_trajectory(small_mdp, 500, 3)
    theta = np.ones(4)
    full = mean_path_update(ds, small_mdp, theta)
    n, reps = 20, 1000
    rng = stream(8)
    est = np.mean([mean_path_update(ds.draw(rng, n), small_mdp, theta) for _ in range(reps)],
                  axis=0)
    from tdsvrg.sampling import td_updates
    g = td_updates(small_mdp.features, small_mdp.gamma, ds.s, ds.s2, ds.r, theta)
    S = np.sqrt(np.mean(np.sum((g - full) ** 2, axis=1)))
    assert np.linalg.norm(est - full) <= 4 * S / np.sqrt(reps * n)


def test_update_deviation_bounds():
    rng = np.random.default_rng(0)
    for seed in range(4):
        mdp = random_mdp(20, 3, 5, 0.8, seed)
        reset, _ = reset_transform(mdp, 0)
        bal = sample_balanced_dataset(reset, 0, 500, seed)
        unbal = sample_trajectory(mdp, 200, seed)
        for ds, env in ((bal, reset), (unbal, mdp)):
            sol = fixed_point(ds, env)
            factor = 2.0 if ds.balanced else 2.0 + env.gamma ** 2 / (len(ds) * sol.lambda_A)
            for _ in range(25):
                theta = sol.theta_star + rng.standard_normal(sol.dim) * 3
                f = sol.f(theta)
                assert update_deviation(ds, sol, theta, env) <= factor * f * (1 + 1e-12)
                assert sol.dist_sq(theta) <= f / sol.lambda_A * (1 + 1e-12)


def test_batch_size_rules():
    z = np.zeros(3)
    assert estimation_batch_size(BatchSchedule("practical"), 0, 0.25, 1.0, z) == 8
    assert estimation_batch_size(BatchSchedule("theoretical"), 3, 0.25, 1.0, z,
                                 f_prev=0.0, sigma_sq=0.0) == 1
    assert estimation_batch_size(BatchSchedule("theoretical"), 1, 1e-6, 1.0, z,
                                 f_prev=10.0, sigma_sq=1.0, N=5000) == 5000
    assert estimation_batch_size(BatchSchedule("fixed", size=17), 4, 0.1, 1.0, z) == 17
    assert estimation_batch_size(BatchSchedule("exact"), 4, 0.1, 1.0, z, N=321) == 321
    with pytest.raises(MissingOracle):
        estimation_batch_size(BatchSchedule("theoretical"), 1, 0.1, 1.0, z)
    # (4f + 2 sigma^2) / (c lambda (2/3)^m), scaled by N/(N-1)
    n = estimation_batch_size(BatchSchedule("theoretical", c=2.0), 2, 0.5, 1.0, z,
                              f_prev=1.0, sigma_sq=0.5, N=1001)
    assert n == int(np.ceil(5.0 / (2.0 * 0.5 * 4 / 9) * 1001 / 1000))
