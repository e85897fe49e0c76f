import numpy as np
import pytest

from tdsvrg import kernels
from tdsvrg.errors import DivergenceDetected, InvalidInput, InvalidRadius, MissingOracle
from tdsvrg.learners import (LearnerConfig, project_ball, run, run_gtd2, run_td0, run_td_svrg,
                             run_td_svrg_markov, run_vrtd, step_size)
from tdsvrg.mdp import fixed_point, random_mdp
from tdsvrg.sampling import BatchSchedule, Dataset, IidSource, mean_path_update, td_updates


def test_project_ball():
    np.testing.assert_allclose(project_ball([0.3, 0.4], 1), [0.3, 0.4])
    np.testing.assert_allclose(project_ball([3.0, 4.0], 1), [0.6, 0.8])
    np.testing.assert_allclose(project_ball([3.0, -2.0], 0), [0, 0])
    x = project_ball([5.0, 1.0, -2.0], 2.0)
    np.testing.assert_array_equal(project_ball(x, 2.0), x)


def test_td0_scalar_recursion(one_state):
    sol = fixed_point(one_state)
    tr = run_td0(IidSource(one_state), LearnerConfig("TD0", alpha=0.5, M=1, epochs=30), sol)
    theta, expect = [r.theta[0] for r in tr.records], [0.0]
    for _ in range(30):
        expect.append(expect[-1] + 0.5 * (1 - 0.1 * expect[-1]))
    np.testing.assert_allclose(theta, expect, rtol=1e-14)
    assert np.all(np.diff(theta) > 0) and theta[-1] < 10


def test_step_size_schedule():
    assert step_size(1.0, "inv_sqrt_t", 4) == 0.5
    assert step_size(1.0, "inv_t", 4) == 0.25
    assert step_size(0.3, "constant", 99) == 0.3


def test_td0_single_transition_fixed_point(one_state):
    ds = Dataset.from_transitions([(0, 0, 1.0)])
    sol = fixed_point(ds, one_state)
    cfg = LearnerConfig("TD0", alpha=0.5, M=5, epochs=3, theta0=(10.0,))
    tr = run_td0(ds, cfg, sol, env=one_state)
    np.testing.assert_allclose(tr.theta, [10.0])


def test_td0_divergence(one_state):
    sol = fixed_point(one_state)
    with pytest.raises(DivergenceDetected) as info:
        run_td0(IidSource(one_state), LearnerConfig("TD0", alpha=50.0, M=10, epochs=10), sol)
    assert info.value.step > 0


def test_svrg_first_inner_step(one_state):
    phi = one_state.features
    idx = np.zeros(3, dtype=np.int64)
    anchor = np.zeros(1)
    g = mean_path_update(Dataset.from_transitions([(0, 0, 1.0)]), one_state, anchor)
    _, snap, _, bad, _ = kernels.svrg_inner(phi, 0.9, idx, idx, anchor, g, 0.125, -1.0, 1)
    assert bad == -1
    np.testing.assert_allclose(snap, [0.125])


def test_control_variate_unbiased(small_mdp):
    from tdsvrg.sampling import sample_trajectory
    ds = sample_trajectory(small_mdp, 300, 2)
    rng = np.random.default_rng(1)
    theta, anchor = rng.standard_normal(4), rng.standard_normal(4)
    args = (small_mdp.features, small_mdp.gamma, ds.s, ds.s2, ds.r)
    v = td_updates(*args, theta) - td_updates(*args, anchor) + mean_path_update(ds, small_mdp,
                                                                                  anchor)
    np.testing.assert_allclose(v.mean(axis=0), mean_path_update(ds, small_mdp, theta),
                               atol=1e-12)


@pytest.fixture(scope="module")
def finite_case():
    mdp = random_mdp(10, 3, 4, 0.5, 0)
    from tdsvrg.sampling import sample_trajectory
    ds = sample_trajectory(mdp, 400, 0)
    return mdp, ds, fixed_point(ds, mdp)


@pytest.mark.parametrize("alg", ["TDSVRG_FINITE", "TDSVRG_BATCHED", "VRTD", "GTD2", "TD0"])
def test_fixed_point_absorbing(finite_case, alg):
    mdp, ds, sol = finite_case
    sched = BatchSchedule("exact") if alg != "TDSVRG_BATCHED" else BatchSchedule("exact")
    cfg = LearnerConfig(alg, alpha=0.1, M=50, epochs=3, beta=0.1, batch_schedule=sched,
                        theta0=tuple(sol.theta_star))
    if alg in ("TDSVRG_FINITE", "TDSVRG_BATCHED"):
        tr = run(ds, cfg, sol, env=mdp)
        assert np.all(tr.f_values < 1e-20)
    elif alg == "GTD2":
        # w starts at zero, so theta moves only after w picks up TD errors
        tr = run(Dataset.from_transitions([(0, 0, 0.0)]), cfg, sol, env=mdp)
        assert tr.records[1].f_value >= 0
    else:
        tr = run(ds, cfg, sol, env=mdp)
        assert tr.records[0].f_value < 1e-20


def test_sample_accounting_exact(finite_case):
    mdp, ds, sol = finite_case
    cfg = LearnerConfig("TDSVRG_FINITE", alpha=0.125, M=77, epochs=4)
    tr = run_td_svrg(ds, cfg, sol, env=mdp)
    assert list(tr.samples) == [0] + [k * (len(ds) + 77) for k in range(1, 5)]
    assert len(tr.records) == 5
    assert all(r.est_err_norm < 1e-12 for r in tr.records[1:])


def test_sample_accounting_batched(finite_case):
    mdp, ds, sol = finite_case
    cfg = LearnerConfig("TDSVRG_BATCHED", alpha=0.125, M=60, epochs=6,
                        batch_schedule=BatchSchedule("practical"))
    tr = run_td_svrg(ds, cfg, sol, env=mdp)
    assert np.all(np.diff(tr.samples) > 60)
    assert np.all(np.diff(tr.samples) <= len(ds) + 60)


def test_iid_requires_estimating_schedule(small_mdp):
    sol = fixed_point(small_mdp)
    with pytest.raises(InvalidInput):
        run_td_svrg(IidSource(small_mdp), LearnerConfig("TDSVRG_IID"), sol)
    with pytest.raises(MissingOracle):
        run_td_svrg(IidSource(small_mdp),
                    LearnerConfig("TDSVRG_IID", batch_schedule=BatchSchedule("theoretical")),
                    None)


def test_markov_scalar(one_state):
    sol = fixed_point(one_state)
    cfg = LearnerConfig("TDSVRG_MARKOV", alpha=0.125, M=400, epochs=8, R=12.0,
                        batch_schedule=BatchSchedule("fixed", size=5))
    tr = run_td_svrg_markov(one_state, cfg, sol)
    assert abs(tr.theta[0] - 10) < 1e-3
    assert np.all(np.abs([r.theta[0] for r in tr.records]) <= 12.0 + 1e-12)
    with pytest.raises(InvalidRadius):
        run_td_svrg_markov(one_state, LearnerConfig("TDSVRG_MARKOV", R=5.0,
                           batch_schedule=BatchSchedule("fixed", size=5)), sol)


def test_markov_projection_respected(small_mdp):
    sol = fixed_point(small_mdp)
    R = 1.01 * np.linalg.norm(sol.theta_star)
    cfg = LearnerConfig("TDSVRG_MARKOV", alpha=0.5, M=200, epochs=4, R=R,
                        batch_schedule=BatchSchedule("fixed", size=100), theta0=(50, 0, 0, 0))
    tr = run_td_svrg_markov(small_mdp, cfg, sol)
    assert all(np.linalg.norm(r.theta) <= R * (1 + 1e-12) for r in tr.records)


def test_gtd2_one_step_closed_form():
    phi = np.ones((1, 1))
    idx = np.zeros(1, dtype=np.int64)
    out, bad, _ = kernels.gtd2_loop(phi, 0.9, idx, idx, np.ones(1), np.zeros(1), np.array([2.0]),
                                    0.5, 0.25, 1)
    # theta_1 = 0 + 0.5 * (1 - 0.9) * 2
    assert bad == -1 and out[0, 0] == pytest.approx(0.1)


def test_gtd2_needs_beta(small_mdp):
    with pytest.raises(InvalidInput):
        run_gtd2(IidSource(small_mdp), LearnerConfig("GTD2"), fixed_point(small_mdp))


def test_vrtd_matches_svrg_on_zero_variance(one_state):
    ds = Dataset.from_transitions([(0, 0, 1.0)])
    sol = fixed_point(ds, one_state)
    tr = run_vrtd(ds, LearnerConfig("VRTD", alpha=0.1, M=20, epochs=5), sol, env=one_state)
    assert tr.f_values[-1] < tr.f_values[0]
    assert list(tr.samples) == [0, 40, 80, 120, 160, 200]


def test_trace_invariants(small_mdp):
    sol = fixed_point(small_mdp)
    cfg = LearnerConfig("TDSVRG_IID", alpha=1 / 16, M=500, epochs=5,
                        batch_schedule=BatchSchedule("practical"), seed=3)
    tr = run(IidSource(small_mdp), cfg, sol)
    assert len(tr.records) == 6
    assert np.all(np.diff(tr.samples) > 0) and np.all(tr.f_values >= 0)
    again = run(IidSource(small_mdp), cfg, sol)
    np.testing.assert_array_equal(tr.f_values, again.f_values)


def test_config_validation():
    with pytest.raises(InvalidInput):
        LearnerConfig("TD0", alpha=0)
    with pytest.raises(InvalidInput):
        LearnerConfig("TD0", M=0)
    with pytest.raises(ValueError):
        LearnerConfig("SARSA")
