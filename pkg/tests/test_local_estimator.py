import math

import numpy as np
import pytest
import scipy.linalg as sla

from ldpfusion.errors import ConvergenceFailure
from ldpfusion.local_estimator import (
    FilterState,
    assemble_ensemble,
    cross_residual,
    filter_step,
    solve_cross_cov,
    solve_riccati,
)
from ldpfusion.sim_harness import OXYGEN_DEFAULTS, oxygen_model
from ldpfusion.system_model import SensorModel, SystemModel, simulate_trajectory

from conftest import random_stable_model, scalar_two_sensor_model


def scalar_riccati_root(a, q, r):
    """Positive root of P^2 + (r - a^2 r - q) P - q r = 0."""
    b = r - a * a * r - q
    return (-b + math.sqrt(b * b + 4 * q * r)) / 2


@pytest.fixture(scope="module")
def oxy_model():
    return oxygen_model(OXYGEN_DEFAULTS)


def test_oxygen_sensor1(oxy_model):
    sol = solve_riccati(oxy_model, 0)
    # P^2 + 0.176 P - 0.24 = 0
    assert sol.P_pred[0, 0] == pytest.approx(scalar_riccati_root(0.2, 0.4, 0.6), abs=1e-10)
    assert sol.P_pred[0, 0] == pytest.approx(0.40974, abs=1e-5)
    assert sol.P_est[0, 0] == pytest.approx(0.2435, abs=1e-4)
    assert sol.K[0, 0] == pytest.approx(0.40579, abs=1e-5)


def test_oxygen_sensor2(oxy_model):
    sol = solve_riccati(oxy_model, 1)
    # P^2 + 0.272 P - 0.28 = 0
    assert sol.P_pred[0, 0] == pytest.approx(scalar_riccati_root(0.2, 0.4, 0.7), abs=1e-10)
    assert sol.P_pred[0, 0] == pytest.approx(0.41034, abs=1e-5)
    assert sol.P_est[0, 0] == pytest.approx(0.2587, abs=1e-4)
    assert sol.K[0, 0] == pytest.approx(0.36957, abs=1e-5)


def test_zero_process_noise_fixed_point():
    m = scalar_two_sensor_model(0.7, 0.0, 0.5, 0.9)
    sol = solve_riccati(m, 0)
    assert sol.P_pred[0, 0] == 0.0 and sol.P_est[0, 0] == 0.0
    assert solve_cross_cov(m, 0, 1, sol, solve_riccati(m, 1))[0, 0] == 0.0


def test_oxygen_cross_covariance(oxy_model):
    s1, s2 = solve_riccati(oxy_model, 0), solve_riccati(oxy_model, 1)
    p12 = solve_cross_cov(oxy_model, 0, 1, s1, s2)[0, 0]
    f = (1 - s1.K[0, 0]) * (1 - s2.K[0, 0])
    # p = f (0.04 p + 0.4)
    assert p12 == pytest.approx(0.4 * f / (1 - 0.04 * f), abs=1e-10)
    assert p12 == pytest.approx(0.15212, abs=1e-5)


def test_cross_recursion_reproduces_diagonal():
    rng = np.random.default_rng(21)
    m = random_stable_model(rng, n=3, L=2)
    s = solve_riccati(m, 0)
    P = solve_cross_cov(m, 0, 0, s, s)
    np.testing.assert_allclose(P, s.P_est, atol=1e-8)


def test_matches_scipy_dare():
    rng = np.random.default_rng(4)
    for _ in range(10):
        m = random_stable_model(rng)
        for i, sn in enumerate(m.sensors):
            sol = solve_riccati(m, i)
            ref = sla.solve_discrete_are(m.A.T, sn.C.T, m.Qw_bar, sn.Qv_bar)
            np.testing.assert_allclose(sol.P_pred, ref, atol=1e-8, rtol=1e-8)


def test_solution_invariants():
    rng = np.random.default_rng(5)
    m = random_stable_model(rng, n=3, L=3)
    for i in range(m.L):
        sol = solve_riccati(m, i)
        assert sol.residual <= 1e-8
        assert np.linalg.eigvalsh(sol.P_est)[0] >= -1e-9
        assert np.linalg.eigvalsh(sol.P_pred - sol.P_est)[0] >= -1e-9


def test_ensemble_oxygen(oxy_model):
    ens = assemble_ensemble(oxy_model)
    np.testing.assert_allclose(ens.stacked, [[0.2435, 0.1521], [0.1521, 0.2587]], atol=1e-3)


def test_ensemble_single_sensor():
    m = SystemModel([[0.5]], [[1.0]], [[1.0]], [SensorModel([[1.0]], [[1.0]], [[1.0]])])
    ens = assemble_ensemble(m)
    np.testing.assert_array_equal(ens.stacked, ens.per_sensor[0].P_est)


def test_ensemble_identical_sensors():
    m = scalar_two_sensor_model(0.5, 0.4, 0.6, 0.6)
    ens = assemble_ensemble(m)
    assert ens.cross[0][0][0, 0] == pytest.approx(ens.cross[1][1][0, 0], abs=1e-14)


def test_ensemble_invariants():
    rng = np.random.default_rng(8)
    m = random_stable_model(rng, n=2, L=3)
    ens = assemble_ensemble(m)
    for i in range(3):
        for j in range(3):
            np.testing.assert_allclose(ens.cross[i][j], ens.cross[j][i].T, atol=1e-12)
            if i != j:
                assert cross_residual(m, i, j, ens.per_sensor[i], ens.per_sensor[j], ens.cross[i][j]) <= 1e-8
    np.testing.assert_array_equal(ens.stacked, ens.stacked.T)
    assert np.linalg.eigvalsh(ens.stacked)[0] >= -1e-8


def test_nonconvergence_reported():
    m = SystemModel([[1.5]], [[1.0]], [[1.0]], [SensorModel([[1.0]], [[1.0]], [[1.0]])])
    with pytest.raises(ConvergenceFailure) as exc:
        solve_riccati(m, 0, max_iter=3)
    assert exc.value.iterations == 3 and exc.value.residual > 0


def test_filter_step_pure_prediction(oxy_model):
    sol = solve_riccati(oxy_model, 0)
    zero_gain = type(sol)(sol.P_pred, np.zeros_like(sol.K), sol.P_est)
    fs = filter_step(FilterState(0, np.array([2.0])), zero_gain, oxy_model, [100.0], [1.0])
    assert fs.estimate[0] == pytest.approx(0.2 * 2.0 + 1.0)


def test_filter_step_full_correction():
    C = np.array([[2.0, 1.0], [0.0, 1.0]])
    m = SystemModel([[0.9, 0.1], [0.0, 0.8]], np.eye(2), np.eye(2), [SensorModel(C, np.eye(2), np.eye(2))])
    sol = solve_riccati(m, 0)
    full = type(sol)(sol.P_pred, np.linalg.inv(C), sol.P_est)
    y = np.array([1.0, -3.0])
    fs = filter_step(FilterState(0, np.array([5.0, 5.0])), full, m, y, np.array([0.3, 0.1]))
    np.testing.assert_allclose(fs.estimate, np.linalg.solve(C, y), atol=1e-12)


def _long_run_errors(m, steps, seed, burn=50):
    traj = simulate_trajectory(m, steps, master_seed=seed)
    sols = [solve_riccati(m, i) for i in range(m.L)]
    states = [FilterState(i, np.zeros(m.n_x)) for i in range(m.L)]
    errs = np.empty((m.L, steps, m.n_x))
    for k in range(steps):
        u = m.input_at(k)
        for i in range(m.L):
            states[i] = filter_step(states[i], sols[i], m, traj.measurements[i][k], u)
            errs[i, k] = traj.states[k + 1] - states[i].estimate
    return errs[:, burn:], sols


@pytest.mark.slow
def test_long_run_statistics(oxy_model):
    errs, sols = _long_run_errors(oxy_model, 100_000, seed=2024)
    e1, e2 = errs[0, :, 0], errs[1, :, 0]
    assert np.var(e1) == pytest.approx(0.2435, rel=0.05)
    # errors are autocorrelated; a 3-SEM bound with the naive SEM is tighter than
    # needed, so inflate it by the AR(1) factor sqrt((1 + r) / (1 - r))
    for e in (e1, e2):
        r = np.corrcoef(e[1:], e[:-1])[0, 1]
        sem = np.std(e) / math.sqrt(len(e)) * math.sqrt((1 + r) / (1 - r))
        assert abs(np.mean(e)) <= 3 * sem
    ens = assemble_ensemble(oxy_model)
    emp12 = np.mean(e1 * e2)
    assert emp12 == pytest.approx(ens.cross[0][1][0, 0], rel=0.05)
