import numpy as np
import pytest

from ldpfusion.sim_harness import build_oxygen_scenario, build_tracking_scenario
from ldpfusion.system_model import SensorModel, SystemModel

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def oxygen():
    return build_oxygen_scenario()


@pytest.fixture(scope="session")
def tracking():
    return build_tracking_scenario()


def random_spd(rng, n, lo=0.1, hi=2.0):
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return Q @ np.diag(rng.uniform(lo, hi, n)) @ Q.T


def random_stable_model(rng, n=None, L=None):
    """Random stable, controllable, observable plant with 2-3 sensors."""
    n = n or int(rng.integers(1, 4))
    L = L or int(rng.integers(2, 4))
    A = rng.standard_normal((n, n))
    rho = max(abs(np.linalg.eigvals(A)))
    A *= rng.uniform(0.3, 0.95) / rho
    B = rng.standard_normal((n, n))
    sensors = []
    for _ in range(L):
        ny = int(rng.integers(1, n + 1))
        sensors.append(SensorModel(rng.standard_normal((ny, n)), np.eye(ny), random_spd(rng, ny)))
    return SystemModel(A, B, random_spd(rng, n), sensors)


def scalar_two_sensor_model(a, q, r1, r2):
    return SystemModel([[a]], [[1.0]], [[q]], [SensorModel([[1.0]], [[1.0]], [[r1]]),
                                               SensorModel([[1.0]], [[1.0]], [[r2]])])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
