"""Steady-state local Kalman filters and their joint error covariances.

Each sensor runs

    xhat_k = A xhat_{k-1} + u_k + K_i (y_{i,k} - C_i (A xhat_{k-1} + u_k))

with the steady gain from the Riccati fixed point. Cross-covariances between
sensors come from their own (Lyapunov-like) fixed point, and everything is
assembled into the stacked ``n_x L x n_x L`` error covariance used for fusion.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceFailure, InvalidInput
from .matrix_core import solve_linear, sym_eig_extremes, symmetrize
from .system_model import SystemModel

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 100_000


@dataclass(frozen=True)
class SteadySensorSolution:
    """Steady prediction covariance, gain and estimation covariance of one sensor."""

    P_pred: np.ndarray
    K: np.ndarray
    P_est: np.ndarray
    iterations: int = 0
    residual: float = 0.0


@dataclass(frozen=True)
class CovarianceEnsemble:
    per_sensor: tuple
    cross: tuple  # cross[i][j] is P_ij; P_ii on the diagonal
    stacked: np.ndarray

    @property
    def L(self):
        return len(self.per_sensor)

    @property
    def n_x(self):
        return self.per_sensor[0].P_est.shape[0]

    def diagonal_blocks(self):
        return [s.P_est for s in self.per_sensor]


@dataclass
class FilterState:
    sensor: int
    estimate: np.ndarray


def _gain(P_pred, C, R):
    S = symmetrize(C @ P_pred @ C.T + R)
    if not np.any(P_pred):
        # zero prior uncertainty: the measurement carries no information
        return np.zeros((P_pred.shape[0], C.shape[0]))
    # K = P C^T S^{-1}  <=>  S K^T = C P
    return solve_linear(S, C @ P_pred).T


def riccati_map(P, A, Q, C, R):
    """One application of the prediction-form Riccati operator."""
    APA = A @ P @ A.T
    S = symmetrize(C @ P @ C.T + R)
    if not np.any(P):
        return symmetrize(APA + Q)
    G = solve_linear(S, C @ P @ A.T)  # S^{-1} C P A^T
    return symmetrize(APA + Q - A @ P @ C.T @ G)


def riccati_residual(m: SystemModel, i, P_pred):
    s = m.sensors[i]
    return float(np.max(np.abs(riccati_map(P_pred, m.A, m.Qw_bar, s.C, s.Qv_bar) - P_pred)))


def solve_riccati(m: SystemModel, i, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER) -> SteadySensorSolution:
    """Steady-state filter for sensor ``i`` by fixed-point iteration from ``Q_w_bar``.

    Iterates the Riccati map until the max-entry change drops to ``tol``,
    then forms the steady gain and estimation covariance.

    Raises:
        ConvergenceFailure: no convergence within ``max_iter`` sweeps.
    """
    if not tol > 0:
        raise InvalidInput("tol must be positive")
    s = m.sensors[i]
    A, Q, C, R = m.A, m.Qw_bar, s.C, s.Qv_bar
    P = Q.copy()
    prev_delta = np.inf
    nonmonotone = 0
    delta = np.inf
    for it in range(1, max_iter + 1):
        P_next = riccati_map(P, A, Q, C, R)
        if not np.all(np.isfinite(P_next)):
            raise ConvergenceFailure(f"Riccati iteration for sensor {i} diverged", float("inf"), it)
        delta = float(np.max(np.abs(P_next - P)))
        P = P_next
        if delta <= tol:
            break
        if it > 50 and delta > prev_delta:
            nonmonotone += 1
        prev_delta = delta
    else:
        raise ConvergenceFailure(f"Riccati iteration for sensor {i} did not converge", delta, max_iter)
    if nonmonotone:
        log.warning("sensor %d: Riccati deltas increased %d times after burn-in", i, nonmonotone)
    K = _gain(P, C, R)
    n = m.n_x
    P_est = symmetrize((np.eye(n) - K @ C) @ P)
    return SteadySensorSolution(P, K, P_est, it, riccati_residual(m, i, P))


def cross_map(P_ij, A, Q, F_i, F_j, shared_noise=None):
    out = F_i @ (A @ P_ij @ A.T + Q) @ F_j.T
    if shared_noise is not None:
        out = out + shared_noise
    return out


def _shared_noise(m, i, j, sol_i):
    # measurement noise is common to both estimates only on the diagonal
    if i != j:
        return None
    K = sol_i.K
    return K @ m.sensors[i].Qv_bar @ K.T


def solve_cross_cov(m: SystemModel, i, j, sol_i, sol_j, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """Steady cross error covariance ``P_ij`` between sensors ``i`` and ``j``.

    Fixed point of ``P = F_i (A P A^T + Q_w_bar) F_j^T`` with
    ``F_i = I - K_i C_i``, iterated from zero. With ``i == j`` the sensor's
    own measurement noise ``K_i Q_v_bar K_i^T`` enters as well, so the
    recursion reproduces ``P_est`` of that sensor (Joseph form).
    """
    n = m.n_x
    F_i = np.eye(n) - sol_i.K @ m.sensors[i].C
    F_j = np.eye(n) - sol_j.K @ m.sensors[j].C
    A, Q = m.A, m.Qw_bar
    shared = _shared_noise(m, i, j, sol_i)
    P = np.zeros((n, n))
    delta = np.inf
    for it in range(1, max_iter + 1):
        P_next = cross_map(P, A, Q, F_i, F_j, shared)
        if i == j:
            P_next = symmetrize(P_next)
        if not np.all(np.isfinite(P_next)):
            raise ConvergenceFailure(f"cross-covariance ({i},{j}) diverged", float("inf"), it)
        delta = float(np.max(np.abs(P_next - P)))
        P = P_next
        if delta <= tol:
            return P
    raise ConvergenceFailure(f"cross-covariance ({i},{j}) did not converge", delta, max_iter)


def cross_residual(m: SystemModel, i, j, sol_i, sol_j, P_ij):
    n = m.n_x
    F_i = np.eye(n) - sol_i.K @ m.sensors[i].C
    F_j = np.eye(n) - sol_j.K @ m.sensors[j].C
    mapped = cross_map(P_ij, m.A, m.Qw_bar, F_i, F_j, _shared_noise(m, i, j, sol_i))
    return float(np.max(np.abs(mapped - P_ij)))


def assemble_ensemble(m: SystemModel, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER) -> CovarianceEnsemble:
    """Solve every sensor and every pair, and build the stacked covariance."""
    sols = tuple(solve_riccati(m, i, tol, max_iter) for i in range(m.L))
    L, n = m.L, m.n_x
    cross = [[None] * L for _ in range(L)]
    for i in range(L):
        cross[i][i] = sols[i].P_est
        for j in range(i + 1, L):
            P_ij = solve_cross_cov(m, i, j, sols[i], sols[j], tol, max_iter)
            cross[i][j] = P_ij
            cross[j][i] = P_ij.T
    stacked = symmetrize(np.block(cross))
    lo, _ = sym_eig_extremes(stacked)
    if lo < -1e-8:
        log.warning("stacked covariance has lambda_min %.3e < -1e-8", lo)
    return CovarianceEnsemble(sols, tuple(tuple(r) for r in cross), stacked.reshape(n * L, n * L))


def filter_step(fs: FilterState, sol: SteadySensorSolution, m: SystemModel, y, u=None) -> FilterState:
    """Advance one sensor's steady-state filter by one measurement."""
    s = m.sensors[fs.sensor]
    u = np.zeros(m.n_x) if u is None else np.asarray(u, dtype=float).reshape(m.n_x)
    pred = m.A @ fs.estimate + u
    innov = np.asarray(y, dtype=float).reshape(s.n_y) - s.C @ pred
    return FilterState(fs.sensor, pred + sol.K @ innov)
