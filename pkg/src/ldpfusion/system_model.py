"""Linear time-invariant multi-sensor plant.

    x_{k+1} = A x_k + u_k + B w_k,        w_k   ~ N(0, Q_w)
    y_{i,k} = C_i x_k + D_i v_{i,k},      v_i,k ~ N(0, Q_v_i)

``u_k`` is an optional known deterministic drive. The local filters add the
same ``u_k`` in their prediction step, so estimation errors never see it.
"""

from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from . import rng as rng_mod
from .errors import InvalidInput
from .matrix_core import as_matrix, is_symmetric, numerical_rank, sym_eig_extremes

RANK_TOL = 1e-8
PSD_TOL = 1e-10

KnownInput = Union[None, np.ndarray, Callable[[int], np.ndarray]]


@dataclass(frozen=True)
class SensorModel:
    """One sensor: ``y = C x + D v`` with ``v ~ N(0, Q_v)``."""

    C: np.ndarray
    D: np.ndarray
    Q_v: np.ndarray

    def __post_init__(self):
        C = as_matrix(self.C, "C")
        D = as_matrix(self.D, "D")
        Q_v = as_matrix(self.Q_v, "Q_v")
        if D.shape[0] != C.shape[0]:
            raise InvalidInput(f"D has {D.shape[0]} rows but C has {C.shape[0]}")
        if Q_v.shape != (D.shape[1], D.shape[1]):
            raise InvalidInput(f"Q_v must be {D.shape[1]}x{D.shape[1]}, got {Q_v.shape}")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "Q_v", Q_v)

    @property
    def n_y(self):
        return self.C.shape[0]

    @property
    def Qv_bar(self):
        """Effective measurement covariance ``D Q_v D^T``."""
        R = self.D @ self.Q_v @ self.D.T
        return 0.5 * (R + R.T)


@dataclass(frozen=True)
class SystemModel:
    """Plant matrices, process noise, and the ordered list of sensors."""

    A: np.ndarray
    B: np.ndarray
    Q_w: np.ndarray
    sensors: Sequence[SensorModel]
    known_input: KnownInput = field(default=None, compare=False)

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        B = as_matrix(self.B, "B")
        Q_w = as_matrix(self.Q_w, "Q_w")
        if A.shape[0] != A.shape[1]:
            raise InvalidInput(f"A must be square, got {A.shape}")
        n = A.shape[0]
        if B.shape[0] != n:
            raise InvalidInput(f"B must have {n} rows, got {B.shape}")
        if Q_w.shape != (B.shape[1], B.shape[1]):
            raise InvalidInput(f"Q_w must be {B.shape[1]}x{B.shape[1]}, got {Q_w.shape}")
        sensors = tuple(self.sensors)
        if not sensors:
            raise InvalidInput("at least one sensor is required")
        for i, s in enumerate(sensors):
            if not isinstance(s, SensorModel):
                raise InvalidInput(f"sensor {i} is not a SensorModel")
            if s.C.shape[1] != n:
                raise InvalidInput(f"sensor {i}: C has {s.C.shape[1]} columns, expected {n}")
        u = self.known_input
        if u is not None and not callable(u):
            u = np.asarray(u, dtype=float)
            if u.shape[-1] != n or u.ndim not in (1, 2):
                raise InvalidInput(f"known_input must be (n_x,) or (K, n_x), got {u.shape}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "Q_w", Q_w)
        object.__setattr__(self, "sensors", sensors)
        object.__setattr__(self, "known_input", u)

    @property
    def n_x(self):
        return self.A.shape[0]

    @property
    def L(self):
        return len(self.sensors)

    @property
    def Qw_bar(self):
        """Effective process covariance ``B Q_w B^T``."""
        Q = self.B @ self.Q_w @ self.B.T
        return 0.5 * (Q + Q.T)

    def input_at(self, k):
        """Known drive ``u_k``; zero when the model has none.

        A 2-D input array is indexed by ``k`` and holds its last row beyond the end.
        """
        u = self.known_input
        if u is None:
            return np.zeros(self.n_x)
        if callable(u):
            return np.asarray(u(k), dtype=float).reshape(self.n_x)
        if u.ndim == 1:
            return u
        return u[min(k, u.shape[0] - 1)]


@dataclass(frozen=True)
class ValidationReport:
    controllability_rank: int
    observability_rank: int
    n_x: int
    q_w_psd: bool
    q_v_psd: tuple
    qv_bar_full_rank: tuple
    messages: tuple = ()

    @property
    def accepted(self):
        return (
            self.controllability_rank == self.n_x
            and self.observability_rank == self.n_x
            and self.q_w_psd
            and all(self.q_v_psd)
            and all(self.qv_bar_full_rank)
        )

    def to_dict(self):
        return {
            "accepted": self.accepted,
            "n_x": self.n_x,
            "controllability_rank": self.controllability_rank,
            "observability_rank": self.observability_rank,
            "q_w_psd": self.q_w_psd,
            "q_v_psd": list(self.q_v_psd),
            "qv_bar_full_rank": list(self.qv_bar_full_rank),
            "messages": list(self.messages),
        }


@dataclass
class TrajectorySample:
    """States ``x_0..x_K`` and per-sensor measurements ``y_{i,1..K}``."""

    horizon: int
    states: np.ndarray  # (horizon + 1, n_x)
    measurements: list  # L arrays of shape (horizon, n_y_i); row k-1 is y_{i,k}

    def __post_init__(self):
        if self.states.shape[0] != self.horizon + 1:
            raise InvalidInput("states must hold horizon + 1 rows")
        for y in self.measurements:
            if y.shape[0] != self.horizon:
                raise InvalidInput("each measurement sequence must hold horizon rows")


def controllability_matrix(A, B):
    blocks = [B]
    for _ in range(A.shape[0] - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def observability_matrix(A, C):
    blocks = [C]
    for _ in range(A.shape[0] - 1):
        blocks.append(blocks[-1] @ A)
    return np.vstack(blocks)


def _psd(M):
    return is_symmetric(M) and sym_eig_extremes(M)[0] >= -PSD_TOL


def validate_model(m: SystemModel) -> ValidationReport:
    """Check controllability, joint observability, and noise covariances.

    Observability uses all sensors' ``C_i`` stacked into one observation matrix.
    """
    messages = []
    ctrb = numerical_rank(controllability_matrix(m.A, m.B), RANK_TOL)
    C_all = np.vstack([s.C for s in m.sensors])
    obsv = numerical_rank(observability_matrix(m.A, C_all), RANK_TOL)
    if ctrb != m.n_x:
        messages.append(f"(A, B) not controllable: rank {ctrb} < {m.n_x}")
    if obsv != m.n_x:
        messages.append(f"(A, C) not observable: rank {obsv} < {m.n_x}")
    q_w_ok = _psd(m.Q_w)
    if not q_w_ok:
        messages.append("Q_w is not symmetric positive semidefinite")
    q_v_ok, r_ok = [], []
    for i, s in enumerate(m.sensors):
        ok = _psd(s.Q_v)
        q_v_ok.append(ok)
        if not ok:
            messages.append(f"sensor {i}: Q_v is not symmetric positive semidefinite")
        full = numerical_rank(s.Qv_bar, RANK_TOL) == s.n_y if np.any(s.Qv_bar) else False
        r_ok.append(full)
        if not full:
            messages.append(f"sensor {i}: D Q_v D^T is rank deficient")
    return ValidationReport(ctrb, obsv, m.n_x, q_w_ok, tuple(q_v_ok), tuple(r_ok), tuple(messages))


def step_state(m: SystemModel, x_k, u_k, rng) -> np.ndarray:
    """One plant step ``A x_k + u_k + B w`` with ``w ~ N(0, Q_w)`` from ``rng``."""
    x_k = np.asarray(x_k, dtype=float).reshape(m.n_x)
    u_k = np.zeros(m.n_x) if u_k is None else np.asarray(u_k, dtype=float).reshape(m.n_x)
    w = rng_mod.gaussian(rng, m.Q_w)
    return m.A @ x_k + u_k + m.B @ w


def measure(s: SensorModel, x_k, rng) -> np.ndarray:
    """Noisy measurement ``C x_k + D v`` with ``v ~ N(0, Q_v)``."""
    x_k = np.asarray(x_k, dtype=float).reshape(s.C.shape[1])
    v = rng_mod.gaussian(rng, s.Q_v)
    return s.C @ x_k + s.D @ v


def simulate_trajectory(m: SystemModel, horizon, master_seed, x0=None, run=0) -> TrajectorySample:
    """Simulate one trajectory with the package's substream layout.

    Process noise draws from substream ``(run, PROCESS)`` and sensor ``i``'s
    measurement noise from ``(run, MEASUREMENT, i)``.
    """
    proc = rng_mod.substream(master_seed, run, rng_mod.STREAM_PROCESS)
    meas = [rng_mod.substream(master_seed, run, rng_mod.STREAM_MEASUREMENT, i) for i in range(m.L)]
    x = np.zeros(m.n_x) if x0 is None else np.asarray(x0, dtype=float).reshape(m.n_x)
    states = [x]
    ys = [[] for _ in range(m.L)]
    for k in range(horizon):
        x = step_state(m, x, m.input_at(k), proc)
        states.append(x)
        for i, s in enumerate(m.sensors):
            ys[i].append(measure(s, x, meas[i]))
    return TrajectorySample(horizon, np.array(states), [np.array(y) for y in ys])
