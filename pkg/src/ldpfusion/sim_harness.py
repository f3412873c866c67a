"""Scenario construction and seeded Monte Carlo evaluation.

Runs are vectorised: every run owns its noise substreams (process, per-sensor
measurement, per-sensor perturbation), the noise is drawn up front per run,
and the recursion then advances all runs of a fixed-size chunk together.
Chunking is independent of the thread count, so results do not depend on it.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import __version__
from . import rng as rng_mod
from .fusion_center import fuse, fused_covariance, fusion_weights, perturbed_stacked_cov
from .local_estimator import DEFAULT_MAX_ITER, DEFAULT_TOL, assemble_ensemble
from .privacy_mechanisms import (
    MechanismKind,
    MechanismPlan,
    PrivacyBudget,
    empirical_privacy_check,
    plan_mechanism,
    sensitivity_profile,
)
from .system_model import SensorModel, SystemModel

CHUNK_RUNS = 250

OXYGEN_DEFAULTS = dict(
    f=0.2,
    Hb=12.0,
    P_ATM=760.0,
    P_H2O=47.0,
    mu=5.0,
    RQ=0.8,
    FiO2=0.5,
    PACO2=40.0,
    Q_w=0.4,
    Q_v1=0.6,
    Q_v2=0.7,
    epsilon=0.8,
    delta=0.2,
)

TRACKING_DEFAULTS = dict(
    T=1.0,
    Q_w=0.1,
    Q_v1=0.2,
    Q_v2=0.1,
    epsilon=0.9,
    delta=0.2,
)

RUN_DEFAULTS = dict(
    horizon=200,
    runs=1000,
    master_seed=42,
    burn_in=50,
    zeta_margin=0.0,
    tol=DEFAULT_TOL,
    max_iter=DEFAULT_MAX_ITER,
    privacy_samples=100_000,
)


@dataclass(frozen=True)
class Calibration:
    ensemble: object
    profile: object
    plan: MechanismPlan


@dataclass
class Scenario:
    name: str
    model: SystemModel
    budget: PrivacyBudget
    plan: MechanismPlan
    ensemble: object
    horizon: int = 200
    runs: int = 1000
    master_seed: int = 42
    burn_in: int = 50
    zeta_margin: float = 0.0
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    privacy_samples: int = 100_000
    x0: np.ndarray = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.horizon < 1 or self.runs < 1:
            raise ValueError("horizon and runs must be positive")
        if not 0 <= self.burn_in < self.horizon:
            raise ValueError("burn_in must lie in [0, horizon)")

    @property
    def profile(self):
        return sensitivity_profile(self.ensemble)


def calibrate(model, budget, zeta_margin=0.0, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER) -> Calibration:
    """Ensemble, sensitivity profile and mechanism plan for a model and budget."""
    budget.check_dimension(model.n_x)
    ens = assemble_ensemble(model, tol, max_iter)
    sp = sensitivity_profile(ens)
    return Calibration(ens, sp, plan_mechanism(sp, budget, model.n_x, zeta_margin))


def force_q_a(plan: MechanismPlan, q_a):
    """A copy of ``plan`` with the injected noise level overridden."""
    kind = MechanismKind.GAUSSIAN if q_a > 0 else plan.kind
    return replace(plan, kind=kind, q_a=float(q_a))


def _split(overrides, defaults):
    params = dict(defaults)
    run = dict(RUN_DEFAULTS)
    extra = {}
    for k, v in overrides.items():
        if k in params:
            params[k] = v
        elif k in run:
            run[k] = v
        elif k == "x0":
            extra[k] = v
        else:
            raise KeyError(f"unknown scenario override {k!r}")
    return params, run, extra


def _finish(name, model, params, run, extra):
    budget = PrivacyBudget(float(params["epsilon"]), float(params["delta"]))
    cal = calibrate(model, budget, run["zeta_margin"], run["tol"], run["max_iter"])
    x0 = extra.get("x0")
    return Scenario(
        name=name,
        model=model,
        budget=budget,
        plan=cal.plan,
        ensemble=cal.ensemble,
        horizon=int(run["horizon"]),
        runs=int(run["runs"]),
        master_seed=int(run["master_seed"]),
        burn_in=int(run["burn_in"]),
        zeta_margin=float(run["zeta_margin"]),
        tol=float(run["tol"]),
        max_iter=int(run["max_iter"]),
        privacy_samples=int(run["privacy_samples"]),
        x0=None if x0 is None else np.asarray(x0, dtype=float).reshape(model.n_x),
        params=params,
    )


def oxygen_drive(f, Hb, P_ATM, P_H2O, mu, RQ, FiO2, PACO2):
    """Known input of the blood-oxygen model.

    ``FiO2`` (inhaled oxygen fraction) and ``PACO2`` (alveolar CO2 pressure)
    may be scalars or per-step arrays. Estimation errors, and therefore all
    RMSE and privacy outputs, do not depend on them.
    """
    FiO2 = np.asarray(FiO2, dtype=float)
    PACO2 = np.asarray(PACO2, dtype=float)
    c1 = P_ATM - P_H2O
    c2 = (1.0 - FiO2 * (1.0 - RQ)) / RQ
    return (1.0 - f) * (1.34 * Hb + 0.003 * (c1 * FiO2) + c2 * PACO2) - f * mu


def oxygen_model(params) -> SystemModel:
    U = oxygen_drive(*(params[k] for k in ("f", "Hb", "P_ATM", "P_H2O", "mu", "RQ", "FiO2", "PACO2")))
    known = U.reshape(-1, 1) if U.ndim else np.array([float(U)])
    return SystemModel(
        A=[[params["f"]]],
        B=[[1.0]],
        Q_w=[[params["Q_w"]]],
        sensors=[
            SensorModel([[1.0]], [[1.0]], [[params["Q_v1"]]]),
            SensorModel([[1.0]], [[1.0]], [[params["Q_v2"]]]),
        ],
        known_input=known,
    )


def tracking_model(params) -> SystemModel:
    T = float(params["T"])
    return SystemModel(
        A=[[1.0, T], [0.0, 1.0]],
        B=[[0.5 * T * T], [T]],
        Q_w=[[params["Q_w"]]],
        sensors=[
            SensorModel([[1.0, 0.0]], [[1.0]], [[params["Q_v1"]]]),
            SensorModel([[1.0, 0.0]], [[1.0]], [[params["Q_v2"]]]),
        ],
    )


def build_oxygen_scenario(**overrides) -> Scenario:
    """Blood-oxygen content of a child in surgery, two oxygen sensors."""
    params, run, extra = _split(overrides, OXYGEN_DEFAULTS)
    return _finish("oxygen", oxygen_model(params), params, run, extra)


def build_tracking_scenario(**overrides) -> Scenario:
    """Constant-velocity target observed in position by two sensors."""
    params, run, extra = _split(overrides, TRACKING_DEFAULTS)
    return _finish("tracking", tracking_model(params), params, run, extra)


def builtin_model(name, **overrides) -> SystemModel:
    """The plant of a built-in scenario, without filter synthesis or calibration."""
    defaults, make = {"oxygen": (OXYGEN_DEFAULTS, oxygen_model), "tracking": (TRACKING_DEFAULTS, tracking_model)}[name]
    params, _, _ = _split(overrides, defaults)
    return make(params)


def build_custom_scenario(model: SystemModel, epsilon, delta, name="custom", **overrides) -> Scenario:
    """Scenario around a user-supplied model; ``overrides`` are run settings."""
    params, run, extra = _split(overrides, {})
    params.update(epsilon=epsilon, delta=delta)
    return _finish(name, model, params, run, extra)


BUILTIN_SCENARIOS = {
    "oxygen": build_oxygen_scenario,
    "tracking": build_tracking_scenario,
}


@dataclass
class SimulationResult:
    steps: np.ndarray  # time indices k recorded (k > burn_in)
    rmse_local: np.ndarray  # (L, T)
    rmse_fused: np.ndarray  # (T,)
    rmse_perturbed_fused: np.ndarray  # (T,) or None when no noise is injected
    rmse_local_components: np.ndarray  # (L, T, n_x)
    rmse_fused_components: np.ndarray  # (T, n_x)
    rmse_perturbed_fused_components: np.ndarray
    steady_mse_per_run: dict  # estimator name -> (runs,) time-averaged squared errors
    steady_window: tuple  # (first k, last k) inclusive
    privacy_report: object
    metadata: dict

    def estimator_names(self):
        names = [f"local{i + 1}" for i in range(self.rmse_local.shape[0])] + ["fused"]
        if self.rmse_perturbed_fused is not None:
            names.append("perturbed_fused")
        return names

    def series(self, name):
        if name == "fused":
            return self.rmse_fused
        if name == "perturbed_fused":
            return self.rmse_perturbed_fused
        return self.rmse_local[int(name[len("local"):]) - 1]


def _draw_run_noise(s: Scenario, run, root_w, roots_v, sqrt_qa):
    m = s.model
    K = s.horizon
    proc = rng_mod.substream(s.master_seed, run, rng_mod.STREAM_PROCESS)
    w = proc.standard_normal((K, root_w.shape[1])) @ root_w.T @ m.B.T
    v = []
    a = []
    for i, sensor in enumerate(m.sensors):
        g = rng_mod.substream(s.master_seed, run, rng_mod.STREAM_MEASUREMENT, i)
        v.append(g.standard_normal((K, roots_v[i].shape[1])) @ roots_v[i].T @ sensor.D.T)
        if sqrt_qa > 0:
            g = rng_mod.substream(s.master_seed, run, rng_mod.STREAM_PERTURBATION, i)
            a.append(sqrt_qa * g.standard_normal((K, m.n_x)))
    return w, v, a


def _psd_root(cov):
    w, V = np.linalg.eigh(0.5 * (cov + cov.T))
    return V * np.sqrt(np.clip(w, 0.0, None))


def _simulate_chunk(s: Scenario, runs, W_clean, W_pert):
    """Squared-error tensors for a block of runs: dict name -> (R, K, n_x)."""
    m = s.model
    n, L, K = m.n_x, m.L, s.horizon
    q_a = s.plan.q_a
    root_w = _psd_root(m.Q_w)
    roots_v = [_psd_root(sn.Q_v) for sn in m.sensors]
    noise = [_draw_run_noise(s, r, root_w, roots_v, math.sqrt(q_a)) for r in runs]
    R = len(runs)
    Wn = np.stack([z[0] for z in noise])  # (R, K, n)
    Vn = [np.stack([z[1][i] for z in noise]) for i in range(L)]
    An = [np.stack([z[2][i] for z in noise]) for i in range(L)] if q_a > 0 else None

    x = np.zeros((R, n)) if s.x0 is None else np.tile(s.x0, (R, 1))
    xhat = [np.zeros((R, n)) for _ in range(L)]
    sols = s.ensemble.per_sensor
    sq = {f"local{i + 1}": np.empty((R, K, n)) for i in range(L)}
    sq["fused"] = np.empty((R, K, n))
    if q_a > 0:
        sq["perturbed_fused"] = np.empty((R, K, n))
    AT = m.A.T
    for k in range(K):
        u = m.input_at(k)
        x = x @ AT + u + Wn[:, k]
        for i, sn in enumerate(m.sensors):
            y = x @ sn.C.T + Vn[i][:, k]
            pred = xhat[i] @ AT + u
            xhat[i] = pred + (y - pred @ sn.C.T) @ sols[i].K.T
            sq[f"local{i + 1}"][:, k] = (x - xhat[i]) ** 2
        sq["fused"][:, k] = (x - fuse(W_clean, xhat)) ** 2
        if q_a > 0:
            perturbed = [xhat[i] + An[i][:, k] for i in range(L)]
            sq["perturbed_fused"][:, k] = (x - fuse(W_pert, perturbed)) ** 2
    return sq


def run_monte_carlo(s: Scenario, threads=1) -> SimulationResult:
    """Simulate ``s.runs`` independent trajectories and collect RMSE series.

    RMSE at step ``k`` is ``sqrt(mean over runs of ||x_k - xhat_k||^2)``.
    Steps ``1..burn_in`` are dropped from the stored series; steady-state
    statistics use the last half of the horizon.
    """
    m = s.model
    n, L, K = m.n_x, m.L, s.horizon
    W_clean = fusion_weights(s.ensemble.stacked, n, L)
    P_pert = perturbed_stacked_cov(s.ensemble, s.plan.q_a)
    W_pert = fusion_weights(P_pert, n, L)

    chunks = [range(a, min(a + CHUNK_RUNS, s.runs)) for a in range(0, s.runs, CHUNK_RUNS)]
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda c: _simulate_chunk(s, c, W_clean, W_pert), chunks))
    else:
        parts = [_simulate_chunk(s, c, W_clean, W_pert) for c in chunks]
    sq = {name: np.concatenate([p[name] for p in parts], axis=0) for name in parts[0]}

    keep = slice(s.burn_in, K)  # step k is stored at index k - 1
    steady_first = K - K // 2 + 1
    steady = slice(steady_first - 1, K)

    def comp(name):
        return np.sqrt(np.mean(sq[name][:, keep], axis=0))

    def total(name):
        return np.sqrt(np.mean(np.sum(sq[name][:, keep], axis=2), axis=0))

    steady_mse = {name: np.mean(np.sum(v[:, steady], axis=2), axis=1) for name, v in sq.items()}
    has_pert = "perturbed_fused" in sq

    blocks = [sol.P_est + s.plan.q_a * np.eye(n) for sol in s.ensemble.per_sensor]
    report = None
    if L > 1 and all(np.linalg.eigvalsh(b)[0] > 0 for b in blocks):
        report = empirical_privacy_check(
            blocks,
            s.budget,
            s.privacy_samples,
            rng_mod.substream(s.master_seed, rng_mod.STREAM_PRIVACY),
        )
    metadata = {
        "scenario": s.name,
        "master_seed": s.master_seed,
        "runs": s.runs,
        "horizon": s.horizon,
        "burn_in": s.burn_in,
        "tol": s.tol,
        "max_iter": s.max_iter,
        "plan": s.plan.to_dict(),
        "version": __version__,
        "seed_derivation": "splitmix64 path (master, run, stream[, sensor]) -> Philox key",
        "predicted_mse": {
            **{f"local{i + 1}": float(np.trace(b.P_est)) for i, b in enumerate(s.ensemble.per_sensor)},
            "fused": float(np.trace(fused_covariance(W_clean, s.ensemble.stacked))),
            **({"perturbed_fused": float(np.trace(fused_covariance(W_pert, P_pert)))} if has_pert else {}),
        },
    }
    return SimulationResult(
        steps=np.arange(s.burn_in + 1, K + 1),
        rmse_local=np.stack([total(f"local{i + 1}") for i in range(L)]),
        rmse_fused=total("fused"),
        rmse_perturbed_fused=total("perturbed_fused") if has_pert else None,
        rmse_local_components=np.stack([comp(f"local{i + 1}") for i in range(L)]),
        rmse_fused_components=comp("fused"),
        rmse_perturbed_fused_components=comp("perturbed_fused") if has_pert else None,
        steady_mse_per_run=steady_mse,
        steady_window=(steady_first, K),
        privacy_report=report,
        metadata=metadata,
    )


@dataclass(frozen=True)
class SteadyStat:
    name: str
    rmse: float
    stderr: float
    mse: float
    mse_stderr: float


def rmse_summary(r: SimulationResult):
    """Steady RMSE per estimator over the last half of the horizon.

    The per-run time-averaged squared errors are independent across runs,
    which gives the standard error of the steady MSE; the RMSE error is
    propagated to first order.
    """
    out = {}
    for name in r.estimator_names():
        per_run = r.steady_mse_per_run[name]
        mse = float(np.mean(per_run))
        se_mse = float(np.std(per_run, ddof=1) / math.sqrt(per_run.size)) if per_run.size > 1 else 0.0
        rmse = math.sqrt(mse)
        se = se_mse / (2.0 * rmse) if rmse > 0 else 0.0
        out[name] = SteadyStat(name, rmse, se, mse, se_mse)
    return out
