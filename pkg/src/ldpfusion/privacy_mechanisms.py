"""Covariance-based local differential privacy for fused estimators.

Every local estimate is unbiased, so two sensors' outputs share a mean and
differ only in their error covariance. Sensitivity is therefore measured
between covariances, and the privacy loss at an output ``X`` is the absolute
log-ratio of two zero-mean Gaussian densities centred on the true state.

The intrinsic mechanism adds nothing and only checks that the existing
estimation noise is large enough. The Gaussian mechanism adds isotropic
noise ``q_a I`` to every local estimate when it is not.
"""

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import rng as rng_mod
from .errors import BudgetOutOfRange, InvalidInput
from .matrix_core import as_matrix, logdet_spd, spectral_norm, sym_eig_extremes, sym_eigvalsh

INVARIANT_TOL = 1e-12


@dataclass(frozen=True)
class PrivacyBudget:
    epsilon: float
    delta: float

    def __post_init__(self):
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise BudgetOutOfRange(f"epsilon must be positive and finite, got {self.epsilon}")
        if not 0 < self.delta < 1:
            raise BudgetOutOfRange(f"delta must lie in (0, 1), got {self.delta}")

    def check_dimension(self, n_x):
        """The high-dimensional results only hold for ``epsilon < 1``."""
        if n_x > 1 and not self.epsilon < 1:
            raise BudgetOutOfRange(
                f"epsilon must lie in (0, 1) when n_x > 1 (n_x={n_x}), got {self.epsilon}"
            )


@dataclass(frozen=True)
class SensitivityProfile:
    delta2: float
    p_min: float
    p_max: float

    def __post_init__(self):
        if self.p_min > self.p_max:
            raise InvalidInput("p_min exceeds p_max")
        if self.delta2 < self.p_max - self.p_min - INVARIANT_TOL * max(1.0, self.p_max):
            raise InvalidInput("sensitivity is below p_max - p_min")

    def shifted(self, q_a):
        """Profile after adding ``q_a I`` to every diagonal block."""
        return SensitivityProfile(self.delta2, self.p_min + q_a, self.p_max + q_a)


class MechanismKind(str, Enum):
    INTRINSIC = "intrinsic"
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class MechanismPlan:
    kind: MechanismKind
    q_a: float
    zeta: float
    threshold: float
    zeta_bound: float = float("nan")
    profile: SensitivityProfile = field(default=None, compare=False)

    def to_dict(self):
        return {
            "kind": self.kind.value,
            "q_a": self.q_a,
            "zeta": self.zeta,
            "zeta_bound": self.zeta_bound,
            "threshold": self.threshold,
        }


def sensitivity_profile_from_blocks(blocks):
    """Sensitivity and extreme norms from a list of covariance blocks."""
    blocks = [as_matrix(P) for P in blocks]
    norms = [spectral_norm(P) for P in blocks]
    delta2 = 0.0
    for i in range(len(blocks)):
        for j in range(i + 1, len(blocks)):
            # ||P_i - P_j|| is symmetric in (i, j)
            delta2 = max(delta2, spectral_norm(blocks[i] - blocks[j]))
    return SensitivityProfile(delta2, min(norms), max(norms))


def sensitivity_profile(ens):
    """Sensitivity ``max ||P_ii - P_jj||_2`` and extreme norms of an ensemble."""
    return sensitivity_profile_from_blocks(ens.diagonal_blocks())


def _budget_root(budget, n_x):
    eps, dl = budget.epsilon, budget.delta
    if n_x == 1:
        return math.sqrt((dl + 1.0) ** 2 + 8.0 * eps * dl)
    return math.sqrt((dl + n_x) ** 2 + 8.0 * n_x * eps * dl)


def intrinsic_threshold(sp: SensitivityProfile, budget: PrivacyBudget, n_x: int) -> float:
    """Smallest ``p_min`` (exclusive) for which intrinsic noise alone is private.

    ``n_x = 1`` uses the scalar condition, which also admits ``epsilon >= 1``.
    """
    if n_x < 1:
        raise InvalidInput("n_x must be positive")
    budget.check_dimension(n_x)
    return sp.delta2 * _budget_root(budget, n_x) / (2.0 * budget.epsilon * budget.delta)


def intrinsic_threshold_high_dim(sp, budget, n_x):
    """The high-dimensional threshold form, evaluated even at ``n_x = 1``."""
    budget.check_dimension(max(n_x, 2))
    eps, dl = budget.epsilon, budget.delta
    root = math.sqrt((dl + n_x) ** 2 + 8.0 * n_x * eps * dl)
    return sp.delta2 * root / (2.0 * eps * dl)


def zeta_bound(budget: PrivacyBudget, n_x: int) -> float:
    """Strict lower bound on the Gaussian mechanism's scale factor."""
    budget.check_dimension(n_x)
    return _budget_root(budget, n_x) / (2.0 * budget.delta)


def plan_mechanism(sp: SensitivityProfile, budget: PrivacyBudget, n_x: int, zeta_margin=0.0) -> MechanismPlan:
    """Choose the intrinsic mechanism if it suffices, else calibrate ``q_a``.

    The Gaussian plan sets ``zeta = (1 + zeta_margin) * zeta_bound`` and
    ``q_a = max(0, zeta * delta2 / epsilon - p_min)``.
    """
    if zeta_margin < 0:
        raise InvalidInput("zeta_margin must be non-negative")
    threshold = intrinsic_threshold(sp, budget, n_x)
    if sp.delta2 == 0.0 and sp.p_min <= 0.0:
        raise InvalidInput("degenerate deterministic system: zero sensitivity and zero covariance")
    if sp.p_min > threshold:
        return MechanismPlan(MechanismKind.INTRINSIC, 0.0, float("nan"), threshold, float("nan"), sp)
    bound = zeta_bound(budget, n_x)
    zeta = (1.0 + zeta_margin) * bound
    q_a = max(0.0, zeta * sp.delta2 / budget.epsilon - sp.p_min)
    return MechanismPlan(MechanismKind.GAUSSIAN, q_a, zeta, threshold, bound, sp)


def perturb_estimate(x_hat, q_a, rng):
    """Add ``N(0, q_a I)`` noise to an estimate (or a stack of them, last axis)."""
    if q_a < 0:
        raise InvalidInput("q_a must be non-negative")
    x_hat = np.asarray(x_hat, dtype=float)
    if q_a == 0:
        return x_hat.copy()
    return x_hat + math.sqrt(q_a) * rng.standard_normal(x_hat.shape)


def _loss_terms(P_i, P_j):
    """Constant term and quadratic-form matrix of the log density ratio."""
    P_i = as_matrix(P_i, "P_i")
    P_j = as_matrix(P_j, "P_j")
    if P_i.shape != P_j.shape:
        raise InvalidInput(f"covariance shapes differ: {P_i.shape}, {P_j.shape}")
    const = 0.5 * (logdet_spd(P_j, "P_j") - logdet_spd(P_i, "P_i"))
    n = P_i.shape[0]
    eye = np.eye(n)
    M = np.linalg.solve(P_i, eye) - np.linalg.solve(P_j, eye)
    return const, 0.5 * (M + M.T)


def privacy_loss(X, x, P_i, P_j):
    """``|ln N(X; x, P_i) - ln N(X; x, P_j)|``.

    ``X`` may be a single point or an ``(m, n)`` batch, in which case an
    array of ``m`` losses is returned.
    """
    const, M = _loss_terms(P_i, P_j)
    n = M.shape[0]
    X = np.asarray(X, dtype=float)
    single = X.ndim <= 1
    d = X.reshape(-1, n) - np.asarray(x, dtype=float).reshape(1, n)
    quad = np.einsum("ki,ij,kj->k", d, M, d)
    loss = np.abs(const - 0.5 * quad)
    return float(loss[0]) if single else loss


def exceedance_region_1d(P_i, P_j, eps):
    """Intervals of ``X - x`` where the scalar privacy loss exceeds ``eps``.

    With ``t = (X - x)^2`` the loss is ``|a + b t|``. Returns a list of
    ``(lo, hi)`` pairs (``hi`` may be ``inf``) covering the positive and
    negative half-lines symmetrically.
    """
    P_i, P_j = float(P_i), float(P_j)
    if not (P_i > 0 and P_j > 0 and eps > 0):
        raise InvalidInput("variances and eps must be positive")
    if P_i == P_j:
        return []
    a = 0.5 * math.log(P_j / P_i)
    b = (P_j - P_i) / (-2.0 * P_i * P_j)
    # a + b t > eps  or  a + b t < -eps, t >= 0; b != 0 here and sign(a) = -sign(b)
    t_bounds = sorted(((eps - a) / b, (-eps - a) / b))
    t_lo, t_hi = t_bounds
    # |a + b t| <= eps exactly on [t_lo, t_hi]; exceedance is t < t_lo or t > t_hi
    r_hi = math.sqrt(t_hi)
    region = [(-math.inf, -r_hi)]
    if t_lo > 0:
        r_lo = math.sqrt(t_lo)
        region.append((-r_lo, r_lo))
    region.append((r_hi, math.inf))
    return region


def exceedance_probability_1d(P_sample, P_i, P_j, eps):
    """Exact ``P(loss > eps)`` for ``X - x ~ N(0, P_sample)``."""
    from scipy.stats import norm

    sd = math.sqrt(P_sample)
    total = 0.0
    for lo, hi in exceedance_region_1d(P_i, P_j, eps):
        total += norm.cdf(hi / sd) - norm.cdf(lo / sd)
    return total


@dataclass
class PrivacyReport:
    epsilon: float
    delta: float
    samples: int
    fractions: dict  # (i, j) -> exceedance fraction
    tolerance: float

    @property
    def max_fraction(self):
        return max(self.fractions.values(), default=0.0)

    @property
    def passed(self):
        return self.max_fraction <= self.delta + self.tolerance

    def to_dict(self):
        return {
            "epsilon": self.epsilon,
            "delta": self.delta,
            "samples": self.samples,
            "tolerance": self.tolerance,
            "max_fraction": self.max_fraction,
            "passed": self.passed,
            "pairs": [
                {"i": i, "j": j, "fraction": f} for (i, j), f in sorted(self.fractions.items())
            ],
        }


def sampling_tolerance(delta, samples):
    return 3.0 * math.sqrt(delta * (1.0 - delta) / samples)


def empirical_privacy_check(covariances, budget: PrivacyBudget, samples=100_000, rng=None) -> PrivacyReport:
    """Monte Carlo fraction of outputs whose privacy loss exceeds epsilon.

    For each ordered pair ``(i, j)``, draws ``X - x ~ N(0, P_i)`` and counts
    draws with loss above epsilon. The verdict passes iff every fraction is
    at most ``delta + 3 sqrt(delta (1 - delta) / samples)``.
    """
    if samples < 10_000:
        raise InvalidInput("samples must be at least 1e4")
    covs = [as_matrix(P) for P in covariances]
    for P in covs:
        if sym_eig_extremes(P)[0] <= 0:
            raise InvalidInput("covariances must be positive definite")
    rng = rng_mod.as_generator(rng)
    L = len(covs)
    n = covs[0].shape[0]
    fractions = {}
    for i in range(L):
        draws = rng_mod.gaussian(rng, covs[i], size=samples)
        for j in range(L):
            if i == j:
                continue
            loss = privacy_loss(draws, np.zeros(n), covs[i], covs[j])
            fractions[(i, j)] = float(np.count_nonzero(loss > budget.epsilon)) / samples
    return PrivacyReport(budget.epsilon, budget.delta, samples, fractions, sampling_tolerance(budget.delta, samples))


def post_processed_privacy_check(covariances, transform, budget, samples=100_000, rng=None):
    """Privacy check after a fixed linear map ``G`` is applied to every output.

    Each sensor's output distribution becomes ``N(G x, G P_i G^T)``.
    """
    G = as_matrix(transform)
    mapped = [G @ as_matrix(P) @ G.T for P in covariances]
    mapped = [0.5 * (P + P.T) for P in mapped]
    return empirical_privacy_check(mapped, budget, samples, rng)


def chebyshev_bound_check(P, t, samples=100_000, rng=None):
    """Return ``(empirical P(||x - mu||^2 > t^2), trace(P) / t^2)``."""
    if not t > 0:
        raise InvalidInput("t must be positive")
    P = as_matrix(P)
    if sym_eigvalsh(P)[0] < -1e-10:
        raise InvalidInput("P must be positive semidefinite")
    rng = rng_mod.as_generator(rng)
    d = rng_mod.gaussian(rng, P, size=samples)
    empirical = float(np.count_nonzero(np.sum(d * d, axis=1) > t * t)) / samples
    return empirical, float(np.trace(P)) / (t * t)
