"""Linear minimum-variance fusion of correlated local estimates."""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput, SingularMatrix
from .matrix_core import as_matrix, solve_linear, symmetrize

log = logging.getLogger(__name__)

JITTER_SCALE = 1e-10


@dataclass(frozen=True)
class FusionWeights:
    blocks: tuple  # L matrices, each n_x x n_x

    @property
    def L(self):
        return len(self.blocks)

    @property
    def row(self):
        """``[W_1 ... W_L]`` as one ``n_x x n_x L`` matrix."""
        return np.hstack(self.blocks)

    def sum_residual(self):
        n = self.blocks[0].shape[0]
        return float(np.max(np.abs(sum(self.blocks) - np.eye(n))))


@dataclass(frozen=True)
class FusedResult:
    estimate: np.ndarray
    covariance: np.ndarray


def _stack_identity(n_x, L):
    return np.tile(np.eye(n_x), (L, 1))


def fusion_weights(P_stacked, n_x, L) -> FusionWeights:
    """Optimal weights ``(I_a^T P^-1 I_a)^-1 I_a^T P^-1`` via linear solves.

    A singular stacked covariance (e.g. duplicated sensors) gets a one-off
    diagonal jitter of ``1e-10 * trace / dim`` before giving up.
    """
    P = as_matrix(P_stacked, "P_stacked")
    if P.shape != (n_x * L, n_x * L):
        raise InvalidInput(f"stacked covariance must be {n_x * L} square, got {P.shape}")
    Ia = _stack_identity(n_x, L)
    try:
        G = solve_linear(P, Ia)  # P^-1 I_a
    except SingularMatrix:
        # an all-zero covariance (noise-free plant) makes any feasible weight optimal
        bump = JITTER_SCALE * (float(np.trace(P)) / P.shape[0] or 1.0)
        log.warning("stacked covariance singular; adding diagonal jitter %.3e", bump)
        P = P + bump * np.eye(P.shape[0])
        G = solve_linear(P, Ia)
    info = symmetrize(Ia.T @ G)  # I_a^T P^-1 I_a
    # W = info^-1 G^T, since (P^-1 I_a)^T = I_a^T P^-1 for symmetric P
    W = solve_linear(info, G.T)
    blocks = tuple(W[:, i * n_x:(i + 1) * n_x] for i in range(L))
    return FusionWeights(blocks)


def perturbed_stacked_cov(ens, q_a):
    """Stacked covariance after adding ``q_a I`` to every diagonal block.

    The injected noises are independent across sensors, so off-diagonal
    blocks are unchanged.
    """
    if q_a < 0:
        raise InvalidInput("q_a must be non-negative")
    P = np.array(ens.stacked if hasattr(ens, "stacked") else ens, dtype=float)
    return P + q_a * np.eye(P.shape[0])


def fuse(w: FusionWeights, estimates):
    """``sum_i W_i xhat_i``; estimates may carry leading batch axes."""
    if len(estimates) != w.L:
        raise InvalidInput(f"expected {w.L} estimates, got {len(estimates)}")
    out = 0.0
    for W_i, x_i in zip(w.blocks, estimates):
        out = out + np.asarray(x_i, dtype=float) @ W_i.T
    return out


def fused_covariance(w: FusionWeights, P_stacked):
    W = w.row
    P = as_matrix(P_stacked)
    if P.shape != (W.shape[1], W.shape[1]):
        raise InvalidInput("weights and stacked covariance do not conform")
    return symmetrize(W @ P @ W.T)


def fuse_with_covariance(w, estimates, P_stacked) -> FusedResult:
    return FusedResult(fuse(w, estimates), fused_covariance(w, P_stacked))
