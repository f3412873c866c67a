"""Dense real matrix primitives with explicit numerical contracts.

Matrices are plain ``numpy`` float arrays. Every entry point coerces its
arguments to 2-D float64 and refuses non-finite entries.
"""

import numpy as np
import scipy.linalg as sla

from .errors import InvalidInput, SingularMatrix

SYMMETRY_RTOL = 1e-10
CONDITION_LIMIT = 1e12


def as_matrix(M, name="matrix"):
    """Coerce ``M`` (scalar, vector or 2-D array) to a finite 2-D float array.

    Scalars become 1x1 and 1-D input becomes a column.
    """
    arr = np.asarray(M, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    elif arr.ndim != 2:
        raise InvalidInput(f"{name} must be at most 2-D, got shape {arr.shape}")
    if arr.size == 0:
        raise InvalidInput(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput(f"{name} has non-finite entries")
    return arr


def symmetrize(M):
    M = as_matrix(M)
    return 0.5 * (M + M.T)


def is_symmetric(M, rtol=SYMMETRY_RTOL):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        return False
    scale = np.max(np.abs(M))
    if scale == 0.0:
        return True
    return np.max(np.abs(M - M.T)) <= rtol * scale


def _require_symmetric(M, name):
    M = as_matrix(M, name)
    if M.shape[0] != M.shape[1]:
        raise InvalidInput(f"{name} must be square, got shape {M.shape}")
    if not is_symmetric(M):
        raise InvalidInput(f"{name} is not symmetric within {SYMMETRY_RTOL:g} relative")
    return M


def sym_eigvalsh(M, name="matrix"):
    """Ascending eigenvalues of a symmetric matrix (symmetric LAPACK driver)."""
    M = _require_symmetric(M, name)
    return sla.eigvalsh(symmetrize(M))


def spectral_norm(M):
    """2-norm of a symmetric matrix, i.e. its largest absolute eigenvalue."""
    w = sym_eigvalsh(M)
    return float(max(abs(w[0]), abs(w[-1])))


def sym_eig_extremes(M):
    """Return ``(lambda_min, lambda_max)`` of a symmetric matrix."""
    w = sym_eigvalsh(M)
    return float(w[0]), float(w[-1])


def condition_estimate(A):
    A = as_matrix(A)
    s = np.linalg.svd(A, compute_uv=False)
    if s[-1] == 0.0:
        return float("inf")
    return float(s[0] / s[-1])


def solve_linear(A, B):
    """Solve ``A X = B`` for square, well-conditioned ``A``.

    Raises:
        InvalidInput: ``A`` is not square or the shapes do not conform.
        SingularMatrix: the condition estimate of ``A`` is at or above 1e12.
    """
    A = as_matrix(A, "A")
    B_arr = np.asarray(B, dtype=float)
    vector_rhs = B_arr.ndim == 1
    B = as_matrix(B_arr, "B")
    if A.shape[0] != A.shape[1]:
        raise InvalidInput(f"A must be square, got shape {A.shape}")
    if B.shape[0] != A.shape[0]:
        raise InvalidInput(f"shape mismatch: A {A.shape}, B {B.shape}")
    cond = condition_estimate(A)
    if not cond < CONDITION_LIMIT:
        raise SingularMatrix("coefficient matrix is singular or ill-conditioned", cond)
    X = sla.solve(A, B, check_finite=False)
    return X.ravel() if vector_rhs else X


def numerical_rank(M, tol=1e-8):
    """Number of singular values above ``tol`` times the largest one."""
    if not tol > 0:
        raise InvalidInput("tol must be positive")
    M = as_matrix(M)
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))


def inverse_difference_identity_check(A, B):
    """Max-entry residual of ``inv(A) - inv(B) == inv(A) (B - A) inv(B)``."""
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    if A.shape != B.shape or A.shape[0] != A.shape[1]:
        raise InvalidInput(f"A and B must be square of equal size, got {A.shape}, {B.shape}")
    n = A.shape[0]
    eye = np.eye(n)
    A_inv = solve_linear(A, eye)
    B_inv = solve_linear(B, eye)
    lhs = A_inv - B_inv
    rhs = A_inv @ (B - A) @ B_inv
    return float(np.max(np.abs(lhs - rhs)))


def is_psd(M, tol=1e-10):
    """True if the symmetric matrix ``M`` has ``lambda_min >= -tol``."""
    lo, _ = sym_eig_extremes(M)
    return lo >= -tol


def logdet_spd(M, name="matrix"):
    """Log-determinant of a symmetric positive definite matrix via its spectrum."""
    w = sym_eigvalsh(M, name)
    if w[0] <= 0.0:
        raise InvalidInput(f"{name} is not positive definite (lambda_min={w[0]:.3e})")
    return float(np.sum(np.log(w)))
