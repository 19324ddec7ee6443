"""Dense real-symmetric matrix arithmetic and spectral calculus.

Symmetric matrices are plain ``numpy`` arrays that have passed through
:func:`as_sym`, which checks finiteness, squareness and symmetry, then
symmetrizes to remove rounding-level skew.  Every function here is pure.
"""

from typing import Callable, NamedTuple

import numpy as np

from .errors import DimensionMismatch, DomainError, InvalidMatrix, NotPSD

SKEW_TOL = 1e-12
ORTHO_TOL = 1e-10
RECON_TOL = 1e-9
PSD_TOL = 1e-10
LOG_FLOOR = 1e-12


class EigPair(NamedTuple):
    """Ascending eigenvalues and the matching orthonormal eigenvectors (columns)."""

    eigenvalues: np.ndarray
    vectors: np.ndarray


def as_sym(A) -> np.ndarray:
    """Validate ``A`` and return ``(A + A.T) / 2`` as a read-only float array.

    Scalars and 1x1 inputs are accepted.  Skew above ``SKEW_TOL`` (relative to
    the largest entry, floored at 1) is rejected rather than silently repaired.
    """
    M = np.array(A, dtype=float)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] == 0:
        raise InvalidMatrix(f"expected a non-empty square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InvalidMatrix("matrix has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(M))))
    if np.max(np.abs(M - M.T)) > SKEW_TOL * scale:
        raise InvalidMatrix("matrix is not symmetric")
    S = 0.5 * (M + M.T)
    S.setflags(write=False)
    return S


def eig_sym(A) -> EigPair:
    """Symmetric eigendecomposition with ascending eigenvalues."""
    S = as_sym(A)
    w, T = np.linalg.eigh(S)
    return EigPair(w, T)


def eigvals_sym(A) -> np.ndarray:
    return np.linalg.eigvalsh(as_sym(A))


def apply_spectral_fn(A, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Return ``T f(Lambda) T^T`` for ``A = T Lambda T^T``.

    ``f`` is applied elementwise to the eigenvalue vector and must be finite
    there; otherwise :class:`DomainError` is raised.
    """
    w, T = eig_sym(A)
    with np.errstate(all="ignore"):
        fw = np.asarray(f(w), dtype=float)
    if fw.shape != w.shape:
        fw = np.broadcast_to(fw, w.shape)
    if not np.all(np.isfinite(fw)):
        raise DomainError("spectral function is not finite on the spectrum")
    out = (T * fw) @ T.T
    return as_sym(0.5 * (out + out.T))


def op_norm(A) -> float:
    """Operator norm; for a symmetric matrix the largest absolute eigenvalue."""
    w = eigvals_sym(A)
    return float(max(abs(w[0]), abs(w[-1])))


def lambda_max(A) -> float:
    return float(eigvals_sym(A)[-1])


def lambda_min(A) -> float:
    return float(eigvals_sym(A)[0])


def psd_order(A, B, tol: float = 0.0) -> bool:
    """True iff ``A - B`` is nonnegative definite up to ``tol``."""
    A = as_sym(A)
    B = as_sym(B)
    if A.shape != B.shape:
        raise DimensionMismatch(f"{A.shape} vs {B.shape}")
    return lambda_min(A - B) >= -tol


def truncate_unit(w: np.ndarray) -> float:
    """Sum of ``min(w_i, 1)`` over an eigenvalue vector (vectorized helper)."""
    return float(np.sum(np.minimum(w, 1.0)))


def trace_unit_truncation(A) -> float:
    """``sum_i min(lambda_i(A), 1)`` for nonnegative definite ``A``.

    This is ``tr p(-A)`` with ``p(t) = min(-t, 1)``: the eigenvalues are cut
    at the unit level, so the result never exceeds the dimension.
    """
    w = eigvals_sym(A)
    if w[0] < -PSD_TOL:
        raise NotPSD(f"smallest eigenvalue {w[0]:.3e} is negative")
    return truncate_unit(np.clip(w, 0.0, None))


def paulsen_dilate(Y) -> np.ndarray:
    """Self-adjoint dilation ``[[0, Y^T], [Y, 0]]`` of a length-d vector."""
    y = np.asarray(Y, dtype=float).ravel()
    if not np.all(np.isfinite(y)):
        raise InvalidMatrix("vector has non-finite entries")
    d = y.size
    L = np.zeros((d + 1, d + 1))
    L[0, 1:] = y
    L[1:, 0] = y
    return as_sym(L)


def project_leading(A, j: int) -> np.ndarray:
    """Compress ``A`` onto the span of the first ``j`` coordinates (``P A P``)."""
    S = as_sym(A)
    d = S.shape[0]
    if not 1 <= j <= d:
        raise DomainError(f"j={j} outside 1..{d}")
    out = np.zeros_like(S)
    out[:j, :j] = S[:j, :j]
    return as_sym(out)


def matrix_exp(A) -> np.ndarray:
    return apply_spectral_fn(A, np.exp)


def matrix_log(A) -> np.ndarray:
    w = eigvals_sym(A)
    if w[0] <= LOG_FLOOR:
        raise NotPSD(f"matrix_log needs a positive definite input (lambda_min={w[0]:.3e})")
    return apply_spectral_fn(A, np.log)


def sym_batch_norms(S: np.ndarray) -> np.ndarray:
    """Operator norms of a stack of symmetric matrices with shape ``(..., d, d)``."""
    w = np.linalg.eigvalsh(S)
    return np.maximum(np.abs(w[..., 0]), np.abs(w[..., -1]))
