"""Small shared linear-algebra helpers with deterministic conventions."""

import numpy as np


class NumericalError(RuntimeError):
    """Raised when a linear system or factorization fails numerically."""


def eigh_descending(S):
    """Eigendecomposition of a symmetric matrix with fixed conventions.

    Returns (w, Q) with eigenvalues in descending order and each eigenvector
    scaled so that its first nonzero component (first component exceeding
    1e-12 of the vector's max magnitude) is positive.  Only symmetric input
    is supported; symmetry is the caller's responsibility.
    """
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {S.shape}")
    w, Q = np.linalg.eigh(S)
    w = w[::-1].copy()
    Q = Q[:, ::-1].copy()
    absQ = np.abs(Q)
    lead = (absQ > absQ.max(axis=0, keepdims=True) * 1e-12).argmax(axis=0)
    signs = np.sign(Q[lead, np.arange(Q.shape[1])])
    signs[signs == 0.0] = 1.0
    Q *= signs
    return w, Q


def solve_linear(A, b, context=""):
    """np.linalg.solve wrapped to raise NumericalError with context."""
    try:
        x = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"linear solve failed{': ' + context if context else ''} ({exc})") from exc
    if not np.all(np.isfinite(x)):
        raise NumericalError(f"linear solve produced non-finite values{': ' + context if context else ''}")
    return x
