"""Gaussian kernel matrices, bandwidth grids, and kernel density estimates.

Throughout, the Gaussian kernel is parametrized by a variance-like bandwidth
t > 0:

    k_t(x, y) = c(t) * exp(-||x - y||^2 / (2 t)),   c(t) = (2 pi t)^(-d/2)

so t multiplies the variance, not the standard deviation.  With the
normalizing constant c(t) the kernel integrates to one over R^d and the
family is a delta family as t -> 0; with ``normalized=False`` the constant
is dropped and k_t(x, x) = 1.
"""

from dataclasses import dataclass

import numpy as np

# cap on the element count of a single broadcast block in the pairwise
# distance computation (block_rows * m * d floats)
_BLOCK_ELEMS = 2 ** 22


@dataclass(frozen=True)
class KernelSpec:
    """Gaussian kernel with bandwidth ``t`` (variance scale).

    ``normalized`` keeps the (2 pi t)^(-d/2) prefactor so that the kernel is
    a probability density in its second argument.
    """

    t: float
    normalized: bool = True
    family: str = "gaussian"

    def __post_init__(self):
        if self.family != "gaussian":
            raise ValueError(f"unsupported kernel family: {self.family!r}")
        if not np.isfinite(self.t) or self.t <= 0:
            raise ValueError(f"kernel bandwidth t must be finite and > 0, got {self.t}")


def as_sample_matrix(X, name="X"):
    """Validate and return an (n, d) float array of sample points."""
    A = np.asarray(X, dtype=np.float64)
    if A.ndim != 2:
        raise ValueError(f"{name} must be 2-d (n, d), got shape {A.shape}")
    n, d = A.shape
    if n < 1 or d < 1:
        raise ValueError(f"{name} must have n >= 1 rows and d >= 1 columns, got {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} contains non-finite entries")
    return A


def _sq_dists(A, B):
    # Row-blocked broadcast form: entry (i, j) is computed from rows i, j
    # alone with a fixed reduction order over coordinates, so the result is
    # exactly symmetric under swapping A and B (up to transpose) and does
    # not depend on the block size.
    n, d = A.shape
    m = B.shape[0]
    out = np.empty((n, m))
    block = max(1, _BLOCK_ELEMS // max(1, m * d))
    for start in range(0, n, block):
        stop = min(start + block, n)
        diff = A[start:stop, None, :] - B[None, :, :]
        out[start:stop] = np.einsum("ijk,ijk->ij", diff, diff)
    return out


def gaussian_kernel_matrix(A, B, spec: KernelSpec):
    """Kernel matrix G with G[i, j] = k_t(A[i], B[j]).

    A is (n, d), B is (m, d); returns (n, m).  Entries lie in
    (0, c(t)] and the matrix is symmetric positive semidefinite when A is B.
    """
    A = as_sample_matrix(A, "A")
    B = as_sample_matrix(B, "B")
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: A has d={A.shape[1]}, B has d={B.shape[1]}")
    G = np.exp(_sq_dists(A, B) / (-2.0 * spec.t))
    if spec.normalized:
        d = A.shape[1]
        G *= (2.0 * np.pi * spec.t) ** (-0.5 * d)
    return G


def bandwidth_grid(points, neighbors=10, size=10):
    """Data-driven bandwidth grid (t0, t0*2, ..., t0*2^(size-1)).

    t0 is the mean over points of the mean distance to the ``neighbors``
    nearest other points (self excluded).  Requires at least neighbors + 1
    points and at least two distinct ones.
    """
    X = as_sample_matrix(points, "points")
    n = X.shape[0]
    if n < neighbors + 1:
        raise ValueError(f"need at least {neighbors + 1} points for {neighbors}-NN bandwidth, got {n}")
    D = np.sqrt(np.maximum(_sq_dists(X, X), 0.0))
    np.fill_diagonal(D, np.inf)
    D.sort(axis=1)
    t0 = float(D[:, :neighbors].mean())
    if t0 <= 0.0:
        raise ValueError("degenerate sample: all points identical, bandwidth would be 0")
    return t0, t0 * np.power(2.0, np.arange(size, dtype=np.float64))


def kde(points, eval_points, spec: KernelSpec):
    """Kernel density estimate of the sample ``points`` at ``eval_points``.

    Returns the vector (1/n) sum_i k_t(x_i, e_j).  The spec must be
    normalized, otherwise the estimate is not a density.
    """
    if not spec.normalized:
        raise ValueError("kde requires a normalized kernel spec")
    X = as_sample_matrix(points, "points")
    E = as_sample_matrix(eval_points, "eval_points")
    G = gaussian_kernel_matrix(E, X, spec)
    return G.mean(axis=1)
