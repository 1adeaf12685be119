"""Regularized Fredholm solvers for density-ratio estimation.

Given samples z_p ~ p (size n) and z_q ~ q (size m), the ratio q/p solves
the integral equation (K_p f)(x) = (K_q 1)(x), where K_p is the kernel
integral operator of a Gaussian delta-family kernel k_t under p.  Replacing
the operators by their empirical versions and penalizing an RKHS norm with
kernel k_H gives finite linear systems in a coefficient vector v; every
estimate here is a kernel expansion over the p-sample,

    f(x) = sum_i k_H(x_i, x) v_i            (scale "plain")
    f(x) = (1/n) sum_i k(x_i, x) v_i        (scale "over_n")

Gram conventions: K_pp = (1/n) k(z_p, z_p), K_pq = (1/m) k(z_p, z_q),
K_qp = (1/n) k(z_q, z_p), K_qq = (1/m) k(z_q, z_q), and K_H = k_H(z_p, z_p)
with no sample-size normalization.  Estimates are never clipped inside the
solvers; evaluate(..., clip_negative=True) applies max(f, 0) afterwards.
"""

from dataclasses import dataclass

import numpy as np

from .kernels import KernelSpec, as_sample_matrix, gaussian_kernel_matrix
from .linalg import NumericalError, eigh_descending, solve_linear

OBJECTIVE_SETTINGS = ("type1_l2p", "combined", "rkhs_loss", "type2", "type15")


@dataclass(frozen=True)
class TikhonovConfig:
    """Solver family selector: which empirical loss and penalty weight."""

    setting: str
    lam: float
    gamma: float | None = None

    def __post_init__(self):
        if self.setting not in OBJECTIVE_SETTINGS:
            raise ValueError(f"unknown setting {self.setting!r}, expected one of {OBJECTIVE_SETTINGS}")
        if not np.isfinite(self.lam) or self.lam <= 0:
            raise ValueError(f"lam must be finite and > 0, got {self.lam}")
        if self.setting == "combined":
            if self.gamma is None or not 0.0 <= self.gamma <= 1.0:
                raise ValueError(f"combined setting needs gamma in [0, 1], got {self.gamma}")


@dataclass(eq=False)
class RatioEstimate:
    """Kernel expansion over the p-sample representing an estimated ratio."""

    centers: np.ndarray
    v: np.ndarray
    kernel: KernelSpec
    scale: str  # "plain" or "over_n"

    def __post_init__(self):
        if self.scale not in ("plain", "over_n"):
            raise ValueError(f"scale must be 'plain' or 'over_n', got {self.scale!r}")
        if self.v.shape != (self.centers.shape[0],):
            raise ValueError(f"coefficient shape {self.v.shape} does not match {self.centers.shape[0]} centers")

    def evaluate(self, X, clip_negative=False):
        return evaluate(self, X, clip_negative=clip_negative)


@dataclass(eq=False)
class GramBundle:
    """Precomputed Gram matrices shared by objectives and gradients."""

    K_pp: np.ndarray
    K_H: np.ndarray
    K_pq: np.ndarray | None = None
    K_qp: np.ndarray | None = None
    K_qq: np.ndarray | None = None


def gram_bundle(z_p, z_q, k: KernelSpec, k_h: KernelSpec):
    """Build the Gram matrices for samples z_p, z_q (z_q may be None)."""
    z_p = as_sample_matrix(z_p, "z_p")
    n = z_p.shape[0]
    K_pp = gaussian_kernel_matrix(z_p, z_p, k) / n
    K_H = gaussian_kernel_matrix(z_p, z_p, k_h)
    if z_q is None:
        return GramBundle(K_pp=K_pp, K_H=K_H)
    z_q = as_sample_matrix(z_q, "z_q")
    m = z_q.shape[0]
    G_pq = gaussian_kernel_matrix(z_p, z_q, k)
    K_qq = gaussian_kernel_matrix(z_q, z_q, k) / m
    return GramBundle(K_pp=K_pp, K_H=K_H, K_pq=G_pq / m, K_qp=G_pq.T / n, K_qq=K_qq)


def evaluate(estimate: RatioEstimate, X, clip_negative=False):
    """Evaluate a ratio estimate at new points X (shape (m, d))."""
    G = gaussian_kernel_matrix(as_sample_matrix(X, "X"), estimate.centers, estimate.kernel)
    out = G @ estimate.v
    if estimate.scale == "over_n":
        out /= estimate.centers.shape[0]
    if clip_negative:
        out = np.maximum(out, 0.0)
    return out


def _check_lam(lam):
    if not np.isfinite(lam) or lam <= 0:
        raise ValueError(f"lam must be finite and > 0, got {lam}")


# === Tikhonov solvers ===


def solve_type15(z_p, z_q, k: KernelSpec, k_prime: KernelSpec, k_h: KernelSpec, lam):
    """Two-kernel variant: push q through a second delta kernel k'.

    Minimizes (1/n) ||K_pp K_H v - K'_pq 1||^2 + lam v' K_H v where
    (K'_pq)_ij = (1/m) k'(x_i, x'_j), giving

        v = (K_pp^2 K_H + n lam I)^{ -1} K_pp K'_pq 1.

    With k' = k this is the plain squared-loss estimator under p.
    """
    _check_lam(lam)
    z_p = as_sample_matrix(z_p, "z_p")
    z_q = as_sample_matrix(z_q, "z_q")
    n, m = z_p.shape[0], z_q.shape[0]
    K_pp = gaussian_kernel_matrix(z_p, z_p, k) / n
    K_H = gaussian_kernel_matrix(z_p, z_p, k_h)
    target = gaussian_kernel_matrix(z_p, z_q, k_prime).sum(axis=1) / m
    A = (K_pp @ K_pp) @ K_H + n * lam * np.eye(n)
    v = solve_linear(A, K_pp @ target, "type15 system")
    return RatioEstimate(centers=z_p, v=v, kernel=k_h, scale="plain")


def solve_type1(z_p, z_q, k: KernelSpec, k_h: KernelSpec, lam):
    """Squared loss under p: v = (K_pp^2 K_H + n lam I)^{-1} K_pp K_pq 1."""
    return solve_type15(z_p, z_q, k, k, k_h, lam)


def solve_type1_path(z_p, z_q, k: KernelSpec, lams):
    """Regularization path of solve_type1 when k_H equals k.

    With a single kernel, K_H = n K_pp, so one eigendecomposition
    K_pp = Q diag(w) Q' serves every lam:

        coef(lam) = Q diag(w / (w^3 + lam)) Q' K_pq 1,   scale "over_n".

    Returns one RatioEstimate per entry of lams; function values agree with
    the per-lam direct solves.
    """
    lams = np.asarray(lams, dtype=np.float64)
    if lams.ndim != 1 or lams.size == 0:
        raise ValueError("lams must be a non-empty 1-d sequence")
    for lam in lams:
        _check_lam(lam)
    z_p = as_sample_matrix(z_p, "z_p")
    z_q = as_sample_matrix(z_q, "z_q")
    n, m = z_p.shape[0], z_q.shape[0]
    K_pp = gaussian_kernel_matrix(z_p, z_p, k) / n
    target = gaussian_kernel_matrix(z_p, z_q, k).sum(axis=1) / m
    return _same_kernel_path(z_p, K_pp, target, k, lams)


def solve_type15_path(z_p, z_q, k: KernelSpec, k_prime: KernelSpec, lams):
    """Regularization path of solve_type15 when k_H equals k (see solve_type1_path)."""
    lams = np.asarray(lams, dtype=np.float64)
    if lams.ndim != 1 or lams.size == 0:
        raise ValueError("lams must be a non-empty 1-d sequence")
    for lam in lams:
        _check_lam(lam)
    z_p = as_sample_matrix(z_p, "z_p")
    z_q = as_sample_matrix(z_q, "z_q")
    n, m = z_p.shape[0], z_q.shape[0]
    K_pp = gaussian_kernel_matrix(z_p, z_p, k) / n
    target = gaussian_kernel_matrix(z_p, z_q, k_prime).sum(axis=1) / m
    return _same_kernel_path(z_p, K_pp, target, k, lams)


def solve_type2_path(z_p, q_values, k: KernelSpec, lams):
    """Regularization path of solve_type2 when k_H equals k (see solve_type1_path)."""
    lams = np.asarray(lams, dtype=np.float64)
    if lams.ndim != 1 or lams.size == 0:
        raise ValueError("lams must be a non-empty 1-d sequence")
    for lam in lams:
        _check_lam(lam)
    z_p = as_sample_matrix(z_p, "z_p")
    q = _check_q_values(q_values, z_p.shape[0])
    K_pp = gaussian_kernel_matrix(z_p, z_p, k) / z_p.shape[0]
    return _same_kernel_path(z_p, K_pp, q, k, lams)


def _same_kernel_path(z_p, K_pp, target, k, lams):
    w, Q = eigh_descending(K_pp)
    c = Q.T @ target
    out = []
    for lam in lams:
        denom = w ** 3 + lam
        if np.any(denom <= 0.0):
            raise NumericalError(f"non-positive shifted eigenvalue in path at lam={lam}")
        coef = Q @ (w / denom * c)
        out.append(RatioEstimate(centers=z_p, v=coef, kernel=k, scale="over_n"))
    return out


def solve_combined(z_p, z_q, k: KernelSpec, k_h: KernelSpec, gamma, lam):
    """Convex combination of the squared losses under p and under q.

    Stationarity of
        (gamma/n) ||K_pp K_H v - K_pq 1||^2
        + ((1-gamma)/m) ||K_qp K_H v - K_qq 1||^2 + lam v' K_H v
    gives
        [ (gamma/n) K_pp^2 + ((1-gamma)/m) K_qp' K_qp ] K_H v + lam v = rhs,
        rhs = (gamma/n) K_pp K_pq 1 + ((1-gamma)/m) K_qp' K_qq 1.

    Note the ridge term is lam, not n lam: the system is the exact gradient
    stationarity of the objective above.  gamma = 1 recovers solve_type1
    called with the same lam.
    """
    _check_lam(lam)
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    g = gram_bundle(z_p, z_q, k, k_h)
    n = g.K_pp.shape[0]
    m = g.K_qq.shape[0]
    M = (gamma / n) * (g.K_pp @ g.K_pp) + ((1.0 - gamma) / m) * (g.K_qp.T @ g.K_qp)
    A = M @ g.K_H + lam * np.eye(n)
    rhs = (gamma / n) * (g.K_pp @ g.K_pq.sum(axis=1)) + ((1.0 - gamma) / m) * (g.K_qp.T @ g.K_qq.sum(axis=1))
    v = solve_linear(A, rhs, "combined system")
    return RatioEstimate(centers=as_sample_matrix(z_p, "z_p"), v=v, kernel=k_h, scale="plain")


def solve_rkhs_loss(z_p, z_q, k: KernelSpec, lam):
    """RKHS-norm data fit; loss and penalty share one kernel.

    Minimizes ||K_zp f - K_zq 1||_H^2 + lam ||f||_H^2 over f in the span of
    k(x_i, .), which reduces to v = (K_pp K_H + n lam I)^{-1} K_pq 1.
    """
    _check_lam(lam)
    z_p = as_sample_matrix(z_p, "z_p")
    z_q = as_sample_matrix(z_q, "z_q")
    n, m = z_p.shape[0], z_q.shape[0]
    K_pp = gaussian_kernel_matrix(z_p, z_p, k) / n
    K_H = gaussian_kernel_matrix(z_p, z_p, k)
    target = gaussian_kernel_matrix(z_p, z_q, k).sum(axis=1) / m
    v = solve_linear(K_pp @ K_H + n * lam * np.eye(n), target, "rkhs_loss system")
    return RatioEstimate(centers=z_p, v=v, kernel=k, scale="plain")


def solve_type2(z_p, q_values, k: KernelSpec, k_h: KernelSpec, lam):
    """Known-q variant: fit f with K_p f = q pointwise on the p-sample.

    q_values holds q(x_i) at the sample points (any function values are
    accepted, q need not be a density):

        v = (K_pp^2 K_H + n lam I)^{-1} K_pp q.
    """
    _check_lam(lam)
    z_p = as_sample_matrix(z_p, "z_p")
    n = z_p.shape[0]
    q = _check_q_values(q_values, n)
    K_pp = gaussian_kernel_matrix(z_p, z_p, k) / n
    K_H = gaussian_kernel_matrix(z_p, z_p, k_h)
    A = (K_pp @ K_pp) @ K_H + n * lam * np.eye(n)
    v = solve_linear(A, K_pp @ q, "type2 system")
    return RatioEstimate(centers=z_p, v=v, kernel=k_h, scale="plain")


def _check_q_values(q_values, n):
    q = np.asarray(q_values, dtype=np.float64)
    if q.shape != (n,):
        raise ValueError(f"q_values must have shape ({n},), got {q.shape}")
    if not np.all(np.isfinite(q)):
        raise ValueError("q_values contains non-finite entries")
    return q


# === Spectral cutoff ===


def solve_spectral(z_p, target, k: KernelSpec, cutoff):
    """Spectral-cutoff regularization of the empirical Fredholm system.

    Keeps the top ``cutoff`` eigenpairs of K_pp = Q diag(w) Q' and inverts
    K_pp^2 on their span:

        coef = Q_k diag(w_k^-2) Q_k' target,    scale "over_n",

    so K_pp^2 coef is the orthogonal projection of target onto span(Q_k).
    Raises NumericalError if a retained eigenvalue falls below
    1e-12 * w_max (the inversion would be meaningless there).
    """
    z_p = as_sample_matrix(z_p, "z_p")
    n = z_p.shape[0]
    target = _check_q_values(target, n)
    if not 1 <= cutoff <= n:
        raise ValueError(f"cutoff must lie in [1, {n}], got {cutoff}")
    K_pp = gaussian_kernel_matrix(z_p, z_p, k) / n
    w, Q = eigh_descending(K_pp)
    w_max = w[0]
    if w_max <= 0.0:
        raise NumericalError("kernel Gram matrix has no positive eigenvalue")
    bad = np.nonzero(w[:cutoff] < 1e-12 * w_max)[0]
    if bad.size:
        raise NumericalError(
            f"retained eigenvalue {bad[0]} is below 1e-12 * max eigenvalue; reduce cutoff below {bad[0] + 1}"
        )
    lead = Q[:, :cutoff]
    coef = lead @ ((lead.T @ target) / w[:cutoff] ** 2)
    return RatioEstimate(centers=z_p, v=coef, kernel=k, scale="over_n")


# === Empirical objectives and gradients ===


def _objective_pieces(setting, v, grams: GramBundle, gamma, target):
    K_H = grams.K_H
    h = K_H @ v
    if setting in ("type1_l2p", "type2", "type15"):
        if target is None:
            if setting != "type1_l2p":
                raise ValueError(f"setting {setting!r} needs an explicit target vector")
            target = grams.K_pq.sum(axis=1)
        r = grams.K_pp @ h - target
        return np.mean(r ** 2), h, (r,)
    if setting == "combined":
        if gamma is None or not 0.0 <= gamma <= 1.0:
            raise ValueError(f"combined setting needs gamma in [0, 1], got {gamma}")
        r_p = grams.K_pp @ h - grams.K_pq.sum(axis=1)
        r_q = grams.K_qp @ h - grams.K_qq.sum(axis=1)
        return gamma * np.mean(r_p ** 2) + (1.0 - gamma) * np.mean(r_q ** 2), h, (r_p, r_q)
    if setting == "rkhs_loss":
        n = grams.K_pp.shape[0]
        m = grams.K_qq.shape[0]
        b = grams.K_pq.sum(axis=1)
        loss = h @ (grams.K_pp @ h) / n - 2.0 * (h @ b) / n + grams.K_qq.sum() / m
        return loss, h, (b,)
    raise ValueError(f"unknown setting {setting!r}, expected one of {OBJECTIVE_SETTINGS}")


def empirical_objective(setting, v, grams: GramBundle, lam, gamma=None, target=None):
    """Value of the regularized empirical objective a solver minimizes.

    Settings: "type1_l2p" (loss (1/n)||K_pp K_H v - K_pq 1||^2), "type2" /
    "type15" (same loss with an explicit target vector), "combined"
    (gamma-weighted p and q losses), "rkhs_loss" (RKHS-norm fit computed via
    Gram expansions, nonnegative by construction).  All settings add
    lam * v' K_H v.
    """
    loss, h, _ = _objective_pieces(setting, np.asarray(v, dtype=np.float64), grams, gamma, target)
    return float(loss + lam * (v @ h))


def objective_gradient(setting, v, grams: GramBundle, lam, gamma=None, target=None):
    """Gradient of empirical_objective in v; zero at the solver solutions."""
    v = np.asarray(v, dtype=np.float64)
    loss, h, res = _objective_pieces(setting, v, grams, gamma, target)
    K_H = grams.K_H
    n = grams.K_pp.shape[0]
    if setting in ("type1_l2p", "type2", "type15"):
        (r,) = res
        return (2.0 / n) * (K_H @ (grams.K_pp @ r)) + 2.0 * lam * h
    if setting == "combined":
        r_p, r_q = res
        m = grams.K_qq.shape[0]
        pull = (gamma / n) * (grams.K_pp @ r_p) + ((1.0 - gamma) / m) * (grams.K_qp.T @ r_q)
        return 2.0 * K_H @ pull + 2.0 * lam * h
    (b,) = res
    return (2.0 / n) * (K_H @ (grams.K_pp @ h - b)) + 2.0 * lam * h
