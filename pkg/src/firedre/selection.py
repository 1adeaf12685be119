"""Unsupervised model selection for ratio estimates.

A fitted ratio f is scored without labels by how well importance weighting
transports empirical means: for validation functions u_1..u_F,

    J(f) = (1/F) sum_l [ (1/n) sum_i u_l(x_i) f(x_i) - (1/m) sum_j u_l(x'_j) ]^2

which vanishes in expectation at the true ratio.  kfold_cv minimizes the
held-out J over a (t, lambda) grid.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .kernels import KernelSpec, as_sample_matrix, gaussian_kernel_matrix
from .linalg import NumericalError
from .solvers import (
    solve_combined,
    solve_rkhs_loss,
    solve_type15_path,
    solve_type1_path,
    solve_type2_path,
)

VALIDATION_FAMILIES = ("linear", "halfspace", "kernel_combo", "kernel_indicator", "coordinate")

# default ridge grid: 1e-5 down to 1e-10 by decades (literals, so the
# values match what a config file spells out)
LAMBDA_GRID = np.array([1e-5, 1e-6, 1e-7, 1e-8, 1e-9, 1e-10])


@dataclass(eq=False)
class ValidationSet:
    """A frozen draw of F validation functions, evaluable on any sample."""

    family: str
    coef: np.ndarray
    anchors: np.ndarray | None = None
    kernel: KernelSpec | None = None

    @property
    def count(self):
        return self.coef.shape[0]

    def evaluate(self, X):
        """Matrix U with U[l, i] = u_l(X[i]), shape (F, n)."""
        X = as_sample_matrix(X, "X")
        if self.family == "linear":
            return self.coef @ X.T
        if self.family == "halfspace":
            return (self.coef @ X.T > 0).astype(np.float64)
        if self.family == "coordinate":
            return X.T[: self.count].copy()
        G = gaussian_kernel_matrix(self.anchors, X, self.kernel)
        vals = self.coef @ G
        if self.family == "kernel_indicator":
            return (vals > 0).astype(np.float64)
        return vals


def make_validation_set(family, d, count, seed, anchors=None, kernel=None):
    """Draw a deterministic validation set (same inputs give same functions).

    linear / halfspace use random directions beta ~ N(0, I_d); kernel_combo
    / kernel_indicator use random combinations of kernel bumps at the given
    anchors; coordinate takes the first min(count, d) coordinate maps.
    """
    if family not in VALIDATION_FAMILIES:
        raise ValueError(f"unknown validation family {family!r}, expected one of {VALIDATION_FAMILIES}")
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    rng = np.random.default_rng(seed)
    if family in ("linear", "halfspace"):
        return ValidationSet(family=family, coef=rng.standard_normal((count, d)))
    if family == "coordinate":
        count = min(count, d)
        return ValidationSet(family=family, coef=np.eye(d)[:count])
    if anchors is None or kernel is None:
        raise ValueError(f"family {family!r} needs anchors and a kernel spec")
    anchors = as_sample_matrix(anchors, "anchors")
    if anchors.shape[1] != d:
        raise ValueError(f"anchors have dim {anchors.shape[1]}, expected {d}")
    coef = rng.standard_normal((count, anchors.shape[0]))
    return ValidationSet(family=family, coef=coef, anchors=anchors, kernel=kernel)


def j_score(f_on_p, U_on_p, U_on_q):
    """Mean squared importance-transport defect of f over validation functions."""
    f_on_p = np.asarray(f_on_p, dtype=np.float64)
    U_on_p = np.asarray(U_on_p, dtype=np.float64)
    U_on_q = np.asarray(U_on_q, dtype=np.float64)
    if U_on_p.ndim != 2 or U_on_q.ndim != 2 or U_on_p.shape[0] != U_on_q.shape[0]:
        raise ValueError("U_on_p and U_on_q must be (F, n) and (F, m)")
    if f_on_p.shape != (U_on_p.shape[1],):
        raise ValueError(f"f_on_p shape {f_on_p.shape} does not match U_on_p {U_on_p.shape}")
    lhs = (U_on_p * f_on_p).sum(axis=1) / U_on_p.shape[1]
    rhs = U_on_q.sum(axis=1) / U_on_q.shape[1]
    return float(np.mean((lhs - rhs) ** 2))


@dataclass(eq=False)
class CVResult:
    """Grid of held-out J scores and the selected cell."""

    t_grid: np.ndarray
    lam_grid: np.ndarray
    scores: np.ndarray  # (T, L) mean over folds
    fold_scores: np.ndarray  # (T, L, folds)
    selected_t: float
    selected_lam: float
    selected_index: tuple
    folds: int
    seed: int


def fit_factory(setting, gamma=None, t_prime_ratio=2.0, q_fn=None, normalized=True):
    """Build a fit(z_p_train, z_q, t, lams) callback for kfold_cv.

    The callback returns one estimate per lam.  type1, type15 and type2 use
    the shared-eigendecomposition path (loss kernel doubles as RKHS kernel);
    combined and rkhs_loss solve each lam directly.  type2 needs q_fn, a
    callable giving q values at arbitrary points.
    """
    if setting == "type2" and q_fn is None:
        raise ValueError("type2 fitting needs q_fn")

    def fit(z_p_train, z_q, t, lams):
        k = KernelSpec(t=float(t), normalized=normalized)
        if setting == "type1":
            return solve_type1_path(z_p_train, z_q, k, lams)
        if setting == "type2":
            return solve_type2_path(z_p_train, q_fn(z_p_train), k, lams)
        if setting == "rkhs_loss":
            return [solve_rkhs_loss(z_p_train, z_q, k, lam) for lam in lams]
        if setting == "combined":
            return [solve_combined(z_p_train, z_q, k, k, gamma, lam) for lam in lams]
        if setting == "type15":
            k_prime = KernelSpec(t=float(t) * t_prime_ratio, normalized=normalized)
            return solve_type15_path(z_p_train, z_q, k, k_prime, lams)
        raise ValueError(f"unknown solver setting {setting!r}")

    return fit


def _cell_scores(fit, z_p, z_q, t, lams, train_idx, val_idx, U_val, U_q_means):
    """Held-out J for one (fold, t) against every lam; failures give +inf."""
    L = len(lams)
    out = np.full(L, np.inf)
    try:
        estimates = fit(z_p[train_idx], z_q, t, lams)
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError):
        return out
    val = z_p[val_idx]
    for j, est in enumerate(estimates):
        try:
            f_val = est.evaluate(val)
        except (NumericalError, np.linalg.LinAlgError, FloatingPointError):
            continue
        if not np.all(np.isfinite(f_val)):
            continue
        lhs = (U_val * f_val).sum(axis=1) / val.shape[0]
        score = float(np.mean((lhs - U_q_means) ** 2))
        if np.isfinite(score):
            out[j] = score
    return out


def kfold_cv(z_p, z_q, fit, t_grid, lam_grid, validation, folds=5, seed=0, threads=1):
    """Select (t, lambda) by k-fold held-out J score.

    For each fold the estimator is fit on the remaining p-points (with the
    full q-sample) and scored on the held-out p-points against all of z_q.
    Cell scores are fold means; a failed fit contributes +inf for that fold.
    Ties break toward the smallest t, then the largest lambda.  Deterministic
    given the seed; the thread count only parallelizes independent cells.
    """
    z_p = as_sample_matrix(z_p, "z_p")
    z_q = as_sample_matrix(z_q, "z_q")
    t_grid = np.asarray(t_grid, dtype=np.float64)
    lam_grid = np.asarray(lam_grid, dtype=np.float64)
    if t_grid.ndim != 1 or t_grid.size == 0 or lam_grid.ndim != 1 or lam_grid.size == 0:
        raise ValueError("t_grid and lam_grid must be non-empty 1-d arrays")
    n = z_p.shape[0]
    if not 2 <= folds <= n:
        raise ValueError(f"folds must lie in [2, {n}], got {folds}")

    perm = np.random.default_rng(seed).permutation(n)
    fold_parts = np.array_split(perm, folds)
    all_idx = np.arange(n)
    U_q = validation.evaluate(z_q)
    U_q_means = U_q.sum(axis=1) / z_q.shape[0]

    T, L = t_grid.size, lam_grid.size
    fold_scores = np.full((T, L, folds), np.inf)
    tasks = []
    for f, val_idx in enumerate(fold_parts):
        train_idx = np.setdiff1d(all_idx, val_idx, assume_unique=False)
        U_val = validation.evaluate(z_p[val_idx])
        for it, t in enumerate(t_grid):
            tasks.append((f, it, t, train_idx, val_idx, U_val))

    def run(task):
        f, it, t, train_idx, val_idx, U_val = task
        return f, it, _cell_scores(fit, z_p, z_q, t, lam_grid, train_idx, val_idx, U_val, U_q_means)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, tasks))
    else:
        results = [run(task) for task in tasks]
    for f, it, row in results:
        fold_scores[it, :, f] = row

    scores = fold_scores.mean(axis=2)
    best = np.inf
    best_cell = None
    for it in np.argsort(t_grid, kind="stable"):
        for jl in np.argsort(-lam_grid, kind="stable"):
            s = scores[it, jl]
            if s < best:
                best = s
                best_cell = (int(it), int(jl))
    if best_cell is None:
        raise NumericalError("cross-validation failed in every grid cell")
    return CVResult(
        t_grid=t_grid,
        lam_grid=lam_grid,
        scores=scores,
        fold_scores=fold_scores,
        selected_t=float(t_grid[best_cell[0]]),
        selected_lam=float(lam_grid[best_cell[1]]),
        selected_index=best_cell,
        folds=folds,
        seed=seed,
    )
