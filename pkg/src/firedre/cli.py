"""Command line front end.

Subcommands: estimate | cv | simulate | downstream | resample.  Each takes
--config <json> plus --seed / --out / --threads overrides, writes results
and a fully resolved config echo into the output directory, and exits 0 on
success, 2 on config validation failure, 3 on numerical failure (with a
one-line JSON reason on stderr).  Re-running any command from its echoed
config reproduces the outputs byte for byte, apart from the timestamp.
"""

import argparse
import dataclasses
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .baselines import lsif_unconstrained, tikde, tikde_epsilon_grid, true_ratio
from .config import (
    BenchConfig,
    ConfigError,
    DownstreamConfig,
    EstimateConfig,
    ResampleConfig,
    load_config,
)
from .data import first_pc, label_resample, load_csv, pca_resample, simulate
from .downstream import eval_metrics, weighted_linear_svm, weighted_ols
from .kernels import KernelSpec, bandwidth_grid, gaussian_kernel_matrix
from .linalg import NumericalError
from .selection import fit_factory, kfold_cv, make_validation_set
from .solvers import (
    solve_combined,
    solve_rkhs_loss,
    solve_type1,
    solve_type15,
    solve_type2,
)

SCHEMA_VERSION = 1


def derive_seed(seed, stage):
    """Stable 64-bit sub-seed for a named stochastic stage."""
    digest = hashlib.sha256(f"{seed}/{stage}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


# === deterministic output files ===


def _write_text(path, text):
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if np.isfinite(x) else None
    return x


def write_json(path, payload):
    text = json.dumps(_jsonable(payload), indent=2, sort_keys=True, allow_nan=False) + "\n"
    _write_text(path, text)


def _cell_str(c):
    if isinstance(c, (bool, np.bool_)):
        return str(int(c))
    if isinstance(c, (int, np.integer)):
        return str(int(c))
    if isinstance(c, (float, np.floating)):
        return repr(float(c))
    return str(c)


def write_csv(path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_cell_str(c) for c in row))
    _write_text(path, "\n".join(lines) + "\n")


def _timestamp():
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


# === shared pipeline pieces ===


def _load_source(src, stage, seed, dim=None):
    if src.csv is not None:
        try:
            X, labels = load_csv(src.csv, src.label_column)
        except OSError as exc:
            raise ConfigError(f"cannot read {src.csv}: {exc}") from None
    else:
        X, labels = simulate(src.density, src.n, derive_seed(seed, stage)), None
    if dim is not None and X.shape[1] != dim:
        raise ConfigError(f"{stage}: dimension {X.shape[1]} does not match expected {dim}")
    return X, labels


def _cv_subset(X, fraction, max_points, seed, stage):
    n = X.shape[0]
    take = max(1, int(np.floor(fraction * n)))
    if max_points is not None:
        take = min(take, max_points)
    idx = np.random.default_rng(derive_seed(seed, stage)).permutation(n)[:take]
    return X[idx]


def _t_grid(cfg_grids, z_p):
    if cfg_grids.t is not None:
        return np.asarray(cfg_grids.t, dtype=np.float64)
    return bandwidth_grid(z_p, neighbors=cfg_grids.neighbors, size=cfg_grids.size)[1]


def _validation_set(cfg, z_p_cv, t_grid, seed):
    d = z_p_cv.shape[1]
    v = cfg.validation
    anchors = kernel = None
    if v.family in ("kernel_combo", "kernel_indicator"):
        anchors = z_p_cv[: min(v.anchor_count, z_p_cv.shape[0])]
        kernel = KernelSpec(t=float(np.median(t_grid)))
    return make_validation_set(v.family, d, v.count, derive_seed(seed, "validation"), anchors=anchors, kernel=kernel)


def _select_cell(cfg, z_p, z_q, q_fn, threads):
    """Run k-fold CV on capped subsets; returns (t_grid, CVResult)."""
    t_grid = _t_grid(cfg.grids, z_p)
    lam_grid = np.asarray(cfg.grids.lam, dtype=np.float64)
    z_p_cv = _cv_subset(z_p, cfg.cv.fraction, cfg.cv.max_points, cfg.seed, "cv-subset-p")
    z_q_cv = _cv_subset(z_q, cfg.cv.fraction, cfg.cv.max_points, cfg.seed, "cv-subset-q")
    validation = _validation_set(cfg, z_p_cv, t_grid, cfg.seed)
    setting = cfg.solver.setting
    fit = fit_factory(
        setting,
        gamma=cfg.solver.gamma,
        t_prime_ratio=cfg.solver.t_prime_ratio,
        q_fn=q_fn,
        normalized=cfg.solver.normalized,
    )
    cvres = kfold_cv(
        z_p_cv,
        z_q_cv,
        fit,
        t_grid,
        lam_grid,
        validation,
        folds=cfg.cv.folds,
        seed=derive_seed(cfg.seed, "cv-folds"),
        threads=threads,
    )
    return t_grid, cvres


def _final_fit(cfg, z_p, z_q, q_fn, t, lam):
    k = KernelSpec(t=float(t), normalized=cfg.solver.normalized)
    s = cfg.solver.setting
    if s == "type1":
        return solve_type1(z_p, z_q, k, k, lam)
    if s == "combined":
        return solve_combined(z_p, z_q, k, k, cfg.solver.gamma, lam)
    if s == "rkhs_loss":
        return solve_rkhs_loss(z_p, z_q, k, lam)
    if s == "type2":
        return solve_type2(z_p, q_fn(z_p), k, k, lam)
    if s == "type15":
        k_prime = KernelSpec(t=float(t) * cfg.solver.t_prime_ratio, normalized=cfg.solver.normalized)
        return solve_type15(z_p, z_q, k, k_prime, k, lam)
    raise ConfigError(f"unknown solver setting {s!r}")


def _estimation_inputs(cfg):
    z_p, _ = _load_source(cfg.p, "p", cfg.seed)
    if cfg.solver.setting == "type2":
        q_fn = cfg.q_function.pdf
        if cfg.q_function.dim != z_p.shape[1]:
            raise ConfigError(f"q_function has dim {cfg.q_function.dim}, p-sample has dim {z_p.shape[1]}")
        # score CV cells against a sample drawn from the known q
        z_q = simulate(cfg.q_function, cfg.cv.type2_q_points, derive_seed(cfg.seed, "type2-q"))
        return z_p, z_q, q_fn
    z_q, _ = _load_source(cfg.q, "q", cfg.seed, dim=z_p.shape[1])
    return z_p, z_q, None


def _cv_payload(cvres):
    return {
        "t": cvres.t_grid,
        "lambda": cvres.lam_grid,
        "scores": cvres.scores,
        "fold_scores": cvres.fold_scores,
        "folds": cvres.folds,
    }


# === runners ===


def run_estimate(cfg: EstimateConfig, out_dir, threads=1, final=True, command="estimate"):
    z_p, z_q, q_fn = _estimation_inputs(cfg)
    t_grid, cvres = _select_cell(cfg, z_p, z_q, q_fn, threads)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "timestamp": _timestamp(),
        "n": int(z_p.shape[0]),
        "m": int(z_q.shape[0]),
        "selected_t": cvres.selected_t,
        "selected_lambda": cvres.selected_lam,
        "cv_surface": _cv_payload(cvres),
    }
    os.makedirs(out_dir, exist_ok=True)
    if final:
        est = _final_fit(cfg, z_p, z_q, q_fn, cvres.selected_t, cvres.selected_lam)
        weights = est.evaluate(z_p, clip_negative=cfg.clip_negative)
        centers_path = os.path.join(out_dir, "centers.csv")
        weights_path = os.path.join(out_dir, "weights.csv")
        write_csv(centers_path, [f"x{j}" for j in range(z_p.shape[1])], z_p)
        write_csv(weights_path, ["weight"], [[w] for w in weights])
        payload.update(
            {
                "coefficients": est.v,
                "scale": est.scale,
                "kernel": {"t": est.kernel.t, "normalized": est.kernel.normalized},
                "centers_path": "centers.csv",
                "weights_path": "weights.csv",
                "weights_mean": float(np.mean(weights)),
            }
        )
    write_json(os.path.join(out_dir, "results.json"), payload)
    write_json(os.path.join(out_dir, "config_echo.json"), cfg.to_dict())
    return payload


def run_cv(cfg: EstimateConfig, out_dir, threads=1):
    return run_estimate(cfg, out_dir, threads=threads, final=False, command="cv")


def _bench_fire(z_p, z_q, eval_X, r_eval, t_grid, lam_grid, fit):
    """Oracle-select (t, lam) for a fitted ratio family; error on clamped values.

    A ratio is nonnegative, so every method's predictions are clamped at zero
    before scoring (TIKDE is nonnegative by construction, this only affects
    the linear-system estimators).
    """
    best = (np.inf, np.nan, np.nan)
    for t in t_grid:
        try:
            ests = fit(z_p, z_q, float(t), lam_grid)
        except (NumericalError, np.linalg.LinAlgError):
            continue
        K_eval = gaussian_kernel_matrix(eval_X, z_p, ests[0].kernel)
        V = np.stack([e.v if e.scale == "plain" else e.v / z_p.shape[0] for e in ests], axis=1)
        preds = np.maximum(K_eval @ V, 0.0)
        errs = np.mean((preds - r_eval[:, None]) ** 2, axis=0)
        j = int(np.argmin(errs))
        if errs[j] < best[0]:
            best = (float(errs[j]), float(t), float(lam_grid[j]))
    return best


def _bench_tikde(z_p, z_q, eval_X, r_eval, t_grid):
    best = (np.inf, np.nan, np.nan)
    for t in t_grid:
        k = KernelSpec(t=float(t))
        p_hat = gaussian_kernel_matrix(eval_X, z_p, k).mean(axis=1)
        q_hat = gaussian_kernel_matrix(eval_X, z_q, k).mean(axis=1)
        for eps in tikde_epsilon_grid(z_p, t):
            err = float(np.mean((q_hat / np.maximum(p_hat, eps) - r_eval) ** 2))
            if err < best[0]:
                best = (err, float(t), float(eps))
    return best


def _bench_lsif(z_p, z_q, eval_X, r_eval, t_grid, lam_grid):
    best = (np.inf, np.nan, np.nan)
    for t in t_grid:
        k = KernelSpec(t=float(t))
        G_eval = gaussian_kernel_matrix(eval_X, z_q, k)
        for lam in lam_grid:
            try:
                est = lsif_unconstrained(z_p, z_q, t, lam)
            except NumericalError:
                continue
            err = float(np.mean((np.maximum(G_eval @ est.alpha, 0.0) - r_eval) ** 2))
            if err < best[0]:
                best = (err, float(t), float(lam))
    return best


def run_bench(cfg: BenchConfig, out_dir, threads=1):
    """Simulated benchmark: oracle-selected error per (method, n, repetition).

    The error for each trial is the mean squared deviation from the true
    ratio over a fresh evaluation sample drawn from q (where the ratio
    carries its mass), minimized over the parameter grid.
    """
    oracle = true_ratio(cfg.p_density, cfg.q_density)
    lam_grid = np.asarray(cfg.grids.lam, dtype=np.float64)
    fit = fit_factory(
        cfg.solver.setting,
        gamma=cfg.solver.gamma,
        t_prime_ratio=cfg.solver.t_prime_ratio,
        q_fn=cfg.q_density.pdf,
        normalized=cfg.solver.normalized,
    )

    def one(task):
        n, rep = task
        tag = f"bench:{n}:{rep}"
        z_p = simulate(cfg.p_density, n, derive_seed(cfg.seed, tag + ":p"))
        z_q = simulate(cfg.q_density, cfg.m, derive_seed(cfg.seed, tag + ":q"))
        eval_X = simulate(cfg.q_density, cfg.eval_n, derive_seed(cfg.seed, tag + ":eval"))
        r_eval = oracle.evaluate(eval_X)
        t_grid = _t_grid(cfg.grids, z_p)
        rows = []
        if "fire" in cfg.methods:
            err, t, lam = _bench_fire(z_p, z_q, eval_X, r_eval, t_grid, lam_grid, fit)
            rows.append(["fire", n, rep, err, t, lam])
        if "tikde" in cfg.methods:
            err, t, eps = _bench_tikde(z_p, z_q, eval_X, r_eval, t_grid)
            rows.append(["tikde", n, rep, err, t, eps])
        if "lsif" in cfg.methods:
            err, t, lam = _bench_lsif(z_p, z_q, eval_X, r_eval, t_grid, lam_grid)
            rows.append(["lsif", n, rep, err, t, lam])
        return rows

    tasks = [(n, rep) for n in cfg.n_grid for rep in range(cfg.repetitions)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            packs = list(pool.map(one, tasks))
    else:
        packs = [one(task) for task in tasks]
    rows = [row for pack in packs for row in pack]

    medians = {}
    for method in cfg.methods:
        medians[method] = {}
        for n in cfg.n_grid:
            errs = [r[3] for r in rows if r[0] == method and r[1] == n]
            medians[method][str(n)] = float(np.median(errs))
    payload = {
        "schema_version": SCHEMA_VERSION,
        "command": "simulate",
        "timestamp": _timestamp(),
        "medians": medians,
        "rows_path": "bench.csv",
    }
    os.makedirs(out_dir, exist_ok=True)
    write_csv(os.path.join(out_dir, "bench.csv"), ["method", "n", "rep", "error", "t", "param"], rows)
    write_json(os.path.join(out_dir, "results.json"), payload)
    write_json(os.path.join(out_dir, "config_echo.json"), cfg.to_dict())
    return payload


def run_downstream(cfg: DownstreamConfig, out_dir, threads=1):
    X_tr, y_tr = _load_source(cfg.train, "train", cfg.seed)
    if y_tr is None:
        raise ConfigError("train source must provide labels (csv with label_column)")
    X_te, y_te = _load_source(cfg.test, "test", cfg.seed, dim=X_tr.shape[1])
    if y_te is None:
        raise ConfigError("test source must provide labels (csv with label_column)")
    if cfg.ratio_q is not None:
        X_rq, _ = _load_source(cfg.ratio_q, "ratio_q", cfg.seed, dim=X_tr.shape[1])
    else:
        X_rq = X_te
    if y_tr.dtype.kind != "f" or y_te.dtype.kind != "f":
        raise ConfigError("labels must be numeric")
    if cfg.task == "classification" and not (np.all(np.isin(y_tr, (-1.0, 1.0))) and np.all(np.isin(y_te, (-1.0, 1.0)))):
        raise ConfigError("classification labels must be -1/+1")

    est_cfg = EstimateConfig(
        seed=cfg.seed,
        p=cfg.train,
        q=cfg.ratio_q if cfg.ratio_q is not None else cfg.test,
        solver=cfg.solver,
        grids=cfg.grids,
        validation=cfg.validation,
        cv=cfg.cv,
    )
    _, cvres = _select_cell(est_cfg, X_tr, X_rq, None, threads)
    est = _final_fit(est_cfg, X_tr, X_rq, None, cvres.selected_t, cvres.selected_lam)
    weights = est.evaluate(X_tr, clip_negative=cfg.clip_weights)

    n = X_tr.shape[0]
    sizes = cfg.train_sizes if cfg.train_sizes is not None else (n,)
    for s in sizes:
        if s > n:
            raise ConfigError(f"train size {s} exceeds the {n} available rows")
    perm = np.random.default_rng(derive_seed(cfg.seed, "train-subset")).permutation(n)

    metrics = {"weighted": {}, "unweighted": {}}
    for s in sizes:
        idx = perm[:s]
        for variant in ("weighted", "unweighted"):
            w = weights[idx] if variant == "weighted" else np.ones(s)
            if not np.any(w > 0):
                raise NumericalError(f"estimated weights vanish on the size-{s} training subset")
            if cfg.task == "regression":
                model = weighted_ols(X_tr[idx], y_tr[idx], w)
            else:
                model = weighted_linear_svm(
                    X_tr[idx], y_tr[idx], w, C=cfg.svm.C, epochs=cfg.svm.epochs,
                    seed=derive_seed(cfg.seed, f"svm:{s}:{variant}"),
                )
            metrics[variant][str(s)] = eval_metrics(model, X_te, y_te)

    payload = {
        "schema_version": SCHEMA_VERSION,
        "command": "downstream",
        "timestamp": _timestamp(),
        "task": cfg.task,
        "sizes": list(sizes),
        "metrics": metrics,
        "ratio": {"selected_t": cvres.selected_t, "selected_lambda": cvres.selected_lam},
        "weights_path": "weights.csv",
    }
    os.makedirs(out_dir, exist_ok=True)
    write_csv(os.path.join(out_dir, "weights.csv"), ["weight"], [[w] for w in weights])
    write_json(os.path.join(out_dir, "results.json"), payload)
    write_json(os.path.join(out_dir, "config_echo.json"), cfg.to_dict())
    return payload


def run_resample(cfg: ResampleConfig, out_dir):
    X, labels = _load_source(cfg.data, "data", cfg.seed)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "command": "resample",
        "timestamp": _timestamp(),
        "total": int(X.shape[0]),
        "kept_path": "kept.csv",
    }
    if cfg.kind == "pca_sigmoid":
        _, sigma_v = first_pc(X)
        b_abs = cfg.b * sigma_v if cfg.b_units == "sigma" else cfg.b
        res = pca_resample(X, labels, cfg.a, b_abs, derive_seed(cfg.seed, "resample"))
        payload.update({"sigma_v": sigma_v, "b_absolute": float(b_abs)})
    else:
        if labels is None:
            raise ConfigError("label_subset mode needs a label_column in the data source")
        keep = cfg.labels
        if labels.dtype.kind == "f":
            try:
                keep = [float(l) for l in keep]
            except (TypeError, ValueError):
                raise ConfigError(f"labels are numeric but mode.labels {keep!r} are not") from None
        else:
            keep = [str(l) for l in keep]
        res = label_resample(X, labels, keep)
    payload["kept"] = int(res.X.shape[0])

    header = [f"x{j}" for j in range(res.X.shape[1])]
    rows = [list(row) for row in res.X]
    if res.labels is not None:
        header.append("label")
        for row, lab in zip(rows, res.labels):
            row.append(lab if isinstance(lab, str) else float(lab))
    os.makedirs(out_dir, exist_ok=True)
    write_csv(os.path.join(out_dir, "kept.csv"), header, rows)
    write_json(os.path.join(out_dir, "results.json"), payload)
    write_json(os.path.join(out_dir, "config_echo.json"), cfg.to_dict())
    return payload


# === entry point ===

_COMMANDS = {
    "estimate": (EstimateConfig, "fit a ratio estimate with CV-selected (t, lambda)"),
    "cv": (EstimateConfig, "run the CV grid only and report the J-score surface"),
    "simulate": (BenchConfig, "benchmark estimators on analytic densities against the true ratio"),
    "downstream": (DownstreamConfig, "fit importance-weighted vs unweighted learners under covariate shift"),
    "resample": (ResampleConfig, "subsample a dataset to induce covariate shift"),
}


def _fail(code, message):
    print(json.dumps({"code": code, "error": message}), file=sys.stderr)
    raise SystemExit(code)


def main(argv=None):
    parser = argparse.ArgumentParser(prog="firedre", description="density-ratio estimation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in _COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="path to a JSON config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default="firedre_out", help="output directory")
        p.add_argument("--threads", type=int, default=1, help="worker threads for independent cells")
    args = parser.parse_args(argv)

    cls = _COMMANDS[args.command][0]
    try:
        if args.threads is not None and args.threads < 1:
            raise ConfigError(f"--threads must be >= 1, got {args.threads}")
        cfg = load_config(args.config, cls)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError(f"--seed must be >= 0, got {args.seed}")
            cfg = dataclasses.replace(cfg, seed=args.seed)
        if args.command == "estimate":
            run_estimate(cfg, args.out, threads=args.threads)
        elif args.command == "cv":
            run_cv(cfg, args.out, threads=args.threads)
        elif args.command == "simulate":
            run_bench(cfg, args.out, threads=args.threads)
        elif args.command == "downstream":
            run_downstream(cfg, args.out, threads=args.threads)
        else:
            run_resample(cfg, args.out)
    except ConfigError as exc:
        _fail(2, str(exc))
    except (NumericalError, np.linalg.LinAlgError) as exc:
        _fail(3, str(exc))
    except ValueError as exc:
        _fail(2, str(exc))
    except OSError as exc:
        _fail(2, str(exc))
    return 0


if __name__ == "__main__":
    sys.exit(main())
