import hashlib
import json
import os

import numpy as np
import pytest

from firedre.cli import derive_seed, main, write_csv, write_json
from firedre.data import load_csv

GAUSS = {"kind": "gaussian", "mean": [0.0], "std": 1.0}

# small but realistic estimate config: explicit grids keep runtime low
ESTIMATE = {
    "seed": 3,
    "p": {"density": GAUSS, "n": 120},
    "q": {"density": GAUSS, "n": 120},
    "grids": {"t": [0.5, 1.0, 2.0], "lambda": [1e-5, 1e-7]},
    "validation": {"family": "linear", "count": 8},
    "cv": {"folds": 3},
}


def run(tmp_path, command, cfg, out="out", extra=()):
    cfg_path = tmp_path / f"{command}_cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    out_dir = tmp_path / out
    rc = main([command, "--config", str(cfg_path), "--out", str(out_dir), *extra])
    assert rc == 0
    return out_dir


def read_results(out_dir, drop_timestamp=True):
    with open(out_dir / "results.json") as fh:
        payload = json.load(fh)
    if drop_timestamp:
        payload.pop("timestamp")
    return payload


def fail_code(capsys, argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["code"] == exc.value.code
    assert isinstance(err["error"], str) and err["error"]
    return exc.value.code, err["error"]


class TestHelpers:
    def test_derive_seed_pinned_values(self):
        # little-endian first 8 bytes of sha256("seed/stage")
        ref = int.from_bytes(hashlib.sha256(b"3/cv-folds").digest()[:8], "little")
        assert derive_seed(3, "cv-folds") == ref
        assert derive_seed(3, "cv-folds") != derive_seed(4, "cv-folds")
        assert derive_seed(3, "a") != derive_seed(3, "b")
        assert 0 <= derive_seed(0, "x") < 2 ** 64

    def test_write_csv_cell_formats(self, tmp_path):
        path = str(tmp_path / "t.csv")
        write_csv(path, ["a", "b", "c", "d"], [[1, 0.5, True, "lab"], [np.int64(2), np.float64(0.1), False, "x"]])
        text = open(path).read()
        assert text == "a,b,c,d\n1,0.5,1,lab\n2,0.1,0,x\n"

    def test_write_json_non_finite_to_null(self, tmp_path):
        path = str(tmp_path / "t.json")
        write_json(path, {"x": np.inf, "y": np.array([1.0, np.nan]), "z": np.int32(3)})
        data = json.loads(open(path).read())
        assert data == {"x": None, "y": [1.0, None], "z": 3}


class TestEstimateCommand:
    def test_outputs_and_payload(self, tmp_path):
        out = run(tmp_path, "estimate", ESTIMATE)
        for name in ("results.json", "config_echo.json", "centers.csv", "weights.csv"):
            assert (out / name).exists()
        payload = read_results(out, drop_timestamp=False)
        assert payload["schema_version"] == 1
        assert payload["command"] == "estimate"
        assert payload["n"] == 120 and payload["m"] == 120
        assert payload["selected_t"] in ESTIMATE["grids"]["t"]
        assert payload["selected_lambda"] in ESTIMATE["grids"]["lambda"]
        assert len(payload["coefficients"]) == 120
        assert payload["scale"] == "plain"
        assert payload["kernel"]["t"] == payload["selected_t"]
        # p = q, so the fitted ratio should hover near 1 on the p-sample
        assert 0.5 < payload["weights_mean"] < 1.5
        surface = np.array(payload["cv_surface"]["scores"])
        assert surface.shape == (3, 2)
        X, _ = load_csv(str(out / "centers.csv"))
        w, _ = load_csv(str(out / "weights.csv"))
        assert X.shape == (120, 1) and w.shape == (120, 1)
        assert abs(w.mean() - payload["weights_mean"]) < 1e-12

    def test_rerun_is_byte_identical(self, tmp_path):
        out1 = run(tmp_path, "estimate", ESTIMATE, out="a")
        out2 = run(tmp_path, "estimate", ESTIMATE, out="b")
        assert read_results(out1) == read_results(out2)
        for name in ("centers.csv", "weights.csv", "config_echo.json"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_echo_reproduces_run(self, tmp_path):
        out1 = run(tmp_path, "estimate", ESTIMATE, out="a")
        echo = json.loads((out1 / "config_echo.json").read_text())
        out2 = run(tmp_path, "estimate", echo, out="b")
        assert read_results(out1) == read_results(out2)
        assert (out1 / "weights.csv").read_bytes() == (out2 / "weights.csv").read_bytes()

    def test_seed_override_changes_data_and_echo(self, tmp_path):
        out1 = run(tmp_path, "estimate", ESTIMATE, out="a")
        out2 = run(tmp_path, "estimate", ESTIMATE, out="b", extra=("--seed", "99"))
        echo = json.loads((out2 / "config_echo.json").read_text())
        assert echo["seed"] == 99
        assert read_results(out1) != read_results(out2)

    def test_threads_do_not_change_results(self, tmp_path):
        out1 = run(tmp_path, "estimate", ESTIMATE, out="a")
        out2 = run(tmp_path, "estimate", ESTIMATE, out="b", extra=("--threads", "4"))
        assert read_results(out1) == read_results(out2)

    def test_csv_source(self, tmp_path):
        rng = np.random.default_rng(0)
        for name in ("p.csv", "q.csv"):
            rows = "\n".join(repr(float(x)) for x in rng.standard_normal(80))
            (tmp_path / name).write_text(rows + "\n")
        cfg = dict(ESTIMATE)
        cfg["p"] = {"csv": str(tmp_path / "p.csv")}
        cfg["q"] = {"csv": str(tmp_path / "q.csv")}
        out = run(tmp_path, "estimate", cfg)
        assert read_results(out, drop_timestamp=False)["n"] == 80

    def test_unnormalized_solver_flag_reaches_fit(self, tmp_path):
        cfg = dict(ESTIMATE)
        cfg["solver"] = {"setting": "type1", "normalized": False}
        out = run(tmp_path, "estimate", cfg)
        payload = read_results(out, drop_timestamp=False)
        assert payload["kernel"]["normalized"] is False
        baseline = read_results(run(tmp_path, "estimate", ESTIMATE, out="norm"), drop_timestamp=False)
        assert baseline["kernel"]["normalized"] is True

    def test_type2_known_q(self, tmp_path):
        cfg = {
            "seed": 1,
            "p": {"density": GAUSS, "n": 100},
            "solver": {"setting": "type2"},
            "q_function": GAUSS,
            "grids": {"t": [0.5, 1.0], "lambda": [1e-5, 1e-7]},
            "validation": {"family": "linear", "count": 6},
            "cv": {"folds": 3, "type2_q_points": 200},
        }
        out = run(tmp_path, "estimate", cfg)
        payload = read_results(out, drop_timestamp=False)
        assert 0.5 < payload["weights_mean"] < 1.5


class TestCvCommand:
    def test_surface_only(self, tmp_path):
        out = run(tmp_path, "cv", ESTIMATE)
        payload = read_results(out, drop_timestamp=False)
        assert payload["command"] == "cv"
        assert "coefficients" not in payload
        assert not (out / "weights.csv").exists()
        fold_scores = np.array(payload["cv_surface"]["fold_scores"])
        assert fold_scores.shape == (3, 2, 3)

    def test_matches_estimate_selection(self, tmp_path):
        out1 = run(tmp_path, "cv", ESTIMATE, out="a")
        out2 = run(tmp_path, "estimate", ESTIMATE, out="b")
        a, b = read_results(out1), read_results(out2)
        assert a["selected_t"] == b["selected_t"]
        assert a["selected_lambda"] == b["selected_lambda"]
        assert a["cv_surface"] == b["cv_surface"]


class TestSimulateCommand:
    CFG = {
        "seed": 5,
        "p_density": GAUSS,
        "q_density": {"kind": "gaussian", "mean": [0.3], "std": 0.8},
        "n_grid": [40, 80],
        "m": 100,
        "repetitions": 2,
        "eval_n": 60,
        "methods": ["fire", "tikde", "lsif"],
        "grids": {"t": [0.5, 1.0], "lambda": [1e-5, 1e-7]},
    }

    def test_bench_rows_and_medians(self, tmp_path):
        out = run(tmp_path, "simulate", self.CFG)
        payload = read_results(out, drop_timestamp=False)
        assert payload["command"] == "simulate"
        text = (out / "bench.csv").read_text().splitlines()
        assert text[0] == "method,n,rep,error,t,param"
        assert len(text) == 1 + 3 * 2 * 2  # methods x n_grid x repetitions
        for method in ("fire", "tikde", "lsif"):
            for n in ("40", "80"):
                med = payload["medians"][method][n]
                assert np.isfinite(med) and med >= 0.0
        # per-row medians recomputed from the CSV agree with the payload
        rows = [line.split(",") for line in text[1:]]
        fire40 = [float(r[3]) for r in rows if r[0] == "fire" and r[1] == "40"]
        assert abs(np.median(fire40) - payload["medians"]["fire"]["40"]) < 1e-15

    def test_deterministic_and_thread_invariant(self, tmp_path):
        out1 = run(tmp_path, "simulate", self.CFG, out="a")
        out2 = run(tmp_path, "simulate", self.CFG, out="b", extra=("--threads", "3"))
        assert (out1 / "bench.csv").read_bytes() == (out2 / "bench.csv").read_bytes()
        assert read_results(out1) == read_results(out2)


class TestDownstreamCommand:
    def make_shifted_task(self, tmp_path, n_tr=80, n_te=60):
        rng = np.random.default_rng(7)
        beta = np.array([1.0, -2.0])

        def write_split(name, n, shift):
            X = rng.standard_normal((n, 2)) + shift
            y = X @ beta + 0.1 * rng.standard_normal(n)
            lines = [",".join([repr(float(a)), repr(float(b)), repr(float(c))]) for (a, b), c in zip(X, y)]
            path = tmp_path / name
            path.write_text("\n".join(lines) + "\n")
            return str(path)

        return write_split("train.csv", n_tr, 0.0), write_split("test.csv", n_te, 0.4)

    def cfg(self, train, test, **over):
        d = {
            "seed": 2,
            "train": {"csv": train, "label_column": -1},
            "test": {"csv": test, "label_column": -1},
            "grids": {"t": [0.5, 1.0, 2.0], "lambda": [1e-5, 1e-7]},
            "validation": {"family": "linear", "count": 6},
            "cv": {"folds": 3},
            "train_sizes": [40, 80],
        }
        d.update(over)
        return d

    def test_regression_metrics_structure(self, tmp_path):
        train, test = self.make_shifted_task(tmp_path)
        out = run(tmp_path, "downstream", self.cfg(train, test))
        payload = read_results(out, drop_timestamp=False)
        assert payload["command"] == "downstream"
        assert payload["sizes"] == [40, 80]
        for variant in ("weighted", "unweighted"):
            for size in ("40", "80"):
                m = payload["metrics"][variant][size]
                assert set(m) == {"mse", "rmse", "normalized_mse"}
                assert m["mse"] >= 0.0
        w, _ = load_csv(str(out / "weights.csv"))
        assert w.shape == (80, 1)
        assert (w >= 0).all()  # clip_weights defaults on

    def test_classification_task(self, tmp_path):
        rng = np.random.default_rng(8)

        def write_split(name, n):
            X = rng.standard_normal((n, 2))
            y = np.where(X[:, 0] + 0.3 * rng.standard_normal(n) > 0, 1.0, -1.0)
            lines = [",".join([repr(float(a)), repr(float(b)), repr(float(c))]) for (a, b), c in zip(X, y)]
            (tmp_path / name).write_text("\n".join(lines) + "\n")
            return str(tmp_path / name)

        train, test = write_split("tr.csv", 70), write_split("te.csv", 50)
        cfg = self.cfg(train, test, task="classification", train_sizes=None, svm={"C": 5.0, "epochs": 80})
        out = run(tmp_path, "downstream", cfg)
        payload = read_results(out, drop_timestamp=False)
        m = payload["metrics"]["weighted"]["70"]
        assert set(m) == {"mse", "rmse", "zero_one_error"}
        assert m["zero_one_error"] < 0.5

    def test_rerun_identical(self, tmp_path):
        train, test = self.make_shifted_task(tmp_path)
        out1 = run(tmp_path, "downstream", self.cfg(train, test), out="a")
        out2 = run(tmp_path, "downstream", self.cfg(train, test), out="b")
        assert read_results(out1) == read_results(out2)
        assert (out1 / "weights.csv").read_bytes() == (out2 / "weights.csv").read_bytes()

    def test_vanishing_weights_exit_3_without_partial_output(self, tmp_path, capsys):
        # train and q samples so far apart that every estimated weight
        # underflows to zero: the run must fail cleanly before writing
        rng = np.random.default_rng(9)
        X_tr = rng.standard_normal((40, 2))
        X_te = rng.standard_normal((30, 2)) + 500.0
        for name, X in (("tr.csv", X_tr), ("te.csv", X_te)):
            lines = [
                ",".join([repr(float(a)), repr(float(b)), repr(float(a + b))]) for a, b in X
            ]
            (tmp_path / name).write_text("\n".join(lines) + "\n")
        cfg = self.cfg(str(tmp_path / "tr.csv"), str(tmp_path / "te.csv"), train_sizes=None)
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(cfg))
        out_dir = tmp_path / "out"
        code, msg = fail_code(capsys, ["downstream", "--config", str(cfg_path), "--out", str(out_dir)])
        assert code == 3
        assert "vanish" in msg
        assert not (out_dir / "results.json").exists()


class TestResampleCommand:
    def write_data(self, tmp_path, with_labels=False):
        rng = np.random.default_rng(10)
        X = rng.standard_normal((200, 2)) * np.array([3.0, 1.0])
        rows = []
        for i, (a, b) in enumerate(X):
            cells = [repr(float(a)), repr(float(b))]
            if with_labels:
                cells.append(str(i % 3))
            rows.append(",".join(cells))
        path = tmp_path / "data.csv"
        path.write_text("\n".join(rows) + "\n")
        return str(path), X

    def test_pca_sigmoid_sigma_units(self, tmp_path):
        path, X = self.write_data(tmp_path)
        cfg = {
            "seed": 4,
            "data": {"csv": path},
            "mode": {"kind": "pca_sigmoid", "a": 2.0, "b": 1.5, "b_units": "sigma"},
        }
        out = run(tmp_path, "resample", cfg)
        payload = read_results(out, drop_timestamp=False)
        assert payload["total"] == 200
        assert abs(payload["b_absolute"] - 1.5 * payload["sigma_v"]) < 1e-12
        kept, _ = load_csv(str(out / "kept.csv"))
        assert kept.shape == (payload["kept"], 2)
        assert 0 < payload["kept"] < 200

    def test_label_subset_round_trip(self, tmp_path):
        path, _ = self.write_data(tmp_path, with_labels=True)
        cfg = {
            "seed": 0,
            "data": {"csv": path, "label_column": 2},
            "mode": {"kind": "label_subset", "labels": [0, 2]},
        }
        out = run(tmp_path, "resample", cfg)
        kept, labels = load_csv(str(out / "kept.csv"), label_column=2)
        assert set(labels) <= {0.0, 2.0}
        payload = read_results(out, drop_timestamp=False)
        assert payload["kept"] == kept.shape[0]
        # every third row carries each label, and 0/2 are kept
        assert kept.shape[0] == 67 + 66

    def test_echo_reproduces_kept_rows(self, tmp_path):
        path, _ = self.write_data(tmp_path)
        cfg = {
            "seed": 4,
            "data": {"csv": path},
            "mode": {"kind": "pca_sigmoid", "a": 1.0, "b": 0.5},
        }
        out1 = run(tmp_path, "resample", cfg, out="a")
        echo = json.loads((out1 / "config_echo.json").read_text())
        out2 = run(tmp_path, "resample", echo, out="b")
        assert (out1 / "kept.csv").read_bytes() == (out2 / "kept.csv").read_bytes()
        assert read_results(out1) == read_results(out2)


class TestFailureModes:
    def test_missing_config_file(self, tmp_path, capsys):
        code, msg = fail_code(capsys, ["estimate", "--config", str(tmp_path / "none.json"), "--out", str(tmp_path / "o")])
        assert code == 2
        assert "not found" in msg

    def test_unknown_config_key(self, tmp_path, capsys):
        cfg_path = tmp_path / "c.json"
        cfg_path.write_text(json.dumps({**ESTIMATE, "mystery": 1}))
        code, msg = fail_code(capsys, ["estimate", "--config", str(cfg_path), "--out", str(tmp_path / "o")])
        assert code == 2
        assert "mystery" in msg
        assert not (tmp_path / "o").exists()

    def test_bad_csv_reports_line(self, tmp_path, capsys):
        (tmp_path / "p.csv").write_text("1.0\n2.0\nbogus\n")
        cfg = dict(ESTIMATE)
        cfg["p"] = {"csv": str(tmp_path / "p.csv")}
        cfg_path = tmp_path / "c.json"
        cfg_path.write_text(json.dumps(cfg))
        code, msg = fail_code(capsys, ["estimate", "--config", str(cfg_path), "--out", str(tmp_path / "o")])
        assert code == 2
        assert "line 3" in msg

    def test_negative_seed_rejected(self, tmp_path, capsys):
        cfg_path = tmp_path / "c.json"
        cfg_path.write_text(json.dumps(ESTIMATE))
        code, _ = fail_code(capsys, ["estimate", "--config", str(cfg_path), "--seed", "-1", "--out", str(tmp_path / "o")])
        assert code == 2

    def test_zero_threads_rejected(self, tmp_path, capsys):
        cfg_path = tmp_path / "c.json"
        cfg_path.write_text(json.dumps(ESTIMATE))
        code, _ = fail_code(capsys, ["estimate", "--config", str(cfg_path), "--threads", "0", "--out", str(tmp_path / "o")])
        assert code == 2

    def test_dimension_mismatch(self, tmp_path, capsys):
        cfg = dict(ESTIMATE)
        cfg["q"] = {"density": {"kind": "gaussian", "mean": [0.0, 0.0], "std": 1.0}, "n": 50}
        cfg_path = tmp_path / "c.json"
        cfg_path.write_text(json.dumps(cfg))
        code, msg = fail_code(capsys, ["estimate", "--config", str(cfg_path), "--out", str(tmp_path / "o")])
        assert code == 2
        assert "dimension" in msg
