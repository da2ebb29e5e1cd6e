import json
import os

import numpy as np
import pytest

from sdtdl import dataio
from sdtdl.cli import main, read_predictions
from sdtdl.hooi import hooi


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def synth_dir(tmp_path, capsys, **kw):
    d = tmp_path / "data"
    args = dict(classes=3, dims="8,8", ranks="3,3", n_source=10, n_target=10,
                noise=0.05, shift=0.5, seed=0)
    args.update(kw)
    code, out, err = run(
        capsys, "synth",
        "--classes", str(args["classes"]),
        "--dims", args["dims"],
        "--ranks", args["ranks"],
        "--n-source", str(args["n_source"]),
        "--n-target", str(args["n_target"]),
        "--noise", str(args["noise"]),
        "--shift", str(args["shift"]),
        "--seed", str(args["seed"]),
        "--out", str(d),
    )
    assert code == 0, err
    return d


def fit_args(d, out):
    return [
        "fit",
        "--source", str(d / "source.stdl"),
        "--source-labels", str(d / "source_labels.txt"),
        "--target", str(d / "target.stdl"),
        "--truth", str(d / "target_truth.txt"),
        "--ranks", "3,3",
        "--theta", "2.0",
        "--lambda", "0.1",
        "--max-iters", "4",
        "--out", str(out),
    ]


class TestSynth:
    def test_writes_all_files(self, tmp_path, capsys):
        d = synth_dir(tmp_path, capsys)
        for name in ["source.stdl", "source_labels.txt", "target.stdl", "target_truth.txt"]:
            assert (d / name).exists()
        src = dataio.read_tensor(d / "source.stdl")
        assert src.shape == (8, 8, 30)
        assert len(dataio.read_labels(d / "source_labels.txt")) == 30

    def test_matches_api(self, tmp_path, capsys):
        d = synth_dir(tmp_path, capsys, seed=3)
        spec = dataio.SyntheticSpec(
            class_count=3, dims=(8, 8), ranks=(3, 3),
            n_source_per_class=10, n_target_per_class=10,
            noise=0.05, shift=0.5, seed=3,
        )
        source, target, truth = dataio.generate_synthetic(spec)
        assert np.array_equal(dataio.read_tensor(d / "source.stdl"), source.samples)
        assert np.array_equal(dataio.read_tensor(d / "target.stdl"), target.samples)
        assert np.array_equal(dataio.read_labels(d / "target_truth.txt"), truth)

    def test_bad_spec_exit_code(self, tmp_path, capsys):
        code, _, err = run(
            capsys, "synth", "--classes", "2", "--dims", "3,3", "--ranks", "4,4",
            "--n-source", "1", "--n-target", "1", "--out", str(tmp_path / "x"),
        )
        assert code == 2
        assert "error" in err


class TestFitPredict:
    def test_fit_outputs(self, tmp_path, capsys):
        d = synth_dir(tmp_path, capsys)
        out = tmp_path / "run"
        code, stdout, err = run(capsys, *fit_args(d, out))
        assert code == 0, err
        summary = json.loads(stdout)
        assert 0.0 <= summary["accuracy"] <= 1.0
        assert (out / "model.stdm").exists()
        labels, conf = read_predictions(out / "predictions.txt")
        assert labels.shape == (30,)
        assert np.all((labels >= 1) & (labels <= 3))
        with open(out / "history.csv") as fh:
            lines = fh.read().strip().splitlines()
        assert lines[0] == "iter,objective,n_selected,accuracy_if_truth_given"
        assert len(lines) >= 2

    def test_predict_reproduces_fit_predictions(self, tmp_path, capsys):
        d = synth_dir(tmp_path, capsys)
        out = tmp_path / "run"
        code, _, _ = run(capsys, *fit_args(d, out))
        assert code == 0
        pred = tmp_path / "pred.txt"
        code, _, err = run(
            capsys, "predict",
            "--model", str(out / "model.stdm"),
            "--target", str(d / "target.stdl"),
            "--out", str(pred),
        )
        assert code == 0, err
        l1, c1 = read_predictions(out / "predictions.txt")
        l2, c2 = read_predictions(pred)
        assert np.array_equal(l1, l2)
        assert np.array_equal(c1, c2)

    def test_rerun_is_deterministic(self, tmp_path, capsys):
        d = synth_dir(tmp_path, capsys)
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            code, _, _ = run(capsys, *fit_args(d, out))
            assert code == 0
            outs.append(out)
        for name in ("model.stdm", "predictions.txt", "history.csv"):
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()

    def test_max_iters_zero_single_history_row(self, tmp_path, capsys):
        d = synth_dir(tmp_path, capsys)
        out = tmp_path / "run"
        argv = fit_args(d, out)
        argv[argv.index("--max-iters") + 1] = "0"
        code, _, _ = run(capsys, *argv)
        assert code == 0
        with open(out / "history.csv") as fh:
            lines = fh.read().strip().splitlines()
        assert len(lines) == 2
        assert lines[1].startswith("0,")

    def test_config_file_with_flag_override(self, tmp_path, capsys):
        d = synth_dir(tmp_path, capsys)
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            "# comment line\n"
            f"source={d / 'source.stdl'}\n"
            f"source_labels={d / 'source_labels.txt'}\n"
            f"target={d / 'target.stdl'}\n"
            "ranks=3,3\n"
            "theta=2.0\n"
            "max_iters=9999\n"
        )
        out = tmp_path / "run"
        code, stdout, err = run(
            capsys, "fit", "--config", str(cfg), "--max-iters", "1", "--out", str(out)
        )
        assert code == 0, err
        summary = json.loads(stdout)
        assert summary["accuracy"] is None  # no truth given
        assert summary["iterations"] <= 2

    def test_bad_config_line(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("this is not a pair\n")
        code, _, err = run(capsys, "fit", "--config", str(cfg))
        assert code == 2
        assert "expected key=value" in err

    def test_unknown_preset(self, tmp_path, capsys):
        d = synth_dir(tmp_path, capsys)
        cfg = tmp_path / "p.cfg"
        cfg.write_text("preset=bogus\n")
        code, _, err = run(
            capsys, "fit", "--config", str(cfg),
            "--source", str(d / "source.stdl"),
            "--source-labels", str(d / "source_labels.txt"),
            "--target", str(d / "target.stdl"),
        )
        assert code == 2
        assert "unknown preset" in err

    def test_missing_source_exit_code(self, tmp_path, capsys):
        code, _, err = run(
            capsys, "fit", "--source", str(tmp_path / "nope.stdl"),
            "--source-labels", str(tmp_path / "nope.txt"),
            "--target", str(tmp_path / "nope2.stdl"), "--ranks", "2,2",
        )
        assert code == 2
        assert "not found" in err

    def test_corrupt_tensor_exit_code(self, tmp_path, capsys):
        d = synth_dir(tmp_path, capsys)
        bad = tmp_path / "bad.stdl"
        bad.write_bytes(b"GARBAGE!")
        code, _, err = run(
            capsys, "fit", "--source", str(bad),
            "--source-labels", str(d / "source_labels.txt"),
            "--target", str(d / "target.stdl"), "--ranks", "3,3",
        )
        assert code == 3
        assert "io error" in err

    def test_predict_empty_target(self, tmp_path, capsys):
        d = synth_dir(tmp_path, capsys)
        out = tmp_path / "run"
        code, _, _ = run(capsys, *fit_args(d, out))
        assert code == 0
        empty = tmp_path / "empty.stdl"
        dataio.write_tensor(empty, np.zeros((8, 8, 0)))
        pred = tmp_path / "pred.txt"
        code, _, err = run(
            capsys, "predict", "--model", str(out / "model.stdm"),
            "--target", str(empty), "--out", str(pred),
        )
        assert code == 0, err
        assert pred.read_text() == "index,label,confidence\n"

    def test_predict_dims_mismatch(self, tmp_path, capsys):
        d = synth_dir(tmp_path, capsys)
        out = tmp_path / "run"
        code, _, _ = run(capsys, *fit_args(d, out))
        assert code == 0
        wrong = tmp_path / "wrong.stdl"
        dataio.write_tensor(wrong, np.zeros((5, 5, 2)))
        code, _, err = run(
            capsys, "predict", "--model", str(out / "model.stdm"),
            "--target", str(wrong), "--out", str(tmp_path / "p.txt"),
        )
        assert code == 2
        assert "do not match" in err


class TestEval:
    def test_hand_counted_fixture(self, tmp_path, capsys):
        pred = tmp_path / "pred.txt"
        pred.write_text(
            "index,label,confidence\n"
            "0,1,0.9\n0,2,0.9\n0,2,0.9\n0,1,0.9\n0,3,0.9\n0,3,0.9\n"
        )
        truth = tmp_path / "truth.txt"
        truth.write_text("1\n2\n2\n2\n3\n1\n")
        code, stdout, err = run(
            capsys, "eval", "--predictions", str(pred), "--truth", str(truth)
        )
        assert code == 0, err
        got = json.loads(stdout)
        # correct: rows 0,1,2,4 -> 4/6
        assert abs(got["accuracy"] - 4.0 / 6.0) <= 1e-12
        assert abs(got["per_class"]["1"] - 0.5) <= 1e-12
        assert abs(got["per_class"]["2"] - 2.0 / 3.0) <= 1e-12
        assert abs(got["per_class"]["3"] - 1.0) <= 1e-12

    def test_count_mismatch(self, tmp_path, capsys):
        pred = tmp_path / "pred.txt"
        pred.write_text("index,label,confidence\n0,1,0.9\n")
        truth = tmp_path / "truth.txt"
        truth.write_text("1\n2\n")
        code, _, err = run(
            capsys, "eval", "--predictions", str(pred), "--truth", str(truth)
        )
        assert code == 2


class TestBaseline:
    def test_single_class_perfect(self, tmp_path, capsys):
        rng = np.random.default_rng(0)
        dataio.write_tensor(tmp_path / "s.stdl", rng.standard_normal((4, 4, 5)))
        dataio.write_labels(tmp_path / "sl.txt", [1] * 5)
        dataio.write_tensor(tmp_path / "t.stdl", rng.standard_normal((4, 4, 7)))
        dataio.write_labels(tmp_path / "tt.txt", [1] * 7)
        code, stdout, err = run(
            capsys, "baseline",
            "--source", str(tmp_path / "s.stdl"),
            "--source-labels", str(tmp_path / "sl.txt"),
            "--target", str(tmp_path / "t.stdl"),
            "--truth", str(tmp_path / "tt.txt"),
        )
        assert code == 0, err
        assert json.loads(stdout)["accuracy"] == 1.0

    def test_pure_noise_near_chance(self, tmp_path, capsys):
        # source centroids far apart, targets pure noise: accuracy ~ 1/C
        rng = np.random.default_rng(1)
        C, n_t = 3, 300
        src = rng.standard_normal((4, 4, 30)) * 0.01
        labels = np.repeat([1, 2, 3], 10)
        for c in range(C):
            src[c, c, labels == c + 1] += 100.0
        dataio.write_tensor(tmp_path / "s.stdl", src)
        dataio.write_labels(tmp_path / "sl.txt", labels)
        dataio.write_tensor(tmp_path / "t.stdl", rng.standard_normal((4, 4, n_t)))
        dataio.write_labels(tmp_path / "tt.txt", rng.integers(1, C + 1, size=n_t))
        code, stdout, err = run(
            capsys, "baseline",
            "--source", str(tmp_path / "s.stdl"),
            "--source-labels", str(tmp_path / "sl.txt"),
            "--target", str(tmp_path / "t.stdl"),
            "--truth", str(tmp_path / "tt.txt"),
        )
        assert code == 0, err
        acc = json.loads(stdout)["accuracy"]
        # 4-sigma binomial band around 1/3 with N=300
        assert abs(acc - 1.0 / 3.0) <= 4 * np.sqrt((1 / 3) * (2 / 3) / n_t)


class TestDecompose:
    def test_full_rank_exact(self, tmp_path, capsys):
        rng = np.random.default_rng(2)
        t = rng.standard_normal((4, 5, 3))
        dataio.write_tensor(tmp_path / "t.stdl", t)
        out = tmp_path / "dec"
        code, stdout, err = run(
            capsys, "decompose", "--input", str(tmp_path / "t.stdl"),
            "--ranks", "4,5,3", "--out", str(out),
        )
        assert code == 0, err
        report = json.loads(stdout)
        assert report["reconstruction_error"] <= 1e-10
        assert (out / "core.stdl").exists()
        for m in range(3):
            assert (out / f"factor_{m}.stdl").exists()

    def test_matches_api_and_monotone(self, tmp_path, capsys):
        rng = np.random.default_rng(3)
        t = rng.standard_normal((5, 5, 5))
        dataio.write_tensor(tmp_path / "t.stdl", t)
        out = tmp_path / "dec"
        code, stdout, err = run(
            capsys, "decompose", "--input", str(tmp_path / "t.stdl"),
            "--ranks", "2,2,2", "--out", str(out),
        )
        assert code == 0, err
        report = json.loads(stdout)
        hist = np.array(report["fit_history"])
        assert np.all(np.diff(hist) >= -1e-10)
        ref = hooi(t, (2, 2, 2))
        assert np.array_equal(dataio.read_tensor(out / "core.stdl"), ref.core)
        for m in range(3):
            assert np.array_equal(
                dataio.read_tensor(out / f"factor_{m}.stdl"), ref.factors[m]
            )
        with open(out / "report.json") as fh:
            assert json.load(fh) == report

    def test_bad_ranks_exit_code(self, tmp_path, capsys):
        dataio.write_tensor(tmp_path / "t.stdl", np.zeros((3, 3)))
        code, _, err = run(
            capsys, "decompose", "--input", str(tmp_path / "t.stdl"),
            "--ranks", "4,2", "--out", str(tmp_path / "dec"),
        )
        assert code == 2
