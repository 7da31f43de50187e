"""Command-line interface: artifacts, JSON output, exit codes."""

import json
import subprocess
import sys

import pytest

from aedesnet.cli import main


def _run(capsys, argv):
    """Invoke the CLI in-process; returns (exit_code, stdout, stderr)."""
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture(scope="module")
def train_dir(tmp_path_factory):
    """One tiny trained run shared by the read-only CLI tests."""
    out = tmp_path_factory.mktemp("cli") / "run"
    code = main(["train", "--synthetic", "15", "--image-size", "16",
                 "--epochs", "1", "--batch-size", "16",
                 "--split", "0.7,0.3,0.0", "--seed", "7",
                 "--out", str(out)])
    assert code == 0
    return out


@pytest.fixture(scope="module")
def image_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli-imgs") / "synth"
    code = main(["synth", "--out", str(out), "--n-per-class", "4",
                 "--image-size", "16", "--seed", "3"])
    assert code == 0
    return out


class TestTrain:
    def test_writes_all_artifacts(self, train_dir):
        for name in ("model.maed", "metrics.csv", "metrics.json", "manifest.json"):
            assert (train_dir / name).exists(), name

    def test_stdout_is_one_json_line(self, capsys, tmp_path):
        code, out, err = _run(capsys, [
            "train", "--synthetic", "12", "--image-size", "16",
            "--epochs", "1", "--batch-size", "8", "--split", "0.7,0.3,0.0",
            "--seed", "5", "--out", str(tmp_path / "r")])
        assert code == 0
        lines = [l for l in out.splitlines() if l]
        assert len(lines) == 1
        doc = json.loads(lines[0])
        assert doc["epochs"] == 1
        assert 0.0 <= doc["final_val_acc"] <= 1.0
        assert "epoch 1/1" in err  # progress stays on stderr

    def test_manifest_records_run(self, train_dir):
        manifest = json.loads((train_dir / "manifest.json").read_text())
        assert manifest["seed"] == 7
        assert manifest["config"]["epochs"] == 1
        assert manifest["dataset"]["kind"] == "synthetic"
        assert manifest["tool_version"]

    def test_rerun_is_byte_identical(self, capsys, tmp_path):
        argv = ["train", "--synthetic", "12", "--image-size", "16",
                "--epochs", "1", "--batch-size", "8", "--split", "0.7,0.3,0.0",
                "--seed", "9"]
        a, b = tmp_path / "a", tmp_path / "b"
        assert _run(capsys, argv + ["--out", str(a)])[0] == 0
        assert _run(capsys, argv + ["--out", str(b)])[0] == 0
        assert (a / "model.maed").read_bytes() == (b / "model.maed").read_bytes()
        assert (a / "metrics.csv").read_text() == (b / "metrics.csv").read_text()


class TestPredict:
    def test_scores_each_image(self, capsys, train_dir, image_dir):
        images = sorted(str(p) for p in image_dir.rglob("*.png"))[:3]
        code, out, _ = _run(capsys, ["predict", "--model",
                                     str(train_dir / "model.maed")] + images)
        assert code == 0
        lines = out.strip().splitlines()
        assert len(lines) == 3
        for line, path in zip(lines, images):
            doc = json.loads(line)
            assert doc["path"] == path
            assert 0.0 <= doc["score"] <= 1.0
            assert doc["label"] in ("Ae. aegypti", "Ae. albopictus")
            assert doc["warnings"] == []

    def test_missing_file_reports_error_and_exit_1(self, capsys, train_dir, image_dir):
        good = sorted(str(p) for p in image_dir.rglob("*.png"))[0]
        code, out, _ = _run(capsys, ["predict", "--model",
                                     str(train_dir / "model.maed"),
                                     good, "/nonexistent/img.png"])
        assert code == 1
        lines = out.strip().splitlines()
        assert len(lines) == 2
        assert "score" in json.loads(lines[0])
        assert "error" in json.loads(lines[1])


class TestEvaluate:
    def test_reports_confusion_counts(self, capsys, train_dir, image_dir):
        code, out, _ = _run(capsys, ["evaluate",
                                     "--model", str(train_dir / "model.maed"),
                                     "--data", str(image_dir)])
        assert code == 0
        doc = json.loads(out)
        assert doc["count"] == 8
        assert doc["tp"] + doc["tn"] + doc["fp"] + doc["fn"] == 8
        assert doc["accuracy"] == (doc["tp"] + doc["tn"]) / 8

    def test_missing_model_exits_1(self, capsys, image_dir):
        code, _, err = _run(capsys, ["evaluate", "--model", "/no/such.maed",
                                     "--data", str(image_dir)])
        assert code == 1
        assert "error:" in err


class TestExport:
    def test_reexport_preserves_accuracy(self, capsys, train_dir, image_dir, tmp_path):
        copied = tmp_path / "copy.maed"
        code, out, _ = _run(capsys, ["export",
                                     "--model", str(train_dir / "model.maed"),
                                     "--out", str(copied),
                                     "--model-version", "2-rc1"])
        assert code == 0
        assert json.loads(out)["model_version"] == "2-rc1"

        before = json.loads(_run(capsys, [
            "evaluate", "--model", str(train_dir / "model.maed"),
            "--data", str(image_dir)])[1])
        after = json.loads(_run(capsys, [
            "evaluate", "--model", str(copied), "--data", str(image_dir)])[1])
        assert after["accuracy"] == before["accuracy"]
        assert after["model_version"] == "2-rc1"

    def test_threshold_override_stored(self, capsys, train_dir, tmp_path):
        out_path = tmp_path / "thr.maed"
        code, out, _ = _run(capsys, ["export",
                                     "--model", str(train_dir / "model.maed"),
                                     "--out", str(out_path),
                                     "--threshold", "0.7"])
        assert code == 0
        assert json.loads(out)["threshold"] == 0.7
        code, dumped, _ = _run(capsys, ["dump", "--model", str(out_path)])
        assert "threshold: 0.7" in dumped


class TestDump:
    def test_prints_structure(self, capsys, train_dir):
        code, out, _ = _run(capsys, ["dump", "--model",
                                     str(train_dir / "model.maed")])
        assert code == 0
        assert "magic: MAED" in out
        assert "input_shape: (16, 16, 3)" in out
        assert "crc32:" in out and "ok" in out


class TestSynth:
    def test_writes_expected_file_tree(self, capsys, tmp_path):
        out = tmp_path / "ds"
        code, stdout, _ = _run(capsys, ["synth", "--out", str(out),
                                        "--n-per-class", "5",
                                        "--image-size", "16", "--seed", "1"])
        assert code == 0
        doc = json.loads(stdout)
        assert doc["written"] == 10
        assert sum(doc["classes"].values()) == 10
        assert len(list((out / "aegypti").glob("*.png"))) == 5
        assert len(list((out / "albopictus").glob("*.png"))) == 5


class TestUsageErrors:
    @pytest.mark.parametrize("argv", [
        ["train", "--synthetic", "0", "--out", "x"],
        ["train", "--synthetic", "5", "--epochs", "0", "--out", "x"],
        ["train", "--synthetic", "5", "--image-size", "big", "--out", "x"],
        ["train", "--synthetic", "5", "--split", "0.5,0.5", "--out", "x"],
        ["train", "--out", "x"],  # no data source
        ["serve", "--model", "m.maed", "--bind", "nocolon"],
        ["evaluate", "--model", "m.maed"],  # missing --data
        ["frobnicate"],
    ])
    def test_exit_code_2(self, capsys, argv):
        with pytest.raises(SystemExit) as exc:
            main(argv)
        assert exc.value.code == 2


class TestModuleEntry:
    def test_runs_as_module(self):
        proc = subprocess.run([sys.executable, "-m", "aedesnet.cli", "--help"],
                              capture_output=True, text=True)
        assert proc.returncode == 0
        assert "train" in proc.stdout and "serve" in proc.stdout
