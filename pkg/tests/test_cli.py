import json
import shutil
import subprocess
import sys

import pytest

from wavesel.cli import EXIT_INVALID, EXIT_MISSING_FILE, EXIT_OK, EXIT_USAGE, ConfigError, dispatch, parse_range
from wavesel.modem import CURVE_COLUMNS

GRID = ["--N", "3", "--M", "8"]


def gen(out, seed=1, extra=()):
    return dispatch(["gen-dataset", "--out", str(out), "--train", "6", "--test", "3", "--seed", str(seed),
                     *GRID, *extra])


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert gen(root / "data") == EXIT_OK
    assert dispatch(["train", "--data", str(root / "data"), "--epochs", "2", "--out", str(root / "m.bin")]) == EXIT_OK
    return root


class TestParsing:
    def test_range(self):
        assert parse_range("-20:30:5") == [float(x) for x in range(-20, 31, 5)]
        assert parse_range("1,2.5") == [1.0, 2.5]

    @pytest.mark.parametrize("bad", ["a:b:c", "0:10:0", "10:0:1", "x"])
    def test_bad_range(self, bad):
        with pytest.raises(ConfigError):
            parse_range(bad)


class TestGenDataset:
    def test_byte_identical(self, tmp_path):
        assert gen(tmp_path / "a") == EXIT_OK
        assert gen(tmp_path / "b") == EXIT_OK
        for name in ("manifest.json", "train.bin", "test.bin"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        assert (tmp_path / "a" / "run.log").exists()

    def test_custom_model_file(self, tmp_path):
        spec = {"name": "flat", "powers_db": [0, -3, -6, -9, -12, -15, -18], "tau_rms_ns": 50, "tau_max_ns": 400}
        (tmp_path / "flat.json").write_text(json.dumps(spec))
        assert gen(tmp_path / "d", extra=["--models", str(tmp_path / "flat.json")]) == EXIT_OK
        manifest = json.loads((tmp_path / "d" / "manifest.json").read_text())
        assert manifest["model_names"][-1] == "flat"

    def test_invalid_inputs(self, tmp_path):
        assert gen(tmp_path / "x", extra=["--models", "ETV"]) == EXIT_INVALID
        assert gen(tmp_path / "x", extra=["--snr", "1:0:1"]) == EXIT_INVALID
        assert gen(tmp_path / "x", extra=["--models", str(tmp_path / "none.json")]) == EXIT_MISSING_FILE

    def test_usage(self):
        assert dispatch(["gen-dataset"]) == EXIT_USAGE
        assert dispatch(["frobnicate"]) == EXIT_USAGE
        assert dispatch([]) == EXIT_USAGE


class TestPipeline:
    def test_train_outputs(self, trained):
        summary = json.loads((trained / "m.bin.train.json").read_text())
        assert len(summary["history"]["loss"]) == 2
        assert summary["arch"]["height"] == 4 and summary["arch"]["width"] == 8

    def test_eval(self, trained, capsys):
        out = trained / "eval.json"
        assert dispatch(["eval", "--data", str(trained / "data"), "--model", str(trained / "m.bin"),
                         "--out", str(out)]) == EXIT_OK
        report = json.loads(out.read_text())
        assert report["test_count"] == 3
        assert sum(map(sum, report["confusion"]["matrix"])) == 3
        assert set(report["policies"]["mean_mse"]) == {"switched", "always_otfs", "always_ofdm", "oracle"}
        assert "accuracy" in capsys.readouterr().out

    def test_sweep(self, trained):
        out = trained / "curve.csv"
        code = dispatch(["sweep", "--model", "eva", "--speed", "250", "--qam", "16", "--snr", "0,10",
                         "--classifier", str(trained / "m.bin"), "--draws", "2", "--out", str(out), *GRID])
        assert code == EXIT_OK
        lines = out.read_text().splitlines()
        assert lines[0] == ",".join(CURVE_COLUMNS)
        assert len(lines) == 3
        assert json.loads((trained / "curve.csv.config.json").read_text())["speed_kmh"] == 250

    def test_sweep_bad_qam(self, trained):
        code = dispatch(["sweep", "--model", "eva", "--speed", "250", "--qam", "8", "--classifier",
                         str(trained / "m.bin"), "--out", str(trained / "c.csv"), *GRID])
        assert code == EXIT_INVALID

    def test_inspect(self, trained, capsys):
        assert dispatch(["inspect", str(trained / "data")]) == EXIT_OK
        assert json.loads(capsys.readouterr().out)["train"]["count"] == 6

    def test_missing_files(self, trained, tmp_path):
        assert dispatch(["inspect", str(tmp_path / "nope")]) == EXIT_MISSING_FILE
        assert dispatch(["eval", "--data", str(trained / "data"), "--model", str(tmp_path / "no.bin")]) == EXIT_MISSING_FILE

    def test_corrupt_dataset(self, trained, tmp_path):
        bad = tmp_path / "bad"
        shutil.copytree(trained / "data", bad)
        buf = bytearray((bad / "test.bin").read_bytes())
        buf[20] ^= 1
        (bad / "test.bin").write_bytes(bytes(buf))
        assert dispatch(["eval", "--data", str(bad), "--model", str(trained / "m.bin")]) == EXIT_INVALID


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "wavesel.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip()
