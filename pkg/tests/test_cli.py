import subprocess
import sys

import numpy as np
import pytest

from conftest import synthetic_photo, write_corpus
from xstw.cli import main
from xstw.pixel_io import load_image
from xstw.weights import default_table, parse_config, table_to_config


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture
def sample_ppm(tmp_path):
    rng = np.random.default_rng(600)
    [path] = write_corpus(tmp_path / "img", [synthetic_photo(rng, 64, 32)])
    return path


@pytest.fixture
def spec_file(tmp_path):
    rng = np.random.default_rng(601)
    write_corpus(
        tmp_path / "corpus",
        [synthetic_photo(rng, 64, 32, color=False) for _ in range(2)],
    )
    spec = tmp_path / "run.spec"
    spec.write_text(
        "metric = psnr\n"
        "bpp = 1.5\n"
        f"corpus = {tmp_path / 'corpus'}\n"
        "seed = 7\n"
        "evals = 29\n"
    )
    return spec


class TestEncodeDecode:
    def test_lossless_roundtrip(self, capsys, tmp_path, sample_ppm):
        out = tmp_path / "img.xs"
        back = tmp_path / "back.ppm"
        code, stdout, _ = run_cli(
            capsys, "encode", "--input", sample_ppm, "--output", str(out), "--bpp", "16"
        )
        assert code == 0
        achieved = float(stdout.strip())
        assert 0 < achieved <= 16.0
        code, _, _ = run_cli(capsys, "decode", "--input", str(out), "--output", str(back))
        assert code == 0
        assert load_image(back) == load_image(sample_ppm)

    def test_missing_bpp_exits_2(self, tmp_path, sample_ppm):
        with pytest.raises(SystemExit) as excinfo:
            main(["encode", "--input", sample_ppm, "--output", str(tmp_path / "o.xs")])
        assert excinfo.value.code == 2

    def test_show_weights_parses(self, capsys, tmp_path, sample_ppm):
        out = tmp_path / "img.xs"
        run_cli(capsys, "encode", "--input", sample_ppm, "--output", str(out), "--bpp", "2")
        code, stdout, _ = run_cli(
            capsys,
            "decode",
            "--input",
            str(out),
            "--output",
            str(tmp_path / "b.ppm"),
            "--show-weights",
        )
        assert code == 0
        assert parse_config(stdout) == default_table()

    def test_corrupt_stream_exits_5(self, capsys, tmp_path, sample_ppm):
        out = tmp_path / "img.xs"
        run_cli(capsys, "encode", "--input", sample_ppm, "--output", str(out), "--bpp", "2")
        raw = bytearray(out.read_bytes())
        raw[0] ^= 0xFF
        out.write_bytes(bytes(raw))
        code, _, err = run_cli(
            capsys, "decode", "--input", str(out), "--output", str(tmp_path / "b.ppm")
        )
        assert code == 5
        assert "magic" in err

    def test_infeasible_budget_exits_4(self, capsys, tmp_path, sample_ppm):
        code, _, err = run_cli(
            capsys,
            "encode",
            "--input",
            sample_ppm,
            "--output",
            str(tmp_path / "o.xs"),
            "--bpp",
            "0.02",
        )
        assert code == 4
        assert "infeasible" in err

    def test_missing_input_exits_3(self, capsys, tmp_path):
        code, _, _ = run_cli(
            capsys,
            "encode",
            "--input",
            str(tmp_path / "nope.ppm"),
            "--output",
            str(tmp_path / "o.xs"),
            "--bpp",
            "2",
        )
        assert code == 3

    def test_decode_fresh_process(self, tmp_path, sample_ppm):
        # decoder ignorance: a separate process sees only the bytes
        out = tmp_path / "img.xs"
        back = tmp_path / "back.ppm"
        subprocess.run(
            [
                sys.executable,
                "-m",
                "xstw.cli",
                "encode",
                "--input",
                sample_ppm,
                "--output",
                str(out),
                "--bpp",
                "16",
            ],
            check=True,
            capture_output=True,
        )
        result = subprocess.run(
            [
                sys.executable,
                "-m",
                "xstw.cli",
                "decode",
                "--input",
                str(out),
                "--output",
                str(back),
            ],
            capture_output=True,
        )
        assert result.returncode == 0
        assert load_image(back) == load_image(sample_ppm)


class TestOptimize:
    def test_run_and_outputs(self, capsys, tmp_path, spec_file):
        out = tmp_path / "run"
        code, stdout, _ = run_cli(
            capsys, "optimize", "--spec", str(spec_file), "--out", str(out)
        )
        assert code == 0
        lines = stdout.splitlines()
        assert lines[0].startswith("best_loss ")
        float(lines[0].split()[1])
        assert (out / "history.csv").exists()
        assert (out / "top10" / "rank01.weights").exists()

    def test_deterministic_history(self, capsys, tmp_path, spec_file):
        a, b = tmp_path / "a", tmp_path / "b"
        run_cli(capsys, "optimize", "--spec", str(spec_file), "--out", str(a))
        run_cli(capsys, "optimize", "--spec", str(spec_file), "--out", str(b))
        assert (a / "history.csv").read_bytes() == (b / "history.csv").read_bytes()

    def test_threads_do_not_change_history(self, capsys, tmp_path, spec_file):
        a, b = tmp_path / "t1", tmp_path / "t8"
        run_cli(capsys, "optimize", "--spec", str(spec_file), "--out", str(a), "--threads", "1")
        run_cli(capsys, "optimize", "--spec", str(spec_file), "--out", str(b), "--threads", "8")
        assert (a / "history.csv").read_bytes() == (b / "history.csv").read_bytes()

    def test_empty_corpus_exits_6(self, capsys, tmp_path):
        (tmp_path / "empty").mkdir()
        spec = tmp_path / "bad.spec"
        spec.write_text(f"metric = psnr\nbpp = 1\ncorpus = {tmp_path / 'empty'}\n")
        code, _, err = run_cli(
            capsys, "optimize", "--spec", str(spec), "--out", str(tmp_path / "r")
        )
        assert code == 6


class TestEvaluate:
    def test_psnr_identity_prints_inf(self, capsys, tmp_path):
        rng = np.random.default_rng(602)
        write_corpus(tmp_path / "c", [synthetic_photo(rng, 64, 32, color=False)])
        code, stdout, _ = run_cli(
            capsys,
            "evaluate",
            "--metric",
            "psnr",
            "--corpus",
            str(tmp_path / "c"),
            "--bpp",
            "16",
        )
        assert code == 0
        assert stdout.strip() == "inf"

    def test_six_decimal_format(self, capsys, tmp_path):
        rng = np.random.default_rng(603)
        write_corpus(tmp_path / "c", [synthetic_photo(rng, 64, 32, color=False)])
        code, stdout, _ = run_cli(
            capsys,
            "evaluate",
            "--metric",
            "psnr",
            "--corpus",
            str(tmp_path / "c"),
            "--bpp",
            "1.5",
        )
        assert code == 0
        value = stdout.strip()
        assert len(value.split(".")[1]) == 6

    def test_unknown_metric_exits_2(self, tmp_path):
        with pytest.raises(SystemExit) as excinfo:
            main(
                [
                    "evaluate",
                    "--metric",
                    "vmaf",
                    "--corpus",
                    str(tmp_path),
                    "--bpp",
                    "1",
                ]
            )
        assert excinfo.value.code == 2

    def test_iou_lossless_scores_one(self, capsys, tmp_path):
        rng = np.random.default_rng(604)
        from xstw.pixel_io import RasterImage

        labels = (rng.integers(0, 3, (32, 64)) * 80).astype(np.uint8)
        write_corpus(tmp_path / "maps", [RasterImage(labels)])
        code, stdout, _ = run_cli(
            capsys,
            "evaluate",
            "--metric",
            "iou",
            "--corpus",
            str(tmp_path / "maps"),
            "--labels",
            str(tmp_path / "maps"),
            "--bpp",
            "16",
        )
        assert code == 0
        assert stdout.strip() == "1.000000"

    def test_iou_without_labels_exits_6(self, capsys, tmp_path):
        rng = np.random.default_rng(605)
        write_corpus(tmp_path / "c", [synthetic_photo(rng, 64, 32, color=False)])
        code, _, _ = run_cli(
            capsys,
            "evaluate",
            "--metric",
            "iou",
            "--corpus",
            str(tmp_path / "c"),
            "--bpp",
            "2",
        )
        assert code == 6


class TestInterpolate:
    def test_two_targets_two_rows(self, capsys, tmp_path, spec_file):
        runs = []
        for bpp, name in ((1.0, "r1"), (3.0, "r3")):
            spec = tmp_path / f"{name}.spec"
            text = spec_file.read_text().replace("bpp = 1.5", f"bpp = {bpp}")
            spec.write_text(text)
            out = tmp_path / name
            run_cli(capsys, "optimize", "--spec", str(spec), "--out", str(out))
            runs.append(str(out))
        out = tmp_path / "interp"
        code, stdout, _ = run_cli(
            capsys,
            "interpolate",
            "--anchors",
            *runs,
            "--bpp",
            "2.0,4.0",
            "--spec",
            str(spec_file),
            "--out",
            str(out),
        )
        assert code == 0
        rows = (out / "interpolation.csv").read_text().splitlines()
        assert rows[0] == "bpp,loss"
        assert len(rows) == 3
        assert (out / "bpp2.weights").exists()
        assert (out / "bpp4.weights").exists()

    def test_no_anchors_exits_6(self, capsys, tmp_path, spec_file):
        code, _, _ = run_cli(
            capsys,
            "interpolate",
            "--anchors",
            str(tmp_path / "missing"),
            "--bpp",
            "2.0",
            "--spec",
            str(spec_file),
            "--out",
            str(tmp_path / "i"),
        )
        assert code == 6


class TestDefaultWeights:
    def test_prints_config(self, capsys):
        code, stdout, _ = run_cli(capsys, "default-weights")
        assert code == 0
        assert parse_config(stdout) == default_table()

    def test_writes_file(self, capsys, tmp_path):
        out = tmp_path / "w.txt"
        code, _, _ = run_cli(capsys, "default-weights", "--output", str(out))
        assert code == 0
        assert parse_config(out.read_text()) == default_table()
        assert out.read_text() == table_to_config(default_table())
