"""CLI contract: flags, exit codes, artifacts, and byte-reproducibility."""

import numpy as np
import pytest

from edgescout.cli import build_parser, main
from edgescout.pgm import read_pgm
from edgescout.sweep import read_csv

from _synth import write_surrogate_mnist

TINY = [
    "--data", "noise", "--noise-pixels", "16",
    "--depth", "3", "--widths", "16,16,16,10",
    "--train-images", "400", "--sample-size", "30", "--seed", "3",
]


def run(args):
    return main([str(a) for a in args])


class TestHelp:
    def test_top_level_lists_subcommands(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run(["--help"])
        assert exc.value.code == 0
        out = capsys.readouterr().out
        for name in ("predict", "sweep", "validate", "bench", "meanfield", "reconstruct"):
            assert name in out

    @pytest.mark.parametrize("command", ["predict", "sweep", "bench", "reconstruct"])
    def test_flags_documented_with_defaults(self, capsys, command):
        with pytest.raises(SystemExit):
            run([command, "--help"])
        out = capsys.readouterr().out
        for flag in ("--sigma-w2" if command != "sweep" else "--w2-range",
                     "--data", "--seed", "--out", "--batch-size"):
            assert flag in out
        assert "default" in out  # argparse defaults formatter active


class TestExitCodes:
    def test_bad_arguments_exit_2(self):
        with pytest.raises(SystemExit) as exc:
            run(["predict", "--entropy", "bogus"])
        assert exc.value.code == 2

    def test_missing_data_dir_exit_3(self, tmp_path, monkeypatch):
        monkeypatch.delenv("EDGESCOUT_DATA_DIR", raising=False)
        code = run(["predict", "--data", "mnist", "--out", tmp_path / "o"])
        assert code == 3

    def test_missing_files_exit_3(self, tmp_path):
        code = run([
            "predict", "--data", "mnist", "--data-dir", tmp_path,
            "--out", tmp_path / "o",
        ])
        assert code == 3

    def test_numerical_failure_exit_4(self, tmp_path):
        code = run([
            "predict", *TINY, "--lr", "1e300", "--out", tmp_path / "o",
        ])
        assert code == 4

    def test_env_var_fallback(self, tmp_path, monkeypatch):
        write_surrogate_mnist(tmp_path, n_train=80, n_test=40, seed=1)
        monkeypatch.setenv("EDGESCOUT_DATA_DIR", str(tmp_path))
        code = run([
            "predict", "--data", "mnist", "--depth", "2",
            "--widths", "784,32,32", "--train-images", "80",
            "--sample-size", "20", "--out", tmp_path / "o",
        ])
        assert code == 0


class TestPredict:
    def test_writes_curve_and_verdict(self, tmp_path, capsys):
        out = tmp_path / "o"
        assert run(["predict", *TINY, "--out", out]) == 0
        verdict = (out / "verdict.txt").read_text()
        assert verdict.startswith(("TRAINABLE", "UNTRAINABLE"))
        printed = capsys.readouterr().out
        assert printed.strip().splitlines()[-1].startswith(
            ("TRAINABLE", "UNTRAINABLE")
        )
        rows = read_csv(out / "curve.csv")
        assert len(rows) == 3  # one per layer
        assert all(r["sigma_w_sq"] == 1.76 for r in rows)

    def test_byte_identical_outputs_across_runs(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert run(["predict", *TINY, "--out", out1]) == 0
        assert run(["predict", *TINY, "--out", out2]) == 0
        # the schema-required wall_time_s column is the one nondeterministic
        # field; every other byte must match
        strip = lambda p: [
            ",".join(line.split(",")[:-1])
            for line in (p / "curve.csv").read_text().splitlines()
        ]
        assert strip(out1) == strip(out2)
        assert (out1 / "verdict.txt").read_bytes() == (out2 / "verdict.txt").read_bytes()


class TestSweepCommand:
    def test_writes_csv_and_heatmaps(self, tmp_path):
        out = tmp_path / "o"
        code = run([
            "sweep", *TINY, "--w2-range", "0.3,1.8",
            "--slice-b2", "0.05", "--seeds-per-cell", "1", "--out", out,
        ])
        assert code == 0
        rows = read_csv(out / "sweep.csv")
        assert len(rows) == 2 * 1 * 3
        gray, _ = read_pgm(out / "cutoff.pgm")
        assert gray.shape == (1, 2)
        gray, _ = read_pgm(out / "entropy.pgm")
        assert gray.shape == (3, 2)

    def test_range_syntax(self, tmp_path):
        out = tmp_path / "o"
        code = run([
            "sweep", *TINY, "--w2-range", "0.5:1.5:0.5",
            "--seeds-per-cell", "1", "--out", out,
        ])
        assert code == 0
        values = sorted({r["sigma_w_sq"] for r in read_csv(out / "sweep.csv")})
        assert values == [0.5, 1.0, 1.5]


class TestValidateCommand:
    def test_accuracy_column_filled_for_selected_cell(self, tmp_path):
        write_surrogate_mnist(tmp_path, n_train=400, n_test=100, seed=2)
        out = tmp_path / "o"
        code = run([
            "validate", "--data", "mnist", "--data-dir", tmp_path,
            "--depth", "2", "--widths", "784,48,48",
            "--train-images", "400", "--sample-size", "30",
            "--w2-range", "0.3,1.8", "--cells", "1.8,0.05",
            "--seeds-per-cell", "1", "--epochs", "1", "--train-lr", "0.05",
            "--seed", "3", "--out", out,
        ])
        assert code == 0
        rows = read_csv(out / "sweep.csv")
        by_cell = {r["sigma_w_sq"]: r["accuracy"] for r in rows}
        assert by_cell[0.3] is None
        assert by_cell[1.8] is not None


class TestBenchCommand:
    def test_reports_table_and_csv(self, tmp_path, capsys):
        out = tmp_path / "o"
        code = run(["bench", *TINY, "--repeats", "1", "--out", out])
        assert code == 0
        printed = capsys.readouterr().out
        assert "Single epoch [s]" in printed
        assert "Prediction [s]" in printed
        assert "Single reconstruction [s]" in printed
        lines = (out / "bench.csv").read_text().strip().splitlines()
        assert lines[0] == "quantity,mean_s,std_s"
        assert len(lines) == 4


class TestMeanfieldCommand:
    def test_writes_xi_curve(self, tmp_path, capsys):
        out = tmp_path / "o"
        code = run([
            "meanfield", "--w2-range", "1.0,1.76,2.5", "--slice-b2", "0.05",
            "--out", out,
        ])
        assert code == 0
        lines = (out / "meanfield.csv").read_text().strip().splitlines()
        assert lines[0].split(",")[4] == "xi_c"
        assert len(lines) == 4
        assert "chi=1 at sigma_w_sq=1.76" in capsys.readouterr().out


class TestReconstructCommand:
    def test_writes_layer_images(self, tmp_path):
        out = tmp_path / "o"
        code = run([
            "reconstruct", *TINY, "--indices", "0,2", "--out", out,
        ])
        assert code == 0
        for idx in (0, 2):
            assert (out / f"input_i{idx}.pgm").exists()
            for ell in (1, 2, 3):
                gray, _ = read_pgm(out / f"recon_l{ell:03d}_i{idx}.pgm")
                assert gray.shape == (4, 4)  # 16 pixels

    def test_archetypes_need_trained_classifier(self, tmp_path):
        code = run([
            "reconstruct", *TINY, "--archetypes", "--out", tmp_path / "o",
        ])
        assert code == 2

    def test_archetypes_with_training_and_checkpoint(self, tmp_path):
        write_surrogate_mnist(tmp_path, n_train=400, n_test=120, seed=4)
        out = tmp_path / "o"
        ckpt = tmp_path / "clf.ckpt"
        code = run([
            "reconstruct", "--data", "mnist", "--data-dir", tmp_path,
            "--depth", "2", "--widths", "784,48,48",
            "--train-images", "400", "--sample-size", "20",
            "--train-epochs", "1", "--train-lr", "0.05",
            "--save-checkpoint", ckpt, "--archetypes",
            "--seed", "3", "--out", out,
        ])
        assert code == 0
        assert ckpt.exists()
        for k in range(10):
            gray, _ = read_pgm(out / f"archetype_{k}.pgm")
            assert gray.shape == (28, 28)
        # reuse the checkpoint without retraining
        out2 = tmp_path / "o2"
        code = run([
            "reconstruct", "--data", "mnist", "--data-dir", tmp_path,
            "--train-images", "400", "--checkpoint", ckpt,
            "--archetypes", "--seed", "3", "--out", out2,
        ])
        assert code == 0
        assert (out2 / "archetype_0.pgm").exists()


class TestConfigFile:
    def test_config_sets_defaults_flags_override(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            "[predict]\n"
            "data = noise\n"
            "noise-pixels = 16\n"
            "depth = 3\n"
            "widths = 16,16,16,10\n"
            "train-images = 400\n"
            "sample-size = 30\n"
            "sigma-w2 = 0.3\n"
            f"out = {tmp_path / 'cfg_out'}\n"
        )
        assert run(["--config", cfg, "predict", "--seed", "3"]) == 0
        assert (tmp_path / "cfg_out" / "verdict.txt").exists()
        text = (tmp_path / "cfg_out" / "verdict.txt").read_text()
        assert "sigma_w_sq=0.3" in text
        # explicit flag beats the config value
        assert run([
            "--config", cfg, "predict", "--seed", "3",
            "--sigma-w2", "1.76", "--out", tmp_path / "cfg_out2",
        ]) == 0
        text = (tmp_path / "cfg_out2" / "verdict.txt").read_text()
        assert "sigma_w_sq=1.76" in text

    def test_missing_config_rejected(self):
        assert run(["--config", "/nonexistent.cfg", "predict", *TINY]) == 2

    def test_unknown_config_key_rejected(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("[predict]\nnot-a-flag = 1\n")
        assert run(["--config", cfg, "predict", *TINY]) == 2


def test_parser_builds_without_side_effects():
    parser = build_parser()
    assert parser.prog == "edgescout"
