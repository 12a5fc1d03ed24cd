"""Tests for config parsing, the CLI verbs, and experiment output contracts."""

import json
from pathlib import Path

import numpy as np
import pytest

from wgnlink import cli, runner
from wgnlink.channel import LinkConfig
from wgnlink.config import ExperimentConfig, validate_config
from wgnlink.errors import ConfigError
from wgnlink.signals import generate_wgn_mimo, write_signal

MINIMAL = """
sweep:
  recirculations: [1]
seeds: [3]
n_samples: 120000
mi_max_symbols: 30000
"""

TINY_SWEEP = """
link:
  span_snr_db: 20.0
sweep:
  recirculations: [1, 2]
seeds: [3, 4]
n_samples: 120000
mi_max_symbols: 30000
"""


def _write(tmp_path, text, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


class TestValidateConfig:
    def test_minimal_defaults(self, tmp_path):
        cfg = validate_config(_write(tmp_path, MINIMAL))
        assert cfg.link.dispersion_coeff == 17.0
        assert cfg.link.center_wavelength == 1550.0
        assert cfg.pipeline.filter_bw == 15e9
        assert cfg.pipeline.phase_window == 200
        assert cfg.n_rings == 16
        assert cfg.sweep_axis == "recirculations"

    def test_two_sweep_axes_rejected(self, tmp_path):
        text = MINIMAL + "\n"
        text = text.replace("recirculations: [1]",
                            "recirculations: [1]\n  launch_power_dbm: [0]")
        with pytest.raises(ConfigError):
            validate_config(_write(tmp_path, text))

    def test_negative_span_rejected(self, tmp_path):
        text = "link:\n  span_length: -5\n" + MINIMAL
        with pytest.raises(ConfigError):
            validate_config(_write(tmp_path, text))

    def test_unknown_key_rejected(self, tmp_path):
        text = MINIMAL + "\nbogus_key: 1\n"
        with pytest.raises(ConfigError):
            validate_config(_write(tmp_path, text))

    def test_unknown_link_key_rejected(self, tmp_path):
        text = "link:\n  fiber_color: blue\n" + MINIMAL
        with pytest.raises(ConfigError):
            validate_config(_write(tmp_path, text))

    def test_empty_sweep_rejected(self, tmp_path):
        text = MINIMAL.replace("[1]", "[]")
        with pytest.raises(ConfigError):
            validate_config(_write(tmp_path, text))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            validate_config(tmp_path / "nope.yaml")

    def test_yaml_error_reports_line(self, tmp_path):
        with pytest.raises(ConfigError, match="line"):
            validate_config(_write(tmp_path, "sweep: [\n  bad"))

    def test_sweep_point_link_override(self):
        cfg = ExperimentConfig(sweep_axis="launch_power_dbm",
                               sweep_values=(-3.0, 0.0), seeds=(1,))
        link, n_rec = cfg.link_for(-3.0)
        assert link.launch_power_dbm == -3.0
        assert n_rec == cfg.base_recirculations


class TestCliVerbs:
    def test_validate_ok(self, tmp_path, capsys):
        rc = cli.main(["validate", "--config", _write(tmp_path, MINIMAL)])
        assert rc == 0
        assert "config OK" in capsys.readouterr().out

    def test_validate_bad_config(self, tmp_path):
        rc = cli.main(["validate", "--config",
                       _write(tmp_path, "not: a\nvalid: config")])
        assert rc == 1

    def test_missing_config_is_exit_1(self, tmp_path):
        rc = cli.main(["simulate", "--config", str(tmp_path / "missing.yaml")])
        assert rc == 1

    def test_simulate_tiny_sweep(self, tmp_path):
        out = tmp_path / "results"
        rc = cli.main(["simulate", "--config", _write(tmp_path, MINIMAL),
                       "--out", str(out)])
        assert rc == 0
        assert (out / "mi_results.csv").exists()
        assert (out / "manifest.json").exists()
        assert (out / "mdl_1.csv").exists()
        assert (out / "impulse_1.csv").exists()
        assert list(out.glob("*.svg"))

    def test_no_plots_flag(self, tmp_path):
        out = tmp_path / "results"
        rc = cli.main(["simulate", "--config", _write(tmp_path, MINIMAL),
                       "--out", str(out), "--no-plots"])
        assert rc == 0
        assert not list(out.glob("*.svg"))

    def test_seeds_override(self, tmp_path):
        out = tmp_path / "results"
        rc = cli.main(["simulate", "--config", _write(tmp_path, MINIMAL),
                       "--out", str(out), "--seeds", "7,8", "--no-plots"])
        assert rc == 0
        rows = (out / "mi_results.csv").read_text().strip().splitlines()[1:]
        seeds = {r.split(",")[5] for r in rows}
        assert seeds == {"7", "8"}

    def test_bad_seeds_exit_1(self, tmp_path):
        rc = cli.main(["simulate", "--config", _write(tmp_path, MINIMAL),
                       "--seeds", "a,b"])
        assert rc == 1

    def test_characterize_from_captures(self, tmp_path):
        sig = generate_wgn_mimo(2, 120_000, 40e9, 1.0, seed=5)
        from wgnlink.channel import run_link
        out_sig = run_link(sig, LinkConfig(span_snr_db=30.0), 1, seed=6)
        fi, fo = tmp_path / "in.bin", tmp_path / "out.bin"
        with open(fi, "wb") as f:
            write_signal(f, sig)
        with open(fo, "wb") as f:
            write_signal(f, out_sig)
        out = tmp_path / "char"
        rc = cli.main(["characterize", "--input", str(fi), "--output",
                       str(fo), "--out", str(out)])
        assert rc == 0
        assert (out / "mdl_capture.csv").exists()
        assert (out / "impulse_capture.csv").exists()

    def test_characterize_unreadable_capture_exit_2(self, tmp_path):
        bad = tmp_path / "junk.bin"
        bad.write_bytes(b"\x00" * 100)
        rc = cli.main(["characterize", "--input", str(bad), "--output",
                       str(bad), "--out", str(tmp_path / "o")])
        assert rc == 2

    def test_runtime_failure_exit_2(self, tmp_path):
        # impossible span SNR makes the pipeline alignment fail
        text = MINIMAL + "link:\n  span_snr_db: -60.0\n"
        out = tmp_path / "results"
        rc = cli.main(["simulate", "--config", _write(tmp_path, text),
                       "--out", str(out), "--no-plots"])
        assert rc == 2
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["errors"]


class TestOutputContracts:
    def test_deterministic_csv_bytes(self, tmp_path):
        cfg_path = _write(tmp_path, TINY_SWEEP)
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            rc = cli.main(["simulate", "--config", cfg_path,
                           "--out", str(out), "--no-plots"])
            assert rc == 0
            outs.append((out / "mi_results.csv").read_bytes())
        assert outs[0] == outs[1]

    def test_rows_carry_provenance(self, tmp_path):
        out = tmp_path / "results"
        cli.main(["simulate", "--config", _write(tmp_path, TINY_SWEEP),
                  "--out", str(out), "--no-plots"])
        lines = (out / "mi_results.csv").read_text().strip().splitlines()
        header = lines[0].split(",")
        for col in ("seed", "sweep_value", "tributary", "distance_km",
                    "launch_power_dbm", "bits_per_symbol", "assumed_baud",
                    "snr_db"):
            assert col in header
        # 2 sweep values x 2 seeds x 2 tributaries
        assert len(lines) - 1 == 8

    def test_plots_are_pure_functions_of_csv(self, tmp_path):
        out = tmp_path / "results"
        cli.main(["simulate", "--config", _write(tmp_path, MINIMAL),
                  "--out", str(out)])
        svgs = sorted(out.glob("*.svg"))
        assert svgs
        before = {p.name: p.read_bytes() for p in svgs}
        for p in svgs:
            p.unlink()
        runner.write_plots(out)
        after = {p.name: p.read_bytes() for p in sorted(out.glob("*.svg"))}
        assert before == after

    def test_reference_16qam_outputs(self, tmp_path):
        out = tmp_path / "results"
        rc = cli.main(["reference-16qam", "--config",
                       _write(tmp_path, MINIMAL), "--out", str(out),
                       "--no-plots"])
        assert rc == 0
        lines = (out / "mi_results_qam16.csv").read_text().splitlines()
        assert lines[1].startswith("qam16,")
        mi = float(lines[1].split(",")[7])
        assert 0.0 < mi <= 4.0

    def test_quick_flag_caps_samples(self, tmp_path):
        text = MINIMAL.replace("n_samples: 120000", "n_samples: 3000000")
        cfg = validate_config(_write(tmp_path, text))
        assert cfg.n_samples == 3_000_000

        class Args:
            out = None
            seeds = None
            quick = True
            no_plots = True
            config = str(tmp_path / "cfg.yaml")

        loaded = cli._load(Args)
        assert loaded.n_samples == cli.QUICK_SAMPLES
        assert loaded.emit_plots is False
