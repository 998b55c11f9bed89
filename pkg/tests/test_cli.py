"""
Tests for the stirlingdp command line
"""
import json
from unittest.mock import patch

import numpy as np
import pytest

from stirlingdp import io
from stirlingdp.cli import main, parse_args
from stirlingdp.errors import ConvergenceError


def _read_columns(path):
    with open(path, encoding="utf-8") as f:
        header = f.readline().strip().split(",")
    values = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {name: values[:, i] for i, name in enumerate(header)}


class TestStirlingGammaCommands:
    """Tests for the sg subcommands"""

    def test_elicit_prints_prior(self, capsys):
        """Test that sg elicit prints the elicited prior"""
        assert main(["sg", "elicit", "--ek", "3", "--b", "0.2", "--n", "149"]) == 0
        assert capsys.readouterr().out.strip() == "Sg(0.6, 0.2, 149)"

    def test_pdf_has_unit_mass(self, tmp_path):
        """Test that sg pdf writes a density with unit mass and a manifest"""
        code = main(["sg", "pdf", "--a", "5", "--b", "1", "--m", "100", "--points", "4001",
                     "--output-dir", str(tmp_path)])
        assert code == 0
        columns = _read_columns(tmp_path / "sg_pdf.csv")
        assert np.trapezoid(columns["density"], columns["alpha"]) == pytest.approx(1.0, abs=1e-4)
        manifest = io.read_json(tmp_path / "manifest.json")
        assert manifest["arguments"]["a"] == 5.0
        assert "handler" not in manifest["arguments"]

    def test_moments_summary(self, tmp_path):
        """Test that sg moments reports finite moments inside the regime"""
        assert main(["sg", "moments", "--a", "5", "--b", "1", "--m", "100", "--output-dir", str(tmp_path)]) == 0
        payload = io.read_json(tmp_path / "sg_moments.json")
        assert payload["mean_finite"] and payload["second_moment_finite"]
        assert payload["variance"] > 0

    def test_sample_summary(self, tmp_path):
        """Test that sg sample writes draws and the acceptance summary"""
        code = main(["sg", "sample", "--a", "5", "--b", "1", "--m", "100", "--count", "500",
                     "--output-dir", str(tmp_path)])
        assert code == 0
        draws = np.loadtxt(tmp_path / "sg_samples.csv", delimiter=",")
        assert draws.shape == (500,)
        assert np.all(draws > 0)
        summary = io.read_json(tmp_path / "sg_sample_summary.json")
        assert summary["sampler"] == "ratio-of-uniforms"
        assert summary["proposals"] >= 500


class TestPartitionCommands:
    """Tests for the partition subcommands"""

    def test_dp_kn_pmf(self, tmp_path):
        """Test the exact pmf of K_3 under DP(1)"""
        assert main(["partition", "kn-pmf", "--dp", "--alpha", "1", "--n", "3", "--output-dir", str(tmp_path)]) == 0
        pmf = io.read_pmf_csv(tmp_path / "kn_pmf.csv")
        assert pmf == pytest.approx([1 / 3, 1 / 2, 1 / 6])

    def test_sgp_kn_pmf_sums_to_one(self, tmp_path):
        """Test the Stirling-gamma pmf written by kn-pmf"""
        code = main(["partition", "kn-pmf", "--a", "5", "--b", "1", "--m", "30", "--n", "30",
                     "--output-dir", str(tmp_path)])
        assert code == 0
        pmf = io.read_pmf_csv(tmp_path / "kn_pmf.csv")
        assert pmf.sum() == pytest.approx(1.0, abs=1e-10)
        summary = io.read_json(tmp_path / "kn_pmf_summary.json")
        assert summary["mean"] == pytest.approx(5.0, rel=1e-6)

    def test_partition_sample(self, tmp_path):
        """Test that partition sample writes one partition per line"""
        code = main(["partition", "sample", "--alpha", "1", "--n", "12", "--count", "4",
                     "--output-dir", str(tmp_path)])
        assert code == 0
        lines = (tmp_path / "partitions.csv").read_text(encoding="utf-8").splitlines()
        assert len(lines) == 4
        assert all(len(line.split(",")) == 12 for line in lines)


class TestExitCodes:
    """Tests for error reporting and exit codes"""

    def test_invalid_parameters(self, tmp_path, capsys):
        """Test that a prior outside its domain exits with 1"""
        assert main(["sg", "moments", "--a", "1", "--b", "1", "--m", "10", "--output-dir", str(tmp_path)]) == 1
        assert "Error occurred" in capsys.readouterr().err

    def test_unknown_flag(self):
        """Test that usage errors exit with 1 instead of raising SystemExit"""
        assert main(["sg", "moments", "--bogus", "1"]) == 1

    def test_missing_required_flag(self):
        """Test that a missing required flag exits with 1"""
        assert main(["fit-mixture"]) == 1

    def test_numerical_failure(self, tmp_path):
        """Test that a numerical failure exits with 2"""
        with patch("stirlingdp.cli.moment", side_effect=ConvergenceError("quadrature did not converge")):
            code = main(["sg", "moments", "--a", "5", "--b", "1", "--m", "100", "--output-dir", str(tmp_path)])
        assert code == 2

    def test_bad_data_file(self, tmp_path, capsys):
        """Test that a malformed data file is reported with its line number"""
        data = tmp_path / "data.csv"
        data.write_text("1.0,2.0\n3.0,abc\n", encoding="utf-8")
        code = main(["fit-mixture", "--data", str(data), "--iterations", "5", "--burn-in", "1",
                     "--output-dir", str(tmp_path / "out")])
        assert code == 1
        assert f"{data}:2:" in capsys.readouterr().err

    def test_missing_data_file(self, tmp_path):
        """Test that a missing input file exits with 1"""
        assert main(["fit-mixture", "--data", str(tmp_path / "absent.csv")]) == 1


class TestConfigFiles:
    """Tests for --config handling"""

    def test_config_supplies_required_flags(self, tmp_path):
        """Test that a config file satisfies required flags and explicit flags win"""
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"a": 5.0, "b": 1.0, "m": 100}), encoding="utf-8")
        args = parse_args(["sg", "moments", "--config", str(config), "--m", "50"])
        assert (args.a, args.b, args.m) == (5.0, 1.0, 50)

    def test_unknown_config_key(self, tmp_path):
        """Test that unknown keys in a config file exit with 1"""
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"arguments": {"bogus": 1}}), encoding="utf-8")
        assert main(["sg", "moments", "--config", str(config)]) == 1

    def test_invalid_json(self, tmp_path, capsys):
        """Test that a malformed config file exits with 1"""
        config = tmp_path / "config.json"
        config.write_text("{\n  \"a\": \n", encoding="utf-8")
        assert main(["sg", "moments", "--config", str(config)]) == 1
        assert "invalid JSON" in capsys.readouterr().err


@pytest.mark.integration
class TestEndToEnd:
    """End-to-end runs of simulate and fit"""

    def test_mixture_run_repeats_from_manifest(self, tmp_path):
        """Test that rerunning from a manifest reproduces the trace byte for byte"""
        data_dir, first, second = tmp_path / "data", tmp_path / "first", tmp_path / "second"
        assert main(["simulate", "mixture", "--n", "30", "--output-dir", str(data_dir)]) == 0
        data = np.loadtxt(data_dir / "mixture_data.csv", delimiter=",")
        assert data.shape == (30, 2)

        code = main(["fit-mixture", "--data", str(data_dir / "mixture_data.csv"), "--iterations", "20",
                     "--burn-in", "5", "--log-every", "0", "--output-dir", str(first)])
        assert code == 0
        trace = _read_columns(first / "trace_chain1.csv")
        assert trace["iteration"].size == 15
        assert np.all(trace["alpha"] > 0)
        assert io.read_pmf_csv(first / "k_posterior.csv").sum() == pytest.approx(1.0)

        code = main(["fit-mixture", "--config", str(first / "manifest.json"), "--output-dir", str(second)])
        assert code == 0
        assert (first / "trace_chain1.csv").read_bytes() == (second / "trace_chain1.csv").read_bytes()

    def test_network_run(self, tmp_path):
        """Test simulate networks followed by fit-sbm with a reference partition"""
        data_dir, out = tmp_path / "data", tmp_path / "out"
        assert main(["simulate", "networks", "--n", "20", "--output-dir", str(data_dir)]) == 0
        networks = sorted(str(path) for path in data_dir.glob("network_[0-9]*.csv"))
        assert len(networks) == 6

        code = main(["fit-sbm", "--networks", *networks, "--truth", str(data_dir / "network_truth.csv"),
                     "--prior", "pooled:3,0.3", "--iterations", "10", "--burn-in", "2", "--log-every", "0",
                     "--output-dir", str(out)])
        assert code == 0
        summary = io.read_json(out / "summary.json")
        assert summary["prior"] == "pooled:3.0,0.3,20"
        assert len(summary["k_mode"]) == 6
        assert -1.0 <= summary["overall_mean_ari"] <= 1.0
        histograms = _read_columns(out / "k_histograms.csv")
        assert histograms["k"].size == 20
