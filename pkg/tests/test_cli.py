"""Exit codes and file outputs of the command-line interface."""

from __future__ import annotations

import shutil
import subprocess

import numpy as np
import pytest

from treecov import (
    CovMatrix,
    LinearModel,
    generate_ground_truth,
    generate_prior,
    read_matrix_csv,
    sample_observations,
    write_matrix_csv,
)
from treecov.cli import main


@pytest.fixture
def sigma_csv(tmp_path):
    sigma = generate_ground_truth(4, seed=21)
    path = tmp_path / "sigma.csv"
    write_matrix_csv(sigma.entries, path)
    return path


@pytest.fixture
def em_inputs(tmp_path):
    sigma = generate_ground_truth(3, seed=22)
    sigma0 = generate_prior(sigma, 0.5, seed=23)
    h = np.random.default_rng(24).standard_normal((2, 3))
    model = LinearModel(h, CovMatrix(0.2 * np.eye(2)))
    obs = sample_observations(model, sigma, 50, seed=25)
    paths = {}
    for name, matrix in [
        ("sigma0", sigma0.entries),
        ("h", h),
        ("d", model.d.entries),
        ("obs", obs.samples),
    ]:
        paths[name] = tmp_path / f"{name}.csv"
        write_matrix_csv(matrix, paths[name])
    return paths


class TestChowliuCommand:
    def test_happy_path_writes_outputs(self, tmp_path, sigma_csv, capsys):
        cov_out = tmp_path / "tree.csv"
        edges_out = tmp_path / "edges.csv"
        code = main(
            ["chowliu", str(sigma_csv), "--cov_out", str(cov_out), "--edges_out", str(edges_out)]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "kl = " in out and "edges = " in out
        fitted = CovMatrix(read_matrix_csv(cov_out))
        assert np.array_equal(np.diag(fitted.entries), np.diag(read_matrix_csv(sigma_csv)))
        edge_lines = edges_out.read_text().strip().split("\n")
        assert len(edge_lines) == 3
        for line in edge_lines:
            u, v = line.split(",")
            assert 0 <= int(u) < int(v) < 4

    def test_missing_input_is_an_io_error(self, tmp_path):
        assert main(["chowliu", str(tmp_path / "absent.csv")]) == 3

    def test_indefinite_input_is_a_config_error(self, tmp_path, capsys):
        path = tmp_path / "bad.csv"
        write_matrix_csv(np.array([[1.0, 2.0], [2.0, 1.0]]), path)
        assert main(["chowliu", str(path)]) == 1
        assert "config error" in capsys.readouterr().err


class TestEmCommand:
    def test_happy_path_writes_trace(self, tmp_path, em_inputs, capsys):
        sigma_out = tmp_path / "fit.csv"
        trace_out = tmp_path / "trace.csv"
        code = main(
            [
                "em",
                "--sigma0", str(em_inputs["sigma0"]),
                "--h", str(em_inputs["h"]),
                "--d", str(em_inputs["d"]),
                "--obs", str(em_inputs["obs"]),
                "--l_max", "6",
                "--epsilon", "1e-9",
                "--sigma_out", str(sigma_out),
                "--trace_out", str(trace_out),
            ]
        )
        assert code == 0
        assert "stopped after" in capsys.readouterr().out
        CovMatrix(read_matrix_csv(sigma_out))
        lines = trace_out.read_text().strip().split("\n")
        assert lines[0] == "iteration,obs_kl,step_kl"
        assert 2 <= len(lines) <= 7
        assert lines[1].startswith("1,") and lines[1].endswith(",inf")
        for lineno, line in enumerate(lines[1:], 1):
            cells = line.split(",")
            assert int(cells[0]) == lineno
            assert float(cells[1]) >= 0.0

    def test_nonpositive_epsilon_is_a_config_error(self, em_inputs):
        code = main(
            [
                "em",
                "--sigma0", str(em_inputs["sigma0"]),
                "--h", str(em_inputs["h"]),
                "--d", str(em_inputs["d"]),
                "--obs", str(em_inputs["obs"]),
                "--epsilon", "0",
            ]
        )
        assert code == 1

    def test_unparseable_flag_is_a_config_error(self, em_inputs):
        code = main(
            [
                "em",
                "--sigma0", str(em_inputs["sigma0"]),
                "--h", str(em_inputs["h"]),
                "--d", str(em_inputs["d"]),
                "--obs", str(em_inputs["obs"]),
                "--epsilon", "abc",
            ]
        )
        assert code == 1

    def test_missing_required_flag_is_a_config_error(self, em_inputs):
        assert main(["em", "--sigma0", str(em_inputs["sigma0"])]) == 1


def write_sweep_config(tmp_path, **overrides):
    values = dict(
        p=4, m_values="2,3", r=40, trials=2, seed=5, l_max=6,
        output=str(tmp_path / "results.txt"),
    )
    values.update(overrides)
    path = tmp_path / "sweep.cfg"
    path.write_text("".join(f"{k} = {v}\n" for k, v in values.items()))
    return path


class TestSweepCommand:
    def test_happy_path(self, tmp_path, capsys):
        config = write_sweep_config(tmp_path)
        assert main(["sweep", "--config", str(config)]) == 0
        out = capsys.readouterr().out
        assert "m=2:" in out and "m=3:" in out and "wrote" in out
        doc = (tmp_path / "results.txt").read_text()
        assert doc.startswith("[meta]")
        csv_lines = (tmp_path / "results.csv").read_text().strip().split("\n")
        assert len(csv_lines) == 1 + 4

    def test_flag_overrides_config_value(self, tmp_path):
        config = write_sweep_config(tmp_path)
        out = tmp_path / "override.txt"
        code = main(
            ["sweep", "--config", str(config), "--trials", "1", "--output", str(out)]
        )
        assert code == 0
        csv_lines = out.with_suffix(".csv").read_text().strip().split("\n")
        assert len(csv_lines) == 1 + 2

    def test_flags_alone_suffice(self, tmp_path):
        out = tmp_path / "flagged.txt"
        code = main(
            [
                "sweep", "--p", "4", "--m_values", "2", "--r", "40",
                "--trials", "1", "--seed", "5", "--output", str(out),
            ]
        )
        assert code == 0
        assert out.exists()

    def test_unknown_config_key_is_a_config_error(self, tmp_path, capsys):
        path = tmp_path / "sweep.cfg"
        path.write_text("p = 4\nm_values = 2\nbogus = 1\n")
        assert main(["sweep", "--config", str(path)]) == 1
        assert "config error" in capsys.readouterr().err

    def test_bad_flag_value_is_a_config_error(self, tmp_path):
        config = write_sweep_config(tmp_path)
        assert main(["sweep", "--config", str(config), "--p", "four"]) == 1

    def test_missing_config_file_is_an_io_error(self, tmp_path):
        assert main(["sweep", "--config", str(tmp_path / "absent.cfg")]) == 3

    def test_no_parameters_is_a_config_error(self):
        assert main(["sweep"]) == 1

    def test_all_trials_failing_is_a_numerical_error(self, tmp_path, capsys):
        # One sample per trial cannot produce a positive definite empirical
        # covariance, so every trial fails.
        config = write_sweep_config(tmp_path, r=1, m_values="2", trials=2)
        assert main(["sweep", "--config", str(config)]) == 2
        assert "numerical failure" in capsys.readouterr().err


class TestParserBehavior:
    def test_unknown_subcommand_is_a_config_error(self, capsys):
        assert main(["bogus"]) == 1
        assert "config error" in capsys.readouterr().err

    def test_no_subcommand_is_a_config_error(self):
        assert main([]) == 1

    def test_help_exits_zero(self, capsys):
        with pytest.raises(SystemExit) as excinfo:
            main(["--help"])
        assert excinfo.value.code == 0
        assert "sweep" in capsys.readouterr().out

    def test_console_script_is_installed(self):
        exe = shutil.which("treecov")
        if exe is None:
            pytest.skip("console script not on PATH")
        proc = subprocess.run([exe, "--help"], capture_output=True, text=True)
        assert proc.returncode == 0
        assert "chowliu" in proc.stdout
