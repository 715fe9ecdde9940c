import json
import math

import numpy as np
import pytest

from kawahydro.cli import main

LOG_2PI = math.log(2 * math.pi)


def test_help_lists_subcommands(capsys):
    assert main(["--help"]) == 0
    out = capsys.readouterr().out
    for sub in ("free-energy", "cramer", "covariance", "gap", "simulate", "hydrolimit"):
        assert sub in out


def test_subcommand_help_lists_flags(capsys):
    assert main(["simulate", "--help"]) == 0
    out = capsys.readouterr().out
    for flag in ("--config", "--out", "--seed", "--threads", "--tol", "--N", "--M"):
        assert flag in out


def test_missing_config_exit2(tmp_path, capsys):
    code = main(["free-energy", "--config", str(tmp_path / "nope.cfg"),
                 "--out", str(tmp_path / "o")])
    assert code == 2
    assert "config not found" in capsys.readouterr().err


def test_unknown_config_key_rejected(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("[potential]\nkind = gaussian\nbogus_key = 1\n")
    code = main(["free-energy", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert code == 2
    assert "bogus_key" in capsys.readouterr().err


def test_k_zero_exit2(tmp_path, capsys):
    code = main(["free-energy", "--k", "0", "--out", str(tmp_path / "o")])
    assert code == 2


def test_free_energy_gaussian_closed_form(tmp_path):
    out = tmp_path / "g1"
    cfg = tmp_path / "gaussian.cfg"
    cfg.write_text("[grid]\nm_min = -1.0\nm_max = 1.0\nm_step = 0.25\nk = 2\n")
    code = main(["free-energy", "--config", str(cfg), "--out", str(out), "--pot",
                 "gaussian", "--tol", "1e-9"])
    assert code == 0
    for name in ("phi_star.csv", "phi_K.csv", "psi_K.csv", "phi_tilde.csv",
                 "manifest.json"):
        assert (out / name).exists()
    data = np.loadtxt(out / "psi_K.csv", delimiter=",", skiprows=1)
    m = data[:, 0]
    expected = 0.5 * m**2 - (2 - 1) / (2 * 2) * LOG_2PI
    np.testing.assert_allclose(data[:, 1], expected, atol=1e-8)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["grid"]["k"] == "2"


def test_gap_gaussian_prints_unity(tmp_path, capsys):
    code = main(["gap", "--K", "2", "--pot", "gaussian", "--out", str(tmp_path / "o")])
    assert code == 0
    out = capsys.readouterr().out
    assert "PASS" in out and "gap" in out
    data = np.loadtxt(tmp_path / "o" / "gaps.csv", delimiter=",", skiprows=1,
                      usecols=(3,))
    assert np.all(np.abs(data - 1.0) < 1e-4)


def test_simulate_deterministic_rerun(tmp_path):
    args = ["simulate", "--N", "32", "--M", "4", "--T", "0.02", "--traj", "6",
            "--seed", "1"]
    assert main(args + ["--out", str(tmp_path / "r1")]) == 0
    assert main(args + ["--out", str(tmp_path / "r2")]) == 0
    s1 = (tmp_path / "r1" / "series.csv").read_bytes()
    s2 = (tmp_path / "r2" / "series.csv").read_bytes()
    assert s1 == s2


def test_cramer_cli_small(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("[grid]\nm_min = -1.0\nm_max = 1.0\nm_step = 0.5\n"
                   "[cramer]\nk_list = 2 4 8\n")
    code = main(["cramer", "--config", str(cfg), "--pot", "gaussian",
                 "--out", str(tmp_path / "o"), "--tol", "1e-9"])
    assert code == 0
    text = capsys.readouterr().out
    assert "PASS" in text
    assert (tmp_path / "o" / "cramer.csv").exists()


def test_hydrolimit_cli_tiny(tmp_path, capsys):
    cfg = tmp_path / "h.cfg"
    cfg.write_text("[hydrolimit]\nn_list = 16 32\ntraj = 8\nt = 0.04\n"
                   "checkpoints = 4\npde_grid = 64\n")
    code = main(["hydrolimit", "--config", str(cfg), "--pot", "gaussian",
                 "--out", str(tmp_path / "o"), "--seed", "2"])
    assert code == 0
    assert (tmp_path / "o" / "rates.json").exists()
    assert "D(N) strictly decreasing" in capsys.readouterr().out
