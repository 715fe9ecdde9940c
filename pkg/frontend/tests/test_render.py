"""Frontend tests: render every figure kind from run directories produced by
the simulator CLI (the only coupling is the persisted file interface)."""

import hashlib
import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from kawahydro_plots import FigureRequest, render
from kawahydro_plots.cli import main as plots_main

LOG_2PI = math.log(2 * math.pi)


def run_cli(*args):
    proc = subprocess.run([sys.executable, "-m", "kawahydro.cli", *args],
                          capture_output=True, text=True)
    assert proc.returncode == 0, f"CLI failed: {proc.stderr}\n{proc.stdout}"


@pytest.fixture(scope="session")
def gaussian_runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("runs")
    cfg = base / "gaussian.cfg"
    cfg.write_text(
        "[grid]\nm_min = -1.0\nm_max = 1.0\nm_step = 0.25\nk = 4\n"
        "[cramer]\nk_list = 2 4 8\n"
        "[hydrolimit]\nn_list = 16 32\ntraj = 8\nt = 0.04\ncheckpoints = 4\n"
        "pde_grid = 64\n"
        "[simulate]\nn = 32\nm_blocks = 4\nt = 0.02\ntraj = 6\ncheckpoints = 4\n"
    )
    run_cli("free-energy", "--config", str(cfg), "--pot", "gaussian",
            "--out", str(base / "fe"), "--tol", "1e-9")
    run_cli("cramer", "--config", str(cfg), "--pot", "gaussian",
            "--out", str(base / "cramer"), "--tol", "1e-9")
    run_cli("hydrolimit", "--config", str(cfg), "--pot", "gaussian",
            "--seed", "2", "--out", str(base / "hydro"))
    run_cli("simulate", "--config", str(cfg), "--pot", "gaussian",
            "--seed", "2", "--out", str(base / "sim"))
    return base


def dir_digest(path: Path) -> str:
    h = hashlib.sha256()
    for p in sorted(path.rglob("*")):
        if p.is_file():
            h.update(p.name.encode())
            h.update(p.read_bytes())
    return h.hexdigest()


KIND_TO_RUN = {
    "cramer": "cramer",
    "theta_decay": "sim",
    "hydro_decay": "hydro",
    "profiles": "hydro",
    "free_energy": "fe",
}


@pytest.mark.parametrize("kind", sorted(KIND_TO_RUN))
def test_render_all_kinds(gaussian_runs, tmp_path, kind):
    run_dir = gaussian_runs / KIND_TO_RUN[kind]
    before = dir_digest(run_dir)
    out = tmp_path / f"{kind}.png"
    path = render(FigureRequest(run_dir=run_dir, kind=kind, out_path=out))
    assert path.exists() and path.stat().st_size > 1000
    assert out.with_suffix(".png.data.csv").exists()
    # rendering is strictly read-only
    assert dir_digest(run_dir) == before


def test_criterion_10_cramer_sidecar_closed_form(gaussian_runs, tmp_path):
    """Acceptance criterion 10: all five kinds render (above) and the cramer
    figure's plotted points match log(2pi)/(2K) to 1e-8."""
    out = tmp_path / "cramer.png"
    render(FigureRequest(run_dir=gaussian_runs / "cramer", kind="cramer",
                         out_path=out))
    data = np.loadtxt(out.with_suffix(".png.data.csv"), delimiter=",", skiprows=1)
    ks, sup = data[:, 0], data[:, 1]
    expected = LOG_2PI / (2 * ks)
    err = np.max(np.abs(sup - expected))
    print(f"\nPASS criterion 10 (plots): five kinds rendered; cramer sidecar "
          f"matches ln(2pi)/(2K) to {err:.2e}")
    assert err <= 1e-8


def test_caption_embeds_run_id_and_seed(gaussian_runs, tmp_path):
    out = tmp_path / "hydro.svg"
    render(FigureRequest(run_dir=gaussian_runs / "hydro", kind="hydro_decay",
                         out_path=out))
    svg = out.read_text()
    manifest = json.loads((gaussian_runs / "hydro" / "manifest.json").read_text())
    assert manifest["run_id"] in svg
    assert "seed 2" in svg


def test_single_N_omits_guide_and_warns(gaussian_runs, tmp_path):
    with pytest.warns(UserWarning, match="slope guide"):
        render(FigureRequest(run_dir=gaussian_runs / "sim", kind="theta_decay",
                             out_path=tmp_path / "one.png"))


def test_missing_column_named(gaussian_runs, tmp_path):
    broken = tmp_path / "broken"
    broken.mkdir()
    (broken / "manifest.json").write_text(
        (gaussian_runs / "sim" / "manifest.json").read_text())
    src = (gaussian_runs / "sim" / "series.csv").read_text().splitlines()
    header = src[0].replace("theta,", "tehta,")
    (broken / "series.csv").write_text("\n".join([header] + src[1:]))
    with pytest.raises(KeyError, match="theta"):
        render(FigureRequest(run_dir=broken, kind="theta_decay",
                             out_path=tmp_path / "x.png"))


def test_empty_series_rejected(gaussian_runs, tmp_path):
    broken = tmp_path / "empty"
    broken.mkdir()
    (broken / "manifest.json").write_text(
        (gaussian_runs / "sim" / "manifest.json").read_text())
    (broken / "series.csv").write_text("N,t,theta,theta_stderr,hminus1_sq,hminus1_stderr\n")
    with pytest.raises(ValueError, match="empty series"):
        render(FigureRequest(run_dir=broken, kind="theta_decay",
                             out_path=tmp_path / "x.png"))


def test_cli_wrapper(gaussian_runs, tmp_path, capsys):
    out = tmp_path / "fig.png"
    code = plots_main(["free_energy", "--run", str(gaussian_runs / "fe"),
                       "--out", str(out)])
    assert code == 0 and out.exists()
    code = plots_main(["cramer", "--run", str(tmp_path / "missing"),
                       "--out", str(tmp_path / "y.png")])
    assert code == 1
