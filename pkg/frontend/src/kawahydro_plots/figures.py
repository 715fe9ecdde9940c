"""Figure rendering from persisted run directories.

Strictly read-only: every figure is drawn from the CSV/JSON files the
simulator wrote; nothing scientific is recomputed here.  Each rendered image
gets a sidecar CSV (<out>.data.csv) echoing exactly the series that were
plotted, and a caption embedding the run id and master seed from the
manifest.
"""

import csv
import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

FIGURE_KINDS = ("cramer", "theta_decay", "hydro_decay", "profiles", "free_energy")


@dataclass(frozen=True)
class FigureRequest:
    run_dir: Path
    kind: str
    out_path: Path
    log_axes: bool = True
    slope_guide: bool = True

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise ValueError(f"figure kind must be one of {FIGURE_KINDS}, got {self.kind!r}")


class MissingColumnError(KeyError):
    def __init__(self, column, path):
        super().__init__(f"column {column!r} missing from {path}")


def _read_csv(path: Path, required):
    if not path.exists():
        raise FileNotFoundError(f"required input missing: {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in required:
            if col not in header:
                raise MissingColumnError(col, path)
        rows = list(reader)
    if not rows:
        raise ValueError(f"empty series in {path}")
    return rows


def _manifest_caption(run_dir: Path) -> str:
    manifest = json.loads((run_dir / "manifest.json").read_text())
    run_id = manifest.get("run_id") or manifest.get("command", "run")
    cfg = manifest.get("config", {})
    seed = cfg.get("seed")
    if seed is None and isinstance(cfg.get("field"), dict):
        seed = cfg["field"].get("master_seed", cfg["field"].get("seed"))
    return f"run {run_id}  seed {seed}"


def _write_sidecar(out_path: Path, header, rows):
    side = out_path.with_suffix(out_path.suffix + ".data.csv")
    with open(side, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return side


def _finish(fig, request: FigureRequest, caption: str):
    fig.text(0.01, 0.01, caption, fontsize=7, color="0.35")
    request.out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(request.out_path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return request.out_path


# ------------------------------------------------------------------ kinds
def _render_cramer(request: FigureRequest, caption: str):
    run = request.run_dir
    summary = json.loads((run / "cramer_summary.json").read_text())
    rows = _read_csv(run / "cramer.csv", ("K", "m", "abs_diff"))
    ks = np.array(summary["k_list"], dtype=float)
    sup = np.array(summary["sup_diff"], dtype=float)

    fig, ax = plt.subplots(figsize=(5, 4))
    all_k = np.array([float(r["K"]) for r in rows])
    all_d = np.array([float(r["abs_diff"]) for r in rows])
    ax.plot(all_k, all_d, ".", color="0.75", ms=3, label="per-m gaps")
    ax.plot(ks, sup, "o-", color="C0", label=r"$\sup_m|\psi_K-\varphi_K|$")
    if request.slope_guide and len(ks) > 1:
        slope = summary["slope"]
        guide = sup[0] * (ks / ks[0]) ** slope
        ax.plot(ks, guide, "--", color="C3", label=f"slope {slope:.2f}")
    if request.log_axes:
        ax.set_xscale("log")
        ax.set_yscale("log")
    ax.set_xlabel("K")
    ax.set_ylabel("free-energy gap")
    ax.legend(fontsize=8)
    ax.set_title("local Cramer convergence")
    _write_sidecar(request.out_path, ["K", "sup_diff"], list(zip(ks, sup)))
    return _finish(fig, request, caption)


def _series_by_N(run: Path, column: str):
    rows = _read_csv(run / "series.csv", ("N", "t", column))
    data = {}
    for r in rows:
        val = float(r[column])
        if np.isnan(val):
            continue
        data.setdefault(int(float(r["N"])), []).append((float(r["t"]), val))
    if not data:
        raise ValueError(f"series.csv has no finite {column} values")
    return data


def _render_decay(request: FigureRequest, caption: str, column: str,
                  rate_key: str, label: str):
    run = request.run_dir
    data = _series_by_N(run, column)
    ns = sorted(data)
    peak = [max(v for _, v in data[n]) for n in ns]

    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(ns, peak, "o", color="C0", label=label)
    slope = None
    if len(ns) < 2:
        warnings.warn("only one N in the series: omitting the slope guide")
    elif request.slope_guide:
        rates = json.loads((run / "rates.json").read_text()) if (run / "rates.json").exists() else {}
        slope = rates.get(rate_key)
        if slope is not None:
            guide = peak[0] * (np.array(ns, float) / ns[0]) ** slope
            ax.plot(ns, guide, "--", color="C3", label=f"fitted slope {slope:.2f}")
    if request.log_axes:
        ax.set_xscale("log")
        ax.set_yscale("log")
    ax.set_xlabel("N")
    ax.set_ylabel(label)
    ax.legend(fontsize=8)
    ax.set_title(f"{label} versus lattice size")
    _write_sidecar(request.out_path, ["N", "sup_t"], list(zip(ns, peak)))
    return _finish(fig, request, caption)


def _render_profiles(request: FigureRequest, caption: str):
    run = request.run_dir
    rows = _read_csv(run / "profiles.csv", ("N", "t", "kind", "theta", "value"))
    biggest = max(int(float(r["N"])) for r in rows)
    snaps = sorted({float(r["t"]) for r in rows if int(float(r["N"])) == biggest})
    fig, axes = plt.subplots(1, len(snaps), figsize=(4 * len(snaps), 3.4),
                             sharey=True, squeeze=False)
    styles = {"xbar": dict(color="0.6", lw=0.7, label=r"micro $\bar x$"),
              "eta_bar": dict(color="C0", lw=1.6, label=r"meso $\bar\eta$"),
              "zeta": dict(color="C3", lw=1.6, ls="--", label=r"hydro $\zeta$")}
    side_rows = []
    for ax, t in zip(axes[0], snaps):
        for kind_name, style in styles.items():
            pts = [(float(r["theta"]), float(r["value"])) for r in rows
                   if int(float(r["N"])) == biggest and float(r["t"]) == t
                   and r["kind"] == kind_name]
            if not pts:
                continue
            pts.sort()
            th = [p[0] for p in pts]
            vv = [p[1] for p in pts]
            ax.step(th, vv, where="mid", **style)
            side_rows.extend((biggest, t, kind_name, a, b) for a, b in pts)
        ax.set_title(f"t = {t:g}")
        ax.set_xlabel(r"$\theta$")
    axes[0][0].set_ylabel("profile")
    axes[0][-1].legend(fontsize=7)
    _write_sidecar(request.out_path, ["N", "t", "kind", "theta", "value"], side_rows)
    return _finish(fig, request, caption)


def _render_free_energy(request: FigureRequest, caption: str):
    run = request.run_dir
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(8.6, 3.6))
    side_rows = []
    star = _read_csv(run / "phi_star.csv", ("sigma", "value"))
    s = np.array([float(r["sigma"]) for r in star])
    v = np.array([float(r["value"]) for r in star])
    ax0.plot(s, v, color="C0")
    ax0.set_xlabel(r"$\sigma$")
    ax0.set_ylabel(r"one-site log-partition $\varphi^*$")
    side_rows.extend(("phi_star", a, b) for a, b in zip(s, v))

    for name, style in (("phi_K", dict(color="C0")),
                        ("psi_K", dict(color="C2")),
                        ("phi_tilde", dict(color="C3", ls="--"))):
        rows = _read_csv(run / f"{name}.csv", ("m", "value"))
        m = np.array([float(r["m"]) for r in rows])
        val = np.array([float(r["value"]) for r in rows])
        ax1.plot(m, val, label=name, **style)
        side_rows.extend((name, a, b) for a, b in zip(m, val))
    ax1.set_xlabel("m")
    ax1.set_ylabel("free energy")
    ax1.legend(fontsize=8)
    _write_sidecar(request.out_path, ["series", "x", "value"], side_rows)
    return _finish(fig, request, caption)


def render(request: FigureRequest) -> Path:
    """Render one figure kind from a run directory; returns the image path."""
    run_dir = Path(request.run_dir)
    caption = _manifest_caption(run_dir)
    if request.kind == "cramer":
        return _render_cramer(request, caption)
    if request.kind == "theta_decay":
        return _render_decay(request, caption, "theta", "theta_slope",
                             r"$\sup_t \Theta$")
    if request.kind == "hydro_decay":
        return _render_decay(request, caption, "hminus1_sq", "slope",
                             r"$\sup_t\, E\|\bar x - \zeta\|^2_{H^{-1}}$")
    if request.kind == "profiles":
        return _render_profiles(request, caption)
    if request.kind == "free_energy":
        return _render_free_energy(request, caption)
    raise ValueError(f"unknown figure kind {request.kind!r}")
