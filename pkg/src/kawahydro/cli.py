"""Command-line front door: config ingestion, subcommand dispatch, run
persistence.

Subcommands: free-energy, cramer, covariance, gap, simulate, hydrolimit.
Common flags: --config PATH, --out DIR, --seed U64, --threads N, --tol REAL.
Exit codes: 0 all asserted criteria pass, 1 runtime failure, 2 usage or
validation error.  Flags override the config file, which overrides built-in
defaults; every run directory receives a manifest echoing the fully resolved
configuration.  PASS/FAIL thresholds live in the config, not the code.
"""

import argparse
import configparser
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, backend, dynamics as dyn, experiments as ex, free_energy as fe
from .field import FieldSpec
from .inequality_lab import TestFunctionFamily, check_covariance_estimate, check_cramer, spectral_gap_canonical
from .potential import make_potential
from .quadrature import QuadratureError

KNOWN_KEYS = {
    "potential": {"kind", "perturb_amp"},
    "field": {"kind", "l", "atoms", "seed"},
    "grid": {"m_min", "m_max", "m_step", "k"},
    "tolerances": {"tol"},
    "cramer": {"k_list", "slope_min", "slope_max", "psi_dd_ratio_min"},
    "covariance": {"k_list", "m", "count", "family", "ratio_max"},
    "gap": {"k", "m_list", "grid_size", "n_field_seeds", "ratio_max", "oracle_tol"},
    "simulate": {"n", "m_blocks", "t", "traj", "checkpoints", "zeta0_amp", "zeta0_freq"},
    "hydrolimit": {"n_list", "t", "traj", "pde_grid", "checkpoints", "slope_max",
                   "zeta0_amp", "zeta0_freq", "n_field_seeds"},
}

DEFAULTS = {
    "potential": {"kind": "gaussian", "perturb_amp": "0.1"},
    "field": {"kind": "zero", "l": "0.0", "atoms": "", "seed": "0"},
    "grid": {"m_min": "-2.0", "m_max": "2.0", "m_step": "0.1", "k": "4"},
    "tolerances": {"tol": "1e-8"},
    "cramer": {"k_list": "2 3 4 5 6 8 10", "slope_min": "-1.4", "slope_max": "-0.6",
               "psi_dd_ratio_min": "0.5"},
    "covariance": {"k_list": "2 3", "m": "0.0", "count": "20", "family": "fourier",
                   "ratio_max": "3.0"},
    "gap": {"k": "2", "m_list": "-1 0 1", "grid_size": "241", "n_field_seeds": "3",
            "ratio_max": "3.0", "oracle_tol": "1e-4"},
    "simulate": {"n": "64", "m_blocks": "8", "t": "0.1", "traj": "8",
                 "checkpoints": "32", "zeta0_amp": "0.5", "zeta0_freq": "1"},
    "hydrolimit": {"n_list": "64 256", "t": "0.25", "traj": "200", "pde_grid": "0",
                   "checkpoints": "32", "slope_max": "-0.3", "zeta0_amp": "0.5",
                   "zeta0_freq": "1", "n_field_seeds": "1"},
}


class UsageError(Exception):
    pass


def load_config(path) -> dict:
    cfg = {sec: dict(vals) for sec, vals in DEFAULTS.items()}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise UsageError(f"config not found: {p}")
        parser = configparser.ConfigParser()
        parser.read(p)
        for section in parser.sections():
            if section not in KNOWN_KEYS:
                raise UsageError(f"unknown config section [{section}]")
            for key, value in parser[section].items():
                if key not in KNOWN_KEYS[section]:
                    raise UsageError(f"unknown config key {section}.{key}")
                cfg[section][key] = value
    return cfg


def _parse_atoms(text: str):
    if not text.strip():
        return None
    atoms = []
    for chunk in text.replace(",", " ").split():
        v, p = chunk.split(":")
        atoms.append((float(v), float(p)))
    return tuple(atoms)


def build_field_spec(cfg) -> FieldSpec:
    f = cfg["field"]
    return FieldSpec(kind=f["kind"], L=float(f["l"]), atoms=_parse_atoms(f["atoms"]),
                     master_seed=int(f["seed"]))


def build_potential(cfg):
    return make_potential(cfg["potential"]["kind"], float(cfg["potential"]["perturb_amp"]))


def _m_grid(cfg):
    g = cfg["grid"]
    lo, hi, step = float(g["m_min"]), float(g["m_max"]), float(g["m_step"])
    n = int(round((hi - lo) / step)) + 1
    return np.linspace(lo, hi, n)


def _write_manifest(out_dir: Path, cfg: dict, command: str, extra=None):
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {"command": command, "version": __version__, "config": cfg}
    if extra:
        manifest.update(extra)
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))


def _csv(path: Path, header: str, rows):
    lines = [header]
    for row in rows:
        lines.append(",".join(f"{v:.17g}" if isinstance(v, float) else str(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _print_check(name: str, ok: bool, detail: str = "") -> bool:
    print(f"{'PASS' if ok else 'FAIL'} {name}" + (f"  ({detail})" if detail else ""))
    return ok


# ------------------------------------------------------------------ commands
def cmd_free_energy(args, cfg) -> int:
    out = Path(args.out)
    pot = build_potential(cfg)
    spec = build_field_spec(cfg)
    K = int(args.k if args.k is not None else cfg["grid"]["k"])
    if K < 1:
        raise UsageError(f"--k must be >= 1, got {K}")
    tol = float(args.tol if args.tol is not None else cfg["tolerances"]["tol"])
    grid = _m_grid(cfg)
    _write_manifest(out, cfg, "free-energy", {"K": K, "tol": tol})

    from .field import realize_field

    avec = realize_field(spec, K).values
    rows = []
    for s in grid:
        t = fe.log_partition_1d(pot, s, min(tol, 1e-9))
        rows.append((float(s), t.log_z, t.m, t.s2))
    _csv(out / "phi_star.csv", "sigma,value,d1,d2", rows)

    model = fe.tabulate(pot, avec, "phi_K", K, grid, tol)
    fe.export_csv(model, out / "phi_K.csv", {"field_values": avec.tolist()})
    model_psi = fe.tabulate(pot, avec, "psi_K", K, grid, tol)
    fe.export_csv(model_psi, out / "psi_K.csv", {"field_values": avec.tolist()})
    vals, weights = spec.expectation_atoms()
    model_tilde = fe.tabulate(pot, spec, "phi_tilde", None, grid, tol)
    fe.export_csv(model_tilde, out / "phi_tilde.csv",
                  {"field_atoms": [[float(v), float(w)] for v, w in zip(vals, weights)]})
    print(f"wrote free-energy tables for K={K} to {out}")
    return 0


def cmd_cramer(args, cfg) -> int:
    out = Path(args.out)
    pot = build_potential(cfg)
    spec = build_field_spec(cfg)
    tol = float(args.tol if args.tol is not None else cfg["tolerances"]["tol"])
    if args.kmax is not None:
        k_list = list(range(2, int(args.kmax) + 1))
    else:
        k_list = [int(v) for v in cfg["cramer"]["k_list"].split()]
    if min(k_list) < 2:
        raise UsageError("cramer requires K >= 2")
    grid = _m_grid(cfg)
    rep = check_cramer(pot, spec, k_list, grid, tol)
    _write_manifest(out, cfg, "cramer", {"k_list": k_list})
    _csv(out / "cramer.csv", "K,m,abs_diff", [(r["K"], r["m"], r["abs_diff"]) for r in rep.rows])
    summary = {
        "k_list": rep.k_list,
        "sup_diff": rep.sup_diff,
        "slope": rep.slope,
        "min_psi_dd": rep.min_psi_dd,
        "min_phi_dd": rep.min_phi_dd,
    }
    (out / "cramer_summary.json").write_text(json.dumps(summary, indent=2))
    ok = True
    decreasing = all(a > b for a, b in zip(rep.sup_diff, rep.sup_diff[1:]))
    ok &= _print_check("cramer sup|psi_K - phi_K| decreasing in K", decreasing)
    lo, hi = float(cfg["cramer"]["slope_min"]), float(cfg["cramer"]["slope_max"])
    ok &= _print_check(f"cramer slope in [{lo}, {hi}]", lo <= rep.slope <= hi,
                       f"slope={rep.slope:.3f}")
    return 0 if ok else 1


def cmd_covariance(args, cfg) -> int:
    out = Path(args.out)
    pot = build_potential(cfg)
    spec = build_field_spec(cfg)
    sec = cfg["covariance"]
    k_list = [int(v) for v in ([args.K] if args.K else sec["k_list"].split())]
    m = float(sec["m"])
    fam = TestFunctionFamily(kind=sec["family"], count=int(sec["count"]),
                             seed=int(cfg["field"]["seed"]))
    from .field import realize_field

    rows, c0s = [], {}
    for K in k_list:
        avec = realize_field(spec, K).values
        res = check_covariance_estimate(pot, avec, K, m, fam)
        c0s[K] = res["C0"]
        for r in res["rows"]:
            rows.append((K, m, r["member"], r["lhs"], r["rhs"], r["ratio"]))
    _write_manifest(out, cfg, "covariance", {"C0": {str(k): v for k, v in c0s.items()}})
    _csv(out / "covariance.csv", "K,m,member,lhs,rhs,ratio", rows)
    ok = _print_check("covariance C0 finite", all(np.isfinite(v) for v in c0s.values()),
                      str(c0s))
    if len(k_list) > 1:
        lo, hi = min(c0s.values()), max(c0s.values())
        ratio = hi / lo if lo > 0 else (1.0 if hi == 0 else float("inf"))
        ok &= _print_check(f"covariance C0 stable across K (<= {sec['ratio_max']})",
                           ratio <= float(sec["ratio_max"]), f"ratio={ratio:.3f}")
    return 0 if ok else 1


def cmd_gap(args, cfg) -> int:
    out = Path(args.out)
    pot = build_potential(cfg)
    spec = build_field_spec(cfg)
    sec = cfg["gap"]
    K = int(args.K if args.K else sec["k"])
    m_list = [float(v) for v in sec["m_list"].split()]
    grid_size = int(sec["grid_size"])
    n_seeds = int(sec["n_field_seeds"])
    from .field import realize_field

    rows = []
    for s_idx in range(n_seeds):
        fs = FieldSpec(kind=spec.kind, L=spec.L, atoms=spec.atoms,
                       master_seed=spec.master_seed + 104729 * s_idx)
        avec = realize_field(fs, K).values
        for m in m_list:
            gap = spectral_gap_canonical(pot, avec, K, m, grid_size=grid_size)
            rows.append((K, m, s_idx, gap))
            print(f"gap K={K} m={m:+.2f} seed={s_idx}: {gap:.6f}")
    _write_manifest(out, cfg, "gap")
    _csv(out / "gaps.csv", "K,m,seed,gap", rows)
    gaps = [r[3] for r in rows]
    ok = _print_check("all gaps positive", min(gaps) > 0, f"min={min(gaps):.4f}")
    ok &= _print_check(f"gap spread <= {sec['ratio_max']}",
                       max(gaps) / min(gaps) <= float(sec["ratio_max"]),
                       f"spread={max(gaps)/min(gaps):.3f}")
    if pot.name == "gaussian" and spec.kind == "zero" and K == 2:
        tol = float(sec["oracle_tol"])
        ok &= _print_check(f"gaussian K=2 gap == 1 +- {tol}",
                           all(abs(g - 1.0) <= tol for g in gaps),
                           f"gap={gaps[0]:.6f}")
    return 0 if ok else 1


def cmd_simulate(args, cfg) -> int:
    out = Path(args.out)
    sec = cfg["simulate"]
    N = int(args.N if args.N else sec["n"])
    M = int(args.M if args.M else sec["m_blocks"])
    if N % M:
        raise UsageError(f"M={M} must divide N={N}")
    T = float(args.T if args.T else sec["t"])
    traj = int(args.traj if args.traj else sec["traj"])
    scenario = ex.HydroScenario(
        n_list=(N,), pot_kind=cfg["potential"]["kind"],
        perturb_amp=float(cfg["potential"]["perturb_amp"]),
        field=build_field_spec(cfg),
        zeta0=ex.Zeta0Spec(kind="sine", amplitude=float(sec["zeta0_amp"]),
                           frequency=int(sec["zeta0_freq"])),
        T=T, n_traj=traj, n_checkpoints=int(sec["checkpoints"]),
        seed=int(args.seed if args.seed is not None else cfg["field"]["seed"]),
        m_rule=lambda n: M,
    )
    record = ex.run_two_scale_bound_audit(scenario)
    ex.write_run(record, out)
    s = record.series[0]
    if s.failed:
        print(f"simulation failed: {s.failed}", file=sys.stderr)
        return 1
    ok = _print_check("sup_t Theta <= recorded two-scale bound",
                      s.extras["bound_satisfied"],
                      f"sup={s.extras['sup_theta']:.5e} bound={s.extras['bound']:.5e}")
    return 0 if ok else 1


def cmd_hydrolimit(args, cfg) -> int:
    out = Path(args.out)
    sec = cfg["hydrolimit"]
    n_list = [int(v) for v in (args.nlist.split(",") if args.nlist else sec["n_list"].split())]
    pde_grid = int(sec["pde_grid"]) or None
    scenario = ex.HydroScenario(
        n_list=tuple(n_list), pot_kind=cfg["potential"]["kind"],
        perturb_amp=float(cfg["potential"]["perturb_amp"]),
        field=build_field_spec(cfg),
        zeta0=ex.Zeta0Spec(kind="sine", amplitude=float(sec["zeta0_amp"]),
                           frequency=int(sec["zeta0_freq"])),
        T=float(args.T if args.T else sec["t"]),
        n_traj=int(args.traj if args.traj else sec["traj"]),
        pde_grid=pde_grid, n_checkpoints=int(sec["checkpoints"]),
        seed=int(args.seed if args.seed is not None else cfg["field"]["seed"]),
    )
    record = ex.run_hydro_convergence(scenario, progress=True)
    ex.write_run(record, out)
    failed = [s.N for s in record.series if s.failed]
    if failed:
        print(f"failed N entries: {failed}", file=sys.stderr)
        return 1
    d = record.rates["D_by_N"]
    ns = sorted(int(k) for k in d)
    ok = _print_check("D(N) strictly decreasing",
                      all(d[str(a)] > d[str(b)] for a, b in zip(ns, ns[1:])),
                      " ".join(f"D({n})={d[str(n)]:.4e}" for n in ns))
    if len(ns) >= 3:
        ok &= _print_check(f"fitted slope <= {sec['slope_max']}",
                           record.rates["slope"] <= float(sec["slope_max"]),
                           f"slope={record.rates['slope']:.3f}")
    return 0 if ok else 1


# ------------------------------------------------------------------ dispatch
def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kawahydro",
                                description="Conservative lattice spin system "
                                            "multiscale simulator and verifier")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="INI config file (sections: potential, "
                                         "field, grid, tolerances, per-command)")
        sp.add_argument("--out", default="runs/out", help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="master seed (u64)")
        sp.add_argument("--threads", type=int, default=None, help="worker thread cap")
        sp.add_argument("--tol", type=float, default=None, help="quadrature tolerance")
        sp.add_argument("--pot", default=None,
                        help="potential kind: gaussian | quartic | perturbed_quartic")

    sp = sub.add_parser("free-energy", help="tabulate phi*, phi_K, psi_K, phi_tilde")
    common(sp)
    sp.add_argument("--k", type=int, default=None, help="block size K (>= 1)")

    sp = sub.add_parser("cramer", help="local Cramer gap sweep over K")
    common(sp)
    sp.add_argument("--kmax", type=int, default=None, help="sweep K = 2..kmax")

    sp = sub.add_parser("covariance", help="two-scale covariance estimate check")
    common(sp)
    sp.add_argument("--K", type=int, default=None, help="fiber size (2 or 3)")

    sp = sub.add_parser("gap", help="canonical-ensemble spectral gap proxy")
    common(sp)
    sp.add_argument("--K", type=int, default=None, help="fiber size (2 or 3)")

    sp = sub.add_parser("simulate", help="SDE + ODE two-scale bound audit at one N")
    common(sp)
    sp.add_argument("--N", type=int, default=None)
    sp.add_argument("--M", type=int, default=None)
    sp.add_argument("--T", type=float, default=None)
    sp.add_argument("--traj", type=int, default=None)

    sp = sub.add_parser("hydrolimit", help="hydrodynamic-limit convergence sweep")
    common(sp)
    sp.add_argument("--nlist", default=None, help="comma-separated lattice sizes")
    sp.add_argument("--T", type=float, default=None)
    sp.add_argument("--traj", type=int, default=None)

    return p


COMMANDS = {
    "free-energy": cmd_free_energy,
    "cramer": cmd_cramer,
    "covariance": cmd_covariance,
    "gap": cmd_gap,
    "simulate": cmd_simulate,
    "hydrolimit": cmd_hydrolimit,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        cfg = load_config(args.config)
        if args.pot:
            cfg["potential"]["kind"] = args.pot
        if args.seed is not None:
            cfg["field"]["seed"] = str(args.seed)
        if args.threads is not None:
            backend.set_num_threads(args.threads)
        if args.tol is not None:
            cfg["tolerances"]["tol"] = str(args.tol)
        return COMMANDS[args.command](args, cfg)
    except (UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (QuadratureError, fe.SolveError, dyn.IntegrationError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
