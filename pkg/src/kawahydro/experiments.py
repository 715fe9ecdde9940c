"""Top-level experiments: the two-scale bound audit, the hydrodynamic-limit
convergence sweep, and block-to-hydrodynamic free-energy convergence, with
run-directory persistence and rate fitting.

Run directory layout:
    manifest.json     config echo, seeds, versions, wall clock
    series.csv        columns N,t,theta,theta_stderr,hminus1_sq,hminus1_stderr
    rates.json        fitted slopes and bootstrap CIs, bound terms
    inequalities.csv  one row per (K, m, case) check when applicable
All floats are serialized with 17 significant digits.
"""

import json
import math
import time
from dataclasses import asdict, dataclass, field as dc_field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from . import __version__, dynamics as dyn, free_energy as fe
from .field import FieldSpec, realize_field
from .inequality_lab import TestFunctionFamily, check_covariance_estimate, spectral_gap_canonical
from .lattice import hminus1_sq_step, project_P, theta as theta_mc
from .lattice_checks import fluctuation_gamma
from .potential import Potential, make_potential


# ------------------------------------------------------------------ scenario
def default_m_rule(N: int) -> int:
    """Divisor of N closest to sqrt(N) (ties towards the larger divisor)."""
    target = math.sqrt(N)
    divisors = [d for d in range(1, N + 1) if N % d == 0]
    return min(divisors, key=lambda d: (abs(d - target), -d))


@dataclass(frozen=True)
class Zeta0Spec:
    """Closed-form initial macroscopic profile on the torus (zero mean)."""

    kind: str = "sine"  # zero | sine
    amplitude: float = 0.5
    frequency: int = 1

    def cell_averages(self, n: int) -> np.ndarray:
        if self.kind == "zero":
            return np.zeros(n)
        if self.kind == "sine":
            j = np.arange(n)
            w = 2.0 * math.pi * self.frequency
            return self.amplitude * n * (np.cos(w * j / n) - np.cos(w * (j + 1) / n)) / w
        raise ValueError(f"unknown zeta0 kind {self.kind!r}")


@dataclass(frozen=True)
class HydroScenario:
    n_list: Sequence[int] = (64, 256)
    pot_kind: str = "gaussian"
    perturb_amp: float = 0.1
    field: FieldSpec = dc_field(default_factory=FieldSpec)
    zeta0: Zeta0Spec = dc_field(default_factory=Zeta0Spec)
    T: float = 0.25
    n_traj: int = 200
    pde_grid: Optional[int] = None  # default: max(n_list)
    n_checkpoints: int = 32
    seed: int = 0
    m_rule: Callable[[int], int] = default_m_rule
    sde_tol: float = 1e-8
    cfl_guard: float = 0.5

    def potential(self) -> Potential:
        return make_potential(self.pot_kind, self.perturb_amp)

    def pde_g(self) -> int:
        return self.pde_grid if self.pde_grid is not None else max(self.n_list)

    def validate(self) -> None:
        for n in self.n_list:
            m = self.m_rule(n)
            if n % m:
                raise ValueError(f"M={m} does not divide N={n}")
        z = self.zeta0.cell_averages(64)
        if abs(z.mean()) > 1e-12:
            raise ValueError("zeta0 must have zero mean on the torus")

    def config_echo(self) -> dict:
        d = {
            "n_list": list(self.n_list),
            "pot_kind": self.pot_kind,
            "perturb_amp": self.perturb_amp,
            "field": asdict(self.field),
            "zeta0": asdict(self.zeta0),
            "T": self.T,
            "n_traj": self.n_traj,
            "pde_grid": self.pde_g(),
            "n_checkpoints": self.n_checkpoints,
            "seed": self.seed,
            "m_list": [self.m_rule(n) for n in self.n_list],
        }
        return d


@dataclass
class NSeries:
    N: int
    M: int
    K: int
    times: np.ndarray
    theta: Optional[np.ndarray] = None
    theta_stderr: Optional[np.ndarray] = None
    hminus1: Optional[np.ndarray] = None
    hminus1_stderr: Optional[np.ndarray] = None
    per_traj_hminus1: Optional[np.ndarray] = None  # (n_traj, n_checkpoints+1)
    extras: dict = dc_field(default_factory=dict)
    failed: Optional[str] = None


@dataclass
class RunRecord:
    run_id: str
    kind: str
    config: dict
    series: List[NSeries] = dc_field(default_factory=list)
    rates: dict = dc_field(default_factory=dict)
    inequalities: List[dict] = dc_field(default_factory=list)
    wall_clock: float = 0.0


# ------------------------------------------------------------------ helpers
def _refine_to(values: np.ndarray, r: int) -> np.ndarray:
    """Exact refinement of a step function to a grid of r cells (len | r)."""
    n = len(values)
    if r % n:
        raise ValueError("refinement target must be a multiple of the source")
    return np.repeat(values, r // n)


def hminus1_sq_between(x_cells: np.ndarray, z_cells: np.ndarray) -> float:
    """Exact squared H^{-1} distance between two step functions on the torus."""
    r = math.lcm(len(x_cells), len(z_cells))
    diff = _refine_to(x_cells, r) - _refine_to(z_cells, r)
    diff = diff - diff.mean()
    return hminus1_sq_step(diff)


def fit_loglog_slope(xs, ys) -> float:
    return float(np.polyfit(np.log(np.asarray(xs, float)),
                            np.log(np.asarray(ys, float)), 1)[0])


def bootstrap_slope(n_values: Sequence[int], per_traj: Dict[int, np.ndarray],
                    n_boot: int = 200, seed: int = 0):
    """Bootstrap CI of the log-log slope of D(N) = sup_t mean_traj(values).

    per_traj[N] has shape (n_traj, n_checkpoints); trajectories resampled
    with replacement, identically across N (independent ensembles, so the
    resampling index sets are drawn per N).
    """
    g = np.random.default_rng(seed)
    slopes = np.empty(n_boot)
    for b in range(n_boot):
        ds = []
        for n in n_values:
            vals = per_traj[n]
            idx = g.integers(0, vals.shape[0], vals.shape[0])
            ds.append(vals[idx].mean(axis=0).max())
        slopes[b] = fit_loglog_slope(n_values, ds)
    return float(np.quantile(slopes, 0.025)), float(np.quantile(slopes, 0.975))


def _psi_models_per_block(pot, avec, M, K, grid, tol):
    """One psi_K tabulation per distinct block a-vector (cached)."""
    models = []
    cache = {}
    for i in range(M):
        block = tuple(np.round(avec[i * K:(i + 1) * K], 15))
        if block not in cache:
            cache[block] = fe.tabulate(pot, np.array(block), "psi_K", K, grid, tol)
        models.append(cache[block])
    return models


def _model_grid(eta0: np.ndarray, margin: float = 0.85, step: float = 0.05) -> np.ndarray:
    lo = float(eta0.min()) - margin
    hi = float(eta0.max()) + margin
    n = max(5, int(math.ceil((hi - lo) / step)) + 1)
    return np.linspace(lo, hi, n)


def _integrate_with_retries(scenario, pot, avec, states0, keys, observers_factory,
                            mean_target, max_attempts: int = 4):
    """Run the ensemble, retrying with smaller dt if the adaptive stability
    guard aborts (the sampled-state max psi'' can exceed the t=0 estimate).

    Superquadratic potentials get 20% initial headroom; the gaussian guard is
    exact so none is needed.  Each attempt restarts from the same initial
    ensemble and fresh observers, keeping results independent of retry count.
    """
    headroom = 1.0 if pot.kernel_code == 0 else 1.2
    abs0 = float(np.abs(states0).max())
    dt = dyn.stability_dt(pot, states0.shape[1], abs0, scenario.cfl_guard) / headroom
    last = None
    for _ in range(max_attempts):
        observers, finish = observers_factory()
        cfg = dyn.SdeConfig(dt=dt, t_end=scenario.T, n_traj=scenario.n_traj,
                            seed=scenario.seed, n_checkpoints=scenario.n_checkpoints,
                            cfl_guard=scenario.cfl_guard)
        try:
            dyn.integrate_kawasaki_ensemble(pot, avec, states0.copy(), cfg,
                                            observers, mean_target=mean_target,
                                            keys=keys)
            return finish()
        except dyn.IntegrationError as exc:
            last = exc
            dt *= 0.75
    raise last


# ------------------------------------------------------------------ audit
def run_two_scale_bound_audit(scenario: HydroScenario, progress: bool = False) -> RunRecord:
    """Audit the two-scale error bound: record sup_t Theta(t) and each
    computable term of the right-hand side with measured stand-in constants."""
    scenario.validate()
    pot = scenario.potential()
    t0 = time.perf_counter()
    record = RunRecord(run_id=_run_id(scenario, "audit"), kind="two_scale_bound_audit",
                       config=scenario.config_echo())

    for N in scenario.n_list:
        M = scenario.m_rule(N)
        K = N // M
        try:
            series = _audit_one_n(scenario, pot, N, M, K)
        except (dyn.IntegrationError, fe.SolveError) as exc:
            series = NSeries(N=N, M=M, K=K, times=np.zeros(1), failed=str(exc))
        record.series.append(series)
        if series.failed is None:
            consts = series.extras["constants"]
            for case in ("C0_covariance", "rho_gap_proxy", "gamma_fluctuation",
                         "lambda_convexity"):
                record.inequalities.append({"K": K, "m": 0.0, "case": case,
                                            "value": float(consts[case])})
        if progress:
            print(f"[audit] N={N} done")
    record.wall_clock = time.perf_counter() - t0
    return record


def _audit_one_n(scenario, pot, N, M, K) -> NSeries:
    realization = realize_field(scenario.field, N)
    avec = realization.values
    eta0 = scenario.zeta0.cell_averages(M)
    grid = _model_grid(eta0)
    models = _psi_models_per_block(pot, avec, M, K, grid, scenario.sde_tol)

    times = np.linspace(0.0, scenario.T, scenario.n_checkpoints + 1)
    _, etas = dyn.macro_ode_integrate(eta0, models, N, scenario.T, times)

    states, entropy, keys = dyn.sample_ensemble(eta0, pot, avec, K,
                                                scenario.seed, scenario.n_traj)
    c1 = entropy / N

    eta_by_idx = list(etas)

    def observers_factory():
        counter = {"i": 0}
        acc = {"theta": [], "theta_err": [], "msq": [], "mismatch": [],
               "hm": [], "hm_err": []}

        def observer(t, s):
            i = counter["i"]
            counter["i"] += 1
            eta_t = eta_by_idx[i]
            th, te = theta_mc(list(s), eta_t, K)
            acc["theta"].append(th)
            acc["theta_err"].append(te)
            acc["msq"].append(float(np.mean(s * s)))
            p = np.array([project_P(row, K) for row in s])
            acc["mismatch"].append(float(np.mean(np.sum((p - eta_t) ** 2, axis=1) / M)))
            vals = np.array([hminus1_sq_between(row, eta_t) for row in s])
            acc["hm"].append(float(vals.mean()))
            acc["hm_err"].append(float(vals.std(ddof=1) / math.sqrt(len(vals))))
            return 0.0

        return {"obs": observer}, lambda: acc

    acc = _integrate_with_retries(scenario, pot, avec, states, keys,
                                  observers_factory, float(eta0.mean()))
    theta_series, theta_err = acc["theta"], acc["theta_err"]
    msq_series, mismatch = acc["msq"], acc["mismatch"]
    hm_series, hm_err = acc["hm"], acc["hm_err"]
    theta_arr = np.array(theta_series)
    lam = min(float(m.d2.min()) for m in models)
    psi_min = min(float(m.values.min()) for m in models)
    beta = max(0.0, -psi_min)
    c2 = dyn.macro_energy(eta0, models)
    alpha = max(msq_series)
    gamma = fluctuation_gamma(N, M)
    fam = TestFunctionFamily(kind="fourier", count=12, seed=scenario.seed)
    kc = min(3, K)
    c0 = check_covariance_estimate(pot, avec[:kc], kc, float(np.mean(eta0)), fam,
                                   n_nodes=241 if kc == 2 else 81)["C0"]
    rho = spectral_gap_canonical(pot, avec[:2], 2, float(np.mean(eta0)), grid_size=121)

    term_theta0 = float(theta_arr[0])
    term_tmn = scenario.T * M / N
    term_cov = gamma * c0 * c1 * K / (2.0 * lam * M * M)
    term_fluct = math.sqrt(gamma) / M * math.sqrt(max(2 * alpha + 2 * c1 / rho, 0.0)) \
        * math.sqrt(max(c1 + c2 + beta, 0.0))
    bound = term_theta0 + term_tmn + term_cov + term_fluct

    extras = {
        "sup_theta": float(theta_arr.max()),
        "bound": bound,
        "bound_terms": {
            "theta0": term_theta0,
            "T_M_over_N": term_tmn,
            "covariance": term_cov,
            "fluctuation": term_fluct,
        },
        "constants": {
            "C1_entropy_per_site": c1,
            "C2_initial_energy": c2,
            "alpha_moment": alpha,
            "beta_energy_floor": beta,
            "lambda_convexity": lam,
            "gamma_fluctuation": gamma,
            "C0_covariance": c0,
            "rho_gap_proxy": rho,
        },
        "bound_satisfied": bool(theta_arr.max() <= bound),
        "macro_mismatch_sq": [float(v) for v in mismatch],
    }
    return NSeries(N=N, M=M, K=K, times=times, theta=theta_arr,
                   theta_stderr=np.array(theta_err), hminus1=np.array(hm_series),
                   hminus1_stderr=np.array(hm_err), extras=extras)


# ------------------------------------------------------------------ hydro
def run_hydro_convergence(scenario: HydroScenario, progress: bool = False) -> RunRecord:
    """Solve the PDE once on the fine grid, then for each N record
    D(N) = sup_t MC-average of the squared H^{-1} distance of the empirical
    step function to zeta(t); fit the log-log decay rate."""
    scenario.validate()
    pot = scenario.potential()
    t0_wall = time.perf_counter()
    record = RunRecord(run_id=_run_id(scenario, "hydro"), kind="hydro_convergence",
                       config=scenario.config_echo())

    g = scenario.pde_g()
    zeta_cells = scenario.zeta0.cell_averages(g)
    phi_grid = _model_grid(zeta_cells, margin=0.9)
    fe_model = fe.tabulate(pot, scenario.field, "phi_tilde", None, phi_grid,
                           tol=scenario.sde_tol)
    times = np.linspace(0.0, scenario.T, scenario.n_checkpoints + 1)
    _, zetas = dyn.hydro_pde_integrate(zeta_cells, fe_model, scenario.T, times)
    record.rates["pde_energy"] = [float(dyn.pde_energy(z, fe_model)) for z in zetas]

    d_values = {}
    per_traj_store = {}
    for N in scenario.n_list:
        M = scenario.m_rule(N)
        K = N // M
        try:
            series = _hydro_one_n(scenario, pot, N, M, K, times, zetas)
        except (dyn.IntegrationError, fe.SolveError) as exc:
            series = NSeries(N=N, M=M, K=K, times=times, failed=str(exc))
            record.series.append(series)
            continue
        record.series.append(series)
        d_values[N] = float(series.per_traj_hminus1.mean(axis=0).max())
        per_traj_store[N] = series.per_traj_hminus1
        if progress:
            print(f"[hydro] N={N} D={d_values[N]:.6e}")

    ok_n = sorted(d_values)
    if len(ok_n) >= 2:
        slope = fit_loglog_slope(ok_n, [d_values[n] for n in ok_n])
        lo, hi = bootstrap_slope(ok_n, per_traj_store, seed=scenario.seed)
        record.rates.update({
            "D_by_N": {str(n): d_values[n] for n in ok_n},
            "slope": slope,
            "slope_ci": [lo, hi],
        })
    record.wall_clock = time.perf_counter() - t0_wall
    return record


def _hydro_one_n(scenario, pot, N, M, K, times, zetas) -> NSeries:
    avec = realize_field(scenario.field, N).values
    eta0 = scenario.zeta0.cell_averages(M)
    states, _, keys = dyn.sample_ensemble(eta0, pot, avec, K, scenario.seed,
                                          scenario.n_traj)
    n_traj = scenario.n_traj

    snap_idx = sorted({0, len(times) // 2, len(times) - 1})

    def observers_factory():
        per = np.empty((n_traj, len(times)))
        counter = {"i": 0}
        profiles = []

        def observer(t, s):
            i = counter["i"]
            counter["i"] += 1
            z = zetas[i]
            for j in range(n_traj):
                per[j, i] = hminus1_sq_between(s[j], z)
            if i in snap_idx:
                profiles.append({"t": float(t), "zeta": z.copy(),
                                 "xbar": s[0].copy(),
                                 "eta_bar": project_P(s[0], K)})
            return 0.0

        return {"obs": observer}, lambda: (per, profiles)

    per_traj, profiles = _integrate_with_retries(scenario, pot, avec, states, keys,
                                                 observers_factory, float(eta0.mean()))
    mean = per_traj.mean(axis=0)
    err = per_traj.std(axis=0, ddof=1) / math.sqrt(n_traj)
    return NSeries(N=N, M=M, K=K, times=times, hminus1=mean, hminus1_stderr=err,
                   per_traj_hminus1=per_traj,
                   extras={"D": float(mean.max()), "profiles": profiles})


# ------------------------------------------------------------------ free energy
def run_free_energy_convergence(pot: Potential, field_spec: FieldSpec,
                                k_list: Sequence[int], m_grid: Sequence[float],
                                n_field_draws: int = 8, tol: float = 1e-8) -> dict:
    """sup_m |phi_K - phi_tilde| per (draw, K) and the sub-additivity check
    E[phi_K(m)] >= phi_tilde(m) - 3 stderr at every grid m."""
    m_grid = np.asarray(m_grid, dtype=float)
    tilde = np.array([fe.phi_tilde(pot, field_spec, m, tol)[0] for m in m_grid])

    sup_by_draw = []
    phi_tables = np.empty((n_field_draws, len(k_list), len(m_grid)))
    for d in range(n_field_draws):
        spec_d = FieldSpec(kind=field_spec.kind, L=field_spec.L,
                           atoms=field_spec.atoms,
                           master_seed=field_spec.master_seed + 7919 * d)
        sups = []
        for ki, K in enumerate(k_list):
            avec = realize_field(spec_d, K).values
            vals = np.array([fe.phi_K(pot, avec, m, tol)[0] for m in m_grid])
            phi_tables[d, ki] = vals
            sups.append(float(np.abs(vals - tilde).max()))
        sup_by_draw.append(sups)

    sup_by_draw = np.array(sup_by_draw)  # (draws, K)
    means = phi_tables.mean(axis=0)  # (K, m)
    stderr = phi_tables.std(axis=0, ddof=1) / math.sqrt(n_field_draws) \
        if n_field_draws > 1 else np.zeros_like(means)
    subadd_ok = bool(np.all(means >= tilde[None, :] - 3.0 * stderr - 1e-12))
    return {
        "k_list": list(k_list),
        "m_grid": m_grid.tolist(),
        "phi_tilde": tilde.tolist(),
        "sup_diff_by_draw": sup_by_draw.tolist(),
        "sup_diff_mean": sup_by_draw.mean(axis=0).tolist(),
        "draw_mean_phi_K": means.tolist(),
        "draw_stderr_phi_K": stderr.tolist(),
        "subadditivity_ok": subadd_ok,
    }


# ------------------------------------------------------------------ persistence
def _run_id(scenario, kind: str) -> str:
    import hashlib

    blob = json.dumps(scenario.config_echo(), sort_keys=True).encode()
    return f"{kind}-{hashlib.sha256(blob).hexdigest()[:12]}"


def _fmt(x) -> str:
    return f"{x:.17g}"


def write_run(record: RunRecord, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "run_id": record.run_id,
        "kind": record.kind,
        "config": record.config,
        "versions": {"kawahydro": __version__, "numpy": np.__version__},
        "wall_clock_seconds": record.wall_clock,
        "seeds": {"master": record.config.get("seed")},
        "failed_entries": [s.N for s in record.series if s.failed],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))

    lines = ["N,t,theta,theta_stderr,hminus1_sq,hminus1_stderr"]
    for s in record.series:
        if s.failed:
            continue
        for i, t in enumerate(s.times):
            th = s.theta[i] if s.theta is not None else float("nan")
            te = s.theta_stderr[i] if s.theta_stderr is not None else float("nan")
            hm = s.hminus1[i] if s.hminus1 is not None else float("nan")
            he = s.hminus1_stderr[i] if s.hminus1_stderr is not None else float("nan")
            lines.append(",".join([str(s.N), _fmt(t), _fmt(th), _fmt(te), _fmt(hm), _fmt(he)]))
    (out / "series.csv").write_text("\n".join(lines) + "\n")

    rates = dict(record.rates)
    profile_rows = []
    for s in record.series:
        if s.extras:
            extras = {k: v for k, v in s.extras.items() if k != "profiles"}
            rates.setdefault("per_N", {})[str(s.N)] = _jsonify(extras)
            for snap in s.extras.get("profiles", []):
                for kind_name in ("zeta", "xbar", "eta_bar"):
                    cells = np.asarray(snap[kind_name])
                    nc = len(cells)
                    for idx, v in enumerate(cells):
                        profile_rows.append((s.N, snap["t"], kind_name, idx,
                                             (idx + 0.5) / nc, float(v)))
    (out / "rates.json").write_text(json.dumps(_jsonify(rates), indent=2))
    if profile_rows:
        lines = ["N,t,kind,idx,theta,value"]
        for row in profile_rows:
            lines.append(",".join(_fmt(v) if isinstance(v, float) else str(v)
                                  for v in row))
        (out / "profiles.csv").write_text("\n".join(lines) + "\n")

    if record.inequalities:
        keys = sorted({k for row in record.inequalities for k in row})
        lines = [",".join(keys)]
        for row in record.inequalities:
            lines.append(",".join(_fmt(row[k]) if isinstance(row[k], float) else str(row.get(k, ""))
                                  for k in keys))
        (out / "inequalities.csv").write_text("\n".join(lines) + "\n")
    return out


def _jsonify(obj):
    if isinstance(obj, dict):
        return {k: _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj
