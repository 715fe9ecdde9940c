"""Time integrators for the three scales.

* Kawasaki SDE on X_{N,m}: explicit Euler-Maruyama in fluctuation-dissipation
  form (see kernels), adaptive stability guard, counter-based noise streams.
* Coarse-grained ODE on Y_{M,m}: RK4 on d eta/dt = -Abar grad_Y Hbar(eta).
* Hydrodynamic PDE on the torus: conservative explicit finite differences.

Stream layout: trajectory j of a run with master seed s uses
stream_key(s, 2j) for its initial sample and stream_key(s, 2j+1) for its
dynamics noise.
"""

import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import kernels, rng
from .free_energy import FreeEnergyModel, log_partition_1d, sigma_of_m, _tilt_quadrature
from .lattice import abar_apply, apply_A, recenter
from .potential import Potential


class IntegrationError(RuntimeError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


@dataclass(frozen=True)
class SdeConfig:
    dt: Optional[float] = None  # None: largest dt allowed by the guard at t=0
    t_end: float = 0.1
    n_traj: int = 8
    seed: int = 0
    record_every: Optional[int] = None  # steps between recordings (overrides n_checkpoints)
    n_checkpoints: int = 32
    cfl_guard: float = 0.5
    overflow_guard: float = 1e6


@dataclass
class PdeGrid:
    g: int
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (self.g,):
            raise ValueError("values length must equal g")

    @property
    def dtheta(self) -> float:
        return 1.0 / self.g


# ------------------------------------------------------------------ SDE
def grad_H(pot: Potential, field_values: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Gradient of H(x) = sum_i psi(x_i) + a_i x_i."""
    return pot.d1(np.asarray(x, dtype=float)) + np.asarray(field_values, dtype=float)


def conservative_noise(xi: np.ndarray) -> np.ndarray:
    """D^T xi with (Dx)_i = N(x_{i+1} - x_i); covariance of D^T is A."""
    xi = np.asarray(xi, dtype=float)
    return len(xi) * (np.roll(xi, 1) - xi)


def stability_dt(pot: Potential, n: int, abs_x_max: float, cfl_guard: float = 0.5) -> float:
    """Guard bound cfl_guard / (4 N^2 max psi'')."""
    code, amp = kernels.kernel_code(pot)
    return cfl_guard / (4.0 * n * n * kernels.psi2_max(code, amp, abs_x_max))


def kawasaki_step(x: np.ndarray, pot: Potential, field_values: np.ndarray,
                  dt: float, xi: Optional[np.ndarray] = None,
                  mean_target: Optional[float] = None,
                  overflow_guard: float = 1e6) -> np.ndarray:
    """One Euler-Maruyama update; xi are iid standard normals (None: no noise).

    Drift and noise both conserve the mean analytically; the final
    re-centering only corrects floating-point rounding.
    """
    x = np.asarray(x, dtype=float)
    if mean_target is None:
        mean_target = float(x.mean())
    out = x - dt * apply_A(grad_H(pot, field_values, x))
    if xi is not None:
        out = out + math.sqrt(2.0 * dt) * conservative_noise(xi)
    if np.abs(out).max() > overflow_guard:
        raise IntegrationError("state exploded during kawasaki_step", step=0)
    return recenter(out, mean_target)


@dataclass
class EnsembleRecord:
    times: np.ndarray
    dt: float
    n_steps: int
    observables: Dict[str, List]
    final_states: np.ndarray


def integrate_kawasaki_ensemble(pot: Potential, field_values: np.ndarray,
                                states0: np.ndarray, cfg: SdeConfig,
                                observers: Optional[Dict[str, Callable]] = None,
                                mean_target: float = 0.0,
                                keys: Optional[np.ndarray] = None) -> EnsembleRecord:
    """Advance an (n_traj, N) ensemble to t_end, recording observables at the
    checkpoint times.  The stability guard is re-evaluated on the sampled
    states of every recorded interval; a violation aborts rather than damping.
    """
    states = np.array(states0, dtype=float)
    n_traj, N = states.shape
    code, amp = kernels.kernel_code(pot)
    avec = np.asarray(field_values, dtype=float)
    if keys is None:
        keys = np.array([rng.stream_key(cfg.seed, 2 * j + 1) for j in range(n_traj)],
                        dtype=np.uint64)

    abs0 = float(np.abs(states).max())
    guard0 = stability_dt(pot, N, abs0, cfg.cfl_guard)
    dt_target = cfg.dt if cfg.dt is not None else guard0
    if dt_target > guard0 * (1 + 1e-12):
        raise IntegrationError(
            f"dt={dt_target:.3e} violates the stability guard {guard0:.3e} at t=0", step=0)

    if cfg.record_every is not None:
        steps_per = int(cfg.record_every)
        n_intervals = max(1, math.ceil(cfg.t_end / (dt_target * steps_per)))
    else:
        n_intervals = cfg.n_checkpoints
        steps_per = max(1, math.ceil(cfg.t_end / (dt_target * n_intervals)))
    n_steps = n_intervals * steps_per
    dt = cfg.t_end / n_steps  # dt <= dt_target, checkpoints land exactly

    times = np.linspace(0.0, cfg.t_end, n_intervals + 1)
    observers = observers or {}
    obs: Dict[str, List] = {name: [] for name in observers}
    for name, fn in observers.items():
        obs[name].append(fn(0.0, states))

    step0 = 0
    for interval in range(n_intervals):
        fail, _ = kernels.sde_chunk(states, keys, step0, steps_per, dt,
                                    code, amp, avec, mean_target,
                                    cfg.overflow_guard)
        if fail >= 0:
            raise IntegrationError(f"state exploded (|x| > {cfg.overflow_guard:g})",
                                   step=fail)
        # adaptive guard re-evaluated on the sampled states of this interval
        snap_abs = float(np.abs(states).max())
        guard = stability_dt(pot, N, snap_abs, cfg.cfl_guard)
        if dt > guard * (1 + 1e-12):
            raise IntegrationError(
                f"stability guard violated on interval {interval}: "
                f"dt={dt:.3e} > {guard:.3e}", step=step0)
        step0 += steps_per
        t = times[interval + 1]
        for name, fn in observers.items():
            obs[name].append(fn(t, states))
    return EnsembleRecord(times=times, dt=dt, n_steps=n_steps, observables=obs,
                          final_states=states)


# ------------------------------------------------------------------ initial data
def _tilt_sampler(pot: Potential, tau: float, tol: float = 1e-10):
    q = _tilt_quadrature(pot, tau, tol)
    cdf = np.cumsum(q.w)
    cdf /= cdf[-1]
    xs = q.x
    return lambda u: np.interp(u, cdf, xs)


def sample_initial(eta0: np.ndarray, pot: Potential, field_values: np.ndarray,
                   K: int, key, tol: float = 1e-9) -> Tuple[np.ndarray, float]:
    """Draw one micro state from the product of exponential tilts matching the
    block profile eta0 in expectation, shifted onto the exact fiber.

    Returns (state, relative entropy of the unshifted product measure with
    respect to the field's grand canonical product, in nats).
    """
    eta0 = np.asarray(eta0, dtype=float)
    M = len(eta0)
    N = M * K
    avec = np.asarray(field_values, dtype=float)
    mean_target = float(eta0.mean())

    sigmas = np.empty(M)
    for i in range(M):
        sigmas[i] = sigma_of_m(pot, avec[i * K: (i + 1) * K], eta0[i], tol)

    taus = (np.repeat(sigmas, K) - avec)
    uniq, inv = np.unique(taus, return_inverse=True)
    samplers = {t: _tilt_sampler(pot, t) for t in uniq}
    u = rng.uniform53(key, np.arange(N))
    x = np.empty(N)
    for idx, t in enumerate(uniq):
        mask = inv == idx
        x[mask] = samplers[t](u[mask])

    entropy = entropy_of_tilt(eta0, pot, avec, K, sigmas=sigmas, tol=tol)
    return recenter(x, mean_target), entropy


def entropy_of_tilt(eta0, pot, field_values, K, sigmas=None, tol=1e-9) -> float:
    """Closed-form KL of the product tilt w.r.t. the a-field product measure:
    sum_j [ sigma_b(j) m(sigma_b(j) - a_j) - (phi*(sigma-a_j) - phi*(-a_j)) ]."""
    eta0 = np.asarray(eta0, dtype=float)
    avec = np.asarray(field_values, dtype=float)
    M = len(eta0)
    if sigmas is None:
        sigmas = np.array([sigma_of_m(pot, avec[i * K: (i + 1) * K], eta0[i], tol)
                           for i in range(M)])
    cache: Dict[float, Tuple[float, float]] = {}

    def tilt(t):
        if t not in cache:
            tm = log_partition_1d(pot, t, min(tol, 1e-10))
            cache[t] = (tm.log_z, tm.m)
        return cache[t]

    total = 0.0
    for i in range(M):
        s = sigmas[i]
        for a in avec[i * K: (i + 1) * K]:
            lz_t, m_t = tilt(s - a)
            lz_0, _ = tilt(-a)
            total += s * m_t - (lz_t - lz_0)
    return total


def sample_ensemble(eta0, pot, field_values, K, seed: int, n_traj: int,
                    tol: float = 1e-9) -> Tuple[np.ndarray, float, np.ndarray]:
    """(states, entropy, dynamics keys) for an ensemble of product-tilt draws.

    Tilt solves and inverse-CDF tables are shared across trajectories; each
    trajectory only consumes its own uniform stream, so the draws equal
    per-trajectory sample_initial calls."""
    eta0 = np.asarray(eta0, dtype=float)
    avec = np.asarray(field_values, dtype=float)
    M = len(eta0)
    N = M * K
    mean_target = float(eta0.mean())
    sigmas = np.array([sigma_of_m(pot, avec[i * K:(i + 1) * K], eta0[i], tol)
                       for i in range(M)])
    taus = np.repeat(sigmas, K) - avec
    uniq, inv = np.unique(taus, return_inverse=True)
    samplers = {idx: _tilt_sampler(pot, t) for idx, t in enumerate(uniq)}
    masks = [inv == idx for idx in range(len(uniq))]

    states = np.empty((n_traj, N))
    for j in range(n_traj):
        key = rng.stream_key(seed, 2 * j)
        u = rng.uniform53(key, np.arange(N))
        x = np.empty(N)
        for idx, mask in enumerate(masks):
            x[mask] = samplers[idx](u[mask])
        states[j] = recenter(x, mean_target)
    entropy = entropy_of_tilt(eta0, pot, avec, K, sigmas=sigmas, tol=tol)
    keys = np.array([rng.stream_key(seed, 2 * j + 1) for j in range(n_traj)],
                    dtype=np.uint64)
    return states, entropy, keys


# ------------------------------------------------------------------ macro ODE
def macro_gradient(eta: np.ndarray, models: Sequence[FreeEnergyModel]) -> np.ndarray:
    """grad_Y Hbar: the vector of per-block psi_K'(eta_i) minus its average
    (tangency to Y_{M,m})."""
    g = np.array([mod.eval_d1(e) for mod, e in zip(models, eta)])
    return g - g.mean()


def macro_energy(eta: np.ndarray, models: Sequence[FreeEnergyModel]) -> float:
    """Hbar(eta) = (1/M) sum_i psi_{K,i}(eta_i)."""
    return float(np.mean([mod.value(e) for mod, e in zip(models, eta)]))


def macro_ode_step(eta: np.ndarray, models: Sequence[FreeEnergyModel],
                   dt: float, N: int) -> np.ndarray:
    """One RK4 step of d eta/dt = -Abar grad_Y Hbar(eta); mean conserved."""
    M = len(eta)

    def rhs(e):
        return -abar_apply(M, N, macro_gradient(e, models))

    k1 = rhs(eta)
    k2 = rhs(eta + 0.5 * dt * k1)
    k3 = rhs(eta + 0.5 * dt * k2)
    k4 = rhs(eta + dt * k3)
    out = eta + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return recenter(out, float(eta.mean()))


def macro_ode_integrate(eta0: np.ndarray, models: Sequence[FreeEnergyModel],
                        N: int, t_end: float, checkpoints: np.ndarray,
                        dt: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Integrate the coarse-grained ODE, returning eta at each checkpoint.

    dt defaults to 0.25 / (4 M^2 max psi_K'') (explicit stability with margin).
    """
    eta = np.array(eta0, dtype=float)
    M = len(eta)
    if dt is None:
        d2max = max(float(np.max(mod.d2)) for mod in models)
        dt = 0.25 / (4.0 * M * M * d2max)
    checkpoints = np.asarray(checkpoints, dtype=float)
    out = np.empty((len(checkpoints), M))
    t = 0.0
    ci = 0
    if checkpoints[0] <= 1e-15:
        out[0] = eta
        ci = 1
    while ci < len(checkpoints):
        target = checkpoints[ci]
        n = max(1, math.ceil((target - t) / dt))
        h = (target - t) / n
        for _ in range(n):
            eta = macro_ode_step(eta, models, h, N)
        t = target
        out[ci] = eta
        ci += 1
    return checkpoints, out


# ------------------------------------------------------------------ hydro PDE
def hydro_pde_step(grid: PdeGrid, fe_model: FreeEnergyModel, dt: float) -> PdeGrid:
    """Conservative explicit update of zeta_t = (phi_tilde'(zeta))_theta_theta."""
    z = grid.values
    dtheta = grid.dtheta
    d2max = float(np.max(fe_model.eval_d2(z)))
    dt_max = dtheta * dtheta / (2.0 * d2max)
    if dt > dt_max * (1 + 1e-12):
        raise IntegrationError(
            f"CFL violation: dt={dt:.3e} > {dt_max:.3e} required", step=0)
    flux = fe_model.eval_d1(z)
    lap = np.roll(flux, -1) - 2.0 * flux + np.roll(flux, 1)
    return PdeGrid(g=grid.g, values=z + dt / (dtheta * dtheta) * lap)


def hydro_pde_integrate(zeta0: np.ndarray, fe_model: FreeEnergyModel,
                        t_end: float, checkpoints: np.ndarray,
                        safety: float = 0.8) -> Tuple[np.ndarray, np.ndarray]:
    """Integrate the hydrodynamic PDE, returning cell values per checkpoint."""
    z = np.array(zeta0, dtype=float)
    g = len(z)
    dtheta = 1.0 / g
    checkpoints = np.asarray(checkpoints, dtype=float)
    out = np.empty((len(checkpoints), g))
    t = 0.0
    ci = 0
    if checkpoints[0] <= 1e-15:
        out[0] = z
        ci = 1
    while ci < len(checkpoints):
        target = checkpoints[ci]
        while t < target - 1e-15:
            d2max = float(np.max(fe_model.eval_d2(z)))
            dt = safety * dtheta * dtheta / (2.0 * d2max)
            dt = min(dt, target - t)
            flux = fe_model.eval_d1(z)
            lap = np.roll(flux, -1) - 2.0 * flux + np.roll(flux, 1)
            z = z + dt / (dtheta * dtheta) * lap
            t += dt
        out[ci] = z
        t = target
        ci += 1
    return checkpoints, out


def pde_energy(zeta: np.ndarray, fe_model: FreeEnergyModel) -> float:
    """Lyapunov functional int phi_tilde(zeta) dtheta (cell-average rule)."""
    return float(np.mean(fe_model.value(zeta)))


# ------------------------------------------------------------------ audit
def lyapunov_audit(values: Sequence[float], tol_scale: float = 1e-8) -> Dict:
    """Monotonicity report for a recorded Lyapunov functional trajectory."""
    v = np.asarray(values, dtype=float)
    increments = np.diff(v)
    max_up = float(increments.max(initial=0.0))
    tol = tol_scale * (abs(v[0]) + 1.0)
    return {
        "max_positive_increment": max_up,
        "tolerance": tol,
        "passed": bool(max_up <= tol),
        "initial": float(v[0]),
        "final": float(v[-1]),
    }
