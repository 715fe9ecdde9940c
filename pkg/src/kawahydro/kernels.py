"""Hot inner loops for the conservative SDE ensemble.

The Euler-Maruyama update is written in fluctuation-dissipation form with the
bidiagonal factor D of the mobility, (D x)_i = N (x_{i+1} - x_i), so that
A = D^T D and the noise sqrt(2 dt) D^T xi has covariance 2 A dt exactly while
conserving the mean identically (telescoping).  The numba kernel draws its
normals site-by-site from the counter-based ziggurat; the numpy fallback
replays the same counters vectorized, so the two backends agree
trajectory-for-trajectory (up to 1-ulp rejection-branch effects).

Draw indexing: trajectory j uses stream key keys[j]; the noise for site i of
global step s is draw number s*N + i of that stream.
"""

import math

import numpy as np

from . import rng
from .backend import HAVE_NUMBA, USE_NUMBA
from .potential import KERNEL_GAUSSIAN, KERNEL_PERTURBED_QUARTIC, KERNEL_QUARTIC, Potential

U64 = np.uint64


def psi1_np(code: int, amp: float, x: np.ndarray) -> np.ndarray:
    if code == KERNEL_GAUSSIAN:
        return x
    if code == KERNEL_QUARTIC:
        return x * x * x + x
    if code == KERNEL_PERTURBED_QUARTIC:
        return x * x * x + x - amp * np.sin(x)
    raise ValueError(f"unknown kernel code {code}")


def psi2_max(code: int, amp: float, abs_x_max: float) -> float:
    """Upper bound on psi'' over |x| <= abs_x_max (monotone envelope)."""
    if code == KERNEL_GAUSSIAN:
        return 1.0
    if code == KERNEL_QUARTIC:
        return 1.0 + 3.0 * abs_x_max * abs_x_max
    if code == KERNEL_PERTURBED_QUARTIC:
        return 1.0 + 3.0 * abs_x_max * abs_x_max + abs(amp)
    raise ValueError(f"unknown kernel code {code}")


def kernel_code(pot: Potential):
    return pot.kernel_code, pot.kernel_param


# ---------------------------------------------------------------------------
# numpy fallback: batched over trajectories
# ---------------------------------------------------------------------------
def sde_chunk_np(states, keys, step0, nsteps, dt, code, amp, avec, mean_target,
                 overflow_guard=1e6):
    """Advance all trajectories nsteps; returns (fail_step, max_abs_x).

    fail_step is -1 if no overflow occurred, else the 0-based global step
    index at which some |x_i| exceeded the guard.
    """
    n_traj, N = states.shape
    c_noise = math.sqrt(2.0 * dt)
    NN = float(N)
    N2 = NN * NN
    max_abs = 0.0
    site_ids = np.arange(N, dtype=U64)
    with np.errstate(over="ignore"):
        keycol = np.asarray(keys, dtype=U64)[:, None]
    for s in range(nsteps):
        g = psi1_np(code, amp, states) + avec[None, :]
        lap = N2 * (2.0 * g - np.roll(g, 1, axis=1) - np.roll(g, -1, axis=1))
        with np.errstate(over="ignore"):
            base = keycol + (U64((step0 + s) * N) + site_ids) * rng.GOLD
        xi = rng.ziggurat_from_base(base)
        noise = NN * (np.roll(xi, 1, axis=1) - xi)
        states += -dt * lap + c_noise * noise
        states += mean_target - states.mean(axis=1, keepdims=True)
        m = float(np.abs(states).max())
        max_abs = max(max_abs, m)
        if m > overflow_guard:
            return step0 + s, max_abs
    return -1, max_abs


# ---------------------------------------------------------------------------
# numba kernel: scalar loops, parallel over trajectories
# ---------------------------------------------------------------------------
if HAVE_NUMBA:
    from numba import njit, prange

    from .rng import GOLD, ZIG_X, ZIG_Y, _zig_one

    @njit(cache=True, fastmath=True)
    def _sde_one(x, key, step0, nsteps, dt, code, amp, avec, mean_target,
                 overflow_guard, xt, yt):
        N = x.shape[0]
        NN = float(N)
        N2 = NN * NN
        c_noise = math.sqrt(2.0 * dt)
        g = np.empty(N)
        xi = np.empty(N)
        max_abs = 0.0
        for s in range(nsteps):
            if code == 0:
                for i in range(N):
                    g[i] = x[i] + avec[i]
            elif code == 1:
                for i in range(N):
                    g[i] = x[i] * x[i] * x[i] + x[i] + avec[i]
            else:
                for i in range(N):
                    g[i] = x[i] * x[i] * x[i] + x[i] - amp * math.sin(x[i]) + avec[i]
            base0 = key + (U64(step0 + s) * U64(N)) * GOLD
            for i in range(N):
                xi[i] = _zig_one(base0 + U64(i) * GOLD, xt, yt)
            prev_g = g[N - 1]
            prev_xi = xi[N - 1]
            acc = 0.0
            for i in range(N):
                nxt = i + 1 if i + 1 < N else 0
                lap = N2 * (2.0 * g[i] - g[nxt] - prev_g)
                noi = NN * (prev_xi - xi[i])
                prev_g = g[i]
                prev_xi = xi[i]
                xnew = x[i] - dt * lap + c_noise * noi
                x[i] = xnew
                acc += xnew
            shift = mean_target - acc / NN
            amax = 0.0
            for i in range(N):
                x[i] += shift
                ax = abs(x[i])
                if ax > amax:
                    amax = ax
            if amax > max_abs:
                max_abs = amax
            if amax > overflow_guard:
                return step0 + s, max_abs
        return -1, max_abs

    @njit(cache=True, parallel=True)
    def _sde_chunk_nb(states, keys, step0, nsteps, dt, code, amp, avec,
                      mean_target, overflow_guard, xt, yt):
        n_traj = states.shape[0]
        fails = np.empty(n_traj, dtype=np.int64)
        maxes = np.empty(n_traj)
        for j in prange(n_traj):
            f, m = _sde_one(states[j], keys[j], step0, nsteps, dt, code, amp,
                            avec, mean_target, overflow_guard, xt, yt)
            fails[j] = f
            maxes[j] = m
        return fails, maxes

    def sde_chunk_nb(states, keys, step0, nsteps, dt, code, amp, avec,
                     mean_target, overflow_guard=1e6):
        fails, maxes = _sde_chunk_nb(states, np.asarray(keys, dtype=U64),
                                     int(step0), int(nsteps), float(dt),
                                     int(code), float(amp),
                                     np.asarray(avec, dtype=float),
                                     float(mean_target),
                                     float(overflow_guard), ZIG_X, ZIG_Y)
        bad = fails[fails >= 0]
        fail = int(bad.min()) if bad.size else -1
        return fail, float(maxes.max())

else:  # pragma: no cover
    sde_chunk_nb = None


def sde_chunk(states, keys, step0, nsteps, dt, code, amp, avec, mean_target,
              overflow_guard=1e6):
    """Backend-dispatched ensemble chunk integrator (in-place on states)."""
    if USE_NUMBA:
        return sde_chunk_nb(states, keys, step0, nsteps, dt, code, amp, avec,
                            mean_target, overflow_guard)
    return sde_chunk_np(states, keys, step0, nsteps, dt, code, amp, avec,
                        mean_target, overflow_guard)
