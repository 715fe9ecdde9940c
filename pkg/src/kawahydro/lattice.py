"""The two discrete scales and their operators.

Micro states live on X_{N,m} (mean-m hyperplane of R^N, plain l2 inner
product); macro profiles on Y_{M,m} with <y,z>_Y = (1/M) sum y_i z_i.
P block-averages, N P^t lifts blockwise-constant, and the mobility
A = N^2 (2 - shift - shift^T) is the scaled periodic discrete Laplacian.
A^{-1} is applied in O(N) through cumulative sums; sqrt(2A) through the
circulant spectral decomposition.
"""

import threading
from dataclasses import dataclass
from typing import Dict, Sequence, Tuple

import numpy as np

MEAN_TOL = 1e-9


@dataclass(frozen=True)
class MicroState:
    n: int
    mean: float
    x: np.ndarray

    def __post_init__(self):
        if self.x.shape != (self.n,):
            raise ValueError("state vector length must equal n")
        if abs(self.x.mean() - self.mean) > MEAN_TOL:
            raise ValueError("state mean deviates from declared mean")


@dataclass(frozen=True)
class MacroProfile:
    m_blocks: int
    mean: float
    y: np.ndarray

    def __post_init__(self):
        if self.y.shape != (self.m_blocks,):
            raise ValueError("profile length must equal m_blocks")
        if abs(self.y.mean() - self.mean) > MEAN_TOL:
            raise ValueError("profile mean deviates from declared mean")


def micro_state(x: np.ndarray) -> MicroState:
    x = np.asarray(x, dtype=float)
    return MicroState(n=len(x), mean=float(x.mean()), x=x)


def macro_profile(y: np.ndarray) -> MacroProfile:
    y = np.asarray(y, dtype=float)
    return MacroProfile(m_blocks=len(y), mean=float(y.mean()), y=y)


def recenter(x: np.ndarray, mean: float = 0.0) -> np.ndarray:
    """Project onto the mean-`mean` hyperplane (corrects rounding drift)."""
    return x + (mean - x.mean())


# ------------------------------------------------------------------ P, NP^t
def project_P(x: np.ndarray, K: int) -> np.ndarray:
    """Block averages of K consecutive sites."""
    x = np.asarray(x, dtype=float)
    if len(x) % K:
        raise ValueError(f"K={K} does not divide N={len(x)}")
    return x.reshape(-1, K).mean(axis=1)


def lift_Pt(y: np.ndarray, K: int) -> np.ndarray:
    """N P^t: embed a macro profile as a blockwise-constant micro profile."""
    return np.repeat(np.asarray(y, dtype=float), K)


# ------------------------------------------------------------------ A
def apply_A(x: np.ndarray) -> np.ndarray:
    """(Ax)_i = N^2 (-x_{i-1} + 2 x_i - x_{i+1}), periodic."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    return n * n * (2.0 * x - np.roll(x, 1) - np.roll(x, -1))


def a_eigenvalues(n: int) -> np.ndarray:
    """Circulant spectrum 4 N^2 sin^2(pi k / N), k = 0..N-1."""
    k = np.arange(n)
    return 4.0 * n * n * np.sin(np.pi * k / n) ** 2


def solve_A(b: np.ndarray) -> np.ndarray:
    """Unique mean-zero solution of A x = b for mean-zero b, via double
    cumulative sums: with d_i = x_{i+1} - x_i, the stencil gives
    d_i = d_{i-1} - b_i / N^2, and periodicity pins sum(d) = 0."""
    b = np.asarray(b, dtype=float)
    n = len(b)
    if abs(b.sum()) > 1e-8 * max(1.0, np.abs(b).sum()):
        raise ValueError("solve_A requires a mean-zero right-hand side")
    c = np.cumsum(b) / (n * n)
    d = -c + c.mean()  # differences x_{i+1} - x_i for i = 0..n-1, sum zero
    x = np.empty(n)
    x[0] = 0.0
    x[1:] = np.cumsum(d[:-1])
    return x - x.mean()


def sqrt2A_mul(xi: np.ndarray) -> np.ndarray:
    """Apply sqrt(2A) spectrally: Fourier mode k scaled by
    sqrt(2 * 4 N^2 sin^2(pi k/N)); the mean mode is annihilated."""
    xi = np.asarray(xi, dtype=float)
    n = len(xi)
    lam = a_eigenvalues(n)[: n // 2 + 1]
    f = np.fft.rfft(xi)
    f *= np.sqrt(2.0 * lam)
    return np.fft.irfft(f, n)


def hminus1_sq_discrete(x: np.ndarray) -> float:
    """(1/N) <A^{-1} x, x> via the cumulative-sum representation
    x_i = N (F_{i+1} - F_i), sum F = 0; returns (1/N) sum F_i^2."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    if abs(x.sum()) > 1e-8 * max(1.0, np.abs(x).sum()):
        raise ValueError("hminus1_sq_discrete requires a mean-zero vector")
    F = np.empty(n)
    F[0] = 0.0
    F[1:] = np.cumsum(x[:-1]) / n
    F -= F.mean()
    return float(np.dot(F, F) / n)


def hminus1_sq_step(values: np.ndarray, n: int = None) -> float:
    """Exact squared H^{-1} norm of the zero-mean step function with cell
    values `values` on the unit torus (piecewise-linear primitive)."""
    x = np.asarray(values, dtype=float)
    if n is None:
        n = len(x)
    if len(x) != n:
        raise ValueError("values length must equal n")
    if abs(x.sum()) > 1e-8 * max(1.0, np.abs(x).sum()):
        raise ValueError("hminus1_sq_step requires a zero-mean step function")
    F = np.empty(n)
    F[0] = 0.0
    F[1:] = np.cumsum(x[:-1]) / n
    F -= F.mean()
    dF = np.diff(np.append(F, F[0]))  # F_{i+1} - F_i, periodic
    return float(np.sum(F * F + dF * F + dF * dF / 3.0) / n)


# ------------------------------------------------------------------ Abar
_ABAR_CACHE: Dict[Tuple[int, int], Dict[str, np.ndarray]] = {}
_ABAR_LOCK = threading.Lock()


def _abar_entry(N: int, M: int) -> Dict[str, np.ndarray]:
    """Dense Abar^{-1} = P A^{-1} N P^t on the mean-zero subspace of Y and its
    pseudo-inverse, assembled once per (N, M) and cached."""
    if N % M:
        raise ValueError(f"M={M} must divide N={N}")
    key = (N, M)
    with _ABAR_LOCK:
        entry = _ABAR_CACHE.get(key)
        if entry is not None:
            return entry
        K = N // M
        cols = np.empty((M, M))
        for j in range(M):
            e = np.zeros(M)
            e[j] = 1.0
            e -= e.mean()
            cols[:, j] = project_P(solve_A(lift_Pt(e, K)), K)
        # symmetrize (roundoff) and pseudo-invert on the mean-zero subspace
        binv = 0.5 * (cols + cols.T)
        q = np.eye(M) - np.full((M, M), 1.0 / M)
        abar = np.linalg.pinv(binv, rcond=1e-12)
        abar = q @ abar @ q
        entry = {"abar_inv": binv, "abar": abar}
        _ABAR_CACHE[key] = entry
        return entry


def abar_apply(M: int, N: int, v: np.ndarray) -> np.ndarray:
    """Abar v for mean-zero macro v (constants are outside the domain)."""
    v = np.asarray(v, dtype=float)
    if len(v) != M:
        raise ValueError("vector length must equal M")
    if abs(v.sum()) > 1e-8 * max(1.0, np.abs(v).sum()):
        raise ValueError("abar_apply requires a mean-zero vector")
    return _abar_entry(N, M)["abar"] @ v


def abar_inv_apply(M: int, N: int, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return _abar_entry(N, M)["abar_inv"] @ (v - v.mean())


def abar_inv_quadform(M: int, N: int, v: np.ndarray) -> float:
    """<v, Abar^{-1} v>_Y (the Y inner product carries the 1/M factor)."""
    v = np.asarray(v, dtype=float) - np.mean(v)
    return float(np.dot(v, _abar_entry(N, M)["abar_inv"] @ v) / M)


# ------------------------------------------------------------------ Theta
def theta(samples: Sequence[np.ndarray], eta: np.ndarray, K: int) -> Tuple[float, float]:
    """Monte-Carlo estimate of (1/2N) <A^{-1}(x - NP^t eta), x - NP^t eta>
    over the sample set, with its standard error."""
    if len(samples) == 0:
        raise ValueError("theta requires at least one sample")
    lifted = lift_Pt(np.asarray(eta, dtype=float), K)
    vals = np.empty(len(samples))
    for i, x in enumerate(samples):
        delta = np.asarray(x, dtype=float) - lifted
        delta = delta - delta.mean()
        vals[i] = 0.5 * hminus1_sq_discrete(delta)
    stderr = vals.std(ddof=1) / np.sqrt(len(vals)) if len(vals) > 1 else 0.0
    return float(vals.mean()), float(stderr)
