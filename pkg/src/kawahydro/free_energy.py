"""One-site log-partitions, exponential tilts, and the macroscopic /
hydrodynamic free energies with their Legendre-transform structure.

Conventions (used consistently everywhere):
  * Hamiltonian H(x) = sum_i psi(x_i) + a_i x_i, so the one-site Boltzmann
    factor is exp(-psi(x) - a x) and the exponential tilt at parameter s is
    mu_s ~ exp(s x - psi(x)) with log-partition phi_star(s).
  * phi_K(m) = sup_s [ s m - (1/K) sum_j phi_star(s - a_j) ], d1 = s,
    d2 = 1 / ((1/K) sum_j s2(s - a_j))  (variance identity).
  * The fiber {mean = m} carries (K-1)-dimensional Hausdorff measure, i.e. a
    factor sqrt(K) in the (x_1..x_{K-1}) parametrization; only this choice
    makes g = exp(K phi_K - K psi_K) hold with the Fourier-inversion density.
  * psi_K(m) = phi_K(m) - (1/K) log g_{K,m}(0).
"""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import PchipInterpolator

from .field import FieldSpec
from .potential import Potential
from .quadrature import ExpQuadResult, QuadratureError, exp_quadrature, find_peak

LOG_2PI = math.log(2.0 * math.pi)


class SolveError(RuntimeError):
    pass


@dataclass(frozen=True)
class TiltMoments:
    sigma: float
    m: float
    s2: float
    log_z: float


def _tilt_quadrature(pot: Potential, sigma: float, tol: float) -> ExpQuadResult:
    def exponent(x):
        return sigma * x - pot.value(x)

    def exponent_d1(x):
        return sigma - float(pot.d1(np.asarray(x, dtype=float)))

    x0 = sigma / max(pot.psi_c(np.zeros(1))[2][0], pot.lambda_min)
    peak = find_peak(exponent_d1, x0 - 1.0, x0 + 1.0)
    curv = max(float(pot.d2(np.asarray(peak))), pot.lambda_min / 2.0)
    width = 1.5 * math.sqrt(2.0 * (abs(math.log(tol)) + 14.0) / curv)
    return exp_quadrature(exponent, peak, width, tol)


def log_partition_1d(pot: Potential, sigma: float, tol: float = 1e-10) -> TiltMoments:
    """phi_star(sigma) = log int exp(sigma x - psi(x)) dx plus the first two
    central moments of the tilted measure, to absolute accuracy tol."""
    q = _tilt_quadrature(pot, sigma, tol)
    return TiltMoments(sigma=float(sigma), m=q.mean, s2=q.var, log_z=q.log_z)


def _weighted_moments(pot, avals, weights, sigma, tol):
    """(sum w phi*(sigma-a), sum w m(sigma-a), sum w s2(sigma-a)) with one
    quadrature per distinct a-value."""
    uniq, inv = np.unique(np.asarray(avals, dtype=float), return_inverse=True)
    wsum = np.zeros(len(uniq))
    np.add.at(wsum, inv, np.asarray(weights, dtype=float))
    lz = mm = vv = 0.0
    for a, w in zip(uniq, wsum):
        t = log_partition_1d(pot, sigma - a, tol)
        lz += w * t.log_z
        mm += w * t.m
        vv += w * t.s2
    return lz, mm, vv


def sigma_of_m(pot: Potential, block_field: Sequence[float], m: float,
               tol: float = 1e-10, weights: Optional[Sequence[float]] = None,
               max_iter: int = 80) -> float:
    """Solve (sum_j w_j m(sigma - a_j)) = m for sigma.

    Newton iteration with derivative sum_j w_j s2(sigma - a_j) > 0 and a
    bisection fallback on the (monotone) residual.
    """
    avals = np.asarray(block_field, dtype=float)
    if weights is None:
        weights = np.full(avals.shape, 1.0 / len(avals))
    d20 = float(pot.psi_c(np.zeros(1))[2][0])
    sigma = d20 * m + float(np.dot(weights, avals))
    lo = hi = None
    inner_tol = min(tol, 1e-10)
    for _ in range(max_iter):
        _, mean, var = _weighted_moments(pot, avals, weights, sigma, inner_tol)
        resid = mean - m
        if abs(resid) <= tol:
            return float(sigma)
        if resid > 0:
            hi = sigma if hi is None else min(hi, sigma)
        else:
            lo = sigma if lo is None else max(lo, sigma)
        step = -resid / max(var, 1e-14)
        cand = sigma + step
        if lo is not None and hi is not None and not (lo < cand < hi):
            cand = 0.5 * (lo + hi)
        elif abs(step) > 10.0:
            cand = sigma + math.copysign(10.0, step)
        sigma = cand
    raise SolveError(f"sigma_of_m did not converge for m={m} (last residual {resid:.3e})")


def phi_K(pot: Potential, block_field: Sequence[float], m: float,
          tol: float = 1e-10, weights: Optional[Sequence[float]] = None
          ) -> Tuple[float, float, float]:
    """Legendre value, slope sigma, and curvature of the block free energy."""
    avals = np.asarray(block_field, dtype=float)
    if weights is None:
        weights = np.full(avals.shape, 1.0 / len(avals))
    sigma = sigma_of_m(pot, avals, m, tol, weights)
    lz, _, var = _weighted_moments(pot, avals, weights, sigma, min(tol, 1e-10))
    return sigma * m - lz, sigma, 1.0 / var


def phi_tilde(pot: Potential, field_spec: FieldSpec, m: float,
              tol: float = 1e-10, gauss_order: int = 32) -> Tuple[float, float, float]:
    """phi_K with the block average replaced by the exact field expectation."""
    vals, w = field_spec.expectation_atoms(gauss_order)
    return phi_K(pot, vals, m, tol, weights=w)


def g_density(pot: Potential, block_field: Sequence[float], m: float,
              tol: float = 1e-8) -> float:
    """Density at 0 of (1/sqrt(K)) sum_i (X_i - m_i), X_i ~ tilt at sigma-a_i.

    Fourier inversion: g = (1/2pi) int prod_i h(sigma - a_i, xi/sqrt(K)) dxi
    with h the centered characteristic function of the tilt; the product is
    accumulated as exp(sum of complex logs) to avoid underflow at large K.
    """
    avals = np.asarray(block_field, dtype=float)
    K = len(avals)
    sigma = sigma_of_m(pot, avals, m, tol)
    uniq, counts = np.unique(avals, return_counts=True)
    quads = [_tilt_quadrature(pot, sigma - a, min(tol, 1e-10)) for a in uniq]
    s2bar = float(np.dot(counts, [q.var for q in quads])) / K

    xi_max = 1.5 * math.sqrt(2.0 * abs(math.log(tol * 1e-2)) / s2bar) * math.sqrt(1.0)
    n = 513
    prev = None
    for _ in range(24):
        xi = np.linspace(-xi_max, xi_max, n)
        log_prod = np.zeros(n, dtype=complex)
        for q, c, a in zip(quads, counts, uniq):
            # h(sigma-a, xi/sqrt(K)) for all xi at once via the tilt grid
            phase = np.outer(q.x - q.mean, xi / math.sqrt(K))
            hvals = (q.w[:, None] * np.exp(1j * phase)).sum(axis=0)
            log_prod += c * np.log(hvals)
        integrand = np.exp(log_prod)
        boundary = max(abs(integrand[0]), abs(integrand[-1]))
        if boundary > tol * 1e-2:
            xi_max *= 1.5
            prev = None
            continue
        h_xi = xi[1] - xi[0]
        w = np.full(n, h_xi)
        w[0] = w[-1] = 0.5 * h_xi
        val = np.sum(w * integrand) / (2.0 * math.pi)
        if abs(val.imag) > tol:
            n = 2 * n - 1
            prev = None
            continue
        if prev is not None and abs(val.real - prev) <= tol:
            if val.real <= 0:
                raise QuadratureError("g_density produced a nonpositive value", abs(val.real))
            return float(val.real)
        prev = val.real
        n = 2 * n - 1
    raise QuadratureError("g_density did not converge", abs(val.real - (prev or 0.0)))


def psi_K(pot: Potential, block_field: Sequence[float], m: float,
          tol: float = 1e-8) -> float:
    """Constrained per-site free energy via psi_K = phi_K - (1/K) log g."""
    K = len(block_field)
    value, _, _ = phi_K(pot, block_field, m, min(tol, 1e-10))
    g = g_density(pot, block_field, m, tol)
    return value - math.log(g) / K


def psi_K_direct(pot: Potential, block_field: Sequence[float], m: float,
                 tol: float = 1e-8, n0: int = 33, n_max: int = 513) -> float:
    """Oracle: hyperplane integral of exp(-sum psi(x_i) + a_i x_i) over the
    mean-m fiber with Hausdorff measure (factor sqrt(K)), K <= 4 only.

    Parametrized by (x_1..x_{K-1}) with x_K = K m - sum; tensor trapezoid
    grids doubled until the resulting psi value moves by less than tol.
    """
    avals = np.asarray(block_field, dtype=float)
    K = len(avals)
    if not 2 <= K <= 4:
        raise ValueError("psi_K_direct supports 2 <= K <= 4 (cost)")
    sigma = sigma_of_m(pot, avals, m, min(tol, 1e-10))
    tilts = [log_partition_1d(pot, sigma - a, min(tol, 1e-10)) for a in avals]
    centers = np.array([t.m for t in tilts])
    spread = np.sqrt(np.array([t.s2 for t in tilts]))
    cutoff = abs(math.log(tol)) + 14.0
    widths = 1.6 * np.sqrt(2.0 * cutoff) * (spread + spread[-1])

    def log_integrand(axes):
        grids = np.meshgrid(*axes, indexing="ij", sparse=True)
        xk = K * m
        e = 0.0
        for j in range(K - 1):
            xj = grids[j]
            e = e - pot.value(xj) - avals[j] * xj
            xk = xk - xj
        e = e - pot.value(xk) - avals[K - 1] * xk
        return e

    prev = None
    n = n0
    for _ in range(12):
        axes = [np.linspace(centers[j] - widths[j], centers[j] + widths[j], n)
                for j in range(K - 1)]
        e = log_integrand(axes)
        emax = float(e.max())
        vals = np.exp(e - emax)
        # boundary decay check on every face
        for j in range(K - 1):
            face_hi = np.take(vals, -1, axis=j).max()
            face_lo = np.take(vals, 0, axis=j).max()
            if max(face_hi, face_lo) > tol * 1e-2:
                widths[j] *= 1.5
                break
        else:
            from .quadrature import trapezoid_nd

            spacings = [ax[1] - ax[0] for ax in axes]
            integral = trapezoid_nd(vals, spacings)
            log_int = emax + math.log(integral) + 0.5 * math.log(K)
            psi_val = -log_int / K
            if prev is not None and abs(psi_val - prev) <= tol:
                return psi_val
            prev = psi_val
            if n >= n_max:
                raise QuadratureError("psi_K_direct did not converge", abs(psi_val - prev))
            n = 2 * n - 1
            continue
        prev = None
    raise QuadratureError("psi_K_direct domain growth failed")


@dataclass(frozen=True)
class FreeEnergyModel:
    """Tabulated free energy with convexity-preserving interpolation.

    d1 is interpolated monotonically (PCHIP); the value is the exact
    antiderivative of that interpolant anchored at the first node, so
    value' == d1 identically.  d2 is an independent tabulation used for
    convexity checks and CFL bounds.
    """

    kind: str
    grid: np.ndarray
    values: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    K: Optional[int] = None
    block_field: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("phi_K", "psi_K", "phi_tilde"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if len(self.grid) < 4:
            raise ValueError("need at least 4 grid nodes for cubic interpolation")
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if np.any(self.d2 <= 0):
            raise ValueError(f"{self.kind}: tabulated d2 must be positive at every node")
        if np.any(np.diff(self.d1) <= 0):
            raise ValueError(f"{self.kind}: tabulated d1 must be strictly increasing")
        d1_interp = PchipInterpolator(self.grid, self.d1, extrapolate=False)
        object.__setattr__(self, "_d1_interp", d1_interp)
        object.__setattr__(self, "_value_anti", d1_interp.antiderivative())
        object.__setattr__(self, "_d2_interp",
                           PchipInterpolator(self.grid, self.d2, extrapolate=False))

    def _check_domain(self, m):
        m = np.asarray(m, dtype=float)
        if np.any(m < self.grid[0]) or np.any(m > self.grid[-1]):
            raise ValueError(
                f"argument outside tabulated domain [{self.grid[0]}, {self.grid[-1]}]")
        return m

    def value(self, m):
        m = self._check_domain(m)
        return self.values[0] + self._value_anti(m) - self._value_anti(self.grid[0])

    def eval_d1(self, m):
        return self._d1_interp(self._check_domain(m))

    def eval_d2(self, m):
        return self._d2_interp(self._check_domain(m))


def tabulate(pot: Potential, field_obj, kind: str, K: Optional[int],
             m_grid: Sequence[float], tol: float = 1e-8) -> FreeEnergyModel:
    """Fill a FreeEnergyModel on m_grid.

    field_obj is a block a-vector for phi_K / psi_K and a FieldSpec for
    phi_tilde.  Any node failure aborts with the node identity attached.
    """
    m_grid = np.asarray(m_grid, dtype=float)
    if len(m_grid) < 4:
        raise ValueError("need at least 4 grid nodes for cubic interpolation")
    vals = np.empty(len(m_grid))
    d1 = np.empty(len(m_grid))
    d2 = np.empty(len(m_grid))
    block = None
    if kind in ("phi_K", "psi_K"):
        block = np.asarray(field_obj, dtype=float)
        if K is not None and len(block) != K:
            raise ValueError("block_field length must equal K")
        K = len(block)
    for idx, m in enumerate(m_grid):
        try:
            if kind == "phi_K":
                vals[idx], d1[idx], d2[idx] = phi_K(pot, block, m, tol)
            elif kind == "phi_tilde":
                vals[idx], d1[idx], d2[idx] = phi_tilde(pot, field_obj, m, tol)
            elif kind == "psi_K":
                vals[idx] = psi_K(pot, block, m, tol)
            else:
                raise ValueError(f"unknown kind {kind!r}")
        except (QuadratureError, SolveError) as exc:
            raise type(exc)(f"tabulation failed at node m={m} ({kind}): {exc}")
    if kind == "psi_K":
        # derivatives by central differences on the tabulation grid
        h = m_grid[1] - m_grid[0]
        d1[1:-1] = (vals[2:] - vals[:-2]) / (2 * h)
        d2[1:-1] = (vals[2:] - 2 * vals[1:-1] + vals[:-2]) / (h * h)
        d1[0] = (-3 * vals[0] + 4 * vals[1] - vals[2]) / (2 * h)
        d1[-1] = (3 * vals[-1] - 4 * vals[-2] + vals[-3]) / (2 * h)
        d2[0] = d2[1]
        d2[-1] = d2[-2]
    meta = {"potential": pot.name, "tol": tol}
    return FreeEnergyModel(kind=kind, grid=m_grid, values=vals, d1=d1, d2=d2,
                           K=K, block_field=block, meta=meta)


def export_csv(model: FreeEnergyModel, path, sidecar_extra: Optional[dict] = None) -> None:
    """CSV of (m, value, d1, d2) plus a JSON sidecar with provenance."""
    path = Path(path)
    rows = np.column_stack([model.grid, model.values, model.d1, model.d2])
    header = "m,value,d1,d2"
    np.savetxt(path, rows, delimiter=",", header=header, comments="", fmt="%.17g")
    sidecar = {
        "kind": model.kind,
        "K": model.K,
        "block_field": None if model.block_field is None else list(map(float, model.block_field)),
        **model.meta,
    }
    if sidecar_extra:
        sidecar.update(sidecar_extra)
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2))
