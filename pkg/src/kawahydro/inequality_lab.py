"""Numerical verification of the functional inequalities at small size.

Everything here works on densely discretized canonical fibers with K in
{2, 3} free spins: the local Cramer gap psi_K - phi_K, the Caputo variance
bounds, the one-dimensional asymmetric Brascamp-Lieb inequality, the
two-scale covariance estimate, and spectral gaps of canonical ensembles.

Fiber conventions:
  * covariance estimate: the Fisher-type right-hand side sums derivatives in
    the eliminated parametrization u = (x_1..x_{K-1}), x_K = K m - sum u, so
    d/du_i = d/dx_i - d/dx_K (documented convention);
  * spectral gap: the fiber is parametrized isometrically by an orthonormal
    (Helmert) basis of the mean-zero subspace, so the Dirichlet form is the
    plain gradient squared against the fiber measure and the gaussian K=2
    zero-field gap is exactly 1.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import eigsh

from . import free_energy as fe
from .field import FieldSpec, realize_field
from .potential import Potential


# ------------------------------------------------------------------ fibers
def helmert_basis(K: int) -> np.ndarray:
    """Orthonormal basis (columns) of the mean-zero subspace of R^K."""
    v = np.zeros((K, K - 1))
    for j in range(1, K):
        v[:j, j - 1] = 1.0
        v[j, j - 1] = -j
        v[:, j - 1] /= math.sqrt(j * (j + 1))
    return v


@dataclass
class FiberGrid:
    """Dense quadrature of the canonical fiber X_{K,m} in eliminated
    coordinates u = (x_1..x_{K-1}); mass normalized to 1."""

    K: int
    m: float
    axes: List[np.ndarray]  # u-axes
    x: np.ndarray  # site values, shape grid_shape + (K,)
    w: np.ndarray  # probability masses, shape grid_shape

    def integrate(self, values: np.ndarray) -> float:
        return float(np.sum(self.w * values))


def fiber_grid(pot: Potential, block_field: Sequence[float], m: float,
               n_nodes: int = 201, width_factor: float = 1.35,
               tol: float = 1e-9) -> FiberGrid:
    avals = np.asarray(block_field, dtype=float)
    K = len(avals)
    if not 2 <= K <= 3:
        raise ValueError("dense fiber grids support K in {2, 3}")
    sigma = fe.sigma_of_m(pot, avals, m, tol)
    tilts = [fe.log_partition_1d(pot, sigma - a, 1e-10) for a in avals]
    centers = np.array([t.m for t in tilts])
    spread = np.sqrt([t.s2 for t in tilts])
    cutoff = math.sqrt(2.0 * (abs(math.log(tol)) + 12.0))
    widths = width_factor * cutoff * (spread[:-1] + spread[-1])
    axes = [np.linspace(centers[j] - widths[j], centers[j] + widths[j], n_nodes)
            for j in range(K - 1)]
    grids = list(np.meshgrid(*axes, indexing="ij"))
    xk = K * m - sum(grids)
    x = np.stack(grids + [xk], axis=-1)
    energy = np.zeros(x.shape[:-1])
    for i in range(K):
        energy += pot.value(x[..., i]) + avals[i] * x[..., i]
    dens = np.exp(-(energy - energy.min()))
    w = dens.copy()
    for ax_idx, ax in enumerate(axes):
        h = ax[1] - ax[0]
        shape = [1] * (K - 1)
        shape[ax_idx] = n_nodes
        tw = np.full(n_nodes, h)
        tw[0] = tw[-1] = h / 2
        w = w * tw.reshape(shape)
    w /= w.sum()
    return FiberGrid(K=K, m=m, axes=axes, x=x, w=w)


# ------------------------------------------------------------------ families
@dataclass(frozen=True)
class FiberTestFunction:
    name: str
    raw: Callable[[np.ndarray], np.ndarray]  # x (..., K) -> values
    raw_grad: Callable[[np.ndarray], np.ndarray]  # x (..., K) -> (..., K)


@dataclass(frozen=True)
class TestFunctionFamily:
    kind: str
    count: int
    seed: int = 0

    def members(self, K: int) -> List[FiberTestFunction]:
        g = np.random.default_rng(self.seed)
        out = []
        for idx in range(self.count):
            if self.kind == "fourier":
                omega = g.integers(-2, 3, size=K).astype(float)
                if not omega.any():
                    omega[0] = 1.0
                phase = g.uniform(0, 2 * math.pi)

                def raw(x, om=omega, ph=phase):
                    return np.cos(x @ om + ph)

                def raw_grad(x, om=omega, ph=phase):
                    s = -np.sin(x @ om + ph)
                    return s[..., None] * om

            elif self.kind == "gaussian_bump":
                center = g.uniform(-1.0, 1.0, size=K)
                width = g.uniform(0.6, 1.6)

                def raw(x, c=center, w=width):
                    return np.exp(-np.sum((x - c) ** 2, axis=-1) / (2 * w * w))

                def raw_grad(x, c=center, w=width):
                    v = np.exp(-np.sum((x - c) ** 2, axis=-1) / (2 * w * w))
                    return v[..., None] * (c - x) / (w * w)

            elif self.kind == "hermite":
                degs = g.integers(0, 3, size=K)
                if not degs.any():
                    degs[0] = 1

                def raw(x, d=degs):
                    out_v = np.ones(x.shape[:-1])
                    for i, di in enumerate(d):
                        out_v = out_v * np.polynomial.hermite_e.hermeval(x[..., i], [0] * di + [1])
                    return out_v

                def raw_grad(x, d=degs):
                    grads = np.empty(x.shape)
                    for i in range(len(d)):
                        gi = np.ones(x.shape[:-1])
                        for j, dj in enumerate(d):
                            cj = [0] * dj + [1]
                            if j == i:
                                gi = gi * np.polynomial.hermite_e.hermeval(
                                    x[..., j], np.polynomial.hermite_e.hermeder(cj))
                            else:
                                gi = gi * np.polynomial.hermite_e.hermeval(x[..., j], cj)
                        grads[..., i] = gi
                    return grads

            else:
                raise ValueError(f"unknown family kind {self.kind!r}")
            out.append(FiberTestFunction(f"{self.kind}[{idx}]", raw, raw_grad))
        return out


def normalize_on_fiber(f: FiberTestFunction, grid: FiberGrid
                       ) -> Tuple[np.ndarray, np.ndarray]:
    """Affine rescaling to min f > 0 and unit mass; returns (f, grad) grids."""
    raw = f.raw(grid.x)
    lo, hi = float(raw.min()), float(raw.max())
    span = hi - lo
    if span <= 1e-14 * (abs(hi) + 1.0):
        # constant raw function: normalizes to f == 1
        return np.ones_like(raw), np.zeros(grid.x.shape)
    vals = raw + (-lo + 0.1 * span)
    z = grid.integrate(vals)
    vals = vals / z
    grads = f.raw_grad(grid.x) / z
    if vals.min() <= 0:
        raise ValueError(f"test function {f.name} nonpositive after normalization")
    return vals, grads


# ------------------------------------------------------------------ Cramer
@dataclass
class CramerReport:
    k_list: List[int]
    sup_diff: List[float]
    slope: float
    min_psi_dd: List[float]
    min_phi_dd: List[float]
    m_grid: np.ndarray
    rows: List[dict] = field(default_factory=list)


def check_cramer(pot: Potential, field_spec: FieldSpec, k_list: Sequence[int],
                 m_grid: Sequence[float], tol: float = 1e-8) -> CramerReport:
    """sup_m |psi_K - phi_K| per K, log-log slope in K, min psi_K''."""
    m_grid = np.asarray(m_grid, dtype=float)
    h = m_grid[1] - m_grid[0]
    sup_diff, min_psi_dd, min_phi_dd, rows = [], [], [], []
    for K in k_list:
        avals = realize_field(field_spec, K).values
        psis = np.empty(len(m_grid))
        phis = np.empty(len(m_grid))
        phi_dd = np.empty(len(m_grid))
        for i, m in enumerate(m_grid):
            phis[i], _, phi_dd[i] = fe.phi_K(pot, avals, m, min(tol, 1e-9))
            psis[i] = fe.psi_K(pot, avals, m, tol)
        diff = np.abs(psis - phis)
        psi_dd = (psis[2:] - 2 * psis[1:-1] + psis[:-2]) / (h * h)
        sup_diff.append(float(diff.max()))
        min_psi_dd.append(float(psi_dd.min()))
        min_phi_dd.append(float(phi_dd.min()))
        for m, d in zip(m_grid, diff):
            rows.append({"K": int(K), "m": float(m), "abs_diff": float(d)})
    slope = float(np.polyfit(np.log(np.asarray(k_list, float)),
                             np.log(np.asarray(sup_diff)), 1)[0])
    return CramerReport(k_list=list(k_list), sup_diff=sup_diff, slope=slope,
                        min_psi_dd=min_psi_dd, min_phi_dd=min_phi_dd,
                        m_grid=m_grid, rows=rows)


# ------------------------------------------------------------------ Caputo
def check_caputo(pot: Potential, sigma_grid: Sequence[float],
                 tol: float = 1e-10) -> float:
    """Fitted C: worst of s^2 psi_c''(m) and its reciprocal over the grid."""
    worst = 0.0
    for sigma in np.asarray(sigma_grid, dtype=float):
        t = fe.log_partition_1d(pot, sigma, tol)
        ratio = t.s2 * float(pot.psi_c(np.asarray(t.m))[2])
        worst = max(worst, ratio, 1.0 / ratio)
    return worst


# ------------------------------------------------------------------ BL
@dataclass
class AsymBLResult:
    lhs: float
    rhs_plus: float  # with factor exp(+3 osc delta_psi): the tested claim
    rhs_minus: float  # with the printed exp(-3 osc) factor, recorded only
    ratio: float


def check_asym_bl(pot: Potential, f_pair, g_pair, tol: float = 1e-10,
                  x_span: float = 8.0) -> AsymBLResult:
    """|cov_nu(f,g)| vs exp(+-3 osc delta_psi) sup|g'/psi_c''| int |f'| dnu
    for nu = Z^{-1} e^{-psi} on R; f_pair/g_pair are (value, derivative)
    callables."""
    q = fe._tilt_quadrature(pot, 0.0, tol)
    x, w = q.x, q.w
    fv, fd = f_pair[0](x), f_pair[1](x)
    gv, gd = g_pair[0](x), g_pair[1](x)
    mean_f = np.sum(w * fv)
    mean_g = np.sum(w * gv)
    lhs = abs(float(np.sum(w * (fv - mean_f) * (gv - mean_g))))
    grid = np.linspace(-x_span, x_span, 4001)
    psi_c_dd = pot.psi_c(grid)[2]
    sup_ratio = float(np.max(np.abs(g_pair[1](grid)) / psi_c_dd))
    int_fprime = float(np.sum(w * np.abs(fd)))
    dv = pot.delta_psi(grid)[0]
    osc = float(dv.max() - dv.min())
    base = sup_ratio * int_fprime
    rhs_plus = math.exp(3 * osc) * base
    rhs_minus = math.exp(-3 * osc) * base
    ratio = lhs / rhs_plus if rhs_plus > 0 else 0.0
    return AsymBLResult(lhs=lhs, rhs_plus=rhs_plus, rhs_minus=rhs_minus, ratio=ratio)


# ------------------------------------------------------------------ covariance
def check_covariance_estimate(pot: Potential, block_field: Sequence[float],
                              K: int, m: float, family: TestFunctionFamily,
                              tol: float = 1e-9, n_nodes: Optional[int] = None
                              ) -> dict:
    """Empirical C0 candidate for
    |cov(f, (1/K) sum psi'(x_i))|^2 <= C0 K int (sum_{i<K} |df/du_i|^2 / f) dmu.

    Returns the max over the family of lhs^2/(K rhs) plus per-member rows.
    """
    avals = np.asarray(block_field, dtype=float)
    if len(avals) != K:
        raise ValueError("block_field length must equal K")
    if n_nodes is None:
        n_nodes = 401 if K == 2 else 121
    grid = fiber_grid(pot, avals, m, n_nodes=n_nodes, tol=tol)
    obs = np.zeros(grid.x.shape[:-1])
    for i in range(K):
        obs += pot.d1(grid.x[..., i])
    obs /= K
    obs_mean = grid.integrate(obs)

    worst = 0.0
    rows = []
    for member in family.members(K):
        vals, grads = normalize_on_fiber(member, grid)
        lhs = grid.integrate(obs * vals) - obs_mean  # mass 1 after normalization
        fisher = np.zeros_like(vals)
        for i in range(K - 1):
            du = grads[..., i] - grads[..., K - 1]
            fisher += du * du
        rhs = grid.integrate(fisher / vals)
        ratio = 0.0 if rhs == 0.0 else (lhs * lhs) / (K * rhs)
        rows.append({"member": member.name, "lhs": float(lhs), "rhs": float(rhs),
                     "ratio": float(ratio)})
        worst = max(worst, ratio)
    return {"C0": worst, "rows": rows, "K": K, "m": m}


# ------------------------------------------------------------------ gap
def _gap_1d(wgrid: np.ndarray, density: Callable[[np.ndarray], np.ndarray]) -> float:
    n = len(wgrid)
    h = wgrid[1] - wgrid[0]
    mid = 0.5 * (wgrid[:-1] + wgrid[1:])
    rho_mid = density(mid)
    rho = density(wgrid)
    main = np.zeros(n)
    main[:-1] += rho_mid
    main[1:] += rho_mid
    S = sparse.diags([main / h**2, -rho_mid / h**2, -rho_mid / h**2], [0, -1, 1],
                     format="csc")
    Mm = sparse.diags(rho, 0, format="csc")
    v0 = np.ones(n)
    vals = eigsh(S, k=2, M=Mm, sigma=-0.05, which="LM", v0=v0,
                 return_eigenvectors=False)
    return float(np.sort(vals)[1])


def _gap_2d(ax0: np.ndarray, ax1: np.ndarray,
            density: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> float:
    n0, n1 = len(ax0), len(ax1)
    h0, h1 = ax0[1] - ax0[0], ax1[1] - ax1[0]
    W0, W1 = np.meshgrid(ax0, ax1, indexing="ij")
    rho = density(W0, W1)

    def idx(i, j):
        return i * n1 + j

    rows, cols, vals = [], [], []
    diag = np.zeros(n0 * n1)
    # horizontal edges (axis 0)
    m0 = density(0.5 * (W0[:-1, :] + W0[1:, :]), W1[:-1, :])
    for i in range(n0 - 1):
        for j in range(n1):
            wgt = m0[i, j] / h0**2
            a, b = idx(i, j), idx(i + 1, j)
            rows += [a, b]
            cols += [b, a]
            vals += [-wgt, -wgt]
            diag[a] += wgt
            diag[b] += wgt
    # vertical edges (axis 1)
    m1 = density(W0[:, :-1], 0.5 * (W1[:, :-1] + W1[:, 1:]))
    for i in range(n0):
        for j in range(n1 - 1):
            wgt = m1[i, j] / h1**2
            a, b = idx(i, j), idx(i, j + 1)
            rows += [a, b]
            cols += [b, a]
            vals += [-wgt, -wgt]
            diag[a] += wgt
            diag[b] += wgt
    rows += list(range(n0 * n1))
    cols += list(range(n0 * n1))
    vals += list(diag)
    S = sparse.csc_matrix((vals, (rows, cols)), shape=(n0 * n1, n0 * n1))
    Mm = sparse.diags(rho.reshape(-1), 0, format="csc")
    v0 = np.ones(n0 * n1)
    out = eigsh(S, k=2, M=Mm, sigma=-0.05, which="LM", v0=v0,
                return_eigenvectors=False)
    return float(np.sort(out)[1])


def spectral_gap_canonical(pot: Potential, block_field: Sequence[float], K: int,
                           m: float, grid_size: int = 241,
                           tol: float = 1e-9, growth_tol: float = 0.01) -> float:
    """Smallest nonzero eigenvalue of the Dirichlet-form generator of the
    canonical ensemble on X_{K,m}, K in {2, 3}.

    The fiber is parametrized isometrically (Helmert basis), the generator
    discretized by zero-flux finite differences on a truncated box, and the
    box grown until the gap moves by less than growth_tol relatively.
    """
    avals = np.asarray(block_field, dtype=float)
    if len(avals) != K or K not in (2, 3):
        raise ValueError("spectral_gap_canonical requires K in {2, 3}")
    if grid_size % 2 == 0:
        raise ValueError("grid_size must be odd")
    sigma = fe.sigma_of_m(pot, avals, m, tol)
    tilts = [fe.log_partition_1d(pot, sigma - a, 1e-10) for a in avals]
    xstar = np.array([t.m for t in tilts])
    smax = math.sqrt(max(t.s2 for t in tilts))
    V = helmert_basis(K)
    center = V.T @ (xstar - m)
    # reference energy at the fiber mode keeps the exponentials in range
    e0 = float(np.sum(pot.value(xstar) + avals * xstar))

    def density_from_w(*w):
        wstack = np.stack(np.broadcast_arrays(*w), axis=-1)
        x = m + np.tensordot(wstack, V.T, axes=(-1, 0))
        energy = np.zeros(x.shape[:-1])
        for i in range(K):
            energy += pot.value(x[..., i]) + avals[i] * x[..., i]
        return np.exp(-(energy - e0))

    half = 6.0 * smax
    gap_prev = None
    spacing = None
    for _ in range(8):
        if spacing is None:
            n_nodes = grid_size
            spacing = 2 * half / (n_nodes - 1)
        else:
            n_nodes = int(round(2 * half / spacing)) + 1
            if n_nodes % 2 == 0:
                n_nodes += 1
        if K == 2:
            wgrid = center[0] + np.linspace(-half, half, n_nodes)
            gap = _gap_1d(wgrid, lambda w: density_from_w(w))
        else:
            ax0 = center[0] + np.linspace(-half, half, n_nodes)
            ax1 = center[1] + np.linspace(-half, half, n_nodes)
            gap = _gap_2d(ax0, ax1, lambda w0, w1: density_from_w(w0, w1))
        if gap_prev is not None and abs(gap - gap_prev) <= growth_tol * abs(gap):
            return gap
        gap_prev = gap
        half *= 1.3
    return gap_prev
