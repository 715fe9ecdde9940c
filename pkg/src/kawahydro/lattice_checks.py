"""Fitted-constant checks for the block-fluctuation inequalities.

For mean-zero x and the blockwise-constant projection Pi = lift o project,
the two discrete Poincare-type inequalities

    |(id - Pi) x|^2           <= (gamma / M^2) <A x, x>
    <A^{-1}(id-Pi)x,(id-Pi)x> <= (gamma / M^2) |x|^2

share one sharp constant: gamma / M^2 = lambda_max(F A^{-1} F) with
F = id - Pi (both suprema are attained on the same operator since F is an
orthogonal projection).  fluctuation_gamma computes it by power iteration
with the O(N) cumulative-sum inverse, so the fit is the worst case rather
than a random-probe estimate and is stable across (N, M).
"""

import numpy as np

from . import rng
from .lattice import apply_A, hminus1_sq_discrete, lift_Pt, project_P, solve_A


def fluctuation(x: np.ndarray, K: int) -> np.ndarray:
    """(id - lift o project) x: the intra-block fluctuation part."""
    return x - lift_Pt(project_P(x, K), K)


def fluctuation_gamma(N: int, M: int, iters: int = 400, seed: int = 0,
                      tol: float = 1e-12) -> float:
    """gamma = M^2 * lambda_max(F A^{-1} F) via power iteration."""
    K = N // M
    if K * M != N:
        raise ValueError("M must divide N")
    v = rng.normals_np(rng.stream_key(seed, 0xF1), 0, N)
    v = fluctuation(v - v.mean(), K)
    v /= np.linalg.norm(v)
    lam_prev = 0.0
    for _ in range(iters):
        w = fluctuation(solve_A(fluctuation(v, K)), K)
        lam = float(np.dot(v, w))
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0
        v = w / nrm
        if abs(lam - lam_prev) <= tol * max(1.0, abs(lam)):
            break
        lam_prev = lam
    return lam * M * M


def check_fluctuation_bounds(x: np.ndarray, K: int, gamma: float) -> bool:
    """Do the two fluctuation inequalities hold for this x with this gamma?"""
    M = len(x) // K
    f = fluctuation(x, K)
    ok1 = np.dot(f, f) <= (gamma / M**2) * np.dot(apply_A(x), x) * (1 + 1e-9)
    ok2 = hminus1_sq_discrete(f) * len(x) <= (gamma / M**2) * np.dot(x, x) * (1 + 1e-9)
    return bool(ok1 and ok2)
