"""Adaptive 1-d quadrature for exponential-family integrands.

Integrands are exp(e(x)) with e concave-ish and rapidly decaying; the domain
is grown until both boundary exponents fall a fixed cutoff below the peak,
then refined by doubling trapezoid grids (spectrally accurate for analytic
decaying integrands) with the successive-level difference as error estimate.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq


class QuadratureError(RuntimeError):
    """Raised when refinement stalls; carries the achieved error estimate."""

    def __init__(self, message, achieved=np.inf):
        super().__init__(f"{message} (achieved error estimate {achieved:.3e})")
        self.achieved = achieved


@dataclass
class ExpQuadResult:
    x: np.ndarray  # nodes
    w: np.ndarray  # probability masses (trapezoid weights x density, sum 1)
    log_z: float  # log of the unnormalized integral
    mean: float
    var: float
    err: float  # max successive-difference over (log_z, mean, var)


def find_peak(exponent_d1, lo: float, hi: float) -> float:
    """Root of the exponent derivative, with bracket expansion."""
    flo, fhi = exponent_d1(lo), exponent_d1(hi)
    tries = 0
    while flo * fhi > 0 and tries < 200:
        span = hi - lo
        if abs(flo) < abs(fhi):
            lo -= span
            flo = exponent_d1(lo)
        else:
            hi += span
            fhi = exponent_d1(hi)
        tries += 1
    if flo * fhi > 0:
        raise QuadratureError("could not bracket the integrand peak")
    return brentq(exponent_d1, lo, hi, xtol=1e-13)


def exp_quadrature(exponent, center: float, half_width: float, tol: float,
                   n0: int = 257, n_max: int = 300_000) -> ExpQuadResult:
    """Moments of the probability density proportional to exp(e(x))."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    cutoff = np.log(1.0 / tol) + 14.0
    lo = center - half_width
    hi = center + half_width
    probe = exponent(np.array([lo, center, hi]))
    for _ in range(200):
        grown = False
        if probe[0] > probe[1] - cutoff:
            lo -= 0.6 * (hi - lo)
            grown = True
        if probe[2] > probe[1] - cutoff:
            hi += 0.6 * (hi - lo)
            grown = True
        if not grown:
            break
        probe = exponent(np.array([lo, center, hi]))
    else:
        raise QuadratureError("integration domain failed to capture tail decay")

    prev = None
    n = n0
    while n <= n_max:
        x = np.linspace(lo, hi, n)
        e = exponent(x)
        emax = e.max()
        phi = np.exp(e - emax)
        h = x[1] - x[0]
        tw = np.full(n, h)
        tw[0] = tw[-1] = 0.5 * h
        z = float(np.sum(tw * phi))
        log_z = emax + np.log(z)
        mean = float(np.sum(tw * x * phi) / z)
        var = float(np.sum(tw * (x - mean) ** 2 * phi) / z)
        if prev is not None:
            err = max(abs(log_z - prev[0]), abs(mean - prev[1]), abs(var - prev[2]))
            if err <= tol:
                w = tw * phi / z
                return ExpQuadResult(x=x, w=w, log_z=log_z, mean=mean, var=var, err=err)
        prev = (log_z, mean, var)
        n = 2 * n - 1
    raise QuadratureError(
        "quadrature did not converge after max refinement",
        achieved=max(abs(log_z - prev[0]), abs(mean - prev[1]), abs(var - prev[2])) if prev else np.inf,
    )


def trapezoid_nd(values: np.ndarray, spacings) -> float:
    """Tensor-product trapezoid rule over a uniform grid in d dimensions."""
    out = values
    for h in spacings:
        w = np.full(out.shape[0], h)
        w[0] = w[-1] = 0.5 * h
        out = np.tensordot(w, out, axes=(0, 0))
    return float(out)
