"""Single-site potentials psi = psi_c + delta_psi and their derivatives.

psi_c is uniformly convex with polynomial-growth second derivative,
delta_psi a bounded C^1 perturbation.  All evaluators return exact analytic
(value, first, second derivative) triples and accept scalars or arrays.
"""

from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np

Triple = Tuple[np.ndarray, np.ndarray, np.ndarray]

# integer codes used by the numba kernels (see kernels.py)
KERNEL_GAUSSIAN = 0
KERNEL_QUARTIC = 1
KERNEL_PERTURBED_QUARTIC = 2


@dataclass(frozen=True)
class Potential:
    name: str
    psi_c: Callable[[np.ndarray], Triple]
    delta_psi: Callable[[np.ndarray], Triple]
    lambda_min: float
    p: float
    c1: float
    c2: float
    delta_bounds: Tuple[float, float]
    kernel_code: int = KERNEL_GAUSSIAN
    kernel_param: float = 0.0

    def eval(self, x) -> Triple:
        x = np.asarray(x, dtype=float)
        v0, d10, d20 = self.psi_c(x)
        v1, d11, d21 = self.delta_psi(x)
        return v0 + v1, d10 + d11, d20 + d21

    def value(self, x):
        return self.eval(x)[0]

    def d1(self, x):
        return self.eval(x)[1]

    def d2(self, x):
        return self.eval(x)[2]


def eval_potential(pot: Potential, x) -> Triple:
    """(psi(x), psi'(x), psi''(x)) with exact analytic derivatives."""
    return pot.eval(x)


def _zero_perturbation(x):
    z = np.zeros_like(np.asarray(x, dtype=float))
    return z, z.copy(), z.copy()


def gaussian() -> Potential:
    def psi_c(x):
        return 0.5 * x * x, x, np.ones_like(x)

    return Potential(
        name="gaussian",
        psi_c=psi_c,
        delta_psi=_zero_perturbation,
        lambda_min=1.0,
        p=2.0,
        c1=0.5,
        c2=0.5,
        delta_bounds=(0.0, 0.0),
        kernel_code=KERNEL_GAUSSIAN,
    )


def quartic() -> Potential:
    def psi_c(x):
        x2 = x * x
        return 0.25 * x2 * x2 + 0.5 * x2, x2 * x + x, 3.0 * x2 + 1.0

    return Potential(
        name="quartic",
        psi_c=psi_c,
        delta_psi=_zero_perturbation,
        lambda_min=1.0,
        p=4.0,
        c1=1.0,
        c2=3.0,
        delta_bounds=(0.0, 0.0),
        kernel_code=KERNEL_QUARTIC,
    )


def perturbed_quartic(amp: float = 0.1) -> Potential:
    base = quartic()

    def delta(x):
        return amp * np.cos(x), -amp * np.sin(x), -amp * np.cos(x)

    return Potential(
        name="perturbed_quartic",
        psi_c=base.psi_c,
        delta_psi=delta,
        lambda_min=1.0,
        p=4.0,
        c1=1.0,
        c2=3.0,
        delta_bounds=(abs(amp), abs(amp)),
        kernel_code=KERNEL_PERTURBED_QUARTIC,
        kernel_param=float(amp),
    )


BUILTINS = {
    "gaussian": gaussian,
    "quartic": quartic,
    "perturbed_quartic": perturbed_quartic,
}


def make_potential(kind: str, perturb_amp: float = 0.1) -> Potential:
    if kind == "perturbed_quartic":
        return perturbed_quartic(perturb_amp)
    try:
        return BUILTINS[kind]()
    except KeyError:
        raise ValueError(f"unknown potential kind {kind!r}; choose from {sorted(BUILTINS)}")


def check_invariants(pot: Potential, grid=None) -> None:
    """Raise AssertionError if pot violates its declared convexity/growth/
    perturbation bounds on a test grid."""
    if grid is None:
        grid = np.linspace(-5.0, 5.0, 2001)
    _, _, d2c = pot.psi_c(grid)
    if np.any(d2c < pot.lambda_min - 1e-12):
        raise AssertionError(f"{pot.name}: psi_c'' dips below lambda_min")
    dv, dd1, _ = pot.delta_psi(grid)
    b0, b1 = pot.delta_bounds
    if np.any(np.abs(dv) > b0 + 1e-12) or np.any(np.abs(dd1) > b1 + 1e-12):
        raise AssertionError(f"{pot.name}: delta_psi exceeds its declared bounds")
    envelope = 1.0 + np.abs(grid) ** (pot.p - 2.0)
    if np.any(d2c < pot.c1 * envelope - 1e-12) or np.any(d2c > pot.c2 * envelope + 1e-12):
        raise AssertionError(f"{pot.name}: psi_c'' violates the growth sandwich")
