"""Bounded iid random chemical potential indexed by rationals.

The field is a function on Q: site i of an N-lattice carries a_{i/N}, and
realizations are generated by a keyed hash of the *reduced* fraction i/N
pushed through the atom distribution's inverse CDF.  Refining the lattice
therefore leaves already-realized values untouched: a_{1,2} == a_{2,4}.
"""

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from . import rng
from .rng import G2, GOLD, U64

KINDS = ("zero", "two_point", "uniform", "custom_discrete")


@dataclass(frozen=True)
class FieldSpec:
    kind: str = "zero"
    L: float = 0.0
    atoms: Optional[Tuple[Tuple[float, float], ...]] = None
    master_seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"field kind must be one of {KINDS}, got {self.kind!r}")
        if self.L < 0:
            raise ValueError("L must be nonnegative")
        if self.kind == "custom_discrete":
            if not self.atoms:
                raise ValueError("custom_discrete requires a nonempty atom list")
            vals = np.array([a[0] for a in self.atoms])
            probs = np.array([a[1] for a in self.atoms])
            if np.any(np.abs(vals) > self.L + 1e-15):
                raise ValueError("atom values must lie in [-L, L]")
            if abs(probs.sum() - 1.0) > 1e-12 or np.any(probs < 0):
                raise ValueError("atom probabilities must be nonnegative and sum to 1")

    def discrete_atoms(self) -> Optional[Tuple[np.ndarray, np.ndarray]]:
        """(values, probabilities) for the discrete kinds, None for uniform."""
        if self.kind == "zero":
            return np.array([0.0]), np.array([1.0])
        if self.kind == "two_point":
            return np.array([-self.L, self.L]), np.array([0.5, 0.5])
        if self.kind == "custom_discrete":
            vals = np.array([a[0] for a in self.atoms], dtype=float)
            probs = np.array([a[1] for a in self.atoms], dtype=float)
            return vals, probs
        return None

    def expectation_atoms(self, gauss_order: int = 32) -> Tuple[np.ndarray, np.ndarray]:
        """Nodes and weights realizing E^a[f(a)] as sum w_j f(v_j).

        Discrete kinds are exact; the uniform kind uses fixed-order
        Gauss-Legendre on [-L, L].
        """
        disc = self.discrete_atoms()
        if disc is not None:
            return disc
        nodes, weights = np.polynomial.legendre.leggauss(gauss_order)
        return nodes * self.L, weights / 2.0


@dataclass(frozen=True)
class FieldRealization:
    spec: FieldSpec
    N: int
    values: np.ndarray

    def __post_init__(self):
        if np.any(np.abs(self.values) > self.spec.L + 1e-12):
            raise ValueError("realized values exceed the bound L")

    def block(self, i: int, K: int) -> np.ndarray:
        """a-values of macroscopic block i (0-based), sites iK..(i+1)K-1."""
        return self.values[i * K : (i + 1) * K]


def _fraction_uniforms(seed: int, nums: np.ndarray, dens: np.ndarray) -> np.ndarray:
    key = rng.stream_key(seed, 0x6669656C64)  # dedicated field stream
    with np.errstate(over="ignore"):
        h = rng.mix64_np(key + nums.astype(U64) * GOLD)
        h = rng.mix64_np(h ^ (dens.astype(U64) * G2))
    return (np.right_shift(h, U64(11)).astype(np.float64) + 0.5) / 9007199254740992.0


def realize_field(spec: FieldSpec, N: int) -> FieldRealization:
    """Realize (a_{i/N})_{i=1..N} for the given spec, consistently across N."""
    if N < 1:
        raise ValueError("N must be >= 1")
    i = np.arange(1, N + 1, dtype=np.int64)
    g = np.gcd(i, N)
    u = _fraction_uniforms(spec.master_seed, i // g, N // g)
    if spec.kind == "uniform":
        values = -spec.L + 2.0 * spec.L * u
    else:
        vals, probs = spec.discrete_atoms()
        edges = np.cumsum(probs)
        values = vals[np.searchsorted(edges, u, side="right").clip(0, len(vals) - 1)]
    return FieldRealization(spec=spec, N=N, values=values)


def zero_field(N: int) -> FieldRealization:
    return realize_field(FieldSpec(kind="zero"), N)


def make_field_spec(kind: str, L: float = 0.0, atoms: Optional[List[Tuple[float, float]]] = None,
                    seed: int = 0) -> FieldSpec:
    return FieldSpec(kind=kind, L=L, atoms=tuple(atoms) if atoms else None, master_seed=seed)
