"""Counter-based random streams for reproducible parallel Monte Carlo.

Every random quantity in the package is a pure function of
(64-bit key, 64-bit counter), so ensembles are bit-reproducible regardless of
scheduling, chunking, or worker count.  The per-draw uniform source is a
SplitMix64-style finalizer applied to an affine counter sequence; normals come
from a 256-strip ziggurat whose rejection steps consume an attempt
sub-counter, keeping the draw index -> value map deterministic.

Two implementations are provided: scalar @njit functions used inside the
numba kernels, and vectorized numpy functions used by the fallback backend.
They share counter layout and agree draw-for-draw (up to 1-ulp effects in the
rare wedge/tail branches; see tests).
"""

import math

import numpy as np
from scipy.special import erfc

from .backend import HAVE_NUMBA

U64 = np.uint64
GOLD = U64(0x9E3779B97F4A7C15)  # increment between draw indices
G2 = U64(0xD1B54A32D192ED03)  # increment between rejection attempts
_M1 = U64(0xBF58476D1CE4E5B9)
_M2 = U64(0x94D049BB133111EB)
_TWO52INV = 1.0 / 4503599627370496.0
_TWO53INV = 1.0 / 9007199254740992.0

# 256-strip ziggurat tables for the standard normal density exp(-x^2/2).
# ZIG_X[i] is the right edge of strip i (strip 0 holds the tail), ZIG_Y[i] its
# lower boundary height; the construction closes with p(X[256]) = 1 to ~1e-14.
ZIG_R = 3.6541528853610088


def _build_ziggurat():
    pr = math.exp(-0.5 * ZIG_R * ZIG_R)
    v = ZIG_R * pr + math.sqrt(math.pi / 2.0) * erfc(ZIG_R / math.sqrt(2.0))
    x = np.zeros(257)
    x[0] = v / pr
    x[1] = ZIG_R
    for i in range(1, 255):
        y = math.exp(-0.5 * x[i] * x[i]) + v / x[i]
        x[i + 1] = math.sqrt(-2.0 * math.log(y))
    x[256] = 0.0
    y = np.exp(-0.5 * x * x)
    closure = math.exp(-0.5 * x[255] * x[255]) + v / x[255]
    if abs(closure - 1.0) > 1e-12:
        raise RuntimeError(f"ziggurat table construction failed: {closure}")
    return x, y


ZIG_X, ZIG_Y = _build_ziggurat()


def stream_key(seed: int, stream: int) -> np.uint64:
    """Derive the key of sub-stream `stream` from a 64-bit master seed."""
    with np.errstate(over="ignore"):
        s = U64(seed & 0xFFFFFFFFFFFFFFFF)
        k = mix64_np(s + GOLD * U64((stream + 1) & 0xFFFFFFFFFFFFFFFF))
        return U64(k ^ mix64_np(s ^ _M2))


def mix64_np(z):
    """SplitMix64 finalizer; accepts uint64 scalars or arrays (mod-2^64)."""
    z = U64(z) if np.isscalar(z) else z.astype(U64, copy=True)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> U64(30))) * _M1
        z = (z ^ (z >> U64(27))) * _M2
        return z ^ (z >> U64(31))


def uniform53(key, counters):
    """Uniforms on (0,1) for an array of counters (strictly inside)."""
    h = mix64_np(U64(key) + np.asarray(counters, dtype=U64) * GOLD)
    return (np.right_shift(h, U64(11)).astype(np.float64) + 0.5) * _TWO53INV


def normals_np(key, draw0: int, n: int) -> np.ndarray:
    """Vectorized ziggurat normals for draws draw0 .. draw0+n-1 of a stream."""
    with np.errstate(over="ignore"):
        base = U64(key) + (U64(draw0) + np.arange(n, dtype=U64)) * GOLD
    return ziggurat_from_base(base)


def ziggurat_from_base(base: np.ndarray) -> np.ndarray:
    """Vectorized ziggurat normals, one per per-draw base counter.

    Counter layout per draw (matching the scalar numba twin): the layer
    attempt consumes sub-counter a, a failed layer consumes a+1 for the wedge
    uniform, the tail loop consumes pairs (a+1, a+2), (a+3, a+4), ...
    """
    shape = base.shape
    base = base.reshape(-1)
    n = base.size
    out = np.empty(n)
    pend = np.arange(n)
    attempt = np.zeros(n, dtype=U64)
    while pend.size:
        b = base[pend]
        a = attempt[pend]
        h = mix64_np(b + a * G2)
        i = (h & U64(255)).astype(np.int64)
        sign = np.where((h & U64(256)) == U64(0), 1.0, -1.0)
        x = np.right_shift(h, U64(12)).astype(np.float64) * _TWO52INV * ZIG_X[i]
        finished = x < ZIG_X[i + 1]
        out[pend[finished]] = (sign * x)[finished]

        wedge = np.flatnonzero(~finished & (i != 0))
        if wedge.size:
            h2 = mix64_np(b[wedge] + (a[wedge] + U64(1)) * G2)
            u2 = np.right_shift(h2, U64(12)).astype(np.float64) * _TWO52INV
            iw = i[wedge]
            y = ZIG_Y[iw] + u2 * (ZIG_Y[iw + 1] - ZIG_Y[iw])
            ok = y < np.exp(-0.5 * x[wedge] ** 2)
            out[pend[wedge[ok]]] = (sign[wedge] * x[wedge])[ok]
            finished[wedge[ok]] = True

        tail = np.flatnonzero(~finished & (i == 0))
        if tail.size:
            live = tail
            aa = a.copy()
            while live.size:
                u1 = (np.right_shift(mix64_np(b[live] + (aa[live] + U64(1)) * G2), U64(11)).astype(np.float64) + 0.5) * _TWO53INV
                u2 = (np.right_shift(mix64_np(b[live] + (aa[live] + U64(2)) * G2), U64(11)).astype(np.float64) + 0.5) * _TWO53INV
                xx = -np.log(u1) / ZIG_R
                yy = -np.log(u2)
                ok = 2.0 * yy > xx * xx
                out[pend[live[ok]]] = (sign[live] * (ZIG_R + xx))[ok]
                aa[live] += U64(2)
                live = live[~ok]
            finished[tail] = True

        attempt[pend[~finished]] += U64(2)
        pend = pend[~finished]
    return out.reshape(shape)


# ---------------------------------------------------------------------------
# numba scalar twins
# ---------------------------------------------------------------------------

if HAVE_NUMBA:
    from numba import njit

    @njit(cache=True, inline="always")
    def mix64(z):
        z = (z ^ (z >> U64(30))) * _M1
        z = (z ^ (z >> U64(27))) * _M2
        return z ^ (z >> U64(31))

    @njit(cache=True, inline="always")
    def _zig_one(base, xt, yt):
        a = U64(0)
        while True:
            h = mix64(base + a * G2)
            i = int(h & U64(255))
            sign = 1.0 if (h & U64(256)) == U64(0) else -1.0
            u = float(h >> U64(12)) * _TWO52INV
            x = u * xt[i]
            if x < xt[i + 1]:
                return sign * x
            if i == 0:
                while True:
                    a += U64(1)
                    u1 = (float(mix64(base + a * G2) >> U64(11)) + 0.5) * _TWO53INV
                    a += U64(1)
                    u2 = (float(mix64(base + a * G2) >> U64(11)) + 0.5) * _TWO53INV
                    xx = -math.log(u1) / ZIG_R
                    yy = -math.log(u2)
                    if 2.0 * yy > xx * xx:
                        return sign * (ZIG_R + xx)
            else:
                a += U64(1)
                h2 = mix64(base + a * G2)
                u2 = float(h2 >> U64(12)) * _TWO52INV
                y = yt[i] + u2 * (yt[i + 1] - yt[i])
                if y < math.exp(-0.5 * x * x):
                    return sign * x
            a += U64(1)

    @njit(cache=True)
    def normals_fill(out, key, draw0, xt, yt):
        for d in range(out.shape[0]):
            base = key + (draw0 + U64(d)) * GOLD
            out[d] = _zig_one(base, xt, yt)

    def normals_nb(key, draw0: int, n: int) -> np.ndarray:
        out = np.empty(n)
        normals_fill(out, U64(key), U64(draw0), ZIG_X, ZIG_Y)
        return out

else:  # pragma: no cover
    mix64 = None
    normals_fill = None
    normals_nb = None


def normals(key, draw0: int, n: int) -> np.ndarray:
    """Standard normals for a (key, draw index) window, preferring numba."""
    if HAVE_NUMBA:
        return normals_nb(key, draw0, n)
    return normals_np(key, draw0, n)
