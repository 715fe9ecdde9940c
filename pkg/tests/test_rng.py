import numpy as np
import pytest
from scipy import stats
from scipy.special import erfc

from kawahydro import rng


def test_stream_keys_distinct():
    keys = {int(rng.stream_key(12345, s)) for s in range(1000)}
    assert len(keys) == 1000
    assert int(rng.stream_key(1, 0)) != int(rng.stream_key(2, 0))


def test_uniform53_range_and_determinism():
    key = rng.stream_key(7, 0)
    u = rng.uniform53(key, np.arange(100000))
    assert np.all((u > 0.0) & (u < 1.0))
    v = rng.uniform53(key, np.arange(100000))
    assert np.array_equal(u, v)
    assert abs(u.mean() - 0.5) < 0.005


def test_normals_moments_and_law():
    key = rng.stream_key(2024, 3)
    z = rng.normals_np(key, 0, 400_000)
    assert abs(z.mean()) < 0.006
    assert abs(z.var() - 1.0) < 0.01
    assert abs((z**3).mean()) < 0.02
    assert abs((z**4).mean() - 3.0) < 0.05
    ks = stats.kstest(z[:200_000], "norm")
    assert ks.pvalue > 1e-4


def test_normals_tail_fraction():
    key = rng.stream_key(55, 0)
    z = rng.normals_np(key, 0, 2_000_000)
    frac = np.mean(np.abs(z) > rng.ZIG_R)
    assert frac == pytest.approx(erfc(rng.ZIG_R / np.sqrt(2.0)), rel=0.15)


def test_normals_window_consistency():
    # drawing [0, 2n) at once equals drawing [0, n) and [n, 2n) separately
    key = rng.stream_key(99, 1)
    whole = rng.normals_np(key, 0, 2000)
    a = rng.normals_np(key, 0, 1000)
    b = rng.normals_np(key, 1000, 1000)
    assert np.array_equal(whole, np.concatenate([a, b]))


@pytest.mark.skipif(not rng.HAVE_NUMBA, reason="numba unavailable")
def test_numba_numpy_twins_agree():
    key = rng.stream_key(31337, 4)
    a = rng.normals_nb(key, 0, 200_000)
    b = rng.normals_np(key, 0, 200_000)
    # common path is bit-identical; wedge/tail branches may differ by 1 ulp
    # in exp/log, which (rarely) could flip a rejection. Fixed seed: exact.
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=0)


def test_ziggurat_tables_consistent():
    x, y = rng.ZIG_X, rng.ZIG_Y
    assert np.all(np.diff(x[1:]) < 0)
    assert np.all(np.diff(y[1:]) > 0)
    np.testing.assert_allclose(y, np.exp(-0.5 * x * x), rtol=1e-14)
