import numpy as np
import pytest

from kawahydro import potential as P


@pytest.mark.parametrize("kind", ["gaussian", "quartic", "perturbed_quartic"])
def test_invariants_hold(kind):
    P.check_invariants(P.make_potential(kind))


def test_gaussian_at_origin():
    v, d1, d2 = P.eval_potential(P.gaussian(), 0.0)
    assert (v, d1, d2) == (0.0, 0.0, 1.0)


def test_quartic_at_one():
    v, d1, d2 = P.eval_potential(P.quartic(), 1.0)
    assert v == pytest.approx(0.75)
    assert d1 == pytest.approx(2.0)
    assert d2 == pytest.approx(4.0)


def test_perturbed_quartic_at_origin():
    v, d1, d2 = P.eval_potential(P.perturbed_quartic(0.1), 0.0)
    assert v == pytest.approx(0.1)
    assert d1 == pytest.approx(0.0)
    assert d2 == pytest.approx(0.9)


@pytest.mark.parametrize("kind", ["gaussian", "quartic", "perturbed_quartic"])
def test_derivatives_match_finite_differences(kind):
    pot = P.make_potential(kind)
    x = np.linspace(-5.0, 5.0, 101)
    h = 1e-5
    v, d1, d2 = pot.eval(x)
    vp, d1p, _ = pot.eval(x + h)
    vm, d1m, _ = pot.eval(x - h)
    fd1 = (vp - vm) / (2 * h)
    fd2 = (d1p - d1m) / (2 * h)
    scale1 = np.maximum(np.abs(d1), 1.0)
    scale2 = np.maximum(np.abs(d2), 1.0)
    assert np.max(np.abs(fd1 - d1) / scale1) < 1e-6
    assert np.max(np.abs(fd2 - d2) / scale2) < 1e-6


def test_declared_metadata():
    g = P.gaussian()
    assert g.lambda_min == 1.0 and g.p == 2.0
    q = P.quartic()
    assert q.lambda_min == 1.0 and q.p == 4.0


def test_unknown_kind_rejected():
    with pytest.raises(ValueError):
        P.make_potential("sextic")
