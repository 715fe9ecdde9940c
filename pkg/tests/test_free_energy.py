import math

import numpy as np
import pytest

from kawahydro import free_energy as fe
from kawahydro.field import FieldSpec
from kawahydro.potential import gaussian, perturbed_quartic, quartic

LOG_2PI = math.log(2 * math.pi)


# ---------------------------------------------------------------- tilts
def test_gaussian_log_partition_closed_form():
    pot = gaussian()
    t0 = fe.log_partition_1d(pot, 0.0, tol=1e-11)
    assert t0.log_z == pytest.approx(0.5 * LOG_2PI, abs=1e-9)
    assert t0.m == pytest.approx(0.0, abs=1e-9)
    assert t0.s2 == pytest.approx(1.0, abs=1e-9)
    t1 = fe.log_partition_1d(pot, 1.0, tol=1e-11)
    assert t1.log_z == pytest.approx(0.5 + 0.5 * LOG_2PI, abs=1e-9)
    assert t1.m == pytest.approx(1.0, abs=1e-9)
    assert t1.s2 == pytest.approx(1.0, abs=1e-9)


def test_quartic_sigma0_symmetry_and_oracle():
    pot = quartic()
    t = fe.log_partition_1d(pot, 0.0, tol=1e-11)
    assert t.m == pytest.approx(0.0, abs=1e-10)
    # independent high-resolution trapezoid oracle
    x = np.linspace(-12.0, 12.0, 400_001)
    log_z = np.log(np.trapezoid(np.exp(-pot.value(x)), x))
    assert t.log_z == pytest.approx(log_z, abs=1e-8)


def test_tilt_derivative_consistency():
    # d phi*/d sigma = m(sigma), checked by central differences
    pot = quartic()
    for sigma in (-2.0, 0.3, 4.0):
        h = 1e-4
        up = fe.log_partition_1d(pot, sigma + h, 1e-11).log_z
        dn = fe.log_partition_1d(pot, sigma - h, 1e-11).log_z
        mid = fe.log_partition_1d(pot, sigma, 1e-11)
        assert (up - dn) / (2 * h) == pytest.approx(mid.m, abs=1e-6)


# ---------------------------------------------------------------- sigma_of_m
def test_sigma_of_m_gaussian_cancellation():
    pot = gaussian()
    s = fe.sigma_of_m(pot, [0.3, -0.3], 1.0, tol=1e-11)
    assert s == pytest.approx(1.0, abs=1e-9)


def test_sigma_of_m_gaussian_zero_field():
    pot = gaussian()
    for m in (-1.5, 0.0, 0.7):
        assert fe.sigma_of_m(pot, [0.0, 0.0], m, tol=1e-11) == pytest.approx(m, abs=1e-9)


def test_sigma_of_m_residual_contract():
    pot = quartic()
    block = [0.4, -0.2, 0.1, -0.3]
    m = 0.8
    tol = 1e-9
    s = fe.sigma_of_m(pot, block, m, tol=tol)
    resid = np.mean([fe.log_partition_1d(pot, s - a, 1e-11).m for a in block]) - m
    assert abs(resid) <= 2 * tol


# ---------------------------------------------------------------- phi_K
def test_phi_K_gaussian_closed_form():
    pot = gaussian()
    for m in (-1.0, 0.0, 1.0):
        v, d1, d2 = fe.phi_K(pot, np.zeros(4), m, tol=1e-11)
        assert v == pytest.approx(0.5 * m * m - 0.5 * LOG_2PI, abs=1e-9)
        assert d1 == pytest.approx(m, abs=1e-9)
        assert d2 == pytest.approx(1.0, abs=1e-9)


def test_phi_K_independent_of_K_zero_field():
    pot = quartic()
    vals = [fe.phi_K(pot, np.zeros(k), 0.5, tol=1e-10)[0] for k in (1, 2, 8)]
    assert max(vals) - min(vals) < 1e-9


def test_phi_K_quartic_curvature_sandwich():
    # d2 within C-factor of (1 + m^2) on m in [-3, 3]
    pot = quartic()
    ms = np.linspace(-3, 3, 13)
    block = np.array([0.3, -0.3])
    ratios = []
    for m in ms:
        _, _, d2 = fe.phi_K(pot, block, m, tol=1e-9)
        ratios.append(d2 / (1 + m * m))
    C = max(max(ratios), 1 / min(ratios))
    assert np.isfinite(C) and C < 10.0


def test_legendre_consistency_random_m():
    pot = quartic()
    block = np.array([0.25, -0.4, 0.1])
    rng = np.random.default_rng(5)
    for m in rng.uniform(-1.5, 1.5, 4):
        v, d1, _ = fe.phi_K(pot, block, m, tol=1e-10)
        conj = np.mean([fe.log_partition_1d(pot, d1 - a, 1e-11).log_z for a in block])
        assert v + conj == pytest.approx(m * d1, abs=1e-6)


def test_variance_identity():
    pot = quartic()
    block = np.array([0.2, -0.2, 0.5, 0.0])
    for m in (-0.7, 0.4):
        _, d1, d2 = fe.phi_K(pot, block, m, tol=1e-10)
        svar = np.mean([fe.log_partition_1d(pot, d1 - a, 1e-11).s2 for a in block])
        assert d2 * svar == pytest.approx(1.0, abs=1e-6)


# ---------------------------------------------------------------- phi_tilde
def test_phi_tilde_zero_field_equals_phi_1():
    pot = quartic()
    spec = FieldSpec(kind="zero")
    for m in (-0.5, 0.8):
        vt, d1t, d2t = fe.phi_tilde(pot, spec, m, tol=1e-10)
        v1, d11, d21 = fe.phi_K(pot, np.zeros(1), m, tol=1e-10)
        assert vt == pytest.approx(v1, abs=1e-8)
        assert d1t == pytest.approx(d11, abs=1e-7)


def test_phi_tilde_gaussian_two_point_closed_form():
    # E_a phi*(s - a) = s^2/2 + L^2/2 + log(2pi)/2 for gaussian, so
    # phi_tilde(m) = m^2/2 - L^2/2 - log(2pi)/2
    pot = gaussian()
    L = 0.5
    spec = FieldSpec(kind="two_point", L=L)
    for m in (-1.0, 0.3):
        v, d1, d2 = fe.phi_tilde(pot, spec, m, tol=1e-11)
        assert v == pytest.approx(0.5 * m * m - 0.5 * L * L - 0.5 * LOG_2PI, abs=1e-9)
        assert d1 == pytest.approx(m, abs=1e-9)
        assert d2 == pytest.approx(1.0, abs=1e-9)


def test_phi_tilde_two_point_matches_direct_two_atom_sum():
    pot = quartic()
    spec = FieldSpec(kind="two_point", L=0.5)
    m = 0.6
    vt = fe.phi_tilde(pot, spec, m, tol=1e-10)[0]
    vd = fe.phi_K(pot, np.array([-0.5, 0.5]), m, tol=1e-10,
                  weights=np.array([0.5, 0.5]))[0]
    assert vt == pytest.approx(vd, abs=1e-9)


# ---------------------------------------------------------------- g density
def test_g_density_gaussian():
    pot = gaussian()
    for K, m in [(2, 0.0), (4, 1.0), (8, -1.0)]:
        g = fe.g_density(pot, np.zeros(K), m, tol=1e-9)
        assert g == pytest.approx(1.0 / math.sqrt(2 * math.pi), abs=1e-8)


def test_g_density_positive_quartic():
    pot = quartic()
    g = fe.g_density(pot, np.array([0.2, -0.2, 0.0]), 0.4, tol=1e-8)
    assert g > 0


# ---------------------------------------------------------------- psi_K
def test_psi_K_gaussian_closed_form():
    pot = gaussian()
    v = fe.psi_K(pot, np.zeros(2), 0.0, tol=1e-9)
    assert v == pytest.approx(-0.25 * LOG_2PI, abs=1e-8)
    for K in (2, 3, 8):
        for m in (-1.0, 0.5):
            v = fe.psi_K(pot, np.zeros(K), m, tol=1e-9)
            expected = 0.5 * m * m - (K - 1) / (2 * K) * LOG_2PI
            assert v == pytest.approx(expected, abs=1e-8)


def test_gaussian_gap_identity():
    pot = gaussian()
    for K in (2, 5):
        v_phi = fe.phi_K(pot, np.zeros(K), 0.3, tol=1e-10)[0]
        v_psi = fe.psi_K(pot, np.zeros(K), 0.3, tol=1e-9)
        assert v_phi - v_psi == pytest.approx(-LOG_2PI / (2 * K), abs=1e-8)


def test_psi_K_direct_gaussian():
    pot = gaussian()
    v = fe.psi_K_direct(pot, np.zeros(2), 0.0, tol=1e-9)
    assert v == pytest.approx(-0.25 * LOG_2PI, abs=1e-8)
    v3 = fe.psi_K_direct(pot, np.zeros(3), 1.0, tol=1e-9)
    assert v3 == pytest.approx(0.5 - LOG_2PI / 3.0, abs=1e-8)


def test_cross_oracle_quartic():
    pot = quartic()
    block2 = np.array([0.3, -0.3])
    block3 = np.array([0.3, -0.1, 0.2])
    for block, m in [(block2, 0.0), (block2, 0.7), (block3, -0.4)]:
        via_fourier = fe.psi_K(pot, block, m, tol=1e-9)
        via_direct = fe.psi_K_direct(pot, block, m, tol=1e-9)
        assert via_fourier == pytest.approx(via_direct, rel=1e-6, abs=1e-7)


def test_psi_K_direct_rejects_large_K():
    with pytest.raises(ValueError):
        fe.psi_K_direct(gaussian(), np.zeros(5), 0.0)


# ---------------------------------------------------------------- caputo
def test_caputo_bound_fitted_constant():
    for pot in (gaussian(), quartic(), perturbed_quartic()):
        ratios = []
        for sigma in np.linspace(-10, 10, 21):
            t = fe.log_partition_1d(pot, sigma, 1e-10)
            psi_c_dd = pot.psi_c(np.asarray(t.m))[2]
            ratios.append(t.s2 * float(psi_c_dd))
        C = max(max(ratios), 1 / min(ratios))
        assert np.isfinite(C) and C < 5.0
        if pot.name == "gaussian":
            assert C == pytest.approx(1.0, abs=1e-8)


# ---------------------------------------------------------------- tabulate
def test_tabulate_gaussian_phi_K_matches_closed_form():
    pot = gaussian()
    grid = np.arange(-2.0, 2.0 + 1e-12, 0.1)
    model = fe.tabulate(pot, np.zeros(4), "phi_K", 4, grid, tol=1e-10)
    exact = 0.5 * grid**2 - 0.5 * LOG_2PI
    assert np.max(np.abs(model.values - exact)) < 1e-8
    assert np.max(np.abs(model.d1 - grid)) < 1e-8
    # interpolated evaluation stays monotone in d1
    m_fine = np.linspace(-1.95, 1.95, 500)
    d1_fine = model.eval_d1(m_fine)
    assert np.all(np.diff(d1_fine) > 0)
    assert np.max(np.abs(model.value(m_fine) - (0.5 * m_fine**2 - 0.5 * LOG_2PI))) < 1e-6


def test_tabulate_rejects_tiny_grid():
    with pytest.raises(ValueError):
        fe.tabulate(gaussian(), np.zeros(2), "phi_K", 2, np.array([0.0]), tol=1e-8)


def test_tabulate_quartic_psi_K_convex():
    pot = quartic()
    grid = np.linspace(-1.5, 1.5, 25)
    block = np.array([0.3, -0.3, 0.1, -0.1, 0.2, -0.2])
    model = fe.tabulate(pot, block, "psi_K", 6, grid, tol=1e-8)
    lam = model.d2.min()
    assert lam > 0


def test_export_csv_roundtrip(tmp_path):
    pot = gaussian()
    grid = np.linspace(-1, 1, 9)
    model = fe.tabulate(pot, np.zeros(2), "phi_K", 2, grid, tol=1e-9)
    out = tmp_path / "phi_K.csv"
    fe.export_csv(model, out, {"field_atoms": [[0.0, 1.0]]})
    data = np.loadtxt(out, delimiter=",", skiprows=1)
    np.testing.assert_allclose(data[:, 0], grid)
    np.testing.assert_allclose(data[:, 1], model.values, rtol=1e-15)
    assert (tmp_path / "phi_K.json").exists()


def test_polynomial_growth_sandwich_quartic():
    # fitted sandwich constants on m in [-3, 3] with exponents p-2, p-1, p
    pot = quartic()
    block = np.array([0.35, -0.35, 0.15, -0.15])
    ms = np.linspace(-3.0, 3.0, 13)
    ratios = {"d2": [], "d1": [], "value": [], "psi": []}
    v0 = fe.phi_K(pot, block, 0.0, tol=1e-9)[0]
    psi0 = fe.psi_K(pot, block, 0.0, tol=1e-8)
    for m in ms:
        v, d1, d2 = fe.phi_K(pot, block, m, tol=1e-9)
        ratios["d2"].append(d2 / (1 + abs(m) ** 2))
        if abs(m) >= 1.0:
            ratios["d1"].append(abs(d1) / (1 + abs(m) ** 3))
            ratios["value"].append((v - v0 + 1) / (1 + abs(m) ** 4))
            ratios["psi"].append((fe.psi_K(pot, block, m, tol=1e-8) - psi0 + 1)
                                 / (1 + abs(m) ** 4))
    for name, vals in ratios.items():
        arr = np.array(vals)
        assert np.all(arr > 0), name
        C = max(arr.max(), 1 / arr.min())
        assert np.isfinite(C) and C < 12.0, f"{name}: fitted C = {C}"
