import json
import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bexcitons.bath import (
    BathSpec,
    Brownian,
    DrudeLorentz,
    FeatureSet,
    ParameterError,
    bcf_eval,
    bcf_quadrature,
    bose_approx,
    bose_poles,
    brownian_features,
    drude_lorentz_features,
    features_for,
    validate_features,
)

BETA = 1 / 0.209


def dl_c1_mp(lam, wc, beta):
    mp.mp.dps = 40
    return complex(lam * wc * (mp.cot(beta * wc / 2) - 1j))


def br_c_mp(lam, w1, eta, beta):
    mp.mp.dps = 40
    pref = mp.mpf(lam) * w1 * (1 + mp.mpf(eta) ** 2 / w1**2) / 2
    cp = pref * (mp.coth(beta * mp.mpc(w1, eta) / 2) - 1)
    cm = pref * (mp.coth(beta * mp.mpc(w1, -eta) / 2) + 1)
    return complex(cp), complex(cm)


# -- constructors -------------------------------------------------------------


def test_dl_zero_coupling():
    fs = drude_lorentz_features(0.0, 0.1, BETA)
    assert fs.K == 1
    assert fs.c[0] == 0
    assert fs.gamma[0] == -0.1


def test_dl_high_temperature_term_matches_high_precision():
    fs = drude_lorentz_features(0.2, 0.1, BETA)
    ref = dl_c1_mp(0.2, 0.1, BETA)
    assert abs(fs.c[0] - ref) < 1e-14
    assert abs(fs.c[0] - (0.08200 - 0.0200j)) < 1e-5
    assert fs.c_bar[0] == np.conj(fs.c[0])


def test_dl_feature_count_and_pairing():
    fs = drude_lorentz_features(0.2, 0.1, BETA, n_ltc=2)
    assert fs.K == 3
    assert fs.kappa == (0, 1, 2)
    assert fs.provenance == ("spectral-pole", "bose-pole", "bose-pole")
    assert np.all(fs.gamma[1:].imag == 0) and np.all(fs.gamma[1:].real < 0)
    assert np.all(fs.c[1:].imag == 0)


def test_brownian_zero_coupling():
    fs = brownian_features(0.0, 0.05, BETA, omega_1=1.0)
    assert np.all(fs.c == 0)
    np.testing.assert_allclose(fs.gamma, [-0.05 + 1j, -0.05 - 1j])


def test_brownian_coefficients_match_high_precision():
    fs = brownian_features(0.2, 0.05, BETA, omega_1=1.0)
    cp, cm = br_c_mp(0.2, 1.0, 0.05, BETA)
    assert abs(fs.c[0] - cp) < 1e-14 and abs(fs.c[1] - cm) < 1e-14
    assert fs.c_bar[0] == np.conj(fs.c[1]) and fs.c_bar[1] == np.conj(fs.c[0])
    assert fs.kappa[:2] == (1, 0)


def test_brownian_sum_matches_quadrature_at_zero():
    spec = BathSpec(Brownian(0.2, 0.05, omega_1=1.0), BETA, n_ltc=6)
    fs = features_for(spec)
    assert abs(fs.c.sum() - bcf_quadrature(spec, 0.0)) < 1e-4 * abs(fs.c.sum())


def test_brownian_k3():
    fs = brownian_features(0.2, 0.05, BETA, n_ltc=1, omega_1=1.0)
    assert fs.K == 3


def test_brownian_frequency_parameterisation():
    a = Brownian(0.2, 0.05, omega_1=1.0)
    b = Brownian(0.2, 0.05, omega_0=a.omega_0)
    assert abs(b.omega_1 - 1.0) < 1e-14
    with pytest.raises(ParameterError):
        Brownian(0.2, 0.5, omega_0=0.4)
    with pytest.raises(ParameterError):
        Brownian(0.2, 0.05)


@pytest.mark.parametrize("kw", [dict(lam=-1.0, omega_c=0.1), dict(lam=0.2, omega_c=0.0)])
def test_dl_domain_errors(kw):
    with pytest.raises(ParameterError):
        DrudeLorentz(**kw)


def test_negative_beta_rejected():
    with pytest.raises(ParameterError):
        drude_lorentz_features(0.2, 0.1, -1.0)


# -- Bose poles ---------------------------------------------------------------


def test_bose_poles_empty():
    assert bose_poles(BETA, 0, "Pade") == []
    assert bose_poles(BETA, 0, "Matsubara") == []


def test_bose_poles_negative_rejected():
    with pytest.raises(ParameterError):
        bose_poles(BETA, -1)


def test_matsubara_poles_and_residues():
    poles = bose_poles(BETA, 2, "Matsubara")
    for j, (xi, r) in enumerate(poles, start=1):
        assert xi == pytest.approx(-2j * np.pi * j)
        assert r == pytest.approx(1.0)
    fs = drude_lorentz_features(0.2, 0.1, BETA, n_ltc=1, scheme="Matsubara")
    assert -fs.gamma[1].real == pytest.approx(2 * np.pi / BETA)
    assert -fs.gamma[1].real == pytest.approx(1.3132, abs=1e-4)


def test_matsubara_residue_by_limit():
    # residue of 1/(1 - exp(-z)) at z = -2 pi i j, from (z - z0) f(z) near z0
    for j in (1, 2, 3):
        z0 = -2j * np.pi * j
        h = 1e-7
        assert abs(h / (1 - np.exp(-(z0 + h))) - 1) < 1e-6


@pytest.mark.parametrize("n", [2, 5])
def test_pade_reproduces_bose_function(n):
    x = np.linspace(0.1, 10, 2001)
    exact = 1 / (1 - np.exp(-x))
    approx = bose_approx(x, bose_poles(BETA, n, "Pade"))
    assert np.max(np.abs(approx - exact) / exact) < 1e-8


def test_pade_converges_with_order():
    x = np.linspace(0.1, 10, 501)
    exact = 1 / (1 - np.exp(-x))
    errs = [np.max(np.abs(bose_approx(x, bose_poles(BETA, n)) - exact) / exact) for n in (1, 2, 3, 4, 5)]
    assert all(b < a for a, b in zip(errs, errs[1:]))


def test_pade_poles_sorted_lower_half_plane():
    poles = bose_poles(BETA, 6, "Pade")
    im = [xi.imag for xi, _ in poles]
    assert all(v < 0 for v in im)
    assert im == sorted(im, reverse=True)


# -- correlation function -----------------------------------------------------


def test_bcf_at_zero_is_coefficient_sum():
    fs = features_for(BathSpec(Brownian(0.2, 0.05, omega_1=1.0), BETA, n_ltc=2))
    assert bcf_eval(fs, 0.0) == pytest.approx(fs.c.sum(), abs=0)


def test_bcf_single_feature_closed_form():
    fs = drude_lorentz_features(0.2, 0.1, BETA)
    assert bcf_eval(fs, 10.0) == pytest.approx(fs.c[0] * math.exp(-1.0), rel=1e-14)


def test_bcf_brownian_envelope():
    fs = brownian_features(0.2, 0.05, BETA, omega_1=1.0)
    t = np.linspace(0, 100, 1001)
    env = (abs(fs.c[0]) + abs(fs.c[1])) * np.exp(-0.05 * t)
    assert np.all(np.abs(bcf_eval(fs, t)) <= env * (1 + 1e-12))


def test_quadrature_zero_coupling():
    assert bcf_quadrature(BathSpec(DrudeLorentz(0.0, 0.1), BETA), 3.0) == 0


def test_quadrature_real_at_zero():
    spec = BathSpec(Brownian(0.2, 0.05, omega_1=1.0), BETA)
    c0 = bcf_quadrature(spec, 0.0)
    assert c0.real > 0 and abs(c0.imag) < 1e-8 * c0.real


def test_quadrature_against_closed_form_high_temperature():
    # one feature is exact when the Bose function has no relevant poles: compare
    # the DL quadrature with a converged Matsubara sum at t > 0
    spec = BathSpec(DrudeLorentz(0.2, 0.1), BETA)
    fs = drude_lorentz_features(0.2, 0.1, BETA, n_ltc=400, scheme="Matsubara")
    for t in (0.5, 2.0, 10.0):
        assert abs(bcf_quadrature(spec, t) - bcf_eval(fs, t)) < 1e-6


def test_quadrature_imag_part_is_odd_spectrum_transform():
    # Im C(t) = -int_0^inf J(w) sin(w t) dw, independent of temperature
    spec = BathSpec(DrudeLorentz(0.2, 0.1), BETA)
    hot = BathSpec(DrudeLorentz(0.2, 0.1), 0.1)
    assert abs(bcf_quadrature(spec, 4.0).imag - bcf_quadrature(hot, 4.0).imag) < 1e-9
    # closed form for DL: -lam wc exp(-wc t)
    assert bcf_quadrature(spec, 4.0).imag == pytest.approx(-0.2 * 0.1 * math.exp(-0.4), abs=1e-9)


# -- validation ----------------------------------------------------------------


def test_validate_empty_decomposition():
    spec = BathSpec(Brownian(0.2, 0.05, omega_1=1.0), BETA)
    empty = FeatureSet([], ())
    rep = validate_features(empty, spec, [0.0, 1.0, 2.0])
    assert rep.max_rel_err == pytest.approx(1.0, abs=1e-9)


def test_validate_dl_short_horizon():
    spec = BathSpec(DrudeLorentz(0.2, 0.1), BETA, n_ltc=2)
    fs = features_for(spec)
    rep = validate_features(fs, spec, np.linspace(0, 50 / 0.1, 41))
    assert rep.pairing_ok
    # C(0) is infinite, so the relative measure is undefined; pointwise errors at t > 0 stay small
    assert not rep.c0_finite and rep.max_rel_err == math.inf
    assert np.isnan(rep.abs_err[0])
    assert np.nanmax(rep.abs_err) < 1e-3 * abs(fs.c.sum())


def test_validate_brownian_convergence_in_k():
    spec0 = BathSpec(Brownian(0.2, 0.05, omega_1=1.0), BETA)
    grid = np.linspace(0, 5 * BETA, 41)
    errs = []
    for n in range(4):
        spec = BathSpec(spec0.sd, BETA, n_ltc=n)
        errs.append(validate_features(features_for(spec), spec, grid).max_rel_err)
    assert all(b <= a for a, b in zip(errs, errs[1:]))


@settings(max_examples=25, deadline=None)
@given(
    lam=st.floats(0.0, 2.0),
    eta=st.floats(0.005, 0.5),
    w1=st.floats(0.2, 5.0),
    kT=st.floats(0.05, 2.0),
    n=st.integers(0, 4),
    scheme=st.sampled_from(["Pade", "Matsubara"]),
)
def test_brownian_structure_properties(lam, eta, w1, kT, n, scheme):
    fs = brownian_features(lam, eta, 1 / kT, n, scheme, omega_1=w1)
    assert fs.K == 2 + n
    assert np.all(fs.gamma.real <= 0)
    k = list(fs.kappa)
    np.testing.assert_array_equal(fs.c_bar[k], np.conj(fs.c))
    np.testing.assert_array_equal(fs.gamma[k], np.conj(fs.gamma))
    assert fs.pairing_ok()


@settings(max_examples=25, deadline=None)
@given(lam=st.floats(0.0, 2.0), wc=st.floats(0.01, 3.0), kT=st.floats(0.05, 2.0), n=st.integers(0, 4))
def test_dl_structure_properties(lam, wc, kT, n):
    try:
        fs = drude_lorentz_features(lam, wc, 1 / kT, n)
    except ParameterError:
        return  # Bose pole on top of the cutoff pole
    assert np.all(fs.gamma.real <= 0)
    assert fs.pairing_ok()


def test_feature_json_roundtrip():
    fs = features_for(BathSpec(Brownian(0.2, 0.05, omega_1=1.0), BETA, n_ltc=2))
    back = FeatureSet.from_json(fs.to_json())
    np.testing.assert_array_equal(back.c, fs.c)
    np.testing.assert_array_equal(back.c_bar, fs.c_bar)
    np.testing.assert_array_equal(back.gamma, fs.gamma)
    assert back.kappa == fs.kappa
    obj = json.loads(fs.to_json())
    assert set(obj) == {"features", "kappa"}
    assert set(obj["features"][0]) == {"c", "c_bar", "gamma"}
