import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bexcitons.bath import BathSpec, Brownian, DrudeLorentz, ParameterError, features_for
from bexcitons.space import (
    HierarchySpace,
    MetricSpec,
    dvr_build,
    enumerate_indices,
    flat_offset,
    metric_values,
)

BETA = 1 / 0.209


@pytest.fixture(scope="module")
def dl_fs():
    return features_for(BathSpec(DrudeLorentz(0.2, 0.1), BETA, n_ltc=2))


@pytest.fixture(scope="module")
def br_fs():
    return features_for(BathSpec(Brownian(0.2, 0.05, omega_1=1.0), BETA, n_ltc=1))


# -- indices -------------------------------------------------------------------


def test_enumerate_small():
    assert enumerate_indices(HierarchySpace.number((3,))) == [(0,), (1,), (2,)]
    assert enumerate_indices(HierarchySpace.number((2, 2))) == [(0, 0), (0, 1), (1, 0), (1, 1)]


def test_flat_offset_roundtrip_exhaustive():
    sp = HierarchySpace.number((10, 10, 10))
    idx = enumerate_indices(sp)
    assert idx[0] == (0, 0, 0)
    assert [flat_offset(sp, n) for n in idx] == list(range(sp.size))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(2, 5), min_size=1, max_size=4))
def test_flat_offset_bijective(depths):
    sp = HierarchySpace.number(depths)
    offs = [flat_offset(sp, n) for n in enumerate_indices(sp)]
    assert offs == list(range(sp.size))


@pytest.mark.parametrize("bad", [dict(depths=(1, 3)), dict(depths=())])
def test_space_rejects_bad_depths(bad):
    with pytest.raises(ParameterError):
        HierarchySpace(**bad)


def test_space_position_needs_length():
    with pytest.raises(ParameterError):
        HierarchySpace((4, 4), "position", "sinc", ())
    sp = HierarchySpace.position((4, 4), 10.0)
    assert sp.lengths == (10.0, 10.0)


def test_space_memory_guard():
    with pytest.raises(ParameterError):
        HierarchySpace.number((1000,) * 4)


# -- metric --------------------------------------------------------------------


def test_metric_heom_standard(dl_fs):
    assert metric_values(MetricSpec("HeomStandard"), dl_fs, 0, 4) == pytest.approx(0.5j)


def test_metric_unit(dl_fs):
    for n in (1, 5):
        assert metric_values(MetricSpec("Unit"), dl_fs, 1, n) == 1j


def test_metric_scaled_const_high_precision(dl_fs):
    mp.mp.dps = 30
    ref = complex(1j * mp.sqrt(abs(mp.mpc(dl_fs.c[0]))))
    z = metric_values(MetricSpec("ScaledConst"), dl_fs, 0, 1)
    assert abs(z - ref) < 1e-15
    # |0.082 - 0.02i| = 0.084404..., so the magnitude is 0.29052...
    assert z.imag == pytest.approx(0.290522, abs=1e-6)


def test_metric_real_part_root(dl_fs):
    z = metric_values(MetricSpec("PaperDL"), dl_fs, 0, 3)
    assert z == pytest.approx(1j * np.sqrt(dl_fs.c[0].real))


def test_metric_real_part_root_rejects_nonpositive(br_fs):
    # Brownian Bose features have negative real coefficients
    with pytest.raises(ParameterError, match="feature 2"):
        MetricSpec("PaperDL").constant(br_fs, 2)


def test_metric_signed_pair(br_fs):
    z0 = MetricSpec("PaperBrownian").constant(br_fs, 0)
    assert abs(z0.imag - 0.3) < 0.02
    s = MetricSpec("SignedPair")
    assert s.constant(br_fs, 0) == z0
    assert s.constant(br_fs, 1) == -z0


def test_metric_explicit_requires_constants():
    with pytest.raises(ParameterError):
        MetricSpec("Explicit")


def test_metric_zero_rejected(dl_fs):
    with pytest.raises(ParameterError):
        MetricSpec("Explicit", (0j, 1j, 1j)).constant(dl_fs, 0)


@pytest.mark.parametrize("preset", ["Unit", "ScaledConst", "ScaledAbs", "PaperBrownian", "SignedPair", "HeomStandard"])
def test_metric_nonzero_everywhere(preset, br_fs):
    spec = MetricSpec(preset)
    for k in range(br_fs.K):
        z = spec.levels(br_fs, k, 12)
        assert np.all(np.abs(z[1:]) > 0)


# -- DVR -----------------------------------------------------------------------


@pytest.mark.parametrize("kind", ["sinc", "sine"])
def test_dvr_structure(kind):
    d = dvr_build(kind, 40, 40.0)
    np.testing.assert_array_equal(d.D1, -d.D1.T)
    np.testing.assert_array_equal(d.D2, d.D2.T)
    np.testing.assert_allclose(d.points, -d.points[::-1], atol=1e-13)
    assert abs(np.sum(d.vacuum**2) - 1) < 1e-10


def test_sinc_diagonal_values():
    d = dvr_build("sinc", 40, 40.0)
    assert np.all(np.diag(d.D1) == 0)
    np.testing.assert_allclose(np.diag(d.D2), -np.pi**2 / 3, rtol=1e-15)
    assert d.spacing == 1.0


def test_sinc_matches_formula():
    d = dvr_build("sinc", 7, 3.5)
    dx = 0.5
    for m in range(7):
        for n in range(7):
            if m != n:
                s = (-1) ** (m - n)
                assert d.D1[m, n] == pytest.approx(s / (dx * (m - n)))
                assert d.D2[m, n] == pytest.approx(-2 * s / (dx**2 * (m - n) ** 2))


def test_sampled_vacuum_norm_before_renormalisation():
    # Poisson summation: sum_m dx pi^-1/2 exp(-x_m^2) = 1 + 2 sum_j exp(-(pi j/dx)^2) (-1)^{j(N-1)}
    dx = 1.0
    x = (np.arange(40) - 19.5) * dx
    raw = np.sum(dx * np.exp(-(x**2)) / np.sqrt(np.pi))
    poisson = 1 + 2 * sum(np.exp(-((np.pi * j / dx) ** 2)) * np.cos(np.pi * j * 39) for j in range(1, 4))
    assert raw == pytest.approx(poisson, abs=1e-14)


@pytest.mark.parametrize("kind", ["sinc", "sine"])
def test_dvr_derivatives_on_gaussian(kind):
    d = dvr_build(kind, 60, 24.0)
    g = np.exp(-(d.points**2) / 2)
    np.testing.assert_allclose(d.D1 @ g, -d.points * g, atol=1e-8)
    np.testing.assert_allclose(d.D2 @ g, (d.points**2 - 1) * g, atol=1e-8)


@pytest.mark.parametrize("kind", ["sinc", "sine"])
def test_ladder_commutator_identity(kind):
    d = dvr_build(kind, 40, 40.0)
    A, Ad = d.annihilation(), d.creation()
    comm = A @ Ad - Ad @ A
    c = slice(3, 37)
    assert np.linalg.norm(comm[c, c] - np.eye(34)) < 1e-6


@pytest.mark.parametrize("kind", ["sinc", "sine"])
def test_number_operator_spectrum(kind):
    d = dvr_build(kind, 40, 40.0)
    ev = np.linalg.eigvalsh(d.number_operator())[:10]
    assert np.max(np.abs(ev - np.arange(10))) < 1e-6


@pytest.mark.parametrize("kind", ["sinc", "sine"])
def test_ladder_on_fine_grid(kind):
    d = dvr_build(kind, 40, 20.0)
    ev = np.linalg.eigvalsh(d.number_operator())[:4]
    np.testing.assert_allclose(ev, np.arange(4), atol=1e-6)
    np.testing.assert_allclose(d.annihilation() @ d.vacuum, 0, atol=1e-7)
    # the commutator holds in the sense of matrix elements between smooth low-lying states
    w, V = np.linalg.eigh(d.number_operator())
    low = V[:, :3]
    A, Ad = d.annihilation(), d.creation()
    np.testing.assert_allclose(low.T @ (A @ Ad - Ad @ A) @ low, np.eye(3), atol=1e-6)


def test_dvr_rejects_bad_input():
    with pytest.raises(ParameterError):
        dvr_build("sinc", 1, 10.0)
    with pytest.raises(ParameterError):
        dvr_build("cosine", 10, 10.0)


def test_dvr_export(tmp_path):
    d = dvr_build("sinc", 8, 8.0)
    d.savetxt(str(tmp_path / "g"))
    np.testing.assert_allclose(np.loadtxt(tmp_path / "g_D1.txt"), d.D1)
