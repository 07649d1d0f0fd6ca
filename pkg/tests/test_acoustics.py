import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from usthermal import acoustics as ac
from usthermal.geometry import ArrayAssembly, ArrayUnit, enable_subset

from oracles import first_bessel_zero, magnitude_sum, piston_directivity


def test_directivity_on_axis_is_one():
    assert ac.directivity(3.3, 0.0) == 1.0


def test_directivity_first_zero():
    x0 = first_bessel_zero()
    assert abs(x0 - 3.8317) < 1e-4
    ka = 5.0
    theta = math.asin(x0 / ka)
    assert abs(ac.directivity(ka, theta)) < 1e-4
    assert abs(ac.directivity(ka, math.asin(3.8317 / ka))) < 1e-4


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 10), st.floats(-math.pi / 2, math.pi / 2))
def test_directivity_even_and_matches_bessel(ka, theta):
    assert ac.directivity(ka, theta) == ac.directivity(ka, -theta)
    assert ac.directivity(ka, theta) == pytest.approx(piston_directivity(ka, theta), abs=1e-8)


def test_focus_phase_zero_at_whole_wavelengths(medium):
    lam = medium.wavelength
    a = ArrayAssembly((ArrayUnit(rows=1, cols=1, omitted_cells=()),))
    drive = ac.focus_phases(a, medium, (0, 0, 35 * lam))
    ph = drive.phases[0]
    assert min(ph, 2 * math.pi - ph) < 1e-9


def test_equidistant_elements_share_phase(medium):
    a = ArrayAssembly((ArrayUnit(origin=(-0.05, 0, 0), rows=11, cols=1, pitch=0.01, omitted_cells=()),))
    drive = ac.focus_phases(a, medium, (0, 0, 0.2))
    assert drive.phases[0] == pytest.approx(drive.phases[10], abs=1e-12)
    assert drive.phases[3] == pytest.approx(drive.phases[7], abs=1e-12)


def test_focus_inside_element_raises(medium, single_element):
    with pytest.raises(ac.AcousticsError):
        ac.focus_phases(single_element, medium, (0.001, 0, 0))


def test_zero_drive_gives_zero(medium, small_assembly):
    drive = ac.DriveVector(np.zeros(small_assembly.n_enabled), np.zeros(small_assembly.n_enabled))
    assert ac.pressure_at(small_assembly, medium, drive, (0, 0, 0.1)) == 0


def test_single_element_on_axis(single_element):
    med = ac.MediumParams(attenuation=0.0)
    drive = ac.DriveVector(np.ones(1), np.zeros(1))
    p = ac.pressure_at(single_element, med, drive, (0, 0, 0.296))
    assert abs(p) == pytest.approx(1 / 0.296, rel=1e-14)
    assert abs(p) == pytest.approx(3.3784, abs=1e-4)


def test_focus_equals_magnitude_sum(medium, six_units):
    focus = (0.0, 0.0, 0.296)
    drive = ac.focus_phases(six_units, medium, focus)
    p = ac.pressure_at(six_units, medium, drive, focus)
    assert abs(p) == pytest.approx(magnitude_sum(six_units, medium, focus), rel=1e-9)


def test_focus_beats_random_phases(medium, small_assembly, rng):
    focus = np.array([0.005, -0.01, 0.12])
    best = abs(ac.pressure_at(small_assembly, medium, ac.focus_phases(small_assembly, medium, focus), focus))
    n = small_assembly.n_enabled
    for _ in range(1000):
        d = ac.DriveVector(np.ones(n), rng.uniform(0, 2 * np.pi, n))
        assert abs(ac.pressure_at(small_assembly, medium, d, focus)) <= best


def test_intensity_arithmetic(single_element):
    med = ac.MediumParams(attenuation=0.0)
    drive = ac.DriveVector(np.ones(1), np.zeros(1))
    intensity = ac.intensity_at(single_element, med, drive, (0, 0, 0.296))
    assert intensity == pytest.approx((1 / 0.296) ** 2 / (2 * 1.204 * 343), rel=1e-12)
    assert intensity == pytest.approx(0.01382, abs=1e-5)


def test_intensity_quadruples_with_double_drive(medium, small_assembly, rng):
    n = small_assembly.n_enabled
    ph = rng.uniform(0, 2 * np.pi, n)
    half, full = ac.DriveVector(np.full(n, 0.5), ph), ac.DriveVector(np.ones(n), ph)
    for pt in rng.uniform(-0.05, 0.05, (10, 3)) + [0, 0, 0.15]:
        assert ac.intensity_at(small_assembly, medium, full, pt) == pytest.approx(
            4 * ac.intensity_at(small_assembly, medium, half, pt), rel=1e-12)


def test_grid_1x1_equals_point(medium, small_assembly, focused_small):
    focus, drive = focused_small
    q = (0.01, 0.02, 0.1)
    spec = ac.GridSpec(q, (1, 0, 0), (0, 1, 0), 1, 1, 1e-3, 1e-3)
    g = ac.field_grid(small_assembly, medium, drive, spec)
    assert g.values[0, 0] == ac.pressure_at(small_assembly, medium, drive, q)


def test_grid_symmetric_for_symmetric_assembly(medium):
    u0 = ArrayUnit(origin=(-0.05, -0.02, 0), rows=4, cols=5, omitted_cells=(), pitch=0.01)
    u1 = ArrayUnit(origin=(0.02, -0.02, 0), rows=4, cols=5, omitted_cells=(), pitch=0.01)
    a = ArrayAssembly((u0, u1))
    drive = ac.focus_phases(a, medium, (0, 0, 0.2))
    g = ac.field_grid(a, medium, drive, ac.GridSpec.centered((0, 0, 0.2), 0.04, 0.002), "intensity")
    v = g.values
    np.testing.assert_allclose(v, v[:, ::-1], rtol=1e-10)
    np.testing.assert_allclose(v, v[::-1, :], rtol=1e-10)


def test_large_grid_spot_checks(medium, fig1, rng):
    drive = ac.focus_phases(fig1.assembly, medium, fig1.focus)
    spec = ac.GridSpec.centered(fig1.focus, 0.08, 0.0004)
    assert (spec.nx, spec.ny) == (201, 201)
    g = ac.field_grid(fig1.assembly, medium, drive, spec)
    for _ in range(5):
        i, j = rng.integers(0, 201, 2)
        direct = ac.pressure_at(fig1.assembly, medium, drive, spec.point(i, j))
        assert g.values[j, i] == pytest.approx(direct, rel=1e-12)


def test_superposition_of_disjoint_subsets(medium, fig1, rng):
    full = fig1.assembly
    drive = ac.focus_phases(full, medium, fig1.focus)
    a, b = enable_subset(full, range(6)), enable_subset(full, range(6, 12))
    da = ac.DriveVector(drive.amplitudes[:a.n_enabled], drive.phases[:a.n_enabled])
    db = ac.DriveVector(drive.amplitudes[a.n_enabled:], drive.phases[a.n_enabled:])
    pts = rng.uniform(-0.03, 0.03, (20, 3)) + np.asarray(fig1.focus)
    pf = ac.pressure_many(full, medium, drive, pts)
    ps = ac.pressure_many(a, medium, da, pts) + ac.pressure_many(b, medium, db, pts)
    np.testing.assert_allclose(ps, pf, rtol=1e-12)


def test_common_phase_shift_invariance(medium, small_assembly, rng):
    n = small_assembly.n_enabled
    d = ac.DriveVector(rng.uniform(0, 1, n), rng.uniform(0, 2 * np.pi, n))
    shifted = ac.DriveVector(d.amplitudes, d.phases + 1.234)
    pts = rng.uniform(-0.05, 0.05, (20, 3)) + [0, 0, 0.1]
    np.testing.assert_allclose(np.abs(ac.pressure_many(small_assembly, medium, shifted, pts)),
                               np.abs(ac.pressure_many(small_assembly, medium, d, pts)), rtol=1e-12)


def test_inverse_distance_without_attenuation_or_directivity():
    med = ac.MediumParams(attenuation=0.0)
    a = ArrayAssembly((ArrayUnit(rows=1, cols=1, omitted_cells=(), source_strength=2.5),))
    drive = ac.DriveVector(np.ones(1), np.zeros(1))
    # on-axis: D = 1 exactly
    for d in np.linspace(0.05, 1.0, 50):
        assert abs(ac.pressure_at(a, med, drive, (0, 0, d))) == pytest.approx(2.5 / d, rel=1e-12)


def test_attenuation_monotone(single_element):
    drive = ac.DriveVector(np.ones(1), np.zeros(1))
    mags = [abs(ac.pressure_at(single_element, ac.MediumParams(attenuation=a), drive, (0, 0, 0.3)))
            for a in (0.0, 0.05, 0.12, 0.5, 2.0)]
    assert all(x > y for x, y in zip(mags, mags[1:]))


def test_disabled_units_are_bitwise_absent(medium, fig1):
    sub = enable_subset(fig1.assembly, range(6))
    only = ArrayAssembly(fig1.assembly.units[:6])
    pts = np.array([[0.0, 0.0, 0.296], [0.01, -0.02, 0.29]])
    d1, d2 = ac.focus_phases(sub, medium, fig1.focus), ac.focus_phases(only, medium, fig1.focus)
    assert np.array_equal(d1.phases, d2.phases)
    assert np.array_equal(ac.pressure_many(sub, medium, d1, pts), ac.pressure_many(only, medium, d2, pts))


def test_zero_distance_raises(medium, single_element):
    drive = ac.DriveVector(np.ones(1), np.zeros(1))
    with pytest.raises(ac.AcousticsError):
        ac.pressure_at(single_element, medium, drive, (0, 0, 0))


def test_drive_length_checked(medium, small_assembly):
    with pytest.raises(ac.AcousticsError):
        ac.pressure_at(small_assembly, medium, ac.DriveVector(np.ones(3), np.zeros(3)), (0, 0, 0.1))


class TestFocalMetrics:
    def test_single_hot_cell(self):
        spec = ac.GridSpec((0, 0, 0), (1, 0, 0), (0, 1, 0), 5, 5, 2e-3, 2e-3)
        v = np.zeros((5, 5))
        v[2, 2] = 7.0
        m = ac.focal_metrics(ac.FieldGrid(spec, v, "intensity"))
        assert m["width_6dB"] == pytest.approx(2e-3)
        assert m["peak"] == 7.0
        np.testing.assert_allclose(m["peak_location"], [4e-3, 4e-3, 0])

    def test_boundary_peak_raises(self):
        spec = ac.GridSpec((0, 0, 0), (1, 0, 0), (0, 1, 0), 5, 5, 1e-3, 1e-3)
        v = np.zeros((5, 5))
        v[0, 3] = 1.0
        with pytest.raises(ac.AcousticsError):
            ac.focal_metrics(ac.FieldGrid(spec, v, "intensity"))

    def test_peak_near_focus_dense_search(self, medium, sec24):
        a, f = sec24.assembly, np.asarray(sec24.focus)
        drive = ac.focus_phases(a, medium, f)
        g = ac.field_grid(a, medium, drive, ac.GridSpec.centered(f, 0.04, 1e-3), "intensity")
        m = ac.focal_metrics(g, f)
        assert m["peak_offset"] <= medium.wavelength / 2
        dense = ac.field_grid(a, medium, drive, ac.GridSpec.centered(f, 0.004, 1e-4), "intensity")
        j, i = np.unravel_index(np.argmax(dense.values), dense.values.shape)
        assert np.linalg.norm(dense.spec.point(i, j) - f) <= medium.wavelength / 2
        assert m["peak"] <= dense.values.max() * (1 + 1e-12)

    def test_scale_invariance(self, medium, sec24):
        a, f = sec24.assembly, sec24.focus
        drive = ac.focus_phases(a, medium, f)
        spec = ac.GridSpec.centered(f, 0.03, 1e-3)
        m1 = ac.focal_metrics(ac.field_grid(a, medium, drive, spec, "intensity"))
        m2 = ac.focal_metrics(ac.field_grid(a, medium, drive.scaled(0.5), spec, "intensity"))
        assert m2["width_6dB"] == m1["width_6dB"]
        assert m2["peak"] == pytest.approx(0.25 * m1["peak"], rel=1e-12)
