import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from beamselect import (ArrayGeometry, DomainError, MeasurementError, PatternCut, ResourceError, WeightMatrix,
                        array_factor, compute_cut, compute_eirp, directivity, measure_beamwidth, measure_sll)
from beamselect.pattern import (AZIMUTH, ELEVATION, grating_period, locate_peak, measure_pattern, outer_factor,
                                pattern_uv, subarray_factor)
from beamselect.synthesis import SynthesisParams, synthesize


def uniform(geometry, mask=None):
    shape = geometry.subarray_grid
    mask = np.ones(shape, bool) if mask is None else mask
    return WeightMatrix(np.ones(shape), np.zeros(shape), mask)


def tapered(geometry, sll=-25.0, rows=None, cols=None):
    rows = rows or geometry.subarray_grid[0]
    cols = cols or geometry.subarray_grid[1]
    return synthesize(geometry, SynthesisParams(taper_sll_az=sll, taper_sll_el=sll, active_rows=rows,
                                                active_cols=cols))


def brute_cut_db(geometry, weights, az_deg, el_deg=0.0):
    """|field|^2 in dB along an azimuth cut, by direct summation over every physical element."""
    dy, dx = geometry.subarray_pitch
    y, x = geometry.subarray_positions()
    yo, xo = geometry.element_offsets()
    ex = (x[:, None] + xo[None, :]).ravel()
    ey = (y[:, None] + yo[None, :]).ravel()
    ny, nx = geometry.element_grid_per_subarray
    w = np.kron(weights.complex, np.ones((ny, nx)))  # rows along y, cols along x
    u = np.sin(np.radians(az_deg))
    v = math.sin(math.radians(el_deg))
    k = geometry.wavenumber
    row_phase = np.exp(1j * k * ey * v)
    fx = np.exp(1j * k * np.outer(u, ex))
    field = fx @ (w.T @ row_phase)
    field = field * np.sqrt(np.clip(1 - u**2 - v**2, 0, None)) ** geometry.element_exponent
    p = np.abs(field) ** 2
    return 10 * np.log10(p / p.max())


# field values

def test_boresight_coherent_sum(geometry):
    w = uniform(geometry)
    assert abs(abs(array_factor(geometry, w, 0.0, 0.0)) - 36 * 36 * 16) < 1e-6


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_boresight_sum_equals_amplitude_total_times_subarray_size(seed):
    g = ArrayGeometry(subarray_grid=(8, 8))
    r = np.random.default_rng(seed)
    amp = r.random((8, 8))
    amp /= amp.max()
    w = WeightMatrix(amp, np.zeros((8, 8)), np.ones((8, 8), bool))
    val = abs(array_factor(g, w, 0.0, 0.0))
    assert abs(val / (amp.sum() * 16) - 1) < 1e-9


def test_single_element_is_direction_flat_outer(geometry, rng):
    mask = np.zeros(geometry.subarray_grid, bool)
    mask[10, 20] = True
    w = uniform(geometry, mask)
    theta = rng.uniform(0, 0.1, 50)
    phi = rng.uniform(0, 2 * np.pi, 50)
    total = np.abs(array_factor(geometry, w, theta, phi, include_element=False))
    sub = np.abs(subarray_factor(geometry, *np.broadcast_arrays(np.sin(theta) * np.cos(phi),
                                                                 np.sin(theta) * np.sin(phi))))
    assert np.allclose(total, sub, rtol=1e-12)


def test_two_element_interference_closed_form(geometry, rng):
    mask = np.zeros(geometry.subarray_grid, bool)
    mask[5, 3] = mask[5, 10] = True
    w = uniform(geometry, mask)
    D = 7 * geometry.subarray_pitch[1]
    u = rng.uniform(-0.2, 0.2, 100)
    got = np.abs(outer_factor(geometry, w, u, np.zeros_like(u)))
    want = 2 * np.abs(np.cos(np.pi * D * u / geometry.wavelength))
    assert np.allclose(got, want, atol=1e-9)


def test_global_phase_leaves_pattern_unchanged(geometry, rng):
    w = WeightMatrix.from_complex(rng.normal(size=(36, 36)) + 1j * rng.normal(size=(36, 36)))
    shifted = w.copy(phases=w.phases + 1.234)
    u, v = rng.uniform(-0.15, 0.15, (2, 200))
    a, b = np.abs(pattern_uv(geometry, w, u, v)), np.abs(pattern_uv(geometry, shifted, u, v))
    assert np.max(np.abs(a - b) / a.max()) < 1e-12


def test_conjugate_phases_mirror_pattern(geometry, rng):
    w = WeightMatrix.from_complex(rng.normal(size=(36, 36)) + 1j * rng.normal(size=(36, 36)))
    conj = w.copy(phases=-w.phases)
    u, v = rng.uniform(-0.15, 0.15, (2, 200))
    a, b = np.abs(pattern_uv(geometry, w, u, v)), np.abs(pattern_uv(geometry, conj, -u, -v))
    assert np.max(np.abs(a - b) / a.max()) < 1e-12


def test_array_factor_agrees_with_brute_force_sum(geometry):
    w = tapered(geometry, -22.0, 20, 30)
    az = np.linspace(-3, 3, 61)
    mag = np.abs(array_factor(geometry, w, np.radians(np.abs(az)), np.where(az < 0, np.pi, 0.0))) ** 2
    assert np.allclose(10 * np.log10(mag / mag.max()), brute_cut_db(geometry, w, az), atol=1e-8)


# cuts

def test_symmetric_taper_gives_identical_cuts(geometry):
    w = tapered(geometry)
    az = compute_cut(geometry, w, AZIMUTH)
    el = compute_cut(geometry, w, ELEVATION)
    assert np.max(np.abs(az.magnitude_db - el.magnitude_db)) < 1e-9
    assert az.magnitude_db.max() == 0.0


def test_cut_is_deterministic(geometry):
    w = tapered(geometry)
    a = compute_cut(geometry, w, AZIMUTH, (1.0, 2.0))
    b = compute_cut(geometry, w, AZIMUTH, (1.0, 2.0))
    assert np.array_equal(a.magnitude_db, b.magnitude_db)


def test_first_null_of_uniform_outer_array(geometry):
    w = uniform(geometry)
    az = np.arange(0.3, 0.6, 1e-5)
    mag = np.abs(outer_factor(geometry, w, np.sin(np.radians(az)), np.zeros_like(az)))
    scan_null = az[np.argmin(mag)]
    closed = math.degrees(math.asin(geometry.wavelength / (36 * geometry.subarray_pitch[1])))
    assert abs(scan_null - closed) < 2e-5
    assert abs(closed - 0.454) < 1e-3


def test_cut_argument_errors(geometry):
    w = uniform(geometry)
    with pytest.raises(DomainError):
        compute_cut(geometry, w, AZIMUTH, step=0)
    with pytest.raises(DomainError):
        compute_cut(geometry, w, AZIMUTH, half_span=0.05, step=0.01)
    with pytest.raises(ResourceError):
        compute_cut(geometry, w, AZIMUTH, half_span=80, step=1e-6)
    with pytest.raises(DomainError):
        compute_cut(geometry, w, "diagonal")


# beamwidth

def test_uniform_beamwidth_against_dense_scan(geometry):
    w = uniform(geometry)
    bw = measure_beamwidth(compute_cut(geometry, w, AZIMUTH))
    az = np.arange(-1.0, 1.0 + 5e-4, 1e-3)
    db = brute_cut_db(geometry, w, az)
    above = az[db >= -3.0]
    dense = above.max() - above.min()
    assert abs(bw - dense) <= 0.01
    assert abs(bw - math.degrees(0.886 / 126)) < 0.005


def test_chebyshev_taper_widens_beam(geometry):
    bw_u = measure_beamwidth(compute_cut(geometry, uniform(geometry), AZIMUTH))
    bw_t = measure_beamwidth(compute_cut(geometry, tapered(geometry), AZIMUTH))
    assert bw_t > bw_u


def triangle(slope, offset=0.0):
    a = np.round(np.arange(-5, 5.0001, 0.01), 10)
    return PatternCut(AZIMUTH, 0.0, a, offset - slope * np.abs(a), 0.01)


@pytest.mark.parametrize("slope", [1.0, 2.5, 6.0])
def test_triangular_cut_has_exact_width(slope):
    assert abs(measure_beamwidth(triangle(slope)) - 6.0 / slope) < 1e-9


def test_beamwidth_without_crossing_raises():
    a = np.linspace(-1, 1, 201)
    cut = PatternCut(AZIMUTH, 0.0, a, -0.5 * a**2, 0.01)
    with pytest.raises(MeasurementError):
        measure_beamwidth(cut)


# sidelobes

def test_uniform_first_sidelobe(geometry):
    sll = measure_sll(compute_cut(geometry, uniform(geometry), AZIMUTH), grating_period(geometry, AZIMUTH))
    assert abs(sll - (-13.26)) < 0.05


def test_chebyshev_design_level_is_measured(geometry):
    cut = compute_cut(geometry, tapered(geometry, -25.0), AZIMUTH)
    assert abs(measure_sll(cut, grating_period(geometry, AZIMUTH)) + 25.0) <= 0.5


def test_constructed_single_bump():
    a = np.round(np.arange(-5, 5.0001, 0.01), 10)
    db = np.where(np.abs(a) < 1, -40 * a**2, -40.0)
    db = np.maximum(db, -20.0 - 50 * (a - 3) ** 2)
    cut = PatternCut(AZIMUTH, 0.0, a, db, 0.01)
    assert abs(measure_sll(cut) + 20.0) < 1e-9


def test_sll_without_sidelobe_raises():
    a = np.linspace(-1, 1, 201)
    with pytest.raises(MeasurementError):
        measure_sll(PatternCut(AZIMUTH, 0.0, a, -10 * a**2, 0.01))


@settings(max_examples=30, deadline=None)
@given(st.floats(-50, 50))
def test_measurements_ignore_constant_db_offset(offset):
    base = compute_cut(ArrayGeometry(subarray_grid=(12, 12)),
                       uniform(ArrayGeometry(subarray_grid=(12, 12))), AZIMUTH)
    shifted = PatternCut(AZIMUTH, 0.0, base.angles, base.magnitude_db + offset, base.step)
    assert abs(measure_beamwidth(base) - measure_beamwidth(shifted)) < 1e-9
    assert abs(measure_sll(base) - measure_sll(shifted)) < 1e-9


# directivity and EIRP

def test_lattice_directivity_matches_quadrature(small_geometry, rng):
    for _ in range(3):
        z = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
        w = WeightMatrix.from_complex(z, rng.random((6, 6)) > 0.2)
        steer = tuple(rng.uniform(-10, 10, 2))
        exact = directivity(small_geometry, w, steer)
        quad = directivity(small_geometry, w, steer, method="quadrature", grid=(1024, 2048))
        assert abs(exact - quad) < 1e-3


def test_directivity_below_aperture_bound(geometry):
    d = directivity(geometry, uniform(geometry))
    bound = 10 * math.log10(4 * math.pi * geometry.aperture_area / geometry.wavelength**2)
    assert d <= bound + 0.1
    assert d > bound - 0.5


def test_uniform_maximizes_boresight_directivity(geometry):
    d_u = directivity(geometry, uniform(geometry))
    for sll in (-20.0, -30.0, -40.0):
        assert d_u >= directivity(geometry, tapered(geometry, sll))


def test_steering_reduces_directivity_monotonically(geometry):
    w = uniform(geometry)
    d = []
    for az in np.linspace(0, 8.7, 8):
        steered = w.copy(phases=-geometry.wavenumber * np.sin(np.radians(az)) * geometry.subarray_positions()[1][None, :]
                         * np.ones((36, 1)))
        d.append(directivity(geometry, steered, (0.0, az)))
    assert np.all(np.diff(d) < 0)


def test_doubling_power_adds_3_0103_db(geometry):
    w = tapered(geometry)
    e1 = compute_eirp(geometry, w)
    e2 = compute_eirp(geometry, w.copy(per_element_power=2 * w.per_element_power))
    assert abs(e2 - e1 - 10 * math.log10(2)) < 1e-12
    assert abs(10 * math.log10(2) - 3.0103) < 1e-4


def test_eirp_of_inactive_matrix_raises(geometry):
    shape = geometry.subarray_grid
    w = WeightMatrix(np.zeros(shape), np.zeros(shape), np.zeros(shape, bool))
    with pytest.raises(DomainError):
        compute_eirp(geometry, w)
    with pytest.raises(DomainError):
        directivity(geometry, w)


def test_measure_pattern_metrics_signs(geometry):
    m = measure_pattern(geometry, tapered(geometry, -28.0, 20, 30), (0.0, 0.0))
    assert m.beamwidth_az > 0 and m.beamwidth_el > 0
    assert m.sll_az < 0 and m.sll_el < 0
    # the narrower elevation aperture gives the wider elevation beam
    assert m.beamwidth_el > m.beamwidth_az


def test_locate_peak_on_steered_beam(geometry):
    w = synthesize(geometry, SynthesisParams(steer=(math.radians(5.0), 0.0), taper_sll_az=-20, taper_sll_el=-20))
    el, az = locate_peak(geometry, w, (0.0, 0.0))
    assert abs(el) <= 0.01 and abs(az - 5.0) <= 0.01
