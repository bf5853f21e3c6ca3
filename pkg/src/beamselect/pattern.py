"""Far-field evaluation and pattern metrics.

The total field is the product of three factors (pattern multiplication):
the outer array factor over the RF-chain grid, the uniform subarray factor,
and a ``cos(theta)**q`` element pattern.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gamma, jv

from .exceptions import DomainError, MeasurementError, ResourceError
from .geometry import ArrayGeometry, WeightMatrix, direction_to_uv, pointing_to_uv

AZIMUTH = "azimuth"
ELEVATION = "elevation"
CUT_KINDS = (AZIMUTH, ELEVATION)

DEFAULT_HALF_SPAN = 8.7
DEFAULT_STEP = 0.01
MAX_CUT_SAMPLES = 10_000_000
_DB_FLOOR = -400.0


def _check_shape(geometry: ArrayGeometry, weights: WeightMatrix):
    if tuple(weights.shape) != tuple(geometry.subarray_grid):
        raise DomainError(f"weight grid {weights.shape} does not match geometry {geometry.subarray_grid}")


def element_factor(geometry: ArrayGeometry, u, v):
    cos_theta_sq = np.clip(1.0 - np.asarray(u) ** 2 - np.asarray(v) ** 2, 0.0, None)
    return cos_theta_sq ** (geometry.element_exponent / 2.0)


def _linear_factor(k, positions, s):
    return np.exp(1j * k * np.multiply.outer(np.atleast_1d(s), positions)).sum(axis=-1)


def subarray_factor(geometry: ArrayGeometry, u, v):
    """Uniform subarray factor; separable in ``u`` and ``v``."""
    u, v = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(v, dtype=float))
    yo, xo = geometry.element_offsets()
    k = geometry.wavenumber
    sx = _linear_factor(k, xo, u.ravel()).reshape(u.shape)
    sy = _linear_factor(k, yo, v.ravel()).reshape(v.shape)
    return sx * sy


def outer_factor(geometry: ArrayGeometry, weights: WeightMatrix, u, v):
    """Array factor of the RF-chain grid alone at direction cosines ``(u, v)``."""
    _check_shape(geometry, weights)
    u, v = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(v, dtype=float))
    y, x = geometry.subarray_positions()
    k = geometry.wavenumber
    ey = np.exp(1j * k * np.multiply.outer(v.ravel(), y))
    ex = np.exp(1j * k * np.multiply.outer(u.ravel(), x))
    af = np.sum((ey @ weights.complex) * ex, axis=1)
    return af.reshape(u.shape)


def pattern_uv(geometry: ArrayGeometry, weights: WeightMatrix, u, v):
    """Complex total field at arbitrary direction-cosine points."""
    u, v = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(v, dtype=float))
    return outer_factor(geometry, weights, u, v) * subarray_factor(geometry, u, v) * element_factor(geometry, u, v)


def pattern_grid(geometry: ArrayGeometry, weights: WeightMatrix, u_values, v_values):
    """Complex total field on the tensor grid ``v_values x u_values``.

    Returns an array of shape ``(len(v_values), len(u_values))``.
    """
    _check_shape(geometry, weights)
    u_values = np.atleast_1d(np.asarray(u_values, dtype=float))
    v_values = np.atleast_1d(np.asarray(v_values, dtype=float))
    y, x = geometry.subarray_positions()
    yo, xo = geometry.element_offsets()
    k = geometry.wavenumber
    ey = np.exp(1j * k * np.multiply.outer(v_values, y))
    ex = np.exp(1j * k * np.multiply.outer(u_values, x))
    outer = ey @ weights.complex @ ex.T
    sub = np.multiply.outer(_linear_factor(k, yo, v_values), _linear_factor(k, xo, u_values))
    elem = element_factor(geometry, u_values[None, :], v_values[:, None])
    return outer * sub * elem


def array_factor(geometry: ArrayGeometry, weights: WeightMatrix, theta, phi,
                 include_subarray: bool = True, include_element: bool = True):
    """Complex far field toward spherical direction(s) ``(theta, phi)`` in radians.

    With both flags off this is the bare outer array factor
    ``sum a_mn exp(j(phi_mn + k(x_m u + y_n v))))``.
    """
    u, v = direction_to_uv(np.asarray(theta, dtype=float), np.asarray(phi, dtype=float))
    field = outer_factor(geometry, weights, u, v)
    if include_subarray:
        field = field * subarray_factor(geometry, u, v)
    if include_element:
        field = field * element_factor(geometry, u, v)
    return field[()] if np.ndim(field) == 0 else field


def _to_db(power, reference):
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(power / reference)
    return np.maximum(db, _DB_FLOOR)


@dataclass(eq=False)
class PatternCut:
    """One-dimensional pattern slice, magnitudes in dB relative to the cut peak."""

    cut_kind: str
    fixed_angle: float
    angles: np.ndarray
    magnitude_db: np.ndarray
    step: float

    def __post_init__(self):
        if self.cut_kind not in CUT_KINDS:
            raise DomainError(f"cut_kind must be one of {CUT_KINDS}, got {self.cut_kind!r}")
        self.angles = np.asarray(self.angles, dtype=float)
        mag = np.asarray(self.magnitude_db, dtype=float)
        if self.angles.shape != mag.shape or self.angles.ndim != 1 or len(self.angles) < 3:
            raise DomainError("a cut needs matching 1-D angle/magnitude arrays of length >= 3")
        if np.any(np.diff(self.angles) <= 0):
            raise DomainError("cut angles must be strictly increasing")
        self.magnitude_db = mag - mag.max()

    @property
    def samples(self):
        return list(zip(self.angles.tolist(), self.magnitude_db.tolist()))

    @property
    def peak_angle(self) -> float:
        return float(self.angles[np.argmax(self.magnitude_db)])


def compute_cut(geometry: ArrayGeometry, weights: WeightMatrix, cut_kind: str,
                center=(0.0, 0.0), half_span: float = DEFAULT_HALF_SPAN,
                step: float = DEFAULT_STEP) -> PatternCut:
    """Sample ``|field|**2`` along an azimuth or elevation cut through ``center = (el, az)``."""
    if not step > 0:
        raise DomainError("step must be positive")
    if half_span < 10 * step:
        raise DomainError("half_span must be at least 10 steps")
    half_n = int(round(half_span / step))
    if 2 * half_n + 1 > MAX_CUT_SAMPLES:
        raise ResourceError(f"cut would have {2 * half_n + 1} samples")
    el_c, az_c = center
    offsets = step * np.arange(-half_n, half_n + 1)
    if cut_kind == AZIMUTH:
        angles = az_c + offsets
        fixed = el_c
        u, v = np.sin(np.radians(angles)), np.sin(np.radians(el_c))
    elif cut_kind == ELEVATION:
        angles = el_c + offsets
        fixed = az_c
        u, v = np.sin(np.radians(az_c)), np.sin(np.radians(angles))
    else:
        raise DomainError(f"cut_kind must be one of {CUT_KINDS}, got {cut_kind!r}")
    if np.any(np.abs(angles) >= 90.0):
        raise DomainError("cut extends beyond the visible hemisphere")
    power = np.abs(pattern_grid(geometry, weights, u, v)).ravel() ** 2
    return PatternCut(cut_kind, float(fixed), angles, _to_db(power, power.max()), float(step))


def _normalized(cut: PatternCut) -> np.ndarray:
    return cut.magnitude_db - cut.magnitude_db.max()


def _crossing(angles, db, i, j, level):
    a0, a1, d0, d1 = angles[i], angles[j], db[i], db[j]
    if d1 == d0:
        return a0
    return a0 + (level - d0) * (a1 - a0) / (d1 - d0)


def measure_beamwidth(cut: PatternCut, level: float = -3.0) -> float:
    """Angular distance between the -3 dB crossings either side of the peak (degrees)."""
    db = _normalized(cut)
    a = cut.angles
    peak = int(np.argmax(db))
    if peak == 0 or peak == len(db) - 1:
        raise MeasurementError("cut peak lies on the span boundary")
    left = np.nonzero(db[:peak] <= level)[0]
    right = np.nonzero(db[peak + 1:] <= level)[0]
    if left.size == 0 or right.size == 0:
        raise MeasurementError(f"no {level} dB crossing inside the cut span")
    i = left[-1]
    j = peak + 1 + right[0]
    return float(_crossing(a, db, j - 1, j, level) - _crossing(a, db, i, i + 1, level))


def main_lobe_bounds(cut: PatternCut) -> tuple[int, int]:
    """Indices of the first local minima on each side of the peak."""
    db = _normalized(cut)
    peak = int(np.argmax(db))
    lo = peak
    while lo > 0 and db[lo - 1] < db[lo]:
        lo -= 1
    hi = peak
    while hi < len(db) - 1 and db[hi + 1] < db[hi]:
        hi += 1
    return lo, hi


def measure_sll(cut: PatternCut, grating_period: float | None = None) -> float:
    """Highest sidelobe (dB, relative to peak) outside the main lobe.

    ``grating_period`` is the grating-lobe spacing in sine space
    (wavelength / pitch).  When given, the search is restricted to one period
    either side of the main lobe and grating-lobe neighbourhoods as wide as the
    null-to-null main lobe are excluded.
    """
    db = _normalized(cut)
    if int(np.argmax(db)) in (0, len(db) - 1):
        raise MeasurementError("cut peak lies on the span boundary")
    lo, hi = main_lobe_bounds(cut)
    interior = np.arange(1, len(db) - 1)
    is_max = (db[interior] > db[interior - 1]) & (db[interior] >= db[interior + 1])
    cand = interior[is_max]
    cand = cand[(cand < lo) | (cand > hi)]
    if grating_period is not None and cand.size:
        s = np.sin(np.radians(cut.angles))
        s0 = s[int(np.argmax(db))]
        half_nn = 0.5 * (s[hi] - s[lo])
        ds = s[cand] - s0
        keep = np.abs(ds) <= grating_period
        n_max = int(np.ceil(np.abs(ds).max() / grating_period)) + 1 if ds.size else 0
        for n in range(1, n_max + 1):
            keep &= np.abs(np.abs(ds) - n * grating_period) >= half_nn
        cand = cand[keep]
    if cand.size == 0:
        raise MeasurementError("no sidelobe inside the SLL window")
    return float(db[cand].max())


def grating_period(geometry: ArrayGeometry, cut_kind: str) -> float:
    dy, dx = geometry.subarray_pitch
    return geometry.wavelength / (dx if cut_kind == AZIMUTH else dy)


@functools.lru_cache(maxsize=8)
def _coupling_table(geometry: ArrayGeometry, shape: tuple[int, int]) -> np.ndarray:
    """Hemisphere integral of ``|element|^2 exp(j k r.s)`` for every lattice lag.

    Laid out in FFT order to match a circular autocorrelation of size ``shape``.
    Uses the closed form of the Sonine integral for a ``cos(theta)**q`` element.
    """
    ly = np.fft.fftfreq(shape[0], 1.0 / shape[0])
    lx = np.fft.fftfreq(shape[1], 1.0 / shape[1])
    rho = geometry.element_pitch * np.hypot(ly[:, None], lx[None, :])
    mu = geometry.element_exponent - 0.5
    a = geometry.wavenumber * rho
    table = np.empty_like(a)
    zero = a == 0
    table[zero] = math.pi / (mu + 1.0)
    az = a[~zero]
    table[~zero] = 2.0 * math.pi * 2.0**mu * gamma(mu + 1.0) * jv(mu + 1.0, az) / az ** (mu + 1.0)
    table.setflags(write=False)
    return table


@functools.lru_cache(maxsize=8)
def _spectral_kernel(geometry: ArrayGeometry) -> np.ndarray:
    """Coupling table moved to the spectrum of the RF-chain grid.

    With element weights ``kron(W, ones)`` the radiated-power integral
    ``sum_lag autocorr * table`` equals ``sum |fft(W)|**2 * kernel`` where the
    kernel folds the subarray spectrum and the table spectrum onto the
    ``2P x 2Q`` grid.
    """
    p, q = geometry.subarray_grid
    ny, nx = geometry.element_grid_per_subarray
    shape = (2 * p * ny, 2 * q * nx)
    table_fft = np.fft.fft2(_coupling_table(geometry, shape)).real

    def sub_spectrum(n, length):
        k = np.arange(length)
        return np.abs(np.exp(-2j * np.pi * np.outer(k, np.arange(n)) / length).sum(axis=1)) ** 2

    full = sub_spectrum(ny, shape[0])[:, None] * sub_spectrum(nx, shape[1])[None, :] * table_fft
    kernel = full.reshape(ny, 2 * p, nx, 2 * q).sum(axis=(0, 2)) / (shape[0] * shape[1])
    kernel.setflags(write=False)
    return kernel


def _radiated_integral_lattice(geometry: ArrayGeometry, weights: WeightMatrix) -> float:
    p, q = geometry.subarray_grid
    w_fft = np.fft.fft2(weights.complex, s=(2 * p, 2 * q))
    return float(np.sum((w_fft.real**2 + w_fft.imag**2) * _spectral_kernel(geometry)))


def _radiated_integral_quadrature(geometry: ArrayGeometry, weights: WeightMatrix,
                                  grid: tuple[int, int], chunk: int = 65536) -> float:
    n_theta, n_phi = grid
    theta = np.linspace(0.0, 0.5 * np.pi, n_theta)
    phi = np.arange(n_phi) * (2.0 * np.pi / n_phi)
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    u, v = direction_to_uv(tt.ravel(), pp.ravel())
    power = np.empty(u.size)
    for start in range(0, u.size, chunk):
        sl = slice(start, start + chunk)
        power[sl] = np.abs(pattern_uv(geometry, weights, u[sl], v[sl])) ** 2
    power = power.reshape(tt.shape)
    over_phi = power.sum(axis=1) * (2.0 * np.pi / n_phi)
    return float(np.trapezoid(over_phi * np.sin(theta), theta))


def directivity(geometry: ArrayGeometry, weights: WeightMatrix, steer=(0.0, 0.0),
                method: str = "lattice", grid: tuple[int, int] = (512, 2048)) -> float:
    """Directivity in dBi toward pointing ``steer = (el, az)`` degrees.

    ``method="lattice"`` evaluates the radiated-power integral exactly from
    the aperture autocorrelation; ``method="quadrature"`` integrates the
    sampled pattern with the trapezoidal rule on an ``n_theta x n_phi`` grid.
    """
    _check_shape(geometry, weights)
    if weights.n_active == 0:
        raise DomainError("directivity of an all-inactive matrix is undefined")
    u, v = pointing_to_uv(*steer)
    peak = np.abs(pattern_uv(geometry, weights, u, v)) ** 2
    if method == "lattice":
        total = _radiated_integral_lattice(geometry, weights)
    elif method == "quadrature":
        total = _radiated_integral_quadrature(geometry, weights, grid)
    else:
        raise DomainError(f"unknown directivity method {method!r}")
    return float(10.0 * np.log10(4.0 * np.pi * peak / total))


def compute_eirp(geometry: ArrayGeometry, weights: WeightMatrix, steer=(0.0, 0.0), **kwargs) -> float:
    """EIRP in dBW toward ``steer = (el, az)``: radiated power plus directivity."""
    if weights.n_active == 0:
        raise DomainError("EIRP of an all-inactive matrix is undefined")
    return 10.0 * math.log10(weights.radiated_power()) + directivity(geometry, weights, steer, **kwargs)


@dataclass(frozen=True)
class PatternMetrics:
    beamwidth_az: float
    beamwidth_el: float
    sll_az: float
    sll_el: float
    eirp: float
    peak_direction: tuple[float, float]

    def to_dict(self) -> dict:
        return {
            "beamwidth_az_deg": self.beamwidth_az,
            "beamwidth_el_deg": self.beamwidth_el,
            "sll_az_db": self.sll_az,
            "sll_el_db": self.sll_el,
            "eirp_dbw": self.eirp,
            "peak_el_deg": self.peak_direction[0],
            "peak_az_deg": self.peak_direction[1],
        }


def measure_cuts(geometry: ArrayGeometry, az_cut: PatternCut, el_cut: PatternCut, eirp: float) -> PatternMetrics:
    return PatternMetrics(
        beamwidth_az=measure_beamwidth(az_cut),
        beamwidth_el=measure_beamwidth(el_cut),
        sll_az=measure_sll(az_cut, grating_period(geometry, AZIMUTH)),
        sll_el=measure_sll(el_cut, grating_period(geometry, ELEVATION)),
        eirp=eirp,
        peak_direction=(el_cut.peak_angle, az_cut.peak_angle),
    )


def measure_pattern(geometry: ArrayGeometry, weights: WeightMatrix, pointing=(0.0, 0.0),
                    half_span: float = DEFAULT_HALF_SPAN, step: float = DEFAULT_STEP) -> PatternMetrics:
    """Beamwidths, SLLs and EIRP of ``weights`` on cuts through ``pointing = (el, az)``."""
    az_cut = compute_cut(geometry, weights, AZIMUTH, pointing, half_span, step)
    el_cut = compute_cut(geometry, weights, ELEVATION, pointing, half_span, step)
    return measure_cuts(geometry, az_cut, el_cut, compute_eirp(geometry, weights, pointing))


def locate_peak(geometry: ArrayGeometry, weights: WeightMatrix, center=(0.0, 0.0),
                half_span: float = DEFAULT_HALF_SPAN, coarse_step: float = 0.05,
                fine_step: float = DEFAULT_STEP) -> tuple[float, float]:
    """Pattern maximum ``(el, az)`` in degrees by a coarse then fine 2-D grid search."""
    el_c, az_c = center
    for span, step in ((half_span, coarse_step), (4 * coarse_step, fine_step)):
        n = int(round(span / step))
        offsets = step * np.arange(-n, n + 1)
        els, azs = el_c + offsets, az_c + offsets
        power = np.abs(pattern_grid(geometry, weights, np.sin(np.radians(azs)), np.sin(np.radians(els)))) ** 2
        i, j = np.unravel_index(np.argmax(power), power.shape)
        el_c, az_c = float(els[i]), float(azs[j])
    return el_c, az_c
