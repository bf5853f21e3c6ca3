"""Array geometry, weight matrices, and angle conventions.

Angle conventions used throughout the package:

* ``(theta, phi)`` are spherical angles in radians measured from the array
  broadside (+z), with the array lying in the x-y plane.
* ``(el, az)`` pointing angles are in degrees and map onto direction cosines
  as ``u = sin(az)`` and ``v = sin(el)``.  An azimuth cut varies ``u`` at a
  fixed ``v``; an elevation cut varies ``v`` at a fixed ``u``.
* Weight matrices are indexed ``[row, col]``; columns run along x (azimuth),
  rows along y (elevation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .exceptions import DomainError

SPEED_OF_LIGHT = 299_792_458.0


def asinc(value: float = 1.0 / math.sqrt(2.0)) -> float:
    """Positive root ``x`` in ``(0, pi)`` of ``sin(x)/x = value`` (radian sinc)."""
    if not 0.0 < value < 1.0:
        raise DomainError(f"asinc is defined on (0, 1), got {value!r}")
    return brentq(lambda x: math.sin(x) / x - value, 1e-12, math.pi, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def dimension_array(beamwidth: float, element_pitch: float, wavelength: float, efficiency: float) -> int:
    """Number of elements per side needed for a -3 dB ``beamwidth`` (radians).

    ``N = ceil(asinc(1/sqrt(2)) * wavelength / (efficiency * beamwidth * 2 * element_pitch))``
    """
    for name, val in (("beamwidth", beamwidth), ("element_pitch", element_pitch),
                      ("wavelength", wavelength), ("efficiency", efficiency)):
        if not val > 0:
            raise DomainError(f"{name} must be positive, got {val!r}")
    if efficiency > 1:
        raise DomainError(f"efficiency must be <= 1, got {efficiency!r}")
    n_real = asinc() * wavelength / (efficiency * beamwidth * 2.0 * element_pitch)
    # guard against ceil() jumping on round-off when n_real is an exact integer
    return int(math.ceil(n_real - 1e-9))


@dataclass(frozen=True)
class ArrayGeometry:
    """Direct-radiating array built from a grid of identical uniform subarrays.

    Each subarray is driven by one RF chain and counts as one *element* of the
    controllable ``subarray_grid``.  ``element_pitch`` defaults to 7/8 of the
    free-space wavelength, which with 4x4 subarrays gives a 3.5 wavelength
    unit cell.
    """

    carrier_frequency: float = 19e9
    subarray_grid: tuple[int, int] = (36, 36)
    element_grid_per_subarray: tuple[int, int] = (4, 4)
    element_pitch: float | None = None
    efficiency: float = 0.9
    element_exponent: float = 1.0

    def __post_init__(self):
        if not self.carrier_frequency > 0:
            raise DomainError("carrier_frequency must be positive")
        object.__setattr__(self, "subarray_grid", tuple(int(n) for n in self.subarray_grid))
        object.__setattr__(self, "element_grid_per_subarray",
                           tuple(int(n) for n in self.element_grid_per_subarray))
        if min(self.subarray_grid) < 1 or min(self.element_grid_per_subarray) < 1:
            raise DomainError("grid dimensions must be >= 1")
        if self.element_pitch is None:
            object.__setattr__(self, "element_pitch", 0.875 * self.wavelength)
        if not self.element_pitch > 0:
            raise DomainError("element_pitch must be positive")
        if not 0 < self.efficiency <= 1:
            raise DomainError("efficiency must lie in (0, 1]")
        if self.element_exponent < 0:
            raise DomainError("element_exponent must be >= 0")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency

    @property
    def wavenumber(self) -> float:
        return 2.0 * math.pi / self.wavelength

    @property
    def shape(self) -> tuple[int, int]:
        return self.subarray_grid

    @property
    def subarray_pitch(self) -> tuple[float, float]:
        """Unit-cell spacing ``(dy, dx)`` between RF-chain centres, meters."""
        ny, nx = self.element_grid_per_subarray
        return ny * self.element_pitch, nx * self.element_pitch

    @property
    def aperture_area(self) -> float:
        dy, dx = self.subarray_pitch
        rows, cols = self.subarray_grid
        return rows * dy * cols * dx

    def subarray_positions(self) -> tuple[np.ndarray, np.ndarray]:
        """Centred ``(y_rows, x_cols)`` coordinates of the subarray centres."""
        rows, cols = self.subarray_grid
        dy, dx = self.subarray_pitch
        return (np.arange(rows) - (rows - 1) / 2.0) * dy, (np.arange(cols) - (cols - 1) / 2.0) * dx

    def element_offsets(self) -> tuple[np.ndarray, np.ndarray]:
        """Centred element offsets inside one subarray, ``(y, x)``."""
        ny, nx = self.element_grid_per_subarray
        d = self.element_pitch
        return (np.arange(ny) - (ny - 1) / 2.0) * d, (np.arange(nx) - (nx - 1) / 2.0) * d

    def to_dict(self) -> dict:
        return {
            "carrier_frequency_hz": self.carrier_frequency,
            "subarray_grid": list(self.subarray_grid),
            "element_grid_per_subarray": list(self.element_grid_per_subarray),
            "element_pitch_m": self.element_pitch,
            "efficiency": self.efficiency,
            "element_exponent": self.element_exponent,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ArrayGeometry":
        return cls(
            carrier_frequency=d.get("carrier_frequency_hz", 19e9),
            subarray_grid=tuple(d.get("subarray_grid", (36, 36))),
            element_grid_per_subarray=tuple(d.get("element_grid_per_subarray", (4, 4))),
            element_pitch=d.get("element_pitch_m"),
            efficiency=d.get("efficiency", 0.9),
            element_exponent=d.get("element_exponent", 1.0),
        )


def wrap_phase(phase):
    """Wrap radians into ``[-pi, pi)``."""
    wrapped = np.mod(np.asarray(phase, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    return wrapped


@dataclass(eq=False)
class WeightMatrix:
    """Complex excitation of the RF-chain grid.

    Amplitudes are a normalized taper (max active amplitude 1); the absolute
    drive level lives in ``per_element_power`` (watts at unit amplitude).
    """

    amplitudes: np.ndarray
    phases: np.ndarray
    active_mask: np.ndarray
    per_element_power: float = 1.0

    def __post_init__(self):
        amp = np.array(self.amplitudes, dtype=float)
        phase = np.array(self.phases, dtype=float)
        mask = np.array(self.active_mask, dtype=bool)
        if amp.ndim != 2 or amp.shape != phase.shape or amp.shape != mask.shape:
            raise DomainError("amplitudes, phases and active_mask must be 2-D arrays of equal shape")
        if not (np.all(np.isfinite(amp)) and np.all(np.isfinite(phase))):
            raise DomainError("weights must be finite")
        if np.any(amp < 0):
            raise DomainError("amplitudes must be nonnegative")
        if not self.per_element_power > 0:
            raise DomainError("per_element_power must be positive")
        amp[~mask] = 0.0
        if mask.any():
            peak = amp[mask].max()
            if abs(peak - 1.0) > 1e-9:
                raise DomainError(f"max active amplitude must be 1, got {peak!r}; use WeightMatrix.from_complex")
        self.amplitudes = amp
        self.phases = wrap_phase(phase)
        self.active_mask = mask
        self.per_element_power = float(self.per_element_power)

    @classmethod
    def from_complex(cls, weights, active_mask=None, per_element_power: float = 1.0) -> "WeightMatrix":
        """Normalize a complex grid so the largest active magnitude is 1.

        The normalization factor is folded into ``per_element_power`` so the
        radiated field is unchanged.
        """
        w = np.asarray(weights, dtype=complex)
        mask = np.abs(w) > 0 if active_mask is None else np.asarray(active_mask, dtype=bool)
        w = np.where(mask, w, 0.0)
        mag = np.abs(w)
        peak = mag[mask].max() if mask.any() else 0.0
        if peak == 0.0:
            raise DomainError("weight matrix has no nonzero active element")
        return cls(mag / peak, np.angle(w), mask, per_element_power * peak**2)

    @property
    def shape(self) -> tuple[int, int]:
        return self.amplitudes.shape

    @property
    def rows(self) -> int:
        return self.amplitudes.shape[0]

    @property
    def cols(self) -> int:
        return self.amplitudes.shape[1]

    @property
    def complex(self) -> np.ndarray:
        return np.where(self.active_mask, self.amplitudes * np.exp(1j * self.phases), 0.0)

    @property
    def n_active(self) -> int:
        return int(self.active_mask.sum())

    def radiated_power(self) -> float:
        """Total RF power fed to the array, watts."""
        return self.per_element_power * float(np.sum(self.amplitudes**2))

    def copy(self, **changes) -> "WeightMatrix":
        kwargs = dict(amplitudes=self.amplitudes.copy(), phases=self.phases.copy(),
                      active_mask=self.active_mask.copy(), per_element_power=self.per_element_power)
        kwargs.update(changes)
        return WeightMatrix(**kwargs)

    def to_dict(self) -> dict:
        return {
            "rows": self.rows,
            "cols": self.cols,
            "amp": self.amplitudes.ravel().tolist(),
            "phase_rad": self.phases.ravel().tolist(),
            "mask": self.active_mask.ravel().astype(int).tolist(),
            "per_element_power_w": self.per_element_power,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WeightMatrix":
        rows, cols = int(d["rows"]), int(d["cols"])
        shape = (rows, cols)
        amp = np.asarray(d["amp"], dtype=float).reshape(shape)
        phase = np.asarray(d["phase_rad"], dtype=float).reshape(shape)
        mask = np.asarray(d["mask"], dtype=int).reshape(shape).astype(bool)
        return cls(amp, phase, mask, float(d["per_element_power_w"]))


def pointing_to_uv(el_deg, az_deg):
    """Direction cosines ``(u, v)`` of an ``(el, az)`` pointing in degrees."""
    return np.sin(np.radians(az_deg)), np.sin(np.radians(el_deg))


def uv_to_pointing(u, v):
    """Inverse of :func:`pointing_to_uv`, returns ``(el_deg, az_deg)``."""
    return np.degrees(np.arcsin(v)), np.degrees(np.arcsin(u))


def direction_to_uv(theta, phi):
    st = np.sin(theta)
    return st * np.cos(phi), st * np.sin(phi)


def uv_to_direction(u, v):
    """Spherical ``(theta, phi)`` in radians for visible-space ``(u, v)``."""
    s = np.hypot(u, v)
    if np.any(s > 1.0 + 1e-12):
        raise DomainError("direction cosines outside visible space")
    return np.arcsin(np.minimum(s, 1.0)), np.arctan2(v, u)


def steer_from_pointing(el_deg: float, az_deg: float) -> tuple[float, float]:
    """Spherical steer ``(theta0, phi0)`` for an ``(el, az)`` pointing."""
    u, v = pointing_to_uv(el_deg, az_deg)
    theta, phi = uv_to_direction(u, v)
    return float(theta), float(phi)
