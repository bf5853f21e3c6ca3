"""Construction of weight matrices from a handful of design knobs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DomainError, NullPlacementError
from .geometry import ArrayGeometry, WeightMatrix, direction_to_uv, wrap_phase

# First sidelobe of a long uniform array; design levels at or above it give a uniform taper.
UNIFORM_SLL_DB = -13.26
TAPER_SLL_BOUNDS = (-60.0, -13.0)


def _chebyshev_poly(order: int, x):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    inside = np.abs(x) <= 1.0
    out[inside] = np.cos(order * np.arccos(x[inside]))
    xo = x[~inside]
    out[~inside] = np.sign(xo) ** order * np.cosh(order * np.arccosh(np.abs(xo)))
    return out


def chebyshev_taper(length: int, design_sll: float) -> np.ndarray:
    """Dolph-Chebyshev amplitude taper for a uniform linear array.

    Parameters
    ----------
    length : int
        Number of elements, at least 2.
    design_sll : float
        Sidelobe level in dB (negative).  Levels at or above
        ``UNIFORM_SLL_DB`` return a uniform taper.

    Returns
    -------
    ndarray
        Symmetric coefficients normalized to a maximum of 1.
    """
    if length < 2:
        raise DomainError(f"taper length must be >= 2, got {length}")
    if not design_sll < 0:
        raise DomainError(f"design_sll must be negative, got {design_sll}")
    if length == 2 or design_sll >= UNIFORM_SLL_DB:
        return np.ones(length)

    order = length - 1
    ratio = 10.0 ** (-design_sll / 20.0)
    x0 = math.cosh(math.acosh(ratio) / order)

    # The array factor of symmetric weights a_i at centred positions p_i is
    # sum_i a_i cos(psi p_i); match it to T_order(x0 cos(psi/2)) on a grid
    # where the cosine basis is orthogonal.
    half = (length + 1) // 2
    positions = np.abs(np.arange(length) - order / 2.0)[:half][::-1]
    psi = np.pi * (np.arange(half) + 0.5) / half
    basis = np.cos(np.outer(psi, positions))
    basis[:, positions > 0] *= 2.0
    target = _chebyshev_poly(order, x0 * np.cos(psi / 2.0))
    coeff = np.linalg.solve(basis, target)

    # coeff runs centre -> edge; mirror into a full symmetric taper
    edge_to_centre = coeff[::-1]
    if length % 2:
        taper = np.concatenate([edge_to_centre, edge_to_centre[-2::-1]])
    else:
        taper = np.concatenate([edge_to_centre, edge_to_centre[::-1]])
    return taper / taper.max()


def aperture_window(shape: tuple[int, int], rows: int, cols: int) -> tuple[slice, slice]:
    """Slices of the centred ``rows x cols`` window inside a ``shape`` grid."""
    p, q = shape
    if not (1 <= rows <= p and 1 <= cols <= q):
        raise DomainError(f"aperture {rows}x{cols} does not fit a {p}x{q} grid")
    r0 = (p - rows) // 2
    c0 = (q - cols) // 2
    return slice(r0, r0 + rows), slice(c0, c0 + cols)


def steering_phases(geometry: ArrayGeometry, steer, aperture=None) -> np.ndarray:
    """Progressive phase shifts pointing the outer array factor at ``steer``.

    ``steer = (theta0, phi0)`` in radians.  Phases are
    ``-k (x sin(theta0) cos(phi0) + y sin(theta0) sin(phi0))`` over centred
    element positions; entries outside the ``(rows, cols)`` aperture are 0.
    """
    theta0, phi0 = steer
    u0, v0 = direction_to_uv(theta0, phi0)
    y, x = geometry.subarray_positions()
    phase = -geometry.wavenumber * (x[None, :] * u0 + y[:, None] * v0)
    if aperture is not None:
        rs, cs = aperture_window(geometry.subarray_grid, *aperture)
        out = np.zeros_like(phase)
        out[rs, cs] = phase[rs, cs]
        phase = out
    return wrap_phase(phase)


def _null_vector(geometry: ArrayGeometry, mask, null_dir):
    u, v = direction_to_uv(*null_dir)
    y, x = geometry.subarray_positions()
    s = np.exp(-1j * geometry.wavenumber * (x[None, :] * u + y[:, None] * v))
    return np.where(mask, s, 0.0)


def inject_nulls(geometry: ArrayGeometry, weights: WeightMatrix, null_dirs) -> WeightMatrix:
    """Project the weights onto the complement of the null-direction steering vectors.

    Each null direction ``(theta, phi)`` contributes the unit-amplitude
    steering vector toward it (restricted to the active mask).  A null whose
    outer array factor is within 3 dB of the coherent peak is rejected.
    """
    null_dirs = [tuple(d) for d in null_dirs]
    if not null_dirs:
        return weights.copy()
    w = weights.complex
    coherent_peak = np.abs(w).sum()
    vectors = []
    for d in null_dirs:
        s = _null_vector(geometry, weights.active_mask, d)
        if abs(np.vdot(s, w)) >= coherent_peak / math.sqrt(2.0):
            raise NullPlacementError(f"null direction {d} lies inside the main lobe")
        vectors.append(s.ravel())
    S = np.stack(vectors, axis=1)
    coeff, *_ = np.linalg.lstsq(S, w.ravel(), rcond=None)
    projected = (w.ravel() - S @ coeff).reshape(w.shape)
    return WeightMatrix.from_complex(projected, weights.active_mask, weights.per_element_power)


def inject_null(geometry: ArrayGeometry, weights: WeightMatrix, null_dir) -> WeightMatrix:
    """Place an exact null of the array factor at ``null_dir = (theta, phi)``."""
    return inject_nulls(geometry, weights, [null_dir])


@dataclass(frozen=True)
class SynthesisParams:
    steer: tuple[float, float] = (0.0, 0.0)
    taper_sll_az: float = -25.0
    taper_sll_el: float = -25.0
    active_rows: int = 36
    active_cols: int = 36
    power_scale: float = 1.0
    nulls: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "steer", tuple(float(a) for a in self.steer))
        object.__setattr__(self, "nulls", tuple(tuple(float(a) for a in n) for n in self.nulls))
        object.__setattr__(self, "active_rows", int(self.active_rows))
        object.__setattr__(self, "active_cols", int(self.active_cols))
        lo, hi = TAPER_SLL_BOUNDS
        for name in ("taper_sll_az", "taper_sll_el"):
            val = getattr(self, name)
            if not lo <= val <= hi:
                raise DomainError(f"{name}={val} outside [{lo}, {hi}] dB")
        if not self.power_scale > 0:
            raise DomainError("power_scale must be positive")

    def replace(self, **changes) -> "SynthesisParams":
        d = self.to_dict()
        d.update(changes)
        return SynthesisParams(**d)

    def to_dict(self) -> dict:
        return {
            "steer": list(self.steer),
            "taper_sll_az": self.taper_sll_az,
            "taper_sll_el": self.taper_sll_el,
            "active_rows": self.active_rows,
            "active_cols": self.active_cols,
            "power_scale": self.power_scale,
            "nulls": [list(n) for n in self.nulls],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SynthesisParams":
        return cls(**d)


def _taper(length: int, sll: float) -> np.ndarray:
    return np.ones(1) if length == 1 else chebyshev_taper(length, sll)


def synthesize(geometry: ArrayGeometry, params: SynthesisParams, base_power: float = 1.0) -> WeightMatrix:
    """Build a weight matrix: separable Chebyshev taper, steering, mask, nulls, power."""
    rs, cs = aperture_window(geometry.subarray_grid, params.active_rows, params.active_cols)
    amp = np.zeros(geometry.subarray_grid)
    amp[rs, cs] = np.outer(_taper(params.active_rows, params.taper_sll_el),
                           _taper(params.active_cols, params.taper_sll_az))
    mask = np.zeros(geometry.subarray_grid, dtype=bool)
    mask[rs, cs] = True
    phases = steering_phases(geometry, params.steer, (params.active_rows, params.active_cols))
    weights = WeightMatrix(amp, phases, mask, base_power * params.power_scale)
    if params.nulls:
        weights = inject_nulls(geometry, weights, params.nulls)
    return weights


def resteer(geometry: ArrayGeometry, weights: WeightMatrix, steer) -> WeightMatrix:
    """Replace the phases with pure steering phases toward ``steer = (theta0, phi0)``.

    Amplitudes, mask and drive power are kept.
    """
    phases = np.where(weights.active_mask, steering_phases(geometry, steer), 0.0)
    return weights.copy(phases=phases)
