"""Reference weight-matrix search driven by the weighted beam cost.

The cost compares measured beamwidths, sidelobe levels and EIRP with the
requested values as relative errors.  :func:`optimize_matrix` searches a
small design space (aperture size and taper level per axis) with a coarse
grid followed by coordinate descent; the drive power is solved for in closed
form at every candidate.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError, MeasurementError, OptimizationFailure
from .geometry import ArrayGeometry, WeightMatrix, steer_from_pointing
from .pattern import (AZIMUTH, DEFAULT_HALF_SPAN, DEFAULT_STEP, ELEVATION, PatternMetrics,
                      compute_cut, directivity, measure_cuts, measure_pattern)
from .synthesis import TAPER_SLL_BOUNDS, SynthesisParams, synthesize

FEATURE_NAMES = ("bw_az_deg", "bw_el_deg", "sll_az_db", "sll_el_db",
                 "eirp_dbw", "point_el_deg", "point_az_deg")
EIRP_MODES = ("absolute", "signed")
POWER_SCALE_BOUNDS = (1e-6, 1e6)


@dataclass(frozen=True)
class BeamRequirement:
    """Requested beam shape, drive level and pointing for one beam."""

    bw_az_deg: float
    bw_el_deg: float
    sll_az_db: float
    sll_el_db: float
    eirp_dbw: float
    point_el_deg: float = 0.0
    point_az_deg: float = 0.0

    def __post_init__(self):
        for name in FEATURE_NAMES:
            val = getattr(self, name)
            if not math.isfinite(val):
                raise DomainError(f"{name} must be finite, got {val!r}")
            object.__setattr__(self, name, float(val))

    @property
    def pointing(self) -> tuple[float, float]:
        return self.point_el_deg, self.point_az_deg

    @property
    def steer(self) -> tuple[float, float]:
        return steer_from_pointing(self.point_el_deg, self.point_az_deg)

    def to_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in FEATURE_NAMES])

    @classmethod
    def from_array(cls, values) -> "BeamRequirement":
        values = np.asarray(values, dtype=float).ravel()
        if values.size != len(FEATURE_NAMES):
            raise DomainError(f"expected {len(FEATURE_NAMES)} features, got {values.size}")
        return cls(*values.tolist())

    def to_dict(self) -> dict:
        return {n: getattr(self, n) for n in FEATURE_NAMES}

    @classmethod
    def from_dict(cls, d: dict) -> "BeamRequirement":
        missing = [n for n in FEATURE_NAMES if n not in d]
        if missing:
            raise DomainError(f"requirement is missing fields {missing}")
        return cls(**{n: d[n] for n in FEATURE_NAMES})


@dataclass(frozen=True)
class CostWeights:
    k1: float = 1.0
    k2: float = 1.0
    k3: float = 1.0

    def __post_init__(self):
        ks = (self.k1, self.k2, self.k3)
        if any(k < 0 for k in ks) or not any(k > 0 for k in ks):
            raise DomainError("cost weights must be >= 0 and not all zero")


@dataclass(frozen=True)
class CostBreakdown:
    z1: float
    z2: float
    z3: float

    @property
    def total(self) -> float:
        return self.z1 + self.z2 + self.z3

    def to_dict(self) -> dict:
        return {"z1": self.z1, "z2": self.z2, "z3": self.z3, "total": self.total}


INFEASIBLE = CostBreakdown(math.inf, math.inf, math.inf)


def _ratio(num, den, what):
    if den == 0:
        raise DomainError(f"{what} target is zero")
    return num / den


def evaluate_cost(requirement: BeamRequirement, metrics: PatternMetrics,
                  weights: CostWeights = CostWeights(), eirp_mode: str = "absolute") -> CostBreakdown:
    """Weighted relative errors of beamwidth, SLL and EIRP.

    SLL and EIRP ratios are formed on dB values with ``|target|`` in the
    denominator.  ``eirp_mode="signed"`` keeps the sign of the EIRP error.
    """
    r, m = requirement, metrics
    z1 = weights.k1 * (_ratio(abs(m.beamwidth_az - r.bw_az_deg), r.bw_az_deg, "bw_az")
                       + _ratio(abs(m.beamwidth_el - r.bw_el_deg), r.bw_el_deg, "bw_el"))
    z2 = weights.k2 * (_ratio(abs(m.sll_az - r.sll_az_db), abs(r.sll_az_db), "sll_az")
                       + _ratio(abs(m.sll_el - r.sll_el_db), abs(r.sll_el_db), "sll_el"))
    if eirp_mode == "absolute":
        z3 = weights.k3 * _ratio(abs(m.eirp - r.eirp_dbw), abs(r.eirp_dbw), "eirp")
    elif eirp_mode == "signed":
        z3 = weights.k3 * _ratio(m.eirp - r.eirp_dbw, r.eirp_dbw, "eirp")
    else:
        raise DomainError(f"eirp_mode must be one of {EIRP_MODES}")
    return CostBreakdown(z1, z2, z3)


@dataclass
class OracleResult:
    matrix: WeightMatrix
    cost: CostBreakdown
    elapsed: float
    params: SynthesisParams
    metrics: PatternMetrics
    evaluations: int

    def __iter__(self):
        # unpacks as (matrix, cost, elapsed)
        return iter((self.matrix, self.cost, self.elapsed))


# (rows, cols, taper_sll_az, taper_sll_el)
_INITIAL_STEPS = (2, 2, 2.0, 2.0)
_MIN_STEPS = (1, 1, 0.25, 0.25)
_GRID_TAPERS = (-20.0, -25.0, -30.0)


def _grid_apertures(n: int) -> list[int]:
    return sorted({max(2, int(round(x))) for x in np.linspace(n / 6.0, n, 6)})


class _Search:
    """Memoized candidate evaluation with an evaluation budget."""

    def __init__(self, geometry, requirement, cost_weights, eirp_mode, budget, half_span, step):
        self.geometry = geometry
        self.req = requirement
        self.cost_weights = cost_weights
        self.eirp_mode = eirp_mode
        self.budget = budget
        self.half_span = half_span
        self.step = step
        self.cache: dict[tuple, tuple] = {}
        self.best_key = None
        self.best = (math.inf, None)

    @property
    def exhausted(self) -> bool:
        return len(self.cache) >= self.budget

    def _measure(self, key):
        rows, cols, sll_az, sll_el = key
        params = SynthesisParams(steer=self.req.steer, taper_sll_az=sll_az, taper_sll_el=sll_el,
                                 active_rows=rows, active_cols=cols)
        w = synthesize(self.geometry, params)
        az = compute_cut(self.geometry, w, AZIMUTH, self.req.pointing, self.half_span, self.step)
        el = compute_cut(self.geometry, w, ELEVATION, self.req.pointing, self.half_span, self.step)
        # EIRP at unit power scale; the scale is solved for below
        eirp_unit = 10.0 * math.log10(w.radiated_power()) + directivity(self.geometry, w, self.req.pointing)
        metrics = measure_cuts(self.geometry, az, el, eirp_unit)
        lo, hi = POWER_SCALE_BOUNDS
        best = None
        target = 10.0 ** ((self.req.eirp_dbw - eirp_unit) / 10.0)
        for scale in sorted({min(max(target, lo), hi), lo, hi}):
            m = PatternMetrics(metrics.beamwidth_az, metrics.beamwidth_el, metrics.sll_az,
                               metrics.sll_el, eirp_unit + 10.0 * math.log10(scale), metrics.peak_direction)
            cost = evaluate_cost(self.req, m, self.cost_weights, self.eirp_mode)
            if best is None or cost.total < best[0].total:
                best = (cost, params.replace(power_scale=scale))
        return best

    def evaluate(self, key) -> float:
        if key in self.cache:
            return self.cache[key][0].total
        if self.exhausted:
            return math.inf
        try:
            result = self._measure(key)
        except MeasurementError:
            result = (INFEASIBLE, None)
        self.cache[key] = result
        total = result[0].total
        if self.best_key is None or (total, key) < (self.best[0], self.best_key):
            self.best, self.best_key = (total, result[1]), key
        return total


def _clip_key(geometry, key):
    p, q = geometry.subarray_grid
    lo, hi = TAPER_SLL_BOUNDS
    rows, cols, a, e = key
    return (int(min(max(rows, 1), p)), int(min(max(cols, 1), q)),
            float(min(max(a, lo), hi)), float(min(max(e, lo), hi)))


def optimize_matrix(geometry: ArrayGeometry, requirement: BeamRequirement,
                    weights: CostWeights = CostWeights(), budget: int = 200, seed: int = 0,
                    eirp_mode: str = "absolute", half_span: float = DEFAULT_HALF_SPAN,
                    step: float = DEFAULT_STEP) -> OracleResult:
    """Search synthesis parameters minimizing the beam cost for ``requirement``.

    Stage 1 scans a coarse grid of square apertures and equal taper levels;
    stage 2 runs coordinate descent over ``(rows, cols, taper_az, taper_el)``
    with steps halved after every sweep without improvement.  ``budget``
    bounds the number of distinct candidates measured; ``seed`` fixes the
    coordinate visiting order.
    """
    if budget < 50:
        raise DomainError("budget must be >= 50")
    if eirp_mode not in EIRP_MODES:
        raise DomainError(f"eirp_mode must be one of {EIRP_MODES}")
    start = time.perf_counter()
    search = _Search(geometry, requirement, weights, eirp_mode, budget, half_span, step)
    p, q = geometry.subarray_grid

    for n, t in itertools.product(_grid_apertures(min(p, q)), _GRID_TAPERS):
        search.evaluate(_clip_key(geometry, (n, n, t, t)))

    rng = np.random.default_rng(seed)
    steps = list(_INITIAL_STEPS)
    while not search.exhausted and math.isfinite(search.best[0]):
        improved = False
        for axis in rng.permutation(4):
            current = search.best_key
            current_cost = search.best[0]
            for sign in (1, -1):
                moved = False
                while not search.exhausted:
                    trial = list(current)
                    trial[axis] += sign * steps[axis]
                    trial = _clip_key(geometry, trial)
                    if trial == current:
                        break
                    cost = search.evaluate(trial)
                    if cost < current_cost:
                        current, current_cost, moved = trial, cost, True
                    else:
                        break
                if moved:
                    improved = True
                    break
        if not improved:
            if all(s <= m for s, m in zip(steps, _MIN_STEPS)):
                break
            steps = [max(m, s / 2) if isinstance(m, float) else max(m, s // 2)
                     for s, m in zip(steps, _MIN_STEPS)]

    best_params = search.best[1]
    if best_params is None or not math.isfinite(search.best[0]):
        raise OptimizationFailure("no candidate produced a measurable pattern", best=best_params)
    matrix = synthesize(geometry, best_params)
    metrics = measure_pattern(geometry, matrix, requirement.pointing, half_span, step)
    cost = evaluate_cost(requirement, metrics, weights, eirp_mode)
    return OracleResult(matrix, cost, time.perf_counter() - start, best_params, metrics, len(search.cache))
