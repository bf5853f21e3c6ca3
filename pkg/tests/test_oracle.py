import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from beamselect import (BeamRequirement, CostWeights, DomainError, OptimizationFailure, PatternMetrics,
                        SynthesisParams, evaluate_cost, measure_pattern, optimize_matrix, synthesize)
from beamselect.geometry import steer_from_pointing
from beamselect.io import save_weights

REQ = BeamRequirement(1.0, 1.0, -25.0, -25.0, 60.0)


def metrics(bw_az=1.0, bw_el=1.0, sll_az=-25.0, sll_el=-25.0, eirp=60.0):
    return PatternMetrics(bw_az, bw_el, sll_az, sll_el, eirp, (0.0, 0.0))


def reference_cost(req, m, k, signed=False):
    """Weighted relative errors written out term by term."""
    k1, k2, k3 = k
    z1 = k1 * (abs(m.beamwidth_az - req.bw_az_deg) / req.bw_az_deg + abs(m.beamwidth_el - req.bw_el_deg) / req.bw_el_deg)
    z2 = k2 * (abs(m.sll_az - req.sll_az_db) / abs(req.sll_az_db) + abs(m.sll_el - req.sll_el_db) / abs(req.sll_el_db))
    z3 = k3 * ((m.eirp - req.eirp_dbw) / req.eirp_dbw if signed else abs(m.eirp - req.eirp_dbw) / abs(req.eirp_dbw))
    return z1 + z2 + z3


def test_matched_metrics_cost_nothing():
    assert evaluate_cost(REQ, metrics()).total == 0.0


def test_beamwidth_error_arithmetic():
    c = evaluate_cost(REQ, metrics(bw_az=1.1, bw_el=1.1), CostWeights(1, 0, 0))
    assert abs(c.z1 - 0.2) < 1e-12 and abs(c.total - 0.2) < 1e-12


@settings(max_examples=200)
@given(st.lists(st.floats(0.45, 1.5), min_size=4, max_size=4), st.lists(st.floats(-40, -5), min_size=4, max_size=4),
       st.lists(st.floats(40, 80), min_size=2, max_size=2), st.lists(st.floats(0, 5), min_size=3, max_size=3),
       st.booleans())
def test_cost_matches_reference_implementation(bws, slls, eirps, k, signed):
    if not any(x > 0 for x in k):
        k = [1.0, 0.0, 0.0]
    req = BeamRequirement(bws[0], bws[1], slls[0], slls[1], eirps[0])
    m = metrics(bws[2], bws[3], slls[2], slls[3], eirps[1])
    c = evaluate_cost(req, m, CostWeights(*k), "signed" if signed else "absolute")
    assert abs(c.total - reference_cost(req, m, k, signed)) < 1e-12
    assert abs(c.total - (c.z1 + c.z2 + c.z3)) < 1e-12
    if not signed:
        assert c.total >= 0


@settings(max_examples=50)
@given(st.floats(0.01, 10), st.integers(0, 2))
def test_cost_linear_in_each_weight(scale, which):
    m = metrics(1.2, 0.9, -22.0, -27.0, 57.0)
    k = [0.0, 0.0, 0.0]
    k[which] = 1.0
    base = evaluate_cost(REQ, m, CostWeights(*k)).total
    k[which] = scale
    assert abs(evaluate_cost(REQ, m, CostWeights(*k)).total - scale * base) < 1e-12 * max(1, scale * base)


def test_signed_mode_keeps_sign():
    c = evaluate_cost(REQ, metrics(eirp=54.0), CostWeights(0, 0, 1), "signed")
    assert abs(c.z3 + 0.1) < 1e-12


def test_zero_target_is_domain_error():
    with pytest.raises(DomainError):
        evaluate_cost(BeamRequirement(1.0, 1.0, 0.0, -25.0, 60.0), metrics())


@pytest.mark.parametrize("k", [(0, 0, 0), (-1, 1, 1)])
def test_cost_weights_validation(k):
    with pytest.raises(DomainError):
        CostWeights(*k)


def test_requirement_round_trips():
    r = BeamRequirement(0.7, 1.2, -21, -29, 55, -3.0, 4.0)
    assert BeamRequirement.from_array(r.to_array()) == r
    assert BeamRequirement.from_dict(r.to_dict()) == r
    with pytest.raises(DomainError):
        BeamRequirement(np.nan, 1, -20, -20, 50)


# optimizer

def measured_requirement(geometry, params, pointing):
    m = measure_pattern(geometry, synthesize(geometry, params), pointing)
    return BeamRequirement(m.beamwidth_az, m.beamwidth_el, m.sll_az, m.sll_el, m.eirp, *pointing)


@pytest.mark.parametrize("params,pointing", [
    (dict(active_rows=24, active_cols=18, taper_sll_az=-25.0, taper_sll_el=-20.0, power_scale=3e-3), (2.0, -3.0)),
    (dict(active_rows=30, active_cols=30, taper_sll_az=-22.0, taper_sll_el=-28.0, power_scale=1e-2), (0.0, 0.0)),
])
def test_optimizer_recovers_synthesized_requirement(geometry, params, pointing):
    p = SynthesisParams(steer=steer_from_pointing(*pointing), **params)
    req = measured_requirement(geometry, p, pointing)
    result = optimize_matrix(geometry, req, budget=200)
    assert result.cost.total <= 0.05


def test_returned_cost_is_recomputed_from_scratch(geometry):
    req = BeamRequirement(0.9, 1.3, -24.0, -21.0, 63.0, 1.5, -2.5)
    result = optimize_matrix(geometry, req, budget=60)
    again = evaluate_cost(req, measure_pattern(geometry, result.matrix, req.pointing))
    assert abs(again.total - result.cost.total) <= 1e-9


def test_larger_budget_never_worse(geometry):
    req = BeamRequirement(0.8, 1.1, -27.0, -23.0, 58.0, -1.0, 4.0)
    small = optimize_matrix(geometry, req, budget=50).cost.total
    large = optimize_matrix(geometry, req, budget=500).cost.total
    assert large <= small


def test_wide_beam_uses_smaller_aperture(geometry):
    wide = optimize_matrix(geometry, BeamRequirement(1.5, 1.0, -25.0, -25.0, 60.0), budget=100)
    narrow = optimize_matrix(geometry, BeamRequirement(0.5, 1.0, -25.0, -25.0, 60.0), budget=100)
    assert wide.params.active_cols < narrow.params.active_cols


def test_optimizer_is_deterministic(geometry, tmp_path):
    req = BeamRequirement(1.2, 0.7, -22.0, -26.0, 52.0, 5.0, 1.0)
    a = optimize_matrix(geometry, req, budget=60, seed=7)
    b = optimize_matrix(geometry, req, budget=60, seed=7)
    save_weights(tmp_path / "a.json", a.matrix)
    save_weights(tmp_path / "b.json", b.matrix)
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    matrix, cost, elapsed = a
    assert cost == a.cost and elapsed > 0


def test_budget_floor(geometry):
    with pytest.raises(DomainError):
        optimize_matrix(geometry, REQ, budget=49)


def test_unmeasurable_requirement_fails(geometry):
    # a 0.1 degree span can never contain both -3 dB crossings of this array
    with pytest.raises(OptimizationFailure):
        optimize_matrix(geometry, REQ, budget=50, half_span=0.1, step=0.01)
