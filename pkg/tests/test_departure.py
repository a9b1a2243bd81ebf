import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.ndimage import gaussian_filter

from lanesense.departure import (DepartureThresholds, FlowField, departure_angle,
                                 estimate_flow, warn)
from lanesense.errors import DimensionMismatch, InsufficientFlow
from lanesense.lanes import LaneCurve


def texture(shape=(160, 160), seed=0):
    rng = np.random.default_rng(seed)
    return gaussian_filter(rng.uniform(0, 1, shape), 1.5)


def shifted(plane, dr, dc):
    out = np.roll(plane, (dr, dc), axis=(0, 1))
    return out


def flow(vx, vy):
    vx = np.asarray(vx, float)
    vy = np.broadcast_to(np.asarray(vy, float), vx.shape).copy()
    n = vx.size
    return FlowField(np.zeros(n), np.zeros(n), vx, vy, np.ones(n))


def test_lateral_shift_recovered():
    prev = texture()
    f = estimate_flow(prev, shifted(prev, 0, 3), lower_half=False)
    assert len(f) > 20
    assert np.median(f.vy) == pytest.approx(3.0, abs=0.25)
    assert np.median(f.vx) == pytest.approx(0.0, abs=0.25)


def test_large_shift_uses_coarse_level():
    prev = texture(seed=1)
    f = estimate_flow(prev, shifted(prev, 9, -6), lower_half=False)
    assert np.median(f.vx) == pytest.approx(9.0, abs=0.25)
    assert np.median(f.vy) == pytest.approx(-6.0, abs=0.25)


def test_identical_frames():
    prev = texture(seed=2)
    f = estimate_flow(prev, prev.copy())
    assert len(f) > 0
    assert np.abs(f.vx).max() < 1e-6 and np.abs(f.vy).max() < 1e-6


def test_textureless_frames():
    plane = np.full((120, 120), 0.4)
    assert len(estimate_flow(plane, plane)) == 0


def test_samples_in_lower_half():
    prev = texture(seed=3)
    f = estimate_flow(prev, shifted(prev, 1, 1))
    assert np.all(f.rows >= prev.shape[0] // 2)
    assert np.all(f.confidence >= 0.05) and np.all(f.confidence <= 1)


def test_shape_mismatch():
    with pytest.raises(DimensionMismatch):
        estimate_flow(np.zeros((10, 10)), np.zeros((10, 11)))


def test_equivariance_under_common_shift():
    prev = texture(seed=4)
    curr = shifted(prev, 2, 3)
    a = estimate_flow(prev, curr, lower_half=False)
    b = estimate_flow(shifted(prev, 5, 7), shifted(curr, 5, 7), lower_half=False)
    assert np.median(b.vx) == pytest.approx(np.median(a.vx), abs=0.05)
    assert np.median(b.vy) == pytest.approx(np.median(a.vy), abs=0.05)


def test_angle_examples():
    assert departure_angle(flow(np.full(10, 2.0), 0.0)) == 0.0
    assert departure_angle(flow(np.full(10, 2.0), np.full(10, 2.0))) == pytest.approx(math.pi / 4)
    assert departure_angle(flow(np.zeros(10), np.full(10, 1.0))) == pytest.approx(math.pi / 2)
    assert departure_angle(flow(np.zeros(10), np.full(10, -1.0))) == pytest.approx(-math.pi / 2)


def test_too_few_samples():
    with pytest.raises(InsufficientFlow):
        departure_angle(flow(np.ones(4), np.ones(4)))


@settings(max_examples=50)
@given(st.lists(st.tuples(st.floats(0.1, 10), st.floats(-10, 10)), min_size=5, max_size=40))
def test_odd_symmetry(samples):
    vx, vy = np.array(samples).T
    f = flow(vx, vy)
    assert departure_angle(f.negate_lateral()) == pytest.approx(-departure_angle(f), abs=1e-15)


def straight():
    return (LaneCurve(1.75, 0, 0, 0), LaneCurve(-1.75, 0, 0, 0))


def bent(b=0.02):
    return (LaneCurve(1.75, 0, b, 0), LaneCurve(-1.75, 0, b, 0))


def test_warn_examples():
    assert not warn(0.0, straight()).warning
    est = warn(math.radians(10), straight(), DepartureThresholds(lambda_deg=5))
    assert est.warning and not est.gated_by_curvature
    est = warn(math.radians(10), bent())
    assert est.gated_by_curvature and not est.warning


def test_warn_without_lanes_uses_wider_threshold():
    assert not warn(math.radians(7), None).warning
    assert warn(math.radians(12), None).warning


@settings(max_examples=50)
@given(a=st.floats(0, 1.5), b=st.floats(0, 1.5), curved=st.booleans())
def test_warning_monotone_in_lambda(a, b, curved):
    ego = bent() if curved else straight()
    lo, hi = sorted((a, b))
    if warn(lo, ego).warning:
        assert warn(hi, ego).warning
    est = warn(hi, ego)
    assert not (est.warning and est.gated_by_curvature)


def test_estimate_record():
    d = warn(math.radians(6), straight(), lateral_offset=0.2).to_dict()
    assert d == {"lambda_deg": pytest.approx(6.0), "warning": True, "gated": False}
