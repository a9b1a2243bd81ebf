import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.ndimage import convolve

from lanesense.errors import InvalidInput
from lanesense.filters import (KERNEL_NAMES, FeatureParams, convolve_dense, convolve_separable,
                               extract_features, make_bank, ridge_map, steer_order2)
from lanesense.ipm import IpmGrid


def closed_form_g2(sigma, radius, angle):
    """Second derivative of exp(-(x^2+y^2)/sigma^2) along (cos a, -sin a), sampled."""
    t = np.arange(-radius, radius + 1, dtype=float)
    y, x = np.meshgrid(t, t, indexing="ij")
    p = x * math.cos(angle) - y * math.sin(angle)
    return (4 * p * p / sigma ** 4 - 2 / sigma ** 2) * np.exp(-(x * x + y * y) / sigma ** 2)


def test_g2x_origin():
    for conv, tol in (("as_printed", 1e-15), ("corrected", 1e-6)):
        bank = make_bank(2.0, 8, conv)
        assert bank.kernel("G2x")[8, 8] == pytest.approx(-2 / 4.0, abs=tol)


def test_gxy_vanishes_on_axes():
    k = make_bank(2.0, 8).kernel("Gxy")
    assert np.all(k[8, :] == 0) and np.all(k[:, 8] == 0)
    assert np.array_equal(k[:, ::-1], -k) and np.array_equal(k[::-1, :], -k)


def test_transpose_symmetry():
    bank = make_bank(1.7, 7)
    assert np.array_equal(bank.kernel("G2x"), bank.kernel("G2y").T)
    assert np.array_equal(bank.kernel("G4x"), bank.kernel("G4y").T)


def test_kernel_shapes():
    bank = make_bank(2.0)
    assert bank.radius == 8
    for name in KERNEL_NAMES:
        assert bank.kernel(name).shape == (17, 17)


@pytest.mark.parametrize("sigma", [1.5, 2.0, 3.0])
def test_corrected_kernels_are_zero_sum(sigma):
    bank = make_bank(sigma)
    for name in KERNEL_NAMES:
        k = bank.kernel(name)
        assert abs(k.sum()) < 1e-6 * np.abs(k).max(), name


def test_as_printed_fourth_order_is_not_zero_sum():
    k = make_bank(2.0, 8, "as_printed").kernel("G4x")
    assert abs(k.sum()) > 0.1 * np.abs(k).max()


def test_fourth_order_matches_analytic_derivative():
    # corrected G4x row through the origin vs. a finite-difference fourth derivative
    sigma, radius = 2.0, 8
    t = np.arange(-radius, radius + 1, dtype=float)
    h = 1e-2
    f = lambda u: np.exp(-u * u / sigma ** 2)
    fd = (f(t - 2 * h) - 4 * f(t - h) + 6 * f(t) - 4 * f(t + h) + f(t + 2 * h)) / h ** 4
    row = make_bank(sigma, radius).kernel("G4x")[radius]
    np.testing.assert_allclose(row, fd, atol=2e-3)


@pytest.mark.parametrize("kw", [dict(sigma=0.0), dict(sigma=2.0, radius=5),
                                dict(sigma=2.0, sign_convention="other")])
def test_bank_errors(kw):
    with pytest.raises(InvalidInput):
        make_bank(**kw)


@settings(max_examples=20, deadline=None)
@given(arrays(float, (64, 64), elements=st.floats(-1, 1)))
def test_separable_equals_dense(plane):
    bank = make_bank(2.0)
    for name in KERNEL_NAMES:
        d = np.abs(convolve_separable(plane, bank, name) - convolve_dense(plane, bank, name))
        assert d.max() < 1e-9


def test_impulse_gives_kernel():
    bank = make_bank(2.0)
    plane = np.zeros((41, 41))
    plane[20, 20] = 1.0
    for name in KERNEL_NAMES:
        out = convolve_separable(plane, bank, name)
        np.testing.assert_allclose(out[12:29, 12:29], bank.kernel(name)[::-1, ::-1], atol=1e-15)


def test_constant_is_annihilated():
    bank = make_bank(2.0)
    plane = np.full((40, 50), 3.0)
    for name in KERNEL_NAMES:
        assert np.abs(convolve_separable(plane, bank, name)).max() < 1e-6 * 3.0


def test_steering_basis_angles(rng):
    bank = make_bank(2.0)
    plane = rng.normal(size=(48, 48))
    r = [convolve_separable(plane, bank, n) for n in ("G2x", "Gxy", "G2y")]
    np.testing.assert_array_equal(steer_order2(r, 0.0), r[0])
    np.testing.assert_allclose(steer_order2(r, math.pi / 2), r[2], atol=1e-12)
    np.testing.assert_allclose(steer_order2(r, math.pi / 4), (r[0] + r[2]) / 2 - r[1],
                               atol=1e-12)


@pytest.mark.parametrize("deg", [30.0, 45.0, 100.0])
def test_steering_matches_rotated_kernel(rng, deg):
    bank = make_bank(2.0)
    plane = rng.normal(size=(48, 48))
    r = {n: convolve_separable(plane, bank, n) for n in ("G2x", "Gxy", "G2y")}
    steered = steer_order2(r, math.radians(deg))
    direct = convolve(plane, closed_form_g2(2.0, 8, math.radians(deg)), mode="reflect")
    assert np.abs(steered - direct).max() < 1e-3 * np.abs(direct).max()


def stripe_grid(horizontal=False, width=3, rows=200, cols=100):
    cells = np.full((rows, cols), 0.2)
    if horizontal:
        cells[rows // 2 - width // 2: rows // 2 - width // 2 + width, :] = 0.9
    else:
        cells[:, 50 - width // 2: 50 - width // 2 + width] = 0.9
    return IpmGrid(cells, np.ones_like(cells, bool), 0.1, rows * 0.1, cols * 0.05)


def test_vertical_stripe_features():
    grid = stripe_grid()
    pts = extract_features(grid)
    _, col = grid.to_cell(pts.x, pts.y)
    assert np.all(np.abs(col - 50) <= 1)
    inner_rows = 200 - 2 * math.ceil(2 * 2.0)
    assert len(pts) >= 0.9 * inner_rows
    assert np.all(np.abs(pts.orientation) < 1e-6)


def test_horizontal_stripe_is_gated_but_reported():
    grid = stripe_grid(horizontal=True)
    pts = extract_features(grid)
    assert len(pts) == 0
    cross = pts.cross_response
    assert cross is not None
    assert np.argmin(cross[:, 50]) in (99, 100)
    assert cross[100, 50] < -0.1


def test_constant_grid_gives_no_points():
    grid = IpmGrid(np.full((60, 40), 0.5), np.ones((60, 40), bool), 0.1, 6.0, 2.0)
    assert len(extract_features(grid)) == 0


def test_invalid_grid_gives_empty_set():
    grid = IpmGrid(np.zeros((20, 20)), np.zeros((20, 20), bool), 0.1, 2.0, 1.0)
    assert len(extract_features(grid)) == 0


def test_points_lie_in_valid_region():
    from tests.conftest import detected
    res = detected("benchmark_scene", 1)
    pts = res.features
    real = ~pts.interpolated
    r, c = res.grid.to_cell(pts.x[real], pts.y[real])
    assert np.all(res.grid.valid[np.rint(r).astype(int), np.rint(c).astype(int)])


def test_transposed_extraction():
    from tests.conftest import detected
    grid = detected("benchmark_scene", 0).grid
    a = ridge_map(grid.cells, grid.valid, FeatureParams())
    b = ridge_map(grid.cells.T, grid.valid.T, FeatureParams(lane_axis="horizontal"))
    np.testing.assert_array_equal(a["keep"], b["keep"].T)
    sel = a["keep"]
    # angles in the transposed frame: (cos t, -sin t) -> (-sin t, cos t)
    expect = -a["theta"][sel] - np.pi / 2
    diff = (b["theta"].T[sel] - expect + np.pi / 2) % np.pi - np.pi / 2
    assert np.abs(diff).max() < 1e-12


@pytest.mark.parametrize("scale", [4.0, 0.37, 2.5])
def test_threshold_is_scale_invariant(scale):
    from tests.conftest import detected
    grid = detected("benchmark_scene", 0).grid
    base = extract_features(grid)
    scaled = extract_features(grid.like(grid.cells * scale))
    np.testing.assert_allclose(scaled.x, base.x)
    np.testing.assert_allclose(scaled.y, base.y, atol=1e-9)


def test_any_polarity_keeps_dark_lines():
    cells = np.full((120, 80), 0.8)
    cells[:, 39:42] = 0.1
    grid = IpmGrid(cells, np.ones_like(cells, bool), 0.1, 12.0, 4.0)
    _, col = grid.to_cell(*extract_features(grid).xy().T)
    assert not np.any(np.abs(col - 40) <= 1)
    _, col = grid.to_cell(*extract_features(grid, FeatureParams(polarity="any")).xy().T)
    assert np.sum(np.abs(col - 40) <= 1) > 100


@pytest.mark.parametrize("kw", [dict(polarity="dark"), dict(phi_max_deg=0.0), dict(k=-1.0),
                                dict(lane_axis="diagonal")])
def test_feature_params_validation(kw):
    with pytest.raises(InvalidInput):
        FeatureParams(**kw).validate()
