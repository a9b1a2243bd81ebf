"""Sparse optical flow and lane-departure angle.

Flow is estimated between two single-channel planes (normally consecutive
ground grids, where ground motion is a pure translation).  ``vx`` is the
displacement along the row axis (longitudinal) and ``vy`` along the column
axis (lateral), both in cells/pixels per frame.
"""
from dataclasses import dataclass
import math

import numpy as np
from scipy.ndimage import binary_erosion, map_coordinates, sobel

from .errors import DimensionMismatch, InsufficientFlow

MIN_CONFIDENCE = 0.05


@dataclass
class FlowField:
    rows: np.ndarray
    cols: np.ndarray
    vx: np.ndarray
    vy: np.ndarray
    confidence: np.ndarray

    def __len__(self):
        return len(self.rows)

    def negate_lateral(self):
        return FlowField(self.rows, self.cols, self.vx, -self.vy, self.confidence)


@dataclass
class DepartureEstimate:
    lam: float
    lateral_offset: float
    warning: bool
    gated_by_curvature: bool

    @property
    def lambda_deg(self):
        return math.degrees(self.lam)

    def to_dict(self):
        return {"lambda_deg": self.lambda_deg, "warning": bool(self.warning),
                "gated": bool(self.gated_by_curvature)}


@dataclass
class DepartureThresholds:
    lambda_deg: float = 5.0
    curvature: float = 0.01  # threshold on |b + 3 c x_probe|, 1/m
    x_probe: float = 10.0
    no_lane_lambda_deg: float = 10.0  # used when no lane fit is available


def _coarse_shift(prev, curr, valid, max_shift):
    """Global integer displacement minimizing mean SSD on 2x-decimated planes."""
    p = prev[::2, ::2]
    c = curr[::2, ::2]
    v = valid[::2, ::2]
    r = max(1, max_shift // 2)
    h, w = p.shape
    best, best_cost = (0, 0), math.inf
    for dr in range(-r, r + 1):
        for dc in range(-r, r + 1):
            ps = (slice(max(0, -dr), min(h, h - dr)), slice(max(0, -dc), min(w, w - dc)))
            cs = (slice(max(0, dr), min(h, h + dr)), slice(max(0, dc), min(w, w + dc)))
            m = v[ps] & v[cs]
            n = m.sum()
            if n < 0.1 * v.sum() or n == 0:
                continue
            d = (p[ps] - c[cs])[m]
            cost = float(d @ d) / n
            if cost < best_cost - 1e-15:
                best, best_cost = (dr, dc), cost
    return 2 * best[0], 2 * best[1]


def estimate_flow(prev, curr, grid_step=8, window=15, valid=None, lower_half=True,
                  max_shift=16, iterations=6):
    """Lucas-Kanade flow on a regular grid of sample points.

    A global integer pre-shift found by exhaustive search on 2x-decimated
    planes seeds an iterative gradient least-squares refinement in a
    ``window`` x ``window`` neighbourhood around each sample.  Confidence is
    the smaller eigenvalue of the local structure matrix divided by the
    largest such eigenvalue over all samples; samples under 0.05 are dropped.
    """
    prev = np.asarray(prev, dtype=float)
    curr = np.asarray(curr, dtype=float)
    if prev.shape != curr.shape or prev.ndim != 2:
        raise DimensionMismatch(f"frame shapes differ: {prev.shape} vs {curr.shape}")
    valid = np.ones(prev.shape, bool) if valid is None else np.asarray(valid, bool)
    h, w = prev.shape
    half = window // 2

    empty = FlowField(*(np.zeros(0) for _ in range(5)))
    r0 = h // 2 if lower_half else 0
    rr = np.arange(max(r0, half), h - half, grid_step)
    cc = np.arange(half, w - half, grid_step)
    if rr.size == 0 or cc.size == 0:
        return empty
    R, C = np.meshgrid(rr, cc, indexing="ij")
    R, C = R.ravel(), C.ravel()
    inner = binary_erosion(valid, iterations=half, border_value=0)
    keep = inner[R, C]
    R, C = R[keep], C[keep]
    if R.size == 0:
        return empty

    gr = sobel(prev, axis=0) / 8.0
    gc = sobel(prev, axis=1) / 8.0
    off = np.arange(-half, half + 1)
    wr = R[:, None, None] + off[None, :, None]
    wc = C[:, None, None] + off[None, None, :]
    wr, wc = np.broadcast_arrays(wr, wc)
    g_r = gr[wr, wc].reshape(R.size, -1)
    g_c = gc[wr, wc].reshape(R.size, -1)
    tmpl = prev[wr, wc].reshape(R.size, -1)
    a = (g_r * g_r).sum(1)
    b = (g_r * g_c).sum(1)
    d = (g_c * g_c).sum(1)
    lam_min = 0.5 * (a + d) - np.sqrt(0.25 * (a - d) ** 2 + b * b)
    top = lam_min.max(initial=0.0)
    if top <= 1e-12 * window * window:
        return empty
    conf = np.clip(lam_min / top, 0.0, 1.0)
    ok = conf >= MIN_CONFIDENCE
    det = a * d - b * b
    ok &= det > 1e-12

    sr, sc = _coarse_shift(prev, curr, valid, max_shift) if max_shift > 0 else (0, 0)
    vr = np.full(R.size, float(sr))
    vc = np.full(R.size, float(sc))
    wr_f = wr.reshape(R.size, -1).astype(float)
    wc_f = wc.reshape(R.size, -1).astype(float)
    for _ in range(iterations):
        warped = map_coordinates(curr, [wr_f + vr[:, None], wc_f + vc[:, None]], order=1,
                                 mode="nearest", prefilter=False)
        e = tmpl - warped
        br = (g_r * e).sum(1)
        bc = (g_c * e).sum(1)
        with np.errstate(divide="ignore", invalid="ignore"):
            dr = np.where(ok, (d * br - b * bc) / det, 0.0)
            dc = np.where(ok, (a * bc - b * br) / det, 0.0)
        vr += dr
        vc += dc
        if np.all(np.abs(dr[ok]) + np.abs(dc[ok]) < 1e-4):
            break
    tr, tc = R + vr, C + vc
    ok &= (tr >= half) & (tr <= h - 1 - half) & (tc >= half) & (tc <= w - 1 - half)
    ok &= np.abs(vr - sr) + np.abs(vc - sc) < window
    if ok.any():
        ri = np.clip(np.rint(tr).astype(int), 0, h - 1)
        ci = np.clip(np.rint(tc).astype(int), 0, w - 1)
        ok &= inner[ri, ci]
    return FlowField(R[ok].astype(float), C[ok].astype(float), vr[ok], vc[ok], conf[ok])


def departure_angle(flow, min_samples=5):
    """``arctan(median(vy) / median(vx))`` over the confident samples."""
    if len(flow) < min_samples:
        raise InsufficientFlow(f"{len(flow)} flow samples < {min_samples}")
    mx = float(np.median(flow.vx))
    my = float(np.median(flow.vy))
    if abs(mx) < 1e-6:
        return math.copysign(math.pi / 2, my) if my != 0 else 0.0
    return math.atan(my / mx)


def warn(lam, ego=None, thresholds=None, lateral_offset=float("nan")):
    """Departure warning with curved-road gating.

    ``ego`` is ``(left, right)`` lane curves or ``None``.  With a lane fit,
    the warning is suppressed when the mean ego-lane ``|b + 3 c x_probe|``
    exceeds the curvature threshold (lateral flow explained by the bend).
    Without a fit the wider ``no_lane_lambda_deg`` threshold applies.
    """
    t = thresholds or DepartureThresholds()
    if ego is None:
        warning = abs(lam) > math.radians(t.no_lane_lambda_deg)
        return DepartureEstimate(lam, lateral_offset, bool(warning), False)
    curv = np.mean([cv.half_curvature(t.x_probe) for cv in ego])
    gated = bool(abs(curv) > t.curvature)
    warning = (abs(lam) > math.radians(t.lambda_deg)) and not gated
    return DepartureEstimate(lam, lateral_offset, bool(warning), gated)
