"""Cubic lane curves: gap interpolation, sequential RANSAC, ego-lane offset.

A lane is modelled as lateral position as a function of forward distance,
``Y = y0 + a X + b X^2 + c X^3`` in vehicle-frame meters (``X`` forward,
``Y`` positive to the left).
"""
from dataclasses import dataclass, field
import math

import numpy as np

from .errors import InvalidInput, NoEgoLane, NoModel
from .filters import FeaturePointSet

X_SCALE = 45.0  # abscissa normalization for well-conditioned Vandermonde systems
MAX_CURVES = 8


@dataclass
class RansacConfig:
    iterations: int = 500
    inlier_tol: float = 0.15
    min_inliers: int = 12
    max_curves: int = MAX_CURVES
    rng_seed: int = 0
    merge_dist: float = 0.5
    merge_x: float = 10.0
    min_span: float = 5.0
    max_cond: float = 1e12
    max_slope: float = 0.8  # |dY/dX| bound for trial models over the data's x range
    min_fill: float = 0.5  # inliers per grid row of support required by fit_lanes
    angle_tol_deg: float = 20.0  # oriented points must also agree with the model's direction
    remove_band: float = 0.3  # fit_lanes drops remaining points this close to an accepted curve
    guide_window: float = 0.3  # tangent-guided sampling for oriented points (0 disables)
    guide_bend: float = 0.01  # window growth per squared meter of forward distance
    guide_unoriented: bool = True  # guide plain (x, y) input with a forward tangent
    refit_rounds: int = 5  # least-squares refits while the inlier set keeps growing
    refine_top: int = 8  # highest-scoring trials that get refit before the winner is chosen

    def validate(self):
        if not 1 <= self.max_curves <= MAX_CURVES:
            raise InvalidInput(f"max_curves must be in [1, {MAX_CURVES}]")
        if self.iterations < 1 or self.min_inliers < 4 or self.inlier_tol <= 0:
            raise InvalidInput("iterations >= 1, min_inliers >= 4 and inlier_tol > 0 required")
        return self


@dataclass
class LaneCurve:
    y0: float
    a: float
    b: float
    c: float
    inlier_count: int = 0
    inlier_rms: float = 0.0
    x_lo: float = 0.0
    x_hi: float = 45.0
    inliers: np.ndarray = field(default=None, repr=False, compare=False)

    @property
    def coeffs(self):
        return np.array([self.y0, self.a, self.b, self.c])

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.y0 + x * (self.a + x * (self.b + x * self.c))

    def slope(self, x):
        x = np.asarray(x, dtype=float)
        return self.a + x * (2.0 * self.b + 3.0 * self.c * x)

    def half_curvature(self, x):
        """``b + 3 c x``: half the second derivative of the lateral position."""
        return self.b + 3.0 * self.c * x

    def to_dict(self):
        return {"y0": self.y0, "a": self.a, "b": self.b, "c": self.c,
                "inliers": int(self.inlier_count), "rms": self.inlier_rms,
                "x_lo": self.x_lo, "x_hi": self.x_hi}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["y0"]), float(d["a"]), float(d["b"]), float(d["c"]),
                   int(d.get("inliers", 0)), float(d.get("rms", 0.0)),
                   float(d.get("x_lo", 0.0)), float(d.get("x_hi", 45.0)))


def _as_xy(points):
    if isinstance(points, FeaturePointSet):
        return np.asarray(points.x, dtype=float), np.asarray(points.y, dtype=float)
    arr = np.asarray(points, dtype=float).reshape(-1, 2)
    return arr[:, 0], arr[:, 1]


def _orientation(points):
    if isinstance(points, FeaturePointSet) and points.orientation is not None:
        return np.asarray(points.orientation, dtype=float)
    return None


def _vander(xs):
    return np.stack([np.ones_like(xs), xs, xs * xs, xs * xs * xs], axis=-1)


def _unscale(coef):
    return coef / X_SCALE ** np.arange(4)


def _predict(coef_scaled, xs):
    return coef_scaled[0] + xs * (coef_scaled[1] + xs * (coef_scaled[2] + xs * coef_scaled[3]))


def _draw_guided(ctx, count, rng, tries=32):
    """Anchor plus three points near the anchor's tangent line.

    Candidates are drawn uniformly and kept when they fall inside a lateral
    window around the anchor's tangent; the window grows quadratically with
    forward distance so curved markings stay inside it.  Anchors with fewer
    than three hits among ``tries`` candidates are dropped.
    """
    xs, ys, orient, window, bend = ctx
    n = xs.size
    anchors = rng.integers(0, n, size=count)
    cand = rng.integers(0, n, size=(count, tries))
    dx = xs[cand] - xs[anchors, None]
    pred = ys[anchors, None] + np.tan(orient[anchors])[:, None] * dx
    hit = (np.abs(ys[cand] - pred) <= window + bend * dx * dx) & (cand != anchors[:, None])
    enough = hit.sum(axis=1) >= 3
    hit, cand, anchors = hit[enough], cand[enough], anchors[enough]
    # positions of the first three hits in each row
    order = np.argsort(~hit, axis=1, kind="stable")[:, :3]
    return np.column_stack([anchors, np.take_along_axis(cand, order, axis=1)])


def _trial_models(xs, ys, iterations, rng, max_cond, max_batches=20, guide=None):
    """Solve minimal 4-point systems until ``iterations`` usable trials exist.

    ``xs`` is in scaled units.  ``guide`` switches to tangent-guided sampling
    and carries ``(x_m, y, orientation, window, bend, measured)``; without
    measured orientations half of the samples stay uniform.
    """
    n = xs.size
    models = []
    have = 0
    for _ in range(max_batches):
        if guide is None:
            idx = rng.integers(0, n, size=(2 * iterations, 4))
        elif guide[-1]:
            idx = _draw_guided(guide[:-1], 2 * iterations, rng)
        else:
            # no measured tangents: mix forward-tangent and uniform samples
            idx = np.concatenate([_draw_guided(guide[:-1], iterations, rng),
                                  rng.integers(0, n, size=(iterations, 4))])
        srt = np.sort(idx, axis=1)
        ok = np.all(np.diff(srt, axis=1) > 0, axis=1)
        xsamp = np.sort(xs[idx], axis=1)
        ok &= np.all(np.diff(xsamp, axis=1) > 0, axis=1)
        idx = idx[ok]
        if idx.size == 0:
            continue
        V = _vander(xs[idx])
        cond = np.linalg.cond(V)
        good = np.isfinite(cond) & (cond <= max_cond)
        V, idx = V[good], idx[good]
        if idx.size == 0:
            continue
        coef = np.linalg.solve(V, ys[idx][..., None])[..., 0]
        take = min(iterations - have, coef.shape[0])
        models.append(coef[:take])
        have += take
        if have >= iterations:
            break
    if not models:
        return np.zeros((0, 4))
    return np.concatenate(models)


def ransac_fit_one(points, cfg=None, stream=0):
    """Fit one cubic lane with RANSAC followed by a least-squares refit.

    Minimal samples are 4 distinct points with distinct abscissae; samples
    whose system is singular or has condition number above ``cfg.max_cond``
    are redrawn and do not consume an iteration.  When ``points`` is a
    :class:`FeaturePointSet`, an inlier must also have its orientation within
    ``cfg.angle_tol_deg`` of the model's local direction, and minimal samples
    are drawn around a random anchor's tangent line instead of uniformly.
    Trials steeper than ``cfg.max_slope`` anywhere over the data's x range
    score zero.  The
    ``refine_top`` best trials are each refit by least squares on their
    inliers, repeating (up to ``refit_rounds`` times) while the inlier set
    grows; the refit with the most inliers wins.  The reported inliers are
    those within ``inlier_tol`` of the final curve.  Deterministic for fixed
    ``(cfg.rng_seed, stream)``.
    """
    cfg = cfg or RansacConfig()
    xs, ys = _as_xy(points)
    if xs.size < 4:
        raise NoModel(f"need at least 4 points, got {xs.size}")
    rng = np.random.default_rng([int(cfg.rng_seed), int(stream)])
    xs_s = xs / X_SCALE
    orient = _orientation(points) if cfg.angle_tol_deg else None
    guide = None
    if cfg.guide_window and (orient is not None or cfg.guide_unoriented):
        tangent = orient if orient is not None else np.zeros_like(xs)
        guide = (xs, ys, tangent, cfg.guide_window, cfg.guide_bend, orient is not None)
    models = _trial_models(xs_s, ys, cfg.iterations, rng, cfg.max_cond, guide=guide)
    if models.shape[0] == 0:
        raise NoModel("every minimal sample was degenerate")
    V = _vander(xs_s)
    ok = np.abs(V @ models.T - ys[:, None]) <= cfg.inlier_tol
    if orient is not None:
        # orientation gate, evaluated only where the residual gate passed
        pi, ti = np.nonzero(ok)
        xp, mt = xs_s[pi], models[ti]
        heading = np.arctan((mt[:, 1] + xp * (2 * mt[:, 2] + 3 * mt[:, 3] * xp)) / X_SCALE)
        ok[pi, ti] = np.abs(_angle_diff(orient[pi], heading)) <= math.radians(cfg.angle_tol_deg)
    counts = ok.sum(axis=0)
    if cfg.max_slope:
        probe = np.linspace(xs_s.min(), xs_s.max(), 9)
        d = (models[:, 1:2] + probe * (2.0 * models[:, 2:3] + 3.0 * models[:, 3:4] * probe))
        counts = np.where(np.abs(d).max(axis=1) / X_SCALE <= cfg.max_slope, counts, 0)
    order = np.argsort(-counts, kind="stable")[:max(1, cfg.refine_top)]
    if counts[order[0]] < max(cfg.min_inliers, 4):
        raise NoModel(f"best model has {int(counts[order[0]])} inliers < {cfg.min_inliers}")
    best = None
    for t in order:
        if counts[t] < max(cfg.min_inliers, 4):
            break
        fit = _refine(V, xs_s, ys, orient, ok[:, t], cfg)
        if best is None or fit[3] > best[3]:
            best = fit
    coef, r, inl, count = best
    if count < cfg.min_inliers:
        raise NoModel(f"refit model has {count} inliers < {cfg.min_inliers}")
    y0, a, b, c = (float(v) for v in _unscale(coef))
    return LaneCurve(y0, a, b, c, count, float(np.sqrt(np.mean(r[inl] ** 2))),
                     float(xs[inl].min()), float(xs[inl].max()), np.flatnonzero(inl))


def _refine(V, xs_s, ys, orient, inl, cfg):
    """Least-squares refits from a trial's inliers while the inlier set grows."""
    count = int(inl.sum())
    for _ in range(max(1, cfg.refit_rounds)):
        coef, *_ = np.linalg.lstsq(V[inl], ys[inl], rcond=None)
        r = np.abs(_predict(coef, xs_s) - ys)
        new = r <= cfg.inlier_tol
        if orient is not None:
            slope = (coef[1] + xs_s * (2 * coef[2] + 3 * coef[3] * xs_s)) / X_SCALE
            new &= np.abs(_angle_diff(orient, np.arctan(slope))) <= math.radians(cfg.angle_tol_deg)
        grew = int(new.sum()) > count
        inl, count = new, int(new.sum())
        if not grew or count < 4:
            break
    return coef, r, inl, count


def _clip_support(curve, y_max, step=0.1):
    """Shrink ``[x_lo, x_hi]`` so the curve stays within ``|Y| <= y_max``."""
    xs = np.arange(curve.x_lo, curve.x_hi + step / 2, step)
    inside = np.abs(curve(xs)) <= y_max
    if inside.all():
        return curve
    if not inside.any():
        return None
    # longest run of in-range samples
    edges = np.diff(np.concatenate([[0], inside.astype(int), [0]]))
    starts, ends = np.flatnonzero(edges == 1), np.flatnonzero(edges == -1)
    k = int(np.argmax(ends - starts))
    curve.x_lo, curve.x_hi = float(xs[starts[k]]), float(xs[ends[k] - 1])
    return curve


def fit_lanes(points, cfg=None, y_max=None, row_step=None):
    """Sequential RANSAC: fit, remove inliers, repeat, up to ``max_curves``.

    After each fit, the curve's inliers and any remaining point within
    ``remove_band`` of it over its support leave the pool.  Curves spanning
    less than ``min_span`` meters, or with fewer than ``min_fill`` inliers
    per grid row (``row_step``) of span, are dropped after their points are
    removed.  Curves closer than ``merge_dist`` at ``merge_x`` are merged
    (the one with more inliers survives).  Results are sorted by ``y0``.
    """
    cfg = (cfg or RansacConfig()).validate()
    xs, ys = _as_xy(points)
    oriented = _orientation(points) is not None
    if row_step is None and isinstance(points, FeaturePointSet) and points.grid is not None:
        row_step = points.grid.resolution
    remaining = np.arange(xs.size)
    curves = []
    for k in range(cfg.max_curves):
        if remaining.size < max(cfg.min_inliers, 4):
            break
        sub = points.subset(remaining) if oriented else np.column_stack([xs[remaining], ys[remaining]])
        try:
            curve = ransac_fit_one(sub, cfg, stream=k)
        except NoModel:
            break
        curve.inliers = remaining[curve.inliers]
        xr = xs[remaining]
        near = ((np.abs(curve(xr) - ys[remaining]) <= max(cfg.remove_band, cfg.inlier_tol))
                & (xr >= curve.x_lo) & (xr <= curve.x_hi))
        near[np.searchsorted(remaining, curve.inliers)] = True
        remaining = remaining[~near]
        span = curve.x_hi - curve.x_lo
        if span < cfg.min_span:
            continue
        if row_step and curve.inlier_count < cfg.min_fill * span / row_step:
            continue
        if y_max is not None:
            curve = _clip_support(curve, y_max)
            if curve is None:
                continue
        curves.append(curve)

    kept = []
    for curve in sorted(curves, key=lambda cv: -cv.inlier_count):
        if all(abs(curve(cfg.merge_x) - other(cfg.merge_x)) >= cfg.merge_dist for other in kept):
            kept.append(curve)
    return sorted(kept, key=lambda cv: cv.y0)


def ego_lane_and_offset(curves, vehicle_y=0.0, x_probe=5.0):
    """Nearest curves on each side of the vehicle and the lane-center offset.

    ``left`` is the nearest curve with ``Y(x_probe) > vehicle_y`` (``+Y`` is
    to the left), ``right`` the nearest with ``Y(x_probe) < vehicle_y``.  The
    offset is the lane midpoint minus ``vehicle_y``; a positive value means
    the lane center lies to the vehicle's left.
    """
    at = [(float(cv(x_probe)), cv) for cv in curves]
    lefts = [p for p in at if p[0] > vehicle_y]
    rights = [p for p in at if p[0] < vehicle_y]
    if not lefts or not rights:
        raise NoEgoLane("no pair of curves straddles the vehicle")
    yl, left = min(lefts, key=lambda p: p[0])
    yr, right = max(rights, key=lambda p: p[0])
    return left, right, 0.5 * (yl + yr) - vehicle_y


def _cluster(x, y, orient, max_gap, lateral_tol, max_angle):
    """Greedy linking of points (ascending x) into chains along lanes."""
    order = np.lexsort((y, x))
    chains = []
    # tails of chains that can still be extended (tail within max_gap behind)
    live = np.zeros(0, dtype=int)
    tail_x = tail_y = tail_t = tail_o = np.zeros(0)
    for i in order:
        xi = x[i]
        keep = tail_x >= xi - max_gap
        if not keep.all():
            live, tail_x, tail_y, tail_t, tail_o = (a[keep] for a in (live, tail_x, tail_y,
                                                                     tail_t, tail_o))
        best = -1
        if live.size:
            dx = xi - tail_x
            err = np.abs(y[i] - (tail_y + tail_t * dx))
            ok = ((dx > 1e-9) & (np.abs(_angle_diff(orient[i], tail_o)) <= max_angle)
                  & (err <= lateral_tol * (1.0 + dx)))
            if ok.any():
                best = int(np.flatnonzero(ok)[np.argmin(err[ok])])
        if best < 0:
            chains.append([i])
            live = np.append(live, len(chains) - 1)
            tail_x, tail_y = np.append(tail_x, xi), np.append(tail_y, y[i])
            tail_t, tail_o = np.append(tail_t, math.tan(orient[i])), np.append(tail_o, orient[i])
        else:
            chains[live[best]].append(i)
            tail_x[best], tail_y[best] = xi, y[i]
            tail_t[best], tail_o[best] = math.tan(orient[i]), orient[i]
    return chains


def _angle_diff(a, b):
    return (a - b + math.pi / 2) % math.pi - math.pi / 2


def _cubic_through(px, py):
    V = _vander(np.asarray(px) / X_SCALE)
    return np.linalg.solve(V, np.asarray(py))


def interpolate_gaps(points, max_gap=4.0, phi_max_deg=30.0, step=0.1, lateral_tol=0.3,
                     cluster_angle_deg=60.0, anchor_span=1.5):
    """Fill short gaps inside lane clusters with samples of a local cubic.

    Points are linked into chains by lateral prediction error and orientation.
    Inside a chain, a gap wider than ``1.5 step`` and at most ``max_gap`` is
    filled when the orientations at both gap ends agree within ``phi_max``.
    The cubic passes through two anchors on each side of the gap: the edge
    point and the farthest chain point within ``anchor_span`` of it.
    """
    if not isinstance(points, FeaturePointSet):
        xs, ys = _as_xy(points)
        points = FeaturePointSet(xs, ys, np.ones_like(xs), np.zeros_like(xs))
    n = len(points)
    if n < 4:
        return points
    x = np.asarray(points.x, dtype=float)
    y = np.asarray(points.y, dtype=float)
    o = np.asarray(points.orientation, dtype=float)
    phi_max = math.radians(phi_max_deg)
    chains = _cluster(x, y, o, max_gap, lateral_tol, math.radians(cluster_angle_deg))

    new_x, new_y, new_s, new_o = [], [], [], []
    for chain in chains:
        if len(chain) < 4:
            continue
        cx = x[chain]
        for g in np.flatnonzero(np.diff(cx) > 1.5 * step):
            lo_i, hi_i = chain[g], chain[g + 1]
            gap = x[hi_i] - x[lo_i]
            if gap > max_gap or g < 1 or g + 2 >= len(chain):
                continue
            if abs(_angle_diff(o[lo_i], o[hi_i])) > phi_max:
                continue
            before = [k for k in range(g - 1, -1, -1) if x[lo_i] - cx[k] <= anchor_span]
            after = [k for k in range(g + 2, len(chain)) if cx[k] - x[hi_i] <= anchor_span]
            if not before or not after:
                continue
            a0, a3 = chain[before[-1]], chain[after[-1]]
            px = [x[a0], x[lo_i], x[hi_i], x[a3]]
            if np.any(np.diff(px) <= 0):
                continue
            coef = _cubic_through(px, [y[a0], y[lo_i], y[hi_i], y[a3]])
            k = int(math.floor(gap / step - 1e-9))
            fx = x[lo_i] + step * np.arange(1, k + 1)
            fx = fx[fx < x[hi_i] - 0.5 * step]
            if fx.size == 0:
                continue
            fs = fx / X_SCALE
            new_x.append(fx)
            new_y.append(_predict(coef, fs))
            slope = (coef[1] + fs * (2 * coef[2] + 3 * coef[3] * fs)) / X_SCALE
            new_o.append(np.arctan(slope))
            new_s.append(np.full(fx.size, 0.5 * (points.strength[lo_i] + points.strength[hi_i])))
    if not new_x:
        return points
    return FeaturePointSet(
        x=np.concatenate([x, *new_x]),
        y=np.concatenate([y, *new_y]),
        strength=np.concatenate([points.strength, *new_s]),
        orientation=np.concatenate([o, *new_o]),
        interpolated=np.concatenate([points.interpolated, np.ones(sum(map(len, new_x)), dtype=bool)]),
        grid=points.grid, cross_response=points.cross_response)


def frame_record(frame, curves, offset=None, **extra):
    """Per-frame JSON-ready record."""
    rec = {"v": 1, "frame": frame, "curves": [cv.to_dict() for cv in curves],
           "offset_m": offset}
    rec.update(extra)
    return rec
