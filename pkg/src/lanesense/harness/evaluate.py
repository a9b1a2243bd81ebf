"""Pixel-wise evaluation of lane and boundary predictions on a ground grid.

A predicted curve is rasterized to one cell per grid row inside its support.
A predicted cell is a true positive when a truth lane cell lies in the same
row within ``tolerance`` meters laterally, otherwise a false positive.
Precision is ``TP / (TP + FP)``; ``PRE_k`` repeats the count over rows with
``x <= k`` meters.
"""
from dataclasses import dataclass, field
import json
import math

import numpy as np
from scipy.ndimage import maximum_filter1d

from ..errors import GridMismatch, InvalidInput, NoEgoLane
from ..ipm import grid_x_centers, grid_y_centers
from ..lanes import ego_lane_and_offset

RANGES = (20, 30, 40)
ROW_FRACTION = 0.8  # share of rows an ego curve must match for a frame to count as correct


def _tol_cells(tolerance, resolution):
    return int(math.floor(tolerance / resolution + 1e-9))


def _geometry(truth):
    mask = np.asarray(truth["lane_mask"])
    res = float(truth.get("resolution", 0.1))
    x_max = float(truth.get("x_max", 45.0))
    y_max = float(truth.get("y_max", mask.shape[1] * res / 2.0))
    xs = grid_x_centers(res, x_max)
    ys = grid_y_centers(res, y_max)
    if (xs.size, ys.size) != mask.shape:
        raise GridMismatch(f"truth mask {mask.shape} does not match grid {(xs.size, ys.size)}")
    valid = truth.get("valid")
    valid = np.ones(mask.shape, bool) if valid is None else np.asarray(valid, bool)
    if valid.shape != mask.shape:
        raise GridMismatch("valid mask shape differs from the truth mask")
    return res, x_max, y_max, xs, ys, valid


def rasterize_curves(curves, shape, resolution, x_max, y_max, valid=None):
    """Boolean mask with one cell per row for every curve row inside its support."""
    out = np.zeros(shape, dtype=bool)
    xs = grid_x_centers(resolution, x_max)
    if xs.size != shape[0]:
        raise GridMismatch(f"{xs.size} grid rows for a {shape} mask")
    rows = np.arange(shape[0])
    for cv in curves:
        inside = (xs >= cv.x_lo - 1e-9) & (xs <= cv.x_hi + 1e-9)
        r = rows[inside]
        col = np.rint((y_max - cv(xs[inside])) / resolution - 0.5).astype(np.int64)
        ok = (col >= 0) & (col < shape[1])
        out[r[ok], col[ok]] = True
    if valid is not None:
        out &= valid
    return out


def count_matches(pred, truth, tol_cells, valid=None):
    """Per-row ``(TP, FP)`` counts of ``pred`` cells against lateral-dilated ``truth``."""
    pred = np.asarray(pred, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    if pred.shape != truth.shape:
        raise GridMismatch(f"prediction {pred.shape} and truth {truth.shape} differ")
    if valid is not None:
        pred = pred & np.asarray(valid, dtype=bool)
    band = truth
    if tol_cells > 0:
        band = maximum_filter1d(truth.astype(np.uint8), size=2 * tol_cells + 1, axis=1,
                                mode="constant").astype(bool)
    tp = (pred & band).sum(axis=1)
    fp = (pred & ~band).sum(axis=1)
    return tp, fp


def _precision(tp, fp):
    return tp / (tp + fp) if tp + fp > 0 else None


def evaluate_masks(pred, truth, x_centers, tolerance=0.3, resolution=0.1, valid=None):
    """TP, FP and PRE / PRE_k for a predicted cell mask against a truth mask."""
    tp_row, fp_row = count_matches(pred, truth, _tol_cells(tolerance, resolution), valid)
    out = {"TP": int(tp_row.sum()), "FP": int(fp_row.sum())}
    out["PRE"] = _precision(out["TP"], out["FP"])
    for k in RANGES:
        near = np.asarray(x_centers) <= k
        tp, fp = int(tp_row[near].sum()), int(fp_row[near].sum())
        out[f"TP_{k}"], out[f"FP_{k}"] = tp, fp
        out[f"PRE_{k}"] = _precision(tp, fp)
    return out


def _polyline_at(poly, xs):
    poly = np.asarray(poly, dtype=float)
    order = np.argsort(poly[:, 0])
    px, py = poly[order, 0], poly[order, 1]
    y = np.interp(xs, px, py)
    y[(xs < px[0]) | (xs > px[-1])] = np.nan
    return y


def _truth_ego(polys, x_probe, xs):
    at = []
    for p in polys:
        y = _polyline_at(p, np.array([x_probe]))[0]
        if np.isfinite(y):
            at.append((y, p))
    lefts = [a for a in at if a[0] > 0]
    rights = [a for a in at if a[0] < 0]
    if not lefts or not rights:
        return None
    return min(lefts, key=lambda a: a[0])[1], max(rights, key=lambda a: a[0])[1]


def _curve_matches(curve, poly, xs, ys_valid_rows, tolerance, x_limit=RANGES[-1]):
    """Fraction of evaluated rows where ``curve`` is within ``tolerance`` of ``poly``."""
    truth_y = _polyline_at(poly, xs)
    rows = ys_valid_rows & np.isfinite(truth_y) & (xs <= x_limit)
    if not rows.any():
        return 0.0
    x = xs[rows]
    supported = (x >= curve.x_lo - 1e-9) & (x <= curve.x_hi + 1e-9)
    ok = supported & (np.abs(curve(x) - truth_y[rows]) <= tolerance + 1e-9)
    return float(ok.mean())


def _rows_seen(poly, xs, ys, res, y_max, valid):
    """Rows whose truth cell for ``poly`` lies inside the valid region."""
    y = _polyline_at(poly, xs)
    col = np.rint((y_max - np.nan_to_num(y)) / res - 0.5).astype(np.int64)
    inside = np.isfinite(y) & (col >= 0) & (col < ys.size)
    seen = np.zeros(xs.size, bool)
    seen[inside] = valid[np.flatnonzero(inside), col[inside]]
    return seen


def evaluate_frame(curves, truth, boundaries=None, tolerance=0.3, x_probe=5.0,
                   timings=None, name=None):
    """Evaluate one frame's predictions against its truth dictionary.

    ``truth`` carries ``lane_mask`` (nonzero on lane cells), optional
    ``valid``, ``lanes`` (list of ``(x, y)`` polylines), ``boundaries``
    (``[left, right]`` polylines) and the grid geometry keys ``resolution``,
    ``x_max`` and ``y_max``.
    """
    if tolerance <= 0:
        raise InvalidInput("tolerance must be positive")
    res, x_max, y_max, xs, ys, valid = _geometry(truth)
    mask = np.asarray(truth["lane_mask"]) > 0
    pred = rasterize_curves(curves, mask.shape, res, x_max, y_max, valid)
    out = {"frame": name}
    out.update(evaluate_masks(pred, mask, xs, tolerance, res, valid))

    polys = [np.asarray(p, float) for p in truth.get("lanes") or []]
    out["correct"] = None
    if polys:
        ego_truth = _truth_ego(polys, x_probe, xs)
        if ego_truth is not None:
            try:
                left, right, _ = ego_lane_and_offset(curves, x_probe=x_probe)
                fr = [_curve_matches(c, p, xs, _rows_seen(p, xs, ys, res, y_max, valid), tolerance)
                      for c, p in zip((left, right), ego_truth)]
                out["correct"] = bool(min(fr) >= ROW_FRACTION)
            except NoEgoLane:
                out["correct"] = False
    matched = 0
    for cv in curves:
        best = max((_curve_matches(cv, p, xs, _rows_seen(p, xs, ys, res, y_max, valid),
                                   tolerance, x_limit=x_max) for p in polys), default=0.0)
        matched += best > 0.5
    out["n_curves"] = len(curves)
    out["false_curves"] = len(curves) - matched

    out["correct_boundary"] = None
    tb = truth.get("boundaries")
    if tb is not None and len(tb) == 2:
        if boundaries is None:
            out["correct_boundary"] = False
        else:
            fr = [_curve_matches(c, np.asarray(p, float), xs,
                                 _rows_seen(np.asarray(p, float), xs, ys, res, y_max, valid),
                                 tolerance)
                  for c, p in zip((boundaries.left, boundaries.right), tb)]
            out["correct_boundary"] = bool(min(fr) >= ROW_FRACTION)
    out["runtime_ms"] = dict(timings) if timings else {}
    return out


def boundary_deviation(boundaries, truth, x_limit=RANGES[-1]):
    """Mean absolute lateral deviation of predicted from planted road edges.

    Averaged over the rows where each planted edge is visible, up to
    ``x_limit`` meters; rows outside a curve's support use the curve's
    extrapolation.
    """
    res, x_max, y_max, xs, ys, valid = _geometry(truth)
    devs = []
    for cv, poly in zip((boundaries.left, boundaries.right), truth["boundaries"]):
        poly = np.asarray(poly, float)
        rows = _rows_seen(poly, xs, ys, res, y_max, valid) & (xs <= x_limit)
        if rows.any():
            devs.append(np.abs(cv(xs[rows]) - _polyline_at(poly, xs[rows])))
    if not devs:
        return float("nan")
    return float(np.concatenate(devs).mean())


@dataclass
class EvalReport:
    frames: list = field(default_factory=list)
    tolerance: float = 0.3

    def add(self, frame_eval):
        self.frames.append(frame_eval)
        return self

    @property
    def aggregate(self):
        agg = {}
        for key in ["TP", "FP"] + [f"{p}_{k}" for k in RANGES for p in ("TP", "FP")]:
            agg[key] = int(sum(f[key] for f in self.frames))
        agg["PRE"] = _precision(agg["TP"], agg["FP"])
        for k in RANGES:
            agg[f"PRE_{k}"] = _precision(agg[f"TP_{k}"], agg[f"FP_{k}"])

        def rate(key):
            vals = [f[key] for f in self.frames if f.get(key) is not None]
            return sum(vals) / len(vals) if vals else None

        agg["correct_rate"] = rate("correct")
        agg["correct_boundary"] = rate("correct_boundary")
        n = sum(f["n_curves"] for f in self.frames)
        agg["false_positive_rate"] = (sum(f["false_curves"] for f in self.frames) / n) if n else None
        stages = sorted({s for f in self.frames for s in f.get("runtime_ms", {})})
        agg["runtime_ms"] = {s: float(np.mean([f["runtime_ms"][s] for f in self.frames
                                               if s in f.get("runtime_ms", {})]))
                             for s in stages}
        agg["frames"] = len(self.frames)
        return agg

    def to_dict(self):
        return {"v": 1, "tolerance_m": self.tolerance, "aggregate": self.aggregate,
                "frames": self.frames}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_table(self):
        """Aligned text table: one row per frame plus an aggregate row."""
        cols = ["frame", "TP", "FP", "PRE", "PRE_20", "PRE_30", "PRE_40", "correct",
                "boundary"]

        def fmt(v):
            if v is None:
                return "-"
            if isinstance(v, bool):
                return "yes" if v else "no"
            if isinstance(v, float):
                return f"{v:.4f}"
            return str(v)

        rows = []
        for i, f in enumerate(self.frames):
            rows.append([fmt(f.get("frame") if f.get("frame") is not None else i),
                         fmt(f["TP"]), fmt(f["FP"]), fmt(f["PRE"]), fmt(f["PRE_20"]),
                         fmt(f["PRE_30"]), fmt(f["PRE_40"]), fmt(f["correct"]),
                         fmt(f["correct_boundary"])])
        a = self.aggregate
        rows.append(["all", fmt(a["TP"]), fmt(a["FP"]), fmt(a["PRE"]), fmt(a["PRE_20"]),
                     fmt(a["PRE_30"]), fmt(a["PRE_40"]), fmt(a["correct_rate"]),
                     fmt(a["correct_boundary"])])
        widths = [max(len(c), *(len(r[i]) for r in rows)) for i, c in enumerate(cols)]
        lines = ["  ".join(c.rjust(w) for c, w in zip(cols, widths))]
        lines += ["  ".join(v.rjust(w) for v, w in zip(r, widths)) for r in rows]
        return "\n".join(lines) + "\n"


def truth_from_polylines(lanes, resolution=0.1, x_max=45.0, y_max=10.0, valid=None,
                         width=0.15):
    """Truth dictionary from lane polylines: cells within ``width / 2`` of a lane."""
    xs = grid_x_centers(resolution, x_max)
    ys = grid_y_centers(resolution, y_max)
    mask = np.zeros((xs.size, ys.size), np.uint8)
    for i, poly in enumerate(lanes):
        y = _polyline_at(np.asarray(poly, float), xs)
        near = np.abs(ys[None, :] - y[:, None]) <= max(width / 2, resolution / 2) + 1e-12
        mask[near] = i + 1
    return {"lane_mask": mask, "valid": valid, "lanes": [np.asarray(p, float) for p in lanes],
            "resolution": resolution, "x_max": x_max, "y_max": y_max}
