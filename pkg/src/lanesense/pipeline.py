"""Per-frame lane detection: preprocessing, IPM, features, lanes, road boundary."""
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
import math
import time

import numpy as np
from scipy.ndimage import binary_dilation

from .departure import departure_angle, estimate_flow, warn
from .errors import InsufficientFlow, LaneSenseError, NoEgoLane, NoModel, NoRoad
from .filters import extract_features, make_bank
from .imgcore import illuminant_invariant, lab_features, rgb_to_lab
from .ipm import build_ipm
from .lanes import ego_lane_and_offset, fit_lanes, frame_record, interpolate_gaps
from .segmentation import (ROAD, classify, em_refine, extract_boundaries, read_stats,
                           suppress_thin)


@lru_cache(maxsize=1)
def default_gmm():
    with resources.as_file(resources.files("lanesense") / "data" / "default_gmm.txt") as p:
        return read_stats(p)


@lru_cache(maxsize=8)
def _gmm_from(path):
    return read_stats(path)


@lru_cache(maxsize=4)
def _bank(sigma, sign_convention):
    return make_bank(sigma, sign_convention=sign_convention)


@dataclass
class FrameResult:
    curves: list
    offset: float = None
    boundaries: object = None
    grid: object = field(default=None, repr=False)  # invariant-plane IpmGrid
    labels: np.ndarray = field(default=None, repr=False)
    features: object = field(default=None, repr=False)
    timings: dict = field(default_factory=dict)
    ego: tuple = None


def preprocess(image, cfg):
    """Ground grids of the invariant plane and of the segmentation features.

    The color frame is resampled onto the ground grid first, so the local
    statistics of the invariant plane are taken over a fixed ground area.
    """
    g = cfg.grid
    rgb = build_ipm(cfg.camera, image, g.resolution, g.x_max, g.y_max)
    lab = rgb_to_lab(np.clip(rgb.cells, 0.0, 255.0))
    inv = illuminant_invariant(lab, valid=rgb.valid)
    feat = lab_features(lab, inv)
    return rgb.like(inv), feat


def segment_grid(model, feat_grid, valid, params):
    """EM-refine ``model`` on a strided subsample of valid cells, then label every cell."""
    sub = valid[::params.em_stride, ::params.em_stride]
    samples = feat_grid[::params.em_stride, ::params.em_stride][sub]
    if params.em_max_iters > 0 and samples.shape[0] >= 3:
        model, _ = em_refine(model, samples, params.em_max_iters, params.em_rel_tol)
    labels = classify(model, feat_grid, valid)
    labels = suppress_thin(labels, model, feat_grid, size=params.obstacle_min_size)
    return labels, model


def detect_frame(image, cfg, name=None):
    """Run the single-frame pipeline on an RGB uint8 frame."""
    g = cfg.grid
    timings = {}
    t0 = time.perf_counter()
    grid, feat_grid = preprocess(image, cfg)
    t2 = time.perf_counter()
    timings["ipm_ms"] = 1e3 * (t2 - t0)

    labels = boundaries = road = None
    if cfg.segment.enabled:
        model = _gmm_from(cfg.gmm_stats) if cfg.gmm_stats else default_gmm()
        labels, _ = segment_grid(model, feat_grid, grid.valid, cfg.segment)
        try:
            boundaries = extract_boundaries(labels, grid, cfg.ransac, cfg.segment.min_run)
        except (NoRoad, NoModel):
            boundaries = None
        if cfg.segment.road_margin is not None:
            road = labels == ROAD
            if road.any():
                m = int(round(cfg.segment.road_margin / g.resolution))
                road = binary_dilation(road, iterations=m) if m > 0 else road
            else:
                road = None
    t3 = time.perf_counter()
    timings["segment_ms"] = 1e3 * (t3 - t2)

    bank = _bank(cfg.filter.sigma, cfg.filter.sign_convention)
    pts = extract_features(grid, cfg.filter, bank)
    if road is not None and len(pts):
        rows, cols = grid.to_cell(pts.x, pts.y)
        pts = pts.subset(road[np.rint(rows).astype(int), np.rint(cols).astype(int)])
    if cfg.interp.enabled:
        pts = interpolate_gaps(pts, cfg.interp.max_gap, cfg.filter.phi_max_deg,
                               step=g.resolution, lateral_tol=cfg.interp.lateral_tol)
    t4 = time.perf_counter()
    timings["features_ms"] = 1e3 * (t4 - t3)

    curves = fit_lanes(pts, cfg.ransac, y_max=g.y_max)
    try:
        left, right, offset = ego_lane_and_offset(curves, x_probe=cfg.x_probe)
        ego = (left, right)
    except NoEgoLane:
        offset, ego = None, None
    timings["lanes_ms"] = 1e3 * (time.perf_counter() - t4)
    return FrameResult(curves, offset, boundaries, grid, labels, pts, timings, ego)


def frame_departure(prev_grid, result, cfg):
    """Departure estimate between the previous and current invariant grids."""
    valid = prev_grid.valid & result.grid.valid
    flow = estimate_flow(prev_grid.cells, result.grid.cells, cfg.flow.grid_step,
                         cfg.flow.window, valid=valid, max_shift=cfg.flow.max_shift)
    try:
        lam = departure_angle(flow)
    except InsufficientFlow:
        return None
    return warn(lam, result.ego, cfg.departure,
                lateral_offset=result.offset if result.offset is not None else float("nan"))


def result_record(name, result, departure=None, timings=False):
    extra = {}
    if result.boundaries is not None:
        extra["boundaries"] = {"left": result.boundaries.left.to_dict(),
                               "right": result.boundaries.right.to_dict()}
    else:
        extra["boundaries"] = None
    if departure is not None:
        extra["departure"] = departure.to_dict()
    if timings:
        extra["timings"] = {k: round(v, 3) for k, v in result.timings.items()}
    return frame_record(name, result.curves, result.offset, **extra)


def detect_sequence(frames, cfg, departure=True):
    """Generator of ``(name, FrameResult, DepartureEstimate | None)`` over ordered frames."""
    prev = None
    for name, image in frames:
        res = detect_frame(image, cfg, name)
        dep = frame_departure(prev, res, cfg) if (departure and prev is not None) else None
        prev = res.grid
        yield name, res, dep
