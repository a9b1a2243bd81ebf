"""Synthetic road scenes with exact ground truth.

The world is a flat ground plane.  A road follows a cubic centerline
``Y = Yc(X)`` in world coordinates; lane lines, shadows and obstacles are
laid out relative to it.  Frames are rendered by casting every pixel below
the horizon onto the ground with the same camera model the pipeline inverts,
so every derived check in the test-suite has an independent ground truth.

Rendering is anti-aliased analytically: each pixel integrates the scene
against a Gaussian footprint whose ground-plane extent comes from the
Jacobian of the pixel-to-ground mapping.
"""
from dataclasses import asdict, dataclass, field
import json
import math

import numpy as np
from scipy.special import ndtr

from ..errors import InvalidInput
from ..ipm import (CameraModel, X_LIMIT, grid_x_centers, grid_y_centers, pixel_to_ground,
                   sampling_map)

DEFAULT_CAMERA = CameraModel.from_degrees(h=1.55, pitch_deg=3.0, aperture_half_deg=45.0,
                                          rows=375, cols=1242)
FOOTPRINT = 0.5  # pixel footprint standard deviation, in pixels


@dataclass
class LaneSpec:
    offset: float  # lateral offset from the road centerline, m
    width: float = 0.15
    dash: tuple = None  # (on, off) lengths in m; None = solid
    color: tuple = (0.92, 0.92, 0.92)
    phase: float = 0.0


@dataclass
class ShadowBand:
    x_lo: float  # world X interval, m
    x_hi: float
    multiplier: float = 0.45


@dataclass
class Obstacle:
    x: float  # world X of the near edge, m
    offset: float  # lateral center relative to the road centerline, m
    length: float = 4.0
    width: float = 1.8
    color: tuple = (0.65, 0.12, 0.10)


@dataclass
class SceneSpec:
    camera: CameraModel = DEFAULT_CAMERA
    lanes: list = field(default_factory=list)
    centerline: tuple = (0.0, 0.0, 0.0, 0.0)  # world cubic (y0, a, b, c)
    road_half_width: float = 7.0
    shadows: list = field(default_factory=list)
    obstacles: list = field(default_factory=list)
    road_color: tuple = (0.36, 0.36, 0.37)
    grass_color: tuple = (0.24, 0.42, 0.16)
    sky_color: tuple = (0.62, 0.74, 0.92)
    road_texture: float = 0.08  # relative amplitude of world-anchored albedo texture
    grass_texture: float = 0.12
    noise_sigma: float = 0.0  # per-pixel sensor noise, [0, 1] intensity units
    forward_per_frame: float = 0.5
    drift_per_frame: float = 0.0
    lateral_offset: float = 0.0  # vehicle lateral position relative to the centerline at frame 0
    follow_heading: bool = False  # vehicle yaw tracks the road tangent
    start_x: float = 0.0
    frames: int = 1
    rng_seed: int = 0
    resolution: float = 0.1
    x_max: float = X_LIMIT
    y_max: float = 10.0

    def validate(self):
        if self.frames < 1:
            raise InvalidInput("frames must be >= 1")
        for lane in self.lanes:
            if abs(lane.offset) + lane.width / 2 > self.road_half_width:
                raise InvalidInput(f"lane at offset {lane.offset} lies outside the road")
        return self

    # -- serialization -------------------------------------------------
    def to_dict(self):
        d = asdict(self)
        cam = self.camera
        d["camera"] = {"h_m": cam.h, "pitch_deg": math.degrees(cam.theta),
                       "yaw_deg": math.degrees(cam.gamma),
                       "aperture_half_deg": math.degrees(cam.alpha),
                       "rows": cam.m, "cols": cam.n}
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise InvalidInput(f"unknown scene keys: {sorted(unknown)}")
        if "camera" in d and isinstance(d["camera"], dict):
            c = d["camera"]
            d["camera"] = CameraModel.from_degrees(c["h_m"], c["pitch_deg"],
                                                   c["aperture_half_deg"], c["rows"],
                                                   c["cols"], c.get("yaw_deg", 0.0))
        d["lanes"] = [LaneSpec(**{**x, "dash": tuple(x["dash"]) if x.get("dash") else None,
                                  "color": tuple(x.get("color", LaneSpec.color))})
                      for x in d.get("lanes", [])]
        d["shadows"] = [ShadowBand(**x) for x in d.get("shadows", [])]
        d["obstacles"] = [Obstacle(**{**x, "color": tuple(x.get("color", Obstacle.color))})
                          for x in d.get("obstacles", [])]
        for key in ("centerline", "road_color", "grass_color", "sky_color"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d).validate()

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _cubic(coef, X):
    y0, a, b, c = coef
    return y0 + X * (a + X * (b + X * c))


def _cubic_slope(coef, X):
    _, a, b, c = coef
    return a + X * (2 * b + 3 * c * X)


@dataclass
class Pose:
    X: float
    Y: float
    heading: float

    def to_world(self, x, y):
        ch, sh = math.cos(self.heading), math.sin(self.heading)
        return self.X + x * ch - y * sh, self.Y + x * sh + y * ch

    def to_vehicle(self, X, Y):
        ch, sh = math.cos(self.heading), math.sin(self.heading)
        dX, dY = X - self.X, Y - self.Y
        return dX * ch + dY * sh, -dX * sh + dY * ch


def vehicle_pose(spec, k):
    X = spec.start_x + k * spec.forward_per_frame
    Y = _cubic(spec.centerline, X) + spec.lateral_offset + k * spec.drift_per_frame
    heading = math.atan(_cubic_slope(spec.centerline, X)) if spec.follow_heading else 0.0
    return Pose(X, Y, heading)


def drift_angle(spec, k):
    """True motion direction relative to the heading between frames ``k-1`` and ``k``.

    Frame 0 uses the motion towards frame 1.
    """
    k0, k1 = (k - 1, k) if k > 0 else (0, 1)
    p0, p1 = vehicle_pose(spec, k0), vehicle_pose(spec, k1)
    dx, dy = p0.to_vehicle(p1.X, p1.Y)
    return math.atan2(dy, dx)


class _Texture:
    """World-anchored albedo texture: a sum of random plane waves."""

    def __init__(self, seed, n_waves=24, lam_min=0.2, lam_max=3.0):
        rng = np.random.default_rng([int(seed), 977])
        lam = np.exp(rng.uniform(math.log(lam_min), math.log(lam_max), n_waves))
        ang = rng.uniform(0, math.pi, n_waves)
        k = 2 * math.pi / lam
        self.kx = k * np.cos(ang)
        self.ky = k * np.sin(ang)
        self.phase = rng.uniform(0, 2 * math.pi, n_waves)
        self.scale = math.sqrt(2.0 / n_waves)  # unit standard deviation

    def __call__(self, X, Y, jac=None):
        out = np.zeros(np.shape(X))
        for kx, ky, ph in zip(self.kx, self.ky, self.phase):
            wave = np.cos(kx * X + ky * Y + ph)
            if jac is not None:
                # Gaussian footprint attenuation of the wave's pixel-space frequency
                (xr, xc), (yr, yc) = jac
                fr = kx * xr + ky * yr
                fc = kx * xc + ky * yc
                wave *= np.exp(-0.5 * FOOTPRINT ** 2 * (fr * fr + fc * fc))
            out += wave
        return out * self.scale


def _band(d, lo, hi, s):
    """Fraction of a Gaussian footprint (std ``s``) centered at ``d`` inside [lo, hi]."""
    return ndtr((hi - d) / s) - ndtr((lo - d) / s)


def _dash_coverage(X, s, on, off, phase):
    """Footprint-averaged on/off square wave along X."""
    period = on + off
    t = np.mod(X - phase, period)
    # contributions from the current dash and its neighbours
    cov = np.zeros_like(t)
    for shift in (-period, 0.0, period):
        cov += _band(t, shift, shift + on, s)
    return np.clip(cov, 0.0, 1.0)


def ground_albedo(spec, X, Y, sX=None, sY=None, jac=None, texture=True):
    """RGB albedo of world points, optionally averaged over a footprint.

    ``sX``/``sY`` are footprint standard deviations along world X and
    across the road; ``None`` means point sampling.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    tiny = 1e-6
    sX = np.full(X.shape, tiny) if sX is None else np.maximum(sX, tiny)
    sY = np.full(X.shape, tiny) if sY is None else np.maximum(sY, tiny)
    d = Y - _cubic(spec.centerline, X)
    hw = spec.road_half_width
    road_frac = _band(d, -hw, hw, sY)
    road = np.asarray(spec.road_color, dtype=float)
    grass = np.asarray(spec.grass_color, dtype=float)
    rgb = road_frac[..., None] * road + (1 - road_frac)[..., None] * grass
    if texture:
        tex_r = _Texture(spec.rng_seed)(X, Y, jac)
        tex_g = _Texture(spec.rng_seed + 1)(X, Y, jac)
        mod = 1.0 + road_frac * spec.road_texture * tex_r + (1 - road_frac) * spec.grass_texture * tex_g
        rgb = rgb * mod[..., None]
    for lane in spec.lanes:
        cov = _band(d, lane.offset - lane.width / 2, lane.offset + lane.width / 2, sY)
        if lane.dash:
            cov = cov * _dash_coverage(X, sX, lane.dash[0], lane.dash[1], lane.phase)
        rgb = rgb + cov[..., None] * (np.asarray(lane.color) - rgb)
    for ob in spec.obstacles:
        cov = (_band(X, ob.x, ob.x + ob.length, sX)
               * _band(d, ob.offset - ob.width / 2, ob.offset + ob.width / 2, sY))
        rgb = rgb + cov[..., None] * (np.asarray(ob.color) - rgb)
    for sh in spec.shadows:
        cov = _band(X, sh.x_lo, sh.x_hi, sX)
        rgb = rgb * (1.0 - cov * (1.0 - sh.multiplier))[..., None]
    return rgb


def render_scene(spec, k=0):
    """Render frame ``k``; returns ``(image_u8, truth)``.

    ``truth`` holds, on the ground grid described by the spec: ``lane_mask``
    (uint8, lane index + 1 on cells within half a paint width of a lane
    center line, dashes ignored), ``labels`` (0 road, 1 scene, 2 obstacle),
    ``valid``; plus vehicle-frame polylines ``lanes`` and ``boundaries``
    sampled at the grid row centers, the ``drift_angle`` and the ``pose``.
    """
    spec.validate()
    cam = spec.camera
    pose = vehicle_pose(spec, k)
    img = np.empty((cam.m, cam.n, 3))
    img[:] = spec.sky_color

    Ix = np.arange(1, cam.m + 1, dtype=float)
    Iy = np.arange(1, cam.n + 1, dtype=float)
    x_all, _ = pixel_to_ground(cam, Ix, np.full_like(Ix, 1.0), strict=False)
    rows = np.flatnonzero(np.isfinite(x_all) & (x_all > 0))
    if rows.size:
        r0 = rows[0]
        RR, CC = np.meshgrid(Ix[r0:], Iy, indexing="ij")
        x, y = pixel_to_ground(cam, RR, CC, strict=False)
        xr, yr = pixel_to_ground(cam, RR + 0.5, CC, strict=False)
        xl, yl = pixel_to_ground(cam, RR - 0.5, CC, strict=False)
        xc, yc = pixel_to_ground(cam, RR, CC + 0.5, strict=False)
        xd, yd = pixel_to_ground(cam, RR, CC - 0.5, strict=False)
        X, Y = pose.to_world(x, y)
        ch, sh = math.cos(pose.heading), math.sin(pose.heading)
        # Jacobian of world (X, Y) with respect to (row, col), rotated into the world frame
        dxr, dyr = xr - xl, yr - yl
        dxc, dyc = xc - xd, yc - yd
        # the upper half-step is undefined on the row just below the horizon
        dxr = np.where(np.isfinite(dxr), dxr, 1e6)
        dyr = np.where(np.isfinite(dyr), dyr, 1e6)
        Xr, Yr = dxr * ch - dyr * sh, dxr * sh + dyr * ch
        Xc, Yc = dxc * ch - dyc * sh, dxc * sh + dyc * ch
        sX = FOOTPRINT * np.hypot(Xr, Xc)
        sY = FOOTPRINT * np.hypot(Yr, Yc)
        rgb = ground_albedo(spec, X, Y, sX, sY, jac=((Xr, Xc), (Yr, Yc)))
        ground = np.isfinite(X)
        img[r0:][ground] = rgb[ground]
    if spec.noise_sigma > 0:
        rng = np.random.default_rng([int(spec.rng_seed), int(k), 31])
        img = img + rng.normal(0.0, spec.noise_sigma, img.shape)
    image = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    return image, scene_truth(spec, k, pose)


def _vehicle_polyline(spec, pose, lateral, xs):
    """Vehicle-frame ``y`` of the world curve ``Yc(X) + lateral`` at vehicle ``x`` values."""
    span = np.linspace(pose.X - 10.0, pose.X + spec.x_max + 20.0, 4000)
    vx, vy = pose.to_vehicle(span, _cubic(spec.centerline, span) + lateral)
    order = np.argsort(vx)
    return np.interp(xs, vx[order], vy[order], left=np.nan, right=np.nan)


def scene_truth(spec, k=0, pose=None):
    pose = pose or vehicle_pose(spec, k)
    res = spec.resolution
    xs = grid_x_centers(res, spec.x_max)
    ys = grid_y_centers(res, spec.y_max)
    Xv, Yv = np.meshgrid(xs, ys, indexing="ij")
    X, Y = pose.to_world(Xv, Yv)
    d = Y - _cubic(spec.centerline, X)
    lane_mask = np.zeros(Xv.shape, np.uint8)
    for i, lane in enumerate(spec.lanes):
        lane_mask[np.abs(d - lane.offset) <= lane.width / 2 + 1e-12] = i + 1
    labels = np.where(np.abs(d) <= spec.road_half_width, 0, 1).astype(np.uint8)
    for ob in spec.obstacles:
        inside = (X >= ob.x) & (X <= ob.x + ob.length) & (np.abs(d - ob.offset) <= ob.width / 2)
        labels[inside] = 2
    _, valid = sampling_map(spec.camera, res, spec.x_max, spec.y_max)
    lanes = [np.column_stack([xs, _vehicle_polyline(spec, pose, ln.offset, xs)]) for ln in spec.lanes]
    hw = spec.road_half_width
    boundaries = [np.column_stack([xs, _vehicle_polyline(spec, pose, side * hw, xs)])
                  for side in (1.0, -1.0)]
    return {"lane_mask": lane_mask, "labels": labels, "valid": valid.copy(), "lanes": lanes,
            "boundaries": boundaries, "drift_angle": drift_angle(spec, k), "pose": pose,
            "resolution": res, "x_max": spec.x_max, "y_max": spec.y_max}


def rasterize_ground(spec, k=0):
    """Point-sampled ground albedo on the truth grid, as luma in [0, 1]."""
    pose = vehicle_pose(spec, k)
    xs = grid_x_centers(spec.resolution, spec.x_max)
    ys = grid_y_centers(spec.resolution, spec.y_max)
    Xv, Yv = np.meshgrid(xs, ys, indexing="ij")
    X, Y = pose.to_world(Xv, Yv)
    rgb = ground_albedo(spec, X, Y)
    return np.clip(rgb, 0, 1) @ np.array([0.299, 0.587, 0.114])


# -- scene presets -----------------------------------------------------------

def four_lane_markings(dashed=True):
    dash = (3.0, 3.0) if dashed else None
    return [LaneSpec(-5.25, dash=dash, phase=1.0), LaneSpec(-1.75, dash=dash),
            LaneSpec(1.75, dash=None), LaneSpec(5.25, dash=dash, phase=2.0)]


def benchmark_scene(index, frames=1, noise_sigma=0.02, seed=None):
    """One member of the mixed straight/curved evaluation set.

    Even indices are straight roads, odd ones curved; all have dashed
    markings and a pair of shadow bands.
    """
    rng = np.random.default_rng([index, 4242] if seed is None else [seed, index])
    curved = index % 2 == 1
    b = rng.uniform(0.0015, 0.004) * rng.choice([-1, 1]) if curved else 0.0
    c = rng.uniform(-2e-5, 2e-5) if curved else 0.0
    start = rng.uniform(0, 20)
    shadows = []
    for _ in range(2):
        lo = start + rng.uniform(5, 40)
        shadows.append(ShadowBand(lo, lo + rng.uniform(1.5, 5.0), rng.uniform(0.35, 0.6)))
    return SceneSpec(lanes=four_lane_markings(), centerline=(0.0, 0.0, b, c),
                     shadows=shadows, noise_sigma=noise_sigma, start_x=start,
                     lateral_offset=rng.uniform(-0.4, 0.4), follow_heading=curved,
                     frames=frames, rng_seed=int(rng.integers(1 << 30)))


def unmarked_scene(index, noise_sigma=0.02):
    """Road without paint, possibly curved, with an obstacle on it."""
    rng = np.random.default_rng([index, 777])
    b = rng.uniform(-0.003, 0.003)
    start = rng.uniform(0, 20)
    return SceneSpec(lanes=[], centerline=(0.0, 0.0, b, 0.0),
                     road_half_width=rng.uniform(3.0, 4.5),
                     obstacles=[Obstacle(start + rng.uniform(12, 30), rng.uniform(-1.5, 1.5))],
                     noise_sigma=noise_sigma, start_x=start, follow_heading=True,
                     lateral_offset=rng.uniform(-0.5, 0.5), rng_seed=int(rng.integers(1 << 30)))


def drift_sequence(frames=20, lateral_per_meter=0.01, noise_sigma=0.02, seed=11):
    """Straight road; the vehicle slides left by ``lateral_per_meter`` per meter driven."""
    fwd = 0.5
    return SceneSpec(lanes=four_lane_markings(), centerline=(0.0, 0.0, 0.0, 0.0),
                     shadows=[ShadowBand(18.0, 21.0, 0.5)], noise_sigma=noise_sigma,
                     forward_per_frame=fwd, drift_per_frame=lateral_per_meter * fwd,
                     frames=frames, rng_seed=seed)


def curved_sequence(frames=20, half_curvature=0.015, noise_sigma=0.02, seed=12):
    """Vehicle following a tightly curved road at the lane center, no drift.

    The heading turns with the road, so the ground slides sideways in the
    bird's-eye view even though the vehicle stays in its lane.
    """
    return SceneSpec(lanes=four_lane_markings(), centerline=(0.0, 0.0, half_curvature, 0.0),
                     noise_sigma=noise_sigma, forward_per_frame=0.5, follow_heading=True,
                     frames=frames, rng_seed=seed)
