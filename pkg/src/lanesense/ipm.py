"""Inverse perspective mapping from extrinsic camera parameters only.

Pixel coordinates follow the 1-based convention of the mapping: ``Ix`` is the
row (1 at the top, ``m`` at the bottom) and ``Iy`` the column (1 at the left,
``n`` at the right).  Ground coordinates are meters in the vehicle frame:
``x`` forward from the camera foot point, ``y`` lateral with positive values
to the left of the optical axis.

Only the camera height, pitch, yaw, the diagonal half-aperture and the image
size enter the model; no focal length or principal point is needed because
the image plane is parametrized by the normalized offsets
``u = 1 - 2 (Ix - 1) / (m - 1)`` and ``v = 1 - 2 (Iy - 1) / (n - 1)``, which
scale ``tan(delta)`` and ``tan(omega)`` respectively.
"""
from dataclasses import dataclass
from functools import lru_cache
import math
from pathlib import Path

import numpy as np
from scipy.ndimage import map_coordinates

from .errors import (AboveHorizon, BehindCamera, ConfigError, EmptyGrid,
                     InvalidInput, NonFinite)

X_LIMIT = 45.0  # meters; beyond this the flat-ground mapping is not trusted
DENOM_EPS = 1e-12


@dataclass(frozen=True)
class CameraModel:
    """Extrinsic camera description.

    Angles are in radians.  ``cx``/``cy`` locate the camera in the car frame
    and are carried as metadata only.
    """
    h: float
    theta: float
    alpha: float
    m: int
    n: int
    gamma: float = 0.0
    cx: float = 0.0
    cy: float = 0.0

    def __post_init__(self):
        if not self.h > 0:
            raise InvalidInput(f"camera height must be positive, got {self.h}")
        if not 0 < self.alpha < math.pi / 2:
            raise InvalidInput(f"half-aperture must be in (0, pi/2), got {self.alpha}")
        if not 0 < self.theta < math.pi / 2:
            raise InvalidInput(f"pitch must be in (0, pi/2), got {self.theta}")
        if int(self.m) < 2 or int(self.n) < 2:
            raise InvalidInput("image must have at least 2 rows and 2 columns")

    @classmethod
    def from_degrees(cls, h, pitch_deg, aperture_half_deg, rows, cols, yaw_deg=0.0,
                     cx=0.0, cy=0.0):
        return cls(h=float(h), theta=math.radians(pitch_deg),
                   alpha=math.radians(aperture_half_deg), m=int(rows), n=int(cols),
                   gamma=math.radians(yaw_deg), cx=float(cx), cy=float(cy))

    @property
    def shape(self):
        return (self.m, self.n)


def half_apertures(cam):
    """Row and column decomposition ``(delta, omega)`` of the half-aperture."""
    diag = math.hypot(cam.m - 1, cam.n - 1)
    t = math.tan(cam.alpha)
    return math.atan((cam.m - 1) / diag * t), math.atan((cam.n - 1) / diag * t)


def _horizon_raw(cam):
    delta, _ = half_apertures(cam)
    return 1.0 + 0.5 * (cam.m - 1) * (1.0 - math.tan(cam.theta) / math.tan(delta))


def horizon_row(cam):
    """First image row (1-based, fractional) of the ground-plane singularity.

    Rows at or above the returned value see the sky and are excluded from the
    mapping.  When the pitch exceeds the row half-aperture the whole image is
    below the horizon and 1.0 is returned.
    """
    return max(_horizon_raw(cam), 1.0)


def row_denominator(cam, Ix):
    """Denominator of the longitudinal mapping; it vanishes at the horizon."""
    delta, _ = half_apertures(cam)
    u = 1.0 - 2.0 * (np.asarray(Ix, dtype=float) - 1.0) / (cam.m - 1)
    return math.tan(cam.theta) - u * math.tan(delta)


def _rotate(x, y, angle):
    if angle == 0.0:
        return x, y
    c, s = math.cos(angle), math.sin(angle)
    return x * c - y * s, x * s + y * c


def pixel_to_ground(cam, Ix, Iy, strict=True):
    """Map 1-based pixel coordinates to ground-plane meters ``(x, y)``.

    Accepts scalars or broadcastable arrays.  With ``strict=False`` pixels on
    or above the horizon yield NaN instead of raising.
    """
    Ix = np.asarray(Ix, dtype=float)
    Iy = np.asarray(Iy, dtype=float)
    delta, omega = half_apertures(cam)
    td, tw, tt = math.tan(delta), math.tan(omega), math.tan(cam.theta)
    st, ct = math.sin(cam.theta), math.cos(cam.theta)
    u = 1.0 - 2.0 * (Ix - 1.0) / (cam.m - 1)
    v = 1.0 - 2.0 * (Iy - 1.0) / (cam.n - 1)
    den_x = tt - u * td
    den_y = st - u * td * ct
    below = Ix > horizon_row(cam)
    if strict:
        if not np.all(below):
            raise AboveHorizon(f"row(s) at or above horizon row {horizon_row(cam):.6f}")
        if np.any(np.abs(den_x) < DENOM_EPS):
            raise NonFinite("mapping denominator vanished")
    with np.errstate(divide="ignore", invalid="ignore"):
        x = cam.h * (1.0 + u * td * tt) / den_x
        y = cam.h * v * tw / den_y
    if not strict:
        bad = ~below | (np.abs(den_x) < DENOM_EPS)
        x = np.where(bad, np.nan, x)
        y = np.where(bad, np.nan, y)
    x, y = _rotate(x, y, cam.gamma)
    if x.ndim == 0:
        return float(x), float(y)
    return x, y


def ground_to_pixel(cam, x, y, strict=True):
    """Closed-form inverse of :func:`pixel_to_ground`; returns float ``(Ix, Iy)``."""
    x, y = _rotate(np.asarray(x, dtype=float), np.asarray(y, dtype=float), -cam.gamma)
    if strict and np.any(x <= 0):
        raise BehindCamera("ground point at or behind the camera plane")
    delta, omega = half_apertures(cam)
    td, tw, tt = math.tan(delta), math.tan(omega), math.tan(cam.theta)
    with np.errstate(divide="ignore", invalid="ignore"):
        # s = u * tan(delta) is the tangent of the ray elevation relative to the optical axis
        s = (x * tt - cam.h) / (x + cam.h * tt)
        Ix = 1.0 + 0.5 * (cam.m - 1) * (1.0 - s / td)
        v = y * (math.sin(cam.theta) - s * math.cos(cam.theta)) / (cam.h * tw)
        Iy = 1.0 + 0.5 * (cam.n - 1) * (1.0 - v)
    if not strict:
        Ix = np.where(x > 0, Ix, np.nan)
        Iy = np.where(x > 0, Iy, np.nan)
    if Ix.ndim == 0:
        return float(Ix), float(Iy)
    return Ix, Iy


@dataclass
class IpmGrid:
    """Bird's-eye raster of the ground plane.

    Row 0 is the far edge (``x`` close to ``x_max``) and column 0 the left
    edge (``y`` close to ``+y_max``), so the raster reads like a top view with
    the vehicle at the bottom center.
    """
    cells: np.ndarray
    valid: np.ndarray
    resolution: float
    x_max: float
    y_max: float
    x_min: float = 0.0

    @property
    def shape(self):
        return self.valid.shape

    @property
    def x_centers(self):
        return grid_x_centers(self.resolution, self.x_max, self.x_min)

    @property
    def y_centers(self):
        return grid_y_centers(self.resolution, self.y_max)

    def to_ground(self, row, col):
        """Cell (fractional) indices to ground meters."""
        row = np.asarray(row, dtype=float)
        col = np.asarray(col, dtype=float)
        return self.x_max - (row + 0.5) * self.resolution, self.y_max - (col + 0.5) * self.resolution

    def to_cell(self, x, y):
        """Ground meters to fractional cell indices (inverse of :meth:`to_ground`)."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return (self.x_max - x) / self.resolution - 0.5, (self.y_max - y) / self.resolution - 0.5

    def like(self, cells):
        """Same geometry, different cell contents."""
        return IpmGrid(cells, self.valid, self.resolution, self.x_max, self.y_max, self.x_min)


def grid_x_centers(resolution, x_max, x_min=0.0):
    rows = int(round((x_max - x_min) / resolution))
    return x_max - (np.arange(rows) + 0.5) * resolution


def grid_y_centers(resolution, y_max):
    cols = int(round(2 * y_max / resolution))
    return y_max - (np.arange(cols) + 0.5) * resolution


@lru_cache(maxsize=16)
def _sampling_map(cam, resolution, x_max, y_max, x_min):
    xs = grid_x_centers(resolution, x_max, x_min)
    ys = grid_y_centers(resolution, y_max)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    Ix, Iy = ground_to_pixel(cam, X, Y, strict=False)
    hz = horizon_row(cam)
    valid = (np.isfinite(Ix) & np.isfinite(Iy) & (Ix > hz) & (Ix >= 1.0) & (Ix <= cam.m)
             & (Iy >= 1.0) & (Iy <= cam.n))
    coords = np.stack([np.where(valid, Ix - 1.0, 0.0), np.where(valid, Iy - 1.0, 0.0)])
    coords.setflags(write=False)
    valid.setflags(write=False)
    return coords, valid


def sampling_map(cam, resolution=0.1, x_max=X_LIMIT, y_max=10.0, x_min=0.0):
    """0-based source coordinates ``(2, rows, cols)`` and validity for a grid."""
    if resolution <= 0:
        raise InvalidInput("resolution must be positive")
    if x_max > X_LIMIT + 1e-9:
        raise InvalidInput(f"x_max {x_max} exceeds the {X_LIMIT} m validity bound")
    return _sampling_map(cam, float(resolution), float(x_max), float(y_max), float(x_min))


def build_ipm(cam, img, resolution=0.1, x_max=X_LIMIT, y_max=10.0, order=1, fill=0.0):
    """Resample ``img`` onto a ground-plane grid.

    ``order=1`` is bilinear, ``order=0`` nearest-neighbor (for label planes).
    A 3-D ``img`` is resampled channel by channel.  Invalid cells (outside the
    image or at/above the horizon) are set to ``fill``.
    """
    img = np.asarray(img)
    if img.shape[:2] != cam.shape:
        raise InvalidInput(f"image shape {img.shape[:2]} does not match camera {cam.shape}")
    coords, valid = sampling_map(cam, resolution, x_max, y_max)
    if not valid.any():
        raise EmptyGrid("no grid cell maps inside the image")

    def sample(plane):
        out = map_coordinates(plane.astype(float, copy=False), coords, order=order,
                              mode="nearest", prefilter=False)
        out[~valid] = fill
        return out

    if img.ndim == 3:
        cells = np.stack([sample(img[..., k]) for k in range(img.shape[2])], axis=-1)
    else:
        cells = sample(img)
    return IpmGrid(cells, valid, float(resolution), float(x_max), float(y_max))


_CAMERA_KEYS = {"h_m", "pitch_deg", "yaw_deg", "aperture_half_deg", "rows", "cols"}
_CAMERA_OPTIONAL = {"cx_m", "cy_m"}


def parse_camera(text, source="<camera>"):
    """Parse the flat ``key = value`` camera file format."""
    values = {}
    for line_no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            key, _, val = line.partition("=")
        elif ":" in line:
            key, _, val = line.partition(":")
        else:
            raise ConfigError(f"{source}:{line_no}: expected 'key = value'")
        key = key.strip()
        if key not in _CAMERA_KEYS | _CAMERA_OPTIONAL:
            raise ConfigError(f"{source}:{line_no}: unknown camera key {key!r}")
        try:
            values[key] = float(val)
        except ValueError:
            raise ConfigError(f"{source}:{line_no}: {key} is not a number") from None
    missing = sorted(_CAMERA_KEYS - values.keys())
    if missing:
        raise ConfigError(f"{source}: missing camera key {missing[0]!r}")
    try:
        return CameraModel.from_degrees(
            values["h_m"], values["pitch_deg"], values["aperture_half_deg"],
            int(values["rows"]), int(values["cols"]), values["yaw_deg"],
            values.get("cx_m", 0.0), values.get("cy_m", 0.0))
    except InvalidInput as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_camera(path):
    path = Path(path)
    return parse_camera(path.read_text(), str(path))


def format_camera(cam):
    return (f"h_m = {cam.h!r}\n"
            f"pitch_deg = {math.degrees(cam.theta)!r}\n"
            f"yaw_deg = {math.degrees(cam.gamma)!r}\n"
            f"aperture_half_deg = {math.degrees(cam.alpha)!r}\n"
            f"rows = {cam.m}\n"
            f"cols = {cam.n}\n"
            f"cx_m = {cam.cx!r}\n"
            f"cy_m = {cam.cy!r}\n")


def save_camera(path, cam):
    Path(path).write_text(format_camera(cam))
