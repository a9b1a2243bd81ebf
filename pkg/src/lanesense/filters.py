"""Steerable second/fourth-order Gaussian-derivative filters.

Kernels are indexed ``K[r, c]`` with the column offset ``x = c - radius`` and
the row offset ``y = r - radius``, so ``G2x`` responds to vertical
structures.  Angles follow the screen convention: angle 0 is the column axis
and angles grow counter-clockwise on screen (towards decreasing row index).
"""
from dataclasses import dataclass, field
import math

import numpy as np
from scipy.ndimage import binary_erosion, convolve, convolve1d

from .errors import InvalidInput

KERNEL_NAMES = ("G2x", "Gxy", "G2y", "G4x", "G4y")
SIGN_CONVENTIONS = ("corrected", "as_printed")


def _factors_1d(sigma, radius, sign_convention):
    t = np.arange(-radius, radius + 1, dtype=float)
    g = np.exp(-t * t / sigma ** 2)
    d1 = 2.0 * t / sigma ** 2 * g
    d2 = (4.0 * t ** 2 / sigma ** 4 - 2.0 / sigma ** 2) * g
    c4 = 12.0 if sign_convention == "corrected" else -12.0
    d4 = (16.0 * t ** 4 / sigma ** 8 - 48.0 * t ** 2 / sigma ** 6 + c4 / sigma ** 4) * g
    if sign_convention == "corrected":
        # Truncation leaves a small DC term on the even derivatives; remove it
        # with a multiple of the Gaussian so the kernels annihilate constants.
        d2 = d2 - d2.sum() / g.sum() * g
        d4 = d4 - d4.sum() / g.sum() * g
    return g, d1, d2, d4


@dataclass(frozen=True)
class FilterBank:
    """Sampled Gaussian-derivative kernels with their separable factors.

    ``factors[name]`` is ``(along_x, along_y)``: the 1-D kernel applied along
    the column axis and the one applied along the row axis.  The dense kernel
    is exactly ``np.outer(along_y, along_x)``.
    """
    sigma: float
    radius: int
    sign_convention: str
    factors: dict = field(repr=False)

    def kernel(self, name):
        fx, fy = self.factors[name]
        return np.outer(fy, fx)

    @property
    def kernels(self):
        return {name: self.kernel(name) for name in KERNEL_NAMES}


def make_bank(sigma=2.0, radius=None, sign_convention="corrected"):
    """Build the five-kernel bank at scale ``sigma``.

    ``radius`` defaults to ``ceil(4 sigma)`` and must be at least
    ``ceil(3 sigma)``.  ``sign_convention="as_printed"`` keeps the
    ``-12/sigma^4`` constant term of the fourth-order kernels instead of the
    analytic ``+12/sigma^4`` and skips the DC correction.
    """
    if not sigma > 0:
        raise InvalidInput("sigma must be positive")
    if radius is None:
        radius = math.ceil(4 * sigma)
    if radius < math.ceil(3 * sigma):
        raise InvalidInput(f"radius {radius} < ceil(3 sigma) = {math.ceil(3 * sigma)}")
    if sign_convention not in SIGN_CONVENTIONS:
        raise InvalidInput(f"unknown sign convention {sign_convention!r}")
    g, d1, d2, d4 = _factors_1d(float(sigma), int(radius), sign_convention)
    factors = {
        "G2x": (d2, g),
        "Gxy": (d1, d1),
        "G2y": (g, d2),
        "G4x": (d4, g),
        "G4y": (g, d4),
        "G1x": (d1, g),
        "G1y": (g, d1),
    }
    for fx, fy in factors.values():
        fx.setflags(write=False)
        fy.setflags(write=False)
    return FilterBank(float(sigma), int(radius), sign_convention, factors)


def convolve_separable(plane, bank, name):
    """Convolve with kernel ``name`` as two 1-D passes (symmetric reflection at borders)."""
    fx, fy = bank.factors[name]
    tmp = convolve1d(np.asarray(plane, dtype=float), fx, axis=1, mode="reflect")
    return convolve1d(tmp, fy, axis=0, mode="reflect")


def convolve_dense(plane, bank, name):
    """Reference 2-D convolution with the full kernel."""
    return convolve(np.asarray(plane, dtype=float), bank.kernel(name), mode="reflect")


def steer_order2(responses, angle):
    """Second-derivative response along direction ``angle``.

    ``responses`` holds the ``G2x``, ``Gxy``, ``G2y`` planes (mapping or
    3-tuple in that order); ``angle`` may be a scalar or a per-pixel array.
    """
    if isinstance(responses, dict):
        a, b, c = responses["G2x"], responses["Gxy"], responses["G2y"]
    else:
        a, b, c = responses
    cs, sn = np.cos(angle), np.sin(angle)
    return cs * cs * a + sn * sn * c - 2.0 * sn * cs * b


def extremal_orientation(a, b, c):
    """Angle of the most negative steered response and the two extreme values.

    Returns ``(theta_min, r_min, r_max)``; the most positive response lies at
    ``theta_min + pi/2``.
    """
    mean = 0.5 * (a + c)
    amp = np.hypot(0.5 * (a - c), b)
    theta = 0.5 * np.arctan2(2.0 * b, c - a)
    return theta, mean - amp, mean + amp


def _wrap_half_pi(angle):
    """Wrap an undirected orientation to [-pi/2, pi/2)."""
    return (np.asarray(angle) + np.pi / 2) % np.pi - np.pi / 2


@dataclass
class FeatureParams:
    sigma: float = 2.0
    w2: float = 1.0
    w4: float = 0.5
    k: float = 2.0
    phi_max_deg: float = 30.0
    rel_floor: float = 0.1
    edge_ratio: float = 0.35  # reject cells whose first-derivative response exceeds this x sigma |R2|
    polarity: str = "bright"  # "bright" keeps light-on-dark ridges only, "any" keeps both
    sign_convention: str = "corrected"
    lane_axis: str = "vertical"  # lanes run along grid rows ("vertical") or columns

    def validate(self):
        if self.polarity not in ("bright", "any"):
            raise InvalidInput(f"polarity must be 'bright' or 'any', got {self.polarity!r}")
        if self.lane_axis not in ("vertical", "horizontal"):
            raise InvalidInput(f"lane_axis must be 'vertical' or 'horizontal'")
        if not 0 < self.phi_max_deg <= 90:
            raise InvalidInput("phi_max_deg must be in (0, 90]")
        if self.k < 0 or self.w2 < 0 or self.w4 < 0:
            raise InvalidInput("weights and k must be non-negative")
        make_bank(self.sigma, sign_convention=self.sign_convention)
        return self


@dataclass
class FeaturePointSet:
    """Lane-marking feature points on a ground grid.

    ``orientation`` is the local marking direction in the ground frame,
    measured from the forward axis towards +y, wrapped to [-pi/2, pi/2).
    ``cross_response`` is the second-derivative response across the other
    grid axis; it carries the markings suppressed by the orientation gate.
    """
    x: np.ndarray
    y: np.ndarray
    strength: np.ndarray
    orientation: np.ndarray
    interpolated: np.ndarray = None
    grid: object = field(default=None, repr=False)
    cross_response: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.interpolated is None:
            self.interpolated = np.zeros(len(self.x), dtype=bool)

    def __len__(self):
        return len(self.x)

    @classmethod
    def empty(cls, grid=None):
        z = np.zeros(0)
        return cls(z, z.copy(), z.copy(), z.copy(), np.zeros(0, dtype=bool), grid)

    def subset(self, index):
        return FeaturePointSet(self.x[index], self.y[index], self.strength[index],
                               self.orientation[index], self.interpolated[index],
                               self.grid, self.cross_response)

    def xy(self):
        return np.column_stack([self.x, self.y])


def ridge_map(plane, valid, params=None, bank=None):
    """Combined ridge strength, orientation gate and per-line thresholds on a plane.

    Returns a dict with ``strength`` (combined response after polarity and
    validity masking), ``theta`` (per-cell normal angle), ``keep`` (boolean
    mask of retained ridge cells after thresholding, orientation gating and
    non-maximum suppression) and ``cross`` (response across the other axis).
    """
    params = params or FeatureParams()
    bank = bank or make_bank(params.sigma, sign_convention=params.sign_convention)
    plane = np.asarray(plane, dtype=float)
    valid = np.asarray(valid, dtype=bool)
    vertical = params.lane_axis == "vertical"
    if not vertical:
        plane, valid = plane.T, valid.T

    work = plane.copy()
    if valid.any():
        work[~valid] = plane[valid].mean()
    a = convolve_separable(work, bank, "G2x")
    b = convolve_separable(work, bank, "Gxy")
    c = convolve_separable(work, bank, "G2y")
    r4 = convolve_separable(work, bank, "G4x")
    theta, r_min, r_max = extremal_orientation(a, b, c)
    if params.polarity == "bright":
        r2 = r_min
        polar_ok = r_min < 0
    else:
        use_min = np.abs(r_min) >= np.abs(r_max)
        r2 = np.where(use_min, r_min, r_max)
        theta = np.where(use_min, theta, theta + np.pi / 2)
        polar_ok = np.ones_like(valid)
    strength = params.w2 * np.abs(r2) + params.w4 * np.abs(r4)
    if params.edge_ratio:
        # a ridge has no first-derivative response across its center; a step edge does
        gx = convolve_separable(work, bank, "G1x")
        gy = convolve_separable(work, bank, "G1y")
        r1 = np.abs(np.cos(theta) * gx - np.sin(theta) * gy)
        polar_ok = polar_ok & (r1 <= params.edge_ratio * params.sigma * np.abs(r2))

    inner = binary_erosion(valid, iterations=max(1, int(math.ceil(2 * params.sigma))),
                           border_value=0) if valid.any() else valid
    strength = np.where(inner & polar_ok, strength, 0.0)

    # per-line adaptive threshold over usable cells
    counts = inner.sum(axis=1)
    safe = np.maximum(counts, 1)
    mean = np.where(inner, strength, 0.0).sum(axis=1) / safe
    var = np.where(inner, (strength - mean[:, None]) ** 2, 0.0).sum(axis=1) / safe
    thresh = mean + params.k * np.sqrt(var)
    floor = params.rel_floor * strength.max(initial=0.0)
    above = (strength > thresh[:, None]) & (strength > floor) & (counts[:, None] > 0)

    gate = np.abs(_wrap_half_pi(theta)) <= math.radians(params.phi_max_deg)
    cand = above & gate
    gated = np.where(cand, strength, 0.0)
    left = np.pad(gated, ((0, 0), (1, 0)))[:, :-1]
    right = np.pad(gated, ((0, 0), (0, 1)))[:, 1:]
    keep = cand & (gated >= left) & (gated > right)

    out = {"strength": strength, "theta": theta, "keep": keep, "cross": c, "gated": gated}
    if not vertical:
        out = {k: v.T for k, v in out.items()}
        # screen angle measured in the transposed frame -> original frame
        out["theta"] = -out["theta"] - np.pi / 2
    return out


def extract_features(grid, params=None, bank=None):
    """Lane-marking points from a ground grid (``IpmGrid``).

    Combined strength is ``w2 |R2| + w4 |R4|`` where ``R2`` is the
    second-order response steered across the local ridge and ``R4`` the
    axis-aligned fourth-order response.  A cell is kept when it exceeds
    ``mean + k std`` of its grid row and a small fraction of the global
    maximum, its ridge runs within ``phi_max`` of the lane axis, and it is a
    local maximum along the row.  Lateral positions are refined to sub-cell
    precision with a parabola through the row neighbors.
    """
    params = params or FeatureParams()
    if not grid.valid.any():
        return FeaturePointSet.empty(grid)
    res = ridge_map(grid.cells, grid.valid, params, bank)
    keep = res["keep"]
    rows, cols = np.nonzero(keep)
    if rows.size == 0:
        out = FeaturePointSet.empty(grid)
        out.cross_response = res["cross"]
        return out
    g = res["gated"]
    offset = np.zeros(rows.size)
    if params.lane_axis == "vertical":
        inside = (cols > 0) & (cols < g.shape[1] - 1)
        r, c = rows[inside], cols[inside]
        sl, s0, sr = g[r, c - 1], g[r, c], g[r, c + 1]
    else:
        inside = (rows > 0) & (rows < g.shape[0] - 1)
        r, c = rows[inside], cols[inside]
        sl, s0, sr = g[r - 1, c], g[r, c], g[r + 1, c]
    den = sl - 2.0 * s0 + sr
    with np.errstate(divide="ignore", invalid="ignore"):
        d = np.where(den < 0, 0.5 * (sl - sr) / den, 0.0)
    offset[inside] = np.clip(d, -0.5, 0.5)
    if params.lane_axis == "vertical":
        x, y = grid.to_ground(rows, cols + offset)
    else:
        x, y = grid.to_ground(rows + offset, cols)
    theta = res["theta"][rows, cols]
    return FeaturePointSet(x=x, y=y, strength=res["strength"][rows, cols],
                           orientation=_wrap_half_pi(theta),
                           grid=grid, cross_response=res["cross"])
