"""Color conversion and illuminant-invariant preprocessing.

Images are plain numpy arrays: ``(rows, cols, 3)`` uint8 for color frames and
``(rows, cols)`` float for single-channel planes.  Row/column indices inside
this package are 0-based; the camera geometry in :mod:`lanesense.ipm` converts
to the 1-based pixel convention of the mapping equations.
"""
from typing import NamedTuple

import numpy as np
from scipy.ndimage import uniform_filter

from .errors import InvalidInput

# sRGB -> XYZ (D65), IEC 61966-2-1
_RGB_TO_XYZ = np.array([
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
])
_D65_WHITE = _RGB_TO_XYZ.sum(axis=1)

GRAY_WEIGHTS = (0.299, 0.587, 0.114)


def _srgb_lut():
    c = np.arange(256) / 255.0
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


_LINEAR_LUT = _srgb_lut()


class LabImage(NamedTuple):
    """CIE L*a*b* planes of equal shape."""
    L: np.ndarray
    a: np.ndarray
    b: np.ndarray

    @property
    def shape(self):
        return self.L.shape

    def stack(self):
        return np.stack([self.L, self.a, self.b], axis=-1)


def _check_rgb(img):
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise InvalidInput(f"expected a 3-channel image, got shape {img.shape}")
    return img


def _lab_f(t):
    eps = (6.0 / 29.0) ** 3
    return np.where(t > eps, np.cbrt(t), t / (3.0 * (6.0 / 29.0) ** 2) + 4.0 / 29.0)


def rgb_to_lab(img):
    """Convert an 8-bit sRGB image to CIE L*a*b* under the D65 white point.

    The sRGB transfer curve is removed before the XYZ projection.  The XYZ
    matrix is normalized by its own row sums so that (255, 255, 255) maps to
    L=100, a=b=0 to rounding precision.
    """
    img = _check_rgb(img)
    if img.dtype == np.uint8:
        lin = _LINEAR_LUT[img]
    else:
        c = np.clip(np.asarray(img, dtype=float) / 255.0, 0.0, 1.0)
        lin = np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)
    xyz = lin @ (_RGB_TO_XYZ / _D65_WHITE[:, None]).T
    fx, fy, fz = (_lab_f(xyz[..., i]) for i in range(3))
    L = 116.0 * fy - 16.0
    return LabImage(L, 500.0 * (fx - fy), 200.0 * (fy - fz))


def to_gray(img):
    """Luma in [0, 1] using the ITU-R BT.601 weights on gamma-encoded values."""
    img = _check_rgb(img)
    return (np.asarray(img, dtype=float) / 255.0) @ np.array(GRAY_WEIGHTS)


def illuminant_invariant(lab, window=32, eps=8.0, z_clip=3.0, chroma_gain=0.5,
                         chroma_half=20.0, valid=None):
    """Shadow-attenuated single-channel plane with values in [0, 1].

    Lightness is standardized against its local mean and deviation over a
    sliding ``window`` x ``window`` tile.  A uniform multiplicative brightness
    change maps L* to an (almost exactly) affine function of itself, which the
    standardization removes.  The standardized value is amplified by a
    saturating function of chroma ``|(a, b)|`` so colored paint keeps its
    contrast, then mapped to [0, 1] with ``0.5`` meaning "locally average".

    Parameters
    ----------
    lab : LabImage
    window : int
        Side of the local statistics tile, in pixels (or grid cells).
    eps : float
        Deviation floor in L* units; keeps flat regions from amplifying noise.
    z_clip : float
        Standardized value mapped to the ends of the output range.
    valid : array of bool, optional
        Cells allowed to contribute to the local statistics; invalid cells
        come out as 0.5.
    """
    L = np.asarray(lab.L, dtype=float)
    if valid is None:
        mu = uniform_filter(L, size=window, mode="reflect")
        m2 = uniform_filter(L * L, size=window, mode="reflect")
    else:
        w = np.asarray(valid, dtype=float)
        Lw = np.where(valid, L, 0.0)
        cnt = np.maximum(uniform_filter(w, size=window, mode="reflect"), 1e-12)
        mu = uniform_filter(Lw, size=window, mode="reflect") / cnt
        m2 = uniform_filter(Lw * Lw, size=window, mode="reflect") / cnt
    var = m2 - mu * mu
    z = (L - mu) / np.sqrt(np.maximum(var, 0.0) + eps * eps)
    chroma = np.hypot(lab.a, lab.b)
    weight = 1.0 + chroma_gain * chroma / (chroma + chroma_half)
    out = np.clip(0.5 + z * weight / (2.0 * z_clip), 0.0, 1.0)
    if valid is not None:
        out = np.where(valid, out, 0.5)
    return out


def lab_features(lab, invariant=None):
    """Per-pixel 3-vector used by the road segmenter.

    Lightness is replaced by the illuminant-invariant plane (scaled to the
    0-100 range of L*) so shadows do not split the road class.  Chroma is
    divided by ``L* + 16``: a uniform brightness change scales ``L* + 16``,
    ``a*`` and ``b*`` by the same cube-root factor, so the ratio keeps a
    shadowed patch of grass next to its sunlit neighbor.
    """
    if invariant is None:
        invariant = illuminant_invariant(lab)
    scale = 100.0 / np.maximum(lab.L + 16.0, 1.0)
    return np.stack([100.0 * invariant, lab.a * scale, lab.b * scale], axis=-1)
