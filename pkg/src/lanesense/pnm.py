"""Binary PPM (P6) / PGM (P5) reading and writing, with optional PNG input."""
from pathlib import Path

import numpy as np

from .errors import InvalidInput


def _tokens(buf, count, pos):
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    out = []
    n = len(buf)
    while len(out) < count:
        while pos < n and buf[pos:pos + 1].isspace():
            pos += 1
        if pos < n and buf[pos:pos + 1] == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise InvalidInput("truncated PNM header")
        out.append(buf[start:pos])
    return out, pos


def decode_pnm(buf):
    if buf[:2] not in (b"P5", b"P6"):
        raise InvalidInput(f"not a binary PGM/PPM stream (magic {buf[:2]!r})")
    channels = 3 if buf[:2] == b"P6" else 1
    (w, h, maxval), pos = _tokens(buf, 3, 2)
    w, h, maxval = int(w), int(h), int(maxval)
    if not 0 < maxval < 65536:
        raise InvalidInput(f"bad maxval {maxval}")
    pos += 1  # single whitespace byte after maxval
    dtype = np.dtype(np.uint8) if maxval < 256 else np.dtype(">u2")
    size = w * h * channels
    data = np.frombuffer(buf, dtype=dtype, count=size, offset=pos)
    if data.size != size:
        raise InvalidInput("truncated PNM raster")
    shape = (h, w, 3) if channels == 3 else (h, w)
    return data.reshape(shape).astype(dtype.newbyteorder("=")), maxval


def encode_pnm(img, maxval=None):
    img = np.asarray(img)
    if img.ndim == 3 and img.shape[2] == 3:
        magic = b"P6"
    elif img.ndim == 2:
        magic = b"P5"
    else:
        raise InvalidInput(f"cannot encode image of shape {img.shape}")
    if maxval is None:
        maxval = 255 if img.dtype == np.uint8 else 65535
    if img.dtype.kind not in "ui" or img.min(initial=0) < 0 or img.max(initial=0) > maxval:
        raise InvalidInput("PNM data must be non-negative integers within maxval")
    dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
    header = b"%s\n%d %d\n%d\n" % (magic, img.shape[1], img.shape[0], maxval)
    return header + img.astype(dtype).tobytes()


def read_image(path):
    """Read a P5/P6 file (or PNG through Pillow) into a uint8/uint16 array."""
    path = Path(path)
    if path.suffix.lower() == ".png":
        from PIL import Image  # optional dependency

        with Image.open(path) as im:
            if im.mode not in ("L", "RGB"):
                im = im.convert("RGB")
            return np.asarray(im)
    return decode_pnm(path.read_bytes())[0]


def write_image(path, img, maxval=None):
    Path(path).write_bytes(encode_pnm(img, maxval))


def to_u8(plane, lo=None, hi=None):
    """Affinely map a float plane to uint8 for inspection."""
    plane = np.asarray(plane, dtype=float)
    finite = plane[np.isfinite(plane)]
    lo = finite.min(initial=0.0) if lo is None else lo
    hi = finite.max(initial=1.0) if hi is None else hi
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    out = np.nan_to_num((plane - lo) * scale, nan=0.0)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)
