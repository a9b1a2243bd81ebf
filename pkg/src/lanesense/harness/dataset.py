"""Frame directories on disk.

Layout::

    camera.cfg            camera model (see lanesense.ipm.parse_camera)
    000000.ppm | .png     frames, processed in name order
    000000.lanes.txt      optional truth: one lane per line, "x,y" pairs in meters
    000000.mask.pgm       optional truth lane mask on the ground grid
    000000.meta.json      optional extras: grid geometry, boundaries, drift angle

Only the frames and the camera file are required.
"""
from dataclasses import dataclass, field
import json
from pathlib import Path
import re

import numpy as np

from ..errors import MalformedTruth, MissingCamera
from ..ipm import format_camera, load_camera
from ..pnm import read_image, write_image
from .evaluate import truth_from_polylines

FRAME_RE = re.compile(r"^(\d{6})\.(ppm|png)$")
CAMERA_FILE = "camera.cfg"


@dataclass
class Frame:
    name: str
    path: Path
    truth: dict = field(default=None, repr=False)

    def load(self):
        return read_image(self.path)


def parse_lanes(text, path="<lanes>"):
    """Polylines from a ``.lanes.txt`` body; ``MalformedTruth`` names the bad line."""
    lanes = []
    for line_no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        pts = []
        for tok in line.split():
            parts = tok.split(",")
            try:
                if len(parts) != 2:
                    raise ValueError
                pts.append((float(parts[0]), float(parts[1])))
            except ValueError:
                raise MalformedTruth(path, line_no, raw) from None
        if len(pts) < 2:
            raise MalformedTruth(path, line_no, raw)
        lanes.append(np.array(pts))
    return lanes


def format_lanes(lanes):
    return "".join(" ".join(f"{float(x)!r},{float(y)!r}" for x, y in np.asarray(p)) + "\n"
                   for p in lanes)


def _load_truth(base, stem, grid):
    lanes_p = base / f"{stem}.lanes.txt"
    mask_p = base / f"{stem}.mask.pgm"
    meta_p = base / f"{stem}.meta.json"
    if not (lanes_p.exists() or mask_p.exists()):
        return None
    geom = dict(grid)
    meta = {}
    if meta_p.exists():
        meta = json.loads(meta_p.read_text())
        geom.update({k: meta[k] for k in ("resolution", "x_max", "y_max") if k in meta})
    lanes = parse_lanes(lanes_p.read_text(), str(lanes_p)) if lanes_p.exists() else []
    truth = truth_from_polylines(lanes, geom["resolution"], geom["x_max"], geom["y_max"])
    if mask_p.exists():
        truth["lane_mask"] = read_image(mask_p)
    if "boundaries" in meta:
        truth["boundaries"] = [np.asarray(b, float) for b in meta["boundaries"]]
    if "drift_angle" in meta:
        truth["drift_angle"] = float(meta["drift_angle"])
    return truth


def ingest_dataset(path, grid=None):
    """Ordered :class:`Frame` records of a dataset directory.

    ``grid`` gives the default ``resolution`` / ``x_max`` / ``y_max`` for
    truth rasterization.  Returns ``(camera, frames)``; ``camera`` is
    ``None`` only for a directory without frames.
    """
    base = Path(path)
    if not base.is_dir():
        raise FileNotFoundError(f"no such dataset directory: {base}")
    grid = {"resolution": 0.1, "x_max": 45.0, "y_max": 10.0, **(grid or {})}
    names = sorted(p.name for p in base.iterdir() if FRAME_RE.match(p.name))
    if not names:
        return None, iter(())
    cam_path = base / CAMERA_FILE
    if not cam_path.exists():
        raise MissingCamera(f"{cam_path} not found")
    camera = load_camera(cam_path)

    def frames():
        seen = set()
        for fname in names:
            stem = FRAME_RE.match(fname).group(1)
            if stem in seen:  # both .ppm and .png present: first in name order wins
                continue
            seen.add(stem)
            yield Frame(stem, base / fname, _load_truth(base, stem, grid))

    return camera, frames()


def write_frame(out_dir, name, image, truth=None):
    """Write one frame plus its truth files in the layout read by :func:`ingest_dataset`."""
    out = Path(out_dir)
    write_image(out / f"{name}.ppm", image)
    if truth is None:
        return
    (out / f"{name}.lanes.txt").write_text(format_lanes(truth.get("lanes", [])))
    write_image(out / f"{name}.mask.pgm", np.asarray(truth["lane_mask"], np.uint8))
    if "labels" in truth:
        labels = np.where(truth["valid"], truth["labels"], 255).astype(np.uint8)
        write_image(out / f"{name}.labels.pgm", labels)
    meta = {k: truth[k] for k in ("resolution", "x_max", "y_max", "drift_angle") if k in truth}
    if "boundaries" in truth:
        meta["boundaries"] = [np.asarray(b).tolist() for b in truth["boundaries"]]
    (out / f"{name}.meta.json").write_text(json.dumps(meta, sort_keys=True) + "\n")


def write_camera(out_dir, camera):
    (Path(out_dir) / CAMERA_FILE).write_text(format_camera(camera))
