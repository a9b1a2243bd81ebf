"""Pipeline configuration: a JSON file with one section per stage.

Example::

    {
      "camera": "camera.cfg",
      "grid": {"resolution": 0.1, "x_max": 45.0, "y_max": 10.0},
      "filter": {"sigma": 2.0, "k": 2.0, "phi_max_deg": 30.0},
      "ransac": {"iterations": 500, "inlier_tol": 0.15},
      "interp": {"max_gap": 4.0},
      "gmm_stats": "gmm.txt",
      "departure": {"lambda_deg": 5.0},
      "rng_seed": 0
    }

Relative paths are resolved against the config file's directory.  Unknown
keys are rejected.
"""
from dataclasses import dataclass, field, fields, replace
import json
from pathlib import Path

from .departure import DepartureThresholds
from .errors import ConfigError, InvalidInput
from .filters import FeatureParams
from .ipm import X_LIMIT, load_camera
from .lanes import RansacConfig


@dataclass
class GridParams:
    resolution: float = 0.1
    x_max: float = X_LIMIT
    y_max: float = 10.0

    def validate(self):
        if self.resolution <= 0 or self.y_max <= 0:
            raise InvalidInput("grid resolution and y_max must be positive")
        if not 0 < self.x_max <= X_LIMIT:
            raise InvalidInput(f"grid x_max must be in (0, {X_LIMIT}]")
        return self


@dataclass
class InterpParams:
    enabled: bool = True
    max_gap: float = 4.0
    lateral_tol: float = 0.3

    def validate(self):
        if self.max_gap <= 0 or self.lateral_tol <= 0:
            raise InvalidInput("interp max_gap and lateral_tol must be positive")
        return self


@dataclass
class SegmentParams:
    enabled: bool = True
    em_max_iters: int = 100
    em_rel_tol: float = 1e-6
    em_stride: int = 3  # EM runs on every n-th valid cell in each direction
    min_run: int = 5
    obstacle_min_size: int = 5  # obstacle regions thinner than this (cells) are relabelled
    road_margin: float = 0.5  # lane features must lie within this many meters of road cells; null disables

    def validate(self):
        if (self.em_max_iters < 0 or self.em_stride < 1 or self.min_run < 1
                or self.obstacle_min_size < 0):
            raise InvalidInput("bad segmentation parameters")
        return self


@dataclass
class FlowParams:
    grid_step: int = 8
    window: int = 15
    max_shift: int = 16

    def validate(self):
        if self.grid_step < 1 or self.window < 3:
            raise InvalidInput("flow grid_step >= 1 and window >= 3 required")
        return self


@dataclass
class PipelineConfig:
    camera: object = None  # CameraModel
    grid: GridParams = field(default_factory=GridParams)
    filter: FeatureParams = field(default_factory=FeatureParams)
    ransac: RansacConfig = field(default_factory=RansacConfig)
    interp: InterpParams = field(default_factory=InterpParams)
    segment: SegmentParams = field(default_factory=SegmentParams)
    flow: FlowParams = field(default_factory=FlowParams)
    departure: DepartureThresholds = field(default_factory=DepartureThresholds)
    gmm_stats: str = None
    rng_seed: int = 0
    x_probe: float = 5.0

    def with_seed(self, seed):
        return replace(self, rng_seed=int(seed), ransac=replace(self.ransac, rng_seed=int(seed)))


_SECTIONS = {"grid": GridParams, "filter": FeatureParams, "ransac": RansacConfig,
             "interp": InterpParams, "segment": SegmentParams, "flow": FlowParams,
             "departure": DepartureThresholds}


def _section(cls, values, name):
    if not isinstance(values, dict):
        raise ConfigError(f"section {name!r} must be an object")
    allowed = {f.name for f in fields(cls)}
    unknown = sorted(set(values) - allowed)
    if unknown:
        raise ConfigError(f"unknown key {name}.{unknown[0]}")
    obj = cls(**values)
    try:
        if hasattr(obj, "validate"):
            obj.validate()
    except InvalidInput as exc:
        raise ConfigError(f"{name}: {exc}") from None
    return obj


def config_from_dict(data, base_dir=None):
    base_dir = Path(base_dir or ".")
    top = {"camera", "gmm_stats", "rng_seed", "x_probe", *_SECTIONS}
    unknown = sorted(set(data) - top)
    if unknown:
        raise ConfigError(f"unknown config key {unknown[0]!r}")
    kwargs = {name: _section(cls, data.get(name, {}), name) for name, cls in _SECTIONS.items()}
    seed = int(data.get("rng_seed", 0))
    kwargs["ransac"] = replace(kwargs["ransac"], rng_seed=seed)
    if "camera" in data:
        path = base_dir / data["camera"]
        try:
            kwargs["camera"] = load_camera(path)
        except FileNotFoundError:
            raise ConfigError(f"camera file not found: {path}") from None
    stats = data.get("gmm_stats")
    if stats is not None:
        stats = str(base_dir / stats)
    return PipelineConfig(gmm_stats=stats, rng_seed=seed,
                          x_probe=float(data.get("x_probe", 5.0)), **kwargs)


def load_config(path):
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return config_from_dict(data, path.parent)
