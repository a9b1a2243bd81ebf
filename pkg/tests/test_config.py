import json

import pytest

from lanesense.config import PipelineConfig, config_from_dict, load_config
from lanesense.errors import ConfigError
from lanesense.ipm import format_camera
from lanesense.harness.synth import DEFAULT_CAMERA


def write(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return p


def test_defaults():
    cfg = config_from_dict({})
    assert cfg == PipelineConfig()
    assert cfg.ransac.max_curves == 8 and cfg.grid.x_max == 45.0


def test_sections_and_relative_paths(tmp_path):
    (tmp_path / "cam.cfg").write_text(format_camera(DEFAULT_CAMERA))
    p = write(tmp_path, {"camera": "cam.cfg", "filter": {"k": 1.5}, "ransac": {"iterations": 50},
                         "gmm_stats": "g.txt", "rng_seed": 9})
    cfg = load_config(p)
    assert cfg.camera.m == 375 and cfg.filter.k == 1.5 and cfg.ransac.iterations == 50
    assert cfg.gmm_stats == str(tmp_path / "g.txt")
    assert cfg.rng_seed == 9 and cfg.ransac.rng_seed == 9


@pytest.mark.parametrize("data", [
    {"bogus": 1},
    {"filter": {"sigmaa": 2.0}},
    {"filter": {"polarity": "dark"}},
    {"ransac": {"max_curves": 12}},
    {"grid": {"x_max": 60.0}},
    {"grid": []},
    {"segment": {"em_stride": 0}},
])
def test_rejected(tmp_path, data):
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, data))


def test_missing_camera_file(tmp_path):
    with pytest.raises(ConfigError, match="camera"):
        load_config(write(tmp_path, {"camera": "nope.cfg"}))


def test_bad_json(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{")
    with pytest.raises(ConfigError):
        load_config(p)


def test_with_seed():
    cfg = PipelineConfig().with_seed(5)
    assert cfg.rng_seed == 5 and cfg.ransac.rng_seed == 5
