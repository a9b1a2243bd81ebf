import functools

import numpy as np
import pytest

from lanesense.config import PipelineConfig
from lanesense.harness.synth import benchmark_scene, render_scene
from lanesense.ipm import CameraModel
from lanesense.pipeline import detect_frame


@functools.lru_cache(maxsize=None)
def rendered(kind, index=0, frame=0):
    """Cached ``(spec, image, truth)`` for a named generator preset."""
    from lanesense.harness import synth

    spec = getattr(synth, kind)(index) if kind != "benchmark_scene" else benchmark_scene(index)
    image, truth = render_scene(spec, frame)
    return spec, image, truth


@functools.lru_cache(maxsize=None)
def detected(kind, index=0):
    spec, image, truth = rendered(kind, index)
    return detect_frame(image, PipelineConfig(camera=spec.camera))


@pytest.fixture
def wide_camera():
    return CameraModel.from_degrees(1.55, 3.0, 60.0, 375, 1242)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from tests import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(test_acceptance.RESULTS[number])
