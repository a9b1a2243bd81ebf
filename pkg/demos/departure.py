"""Departure angle over a drifting and over a curved generated sequence.

The drifting vehicle slides 0.1 m sideways per 10 m driven, so the expected
angle is atan(0.01) = 0.573 deg.  On the curved road the ground also slides
sideways, but the curvature gate keeps the warning off.
"""
import math

from lanesense.config import PipelineConfig
from lanesense.harness.synth import curved_sequence, drift_sequence, render_scene
from lanesense.pipeline import detect_sequence


def run(name, spec):
    cfg = PipelineConfig(camera=spec.camera)
    frames = ((f"{k:06d}", render_scene(spec, k)[0]) for k in range(spec.frames))
    print(f"{name}: frame  lambda_deg  offset_m  warning  gated")
    for frame, res, dep in detect_sequence(frames, cfg):
        if dep is None:
            continue
        offset = f"{res.offset:+.3f}" if res.offset is not None else "-"
        print(f"{name}: {frame}  {dep.lambda_deg:+9.3f}  {offset:>8}  {dep.warning!s:>7}  "
              f"{dep.gated_by_curvature}")


if __name__ == "__main__":
    print(f"expected drift angle {math.degrees(math.atan(0.01)):.3f} deg")
    run("drift", drift_sequence(frames=10))
    run("curve", curved_sequence(frames=10))
