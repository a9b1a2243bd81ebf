"""Detect lanes on generated benchmark frames and print the precision table.

Usage: python demos/benchmark.py [n_frames]
"""
import sys

from lanesense.config import PipelineConfig
from lanesense.harness.evaluate import EvalReport, evaluate_frame
from lanesense.harness.synth import benchmark_scene, render_scene
from lanesense.pipeline import detect_frame


def main(n=10):
    report = EvalReport()
    for i in range(n):
        spec = benchmark_scene(i)
        image, truth = render_scene(spec)
        res = detect_frame(image, PipelineConfig(camera=spec.camera))
        report.add(evaluate_frame(res.curves, truth, res.boundaries, timings=res.timings,
                                  name=f"{i:06d}"))
    print(report.to_table(), end="")
    a = report.aggregate
    print(f"mean runtime {sum(a['runtime_ms'].values()):.1f} ms/frame "
          f"({', '.join(f'{k} {v:.1f}' for k, v in a['runtime_ms'].items())})")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 10)
