"""Command-line entry point.

Subcommands: ``ipm``, ``detect``, ``segment``, ``departure``, ``synth``,
``eval``.  Exit codes: 0 success, 2 configuration error, 3 I/O error,
4 no output (every frame failed).  Per-frame records are JSON lines with a
top-level ``"v"`` schema version.
"""
import argparse
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
import json
import logging
import os
from pathlib import Path
import sys

import numpy as np

from .config import PipelineConfig, load_config
from .errors import ConfigError, LaneSenseError, MalformedTruth, MissingCamera
from .harness.dataset import FRAME_RE, Frame, ingest_dataset, write_camera, write_frame
from .harness.evaluate import EvalReport, evaluate_frame
from .harness.synth import SceneSpec, render_scene
from .ipm import load_camera, sampling_map
from .lanes import LaneCurve
from .pipeline import (_gmm_from, default_gmm, detect_frame, frame_departure, preprocess,
                       result_record, segment_grid)
from .pnm import read_image, to_u8, write_image
from .segmentation import Boundaries

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NO_OUTPUT = 0, 2, 3, 4

log = logging.getLogger("lanesense")


def _config(args):
    cfg = load_config(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if getattr(args, "max_curves", None) is not None:
        try:
            cfg = replace(cfg, ransac=replace(cfg.ransac, max_curves=args.max_curves).validate())
        except LaneSenseError as exc:
            raise ConfigError(str(exc)) from None
    return cfg


def _with_camera(cfg, search_dir):
    """Fill in the camera from ``search_dir/camera.cfg`` when the config has none."""
    if cfg.camera is not None:
        return cfg
    cam = Path(search_dir) / "camera.cfg"
    if not cam.exists():
        raise ConfigError(f"no camera: pass --config with a camera entry or add {cam}")
    return replace(cfg, camera=load_camera(cam))


def _frames(path):
    """``(camera_dir, [Frame])`` for a single frame file or a frame directory."""
    p = Path(path)
    if p.is_dir():
        try:
            _, frames = ingest_dataset(p)
        except MissingCamera:
            # a config may still supply the camera
            names = sorted(q.name for q in p.iterdir() if FRAME_RE.match(q.name))
            frames = (Frame(n.split(".")[0], p / n) for n in names)
        return p, list(frames)
    if not p.exists():
        raise FileNotFoundError(f"no such file: {p}")
    return p.parent, [Frame(p.stem, p)]


def _write_lines(lines, out):
    text = "".join(line + "\n" for line in lines)
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _debug_dump(debug_dir, name, result):
    d = Path(debug_dir)
    d.mkdir(parents=True, exist_ok=True)
    write_image(d / f"{name}.invariant.pgm", to_u8(result.grid.cells, 0.0, 1.0))
    feat = np.zeros(result.grid.shape, np.uint8)
    if len(result.features):
        r, c = result.grid.to_cell(result.features.x, result.features.y)
        r = np.clip(np.rint(r).astype(int), 0, feat.shape[0] - 1)
        c = np.clip(np.rint(c).astype(int), 0, feat.shape[1] - 1)
        feat[r, c] = 255
    write_image(d / f"{name}.features.pgm", feat)
    if result.labels is not None:
        write_image(d / f"{name}.labels.pgm", result.labels)


def _run_frames(frames, cfg, threads, debug_dir=None):
    """Detect on every frame, frame-parallel, results in input order.

    Failed frames yield ``None`` and are logged.
    """
    def work(frame):
        try:
            res = detect_frame(frame.load(), cfg, frame.name)
        except (LaneSenseError, OSError, ValueError) as exc:
            log.error("frame %s: %s", frame.name, exc)
            return None
        if debug_dir:
            _debug_dump(debug_dir, frame.name, res)
        return res

    if threads <= 1:
        return [work(f) for f in frames]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(work, frames))


def cmd_detect(args):
    cfg = _config(args)
    base, frames = _frames(args.input)
    if not frames:
        _write_lines([], args.out)
        return EXIT_OK
    cfg = _with_camera(cfg, base)
    results = _run_frames(frames, cfg, args.threads, args.debug_dir)
    lines = [json.dumps(result_record(f.name, r, timings=args.timings), sort_keys=True)
             for f, r in zip(frames, results) if r is not None]
    _write_lines(lines, args.out)
    return EXIT_OK if lines else EXIT_NO_OUTPUT


def cmd_departure(args):
    cfg = _config(args)
    base, frames = _frames(args.input)
    if not frames:
        _write_lines([], args.out)
        return EXIT_OK
    cfg = _with_camera(cfg, base)
    results = _run_frames(frames, cfg, args.threads, args.debug_dir)
    lines, prev = [], None
    for f, r in zip(frames, results):
        if r is None:
            prev = None
            continue
        dep = frame_departure(prev, r, cfg) if prev is not None else None
        rec = result_record(f.name, r, dep, timings=args.timings)
        rec.setdefault("departure", None)
        lines.append(json.dumps(rec, sort_keys=True))
        prev = r.grid
    _write_lines(lines, args.out)
    return EXIT_OK if lines else EXIT_NO_OUTPUT


def cmd_ipm(args):
    cfg = _config(args)
    p = Path(args.input)
    if not p.exists():
        raise FileNotFoundError(f"no such file: {p}")
    cfg = _with_camera(cfg, p.parent)
    grid, _ = preprocess(read_image(p), cfg)
    write_image(args.out, to_u8(grid.cells, 0.0, 1.0))
    return EXIT_OK


def cmd_segment(args):
    cfg = _config(args)
    p = Path(args.input)
    if not p.exists():
        raise FileNotFoundError(f"no such file: {p}")
    cfg = _with_camera(cfg, p.parent)
    grid, feat = preprocess(read_image(p), cfg)
    model = _gmm_from(cfg.gmm_stats) if cfg.gmm_stats else default_gmm()
    labels, _ = segment_grid(model, feat, grid.valid, cfg.segment)
    write_image(args.out, labels)
    return EXIT_OK


def cmd_synth(args):
    try:
        spec = SceneSpec.from_json(Path(args.spec).read_text())
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{args.spec}: {exc}") from None
    if args.seed is not None:
        spec = replace(spec, rng_seed=int(args.seed))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_camera(out, spec.camera)
    for k in range(spec.frames):
        image, truth = render_scene(spec, k)
        write_frame(out, f"{k:06d}", image, truth)
    return EXIT_OK


def _read_predictions(path):
    p = Path(path)
    files = sorted(p.glob("*.jsonl")) if p.is_dir() else [p]
    preds = {}
    for f in files:
        for line_no, line in enumerate(f.read_text().splitlines(), 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                curves = [LaneCurve.from_dict(c) for c in rec["curves"]]
                b = rec.get("boundaries")
                bnd = (Boundaries(LaneCurve.from_dict(b["left"]), LaneCurve.from_dict(b["right"]))
                       if b else None)
                preds[str(rec["frame"])] = (curves, bnd, rec.get("timings"))
            except (ValueError, KeyError, TypeError) as exc:
                raise ConfigError(f"{f}:{line_no}: bad prediction record ({exc})") from None
    return preds


def cmd_eval(args):
    cfg = _config(args)
    preds = _read_predictions(args.pred)
    g = cfg.grid
    camera, frames = ingest_dataset(args.truth, {"resolution": g.resolution, "x_max": g.x_max,
                                                 "y_max": g.y_max})
    camera = cfg.camera or camera
    report = EvalReport(tolerance=args.tolerance)
    for frame in frames:
        if frame.truth is None or frame.name not in preds:
            continue
        truth = frame.truth
        if truth.get("valid") is None and camera is not None:
            truth["valid"] = sampling_map(camera, truth["resolution"], truth["x_max"],
                                          truth["y_max"])[1]
        curves, bnd, timings = preds[frame.name]
        report.add(evaluate_frame(curves, truth, bnd, args.tolerance, cfg.x_probe, timings,
                                  name=frame.name))
    if not report.frames:
        log.error("no frame has both a prediction and truth")
        return EXIT_NO_OUTPUT
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(report.to_json() + "\n")
        (out / "report.txt").write_text(report.to_table())
    sys.stdout.write(report.to_table())
    return EXIT_OK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline configuration (JSON)")
    common.add_argument("--seed", type=int, help="override the configured random seed")
    common.add_argument("--debug-dir", help="write intermediate planes here as PGM")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="frame-level worker threads (default: available cores)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="lanesense", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ipm", parents=[common], help="bird's-eye invariant plane of a frame")
    p.add_argument("input")
    p.add_argument("-o", "--out", required=True, help="output PGM")
    p.set_defaults(func=cmd_ipm)

    for name, func, text in [("detect", cmd_detect, "lane curves per frame"),
                             ("departure", cmd_departure, "lane curves plus departure angle")]:
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("input", help="frame file or frame directory")
        p.add_argument("-o", "--out", help="JSON-lines output (default: stdout)")
        p.add_argument("--max-curves", type=int)
        p.add_argument("--timings", action="store_true",
                       help="include per-stage timings (makes output run-dependent)")
        p.set_defaults(func=func)

    p = sub.add_parser("segment", parents=[common], help="road / scene / obstacle label mask")
    p.add_argument("input")
    p.add_argument("-o", "--out", required=True, help="output PGM of class ids")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("synth", parents=[common], help="render a synthetic scene with truth")
    p.add_argument("spec", help="scene spec (JSON)")
    p.add_argument("out_dir")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", parents=[common], help="pixel-wise precision report")
    p.add_argument("pred", help="JSON-lines predictions (file or directory of .jsonl)")
    p.add_argument("truth", help="dataset directory with truth files")
    p.add_argument("--tolerance", type=float, default=0.3, help="lateral match band (m)")
    p.add_argument("--out-dir", help="write report.json and report.txt here")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    if args.threads < 1:
        parser.error("--threads must be at least 1")
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except (OSError, MissingCamera, MalformedTruth) as exc:
        log.error("%s", exc)
        return EXIT_IO
    except LaneSenseError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
