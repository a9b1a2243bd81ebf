"""Class statistics for the road segmenter from labelled synthetic frames."""
import numpy as np

from ..config import GridParams, PipelineConfig
from ..pipeline import preprocess
from ..segmentation import CLASS_NAMES, init_from_patches
from .synth import Obstacle, SceneSpec, ShadowBand, four_lane_markings, render_scene


def training_scenes():
    """A few varied frames with every class present."""
    out = []
    for i, (b, color) in enumerate([(0.0, (0.65, 0.12, 0.10)), (0.002, (0.12, 0.20, 0.60)),
                                    (-0.002, (0.85, 0.80, 0.15))]):
        out.append(SceneSpec(
            lanes=four_lane_markings() if i != 1 else [],
            centerline=(0.0, 0.0, b, 0.0), road_half_width=6.0 + 0.5 * i,
            shadows=[ShadowBand(8.0 + 6 * i, 11.0 + 6 * i, 0.5)],
            obstacles=[Obstacle(14.0 + 3 * i, 1.75 * (i - 1), color=color),
                       Obstacle(28.0, -1.75 * (i - 1), color=color)],
            noise_sigma=0.02, follow_heading=True, rng_seed=1000 + i))
    return out


def collect_patches(specs, per_class=4000, seed=0):
    """Sample feature vectors per truth class from rendered frames."""
    rng = np.random.default_rng(seed)
    pools = {name: [] for name in CLASS_NAMES}
    for spec in specs:
        image, truth = render_scene(spec, 0)
        cfg = PipelineConfig(camera=spec.camera,
                             grid=GridParams(spec.resolution, spec.x_max, spec.y_max))
        grid, feat = preprocess(image, cfg)
        labels = truth["labels"]
        for cid, name in enumerate(CLASS_NAMES):
            pools[name].append(feat[grid.valid & (labels == cid)])
    patches = {}
    for name, arrs in pools.items():
        allp = np.concatenate(arrs)
        take = rng.choice(allp.shape[0], size=min(per_class, allp.shape[0]), replace=False)
        patches[name] = allp[np.sort(take)]
    return patches


def train_default_stats(per_class=4000, seed=0):
    return init_from_patches(collect_patches(training_scenes(), per_class, seed))
