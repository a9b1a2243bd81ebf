"""Three-class Gaussian mixture segmentation of the ground grid.

Classes are road (0), surrounding scene (1) and obstacles (2); cells outside
the grid's valid region are labelled 255.  Each class has a diagonal
covariance over the per-cell feature vector (invariant lightness, a*, b*).
"""
from dataclasses import dataclass
import math
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.ndimage import binary_opening
from scipy.special import logsumexp

from .errors import InvalidInput, MissingClass, NoRoad
from .lanes import RansacConfig, ransac_fit_one

CLASS_NAMES = ("road", "scene", "obstacle")
ROAD, SCENE, OBSTACLE, INVALID = 0, 1, 2, 255
VAR_FLOOR = 1e-4
MIN_PATCH_PIXELS = 30


@dataclass
class GmmModel:
    priors: np.ndarray  # (K,)
    means: np.ndarray  # (K, D)
    variances: np.ndarray  # (K, D)
    names: tuple = CLASS_NAMES
    var_floor: float = VAR_FLOOR

    def __post_init__(self):
        self.priors = np.asarray(self.priors, dtype=float)
        self.means = np.atleast_2d(np.asarray(self.means, dtype=float))
        self.variances = np.maximum(np.atleast_2d(np.asarray(self.variances, dtype=float)),
                                    self.var_floor)
        k = self.priors.size
        if self.means.shape[0] != k or self.variances.shape != self.means.shape:
            raise InvalidInput("priors, means and variances disagree on class count")
        if len(self.names) != k:
            self.names = tuple(f"class{i}" for i in range(k))

    @property
    def n_classes(self):
        return self.priors.size

    def log_joint(self, X):
        """``log p(c_i) + log N(x | m_i, diag var_i)`` for every sample/class, shape (N, K)."""
        X = np.asarray(X, dtype=float).reshape(-1, self.means.shape[1])
        with np.errstate(divide="ignore"):
            logp = np.log(self.priors)
        norm = -0.5 * np.log(2.0 * math.pi * self.variances).sum(axis=1)
        # sum_d (x - m)^2 / v expanded into matrix products
        inv = 1.0 / self.variances
        quad = (X * X) @ inv.T - 2.0 * X @ (self.means * inv).T + (self.means ** 2 * inv).sum(axis=1)
        return logp + norm - 0.5 * quad

    def log_likelihood(self, X):
        return float(logsumexp(self.log_joint(X), axis=1).sum())


def init_from_patches(patches, var_floor=VAR_FLOOR):
    """Per-class sample statistics from labelled training pixels.

    ``patches`` maps class name (or index) to an ``(N, D)`` array of feature
    vectors, or is a sequence of such arrays in class order.  Priors are
    proportional to patch sizes.
    """
    if isinstance(patches, dict):
        seq = []
        for i, name in enumerate(CLASS_NAMES):
            seq.append(patches.get(name, patches.get(i)))
    else:
        seq = list(patches)
    arrays = []
    for name, p in zip(CLASS_NAMES, seq):
        if p is None or len(p) == 0:
            raise MissingClass(f"no training pixels for class {name!r}")
        p = np.asarray(p, dtype=float)
        p = p.reshape(len(p), -1)
        if p.shape[0] < MIN_PATCH_PIXELS:
            raise InvalidInput(f"class {name!r} has {p.shape[0]} < {MIN_PATCH_PIXELS} pixels")
        arrays.append(p)
    if len(arrays) != len(CLASS_NAMES):
        raise MissingClass("expected patches for all three classes")
    sizes = np.array([a.shape[0] for a in arrays], dtype=float)
    return GmmModel(priors=sizes / sizes.sum(),
                    means=np.stack([a.mean(axis=0) for a in arrays]),
                    variances=np.stack([a.var(axis=0) for a in arrays]),
                    var_floor=var_floor)


def init_kmeans(X, seed=0, n_classes=3, var_floor=VAR_FLOOR):
    """Randomly seeded k-means initialization (ablation baseline)."""
    X = np.asarray(X, dtype=float)
    centroids, labels = kmeans2(X, n_classes, minit="++", seed=np.random.default_rng(seed))
    priors, variances = [], []
    for i in range(n_classes):
        members = X[labels == i]
        priors.append(max(len(members), 1))
        variances.append(members.var(axis=0) if len(members) else np.ones(X.shape[1]))
    priors = np.asarray(priors, dtype=float)
    return GmmModel(priors / priors.sum(), centroids, np.asarray(variances), var_floor=var_floor)


def em_refine(model, X, max_iters=100, rel_tol=1e-6):
    """Diagonal-covariance EM starting from ``model``.

    Returns ``(refined_model, trace)`` where ``trace[0]`` is the
    log-likelihood of the starting model and ``trace[i]`` the value after the
    i-th M-step.  Variances are floored at ``model.var_floor`` (the
    constrained M-step optimum, so the trace stays non-decreasing).
    """
    X = np.asarray(X, dtype=float)
    X = X.reshape(X.shape[0], -1)
    n = X.shape[0]
    cur = GmmModel(model.priors.copy(), model.means.copy(), model.variances.copy(),
                   model.names, model.var_floor)
    lj = cur.log_joint(X)
    lse = logsumexp(lj, axis=1)
    trace = [float(lse.sum())]
    for _ in range(max_iters):
        resp = np.exp(lj - lse[:, None])
        nk = resp.sum(axis=0)
        means = cur.means.copy()
        variances = cur.variances.copy()
        for i in range(cur.n_classes):
            if nk[i] <= 0:
                continue
            means[i] = resp[:, i] @ X / nk[i]
            d = X - means[i]
            variances[i] = resp[:, i] @ (d * d) / nk[i]
        priors = nk / n
        priors = priors / priors.sum()
        cur = GmmModel(priors, means, variances, cur.names, cur.var_floor)
        lj = cur.log_joint(X)
        lse = logsumexp(lj, axis=1)
        trace.append(float(lse.sum()))
        if abs(trace[-1] - trace[-2]) <= rel_tol * abs(trace[-2]):
            break
    return cur, trace


def classify(model, features, valid=None):
    """Bayesian labelling: the class with the largest prior-weighted likelihood.

    ``features`` has shape ``(..., D)``; ties resolve to the lowest class id.
    """
    features = np.asarray(features, dtype=float)
    shape = features.shape[:-1]
    labels = np.argmax(model.log_joint(features.reshape(-1, features.shape[-1])), axis=1)
    labels = labels.astype(np.uint8).reshape(shape)
    if valid is not None:
        labels[~np.asarray(valid, dtype=bool)] = INVALID
    return labels


def suppress_thin(labels, model, features, class_id=2, size=5):
    """Relabel ``class_id`` regions thinner than ``size`` cells.

    The mask of ``class_id`` is opened with a ``size`` x ``size`` square;
    cells that drop out take the best-scoring remaining class.  Lane paint
    and blurred region borders produce such thin outliers, real obstacles
    do not.
    """
    hit = labels == class_id
    if size <= 1 or not hit.any():
        return labels
    thin = hit & ~binary_opening(hit, structure=np.ones((size, size), dtype=bool))
    if not thin.any():
        return labels
    lj = model.log_joint(np.asarray(features, dtype=float)[thin])
    lj[:, class_id] = -np.inf
    out = labels.copy()
    out[thin] = np.argmax(lj, axis=1).astype(labels.dtype)
    return out


class Boundaries(NamedTuple):
    left: object
    right: object


def boundary_points(mask, x_centers, y_max, resolution, min_run=5):
    """Outer edges of the leftmost and rightmost road runs in each row.

    An edge is kept only if the cell just outside it is a valid non-road
    cell, so runs clipped by the field of view do not produce edges.
    Returns two ``(N, 2)`` arrays of ground points ``(x, y)``.
    """
    mask = np.asarray(mask)
    left_pts, right_pts = [], []
    cols = mask.shape[1]
    for r in range(mask.shape[0]):
        road = mask[r] == ROAD
        if not road.any():
            continue
        edges = np.diff(np.concatenate([[0], road.astype(np.int8), [0]]))
        starts = np.flatnonzero(edges == 1)
        ends = np.flatnonzero(edges == -1)  # exclusive
        long = (ends - starts) >= min_run
        if not long.any():
            continue
        s0, e1 = starts[long][0], ends[long][-1]
        if s0 > 0 and mask[r, s0 - 1] != INVALID:
            left_pts.append((x_centers[r], y_max - s0 * resolution))
        if e1 < cols and mask[r, e1] != INVALID:
            right_pts.append((x_centers[r], y_max - e1 * resolution))
    return np.array(left_pts).reshape(-1, 2), np.array(right_pts).reshape(-1, 2)


def extract_boundaries(mask, grid, cfg=None, min_run=5, min_road_fraction=0.10):
    """Fit cubic road-boundary curves to the edges of the road class.

    ``grid`` supplies the geometry (``IpmGrid``).  ``left`` is the boundary
    on the +Y side of the vehicle.  Raises :class:`NoRoad` when road cells
    cover less than ``min_road_fraction`` of the valid cells and propagates
    :class:`NoModel` when a side cannot be fitted.
    """
    cfg = cfg or RansacConfig()
    mask = np.asarray(mask)
    valid = mask != INVALID
    if valid.sum() == 0 or (mask == ROAD).sum() < min_road_fraction * valid.sum():
        raise NoRoad("road class covers too little of the grid")
    lp, rp = boundary_points(mask, grid.x_centers, grid.y_max, grid.resolution, min_run)
    left = ransac_fit_one(lp, cfg, stream=100)
    right = ransac_fit_one(rp, cfg, stream=101)
    return Boundaries(left, right)


def write_stats(path, model):
    """Sidecar text format: ``name m1 .. mD v1 .. vD prior`` per line."""
    lines = ["# class  means...  variances...  prior"]
    for name, m, v, p in zip(model.names, model.means, model.variances, model.priors):
        vals = " ".join(repr(float(t)) for t in (*m, *v, p))
        lines.append(f"{name} {vals}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_stats(path, var_floor=VAR_FLOOR):
    names, means, variances, priors = [], [], [], []
    for line_no, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].split()
        if not line:
            continue
        vals = [float(t) for t in line[1:]]
        if len(vals) < 3 or len(vals) % 2 == 0:
            raise InvalidInput(f"{path}:{line_no}: expected name, D means, D variances, prior")
        d = (len(vals) - 1) // 2
        names.append(line[0])
        means.append(vals[:d])
        variances.append(vals[d:2 * d])
        priors.append(vals[-1])
    if [n for n in names] != list(CLASS_NAMES):
        missing = [n for n in CLASS_NAMES if n not in names]
        if missing:
            raise MissingClass(f"{path}: missing class {missing[0]!r}")
        order = [names.index(n) for n in CLASS_NAMES]
        means = [means[i] for i in order]
        variances = [variances[i] for i in order]
        priors = [priors[i] for i in order]
    priors = np.asarray(priors, dtype=float)
    return GmmModel(priors / priors.sum(), means, variances, var_floor=var_floor)
