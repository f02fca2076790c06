"""Synthetic labeled tractograms built from Bézier bundles plus outlier curves."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .core import NUM_POINTS, Tractogram, resample_batch
from .errors import ConfigInvalid, TooManyBundles

# dense samples along each curve before resampling to 15 points
DENSE_SAMPLES = 32
MIN_SEPARATION = 0.2
_MIN_CELL = 0.1


@dataclass(frozen=True)
class BundleSpec:
    control_points: tuple  # 4 x 3
    spread: float
    jitter: float
    count: int
    label: int

    def __post_init__(self):
        cp = np.asarray(self.control_points, dtype=np.float64)
        if cp.shape != (4, 3):
            raise ConfigInvalid(f"bundle {self.label}: need 4 control points, got {cp.shape}")
        object.__setattr__(self, "control_points", tuple(map(tuple, cp.tolist())))
        if self.spread < 0 or self.jitter < 0:
            raise ConfigInvalid(f"bundle {self.label}: spread and jitter must be >= 0")
        if self.count < 1:
            raise ConfigInvalid(f"bundle {self.label}: count must be >= 1")


@dataclass(frozen=True)
class SynthConfig:
    bundles: tuple[BundleSpec, ...]
    outliers: int = 0
    outlier_label: int | None = None
    seed: int = 0
    flip_prob: float = 0.5
    volume: tuple = ((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))
    outlier_jitter: float = 0.005

    def __post_init__(self):
        bundles = tuple(b if isinstance(b, BundleSpec) else BundleSpec(**b) for b in self.bundles)
        object.__setattr__(self, "bundles", bundles)
        object.__setattr__(self, "volume", tuple(map(tuple, np.asarray(self.volume, float).tolist())))
        labels = [b.label for b in bundles]
        if len(set(labels)) != len(labels):
            raise ConfigInvalid("bundle labels must be distinct")
        if self.outliers < 0:
            raise ConfigInvalid("outlier count must be >= 0")
        if self.outlier_label is None:
            object.__setattr__(self, "outlier_label", max(labels, default=-1) + 1)
        elif self.outlier_label in labels:
            raise ConfigInvalid("outlier label collides with a bundle label")
        if not 0 <= self.flip_prob <= 1:
            raise ConfigInvalid("flip_prob must lie in [0, 1]")

    @property
    def num_classes(self) -> int:
        return max([b.label for b in self.bundles] + [self.outlier_label]) + 1


def bezier(control_points, t) -> np.ndarray:
    """Cubic Bézier curve at parameters ``t``; control points (..., 4, 3)."""
    cp = np.asarray(control_points, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)[:, None]
    s = 1 - t
    basis = [s**3, 3 * s**2 * t, 3 * s * t**2, t**3]
    return sum(w * cp[..., i, None, :] for i, w in enumerate(basis))


def _ball(rng, n, radius) -> np.ndarray:
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return d * (radius * rng.random((n, 1)) ** (1 / 3))


def _bundle_streamlines(b: BundleSpec, rng) -> np.ndarray:
    t = np.linspace(0.0, 1.0, DENSE_SAMPLES)
    centre = bezier(b.control_points, t)
    # convex (quadratic Bernstein) blend of three offsets in the ball: smooth and within spread
    offsets = np.stack([_ball(rng, b.count, b.spread) for _ in range(3)], axis=1)
    w = np.stack([(1 - t) ** 2, 2 * t * (1 - t), t**2], axis=1)
    lateral = np.einsum("mk,nkd->nmd", w, offsets)
    pts = centre[None] + lateral
    if b.jitter:
        pts = pts + rng.normal(0.0, b.jitter, size=pts.shape)
    return pts


def generate(cfg: SynthConfig) -> Tractogram:
    """Draw a shuffled, labeled tractogram; a pure function of ``cfg``."""
    rng = np.random.default_rng(cfg.seed)
    blocks, labels = [], []
    for b in cfg.bundles:
        blocks.append(resample_batch(_bundle_streamlines(b, rng), NUM_POINTS))
        labels.append(np.full(b.count, b.label))
    if cfg.outliers:
        lo, hi = (np.asarray(v) for v in cfg.volume)
        cps = lo + (hi - lo) * rng.random((cfg.outliers, 4, 3))
        t = np.linspace(0.0, 1.0, DENSE_SAMPLES)
        curves = np.stack([bezier(cp, t) for cp in cps])
        if cfg.outlier_jitter:
            curves = curves + rng.normal(0.0, cfg.outlier_jitter, size=curves.shape)
        blocks.append(resample_batch(curves, NUM_POINTS))
        labels.append(np.full(cfg.outliers, cfg.outlier_label))
    pts = np.concatenate(blocks)
    lab = np.concatenate(labels)
    flip = rng.random(len(pts)) < cfg.flip_prob
    pts[flip] = pts[flip, ::-1]
    order = rng.permutation(len(pts))
    return Tractogram(pts[order], lab[order])


def default_benchmark_config(
    num_bundles: int, per_bundle: int, outliers: int, seed: int = 0
) -> SynthConfig:
    """Well-separated bundles inside the unit cube.

    The cube is cut into a ``g**3`` lattice of cells; each bundle owns one
    cell and its control points stay inside the cell shrunk by half the
    minimum separation on every side, so centerlines of different bundles
    are at least ``MIN_SEPARATION`` apart.  Endpoints sit near a randomly
    chosen pair of opposite corners of the shrunk cell, interior control
    points anywhere inside it.  Labels are ``0..num_bundles-1``; outliers
    get ``num_bundles``.
    """
    if num_bundles < 2:
        raise ConfigInvalid("need at least 2 bundles")
    g = max(2, math.ceil(round(num_bundles ** (1 / 3), 9)))
    side = 1.0 / g - MIN_SEPARATION
    if side < _MIN_CELL:
        raise TooManyBundles(f"{num_bundles} bundles cannot be separated by {MIN_SEPARATION} in the unit cube")
    rng = np.random.default_rng(seed)
    cells = rng.choice(g**3, size=num_bundles, replace=False)
    corners = np.array([[i >> 2 & 1, i >> 1 & 1, i & 1] for i in range(8)], dtype=np.float64)
    bundles = []
    for label, cell in enumerate(cells):
        ijk = np.array(np.unravel_index(cell, (g, g, g)), dtype=np.float64)
        lo = ijk / g + MIN_SEPARATION / 2
        c0 = corners[rng.integers(8)]
        ends = np.stack([c0, 1 - c0])
        # jitter the lattice endpoints inward by up to 15% of the cell
        ends = np.abs(ends - 0.15 * rng.random((2, 3)))
        inner = rng.random((2, 3))
        cp = lo + side * np.stack([ends[0], inner[0], inner[1], ends[1]])
        bundles.append(BundleSpec(cp, spread=0.02, jitter=0.005, count=per_bundle, label=label))
    return SynthConfig(tuple(bundles), outliers=outliers, outlier_label=num_bundles, seed=seed)


def config_to_dict(cfg: SynthConfig) -> dict:
    d = asdict(cfg)
    d["bundles"] = [
        {**b, "control_points": [list(p) for p in b["control_points"]]} for b in d["bundles"]
    ]
    d["volume"] = [list(v) for v in d["volume"]]
    return d


def config_from_dict(d: dict) -> SynthConfig:
    try:
        return SynthConfig(**{**d, "bundles": tuple(BundleSpec(**b) for b in d["bundles"])})
    except (TypeError, KeyError) as exc:
        raise ConfigInvalid(f"bad synth config: {exc}") from exc


def dumps_config(cfg: SynthConfig) -> str:
    return json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n"


def loads_config(text: str) -> SynthConfig:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"synth config is not valid JSON: {exc}") from exc
    return config_from_dict(d)
