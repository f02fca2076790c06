"""Streamline geometry: resampling, min-max normalization, reversal.

A polyline is an ``(m, 3)`` array with ``m >= 2``; a fixed streamline is a
``(15, 3)`` array.  Tractograms store their streamlines as one ``(N, 15, 3)``
float32 block; geometry is always computed in float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateStreamline, EmptyTractogram, LabelOutOfRange, ShapeMismatch

NUM_POINTS = 15


@dataclass(frozen=True)
class NormalizationParams:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=np.float64).reshape(3)
        hi = np.asarray(self.hi, dtype=np.float64).reshape(3)
        if np.any(lo > hi):
            raise ValueError(f"normalization min {lo} exceeds max {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)


@dataclass
class Tractogram:
    """Fixed-length streamlines with optional integer cluster labels."""

    streamlines: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        s = np.asarray(self.streamlines, dtype=np.float32)
        if s.ndim != 3 or s.shape[2] != 3:
            raise ShapeMismatch(f"expected (N, points, 3) streamlines, got {s.shape}")
        if not np.all(np.isfinite(s)):
            raise DegenerateStreamline("tractogram contains non-finite coordinates")
        self.streamlines = s
        if self.labels is not None:
            lab = np.asarray(self.labels)
            if lab.shape != (len(s),):
                raise ShapeMismatch(f"{len(lab)} labels for {len(s)} streamlines")
            if lab.size and (not np.issubdtype(lab.dtype, np.integer) or lab.min() < 0):
                raise LabelOutOfRange("labels must be non-negative integers")
            self.labels = lab.astype(np.int64)

    def __len__(self):
        return len(self.streamlines)

    def check_labels(self, num_classes: int) -> None:
        if self.labels is not None and self.labels.size and self.labels.max() >= num_classes:
            raise LabelOutOfRange(
                f"label {int(self.labels.max())} outside [0, {num_classes})"
            )


def _check_polyline(points) -> np.ndarray:
    p = np.asarray(points, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != 3 or len(p) < 2:
        raise DegenerateStreamline(f"polyline needs shape (m>=2, 3), got {p.shape}")
    if not np.all(np.isfinite(p)):
        raise DegenerateStreamline("polyline has non-finite coordinates")
    return p


def resample(points, n: int = NUM_POINTS) -> np.ndarray:
    """Resample a polyline to ``n`` points uniformly spaced in arc length.

    Linear interpolation at arc-length fractions ``k/(n-1)``.  Endpoints are
    copied, not interpolated, so they survive bitwise.
    """
    p = _check_polyline(points)
    seg = np.linalg.norm(np.diff(p, axis=0), axis=1)
    total = seg.sum()
    if not total > 0:
        raise DegenerateStreamline("polyline has zero arc length")
    keep = np.concatenate([[True], seg > 0])
    p = p[keep]
    s = np.concatenate([[0.0], np.cumsum(seg[seg > 0])])
    targets = np.linspace(0.0, s[-1], n)
    out = np.stack([np.interp(targets, s, p[:, a]) for a in range(3)], axis=1)
    out[0] = p[0]
    out[-1] = p[-1]
    return out


def resample_batch(polylines: np.ndarray, n: int = NUM_POINTS) -> np.ndarray:
    """Vectorized :func:`resample` for an ``(N, m, 3)`` stack of polylines."""
    p = np.asarray(polylines, dtype=np.float64)
    if p.ndim != 3 or p.shape[2] != 3 or p.shape[1] < 2:
        raise DegenerateStreamline(f"expected (N, m>=2, 3), got {p.shape}")
    seg = np.linalg.norm(np.diff(p, axis=1), axis=2)
    s = np.concatenate([np.zeros((len(p), 1)), np.cumsum(seg, axis=1)], axis=1)
    total = s[:, -1]
    if not np.all(total > 0):
        raise DegenerateStreamline("polyline has zero arc length")
    targets = total[:, None] * (np.arange(n) / (n - 1))[None, :]
    m = p.shape[1]
    # index of the segment containing each target: last i with s[i] <= t
    idx = np.empty((len(p), n), dtype=np.int64)
    for j in range(n):
        idx[:, j] = (s <= targets[:, j : j + 1]).sum(axis=1) - 1
    idx = np.clip(idx, 0, m - 2)
    rows = np.arange(len(p))[:, None]
    s0 = s[rows, idx]
    ds = s[rows, idx + 1] - s0
    frac = np.divide(targets - s0, ds, out=np.zeros_like(ds), where=ds > 0)
    frac = np.clip(frac, 0.0, 1.0)
    a = p[rows, idx]
    b = p[rows, idx + 1]
    out = a + frac[..., None] * (b - a)
    out[:, 0] = p[:, 0]
    out[:, -1] = p[:, -1]
    return out


def compute_normalization(t: Tractogram | np.ndarray) -> NormalizationParams:
    pts = t.streamlines if isinstance(t, Tractogram) else np.asarray(t)
    if pts.size == 0:
        raise EmptyTractogram("cannot normalize an empty tractogram")
    flat = pts.reshape(-1, 3).astype(np.float64)
    return NormalizationParams(flat.min(axis=0), flat.max(axis=0))


def normalize_points(points: np.ndarray, params: NormalizationParams) -> np.ndarray:
    """Map coordinates affinely so [min, max] becomes [-1, 1] per axis.

    Zero-extent axes map to 0.  Returns float64.
    """
    x = np.asarray(points, dtype=np.float64)
    extent = params.hi - params.lo
    flat = extent == 0
    out = 2.0 * (x - params.lo) / np.where(flat, 1.0, extent) - 1.0
    if np.any(flat):
        out[..., flat] = 0.0
    return out


def apply_normalization(t: Tractogram, params: NormalizationParams) -> Tractogram:
    return Tractogram(normalize_points(t.streamlines, params), t.labels)


def normalize(t: Tractogram) -> Tractogram:
    return apply_normalization(t, compute_normalization(t))


def reverse(v: np.ndarray) -> np.ndarray:
    """Reverse point order; works on a single streamline or a stack."""
    return np.asarray(v)[..., ::-1, :].copy()
