"""Flip-invariant and raw streamline embeddings.

The flip-invariant embedding pairs point ``k`` with its mirror ``16 - k``
(1-based) and keeps three symmetric functions of each pair:

* ``emb1[k] = (v[k] + v[16-k]) / 2`` for k = 1..8 (row 8 is ``v[8]``)
* ``emb2[k] = |v[k] - v[16-k]| / 2`` for k = 1..7
* ``emb3[k] = f(v[k] v[15-k] + v[k+1] v[16-k])`` for k = 1..7, with the
  range compression ``f(x) = sign(x) sqrt(|x|) / 2``

all componentwise.  Every term is a commutative sum or product of operands
that swap under reversal, so the result is bitwise identical for ``v`` and
``reverse(v)``.

Because every operation is componentwise, each coordinate axis is embedded
independently.  Reversing a single axis' sequence therefore leaves the
embedding unchanged too, and :func:`reconstruct` can only recover the
streamline up to independent per-axis reversal.  It raises
:class:`AmbiguousReconstruction` (carrying every consistent candidate) when
more than one streamline-up-to-reversal fits.
"""

from __future__ import annotations

import itertools

import numpy as np

from .core import NUM_POINTS
from .errors import AmbiguousReconstruction, InconsistentEmbedding, ShapeMismatch

FLIP_INVARIANT_DIM = 66
RAW_DIM = 45
DEGENERACY_TOL = 0.0

_LO = np.arange(8)  # 0-based k - 1
_HI = 14 - _LO  # mirror index 16 - k, 0-based


def range_compress(x):
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.sqrt(np.abs(x)) / 2


def range_expand(y):
    """Inverse of :func:`range_compress`."""
    y = np.asarray(y, dtype=np.float64)
    return np.sign(y) * (2 * y) ** 2


def _check(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-2:] != (NUM_POINTS, 3):
        raise ShapeMismatch(f"expected (..., {NUM_POINTS}, 3) streamlines, got {v.shape}")
    return v


def flip_invariant_parts(v) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(emb1, emb2, emb3)`` with shapes (..., 8, 3), (..., 7, 3), (..., 7, 3).

    ``emb3`` is range-compressed.
    """
    v = _check(v)
    emb1 = 0.5 * (v[..., _LO, :] + v[..., _HI, :])
    emb2 = 0.5 * np.abs(v[..., _LO[:7], :] - v[..., _HI[:7], :])
    i = np.arange(7)
    products = v[..., i, :] * v[..., 13 - i, :] + v[..., i + 1, :] * v[..., 14 - i, :]
    return emb1, emb2, range_compress(products)


def flip_invariant_embed(v) -> np.ndarray:
    """Embed streamline(s) into the (..., 22, 3) flip-invariant representation."""
    return np.concatenate(flip_invariant_parts(v), axis=-2)


def raw_embed(v) -> np.ndarray:
    """Point-major flatten (..., 15, 3) -> (..., 45)."""
    v = _check(v)
    return v.reshape(*v.shape[:-2], RAW_DIM)


def embed_tokens(v, mode: str) -> np.ndarray:
    """Model input features for a stack of streamlines: 66-d or 45-d vectors."""
    if mode == "flip_invariant":
        e = flip_invariant_embed(v)
        return e.reshape(*e.shape[:-2], FLIP_INVARIANT_DIM)
    if mode == "flip_augmented":
        return raw_embed(v)
    raise ValueError(f"unknown embedding mode {mode!r}")


def input_dim(mode: str) -> int:
    return {"flip_invariant": FLIP_INVARIANT_DIM, "flip_augmented": RAW_DIM}[mode]


def _split(e) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    e = np.asarray(e, dtype=np.float64)
    if e.shape == (FLIP_INVARIANT_DIM,):
        e = e.reshape(22, 3)
    if e.shape != (22, 3):
        raise ShapeMismatch(f"expected a (22, 3) embedding, got {e.shape}")
    return e[:8], e[8:15], e[15:]


def _axis_runs(b: np.ndarray) -> list[list[int]]:
    """Maximal runs of consecutive pair indices whose pair values differ."""
    runs, cur = [], []
    for k in range(7):
        if b[k] > DEGENERACY_TOL:
            cur.append(k)
        elif cur:
            runs.append(cur)
            cur = []
    if cur:
        runs.append(cur)
    return runs


def _axis_signs(a: np.ndarray, b: np.ndarray, p: np.ndarray, run: list[int]) -> np.ndarray:
    """Relative orientation of each pair in a run, first pair fixed to +1.

    With ``v[k] = a[k] + s[k] b[k]`` and ``v[16-k] = a[k] - s[k] b[k]`` the
    product term expands to ``2 a[k] a[k+1] - 2 s[k] s[k+1] b[k] b[k+1]``.
    """
    signs = np.ones(len(run))
    for j in range(1, len(run)):
        k = run[j - 1]
        den = 2 * b[k] * b[k + 1]
        # an underflowed denominator means both signs re-embed identically
        rel = (2 * a[k] * a[k + 1] - p[k]) / den if den > 0 else 1.0
        signs[j] = signs[j - 1] * (1.0 if rel >= 0 else -1.0)
    return signs


def reconstruction_candidates(e) -> list[np.ndarray]:
    """All streamlines consistent with embedding ``e``, one per reversal pair.

    The first candidate is the canonical one: on every axis the first
    non-degenerate pair is ordered with the larger value first.
    """
    emb1, emb2, emb3 = _split(e)
    products = range_expand(emb3)
    base = np.empty((NUM_POINTS, 3))
    base[7] = emb1[7]
    # (axis, run, per-pair relative signs); each run carries one free sign
    free = []
    for ax in range(3):
        a, b, p = emb1[:, ax], emb2[:, ax], products[:, ax]
        base[:7, ax] = a[:7]
        base[_HI[:7], ax] = a[:7]
        for run in _axis_runs(b):
            free.append((ax, run, _axis_signs(a, b, p, run)))

    def build(choice):
        w = base.copy()
        for (ax, run, rel), s in zip(free, choice):
            for k, r in zip(run, rel):
                d = s * r * emb2[k, ax]
                w[k, ax] += d
                w[14 - k, ax] -= d
        return w

    if not free:
        return [base]
    # fixing the first free sign removes the global-reversal duplicate
    choices = itertools.product([1.0, -1.0], repeat=len(free) - 1)
    return [build((1.0,) + c) for c in choices]


def reconstruct(e, on_ambiguous: str = "raise", atol: float = 1e-4) -> np.ndarray:
    """Recover a streamline from its flip-invariant embedding.

    ``on_ambiguous="raise"`` raises :class:`AmbiguousReconstruction` when
    several streamlines (up to reversal) share the embedding;
    ``"commit"`` returns the canonical candidate instead.  The result always
    re-embeds to ``e`` within ``atol``.
    """
    if on_ambiguous not in ("raise", "commit"):
        raise ValueError(f"on_ambiguous must be 'raise' or 'commit', not {on_ambiguous!r}")
    target = np.concatenate(_split(e))
    cands = reconstruction_candidates(e)
    err = np.max(np.abs(flip_invariant_embed(cands[0]) - target))
    if not err <= atol:
        raise InconsistentEmbedding(
            f"no streamline reproduces this embedding (residual {err:.3g})"
        )
    if len(cands) > 1 and on_ambiguous == "raise":
        raise AmbiguousReconstruction(
            f"{len(cands)} streamlines share this embedding", candidates=cands
        )
    return cands[0]
