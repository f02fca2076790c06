"""File formats: SLF streamlines, PTPC checkpoints, label lists, bundle maps.

SLF (little-endian)::

    b"SLF1" | u32 count | count x (u32 npoints | npoints*3 f32)

PTPC (little-endian)::

    b"PTPC" | u32 version | u32 meta_len | meta (UTF-8 JSON)
    | per tensor, sorted by name: u16 name_len | name | u8 rank | rank x u32 | f32 data

The tensor table runs to end of file.  Labels are one decimal integer per
line; bundle maps are ``cluster<TAB>bundle`` lines with ``#`` comments and an
optional ``# outlier=<bundle>`` directive.
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

from .core import NUM_POINTS, Tractogram, resample, resample_batch
from .errors import (
    BadMagic,
    CountMismatch,
    LengthMismatch,
    MissingTensor,
    ParseError,
    ShapeMismatch,
    SparseMap,
    TruncatedFile,
    VersionUnsupported,
)
from .nn.model import EncoderConfig, param_shapes
from .pipeline import ClusterBundleMap, ModelCheckpoint

SLF_MAGIC = b"SLF1"
CKPT_MAGIC = b"PTPC"
CKPT_VERSION = 1


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = memoryview(buf)
        self.pos = 0

    def remaining(self) -> int:
        return len(self.buf) - self.pos

    def take(self, n: int) -> memoryview:
        if n > self.remaining():
            raise TruncatedFile(f"need {n} bytes at offset {self.pos}, {self.remaining()} left")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def write_slf(polylines) -> bytes:
    parts = [SLF_MAGIC, struct.pack("<I", len(polylines))]
    for p in polylines:
        arr = np.asarray(p, dtype="<f4")
        if arr.ndim != 2 or arr.shape[1] != 3 or len(arr) < 2:
            raise ValueError(f"SLF streamlines need shape (m>=2, 3), got {arr.shape}")
        parts.append(struct.pack("<I", len(arr)))
        parts.append(arr.tobytes())
    return b"".join(parts)


def read_slf(buf: bytes) -> list[np.ndarray]:
    r = _Reader(buf)
    if bytes(r.take(4)) != SLF_MAGIC:
        raise BadMagic("not an SLF file")
    (count,) = r.unpack("<I")
    out = []
    for i in range(count):
        (npts,) = r.unpack("<I")
        if npts < 2:
            raise ParseError(f"streamline {i} has {npts} points, need >= 2")
        raw = r.take(12 * npts)
        out.append(np.frombuffer(raw, dtype="<f4").reshape(npts, 3).astype(np.float32))
    if r.remaining():
        raise CountMismatch(f"{r.remaining()} trailing bytes after {count} declared streamlines")
    return out


def write_slf_file(path, polylines) -> None:
    with open(path, "wb") as fh:
        fh.write(write_slf(polylines))


def read_slf_file(path) -> list[np.ndarray]:
    with open(path, "rb") as fh:
        return read_slf(fh.read())


def write_labels(labels) -> str:
    return "".join(f"{int(x)}\n" for x in labels)


def read_labels(text: str) -> np.ndarray:
    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        try:
            out.append(int(line.strip()))
        except ValueError:
            raise ParseError(f"line {lineno}: {line!r} is not an integer label") from None
    return np.array(out, dtype=np.int64)


def write_labels_file(path, labels) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(write_labels(labels))


def read_labels_file(path) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        return read_labels(fh.read())


def read_bundle_map(text: str) -> ClusterBundleMap:
    pairs: dict[int, int] = {}
    outlier = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("outlier="):
                try:
                    outlier = int(body.split("=", 1)[1])
                except ValueError:
                    raise ParseError(f"line {lineno}: bad outlier directive") from None
            continue
        fields = line.split("\t")
        if len(fields) != 2:
            raise ParseError(f"line {lineno}: expected 'cluster<TAB>bundle', got {raw!r}")
        try:
            c, b = int(fields[0]), int(fields[1])
        except ValueError:
            raise ParseError(f"line {lineno}: non-integer field in {raw!r}") from None
        if c < 0 or b < 0:
            raise ParseError(f"line {lineno}: ids must be non-negative")
        if c in pairs:
            raise ParseError(f"line {lineno}: cluster {c} mapped twice")
        pairs[c] = b
    if not pairs:
        raise ParseError("bundle map is empty")
    n = max(pairs) + 1
    missing = sorted(set(range(n)) - pairs.keys())
    if missing:
        raise SparseMap(f"clusters {missing[:10]} missing from 0..{n - 1}")
    return ClusterBundleMap(np.array([pairs[c] for c in range(n)]), outlier)


def write_bundle_map(m: ClusterBundleMap) -> str:
    head = f"# outlier={m.outlier}\n" if m.outlier is not None else ""
    return head + "".join(f"{c}\t{b}\n" for c, b in enumerate(m.mapping))


def read_bundle_map_file(path) -> ClusterBundleMap:
    with open(path, encoding="utf-8") as fh:
        return read_bundle_map(fh.read())


def _metadata(model: ModelCheckpoint) -> dict:
    return {
        "embedding_mode": model.embedding_mode,
        "encoder": model.encoder.to_dict(),
        "norm": model.encoder.norm,
        "num_classes": model.encoder.num_classes,
        "train": model.train,
        "weight_decay_coupling": model.weight_decay_coupling,
    }


def checkpoint_to_bytes(model: ModelCheckpoint) -> bytes:
    meta = json.dumps(_metadata(model), sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [CKPT_MAGIC, struct.pack("<II", CKPT_VERSION, len(meta)), meta]
    for name in sorted(model.params):
        arr = np.ascontiguousarray(model.params[name], dtype="<f4")
        key = name.encode("utf-8")
        parts.append(struct.pack("<H", len(key)) + key)
        parts.append(struct.pack(f"<B{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def checkpoint_from_bytes(buf: bytes) -> ModelCheckpoint:
    r = _Reader(buf)
    if bytes(r.take(4)) != CKPT_MAGIC:
        raise BadMagic("not a PTPC checkpoint")
    version, meta_len = r.unpack("<II")
    if version != CKPT_VERSION:
        raise VersionUnsupported(f"checkpoint version {version}, reader supports {CKPT_VERSION}")
    try:
        meta = json.loads(bytes(r.take(meta_len)).decode("utf-8"))
        encoder = EncoderConfig(**meta["encoder"])
        mode = meta["embedding_mode"]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad checkpoint metadata: {exc}") from exc

    tensors: dict[str, np.ndarray] = {}
    while r.remaining():
        (name_len,) = r.unpack("<H")
        try:
            name = bytes(r.take(name_len)).decode("utf-8")
        except UnicodeDecodeError:
            raise ParseError("tensor name is not UTF-8") from None
        (rank,) = r.unpack("<B")
        dims = r.unpack(f"<{rank}I")
        count = int(np.prod(dims, dtype=np.int64))
        data = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(dims).astype(np.float32)
        if name in tensors:
            raise ParseError(f"duplicate tensor {name!r}")
        tensors[name] = data

    if meta.get("num_classes", encoder.num_classes) != encoder.num_classes:
        raise ShapeMismatch("metadata class count disagrees with encoder config")
    expected = param_shapes(encoder)
    for name, shape in expected.items():
        if name not in tensors:
            raise MissingTensor(f"checkpoint lacks tensor {name!r}")
        if tensors[name].shape != shape:
            raise ShapeMismatch(f"tensor {name!r} has shape {tensors[name].shape}, expected {shape}")
    extra = sorted(tensors.keys() - expected.keys())
    if extra:
        raise ParseError(f"unexpected tensors {extra}")
    return ModelCheckpoint(
        encoder=encoder,
        embedding_mode=mode,
        params=tensors,
        train=meta.get("train", {}),
        weight_decay_coupling=meta.get("weight_decay_coupling", "l2"),
    )


def save_checkpoint(model: ModelCheckpoint, path: str | os.PathLike) -> None:
    with open(path, "wb") as fh:
        fh.write(checkpoint_to_bytes(model))


def load_checkpoint(path: str | os.PathLike) -> ModelCheckpoint:
    with open(path, "rb") as fh:
        return checkpoint_from_bytes(fh.read())


def polylines_to_tractogram(polylines, labels=None) -> Tractogram:
    """Resample raw polylines to fixed-length streamlines."""
    if labels is not None and len(labels) != len(polylines):
        raise LengthMismatch(f"{len(labels)} labels for {len(polylines)} streamlines")
    lengths = {len(p) for p in polylines}
    if len(lengths) == 1:
        pts = resample_batch(np.stack(polylines), NUM_POINTS)
    else:
        pts = np.array([resample(p, NUM_POINTS) for p in polylines]).reshape(-1, NUM_POINTS, 3)
    return Tractogram(pts, labels)


def load_tractogram(path, labels_path=None) -> Tractogram:
    labels = None if labels_path is None else read_labels_file(labels_path)
    return polylines_to_tractogram(read_slf_file(path), labels)
