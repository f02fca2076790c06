"""Inference throughput sweeps over tractogram size and context size."""

from __future__ import annotations

import csv
import io
import math
import tracemalloc
from dataclasses import dataclass

from .core import Tractogram
from .pipeline import ModelCheckpoint, infer
from .synth import default_benchmark_config, generate

CSV_COLUMNS = ("size", "context", "repeats", "times_s", "mean_s", "streamlines_per_s", "peak_mem_mb")


@dataclass
class BenchRow:
    size: int
    context: int
    times: list[float]
    peak_bytes: int

    @property
    def mean_seconds(self) -> float:
        return sum(self.times) / len(self.times)

    @property
    def streamlines_per_second(self) -> float:
        return self.size / self.mean_seconds if self.mean_seconds > 0 else math.inf

    def as_record(self) -> dict:
        return {
            "size": self.size,
            "context": self.context,
            "repeats": len(self.times),
            "times_s": ";".join(f"{t:.6f}" for t in self.times),
            "mean_s": f"{self.mean_seconds:.6f}",
            "streamlines_per_s": f"{self.streamlines_per_second:.1f}",
            "peak_mem_mb": f"{self.peak_bytes / 2**20:.1f}",
        }


def bench_tractogram(n: int, seed: int = 0) -> Tractogram:
    cfg = default_benchmark_config(10, math.ceil(n / 10), 0, seed)
    t = generate(cfg)
    return Tractogram(t.streamlines[:n], t.labels[:n])


def run_bench(
    model: ModelCheckpoint,
    sizes,
    contexts,
    repeat: int = 1,
    batch_sub: int = 512,
    threads: int = 1,
    seed: int = 0,
) -> list[BenchRow]:
    """Time ``infer`` for every (size, context) cell with identical weights and data.

    Peak memory is the tracemalloc high-water mark (numpy buffers included)
    during the cell's repeats.
    """
    if repeat < 1:
        raise ValueError("repeat must be >= 1")
    data = bench_tractogram(max(sizes), seed)
    # warm-up so one-time allocation and BLAS setup is not billed to the first cell
    infer(model, Tractogram(data.streamlines[: min(len(data), 64)]), 64, batch_sub, seed, threads)
    rows = []
    for size in sizes:
        t = Tractogram(data.streamlines[:size])
        for context in contexts:
            tracemalloc.start()
            try:
                times = [infer(model, t, context, batch_sub, seed, threads).seconds for _ in range(repeat)]
                _, peak = tracemalloc.get_traced_memory()
            finally:
                tracemalloc.stop()
            rows.append(BenchRow(size, context, times, peak))
    return rows


def rows_to_csv(rows: list[BenchRow]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r.as_record())
    return buf.getvalue()
