"""Throughput benchmark of the trilinear LUT engine."""
from __future__ import annotations

import os
import statistics
import time
from dataclasses import dataclass

import numpy as np

from .lut import Lut3D, apply_trilinear_parallel


@dataclass(frozen=True)
class BenchResult:
    width: int
    height: int
    n: int
    threads: int
    repeats: int
    serial_seconds: float
    parallel_seconds: float
    bitwise_equal: bool

    @property
    def megapixels(self) -> float:
        return self.width * self.height / 1e6

    @property
    def serial_mpix_per_s(self) -> float:
        return self.megapixels / self.serial_seconds

    @property
    def parallel_mpix_per_s(self) -> float:
        return self.megapixels / self.parallel_seconds

    def format(self) -> str:
        return "\n".join([
            f"frame {self.width}x{self.height} ({self.megapixels:.3f} MPix), LUT N={self.n}, float32, {self.repeats} repeats",
            f"serial:             median {self.serial_seconds * 1e3:10.3f} ms  {self.serial_mpix_per_s:10.4g} MPix/s",
            f"parallel ({self.threads:>2} thr): median {self.parallel_seconds * 1e3:10.3f} ms  {self.parallel_mpix_per_s:10.4g} MPix/s",
            f"parallel == serial bitwise: {'pass' if self.bitwise_equal else 'FAIL'}",
        ])


def default_threads() -> int:
    return max(2, os.cpu_count() or 1)


def _median_time(fn, repeats: int) -> tuple[float, np.ndarray]:
    times, out = [], None
    for _ in range(repeats):
        start = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - start)
    # a zero reading on tiny frames would make the rate infinite
    return max(statistics.median(times), 1e-9), out


def run_bench(width: int, height: int, n: int = 33, threads: int | None = None,
              repeats: int = 10, seed: int = 0) -> BenchResult:
    """Time serial and threaded lookups of a random frame through a random LUT."""
    if width < 1 or height < 1:
        raise ValueError(f"frame size must be positive, got {width}x{height}")
    if n < 2:
        raise ValueError(f"LUT size must be at least 2, got {n}")
    if repeats < 1:
        raise ValueError("repeats must be positive")
    threads = default_threads() if threads is None else threads
    if threads < 1:
        raise ValueError("threads must be positive")
    rng = np.random.default_rng(seed)
    image = rng.random((height, width, 3), dtype=np.float32)
    lut = Lut3D.from_array(rng.random((3, n, n, n), dtype=np.float32), dtype=np.float32)
    serial_t, serial = _median_time(lambda: apply_trilinear_parallel(lut, image, threads=1), repeats)
    parallel_t, parallel = _median_time(lambda: apply_trilinear_parallel(lut, image, threads=threads), repeats)
    equal = serial.dtype == parallel.dtype and serial.tobytes() == parallel.tobytes()
    return BenchResult(width, height, n, threads, repeats, serial_t, parallel_t, equal)
