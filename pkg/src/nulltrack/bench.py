"""Projector micro-benchmark: whiten + correlation + eigendecomposition + projector."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from nulltrack.errors import ValidationError
from nulltrack.linalg import (
    ThresholdPolicy,
    default_ridge,
    nullspace_projector,
    regularized_correlation,
    whiten_matrix,
)

MAX_BENCH_C = 1024
MIN_REPS = 10


@dataclass(frozen=True)
class BenchStats:
    c: int
    n: int
    reps: int
    mean_ms: float
    p50_ms: float
    p95_ms: float

    def csv_row(self) -> str:
        return (
            f"{self.c},{self.n},{self.reps},"
            f"{self.mean_ms:.6g},{self.p50_ms:.6g},{self.p95_ms:.6g}"
        )


CSV_HEADER = "c,n,reps,mean_ms,p50_ms,p95_ms"


def build_projector_once(raw: np.ndarray, policy: ThresholdPolicy):
    """One full projector construction from raw features; the timed unit."""
    zm = whiten_matrix(raw)
    m = regularized_correlation(zm, default_ridge(zm))
    return nullspace_projector(m, policy)


def bench_projector(
    c: int,
    n: int,
    reps: int,
    seed: int = 0,
    policy: ThresholdPolicy = ThresholdPolicy(),
) -> BenchStats:
    """Time the projector chain over seeded random features."""
    if c > MAX_BENCH_C:
        raise ValidationError(f"bench supports C <= {MAX_BENCH_C}, got {c}")
    if reps < MIN_REPS:
        raise ValidationError(f"bench needs reps >= {MIN_REPS}, got {reps}")
    rng = np.random.default_rng(seed)
    inputs = [rng.normal(size=(c, n)) for _ in range(reps)]
    # Warm-up outside the timed region (JIT compilation, allocator).
    build_projector_once(inputs[0], policy)
    times = []
    for raw in inputs:
        t0 = time.perf_counter()
        build_projector_once(raw, policy)
        times.append((time.perf_counter() - t0) * 1e3)
    times = np.asarray(times)
    return BenchStats(
        c=c,
        n=n,
        reps=reps,
        mean_ms=float(times.mean()),
        p50_ms=float(np.percentile(times, 50)),
        p95_ms=float(np.percentile(times, 95)),
    )
