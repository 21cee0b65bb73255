"""Wall-clock comparison of the injection methods on random features."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .affinity import AffinityConfig, cosine_affinity, knn_affinity
from .config import ExperimentConfig
from .features import FeatureMap, FlatFeatures
from .metrics import format_table, write_csv
from .style_injection import (
    InjectionConfig,
    adain_inject,
    cosine_procrustes,
    weighted_procrustes,
)

# Module logger
logger = logging.getLogger(__name__)

BENCH_METHODS = ("cosine_svd", "knn_svd", "adain", "cosine_factorized")
BENCH_HEADER = ["method", "n", "c", "repetitions", "median_s", "p25_s", "p75_s", "min_s"]


@dataclass(frozen=True)
class BenchRow:
    method: str
    n: int
    c: int
    repetitions: int
    median: float
    p25: float
    p75: float
    minimum: float

    def as_list(self) -> list:
        return [
            self.method,
            self.n,
            self.c,
            self.repetitions,
            f"{self.median:.6g}",
            f"{self.p25:.6g}",
            f"{self.p75:.6g}",
            f"{self.minimum:.6g}",
        ]


def time_call(fn: Callable[[], object], repetitions: int) -> np.ndarray:
    """Seconds per call over ``repetitions`` calls, after one untimed warm-up call."""
    fn()
    timings = np.empty(repetitions)
    for i in range(repetitions):
        start = time.perf_counter()
        fn()
        timings[i] = time.perf_counter() - start
    return timings


def method_calls(
    src: FlatFeatures, web: FlatFeatures, k: int
) -> dict[str, Callable[[], object]]:
    """One closure per method; both SVD paths include building their affinity."""
    aff_cfg = AffinityConfig()
    knn_cfg = AffinityConfig(mode="knn", k=k)
    src_map = FeatureMap(src.data.reshape(src.count, 1, src.channels))
    web_map = FeatureMap(web.data.reshape(web.count, 1, web.channels))
    adain_cfg = InjectionConfig(method="adain")
    return {
        "cosine_svd": lambda: weighted_procrustes(src, web, cosine_affinity(src, web, aff_cfg)),
        "knn_svd": lambda: weighted_procrustes(src, web, knn_affinity(src, web, knn_cfg)),
        "adain": lambda: adain_inject(src_map, web_map, adain_cfg),
        "cosine_factorized": lambda: cosine_procrustes(src, web),
    }


def run_benchmark(
    sizes: Sequence[int],
    channels: Sequence[int],
    repetitions: int = 10,
    k: int = 5,
    seed: int = 0,
) -> list[BenchRow]:
    """Time every method for each ``(N, C)`` with ``N_s = N_w = N``."""
    rng = np.random.default_rng(seed)
    rows = []
    for n in sizes:
        for c in channels:
            src = FlatFeatures(rng.standard_normal((n, c)).astype(np.float32))
            web = FlatFeatures(rng.standard_normal((n, c)).astype(np.float32))
            for method, fn in method_calls(src, web, k).items():
                t = time_call(fn, repetitions)
                p25, median, p75 = np.percentile(t, [25, 50, 75])
                rows.append(BenchRow(method, n, c, repetitions, median, p25, p75, float(t.min())))
                logger.info("%-17s N=%-5d C=%-3d median %.4gs", method, n, c, median)
    return rows


def cmd_bench(cfg: ExperimentConfig, seed: int = 0):
    """Run the benchmark configured in ``[bench]`` and write ``bench.csv``."""
    b = cfg.bench
    rows = run_benchmark(b.sizes, b.channels, b.repetitions, b.knn_k, seed)
    out = cfg.out_dir / "bench.csv"
    write_csv(out, BENCH_HEADER, [row.as_list() for row in rows])
    print(format_table(BENCH_HEADER, [row.as_list() for row in rows]))
    logger.info("Wrote benchmark to %s", out)
    return out
