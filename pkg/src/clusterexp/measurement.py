"""Numbers with error bars, and the seeded Monte Carlo driver shared by the integrators."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

METHODS = ("exact", "quadrature", "monte-carlo")


@dataclass(frozen=True)
class Measurement:
    value: float
    stderr: float = 0.0
    method: str = "exact"
    seed: int | None = None
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if not self.stderr >= 0:
            raise ValueError("stderr must be nonnegative")
        if self.method == "exact" and self.stderr != 0:
            raise ValueError("exact results carry zero stderr")

    def __float__(self):
        return float(self.value)

    def record(self, op: str, params: dict) -> dict:
        return {"op": op, "params": params, "value": float(self.value),
                "stderr": float(self.stderr), "method": self.method, "seed": self.seed}

    def to_json(self, op: str, params: dict) -> str:
        return json.dumps(self.record(op, params), sort_keys=True)


@dataclass
class RunningMoments:
    """Chan/Welford accumulator; merging is exact in the order it is applied."""
    n: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def add_batch(self, x: np.ndarray):
        x = np.asarray(x, dtype=float)
        if x.size == 0:
            return
        other = RunningMoments(x.size, float(x.mean()), float(((x - x.mean()) ** 2).sum()))
        self.merge(other)

    def merge(self, other: "RunningMoments"):
        if other.n == 0:
            return
        if self.n == 0:
            self.n, self.mean, self.m2 = other.n, other.mean, other.m2
            return
        n = self.n + other.n
        delta = other.mean - self.mean
        self.mean += delta * other.n / n
        self.m2 += other.m2 + delta * delta * self.n * other.n / n
        self.n = n

    @property
    def stderr(self) -> float:
        if self.n < 2:
            return math.inf
        return math.sqrt(self.m2 / (self.n - 1) / self.n)


def split_counts(total: int, workers: int) -> list[int]:
    base, extra = divmod(total, workers)
    return [base + (w < extra) for w in range(workers)]


def mc_mean(sampler: Callable[[np.random.Generator, int], np.ndarray], samples: int,
            seed: int, workers: int = 1, chunk: int = 1 << 16) -> RunningMoments:
    """Mean of sampler draws using `workers` independent streams spawned from `seed`.

    Streams are consumed in index order, so the result depends only on
    (seed, workers, samples, chunk).
    """
    if samples <= 0:
        raise ValueError("Monte Carlo budget must be positive")
    if workers < 1:
        raise ValueError("workers must be >= 1")
    streams = np.random.SeedSequence(seed).spawn(workers)
    total = RunningMoments()
    for ss, count in zip(streams, split_counts(samples, workers)):
        rng = np.random.default_rng(ss)
        acc = RunningMoments()
        left = count
        while left > 0:
            k = min(chunk, left)
            acc.add_batch(sampler(rng, k))
            left -= k
        total.merge(acc)
    return total
