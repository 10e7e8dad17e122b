"""Abstract polymer gas: direct partition function and its cluster series."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from typing import Iterator, Sequence

from .graphs import CLUSTER_CAP, ConnectedSum, canonical_support


@dataclass(frozen=True)
class PolymerSystem:
    """Polymers are label sets; two polymers are compatible iff disjoint."""
    supports: tuple[tuple[int, ...], ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        if len(self.supports) != len(self.weights):
            raise ValueError("one weight per polymer")
        if len(set(self.supports)) != len(self.supports):
            raise ValueError("duplicate polymer")

    @classmethod
    def build(cls, supports, weights) -> "PolymerSystem":
        return cls(tuple(canonical_support(s) for s in supports), tuple(weights))

    @classmethod
    def all_subsets(cls, N: int, weight_of_size) -> "PolymerSystem":
        """Every subset of {1..N} with at least two labels, weighted by its size."""
        sups = [s for k in range(2, N + 1) for s in combinations(range(1, N + 1), k)]
        return cls(tuple(sups), tuple(weight_of_size(len(s)) for s in sups))

    def incompatibility(self):
        sets = [frozenset(s) for s in self.supports]
        return [[bool(a & b) for b in sets] for a in sets]

    def compatible_collections(self) -> Iterator[tuple[int, ...]]:
        """All sets of pairwise-disjoint polymers (as index tuples), the empty one included."""
        sets = [frozenset(s) for s in self.supports]

        def grow(start, used, chosen):
            yield chosen
            for p in range(start, len(sets)):
                if not sets[p] & used:
                    yield from grow(p + 1, used | sets[p], chosen + (p,))

        yield from grow(0, frozenset(), ())

    def partition_function(self) -> float:
        return math.fsum(math.prod(self.weights[p] for p in c) for c in self.compatible_collections())

    def cluster_coefficients(self, max_order: int) -> dict[tuple[int, ...], Fraction]:
        """Nonzero c_I for all multiplicity vectors with total <= max_order."""
        if max_order > CLUSTER_CAP:
            raise ValueError(f"max_order exceeds the cap of {CLUSTER_CAP}")
        cs = ConnectedSum(self.incompatibility())
        k = len(self.supports)
        out = {}
        for m in _vectors(k, max_order):
            c = cs.count(m)
            if c:
                out[m] = Fraction(c, math.prod(math.factorial(x) for x in m))
        return out

    def cluster_series(self, max_order: int) -> float:
        """Sum of c_I w^I over total multiplicity <= max_order (approximates log Z)."""
        terms = []
        for m, c in self.cluster_coefficients(max_order).items():
            terms.append(float(c) * math.prod(w ** x for w, x in zip(self.weights, m) if x))
        return math.fsum(terms)


def _vectors(k: int, max_total: int) -> Iterator[tuple[int, ...]]:
    def rec(i, left):
        if i == k:
            yield ()
            return
        for x in range(left + 1):
            for rest in rec(i + 1, left - x):
                yield (x,) + rest

    for v in rec(0, max_total):
        if any(v):
            yield v
