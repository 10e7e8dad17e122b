"""Labeled graphs and the combinatorial coefficients of the cluster expansion.

Graphs on labels 1..n are stored as an integer bitmask over the vertex pairs
in canonical order (1,2), (1,3), ..., (1,n), (2,3), ...
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import combinations
from typing import Iterable, Mapping, Sequence

ENUMERATION_CAP = 6
CLUSTER_CAP = 16


class CapExceeded(ValueError):
    pass


def _check_cap(n, lo=1, cap=ENUMERATION_CAP):
    if n < lo:
        raise ValueError(f"n must be >= {lo}, got {n}")
    if n > cap:
        raise CapExceeded(f"n={n} exceeds the enumeration cap of {cap}")


@lru_cache(maxsize=None)
def pair_order(n: int) -> tuple[tuple[int, int], ...]:
    """Canonical pair order on labels 1..n."""
    return tuple(combinations(range(1, n + 1), 2))


@lru_cache(maxsize=None)
def _pair_bit(n):
    return {p: k for k, p in enumerate(pair_order(n))}


def _adjacency(n, mask):
    adj = [0] * n
    for k, (i, j) in enumerate(pair_order(n)):
        if mask >> k & 1:
            adj[i - 1] |= 1 << (j - 1)
            adj[j - 1] |= 1 << (i - 1)
    return adj


def _connected_within(adj, verts):
    """True if the vertex bitmask `verts` induces a connected subgraph."""
    if verts == 0:
        return True
    seen = verts & -verts
    frontier = seen
    while frontier:
        v = (frontier & -frontier).bit_length() - 1
        frontier &= frontier - 1
        new = adj[v] & verts & ~seen
        seen |= new
        frontier |= new
    return seen == verts


@dataclass(frozen=True, order=True)
class LabeledGraph:
    n: int
    mask: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("graph needs at least one vertex")
        if self.mask < 0 or self.mask >> len(pair_order(self.n)):
            raise ValueError("edge mask out of range for n")

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> "LabeledGraph":
        bits = _pair_bit(n)
        mask = 0
        for e in edges:
            i, j = e
            if i == j:
                raise ValueError(f"self-loop at {i}")
            key = (min(i, j), max(i, j))
            if key not in bits:
                raise ValueError(f"edge {e} has an endpoint outside 1..{n}")
            if mask >> bits[key] & 1:
                raise ValueError(f"duplicate edge {key}")
            mask |= 1 << bits[key]
        return cls(n, mask)

    @property
    def edges(self) -> tuple[tuple[int, int], ...]:
        return tuple(p for k, p in enumerate(pair_order(self.n)) if self.mask >> k & 1)

    @property
    def num_edges(self) -> int:
        return bin(self.mask).count("1")

    @property
    def degrees(self) -> tuple[int, ...]:
        return tuple(bin(a).count("1") for a in _adjacency(self.n, self.mask))

    def is_connected(self) -> bool:
        return _connected_within(_adjacency(self.n, self.mask), (1 << self.n) - 1)

    def is_biconnected(self) -> bool:
        # literal definition: connected, and connected after deleting any one vertex
        adj = _adjacency(self.n, self.mask)
        full = (1 << self.n) - 1
        if self.n < 2 or not _connected_within(adj, full):
            return False
        return all(_connected_within(adj, full & ~(1 << v)) for v in range(self.n))

    def is_tree(self) -> bool:
        return self.num_edges == self.n - 1 and self.is_connected()

    def dump(self) -> str:
        return f"n:{self.n} edges:" + ",".join(f"{i}-{j}" for i, j in self.edges)


def parse_graph(line: str) -> LabeledGraph:
    head, _, tail = line.strip().partition(" ")
    if not head.startswith("n:") or not tail.startswith("edges:"):
        raise ValueError(f"malformed graph line: {line!r}")
    n = int(head[2:])
    body = tail[len("edges:"):]
    edges = [tuple(int(x) for x in tok.split("-")) for tok in body.split(",") if tok]
    return LabeledGraph.from_edges(n, edges)


def _scan(n, keep):
    return [g for g in (LabeledGraph(n, m) for m in range(1 << len(pair_order(n)))) if keep(g)]


def enumerate_connected(n: int) -> list[LabeledGraph]:
    _check_cap(n)
    return _scan(n, LabeledGraph.is_connected)


def enumerate_biconnected(n: int) -> list[LabeledGraph]:
    _check_cap(n, lo=2)
    return _scan(n, LabeledGraph.is_biconnected)


def enumerate_trees(n: int) -> list[LabeledGraph]:
    _check_cap(n)
    return _scan(n, LabeledGraph.is_tree)


def cayley_count(degrees: Sequence[int]) -> int:
    """Number of labeled trees with the given degree sequence."""
    m = len(degrees)
    if m < 2:
        raise ValueError("need at least two vertices")
    if any(d < 1 for d in degrees):
        raise ValueError("degrees must be positive")
    if sum(degrees) != 2 * (m - 1):
        raise ValueError(f"degree sum {sum(degrees)} != 2(m-1) = {2 * (m - 1)}")
    return math.factorial(m - 2) // math.prod(math.factorial(d - 1) for d in degrees)


def _compositions(k, m):
    if k == 1:
        yield (m,)
        return
    for first in range(1, m - k + 2):
        for rest in _compositions(k - 1, m - first):
            yield (first,) + rest


def gamma_count(k: int, m: int) -> int:
    """Ordered positive-integer solutions of d_1 + ... + d_k = m, counted one by one."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if m < k:
        return 0
    return sum(1 for _ in _compositions(k, m))


def gamma_bound_holds(k: int, m: int) -> bool:
    return gamma_count(k, m) <= Fraction(m ** (k - 1), math.factorial(k - 1))


def a_set_member(supports: Sequence[Iterable[int]], indices: Sequence[int]) -> bool:
    """Shared-label condition on a chosen subfamily of polymer supports.

    k = 2: the two supports share at least two labels.
    k >= 3: there are distinct labels v_1..v_k with v_l in V_{i_l} and V_{i_{l+1}}
    (cyclically, i_{k+1} = i_1).
    """
    k = len(indices)
    if k < 2:
        raise ValueError("need at least two indices")
    if len(set(indices)) != k:
        raise ValueError("indices must be distinct")
    if any(not 0 <= i < len(supports) for i in indices):
        raise ValueError("index out of range")
    sets = [frozenset(supports[i]) for i in indices]
    if k == 2:
        return len(sets[0] & sets[1]) >= 2
    links = [sorted(sets[l] & sets[(l + 1) % k]) for l in range(k)]

    def search(l, used):
        if l == k:
            return True
        return any(search(l + 1, used | {v}) for v in links[l] if v not in used)

    return search(0, frozenset())


# ---------------------------------------------------------------------------
# connected alternating sums


def canonical_support(labels: Iterable[int]) -> tuple[int, ...]:
    s = tuple(sorted(set(labels)))
    if not s or s[0] < 1:
        raise ValueError("a support is a nonempty set of positive labels")
    return s


@dataclass(frozen=True)
class MultiIndex:
    """Polymer supports with positive multiplicities, kept in sorted order."""
    entries: tuple[tuple[tuple[int, ...], int], ...]

    @classmethod
    def of(cls, mapping: Mapping[Iterable[int], int]) -> "MultiIndex":
        acc: dict[tuple[int, ...], int] = {}
        for sup, mult in mapping.items():
            if mult < 0:
                raise ValueError("multiplicities must be nonnegative")
            if mult:
                key = canonical_support(sup)
                acc[key] = acc.get(key, 0) + mult
        if not acc:
            raise ValueError("total multiplicity must be >= 1")
        return cls(tuple(sorted(acc.items())))

    @property
    def supports(self):
        return tuple(s for s, _ in self.entries)

    @property
    def multiplicities(self):
        return tuple(m for _, m in self.entries)

    @property
    def total(self) -> int:
        return sum(self.multiplicities)

    def factorial(self) -> int:
        return math.prod(math.factorial(m) for m in self.multiplicities)


class ConnectedSum:
    """Signed counts of connected spanning subgraphs of a blown-up incompatibility graph.

    Polymer p appears m_p times; copies of one polymer are mutually adjacent,
    copies of distinct polymers are adjacent iff the polymers are incompatible.
    ``count(m)`` returns sum over connected spanning subgraphs G of (-1)^|E(G)|.
    It is evaluated by peeling off the component that contains a fixed vertex,
    so the cost depends on the number of multiplicity vectors, not on 2^|E|.
    """

    def __init__(self, incompatible: Sequence[Sequence[bool]]):
        k = len(incompatible)
        self.k = k
        self.inc = [[bool(incompatible[i][j]) for j in range(k)] for i in range(k)]
        # nonempty pairwise-compatible sets of distinct polymers
        sets = []

        def grow(start, chosen):
            for p in range(start, k):
                if all(not self.inc[p][q] for q in chosen):
                    sets.append(chosen + (p,))
                    grow(p + 1, chosen + (p,))

        grow(0, ())
        self._compatible_sets = sets
        self._memo: dict[tuple[int, ...], int] = {}

    def _independent(self, m):
        if any(x > 1 for x in m):
            return False
        on = [p for p, x in enumerate(m) if x]
        return all(not self.inc[p][q] for p, q in combinations(on, 2))

    def count(self, m: Sequence[int]) -> int:
        m = tuple(m)
        if len(m) != self.k:
            raise ValueError("multiplicity vector has wrong length")
        if any(x < 0 for x in m) or not any(m):
            raise ValueError("multiplicities must be nonnegative with at least one positive")
        return self._count(m)

    def _count(self, m):
        hit = self._memo.get(m)
        if hit is not None:
            return hit
        g0 = next(p for p, x in enumerate(m) if x)
        total = 1 if self._independent(m) else 0
        for s in self._compatible_sets:
            ways = 1
            for p in s:
                avail = m[p] - (p == g0)
                if avail < 1:
                    ways = 0
                    break
                ways *= avail
            if ways:
                rest = list(m)
                for p in s:
                    rest[p] -= 1
                total -= ways * self._count(tuple(rest))
        self._memo[m] = total
        return total


def _incompatibility(supports):
    sets = [frozenset(s) for s in supports]
    return [[bool(a & b) for b in sets] for a in sets]


def phi_truncated(supports: Sequence[Iterable[int]]) -> int:
    """Truncated function of an ordered list of polymer supports (integer)."""
    n = len(supports)
    if n < 1:
        raise ValueError("need at least one support")
    _check_cap(n, cap=CLUSTER_CAP)
    grouped: dict[tuple[int, ...], int] = {}
    for s in supports:
        key = canonical_support(s)
        grouped[key] = grouped.get(key, 0) + 1
    keys = sorted(grouped)
    return ConnectedSum(_incompatibility(keys)).count([grouped[k] for k in keys])


def cluster_coefficient(I: MultiIndex | Mapping) -> Fraction:
    """Exact c_I: (1/I!) times the signed count of connected spanning subgraphs of G_I."""
    if not isinstance(I, MultiIndex):
        I = MultiIndex.of(I)
    _check_cap(I.total, cap=CLUSTER_CAP)
    cs = ConnectedSum(_incompatibility(I.supports))
    return Fraction(cs.count(I.multiplicities), I.factorial())


def connected_sum_bruteforce(supports: Sequence[Iterable[int]]) -> int:
    """Reference version of phi_truncated by scanning every edge subset (small n only)."""
    n = len(supports)
    _check_cap(n)
    sets = [frozenset(s) for s in supports]
    allowed = 0
    for k, (i, j) in enumerate(pair_order(n)):
        if sets[i - 1] & sets[j - 1]:
            allowed |= 1 << k
    total = 0
    sub = allowed
    while True:
        g = LabeledGraph(n, sub)
        if g.is_connected():
            total += -1 if g.num_edges % 2 else 1
        if sub == 0:
            break
        sub = (sub - 1) & allowed
    return total
