"""Polymer activities, irreducible coefficients and the tree-graph bound."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import product

import numpy as np

from .graphs import (ENUMERATION_CAP, CapExceeded, enumerate_biconnected,
                     enumerate_trees, pair_order, enumerate_connected)
from .measurement import Measurement, mc_mean
from .potential import BoxSpec, PairPotential, c_beta

DEFAULT_SAMPLES = 10**6


# ---------------------------------------------------------------------------
# signed graph sums evaluated on sampled Mayer factors


@lru_cache(maxsize=None)
def _subset_plan(n):
    """For every vertex subset S (bitmask) the pairs inside S and the splits used by the
    connected-sum recursion C(S) = W(S) - sum_{T < S, T contains min S} C(T) W(S \\ T)."""
    pairs = pair_order(n)
    inside = []
    splits = []
    for S in range(1 << n):
        inside.append([k for k, (i, j) in enumerate(pairs) if S >> (i - 1) & 1 and S >> (j - 1) & 1])
        low = S & -S
        rest = S & ~low
        sp = []
        sub = rest
        while sub:
            T = sub | low
            if T != S:
                sp.append((T, S & ~T))
            sub = (sub - 1) & rest
        if S and S != low:
            sp.append((low, rest))
        splits.append(sp)
    return inside, splits


def ursell(fvals: np.ndarray, n: int) -> np.ndarray:
    """Sum over connected graphs on n vertices of prod f_e, for a batch of Mayer factors.

    fvals has shape (batch, n(n-1)/2) in canonical pair order.
    """
    if n == 1:
        return np.ones(fvals.shape[0])
    inside, splits = _subset_plan(n)
    W = [None] * (1 << n)
    C = [None] * (1 << n)
    one = np.ones(fvals.shape[0])
    for S in range(1, 1 << n):
        w = one
        for k in inside[S]:
            w = w * (1.0 + fvals[:, k])
        W[S] = w
        if S & (S - 1) == 0:
            C[S] = one
            continue
        c = w.copy()
        for T, U in splits[S]:
            c -= C[T] * W[U]
        C[S] = c
    return C[(1 << n) - 1]


@lru_cache(maxsize=None)
def overlap_table(n: int, family: str) -> np.ndarray:
    """Table over edge masks M of sum_{g in family, E(g) subset of M} (-1)^|E(g)|.

    Evaluated at the overlap mask of a hard-core configuration, this is the
    family's graph sum of prod f.
    """
    E = len(pair_order(n))
    a = np.zeros(1 << E, dtype=np.int64)
    graphs = {"connected": enumerate_connected, "biconnected": enumerate_biconnected}[family](n)
    for g in graphs:
        a[g.mask] = -1 if g.num_edges % 2 else 1
    for b in range(E):
        # zeta transform over subsets, one edge at a time
        view = a.reshape(-1, 2, 1 << b)
        view[:, 1, :] += view[:, 0, :]
    return a


def _pair_arrays(n):
    pairs = np.array(pair_order(n), dtype=np.intp) - 1
    return pairs[:, 0], pairs[:, 1]


def _distances(q, box: BoxSpec | None):
    n = q.shape[1]
    i, j = _pair_arrays(n)
    x = q[:, i, :] - q[:, j, :]
    if box is not None and box.periodic:
        x -= box.ell * np.round(x / box.ell)
    return np.sqrt((x * x).sum(axis=-1))


def _overlap_masks(r, R):
    bits = (np.int64(1) << np.arange(r.shape[1], dtype=np.int64))
    return ((r <= R).astype(np.int64) * bits).sum(axis=1)


# ---------------------------------------------------------------------------
# exact 1D hard-rod integrals


@lru_cache(maxsize=None)
def gap_polytope_sums(n: int, family: str) -> tuple[Fraction, Fraction]:
    """Signed volume and first moment of the gap polytopes of n unit hard rods.

    With the points sorted and g_t >= 0 the gaps, graph g contributes the
    polytope {g : sum of the gaps spanned by each edge <= 1}, which has integer
    vertices. For a lattice polytope the weighted lattice-point count of its
    t-fold dilate is a polynomial in t whose leading coefficient is the integral
    of the weight, so exact counts at t = 0..D+1 pin both integrals down.
    Returns (sum_g (-1)^|E| vol(P_g), sum_g (-1)^|E| int_{P_g} sum_t g_t).
    """
    if n < 2:
        raise ValueError("need n >= 2")
    D = n - 1
    table = overlap_table(n, family)
    pairs = pair_order(n)
    counts, moments = [], []
    for t in range(D + 2):
        L = 0
        M = 0
        for g in product(range(t + 1), repeat=D):
            cum = np.concatenate(([0], np.cumsum(g)))
            mask = 0
            for k, (i, j) in enumerate(pairs):
                if cum[j - 1] - cum[i - 1] <= t:
                    mask |= 1 << k
            w = int(table[mask])
            L += w
            M += w * sum(g)
        counts.append(L)
        moments.append(M)
    return _leading(counts[: D + 1], D), _leading(moments, D + 1)


def _leading(values, degree):
    """Leading coefficient of the degree-`degree` polynomial through (t, values[t])."""
    # finite differences: Delta^k p(0) = k! * leading
    diffs = [Fraction(v) for v in values[: degree + 1]]
    for _ in range(degree):
        diffs = [b - a for a, b in zip(diffs, diffs[1:])]
    return diffs[0] / math.factorial(degree)


def hard_rod_integrals(n: int, R: float) -> tuple[float, float]:
    """I0 = int over R^{n-1} (one point fixed) of the connected sum, and the first moment I1.

    Precisely, for a domain [0, L] with L >= (n-1)R,
    int_{[0,L]^n} sum_{g connected} prod f = L * I0 - I1.
    """
    vol, mom = gap_polytope_sums(n, "connected")
    k = math.factorial(n)
    return float(k * vol) * R ** (n - 1), float(k * mom) * R ** n


@dataclass(frozen=True)
class WeightRequest:
    n: int
    potential: PairPotential
    beta: float
    box: BoxSpec
    root_color: int | None = None  # None: plain polymer; 0/1: rooted with that color

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("polymers have at least two particles")
        if self.n > ENUMERATION_CAP:
            raise CapExceeded(f"n={self.n} exceeds the enumeration cap of {ENUMERATION_CAP}")
        if self.root_color not in (None, 0, 1):
            raise ValueError("root color must be 0 or 1")
        if self.box.periodic and self.box.ell <= 2 * self.potential.R:
            raise ValueError("periodic boxes need ell > 2R")


def _omega_exact_1d(req: WeightRequest):
    n, R, ell = req.n, req.potential.R, req.box.ell
    I0, I1 = hard_rod_integrals(n, R)
    if req.box.periodic:
        if ell <= 2 * (n - 1) * R:
            return None
        plain = I0 / ell ** (n - 1)
    else:
        if ell < (n - 1) * R:
            return None
        plain = (ell * I0 - I1) / ell ** n
    if req.root_color is None:
        return plain
    # the root sits at distance >= nR from the walls, so the whole cluster is inside
    interior = max(ell - 2 * n * R, 0.0) * I0 / (n * ell ** n)
    return interior if req.root_color == 1 else plain / n - interior


def omega(req: WeightRequest, samples: int = DEFAULT_SAMPLES, seed: int = 0,
          workers: int = 1, method: str = "auto", shift=None) -> Measurement:
    """Activity of a polymer of cardinality n (normalized by |Lambda|^n).

    Rooted requests include the factor F(eps)/n with the root at label 1.
    `shift` (periodic boxes only) translates every sample point by a constant.
    """
    p = req.potential
    if p.kind == "ideal":
        return Measurement(0.0, 0.0, "exact")
    if method in ("auto", "exact") and p.kind == "hard-core" and req.box.d == 1 and req.n <= 4:
        v = _omega_exact_1d(req)
        if v is not None:
            return Measurement(v, 0.0, "exact")
        if method == "exact":
            raise ValueError("exact path needs a box large enough for one unwrapped cluster")
    elif method == "exact":
        raise ValueError("exact path covers 1D hard core with n <= 4 only")
    box, n, d = req.box, req.n, req.box.d
    table = overlap_table(n, "connected") if p.kind == "hard-core" else None
    off = None if shift is None else np.broadcast_to(np.asarray(shift, float), (d,))

    def draw(rng, k):
        q = rng.random((k, n, d)) * box.ell
        if off is not None:
            if not box.periodic:
                raise ValueError("shift invariance only holds for periodic boxes")
            q = (q + off) % box.ell
        r = _distances(q, box)
        if table is not None:
            u = table[_overlap_masks(r, p.R)].astype(float)
        else:
            u = ursell(p.mayer(r, req.beta), n)
        if req.root_color is not None:
            deep = box.boundary_distance(q[:, 0, :]) >= n * p.R
            u = u * ((deep if req.root_color == 1 else ~deep) / n)
        return u

    acc = mc_mean(draw, samples, seed, workers)
    return Measurement(acc.mean, acc.stderr, "monte-carlo", seed,
                       extra={"samples": samples, "workers": workers})


def beta_n(n: int, potential: PairPotential, beta: float, d: int = 1,
           samples: int = DEFAULT_SAMPLES, seed: int = 0, workers: int = 1,
           method: str = "auto") -> Measurement:
    """Irreducible coefficient: (1/n!) sum over 2-connected graphs on n+1 points of int prod f, q_1 = 0."""
    if n < 1:
        raise ValueError("order n must be >= 1")
    if n + 1 > ENUMERATION_CAP:
        raise CapExceeded(f"n+1={n + 1} exceeds the enumeration cap of {ENUMERATION_CAP}")
    p, R = potential, potential.R
    if p.kind == "ideal":
        return Measurement(0.0, 0.0, "exact")
    if method in ("auto", "exact") and p.kind == "hard-core" and d == 1 and n <= 3:
        vol, _ = gap_polytope_sums(n + 1, "biconnected")
        return Measurement(float((n + 1) * vol) * R ** n, 0.0, "exact")
    if method == "exact":
        raise ValueError("exact path covers 1D hard core with n <= 3 only")
    m = n + 1
    table = overlap_table(m, "biconnected") if p.kind == "hard-core" else None
    graphs = None if table is not None else [
        np.array([k for k in range(len(pair_order(m))) if g.mask >> k & 1])
        for g in enumerate_biconnected(m)]
    span = 2 * n * R
    scale = span ** (d * n) / math.factorial(n)

    def draw(rng, k):
        q = np.zeros((k, m, d))
        q[:, 1:, :] = (rng.random((k, n, d)) - 0.5) * span
        r = _distances(q, None)
        if table is not None:
            return scale * table[_overlap_masks(r, R)]
        f = p.mayer(r, beta)
        s = np.zeros(k)
        for edges in graphs:
            s += f[:, edges].prod(axis=1)
        return scale * s

    acc = mc_mean(draw, samples, seed, workers)
    return Measurement(acc.mean, acc.stderr, "monte-carlo", seed,
                       extra={"samples": samples, "workers": workers})


@dataclass(frozen=True)
class TreeBoundReport:
    n: int
    configs: int
    max_ratio: float
    violations: int

    @property
    def passed(self) -> bool:
        return self.violations == 0


def tree_graph_bound_check(n: int, potential: PairPotential, beta: float, configs: int = 10_000,
                           seed: int = 0, d: int = 1, points=None) -> TreeBoundReport:
    """Check |sum_{connected} prod f| <= e^{2 beta B n} sum_{trees} prod |f| configuration by configuration."""
    if not 1 <= n <= 6:
        raise ValueError("tree-graph check supports 1 <= n <= 6")
    if points is None:
        rng = np.random.default_rng(seed)
        # a cube small enough that most pairs interact
        q = rng.random((configs, n, d)) * (0.75 * n * potential.R)
    else:
        q = np.asarray(points, float).reshape(-1, n, d)
    f = potential.mayer(_distances(q, None), beta) if n > 1 else np.zeros((q.shape[0], 0))
    lhs = np.abs(ursell(f, n))
    rhs = np.zeros(q.shape[0])
    for t in enumerate_trees(n):
        edges = [k for k in range(f.shape[1]) if t.mask >> k & 1]
        rhs += np.abs(f[:, edges]).prod(axis=1)
    rhs *= math.exp(2 * beta * potential.B * n)
    tol = 1e-12 * np.maximum(1.0, rhs)
    bad = lhs > rhs + tol
    lhs = np.where(lhs <= tol, 0.0, lhs)  # rounding residue of cancelling graph sums
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(rhs > 0, lhs / rhs, np.where(lhs > 0, np.inf, 0.0))
    return TreeBoundReport(n, q.shape[0], float(ratio.max(initial=0.0)), int(bad.sum()))


def activity_bound(n: int, potential: PairPotential, beta: float, box: BoxSpec, a: float = 1.0,
                   rooted: bool = False, eps: int = 1) -> float:
    """e^{(2 beta B + a) n} n^{n-2} C^{n-1} / |Lambda|^{n-1}, times 2dR/ell for a boundary root."""
    if n < 2:
        raise ValueError("n must be >= 2")
    C = c_beta(potential, beta, box.d).value
    bound = (math.exp((2 * beta * potential.B + a) * n) * n ** (n - 2) * C ** (n - 1)
             / box.volume ** (n - 1))
    if rooted and eps == 0:
        bound *= 2 * box.d * potential.R / box.ell
    return bound
