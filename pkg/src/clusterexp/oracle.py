"""Reference values: exact hard-rod formulas, brute-force integrals and a Metropolis sampler."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator

import numpy as np
from numba import njit
from scipy import stats

from .expansion import log_ideal
from .measurement import mc_mean
from .potential import BoxSpec, PairPotential, ball_volume
from .weights import _distances


@dataclass(frozen=True)
class PartitionResult:
    logZ: float
    log_ideal: float
    log_zint: float
    method: str
    stderr: float = 0.0  # on Z^int
    flagged: bool = False

    @property
    def zint(self) -> float:
        return math.exp(self.log_zint)


def _hard_rod_logz_formula(N, ell, R, bc):
    if N == 0:
        return 0.0
    if bc == "zero":
        free = ell - (N - 1) * R
        return -math.inf if free <= 0 else N * math.log(free) - math.lgamma(N + 1)
    free = ell - N * R
    if N == 1:
        return math.log(ell)
    return -math.inf if free <= 0 else math.log(ell) + (N - 1) * math.log(free) - math.lgamma(N + 1)


@lru_cache(maxsize=None)
def certify_hard_rod_formulas(ell: float = 10.0, R: float = 1.0, tol: float = 1e-6) -> bool:
    """Compare the closed forms with tensor-grid quadrature at N = 2, 3 for both bc."""
    hc = PairPotential.hard_core(R)
    for bc in ("zero", "periodic"):
        for N in (2, 3):
            exact = math.exp(_hard_rod_logz_formula(N, ell, R, bc) - log_ideal(N, ell ** 1))
            quad = z_bruteforce(N, BoxSpec(ell, 1, bc), hc, 1.0, method="quadrature").zint
            if abs(quad - exact) > tol * exact:
                raise AssertionError(f"hard-rod formula disagrees with quadrature: N={N} bc={bc} "
                                     f"{exact} vs {quad}")
    return True


def z_exact_hard_rods(N: int, ell: float, R: float, bc: str = "periodic") -> PartitionResult:
    """Z = (ell - (N-1)R)^N/N! (zero bc) or ell (ell - NR)^{N-1}/N! (periodic)."""
    if bc not in ("zero", "periodic"):
        raise ValueError("bc must be 'zero' or 'periodic'")
    if bc == "periodic" and N >= 2 and ell <= 2 * R:
        raise ValueError("periodic boxes need ell > 2R")
    certify_hard_rod_formulas()
    logz = _hard_rod_logz_formula(N, ell, R, bc)
    li = log_ideal(N, ell) if N else 0.0
    return PartitionResult(logz, li, logz - li, "analytic")


def _config_weight(q, box, potential, beta):
    """e^{-beta H} for a batch of configurations q (batch, N, d), ties averaged."""
    N = q.shape[1]
    if N < 2 or potential.kind == "ideal":
        return np.ones(q.shape[0])
    r = _distances(q, box)
    return potential.boltzmann(r, beta, average_ties=True).prod(axis=1)


def _grid_mean(N, box, potential, beta, n):
    """Midpoint-rule mean of e^{-beta H} over Lambda^N with n points per axis."""
    D = N * box.d
    axis = (np.arange(n) + 0.5) * box.ell / n
    total = 0.0
    # iterate over the first coordinate to keep memory bounded
    rest = np.stack(np.meshgrid(*([axis] * (D - 1)), indexing="ij"), axis=-1).reshape(-1, D - 1) \
        if D > 1 else np.zeros((1, 0))
    for x0 in axis:
        flat = np.concatenate([np.full((rest.shape[0], 1), x0), rest], axis=1)
        total += _config_weight(flat.reshape(-1, N, box.d), box, potential, beta).sum()
    return total / n ** D


def z_bruteforce(N: int, box: BoxSpec, potential: PairPotential, beta: float,
                 method: str = "quadrature", budget: int | None = None, seed: int = 0,
                 workers: int = 1, tol: float = 1e-4) -> PartitionResult:
    """Z^int by tensor-grid midpoint quadrature (with one Richardson step) or uniform MC."""
    if N < 0:
        raise ValueError("N must be >= 0")
    li = log_ideal(N, box.volume) if N else 0.0
    if N < 2 or potential.kind == "ideal":
        return PartitionResult(li, li, 0.0, "analytic")
    if box.periodic and box.ell <= 2 * potential.R:
        raise ValueError("periodic boxes need ell > 2R")
    if method == "quadrature":
        if N > 4:
            raise ValueError("quadrature supports N <= 4")
        D = N * box.d
        cap = budget if budget is not None else 2 * 10**7
        n = min(60, int(cap ** (1.0 / D)))
        n -= n % 2
        if n < 4:
            raise ValueError("quadrature budget too small")
        fine = _grid_mean(N, box, potential, beta, n)
        coarse = _grid_mean(N, box, potential, beta, n // 2)
        z = (4 * fine - coarse) / 3
        err = abs(z - fine)
        flagged = z <= 0 or err > tol * abs(z)
        lz = math.log(z) if z > 0 else -math.inf
        return PartitionResult(li + lz, li, lz, "quadrature", float(err), bool(flagged))
    if method == "mc":
        if N > 10:
            raise ValueError("Monte Carlo path supports N <= 10")
        samples = budget if budget is not None else 10**6

        def draw(rng, k):
            q = rng.random((k, N, box.d)) * box.ell
            return _config_weight(q, box, potential, beta)

        acc = mc_mean(draw, samples, seed, workers)
        z = acc.mean
        flagged = z <= 0 or acc.stderr > tol * abs(z) * 100
        lz = math.log(z) if z > 0 else -math.inf
        return PartitionResult(li + lz, li, lz, "mc", float(acc.stderr), bool(flagged))
    raise ValueError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# exact pair structure of periodic hard rods


def pair_density_hard_rods(N: int, ell: float, R: float, r) -> np.ndarray:
    """Labelled two-point function of periodic hard rods at separation r along the ring.

    Normalized to average 1 over Lambda^2. With k of the other N-2 rods on the
    arc from rod 1 to rod 2 (each k equally likely) and free length
    L' = ell - NR, the arc length is (k+1)R + L' * Beta(k+1, N-k-1).
    """
    r = np.mod(np.asarray(r, dtype=float), ell)
    if N < 2:
        raise ValueError("need N >= 2")
    Lf = ell - N * R
    if Lf <= 0:
        raise ValueError("jammed")
    dens = np.zeros_like(r)
    for k in range(N - 1):
        dens += stats.beta.pdf((r - (k + 1) * R) / Lf, k + 1, N - k - 1) / Lf
    return ell * dens / (N - 1)


def truncated_labelled_hard_rods(N: int, ell: float, R: float, r) -> np.ndarray:
    """rho2_lab - rho1_lab rho1_lab for periodic hard rods (rho1_lab = 1)."""
    return pair_density_hard_rods(N, ell, R, r) - 1.0


def two_particle_truncated(ell: float, R: float, r, d: int = 1) -> np.ndarray:
    """Exact truncated labelled function for N = 2 on a periodic box (|B_R| = ball volume)."""
    B = ball_volume(R, d)
    V = ell ** d
    r = np.asarray(r, float)
    return np.where(r <= R, -V / (V - B), 0.0) + B / (V - B)


# ---------------------------------------------------------------------------
# Metropolis sampler

_KIND = {"ideal": 0, "hard-core": 1, "square-well": 2, "tabulated": 3}


@njit(cache=True)
def _pair_energy(r, kind, R, core, depth, tr, tv):
    if r > R:
        return 0.0
    if kind == 1:
        return np.inf
    if kind == 2:
        if core > 0 and r <= core:
            return np.inf
        return -depth
    if kind == 3:
        return np.interp(r, tr, tv)
    return 0.0


@njit(cache=True)
def _particle_energy(x, i, pos, ell, periodic, kind, R, core, depth, tr, tv):
    N, d = x.shape
    e = 0.0
    for j in range(N):
        if j == i:
            continue
        s = 0.0
        for k in range(d):
            dx = pos[k] - x[j, k]
            if periodic:
                dx -= ell * np.rint(dx / ell)
            s += dx * dx
        e += _pair_energy(np.sqrt(s), kind, R, core, depth, tr, tv)
        if e == np.inf:
            return e
    return e


@njit(cache=True)
def _run_moves(x, ell, periodic, kind, R, core, depth, tr, tv, beta, width,
               who, disp, acc_u, snap_every, snaps):
    """Random-scan single-particle Metropolis moves; x is updated in place.

    Writes a copy of x into snaps every snap_every moves and returns the
    number of accepted moves.
    """
    N, d = x.shape
    pos = np.empty(d)
    accepted = 0
    s = 0
    for m in range(who.shape[0]):
        i = who[m]
        inside = True
        for k in range(d):
            v = x[i, k] + width * (disp[m, k] - 0.5)
            if periodic:
                v = v % ell
            elif v < 0.0 or v >= ell:
                inside = False
            pos[k] = v
        if inside:
            e_new = _particle_energy(x, i, pos, ell, periodic, kind, R, core, depth, tr, tv)
            if e_new < np.inf:
                e_old = _particle_energy(x, i, x[i], ell, periodic, kind, R, core, depth, tr, tv)
                dE = e_new - e_old
                if dE <= 0.0 or acc_u[m] < np.exp(-beta * dE):
                    for k in range(d):
                        x[i, k] = pos[k]
                    accepted += 1
        if (m + 1) % snap_every == 0:
            snaps[s] = x
            s += 1
    return accepted


@dataclass(frozen=True)
class GibbsChainConfig:
    N: int
    box: BoxSpec
    potential: PairPotential
    beta: float = 1.0
    sweeps: int = 10_000
    burn_in: int = 1_000
    seed: int = 0
    width: float | None = None  # None: tuned during burn-in toward 40% acceptance
    stride: int | None = None   # sweeps between snapshots; default 10 N
    chains: int = 1
    batch_sweeps: int = 20_000

    def __post_init__(self):
        if self.sweeps <= self.burn_in:
            raise ValueError("steps must exceed burn-in")
        if self.N < 1:
            raise ValueError("need at least one particle")
        if self.chains < 1:
            raise ValueError("chains must be >= 1")

    @property
    def snapshot_stride(self) -> int:
        return self.stride if self.stride is not None else 10 * self.N


def lattice_start(N: int, box: BoxSpec, potential: PairPotential) -> np.ndarray:
    side = math.ceil(N ** (1.0 / box.d) - 1e-9)
    spacing = box.ell / side
    excluded = potential.R if potential.kind == "hard-core" else potential.core
    if potential.kind in ("hard-core", "square-well") and spacing <= excluded:
        raise ValueError(f"cannot place {N} particles without overlap in a box of side {box.ell}")
    idx = np.array(np.unravel_index(np.arange(N), (side,) * box.d)).T
    return (idx + 0.5) * spacing


def _potential_args(p: PairPotential):
    tr = np.asarray(p.table_r, float) if p.kind == "tabulated" else np.zeros(2)
    tv = np.asarray(p.table_v, float) if p.kind == "tabulated" else np.zeros(2)
    return _KIND[p.kind], float(p.R), float(p.core), float(p.depth), tr, tv


@dataclass
class ChainState:
    x: np.ndarray
    width: float
    rng: np.random.Generator
    moves: int = 0
    accepted: int = 0


def _advance(cfg, st, n_moves, snap_every, pargs):
    N, d = st.x.shape
    who = st.rng.integers(0, N, size=n_moves)
    disp = st.rng.random((n_moves, d))
    acc_u = st.rng.random(n_moves)
    snaps = np.empty((n_moves // snap_every, N, d))
    a = _run_moves(st.x, cfg.box.ell, cfg.box.periodic, *pargs, cfg.beta, st.width,
                   who, disp, acc_u, snap_every, snaps)
    st.moves += n_moves
    st.accepted += a
    return snaps, a


def _burn_in(cfg, st, pargs):
    N = cfg.N
    tune = cfg.width is None
    block = 100
    done = 0
    while done < cfg.burn_in:
        k = min(block, cfg.burn_in - done)
        _, a = _advance(cfg, st, k * N, k * N + 1, pargs)
        if tune:
            rate = a / (k * N)
            st.width *= math.exp(rate - 0.4)
            st.width = min(st.width, cfg.box.ell)
        done += k
    st.moves = st.accepted = 0


def gibbs_chains(cfg: GibbsChainConfig) -> Iterator[tuple[int, int, np.ndarray]]:
    """Yield (chain, first_step, snapshots) batches; snapshots has shape (k, N, d).

    Chains run one after the other, each with its own stream spawned from cfg.seed.
    step counts sweeps after burn-in.
    """
    pargs = _potential_args(cfg.potential)
    stride_moves = cfg.snapshot_stride * cfg.N
    for c, ss in enumerate(np.random.SeedSequence(cfg.seed).spawn(cfg.chains)):
        rng = np.random.default_rng(ss)
        width0 = cfg.width if cfg.width is not None else min(cfg.box.ell, 2.0 * cfg.potential.R)
        st = ChainState(lattice_start(cfg.N, cfg.box, cfg.potential), width0, rng)
        _burn_in(cfg, st, pargs)
        total = (cfg.sweeps - cfg.burn_in) * cfg.N
        per_batch = max(1, cfg.batch_sweeps // cfg.snapshot_stride) * stride_moves
        step = 0
        while st.moves < total:
            k = min(per_batch, total - st.moves)
            k -= k % stride_moves
            if k == 0:
                break
            snaps, _ = _advance(cfg, st, k, stride_moves, pargs)
            yield c, step, snaps
            step += k // cfg.N


def gibbs_sample(cfg: GibbsChainConfig) -> Iterator[np.ndarray]:
    """Stream of single configurations (N, d) from all chains in order."""
    for _, _, snaps in gibbs_chains(cfg):
        yield from snaps


def acceptance_rate(cfg: GibbsChainConfig) -> float:
    pargs = _potential_args(cfg.potential)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(1)[0])
    width0 = cfg.width if cfg.width is not None else min(cfg.box.ell, 2.0 * cfg.potential.R)
    st = ChainState(lattice_start(cfg.N, cfg.box, cfg.potential), width0, rng)
    _burn_in(cfg, st, pargs)
    _advance(cfg, st, 1000 * cfg.N, 1000 * cfg.N, pargs)
    return st.accepted / st.moves


def snapshot_rows(cfg: GibbsChainConfig) -> Iterator[list]:
    """CSV rows chain,step,q_1..q_N (coordinates flattened per particle)."""
    for c, step, snaps in gibbs_chains(cfg):
        for k, s in enumerate(snaps):
            yield [c, step + (k + 1) * cfg.snapshot_stride] + [repr(float(v)) for v in s.ravel()]


# ---------------------------------------------------------------------------
# histogram estimators


@njit(cache=True)
def _bin_of(r, edges, uniform):
    """Index of the half-open bin [e_b, e_{b+1}) holding r, or -1."""
    nb = edges.shape[0] - 1
    if uniform:
        b = int((r - edges[0]) // (edges[1] - edges[0]))
    else:
        b = np.searchsorted(edges, r, side="right") - 1
    return b if 0 <= b < nb else -1


def _uniform(edges) -> bool:
    w = np.diff(edges)
    return bool(np.allclose(w, w[0], rtol=1e-12, atol=0.0))


@njit(cache=True)
def _pair_hist(snaps, ell, periodic, edges, uniform, out):
    S, N, d = snaps.shape
    for s in range(S):
        for i in range(N):
            for j in range(i + 1, N):
                r2 = 0.0
                for k in range(d):
                    dx = snaps[s, i, k] - snaps[s, j, k]
                    if periodic:
                        dx -= ell * np.rint(dx / ell)
                    r2 += dx * dx
                b = _bin_of(np.sqrt(r2), edges, uniform)
                if b >= 0:
                    out[b] += 1.0


@njit(cache=True)
def _cross_hist(a, b, ell, periodic, edges, uniform, out):
    """Pairs (i in a, j in b, i != j) from two snapshots taken far apart."""
    S, N, d = a.shape
    for s in range(S):
        for i in range(N):
            for j in range(N):
                if i == j:
                    continue
                r2 = 0.0
                for k in range(d):
                    dx = a[s, i, k] - b[s, j, k]
                    if periodic:
                        dx -= ell * np.rint(dx / ell)
                    r2 += dx * dx
                k2 = _bin_of(np.sqrt(r2), edges, uniform)
                if k2 >= 0:
                    out[k2] += 0.5  # each unordered pair is seen twice


def uniform_pair_probability(edges, box: BoxSpec) -> np.ndarray:
    """Probability that two independent uniform points in the box fall in each separation bin."""
    edges = np.asarray(edges, float)
    if box.d == 1:
        if box.periodic:
            cdf = np.clip(2 * edges / box.ell, 0, 1)
        else:
            x = np.clip(edges / box.ell, 0, 1)
            cdf = 1 - (1 - x) ** 2
        return np.diff(cdf)
    if box.periodic:
        # exact for bins below ell/2: ball-volume fraction
        if edges[-1] > box.ell / 2:
            raise ValueError("periodic bins in d > 1 must stay below ell/2")
        return np.diff(np.array([ball_volume(e, box.d) for e in edges])) / box.volume
    raise ValueError("zero-bc separation histograms are implemented for d = 1")


@dataclass
class CorrelationEstimate:
    kind: str
    edges: np.ndarray
    value: np.ndarray
    stderr: np.ndarray
    flagged: np.ndarray
    snapshots: int
    extra: dict = field(default_factory=dict)

    @property
    def centers(self):
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    def rows(self):
        for lo, hi, v, e in zip(self.edges[:-1], self.edges[1:], self.value, self.stderr):
            yield [repr(float(lo)), repr(float(hi)), repr(float(v)), repr(float(e))]


def _jackknife(blocks, estimator):
    """Delete-one-block jackknife. blocks: array (B, ...) of additive block statistics."""
    B = blocks.shape[0]
    total = blocks.sum(axis=0)
    full = estimator(total)
    if B < 2:
        return full, np.full_like(full, np.inf)
    loo = np.array([estimator(total - blocks[b]) for b in range(B)])
    err = np.sqrt((B - 1) / B * ((loo - loo.mean(axis=0)) ** 2).sum(axis=0))
    return full, err


def _default_edges(box, potential, bins):
    if np.ndim(bins) == 1:
        return np.asarray(bins, float)
    top = box.ell / 2 if box.periodic else box.ell
    return np.linspace(0.0, top, int(bins) + 1)


def correlation_estimate(cfg: GibbsChainConfig, kind: str, bins=50, blocks: int = 20,
                         min_count: int = 25, lag: int = 2000) -> CorrelationEstimate:
    """Histogram estimators from the Metropolis stream with block-jackknife errors.

    one-point:          rho^(1) along the first coordinate (slab average), in particles
                        per unit volume; extra['labelled'] is |Lambda|/N times it.
    two-point:          rho^(2) binned by pair separation.
    truncated-labelled: rho2_lab - rho1_lab rho1_lab binned by separation. For periodic
                        boxes rho1_lab = 1 by translation invariance; for zero bc the
                        product term comes from pairs of snapshots `lag` apart.
    extra['unlabelled_truncated'] holds rho^(2) - rho^(1) rho^(1) in the same bins.
    Snapshots are consumed as they are produced.
    """
    if kind not in ("one-point", "two-point", "truncated-labelled"):
        raise ValueError(f"unknown estimator {kind!r}")
    box, N = cfg.box, cfg.N
    V = box.volume
    total_snaps = (cfg.sweeps - cfg.burn_in) // cfg.snapshot_stride
    if total_snaps < 2:
        raise ValueError("too few snapshots; lengthen the chain or shorten the stride")
    per = max(2, blocks // cfg.chains)
    pair_kind = kind != "one-point"
    if pair_kind and N < 2:
        raise ValueError("pair estimators need N >= 2")
    if pair_kind:
        edges = _default_edges(box, cfg.potential, bins)
    else:
        edges = np.asarray(bins, float) if np.ndim(bins) == 1 else np.linspace(0.0, box.ell, int(bins) + 1)
    nb = len(edges) - 1
    uni = _uniform(edges)
    lag = max(1, min(lag, total_snaps // 2))
    # per block: [pair hist | cross hist | snapshots | cross snapshots]
    acc = np.zeros((cfg.chains * per, 2 * nb + 2))
    seen = {}
    buffers = {}
    for c, _, snaps in gibbs_chains(cfg):
        i0 = seen.get(c, 0)
        seen[c] = i0 + len(snaps)
        ids = np.minimum(np.arange(i0, i0 + len(snaps)) * per // total_snaps, per - 1)
        if pair_kind and not box.periodic:
            buf = buffers.get(c, np.empty((0, N, box.d)))
            joined = np.concatenate([buf, snaps])
            start = len(buf)
            buffers[c] = joined[-lag:]
        for b in np.unique(ids):
            sel = np.nonzero(ids == b)[0]
            row = acc[c * per + b]
            row[-2] += len(sel)
            if not pair_kind:
                row[:nb] += np.histogram(snaps[sel, :, 0].ravel(), edges)[0]
                continue
            h = np.zeros(nb)
            _pair_hist(np.ascontiguousarray(snaps[sel]), box.ell, box.periodic, edges, uni, h)
            row[:nb] += h
            if not box.periodic:
                j = start + sel - lag
                ok = j >= 0
                if ok.any():
                    hc = np.zeros(nb)
                    _cross_hist(np.ascontiguousarray(snaps[sel[ok]]),
                                np.ascontiguousarray(joined[j[ok]]), box.ell, False, edges, uni, hc)
                    row[nb:2 * nb] += hc
                    row[-1] += ok.sum()
    nsnap = int(acc[:, -2].sum())

    if not pair_kind:
        slab = np.diff(edges) * box.ell ** (box.d - 1)
        est = lambda t: t[:nb] / t[-2] / slab
        val, err = _jackknife(acc, est)
        counts = acc[:, :nb].sum(axis=0)
        return CorrelationEstimate(kind, edges, val, err, counts < min_count, nsnap,
                                   {"labelled": val * V / N, "labelled_stderr": err * V / N,
                                    "integral": float((val * slab).sum()),
                                    "integral_stderr": float(np.sqrt(((err * slab) ** 2).sum()))})

    punif = uniform_pair_probability(edges, box)
    npairs = N * (N - 1) / 2

    def pair_lab(t):
        return t[:nb] / (t[-2] * npairs) / punif

    def indep_lab(t):
        if box.periodic:
            return np.ones(nb)
        return t[nb:2 * nb] / (t[-1] * npairs) / punif

    rho2 = lambda t: N * (N - 1) / V ** 2 * pair_lab(t)
    trunc_lab = lambda t: pair_lab(t) - indep_lab(t)
    unlab = lambda t: N * (N - 1) / V ** 2 * pair_lab(t) - N ** 2 / V ** 2 * indep_lab(t)
    with np.errstate(divide="ignore", invalid="ignore"):
        val, err = _jackknife(acc, rho2 if kind == "two-point" else trunc_lab)
        uval, uerr = _jackknife(acc, unlab)
        lval, lerr = _jackknife(acc, pair_lab)
    counts = acc[:, :nb].sum(axis=0)
    return CorrelationEstimate(kind, edges, val, err, counts < min_count, nsnap,
                               {"unlabelled_truncated": uval, "unlabelled_truncated_stderr": uerr,
                                "pair_labelled": lval, "pair_labelled_stderr": lerr})
