"""Convergence checks, free-energy series and finite-volume terms of the cluster expansion."""
from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from .measurement import Measurement
from .potential import BoxSpec, PairPotential, c_beta
from .weights import DEFAULT_SAMPLES, WeightRequest, beta_n, omega


class SeriesDivergenceWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class KPReport:
    a: float
    c: float
    C: float
    delta: float
    delta_prime: float
    series_bound: float
    condition_met: bool
    bound_within_a: bool
    margin: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def kp_check(potential: PairPotential, beta: float, rho: float, a: float = 1.0,
             c: float = 0.0, d: int = 1) -> KPReport:
    """Convergence report for the rooted-polymer gas at density rho.

    condition_met is the geometric condition delta' e < 1; whether the summed
    bound also stays below a is reported separately in bound_within_a.
    """
    if not a > 0:
        raise ValueError("a must be positive")
    C = c_beta(potential, beta, d).value
    g = 2 * beta * potential.B + a + c
    delta_prime = rho * math.exp(g) * C
    delta = rho * C * math.exp(2 * g)
    x = delta_prime * math.e
    bound = 2 * math.exp(g) / math.sqrt(math.pi) * x / (1 - x) if x < 1 else math.inf
    return KPReport(a, c, C, delta, delta_prime, bound, x < 1, bound <= a, 1 - x)


def _fit_tail(F):
    """Least-squares fit |F_n| ~ C e^{-c n} over the nonzero computed orders."""
    pts = [(n, math.log(abs(v))) for n, v in F.items() if v != 0]
    if len(pts) < 2:
        return None
    n, y = np.array(pts).T
    slope, icpt = np.polyfit(n, y, 1)
    return math.exp(icpt), -slope


def _tail(fit, n_from, prefactor=1.0):
    if fit is None:
        return 0.0
    C, c = fit
    if c <= 0:
        return math.inf
    return prefactor * C * math.exp(-c * n_from) / (1 - math.exp(-c))


def _warn_if_growing(F):
    vals = [abs(F[n]) for n in sorted(F)]
    if any(b > a > 0 for a, b in zip(vals, vals[1:])):
        warnings.warn("series terms grow with the order", SeriesDivergenceWarning, stacklevel=3)


@dataclass(frozen=True)
class FreeEnergySeries:
    rho: float
    value: float
    ideal: float
    terms: dict
    betas: dict
    tail_bound: float
    fit: tuple | None
    kp: KPReport

    @property
    def interaction(self) -> float:
        return self.value - self.ideal


def free_energy_series(rho: float, beta: float, potential: PairPotential, n_max: int, d: int = 1,
                       samples: int = DEFAULT_SAMPLES, seed: int = 0, workers: int = 1,
                       a: float = 1.0) -> FreeEnergySeries:
    """beta f(rho) = rho(log rho - 1) - sum_{n<=n_max} beta_n rho^{n+1}/(n+1), with a fitted tail."""
    kp = kp_check(potential, beta, rho, a=a, d=d)
    if not kp.condition_met:
        warnings.warn("convergence condition not met at this density", SeriesDivergenceWarning, stacklevel=2)
    ideal = rho * (math.log(rho) - 1) if rho > 0 else 0.0
    betas, terms, F = {}, {}, {}
    for n in range(1, n_max + 1):
        b = beta_n(n, potential, beta, d, samples=samples, seed=seed + n, workers=workers)
        betas[n] = b
        terms[n] = -b.value * rho ** (n + 1) / (n + 1)
        F[n] = b.value * rho ** n / (n + 1)
    _warn_if_growing(F)
    fit = _fit_tail(F)
    value = ideal + math.fsum(terms.values())
    return FreeEnergySeries(rho, value, ideal, terms, betas, _tail(fit, n_max + 1, rho), fit, kp)


def tonks_free_energy(rho: float, R: float) -> float:
    """Exact beta f of 1D hard rods: rho log(rho/(1 - rho R)) - rho."""
    if not 0 < rho * R < 1:
        raise ValueError("need 0 < rho R < 1")
    return rho * math.log(rho / (1 - rho * R)) - rho


def occupancy_factor(N: int, volume, n: int) -> Fraction:
    """P_{N,|Lambda|}(n) = (N-1)(N-2)...(N-n)/|Lambda|^n, exact for the given (binary) volume."""
    vol = Fraction(volume)
    return math.prod((Fraction(N - i) for i in range(1, n + 1)), start=Fraction(1)) / vol ** n


@dataclass(frozen=True)
class SeriesRow:
    n: int
    P: Fraction
    Bterm: float
    F: float
    tail_bound: float


@dataclass(frozen=True)
class SeriesReport:
    N: int
    box: BoxSpec
    n_max: int
    rows: tuple[SeriesRow, ...]
    fit: tuple | None
    log_ideal: float

    @property
    def log_zint_density(self) -> float:
        """(1/|Lambda|) log Z^int truncated at n_max: (N/|Lambda|) sum F_n."""
        return self.N / self.box.volume * math.fsum(r.F for r in self.rows)

    @property
    def log_z_density(self) -> float:
        return self.log_ideal / self.box.volume + self.log_zint_density

    @property
    def tail_bound(self) -> float:
        return self.N / self.box.volume * (self.rows[-1].tail_bound if self.rows else 0.0)

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["n", "P", "Bterm", "F", "tail_bound"])
        for r in self.rows:
            w.writerow([r.n, repr(float(r.P)), repr(r.Bterm), repr(r.F), repr(r.tail_bound)])
        return out.getvalue()


def log_ideal(N: int, volume: float) -> float:
    """log(|Lambda|^N / N!)."""
    return N * math.log(volume) - math.lgamma(N + 1)


def finite_volume_terms(N: int, box: BoxSpec, beta: float, potential: PairPotential, n_max: int,
                        samples: int = DEFAULT_SAMPLES, seed: int = 0, workers: int = 1) -> SeriesReport:
    """F(n) = P(n) beta_n/(n+1), with beta_n standing in for the periodic B-terms."""
    if N < 2:
        raise ValueError("need N >= 2")
    rows, F = [], {}
    for n in range(1, n_max + 1):
        b = beta_n(n, potential, beta, box.d, samples=samples, seed=seed + n, workers=workers).value
        P = occupancy_factor(N, box.volume, n)
        F[n] = float(P) * b / (n + 1)
        rows.append((n, P, b, F[n]))
    _warn_if_growing(F)
    fit = _fit_tail(F)
    report_rows = tuple(SeriesRow(n, P, b, f, _tail(fit, n + 1)) for n, P, b, f in rows)
    return SeriesReport(N, box, n_max, report_rows, fit, log_ideal(N, box.volume))


def b_star_direct(n: int, box: BoxSpec, beta: float, potential: PairPotential,
                  samples: int = DEFAULT_SAMPLES, seed: int = 0) -> Measurement:
    """B-term of orders 1 and 2 from polymer activities (periodic box):
    |Lambda| w_2 and (|Lambda|^2/2)(w_3 - 3 w_2^2)."""
    if n not in (1, 2):
        raise ValueError("direct summation is implemented for n <= 2 only")
    if not box.periodic:
        raise ValueError("the identification with beta_n needs a periodic box")
    w = {k: omega(WeightRequest(k, potential, beta, box), samples=samples, seed=seed + k)
         for k in (2, 3)}
    V = box.volume
    if n == 1:
        m = w[2]
        return Measurement(V * m.value, V * m.stderr, m.method, m.seed)
    val = V ** 2 / 2 * (w[3].value - 3 * w[2].value ** 2)
    err = V ** 2 / 2 * math.hypot(w[3].stderr, 6 * abs(w[2].value) * w[2].stderr)
    exact = all(x.method == "exact" for x in w.values())
    return Measurement(val, 0.0 if exact else err, "exact" if exact else "monte-carlo",
                       None if exact else seed)


def stirling_correction(N: int, volume: float) -> float:
    """(1/|Lambda|)(log sqrt(2 pi N) + 1/(12N))."""
    if N < 1:
        raise ValueError("N must be >= 1")
    return (0.5 * math.log(2 * math.pi * N) + 1 / (12 * N)) / volume


def product_deviation_ok(N: int, n: int) -> bool:
    """|prod_{i<=n}(1 - i/N) - 1| <= c n(n+1)/(2N) with c = sqrt(2)/(1 - n/N)."""
    prod = math.prod(1 - Fraction(i, N) for i in range(1, n + 1))
    c = math.sqrt(2) / (1 - n / N)
    return abs(float(prod) - 1) <= c * n * (n + 1) / (2 * N)


# ---------------------------------------------------------------------------
# boundary / interior split of the rooted-polymer sum


def boundary_constant(rho: float, potential: PairPotential, beta: float, d: int = 1,
                      a: float = 1.0, tol: float = 1e-12, max_terms: int = 100_000) -> float:
    """C(rho) = sum_{n>=2} rho^{n-1}/(n-1)! e^{(2 beta B + a) n} n^{n-2} C^{n-1}; inf if it diverges."""
    C = c_beta(potential, beta, d).value
    if rho == 0 or C == 0:
        return 0.0
    g = 2 * beta * potential.B + a
    total = 0.0
    for n in range(2, max_terms):
        logt = ((n - 1) * math.log(rho * C) - math.lgamma(n) + g * n + (n - 2) * math.log(n))
        t = math.exp(logt)
        total += t
        if n > 2 and t < tol * max(total, 1.0) and rho * C * math.exp(g + 1) < 1:
            return total
        if not math.isfinite(total):
            break
    return math.inf


def _series(logterm, tol=1e-16, max_terms=1_000_000):
    """Sum exp(logterm(n)) over n >= 2 until the terms are negligible."""
    total = 0.0
    for n in range(2, max_terms):
        t = math.exp(logterm(n))
        total += t
        if n > 8 and t < tol * total:
            return total
    return math.inf


def remainder_bound(rho: float, potential: PairPotential, beta: float, d: int = 1,
                    a: float = 1.0) -> float:
    """Estimate of |Lambda| times the shared-label remainder of the interior cluster sum.

    Each polymer of size n gets the activity bound times n e^{a n}, i.e.
    e^{(2 beta B + a) n} n^{n-1} C^{n-1} / |Lambda|^{n-1}. The labels are counted
    with the shared ones pinned: two polymers sharing two labels give
    N^{n1}/n1! * C(n1, 2) * N^{n2-2}/(n2-2)!; a cyclic chain of k >= 3 polymers
    gives N^{n1}/n1! * prod_{l=2}^{k-1} n_{l-1} N^{n_l-1}/(n_l-1)! * n_{k-1} n_1
    N^{n_k-2}/(n_k-2)!. The k-polymer term carries 1/k!. The powers of N and
    |Lambda| combine into rho powers up to an overall 1/|Lambda|, so the value
    returned does not depend on the volume. The chain factorizes, which gives
    the closed form A L (e^S - 1 - S)/S^2 for the k >= 3 part. This is a power
    counting estimate, not a sharp constant; inf signals divergence.
    """
    C = c_beta(potential, beta, d).value
    if rho == 0 or C == 0:
        return 0.0
    g = 2 * beta * potential.B + a
    if rho * C * math.exp(g + 1) >= 1:
        return math.inf
    lr, lc = math.log(rho), math.log(C)

    def act(n):  # log of e^{g n} n^{n-1} C^{n-1}
        return g * n + (n - 1) * math.log(n) + (n - 1) * lc

    first_pair = _series(lambda n: n * lr + act(n) - math.lgamma(n + 1) + math.log(n * (n - 1) / 2))
    first = _series(lambda n: n * lr + act(n) - math.lgamma(n + 1) + 2 * math.log(n))
    mid = _series(lambda n: (n - 1) * lr + act(n) - math.lgamma(n) + math.log(n))
    last = _series(lambda n: (n - 2) * lr + act(n) - math.lgamma(n - 1))
    if not all(map(math.isfinite, (first_pair, first, mid, last))):
        return math.inf
    S = mid
    chain = math.expm1(S) - S
    chain = chain / S ** 2 if S > 1e-4 else 0.5 + S / 6 + S * S / 24
    return first_pair * last / 2 + first * last * chain


@dataclass(frozen=True)
class BoundarySplitReport:
    rho: float
    ell: float
    C_rho: float
    S0_bound: float
    S1_star: float
    S1_starstar_bound: float
    converged: bool
    kp: KPReport = field(repr=False)

    def to_json(self) -> str:
        d = asdict(self)
        d["kp"] = asdict(self.kp)
        return json.dumps(d, sort_keys=True)


def boundary_split_bound(N: int, box: BoxSpec, beta: float, potential: PairPotential,
                         a: float = 1.0, n_max: int = 3, samples: int = DEFAULT_SAMPLES,
                         seed: int = 0) -> BoundarySplitReport:
    """Boundary bound C(rho)/ell, the interior irreducible sum through n_max and the remainder bound.

    All three are per unit volume. S1_star is sum_n beta_n rho^{n+1}/(n+1) with
    the exact occupancy factors, i.e. (N/|Lambda|) sum F_n.
    """
    rho = N / box.volume
    kp = kp_check(potential, beta, rho, a=a, d=box.d)
    Crho = boundary_constant(rho, potential, beta, box.d, a) if kp.condition_met else math.inf
    rem = remainder_bound(rho, potential, beta, box.d, a) if kp.condition_met else math.inf
    if potential.kind == "ideal" or N < 2:
        S1 = 0.0
    else:
        S1 = finite_volume_terms(N, box, beta, potential, n_max, samples=samples,
                                 seed=seed).log_zint_density
    ok = kp.condition_met and math.isfinite(Crho) and math.isfinite(rem)
    return BoundarySplitReport(rho, box.ell, Crho, Crho / box.ell, S1, rem / box.volume, ok, kp)


def rooted_shares(points, box: BoxSpec, R: float) -> np.ndarray:
    """Per root i the pair (F(0)/|V|, F(1)/|V|) as exact fractions; shape (|V|, 2).

    Color 1 marks a root at distance >= R|V| from the complement of the box.
    """
    q = np.atleast_2d(np.asarray(points, float))
    n = q.shape[0]
    deep = box.boundary_distance(q) >= R * n
    share = Fraction(1, n)
    return np.array([[Fraction(0) if dp else share, share if dp else Fraction(0)] for dp in deep],
                    dtype=object)


def rooted_split_partition_identity(box: BoxSpec, sizes, R: float = 1.0, configs: int = 1000,
                                    seed: int = 0, samples=None) -> bool:
    """Check that the shares over roots and colors add up to exactly 1 for every configuration."""
    rng = np.random.default_rng(seed)
    pools = samples if samples is not None else [
        rng.random((n, box.d)) * box.ell for n in sizes for _ in range(configs)]
    return all(rooted_shares(q, box, R).sum() == 1 for q in pools)
