"""Truncated correlations from the source-deformed partition function Psi(a1, a2)."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import optimize

from .graphs import cluster_coefficient
from .measurement import Measurement, mc_mean
from .oracle import GibbsChainConfig, correlation_estimate
from .potential import BoxSpec, PairPotential, ball_volume, c_beta
from .weights import WeightRequest, _distances, omega, ursell

STRATA = ((), (0,), (1,), (0, 1))


@dataclass(frozen=True)
class SourceFunction:
    """Indicator of the eta-ball around `center` (a stand-in for a point source)."""
    center: tuple
    eta: float

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be positive")

    def volume(self, d: int) -> float:
        return ball_volume(self.eta, d)

    def sample(self, rng, k: int, box: BoxSpec) -> np.ndarray:
        d = box.d
        c = np.broadcast_to(np.asarray(self.center, float), (d,))
        if d == 1:
            pts = c + self.eta * (2 * rng.random((k, 1)) - 1)
        else:
            # direction times radius^(1/d) is uniform in the ball
            g = rng.standard_normal((k, d))
            g /= np.linalg.norm(g, axis=1, keepdims=True)
            pts = c + self.eta * g * rng.random((k, 1)) ** (1.0 / d)
        return pts % box.ell if box.periodic else pts

    def check(self, box: BoxSpec):
        c = np.broadcast_to(np.asarray(self.center, float), (box.d,))
        if np.any(c < 0) or np.any(c >= box.ell):
            raise ValueError("source center must lie in the box")
        if not box.periodic and (np.any(c - self.eta < 0) or np.any(c + self.eta > box.ell)):
            raise ValueError("with zero bc the source ball must lie inside the box")
        if 2 * self.eta >= box.ell:
            raise ValueError("source ball wider than the box")


@dataclass(frozen=True)
class PsiRequest:
    N: int
    box: BoxSpec
    potential: PairPotential
    beta: float
    sources: tuple = ()
    a: tuple = (0.0, 0.0)

    def __post_init__(self):
        if len(self.sources) > 2:
            raise ValueError("at most two sources")
        if len(self.sources) > self.N:
            raise ValueError("each source needs its own particle")
        if any(x <= -1 for x in self.a):
            raise ValueError("need 1 + a_i h_i > 0, i.e. a_i > -1")
        for s in self.sources:
            s.check(self.box)


def _quad_axis(lo, width, n):
    return lo + (np.arange(n) + 0.5) * width / n


def _stratum_grid_mean(req, S, n):
    box = req.box
    axes = []
    for i in range(req.N):
        if i in S:
            src = req.sources[i]
            ax = _quad_axis(src.center[0] - src.eta, 2 * src.eta, n)
            axes.append(ax % box.ell if box.periodic else ax)
        else:
            axes.append(_quad_axis(0.0, box.ell, n))
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, req.N, 1)
    if req.N < 2 or req.potential.kind == "ideal":
        return 1.0
    w = req.potential.boltzmann(_distances(grid, box), req.beta, average_ties=True).prod(axis=1)
    return float(w.mean())


def psi_strata(req: PsiRequest, method: str = "auto", budget: int | None = None,
               seed: int = 0, workers: int = 1) -> dict:
    """T_S = |Lambda|^{-N} int prod_{i in S} h_i(q_i) e^{-beta H} for every subset S of the sources.

    Particle i carries source i. Psi(a) = sum_S prod_{i in S} a_i T_S.
    """
    N, box = req.N, req.box
    if method == "auto":
        method = "quadrature" if box.d == 1 and N <= 3 else "monte-carlo"
    if method == "quadrature" and not (box.d == 1 and N <= 3):
        raise ValueError("Psi quadrature supports d = 1 and N <= 3")
    if method == "monte-carlo" and N > 8:
        raise ValueError("Psi Monte Carlo supports N <= 8")
    out = {}
    for S in STRATA:
        if any(i >= len(req.sources) for i in S):
            continue
        factor = math.prod(req.sources[i].volume(box.d) / box.volume for i in S)
        if method == "quadrature":
            n = 60
            fine = _stratum_grid_mean(req, S, n)
            coarse = _stratum_grid_mean(req, S, n // 2)
            val = (4 * fine - coarse) / 3
            out[S] = Measurement(factor * val, factor * abs(val - fine), "quadrature")
            continue
        samples = budget if budget is not None else 10**6

        def draw(rng, k, S=S):
            q = rng.random((k, N, box.d)) * box.ell
            for i in S:
                q[:, i, :] = req.sources[i].sample(rng, k, box)
            if N < 2 or req.potential.kind == "ideal":
                return np.ones(k)
            return req.potential.boltzmann(_distances(q, box), req.beta).prod(axis=1)

        acc = mc_mean(draw, samples, seed + len(out), workers)
        out[S] = Measurement(factor * acc.mean, factor * acc.stderr, "monte-carlo", seed)
    return out


def _psi_value(strata, a):
    val = 0.0
    var = 0.0
    for S, m in strata.items():
        w = math.prod(a[i] for i in S)
        val += w * m.value
        var += (w * m.stderr) ** 2
    return val, math.sqrt(var)


def psi_bruteforce(req: PsiRequest, method: str = "auto", budget: int | None = None,
                   seed: int = 0, workers: int = 1) -> Measurement:
    strata = psi_strata(req, method, budget, seed, workers)
    val, err = _psi_value(strata, req.a)
    m = next(iter(strata.values())).method
    return Measurement(val, err if m != "exact" else 0.0, m, seed if m == "monte-carlo" else None)


@dataclass(frozen=True)
class PsiCoefficients:
    c00: float
    c10: float
    c01: float
    c11: float
    stderr: dict
    method: str
    volumes: tuple
    V: float
    fd: dict = field(default_factory=dict)

    def as_dict(self):
        return {"c00": self.c00, "c10": self.c10, "c01": self.c01, "c11": self.c11}


def psi_coefficients(req: PsiRequest, delta: float = 1e-3, method: str = "auto",
                     budget: int | None = None, seed: int = 0, workers: int = 1) -> PsiCoefficients:
    """Multilinear coefficients of Psi read off from evaluations at a in {0, 1}^2.

    Psi is multilinear, so the unit corners determine it exactly. Central finite
    differences of log Psi at +-delta are kept as a cross-check in .fd.
    """
    strata = psi_strata(req, method, budget, seed, workers)
    ev = lambda a1, a2: _psi_value(strata, (a1, a2))[0]
    p00, p10, p01, p11 = ev(0, 0), ev(1, 0), ev(0, 1), ev(1, 1)
    c00 = p00
    c10 = p10 - p00
    c01 = p01 - p00
    c11 = p11 - p10 - p01 + p00
    lg = lambda a1, a2: math.log(ev(a1, a2))
    fd = {"dlog_a1": (lg(delta, 0) - lg(-delta, 0)) / (2 * delta),
          "dlog_a2": (lg(0, delta) - lg(0, -delta)) / (2 * delta),
          "d2log": (lg(delta, delta) - lg(delta, -delta) - lg(-delta, delta)
                    + lg(-delta, -delta)) / (4 * delta ** 2)}
    err = {k: strata[S].stderr if S in strata else 0.0
           for k, S in (("c00", ()), ("c10", (0,)), ("c01", (1,)), ("c11", (0, 1)))}
    vols = tuple(s.volume(req.box.d) for s in req.sources)
    return PsiCoefficients(c00, c10, c01, c11, err, strata[()].method, vols, req.box.volume, fd)


def one_point_from_psi(req: PsiRequest, **kw) -> Measurement:
    """|Lambda| d/da1 log Psi at 0, divided by |B_eta|: the eta-averaged rho1_lab at the source."""
    if len(req.sources) < 1:
        raise ValueError("need a source")
    pc = psi_coefficients(req, **kw)
    k = pc.V / pc.volumes[0]
    val = k * pc.c10 / pc.c00
    err = k * math.hypot(pc.stderr["c10"] / pc.c00, pc.c10 * pc.stderr["c00"] / pc.c00 ** 2)
    fd = k * pc.fd["dlog_a1"]
    method = pc.method
    return Measurement(val, err, method, kw.get("seed", 0) if method == "monte-carlo" else None,
                       extra={"finite_difference": fd, "fd_flagged": abs(fd - val) > 1e-4 * max(1, abs(val))})


def truncated_two_point(req: PsiRequest, **kw) -> Measurement:
    """|Lambda|^2 d^2/da1 da2 log Psi at 0 over |B_eta1||B_eta2|."""
    if len(req.sources) != 2:
        raise ValueError("need two sources")
    pc = psi_coefficients(req, **kw)
    K = pc.V ** 2 / (pc.volumes[0] * pc.volumes[1])
    c00, c10, c01, c11 = pc.c00, pc.c10, pc.c01, pc.c11
    val = K * (c11 / c00 - c10 * c01 / c00 ** 2)
    grads = {"c11": K / c00, "c10": -K * c01 / c00 ** 2, "c01": -K * c10 / c00 ** 2,
             "c00": K * (-c11 / c00 ** 2 + 2 * c10 * c01 / c00 ** 3)}
    err = math.sqrt(sum((grads[k] * pc.stderr[k]) ** 2 for k in grads))
    fd = K * pc.fd["d2log"]
    return Measurement(val, err, pc.method, kw.get("seed", 0) if pc.method == "monte-carlo" else None,
                       extra={"finite_difference": fd,
                              "fd_flagged": abs(fd - val) > 1e-3 * max(1, abs(val))})


def truncated_two_point_extrapolated(N: int, box: BoxSpec, potential: PairPotential, beta: float,
                                     centers, etas=(0.2, 0.1, 0.05), **kw) -> Measurement:
    """Truncated two-point function at several eta, extrapolated to eta -> 0 by a fit A + B eta^2."""
    vals, errs = [], []
    for eta in etas:
        srcs = tuple(SourceFunction(tuple(np.atleast_1d(c).astype(float)), eta) for c in centers)
        m = truncated_two_point(PsiRequest(N, box, potential, beta, srcs), **kw)
        vals.append(m.value)
        errs.append(m.stderr)
    x = np.asarray(etas, float) ** 2
    A = np.vstack([np.ones_like(x), x]).T
    coef, *_ = np.linalg.lstsq(A, np.asarray(vals), rcond=None)
    return Measurement(float(coef[0]), float(max(errs)), m.method, m.seed,
                       extra={"etas": list(etas), "values": vals, "stderrs": errs})


# ---------------------------------------------------------------------------
# augmented polymers


def augmented_activity(V_size: int, A, sources, potential: PairPotential, beta: float,
                       box: BoxSpec, samples: int = 10**6, seed: int = 0,
                       workers: int = 1) -> Measurement:
    """Coefficient of prod_{i in A} a_i in the activity of the marked polymer (V, A).

    Labels 1 and 2 carry sources 1 and 2. V_size = 1 with A = {i} is the special
    singleton; A empty is the plain polymer activity.
    """
    A = tuple(sorted(set(A)))
    if len(A) > 2 or any(i not in (1, 2) for i in A):
        raise ValueError("marker set must be a subset of {1, 2}")
    if any(i > V_size for i in A):
        raise ValueError("markers must belong to the support")
    if any(i > len(sources) for i in A):
        raise ValueError("a marker needs its source")
    if V_size == 1:
        if len(A) != 1:
            raise ValueError("the only single-label polymers are the marked singletons")
        return Measurement(sources[A[0] - 1].volume(box.d) / box.volume, 0.0, "exact")
    if not A:
        return omega(WeightRequest(V_size, potential, beta, box), samples=samples, seed=seed,
                     workers=workers)
    factor = math.prod(sources[i - 1].volume(box.d) / box.volume for i in A)
    if potential.kind == "ideal":
        return Measurement(0.0, 0.0, "exact")

    def draw(rng, k):
        q = rng.random((k, V_size, box.d)) * box.ell
        for i in A:
            q[:, i - 1, :] = sources[i - 1].sample(rng, k, box)
        return ursell(potential.mayer(_distances(q, box), beta), V_size)

    acc = mc_mean(draw, samples, seed, workers)
    return Measurement(factor * acc.mean, factor * acc.stderr, "monte-carlo", seed)


@dataclass(frozen=True)
class Resummation:
    partial: Fraction
    closed_partial: Fraction
    limit: Fraction


def class_two_resummation(volume, C, n_terms: int = 12) -> Resummation:
    """sum_{n=0}^{n_terms} c_{1,n} w^n with w = -C/|Lambda| and c_{1,n} from the graph kernel.

    Returns the partial sum, the closed form (1 - x^{n+1})/(1 - x) at x = C/|Lambda|,
    and the limit 1/(1 - x), all exact.
    """
    x = Fraction(C) / Fraction(volume)
    w = -x
    partial = Fraction(1)  # the lone marked polymer, n = 0
    for n in range(1, n_terms + 1):
        partial += cluster_coefficient({(1, 2): 1, (2, 3): n}) * w ** n
    closed = (1 - x ** (n_terms + 1)) / (1 - x)
    return Resummation(partial, closed, 1 / (1 - x))


# ---------------------------------------------------------------------------
# decay envelope


@dataclass
class DecayProfile:
    rows: list
    C: float
    C2: float
    C3: float
    plateau: float
    plateau_stderr: float
    rate: float | None
    rate_points: int
    estimate: object = field(repr=False, default=None)
    rate_stderr: float | None = None

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["r", "truncated", "stderr", "envelope", "pass"])
        for row in self.rows:
            w.writerow([repr(row["r"]), repr(row["truncated"]), repr(row["stderr"]),
                        repr(row["envelope"]), int(row["pass"])])
        return out.getvalue()

    @property
    def all_pass(self) -> bool:
        return all(r["pass"] for r in self.rows)


def _fit_rate(r, dev, err, R):
    """Weighted fit of dev = A exp(-k (r - r[0])); returns (k, stderr of k) or (None, None)."""
    if len(r) < 3:
        return None, None
    x = r - r[0]
    model = lambda x, A, k: A * np.exp(-k * x)
    k0 = 1.0 / R
    A0 = dev[0] if dev[0] != 0 else err[0]
    try:
        (A, k), cov = optimize.curve_fit(model, x, dev, p0=(A0, k0), sigma=err,
                                         absolute_sigma=True, bounds=((-np.inf, 0.0), (np.inf, 100.0 / R)))
    except (RuntimeError, ValueError):
        return None, None
    return float(k), float(np.sqrt(cov[1, 1]))


def decay_envelope(r_lo, r_hi, R, C, V, C2, C3):
    """Largest value of 1_{r<=R}/(1 - C/V) + C2 C/V + C3 e^{-r/R} over a bin [r_lo, r_hi)."""
    core = 1.0 / (1 - C / V) if r_lo < R else 0.0
    return core + C2 * C / V + C3 * math.exp(-r_lo / R)


def decay_profile(N: int, box: BoxSpec, potential: PairPotential, beta: float, separations,
                  sweeps: int = 10**6, seed: int = 0, bin_width: float | None = None,
                  stride: int | None = 1, chains: int = 1, burn_in: int | None = None,
                  rate_window=(2.0, 8.0)) -> DecayProfile:
    """Measured truncated labelled function at the given separations against the fitted envelope.

    C2 comes from the plateau over the outer half of the separations (mean plus
    three standard errors), C3 from the bins in (R, 2R). The decay rate k comes
    from a weighted least-squares fit of T - plateau = A e^{-k r} over the bins
    in rate_window (units of R).
    """
    R = potential.R
    w = bin_width if bin_width is not None else R / 4
    top = box.ell / 2 if box.periodic else box.ell
    edges = np.arange(0.0, top + 1e-12, w)
    cfg = GibbsChainConfig(N, box, potential, beta, sweeps=sweeps,
                           burn_in=burn_in if burn_in is not None else min(10_000, sweeps // 10),
                           seed=seed, stride=stride, chains=chains)
    est = correlation_estimate(cfg, "truncated-labelled", bins=edges)
    c = est.centers
    V = box.volume
    C = c_beta(potential, beta, box.d).value
    far = c >= top / 2
    if not far.any():
        raise ValueError("box too small for a plateau estimate")
    wts = 1 / est.stderr[far] ** 2
    plateau = float((est.value[far] * wts).sum() / wts.sum())
    plateau_err = float(1 / math.sqrt(wts.sum()))
    C2 = (abs(plateau) + 3 * plateau_err) * V / C
    calib = (est.edges[:-1] >= R) & (est.edges[1:] <= 2 * R + 1e-12)
    excess = np.maximum(np.abs(est.value[calib]) - C2 * C / V, 0.0)
    C3 = float((excess * np.exp(c[calib] / R)).max()) if calib.any() else 0.0

    rows = []
    for r in separations:
        b = int(np.clip(np.searchsorted(est.edges, r, side="right") - 1, 0, len(c) - 1))
        lo, hi = est.edges[b], est.edges[b + 1]
        env = decay_envelope(lo, hi, R, C, V, C2, C3)
        T, s = float(est.value[b]), float(est.stderr[b])
        rows.append({"r": float(r), "truncated": T, "stderr": s, "envelope": env,
                     "pass": abs(T) <= env + 3 * s, "flagged": bool(s >= abs(T))})

    win = (c >= rate_window[0] * R) & (c <= rate_window[1] * R) & (est.stderr > 0)
    rate, rate_err = _fit_rate(c[win], est.value[win] - plateau,
                               np.hypot(est.stderr[win], plateau_err), R)
    return DecayProfile(rows, C, float(C2), C3, plateau, plateau_err, rate, int(win.sum()), est,
                        rate_err)
