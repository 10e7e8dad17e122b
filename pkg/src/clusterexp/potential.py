"""Finite-range pair potentials, Mayer functions and boxes."""
from __future__ import annotations

import csv
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .measurement import Measurement

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

KINDS = ("hard-core", "square-well", "tabulated", "ideal")


@dataclass(frozen=True)
class PairPotential:
    """Spherically symmetric pair potential with V(r) = 0 for r > R.

    hard-core:   V = inf for r <= R
    square-well: V = inf for r <= core, -depth for core < r <= R
    tabulated:   linear interpolation of (table_r, table_v), cut off at R
    ideal:       V = 0
    """
    kind: str
    R: float
    B: float = 0.0
    depth: float = 0.0
    core: float = 0.0
    table_r: tuple = field(default=(), repr=False)
    table_v: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}; expected one of {KINDS}")
        if not (self.R > 0 and math.isfinite(self.R)):
            raise ValueError("range R must be positive and finite (finite-range potentials only)")
        if self.B < 0:
            raise ValueError("stability constant B must be >= 0")
        if self.kind == "hard-core" and self.B != 0:
            raise ValueError("hard-core potentials have B = 0")
        if self.kind == "square-well":
            if self.depth < 0:
                raise ValueError("square-well depth must be >= 0")
            if not 0 <= self.core < self.R:
                raise ValueError("square-well core must satisfy 0 <= core < R")
        if self.kind == "tabulated":
            r = np.asarray(self.table_r, float)
            if r.size < 2 or len(self.table_v) != r.size:
                raise ValueError("tabulated potential needs matching r and value columns")
            if np.any(np.diff(r) <= 0) or r[0] < 0:
                raise ValueError("tabulated r must be increasing and nonnegative")
            if np.any(np.isnan(np.asarray(self.table_v, float))):
                raise ValueError("tabulated values must not be NaN")

    @classmethod
    def hard_core(cls, R=1.0):
        return cls("hard-core", R)

    @classmethod
    def square_well(cls, R, depth, B=None, core=0.0):
        # B = depth is exact for pairs; callers with many close neighbours must pass their own
        return cls("square-well", R, depth if B is None else B, depth=depth, core=core)

    @classmethod
    def ideal(cls, R=1.0):
        return cls("ideal", R)

    @property
    def breakpoints(self) -> tuple[float, ...]:
        pts = [self.R]
        if self.kind == "square-well" and self.core > 0:
            pts.insert(0, self.core)
        if self.kind == "tabulated":
            pts = sorted({float(x) for x in self.table_r if 0 < x < self.R} | {self.R})
        return tuple(pts)

    def energy(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        inside = r <= self.R
        if self.kind == "hard-core":
            out[inside] = np.inf
        elif self.kind == "square-well":
            out[inside] = -self.depth
            if self.core > 0:
                out[r <= self.core] = np.inf
        elif self.kind == "tabulated":
            out[inside] = np.interp(r[inside], self.table_r, self.table_v)
        return out

    def boltzmann(self, r, beta: float, average_ties: bool = False) -> np.ndarray:
        """e^{-beta V(r)}; at a jump of V, optionally the mean of the one-sided limits."""
        r = np.asarray(r, dtype=float)
        with np.errstate(over="ignore"):
            w = np.exp(-beta * self.energy(r))
        if average_ties and self.kind != "ideal":
            for b in self.breakpoints:
                at = np.abs(r - b) <= 1e-9 * b  # grid separations carry rounding error
                if at.any():
                    left = np.exp(-beta * self.energy(np.nextafter(b, 0.0)))
                    right = np.exp(-beta * self.energy(np.nextafter(b, np.inf)))
                    w[at] = 0.5 * (left + right)
        return w

    def mayer(self, r, beta: float, average_ties: bool = False) -> np.ndarray:
        return self.boltzmann(r, beta, average_ties) - 1.0

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "R": self.R, "B": self.B}
        if self.kind == "square-well":
            d.update(depth=self.depth, core=self.core)
        if self.kind == "tabulated":
            d.update(table_r=list(self.table_r), table_v=list(self.table_v))
        return d


@dataclass(frozen=True)
class BoxSpec:
    """Cube [0, ell)^d with periodic or zero boundary conditions."""
    ell: float
    d: int = 1
    bc: str = "periodic"

    def __post_init__(self):
        if not self.ell > 0:
            raise ValueError("box side must be positive")
        if self.d not in (1, 2, 3):
            raise ValueError("dimension must be 1, 2 or 3")
        if self.bc not in ("periodic", "zero"):
            raise ValueError("bc must be 'periodic' or 'zero'")

    @property
    def volume(self) -> float:
        return self.ell ** self.d

    @property
    def surface(self) -> float:
        return 2 * self.d * self.ell ** (self.d - 1)

    @property
    def periodic(self) -> bool:
        return self.bc == "periodic"

    def boundary_distance(self, q) -> np.ndarray:
        """Euclidean distance from q to the complement of the box (for q inside)."""
        q = np.asarray(q, dtype=float)
        return np.minimum(q, self.ell - q).min(axis=-1)

    def displacement(self, qi, qj) -> np.ndarray:
        """qi - qj, reduced to the minimal image when periodic."""
        x = np.asarray(qi, float) - np.asarray(qj, float)
        if self.periodic:
            x = x - self.ell * np.round(x / self.ell)
        return x


@dataclass(frozen=True)
class ThermoState:
    beta: float
    N: int
    box: BoxSpec

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.N < 0:
            raise ValueError("N must be >= 0")

    @property
    def rho(self) -> float:
        return self.N / self.box.volume


def _norm(displacement):
    x = np.asarray(displacement, dtype=float)
    return np.abs(x) if x.ndim == 0 else np.sqrt((x * x).sum(axis=-1))


def eval_potential(p: PairPotential, displacement) -> np.ndarray:
    return p.energy(_norm(displacement))


def mayer_f(p: PairPotential, beta: float, displacement) -> np.ndarray:
    if not beta > 0:
        raise ValueError("beta must be positive")
    return p.mayer(_norm(displacement), beta)


def periodized_f(p: PairPotential, beta: float, qi, qj, box: BoxSpec) -> np.ndarray:
    if not box.periodic:
        raise ValueError("periodized_f needs a periodic box")
    if box.ell <= 2 * p.R:
        raise ValueError(f"box side {box.ell} must exceed 2R = {2 * p.R}")
    return mayer_f(p, beta, box.displacement(qi, qj))


def ball_volume(radius: float, d: int) -> float:
    return {1: 2 * radius, 2: math.pi * radius ** 2, 3: 4 * math.pi * radius ** 3 / 3}.get(
        d, math.pi ** (d / 2) * radius ** d / math.gamma(d / 2 + 1))


def sphere_area(d: int) -> float:
    """Surface measure of the unit sphere in R^d (2 for d = 1)."""
    return {1: 2.0, 2: 2 * math.pi, 3: 4 * math.pi}.get(d, 2 * math.pi ** (d / 2) / math.gamma(d / 2))


def _radial_midpoint(p, beta, d, cells):
    total = 0.0
    edges = (0.0,) + p.breakpoints
    for lo, hi in zip(edges[:-1], edges[1:]):
        h = (hi - lo) / cells
        r = lo + h * (np.arange(cells) + 0.5)
        total += h * float(np.sum(np.abs(p.mayer(r, beta)) * r ** (d - 1)))
    return sphere_area(d) * total


def c_beta(p: PairPotential, beta: float, d: int = 1, method: str = "auto",
           tol: float = 1e-8, max_cells: int = 1 << 22) -> Measurement:
    """Integral of |e^{-beta V} - 1| over R^d."""
    if d not in (1, 2, 3):
        raise ValueError("dimension must be 1, 2 or 3")
    if method == "auto" and p.kind in ("hard-core", "ideal"):
        value = 0.0 if p.kind == "ideal" else ball_volume(p.R, d)
        return Measurement(value, 0.0, "exact")
    cells = 64
    prev = _radial_midpoint(p, beta, d, cells)
    while True:
        cells *= 2
        cur = _radial_midpoint(p, beta, d, cells)
        if abs(cur - prev) < tol or cells >= max_cells:
            return Measurement(cur, abs(cur - prev), "quadrature",
                               extra={"cells": cells, "converged": abs(cur - prev) < tol})
        prev = cur


def stability_probe(p: PairPotential, n: int, trials: int = 10_000, seed: int = 0,
                    d: int = 1) -> tuple[float, bool]:
    """Smallest H/n seen over random n-point configurations; heuristic only.

    Configurations are drawn in cubes of random side between R and 2nR, so
    both crowded and dilute arrangements occur.
    """
    if not 2 <= n <= 12:
        raise ValueError("stability probe supports 2 <= n <= 12")
    rng = np.random.default_rng(seed)
    sides = rng.uniform(p.R, 2 * n * p.R, size=trials)
    q = rng.random((trials, n, d)) * sides[:, None, None]
    iu, ju = np.triu_indices(n, 1)
    r = _norm(q[:, iu, :] - q[:, ju, :])
    H = p.energy(r).sum(axis=1)
    finite = H[np.isfinite(H)]
    lowest = float(finite.min()) / n if finite.size else math.inf
    return lowest, lowest >= -p.B - 1e-12


def load_potential(path) -> PairPotential:
    """Read a potential file (TOML: kind, R, B and a [parameters] table)."""
    path = Path(path)
    with open(path, "rb") as fh:
        cfg = tomllib.load(fh)
    kind = cfg.get("kind")
    if "R" not in cfg:
        raise ValueError(f"{path}: missing R")
    params = dict(cfg.get("parameters", {}))
    R, B = float(cfg["R"]), float(cfg.get("B", 0.0))
    if kind == "tabulated":
        table = params.get("table")
        if table is None:
            raise ValueError(f"{path}: tabulated potential needs parameters.table")
        rs, vs = read_table(path.parent / table)
        return PairPotential("tabulated", R, B, table_r=tuple(rs), table_v=tuple(vs))
    if kind == "square-well":
        return PairPotential("square-well", R, B, depth=float(params.get("depth", 0.0)),
                             core=float(params.get("core", 0.0)))
    return PairPotential(kind, R, B)


def read_table(path) -> tuple[list[float], list[float]]:
    rs, vs = [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#"):
                continue
            try:
                r, v = float(row[0]), float(row[1])
            except ValueError:
                continue  # header
            rs.append(r)
            vs.append(v)
    return rs, vs
