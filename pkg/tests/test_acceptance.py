"""Acceptance criteria 1-11, each printing one PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s`; the lines are also repeated in
the terminal summary.
"""
import json
import math
import time
from fractions import Fraction
from itertools import product

import numpy as np
import pytest

from clusterexp.correlations import decay_profile, truncated_two_point_extrapolated
from clusterexp.expansion import (free_energy_series, kp_check, product_deviation_ok,
                                  stirling_correction, tonks_free_energy)
from clusterexp.graphs import (cayley_count, cluster_coefficient, enumerate_connected,
                               enumerate_trees, gamma_bound_holds)
from clusterexp.oracle import (GibbsChainConfig, certify_hard_rod_formulas, correlation_estimate,
                               two_particle_truncated, z_bruteforce, z_exact_hard_rods)
from clusterexp.polymers import PolymerSystem
from clusterexp.potential import BoxSpec, PairPotential
from clusterexp.weights import WeightRequest, beta_n, omega, tree_graph_bound_check
from conftest import report

HC = PairPotential.hard_core(1.0)
IDEAL = PairPotential.ideal(1.0)


class Clock:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.t0


def test_c01_graph_combinatorics():
    with Clock() as clk:
        counts = tuple(len(enumerate_connected(n)) for n in range(1, 6))
        trees_ok = all(len(enumerate_trees(n)) == (n ** (n - 2) if n > 1 else 1) for n in range(1, 7))
        cayley_ok = True
        for n in range(2, 7):
            tally = {}
            for t in enumerate_trees(n):
                tally[t.degrees] = tally.get(t.degrees, 0) + 1
            for degs in product(range(1, n), repeat=n):
                if sum(degs) == 2 * n - 2:
                    cayley_ok &= cayley_count(degs) == tally.get(degs, 0)
    ok = counts == (1, 1, 4, 38, 728) and trees_ok and cayley_ok and clk.seconds < 5
    assert report("1 graph combinatorics", ok,
                  f"connected={counts} trees n^(n-2) n<=6: {trees_ok} cayley: {cayley_ok} "
                  f"({clk.seconds:.2f}s)")


def test_c02_cluster_coefficients():
    with Clock() as clk:
        single = [cluster_coefficient({(1, 2): n}) for n in range(1, 6)]
        pair = [cluster_coefficient({(1, 2): 1, (2, 3): n}) for n in range(1, 6)]
    ok = (single == [Fraction((-1) ** (n + 1), n) for n in range(1, 6)]
          and pair == [(-1) ** n for n in range(1, 6)] and clk.seconds < 10)
    assert report("2 cluster coefficients", ok,
                  f"c_n={[str(x) for x in single]} c_1n={[str(x) for x in pair]} ({clk.seconds:.2f}s)")


def test_c03a_exp_identity_synthetic():
    rng = np.random.default_rng(3)
    with Clock() as clk:
        ws = rng.uniform(-0.01, 0.01, 4)
        ps = PolymerSystem.build([(1, 2), (2, 3), (3, 4), (1, 4)], ws)
        diff = abs(ps.partition_function() - math.exp(ps.cluster_series(8)))
    ok = diff <= 1e-10 and clk.seconds < 30
    assert report("3a exp-identity synthetic", ok, f"|Z - exp(series)| = {diff:.2e} <= 1e-10 "
                  f"({clk.seconds:.2f}s)")


def test_c03b_exp_identity_hard_rods():
    with Clock() as clk:
        b = BoxSpec(20.0)
        w = {n: omega(WeightRequest(n, HC, 1.0, b)).value for n in (2, 3, 4)}
        ps = PolymerSystem.all_subsets(4, lambda k: w[k])
        Z = ps.partition_function()
        rel = abs(math.exp(ps.cluster_series(8)) - Z) / Z
    ok = rel <= 1e-8 and clk.seconds < 30
    assert report("3b exp-identity hard rods N=4 ell=20", ok,
                  f"relative difference at order 8 = {rel:.2e} (tolerance 1e-8) ({clk.seconds:.2f}s)")


def test_c04_irreducible_coefficients():
    with Clock() as clk:
        b1, b2 = beta_n(1, HC, 1.0), beta_n(2, HC, 1.0)
        m1 = beta_n(1, HC, 1.0, method="mc", samples=10**6, seed=41)
        m2 = beta_n(2, HC, 1.0, method="mc", samples=10**6, seed=42)
    ok = (abs(b1.value + 2) <= 1e-12 and abs(b2.value + 1.5) <= 1e-6
          and abs(m1.value - b1.value) <= 3 * m1.stderr
          and abs(m2.value - b2.value) <= 3 * m2.stderr and clk.seconds < 60)
    assert report("4 irreducible coefficients", ok,
                  f"beta1={b1.value!r} beta2={b2.value!r} mc: {m1.value:.5f}+-{m1.stderr:.1e}, "
                  f"{m2.value:.5f}+-{m2.stderr:.1e} ({clk.seconds:.2f}s)")


def test_c05_free_energy_series():
    with Clock() as clk:
        certified = certify_hard_rod_formulas()
        rho = 0.1
        s = free_energy_series(rho, 1.0, HC, 3, a=0.5)
        exact = tonks_free_energy(rho, 1.0)
        diff = abs(s.value - exact)
        envelope = sum((rho ** n) * rho / n for n in range(4, 200))
    ok = certified and diff <= 1e-5 and diff <= envelope * (1 + 1e-9) and clk.seconds < 60
    assert report("5 free-energy series", ok,
                  f"|series - exact| = {diff:.3e} (envelope {envelope:.3e}, tolerance 1e-5), "
                  f"oracle certified={certified} ({clk.seconds:.2f}s)")


ELLS = (100.0, 200.0, 400.0, 800.0)


def _scaled_errors(bc):
    rho = 0.1
    minus_bf = -tonks_free_energy(rho, 1.0)
    out = []
    for ell in ELLS:
        N = round(rho * ell)
        logz = z_exact_hard_rods(N, ell, 1.0, bc).logZ
        out.append((ell, N, abs(logz / ell - minus_bf) * ell))
    return out


def test_c06_periodic_scaling():
    with Clock() as clk:
        rows = _scaled_errors("periodic")
    vals = [v for _, _, v in rows]
    spread = max(vals) / min(vals) - 1
    ok = spread < 0.5 and clk.seconds < 5
    report("6 periodic |Lambda| x error bounded", ok,
           f"values {[round(v, 4) for v in vals]}, spread {spread:.3f} (limit 0.5)")
    stir = [v - stirling_correction(N, ell) * ell for ell, N, v in rows]
    report("6 info periodic after removing the ideal-gas Stirling term",
           max(stir) / min(stir) - 1 < 0.5, f"values {[round(v, 4) for v in stir]}")
    assert ok


def test_c06_zero_bc_scaling():
    with Clock() as clk:
        rows = _scaled_errors("zero")
    vals = [v for _, _, v in rows]
    steps = np.diff(vals)
    converging = abs(steps[-1]) < 0.25 * abs(steps[0])
    ok = converging and vals[-1] > 0 and clk.seconds < 5
    report("6 zero bc |Lambda| x error converges", ok,
           f"values {[round(v, 4) for v in vals]}, increments {[round(float(x), 4) for x in steps]}")
    stir = [v - stirling_correction(N, ell) * ell for ell, N, v in rows]
    d2 = np.diff(stir)
    report("6 info zero bc after removing the ideal-gas Stirling term",
           abs(d2[-1]) < 0.25 * abs(d2[0]) or abs(d2[-1]) < 1e-3,
           f"values {[round(v, 4) for v in stir]}")
    assert ok


def _two_rod_mcmc(seed=7, chains=1):
    cfg = GibbsChainConfig(2, BoxSpec(10.0), HC, sweeps=400_000, burn_in=2000, stride=1,
                           seed=seed, chains=chains)
    return correlation_estimate(cfg, "truncated-labelled", bins=np.array([0.0, 1.0, 3.0, 5.0]))


def test_c07_two_rods_exact_values():
    with Clock() as clk:
        exact = two_particle_truncated(10.0, 1.0, [0.5, 2.0, 4.0])
        psi_in = truncated_two_point_extrapolated(2, BoxSpec(10.0), HC, 1.0, (2.0, 2.5))
        psi_out = truncated_two_point_extrapolated(2, BoxSpec(10.0), HC, 1.0, (2.0, 5.0))
        est = _two_rod_mcmc()
    psi_ok = (abs(psi_in.value / exact[0] - 1) <= 0.02 and abs(psi_out.value / exact[2] - 1) <= 0.02)
    mc_ok = bool(np.all(np.abs(est.value - exact) <= 3 * est.stderr))
    ok = psi_ok and mc_ok and clk.seconds < 300
    assert report("7 two rods, full plug-in values -1 (r<=R) and 0.25 (r>R)", ok,
                  f"exact={exact.tolist()} psi={psi_in.value:.4f},{psi_out.value:.4f} "
                  f"mcmc={est.value.round(4).tolist()}+-{est.stderr.round(4).tolist()} "
                  f"({clk.seconds:.1f}s)")


def test_c07_two_rods_literal_values():
    exact = two_particle_truncated(10.0, 1.0, [0.5, 3.0])
    psi_in = truncated_two_point_extrapolated(2, BoxSpec(10.0), HC, 1.0, (2.0, 2.5))
    est = _two_rod_mcmc()
    ok = (abs(exact[0] + 1.25) <= 1e-12 and abs(exact[1] - 0.25) <= 1e-12
          and abs(psi_in.value / -1.25 - 1) <= 0.02 and abs(est.value[0] + 1.25) <= 3 * est.stderr[0])
    assert report("7 two rods, literal -1.25 (r<=R)", ok,
                  f"exact={float(exact[0])!r} psi={psi_in.value:.4f} mcmc={est.value[0]:.4f} vs -1.25")


def _ideal_estimates(N=3, ell=10.0):
    cfg = GibbsChainConfig(N, BoxSpec(ell), IDEAL, sweeps=200_000, burn_in=1000, stride=1, seed=8)
    pair = correlation_estimate(cfg, "truncated-labelled", bins=np.array([0.0, 1.0, 2.5, 5.0]))
    one = correlation_estimate(cfg, "one-point", bins=10)
    return pair, one


def test_c08_ideal_gas_identities():
    N, V = 3, 10.0
    with Clock() as clk:
        pair, one = _ideal_estimates(N, V)
    # definitions for H = 0: rho2 = N(N-1)/V^2, rho1 = N/V
    exact_unlab = Fraction(N * (N - 1), 100) - Fraction(N, 10) ** 2
    u, ue = pair.extra["unlabelled_truncated"], pair.extra["unlabelled_truncated_stderr"]
    unlab_ok = exact_unlab == -Fraction(N, 100) and bool(np.all(np.abs(u + N / V ** 2) <= 3 * ue))
    lab_ok = bool(np.all(np.abs(pair.value) <= 3 * pair.stderr))
    integ = one.extra["integral"]
    int_ok = abs(integ - N) <= 3 * one.extra["integral_stderr"] + 1e-9
    ok = unlab_ok and lab_ok and int_ok and clk.seconds < 120
    assert report("8 ideal gas, unlabelled truncated = -N/|Lambda|^2, labelled 0, integral N", ok,
                  f"exact {exact_unlab}, mcmc {u.round(5).tolist()}; labelled "
                  f"{pair.value.round(4).tolist()}; integral {integ:.6f} ({clk.seconds:.1f}s)")


def test_c08_ideal_gas_literal_sign():
    N, V = 3, 10.0
    exact_unlab = Fraction(N * (N - 1), 100) - Fraction(N, 10) ** 2
    pair, _ = _ideal_estimates(N, V)
    u, ue = pair.extra["unlabelled_truncated"], pair.extra["unlabelled_truncated_stderr"]
    ok = exact_unlab == Fraction(N, 100) and bool(np.all(np.abs(u - N / V ** 2) <= 3 * ue))
    assert report("8 ideal gas, literal +N/|Lambda|^2", ok,
                  f"exact {exact_unlab} vs +{Fraction(N, 100)}; mcmc {u.round(5).tolist()}")


@pytest.mark.slow
def test_c09_decay_envelope():
    with Clock() as clk:
        prof = decay_profile(20, BoxSpec(200.0), HC, 1.0, [k * 1.0 for k in range(2, 11)],
                             sweeps=10**7, seed=9, stride=1)
    rate_ok = prof.rate is not None and prof.rate >= 0.8
    ok = prof.all_pass and rate_ok and clk.seconds < 900
    rows = ", ".join(f"{r['r']:.0f}:{r['truncated']:.4f}<={r['envelope']:.4f}+3*{r['stderr']:.4f}"
                     for r in prof.rows)
    assert report("9 decay envelope N=20 ell=200", ok,
                  f"C2={prof.C2:.3f} C3={prof.C3:.3f} rate={prof.rate} +- {prof.rate_stderr} "
                  f"[{rows}] ({clk.seconds:.0f}s)")


def test_c10_bound_suites():
    sw = PairPotential.square_well(1.0, 0.5, B=1.0)
    with Clock() as clk:
        tree = {(p.kind, n): tree_graph_bound_check(n, p, 1.0, configs=10_000, seed=n)
                for p in (HC, sw) for n in range(2, 6)}
        tree_ok = all(r.passed for r in tree.values())
        gamma_ok = all(gamma_bound_holds(k, m) for m in range(1, 13) for k in range(1, m + 1))
        prod_ok = all(product_deviation_ok(N, n) for N in (16, 100)
                      for n in range(1, math.isqrt(N) + 1))
        kp_ok = True
        checked = 0
        for p in (HC, sw, IDEAL):
            for rho in (0.001, 0.01, 0.05, 0.1, 0.2):
                for a in (0.05, 0.25, 0.5, 1.0):
                    C = 0 if p.kind == "ideal" else (2.0 if p.kind == "hard-core"
                                                     else kp_check(p, 1.0, rho, a).C)
                    if rho * C * math.exp(2 * p.B + 1 + a) < 1:
                        kp_ok &= kp_check(p, 1.0, rho, a=a).condition_met
                        checked += 1
    ok = tree_ok and gamma_ok and prod_ok and kp_ok and clk.seconds < 120
    worst = max(r.max_ratio for r in tree.values())
    assert report("10 bound suites", ok,
                  f"tree-graph {tree_ok} (max ratio {worst:.3f}), gamma {gamma_ok}, product "
                  f"{prod_ok}, kp {kp_ok} on {checked} configurations ({clk.seconds:.1f}s)")


def test_c11_determinism():
    def runs():
        m = beta_n(2, HC, 1.0, method="mc", samples=2 * 10**5, seed=42, workers=3)
        z = z_bruteforce(5, BoxSpec(10.0), HC, 1.0, method="mc", budget=2 * 10**5, seed=1, workers=2)
        est = _two_rod_mcmc(seed=5, chains=2)
        return (json.dumps(m.record("beta_n", {"n": 2}), sort_keys=True).encode()
                + repr((z.logZ, z.stderr)).encode() + est.value.tobytes() + est.stderr.tobytes())

    a, b = runs(), runs()
    assert report("11 determinism", a == b, f"{len(a)} bytes compared, identical={a == b}")
