import math
from fractions import Fraction

import numpy as np
import pytest

from clusterexp.graphs import enumerate_connected
from clusterexp.potential import BoxSpec, PairPotential
from clusterexp.weights import (WeightRequest, activity_bound, beta_n, gap_polytope_sums, omega,
                                overlap_table, tree_graph_bound_check, ursell)

HC = PairPotential.hard_core(1.0)
SW = PairPotential.square_well(1.0, 0.5)


def box(ell=10.0, bc="periodic", d=1):
    return BoxSpec(ell, d, bc)


def test_omega_pair_examples():
    assert omega(WeightRequest(2, HC, 1.0, box(bc="zero"))).value == pytest.approx(-0.19, abs=1e-15)
    assert omega(WeightRequest(2, HC, 1.0, box())).value == pytest.approx(-0.2, abs=1e-15)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_omega_ideal_is_zero(n):
    assert omega(WeightRequest(n, PairPotential.ideal(), 1.0, box())).value == 0


@pytest.mark.parametrize("n", [2, 3, 4])
@pytest.mark.parametrize("bc", ["periodic", "zero"])
def test_omega_exact_agrees_with_mc(n, bc):
    req = WeightRequest(n, HC, 1.0, box(bc=bc))
    e = omega(req)
    m = omega(req, method="mc", samples=10**6, seed=11)
    assert e.method == "exact" and m.method == "monte-carlo"
    assert abs(e.value - m.value) <= 3 * m.stderr


@pytest.mark.parametrize("n", [2, 3, 4])
def test_omega_periodic_hard_rods_closed_form(n):
    # ring integral of the Ursell function: (-n)^{n-1} R^{n-1} / ell^{n-1}
    ell = 20.0
    got = omega(WeightRequest(n, HC, 1.0, box(ell))).value
    assert got == pytest.approx((-n) ** (n - 1) / ell ** (n - 1), rel=1e-12)


@pytest.mark.parametrize("n", [2, 3])
@pytest.mark.parametrize("color", [0, 1])
def test_rooted_omega_exact_agrees_with_mc(n, color):
    req = WeightRequest(n, HC, 1.0, box(bc="zero"), root_color=color)
    e, m = omega(req), omega(req, method="mc", seed=5)
    assert abs(e.value - m.value) <= 3 * m.stderr


@pytest.mark.parametrize("n", [2, 3, 4])
def test_rooted_colors_add_up(n):
    b = box(bc="zero")
    parts = [omega(WeightRequest(n, HC, 1.0, b, root_color=c)).value for c in (0, 1)]
    assert sum(parts) == pytest.approx(omega(WeightRequest(n, HC, 1.0, b)).value / n, rel=1e-12)


@pytest.mark.parametrize("n", [2, 3, 4])
@pytest.mark.parametrize("bc", ["periodic", "zero"])
def test_omega_within_activity_bound(n, bc):
    b = box(bc=bc)
    m = omega(WeightRequest(n, HC, 1.0, b))
    assert abs(m.value) <= activity_bound(n, HC, 1.0, b, a=0.0)


def test_square_well_omega_within_activity_bound():
    b = box()
    for n in (2, 3):
        m = omega(WeightRequest(n, SW, 1.0, b), samples=2 * 10**5, seed=3)
        assert abs(m.value) - 3 * m.stderr <= activity_bound(n, SW, 1.0, b, a=0.0)


def test_omega_periodic_shift_invariance():
    req = WeightRequest(3, HC, 1.0, box())
    a = omega(req, method="mc", samples=10**5, seed=4)
    b = omega(req, method="mc", samples=10**5, seed=4, shift=3.7)
    assert a.value == pytest.approx(b.value, abs=1e-12)


def test_omega_mc_reproducible():
    req = WeightRequest(3, SW, 1.0, box())
    a = omega(req, samples=10**5, seed=9, workers=3)
    b = omega(req, samples=10**5, seed=9, workers=3)
    assert (a.value, a.stderr) == (b.value, b.stderr)
    c = omega(req, samples=10**5, seed=9, workers=1)
    assert abs(a.value - c.value) <= 4 * math.hypot(a.stderr, c.stderr)


def test_omega_refusals():
    with pytest.raises(ValueError):
        WeightRequest(7, HC, 1.0, box())
    with pytest.raises(ValueError):
        omega(WeightRequest(3, SW, 1.0, box()), samples=0)


@pytest.mark.parametrize("n,value", [(1, -2.0), (2, -1.5), (3, -4 / 3)])
def test_beta_exact(n, value):
    m = beta_n(n, HC, 1.0)
    assert m.method == "exact" and m.value == pytest.approx(value, rel=1e-12)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_beta_mc_matches_hard_rod_virial_coefficients(n):
    # 1D hard rods: beta_n = -(n+1) R^n / n (the Tonks pressure is rho/(1 - rho R))
    m = beta_n(n, HC, 1.0, method="mc", seed=2)
    assert abs(m.value + (n + 1) / n) <= 3 * m.stderr


def test_beta_scales_with_range():
    assert beta_n(2, PairPotential.hard_core(0.5), 1.0).value == pytest.approx(-1.5 * 0.25)


def test_beta_one_is_mayer_integral():
    for p in (HC, SW, PairPotential.square_well(1.0, 0.5, core=0.3)):
        x = (np.arange(200_000) + 0.5) / 100_000 - 1.0
        quad = float(p.mayer(np.abs(x), 1.0).mean() * 2.0)
        assert beta_n(1, p, 1.0, samples=10**6).value == pytest.approx(quad, abs=5e-3)


def test_beta_ideal():
    assert beta_n(3, PairPotential.ideal(), 1.0).value == 0


def test_gap_polytope_volume_identity():
    # n! orderings of the signed gap volume give the hard-rod cluster integral (-n)^{n-1}
    for n in range(2, 6):
        vol, _ = gap_polytope_sums(n, "connected")
        assert math.factorial(n) * vol == Fraction((-n) ** (n - 1))


def test_ursell_matches_graph_sum():
    rng = np.random.default_rng(0)
    for n in (3, 4):
        f = rng.normal(size=(5, n * (n - 1) // 2))
        want = np.array([sum(np.prod(row[[k for k in range(f.shape[1]) if g.mask >> k & 1]])
                             for g in enumerate_connected(n)) for row in f])
        np.testing.assert_allclose(ursell(f, n), want, rtol=1e-12, atol=1e-12)


def test_overlap_table_shape():
    t = overlap_table(3, "connected")
    assert t.shape == (8,)


def kirchhoff_tree_sum(w):
    # weighted matrix-tree theorem: sum over spanning trees of prod w_e
    L = np.diag(w.sum(axis=1)) - w
    return float(np.linalg.det(L[1:, 1:]))


def test_tree_sum_agrees_with_matrix_tree_theorem():
    rng = np.random.default_rng(1)
    from clusterexp.graphs import enumerate_trees, pair_order
    for n in (3, 4, 5):
        pairs = pair_order(n)
        fabs = rng.random(len(pairs))
        w = np.zeros((n, n))
        for (i, j), x in zip(pairs, fabs):
            w[i - 1, j - 1] = w[j - 1, i - 1] = x
        brute = sum(np.prod([fabs[k] for k in range(len(pairs)) if t.mask >> k & 1])
                    for t in enumerate_trees(n))
        assert brute == pytest.approx(kirchhoff_tree_sum(w), rel=1e-10)


def test_tree_graph_all_overlapping():
    r = tree_graph_bound_check(3, HC, 1.0, points=np.zeros((1, 3, 1)))
    # |K3 Ursell| = 2 against 3 trees
    assert r.passed and r.max_ratio == pytest.approx(2 / 3)


def test_tree_graph_ideal_and_pair():
    assert tree_graph_bound_check(3, PairPotential.ideal(), 1.0, configs=100).max_ratio == 0
    r = tree_graph_bound_check(2, SW, 1.0, configs=100)
    assert r.passed and r.max_ratio <= math.exp(-4 * 1.0 * SW.B) + 1e-12


@pytest.mark.parametrize("n", [3, 4, 5])
@pytest.mark.parametrize("p", [HC, PairPotential.square_well(1.0, 0.5, B=1.0)], ids=["hc", "sw"])
def test_tree_graph_random_configurations(n, p):
    assert tree_graph_bound_check(n, p, 1.0, configs=2000, seed=n).passed


def test_activity_bound_examples():
    assert activity_bound(2, HC, 3.0, box(), a=1.0) == pytest.approx(math.e ** 2 * 2 / 10, rel=1e-12)
    assert activity_bound(2, HC, 3.0, box(), a=1.0) == pytest.approx(1.4778, abs=1e-4)
    assert activity_bound(3, PairPotential.ideal(), 1.0, box()) == 0


@pytest.mark.parametrize("n", [2, 3, 5])
def test_activity_bound_boundary_ratio(n):
    b = box(bc="zero")
    ratio = (activity_bound(n, HC, 1.0, b, rooted=True, eps=0)
             / activity_bound(n, HC, 1.0, b, rooted=True, eps=1))
    assert ratio == pytest.approx(2 * 1 * 1.0 / 10.0)
