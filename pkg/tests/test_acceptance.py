"""Acceptance suite: one test per criterion, stated tolerances, wall-clock budgets.

Run ``pytest tests/test_acceptance.py`` to get a PASS/FAIL line per criterion
in the terminal summary.
"""

import math
import time

import numpy as np
import pytest

from sublinear_clt import (CovariancePolytope, DiscreteDistribution, Grid1D, Grid2D, MeanPolytope,
                           ScenarioSet, TestFunction, build_sequence, enumerate_oracle, evaluate,
                           evaluate_sum_expectation, g_value, gnormal_expectation, hausdorff,
                           hausdorff_interval, lipschitz_bound_check, marginal, moment,
                           solve_gheat_1d, solve_maximal_pde, verify_axioms)
from sublinear_clt.clt_engine import independent_product
from sublinear_clt.gheat_pde import maximal_closed_form
from sublinear_clt.matrix_sets import frobenius_norm, random_sym

from helpers import random_lattice_sequence, random_psd, random_scenario_set

RADEMACHER = ScenarioSet.from_lists([([-1.0], 0.5), ([1.0], 0.5)])
TWO_SCALE = ScenarioSet.from_lists([([-1.0], 0.5), ([1.0], 0.5)], [([-2.0], 0.5), ([2.0], 0.5)])
COS = TestFunction("cosine")
E_COS = math.exp(-0.5)


def iid(s):
    return build_sequence("iid", {"scenarios": s})


@pytest.fixture(scope="module")
def pde_limit_1_4():
    """E[cos X] for X ~ N(0; [1, 4]) on a dx = 0.01 grid."""
    return gnormal_expectation(CovariancePolytope.interval(1, 4), COS, dx=0.01).value


@pytest.mark.criterion(1, "DP equals brute-force oracle on 200 random lattice configs")
def test_dp_oracle_equivalence(record_property):
    rng = np.random.default_rng(20240601)
    t0 = time.perf_counter()
    worst, ns = 0.0, []
    for _ in range(200):
        seq, n = random_lattice_sequence(rng, max_n=8, leaf_cap=1_000_000)
        scaling = str(rng.choice(["inv_sqrt_n", "inv_n", "none"]))
        kind = rng.integers(3)
        d = seq.dimension
        phi = (TestFunction("cosine", tuple(rng.normal(size=d))) if kind == 0 else
               TestFunction("clipped_abs", (rng.uniform(0.5, 3),)) if kind == 1 else
               TestFunction("neg_abs", (rng.uniform(0.5, 3),)))
        dp = evaluate_sum_expectation(seq, n, scaling, phi)
        worst = max(worst, abs(dp - enumerate_oracle(seq, n, scaling, phi)))
        ns.append(n)
    elapsed = time.perf_counter() - t0
    record_property("measured", f"max diff {worst:.2e}, {elapsed:.1f}s, max n {max(ns)}")
    assert worst <= 1e-12
    assert elapsed < 60
    assert max(ns) == 8


@pytest.mark.criterion(2, "classical CLT: Rademacher, cos, n=128 within 0.01 of exp(-1/2)")
def test_classical_clt(record_property):
    t0 = time.perf_counter()
    v = evaluate_sum_expectation(iid(RADEMACHER), 128, "inv_sqrt_n", COS)
    elapsed = time.perf_counter() - t0
    record_property("measured", f"gap {abs(v - E_COS):.2e}, {elapsed:.2f}s")
    assert abs(v - E_COS) <= 0.01
    assert elapsed < 1


@pytest.mark.criterion(3, "variance-uncertain CLT: two-scale Rademacher vs G-heat limit")
def test_two_scale_clt(record_property):
    t0 = time.perf_counter()
    limit = gnormal_expectation(CovariancePolytope.interval(1, 4), COS, dx=0.01).value
    gaps = [abs(evaluate_sum_expectation(iid(TWO_SCALE), n, "inv_sqrt_n", COS) - limit)
            for n in (8, 16, 32, 64, 128)]
    elapsed = time.perf_counter() - t0
    record_property("measured", f"gaps {[round(g, 4) for g in gaps]}, {elapsed:.1f}s")
    assert gaps[-1] <= 0.02
    assert all(b <= a + 0.005 for a, b in zip(gaps, gaps[1:]))
    assert elapsed < 30


@pytest.mark.criterion(4, "non-identical sequences reach the same limit at n=128")
@pytest.mark.parametrize("builder", ["hausdorff_decay", "cesaro_spike"])
def test_non_identical_sequences(builder, pde_limit_1_4, record_property):
    seq = build_sequence(builder, {"lo": 1, "hi": 4, "c": 1})
    assert seq.limit.as_interval() == (1.0, 4.0)
    t0 = time.perf_counter()
    v = evaluate_sum_expectation(seq, 128, "inv_sqrt_n", COS)
    elapsed = time.perf_counter() - t0
    record_property("measured", f"{builder} gap {abs(v - pde_limit_1_4):.4f}, {elapsed:.1f}s")
    assert abs(v - pde_limit_1_4) <= 0.03
    assert elapsed < 60


@pytest.mark.criterion(5, "G-heat closed forms at dx=0.005")
@pytest.mark.parametrize("lo2,hi2,phi,expected", [
    (1.0, 4.0, TestFunction("abs"), 2 * math.sqrt(2 / math.pi)),
    (1.0, 4.0, TestFunction("neg_abs"), -math.sqrt(2 / math.pi)),
    (1.0, 1.0, COS, E_COS),
], ids=["abs", "neg_abs", "cos"])
def test_gheat_closed_forms(lo2, hi2, phi, expected, record_property):
    t0 = time.perf_counter()
    grid = Grid1D.from_spacing(0.005, 1.0, 6 * math.sqrt(hi2) + 2, hi2)
    assert grid.dx <= 0.005
    v = solve_gheat_1d(lo2, hi2, phi, grid).center_value()
    elapsed = time.perf_counter() - t0
    record_property("measured", f"{phi.catalog_id} err {abs(v - expected):.1e}, {elapsed:.1f}s")
    assert abs(v - expected) <= 5e-3
    assert elapsed < 30


def _interior_error_1d(gamma, phi, grid):
    sol = solve_maximal_pde(gamma, phi, 1.0, grid)
    inner = np.abs(grid.x) <= grid.L / 4
    exact = maximal_closed_form(gamma, phi, 1.0, grid.x[inner][:, None])
    return float(np.max(np.abs(sol.values[inner] - exact)))


@pytest.mark.criterion(6, "maximal PDE agrees with the closed form on [-1,1] and a triangle")
def test_hopf_agreement(record_property):
    t0 = time.perf_counter()
    seg = MeanPolytope.interval(-1, 1)
    g1 = Grid1D(8.0, 801, 1.0, 0.01)
    errs = [_interior_error_1d(seg, phi, g1)
            for phi in (TestFunction("neg_abs"), TestFunction("clipped_abs", (2.0,)), COS)]
    tri = MeanPolytope(np.array([[-1.0, -0.5], [1.0, 0.0], [0.0, 1.0]]))
    g2 = Grid2D(4.0, 4.0, 161, 161, 1.0, 0.02)
    sol = solve_maximal_pde(tri, TestFunction("neg_abs"), 1.0, g2)
    nodes = g2.mesh()
    inner = np.all(np.abs(nodes) <= np.array([g2.L1, g2.L2]) / 4, axis=1)
    exact = maximal_closed_form(tri, TestFunction("neg_abs"), 1.0, nodes[inner], spacing=0.01)
    err2 = float(np.max(np.abs(sol.values.ravel()[inner] - exact)))
    elapsed = time.perf_counter() - t0
    record_property("measured", f"1D {max(errs):.3f} / tol {10 * g1.dx:.2f}, "
                                f"2D {err2:.3f} / tol {10 * max(g2.dx):.2f}, {elapsed:.1f}s")
    assert max(errs) <= 10 * g1.dx
    assert err2 <= 10 * max(g2.dx)
    assert elapsed < 10


@pytest.mark.criterion(7, "LLN: point-mass and noisy mean-uncertain averages")
def test_lln(record_property):
    phi = TestFunction("clipped_abs", (2.0,))
    t0 = time.perf_counter()
    plain = evaluate_sum_expectation(build_sequence("lln_mean_interval", {"lo": -1, "hi": 1}),
                                     128, "inv_n", phi)
    noisy = evaluate_sum_expectation(
        build_sequence("lln_mean_interval", {"lo": -1, "hi": 1, "noise": 0.5}), 128, "inv_n", phi)
    elapsed = time.perf_counter() - t0
    record_property("measured", f"gaps {abs(plain - 1):.4f} / {abs(noisy - 1):.4f}, {elapsed:.2f}s")
    assert abs(plain - 1) <= 0.02
    assert abs(noisy - 1) <= 0.05
    assert elapsed < 10


@pytest.mark.criterion(8, "Hausdorff distance of [1,4] and [2,3] is exactly 1")
def test_hausdorff_interval_exact(record_property):
    closed = hausdorff_interval((1.0, 4.0), (2.0, 3.0))
    poly = hausdorff(CovariancePolytope.interval(1, 4), CovariancePolytope.interval(2, 3))
    record_property("measured", f"closed {closed!r}, polytope {poly!r}")
    assert closed == 1.0
    assert abs(poly - 1.0) <= 1e-9


@pytest.mark.criterion(9, "G-gap bounded by Hausdorff distance; common Lipschitz bound")
def test_inequality_suite(record_property):
    rng = np.random.default_rng(99)
    violations, checks = 0, 0
    for k in range(120):
        d = 1 + k % 3
        t1, t2 = (CovariancePolytope(np.array([random_psd(rng, d, rng.uniform(0.1, 3))
                                               for _ in range(int(rng.integers(1, 6)))]))
                  for _ in range(2))
        dh = hausdorff(t1, t2)
        for _ in range(25):
            a = random_sym(d, rng, unit=False) * rng.uniform(0.1, 5)
            checks += 1
            violations += abs(g_value(t1, a) - g_value(t2, a)) > dh * frobenius_norm(a) + 1e-9
    lip_checks, lip_viol = 0, 0
    builders = [("scaled_interval", {"a": [1, 2, 1], "b": [2, 3, 2]}),
                ("hausdorff_decay", {"lo": 1, "hi": 4, "c": 1}),
                ("cesaro_spike", {"lo": 1, "hi": 4, "c": 1}),
                ("cauchy_sets", {"lo": 2, "hi": 4, "c": 1, "ratio": -0.5}),
                ("iid", {"scenarios": ScenarioSet.from_lists(
                    [([1.0, 0.0], .25), ([-1.0, 0.0], .25), ([0.0, 1.0], .25), ([0.0, -1.0], .25)],
                    [([1.0, 1.0], .5), ([-1.0, -1.0], .5)])})]
    for bid, params in builders:
        seq = build_sequence(bid, params)
        d = seq.dimension
        pairs = [(random_sym(d, rng, False) * 3, random_sym(d, rng, False) * 3) for _ in range(20)]
        thetas = [seq.covariance_set(i) for i in range(1, 65)]
        rep = lipschitz_bound_check(thetas, seq.moment_bound, pairs, slack=1e-9)
        lip_checks += rep.checks
        lip_viol += len(rep.violations)
    record_property("measured", f"{violations}/{checks} G-gap, {lip_viol}/{lip_checks} Lipschitz")
    assert checks >= 100 * 20 and violations == 0
    assert lip_viol == 0


@pytest.mark.criterion(10, "axioms and moment inequalities on 500+ random instances")
def test_axiom_and_moment_suites(record_property):
    rng = np.random.default_rng(7)
    tol = 1e-9
    instances, failures = 0, []
    for k in range(520):
        d = 1 + k % 2
        s = random_scenario_set(rng, d, lattice=False)
        w = rng.normal(size=d)
        phi = TestFunction("cosine", tuple(w))
        psi = TestFunction("clipped_abs", (rng.uniform(0.2, 3),))
        shift = rng.uniform(0, 1)
        rep = verify_axioms(s, [(phi, psi, rng.normal() * 3, rng.uniform(0, 4)),
                                (phi, lambda x: phi(x) - shift, 0.0, 0.0)], tol=tol)
        instances += 1
        if not rep.passed:
            failures.append(("axioms", k))

        # moment inequalities on a joint (X, Y) with Y independent of X
        sx, sy = random_scenario_set(rng, 1, lattice=False), random_scenario_set(rng, 1, lattice=False)
        joint = independent_product(sx, sy)
        p = rng.uniform(1.05, 4.0)
        q = p / (p - 1)
        mx, my = marginal(joint, 0), marginal(joint, 1)
        holder = (evaluate(joint, lambda x: np.abs(x[:, 0] * x[:, 1]))
                  - moment(mx, p) ** (1 / p) * moment(my, q) ** (1 / q))
        mink = (evaluate(joint, lambda x: np.abs(x[:, 0] + x[:, 1]) ** p) ** (1 / p)
                - moment(mx, p) ** (1 / p) - moment(my, p) ** (1 / p))
        r = p + rng.uniform(0.1, 2)
        mono = moment(sx, p) ** (1 / p) - moment(sx, r) ** (1 / r)
        instances += 3
        for name, gap in (("holder", holder), ("minkowski", mink), ("lp_monotone", mono)):
            if gap > tol:
                failures.append((name, k))

        # a component without mean uncertainty adds linearly
        mu = rng.normal()
        sy0 = ScenarioSet.of(*(DiscreteDistribution(sc.points - sc.mean() + mu, sc.weights)
                               for sc in sy))
        j0 = independent_product(sx, sy0)
        alpha = rng.normal() * 2
        lhs = evaluate(j0, lambda x: x[:, 0] + alpha * x[:, 1])
        rhs = evaluate(j0, lambda x: x[:, 0]) + alpha * evaluate(j0, lambda x: x[:, 1])
        instances += 1
        if abs(lhs - rhs) > 1e-10:
            failures.append(("mean_certain_additivity", k))
    record_property("measured", f"{len(failures)} violations in {instances} instances")
    assert instances >= 500
    assert not failures, failures[:10]
