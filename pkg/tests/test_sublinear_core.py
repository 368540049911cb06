import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sublinear_clt import (ConstructionError, DiscreteDistribution, InputError, ScenarioSet,
                           TestFunction, argmax_scenario, evaluate, marginal, moment,
                           verify_axioms)
from sublinear_clt.clt_engine import independent_product
from sublinear_clt.sublinear_core import (CATALOG, check_mean_certain_zero,
                                          scenario_expectations)

from helpers import random_scenario_set

RADEMACHER = [([-1.0], 0.5), ([1.0], 0.5)]
TWO_SCALE = ScenarioSet.from_lists(RADEMACHER, [([-2.0], 0.5), ([2.0], 0.5)])


def square(x):
    return np.sum(x * x, axis=1)


def ident(x):
    return x[:, 0]


# --- construction --------------------------------------------------------


def test_weights_renormalized_within_tolerance():
    d = DiscreteDistribution([[0.0], [1.0]], [0.5, 0.5 + 5e-13])
    assert math.fsum(d.weights) == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("weights", [[0.5, 0.4], [1.2, -0.2], [1.0, 0.0]])
def test_bad_weights_rejected(weights):
    with pytest.raises(ConstructionError):
        DiscreteDistribution([[0.0], [1.0]], weights)


def test_duplicate_atoms_rejected_unless_merged():
    with pytest.raises(ConstructionError):
        DiscreteDistribution.from_atoms([([1.0], 0.5), ([1.0], 0.5)])
    d = DiscreteDistribution.from_atoms([([1.0], 0.5), ([1.0], 0.5)], merge=True)
    assert len(d) == 1


def test_empty_and_mixed_dimension_sets_rejected():
    with pytest.raises(ConstructionError):
        ScenarioSet(1, ())
    with pytest.raises(ConstructionError):
        ScenarioSet.of(DiscreteDistribution.point_mass([0.0]),
                       DiscreteDistribution.point_mass([0.0, 0.0]))


def test_distribution_is_immutable():
    d = DiscreteDistribution.point_mass([1.0])
    with pytest.raises(ValueError):
        d.points[0, 0] = 2.0


def test_json_round_trip():
    s = ScenarioSet.from_json(json.loads(json.dumps(TWO_SCALE.to_json())))
    assert s == TWO_SCALE
    assert TWO_SCALE.to_json()["scenarios"][1] == [[[-2.0], 0.5], [[2.0], 0.5]]


# --- evaluate ------------------------------------------------------------


def test_evaluate_examples():
    assert evaluate(ScenarioSet.from_lists(RADEMACHER), square) == 1.0
    assert evaluate(TWO_SCALE, square) == 4.0
    assert evaluate(TWO_SCALE, ident) == 0.0


def test_evaluate_constant():
    assert evaluate(TWO_SCALE, lambda x: np.full(len(x), 5.0)) == 5.0


def test_dimension_mismatch_is_input_error():
    with pytest.raises(InputError):
        evaluate(TWO_SCALE, TestFunction("linear", (1.0, 1.0)))


def test_argmax_ties_take_lowest_index():
    s = ScenarioSet.from_lists(RADEMACHER, [([-1.0], 0.25), ([1.0], 0.75)])
    assert argmax_scenario(s, square) == 0
    assert argmax_scenario(TWO_SCALE, square) == 1


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(1, 2))
def test_representation_consistency(seed, d):
    rng = np.random.default_rng(seed)
    s = random_scenario_set(rng, d, lattice=False)
    phi = TestFunction("cosine", tuple(rng.normal(size=d)))
    vals = scenario_expectations(s, phi)
    v = evaluate(s, phi)
    assert vals.min() <= v
    assert v == vals[argmax_scenario(s, phi)]


# --- mean certainty and moments -----------------------------------------


def test_mean_certain_zero_examples():
    assert check_mean_certain_zero(ScenarioSet.from_lists(RADEMACHER))
    assert check_mean_certain_zero(ScenarioSet.from_lists([([0.0], 1.0)]))
    assert not check_mean_certain_zero(ScenarioSet.from_lists([([0.0], 0.9), ([1.0], 0.1)]))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(1, 2), st.booleans())
def test_mean_certain_zero_matches_directional_expectations(seed, d, sym):
    rng = np.random.default_rng(seed)
    s = random_scenario_set(rng, d, mean_zero=sym)
    expected = True
    for _ in range(10):
        p = rng.normal(size=d)
        p /= np.linalg.norm(p)
        up = evaluate(s, lambda x: x @ p)
        down = evaluate(s, lambda x: -(x @ p))
        expected &= abs(up) <= 1e-10 and abs(down) <= 1e-10
    assert check_mean_certain_zero(s) == expected


def test_moment_examples():
    assert moment(TWO_SCALE, 3) == 8.0
    assert moment(ScenarioSet.from_lists([([0.0], 1.0)]), 2.5) == 0.0
    assert moment(ScenarioSet.from_lists(RADEMACHER), 2) == 1.0
    with pytest.raises(InputError):
        moment(TWO_SCALE, 0.5)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10 ** 6), st.floats(1.0, 3.0), st.floats(0.1, 3.0))
def test_lp_norms_monotone(seed, p, dq):
    s = random_scenario_set(np.random.default_rng(seed), lattice=False)
    q = p + dq
    assert moment(s, p) ** (1 / p) <= moment(s, q) ** (1 / q) + 1e-12


def _joint(rng):
    sx = random_scenario_set(rng, 1, lattice=False)
    sy = random_scenario_set(rng, 1, lattice=False)
    return independent_product(sx, sy)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10 ** 6), st.floats(1.1, 4.0))
def test_holder_in_the_standard_form(seed, p):
    s = _joint(np.random.default_rng(seed))
    q = p / (p - 1)
    lhs = evaluate(s, lambda x: np.abs(x[:, 0] * x[:, 1]))
    rhs = moment(marginal(s, 0), p) ** (1 / p) * moment(marginal(s, 1), q) ** (1 / q)
    assert lhs <= rhs + 1e-12


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10 ** 6), st.floats(1.0, 4.0))
def test_minkowski(seed, p):
    s = _joint(np.random.default_rng(seed))
    lhs = evaluate(s, lambda x: np.abs(x[:, 0] + x[:, 1]) ** p) ** (1 / p)
    rhs = moment(marginal(s, 0), p) ** (1 / p) + moment(marginal(s, 1), p) ** (1 / p)
    assert lhs <= rhs + 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6), st.floats(-3.0, 3.0))
def test_mean_certain_component_is_additive(seed, alpha):
    rng = np.random.default_rng(seed)
    sx = random_scenario_set(rng, 1, lattice=False)
    # Y has a single mean across scenarios: no mean uncertainty
    mu = rng.normal()
    sy = ScenarioSet.of(*(DiscreteDistribution(d.points - d.mean() + mu, d.weights)
                          for d in random_scenario_set(rng, 1, lattice=False)))
    s = independent_product(sx, sy)
    assert evaluate(s, lambda x: x[:, 1]) == pytest.approx(-evaluate(s, lambda x: -x[:, 1]),
                                                           abs=1e-12)
    lhs = evaluate(s, lambda x: x[:, 0] + alpha * x[:, 1])
    rhs = evaluate(s, lambda x: x[:, 0]) + alpha * evaluate(s, lambda x: x[:, 1])
    assert lhs == pytest.approx(rhs, abs=1e-10)


# --- axioms ---------------------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10 ** 6), st.floats(-5, 5), st.floats(0, 5))
def test_axioms_hold(seed, c, lam):
    rng = np.random.default_rng(seed)
    s = random_scenario_set(rng, 1, lattice=False)
    w = rng.normal()
    phi = TestFunction("cosine", (w,))
    psi = TestFunction("clipped_abs", (abs(w) + 0.5,))
    rep = verify_axioms(s, [(phi, psi, c, lam), (phi, lambda x: phi(x) - 1.0, c, 0.0)])
    assert rep.passed, rep.results


def test_zero_scaling_gives_zero():
    assert evaluate(TWO_SCALE, lambda x: 0.0 * square(x)) == 0.0


# --- test-function catalog ------------------------------------------------


CATALOG_CASES = [
    ("cosine", (), 1), ("cosine", (1.0, -2.0), 2), ("abs", (), 1), ("abs", (3.0,), 2),
    ("neg_abs", (), 2), ("neg_abs", (4.0,), 1), ("clipped_abs", (2.0,), 2),
    ("linear", (1.0, 2.0), 2), ("quadratic_clipped", (3.0,), 1),
    ("quadratic_clipped", (6.0, -1.0), 2),
    ("piecewise_linear_1d", (-1.0, 0.0, 2.0, 1.0, -1.0, 3.0), 1),
    ("radial_piecewise_linear", (0.0, 1.0, 2.0, 0.0, 1.0, 0.5), 2),
]


def test_catalog_is_covered():
    assert {c[0] for c in CATALOG_CASES} == set(CATALOG)


@pytest.mark.parametrize("cid,params,d", CATALOG_CASES)
def test_catalog_lipschitz_and_bound(cid, params, d):
    phi = TestFunction(cid, params)
    assert phi.accepts(d)
    rng = np.random.default_rng(7)
    x, y = rng.uniform(-8, 8, size=(2, 2000, d))
    lhs = np.abs(phi(x) - phi(y))
    rhs = phi.lipschitz_constant * np.linalg.norm(x - y, axis=1)
    assert np.all(lhs <= rhs + 1e-12)
    if phi.bound != "unbounded-on-lattice-ok":
        assert np.all(np.abs(phi(x)) <= phi.bound + 1e-12)
    assert TestFunction.from_json(json.loads(json.dumps(phi.to_json()))) == phi


@pytest.mark.parametrize("cid,params", [("nope", ()), ("clipped_abs", ()), ("linear", ()),
                                        ("piecewise_linear_1d", (1.0, 0.0, 0.0, 1.0)),
                                        ("quadratic_clipped", (-1.0,))])
def test_catalog_rejects_bad_params(cid, params):
    with pytest.raises(InputError):
        TestFunction(cid, params)


def test_catalog_values():
    x = np.array([[3.0, 4.0]])
    assert TestFunction("abs")(x)[0] == 5.0
    assert TestFunction("clipped_abs", (2.0,))(x)[0] == 2.0
    assert TestFunction("quadratic_clipped", (3.0,))(x)[0] == 9.0
    assert TestFunction("linear", (1.0, -1.0))(x)[0] == -1.0
    assert TestFunction("cosine")(np.array([[0.0]]))[0] == 1.0
