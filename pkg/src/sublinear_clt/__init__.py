"""Sublinear expectations on finite scenario sets, G-heat solvers and exact
finite-n evaluation of normalized sums under sublinear independence."""

__version__ = "0.1.0"

from .sublinear_core import (ConstructionError, DiscreteDistribution, InputError,
                             ScenarioSet, TestFunction, argmax_scenario, evaluate,
                             marginal, moment, verify_axioms)
from .matrix_sets import (CovariancePolytope, DecaySchedule, PreconditionError,
                          cesaro_limit_zero, check_condition_iv, g_from_scenarios,
                          g_value, hausdorff, hausdorff_interval, lipschitz_bound_check)
from .gheat_pde import (ConfigurationError, Grid1D, Grid2D, MeanPolytope, NumericalFault,
                        UnsupportedCase, gnormal_expectation, maximal_expectation,
                        solve_gheat_1d, solve_gheat_2d, solve_maximal_pde)
from .clt_engine import (RefusalError, SequenceSpec, build_sequence,
                         clt_convergence_experiment, enumerate_oracle,
                         evaluate_sum_expectation, lln_convergence_experiment,
                         validate_hypotheses)

__all__ = [n for n in dir() if not n.startswith("_")]
