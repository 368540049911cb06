"""Sublinear expectations carried by finite families of discrete distributions.

A sublinear expectation restricted to functions of one random vector X is
represented as ``E[phi(X)] = max_theta sum_j w_j phi(x_j)`` over a finite list
of scenarios. Every supremum is attained and every evaluation is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

WEIGHT_TOL = 1e-12
MEAN_TOL = 1e-12

CATALOG = (
    "cosine",
    "abs",
    "neg_abs",
    "clipped_abs",
    "linear",
    "quadratic_clipped",
    "piecewise_linear_1d",
    "radial_piecewise_linear",
)

UNBOUNDED = "unbounded-on-lattice-ok"


class InputError(ValueError):
    """Raised for malformed arguments (dimension mismatch, bad parameters)."""


class ConstructionError(ValueError):
    """Raised when a distribution or scenario set violates its invariants."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DiscreteDistribution:
    """Finitely supported probability measure on R^d.

    ``points`` has shape (k, d), ``weights`` shape (k,). Weights must be
    strictly positive; a total within ``WEIGHT_TOL`` of one is renormalized,
    anything further off is rejected.
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        w = np.array(self.weights, dtype=float).reshape(-1)
        if pts.ndim != 2 or pts.shape[0] == 0 or pts.shape[1] == 0:
            raise ConstructionError("points must be a nonempty (k, d) array")
        if pts.shape[0] != w.shape[0]:
            raise ConstructionError("one weight per atom required")
        if not np.all(np.isfinite(pts)) or not np.all(np.isfinite(w)):
            raise ConstructionError("non-finite atom or weight")
        if np.any(w <= 0):
            raise ConstructionError("weights must be strictly positive")
        total = math.fsum(w)
        if abs(total - 1.0) > WEIGHT_TOL:
            raise ConstructionError(f"weights sum to {total!r}, not 1")
        w = w / total
        if len(np.unique(pts, axis=0)) != len(pts):
            raise ConstructionError("atom points must be pairwise distinct")
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "weights", _frozen(w))

    @classmethod
    def from_atoms(cls, atoms, merge: bool = False) -> "DiscreteDistribution":
        """Build from ``[(point, weight), ...]``; ``merge`` sums duplicate points."""
        pts = [np.atleast_1d(np.asarray(p, dtype=float)) for p, _ in atoms]
        ws = [float(w) for _, w in atoms]
        if merge:
            acc: dict[tuple, float] = {}
            for p, w in zip(pts, ws):
                key = tuple(p.tolist())
                acc[key] = acc.get(key, 0.0) + w
            pts = [np.array(k) for k in acc]
            ws = list(acc.values())
        return cls(np.array(pts), np.array(ws))

    @classmethod
    def point_mass(cls, point) -> "DiscreteDistribution":
        return cls(np.atleast_2d(np.asarray(point, dtype=float)), np.ones(1))

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return len(self.weights)

    def expect(self, phi: Callable[[np.ndarray], np.ndarray]) -> float:
        """Plain (linear) expectation of ``phi``."""
        vals = np.asarray(phi(self.points), dtype=float).reshape(-1)
        return math.fsum(self.weights * vals)

    def mean(self) -> np.ndarray:
        return self.weights @ self.points

    def second_moment(self) -> np.ndarray:
        return np.einsum("k,ki,kj->ij", self.weights, self.points, self.points)

    # eq/hash by value so frozen instances can be compared in tests
    def __eq__(self, other):
        if not isinstance(other, DiscreteDistribution):
            return NotImplemented
        return (self.points.shape == other.points.shape
                and np.array_equal(self.points, other.points)
                and np.array_equal(self.weights, other.weights))

    def __hash__(self):
        return hash((self.points.tobytes(), self.weights.tobytes()))


@dataclass(frozen=True)
class ScenarioSet:
    """Nonempty finite family of discrete distributions of a common dimension."""

    dimension: int
    scenarios: tuple[DiscreteDistribution, ...]

    def __post_init__(self):
        scen = tuple(self.scenarios)
        if not scen:
            raise ConstructionError("scenario set must be nonempty")
        if self.dimension < 1:
            raise ConstructionError("dimension must be >= 1")
        for s in scen:
            if s.dimension != self.dimension:
                raise ConstructionError(
                    f"scenario of dimension {s.dimension} in a {self.dimension}-d set")
        object.__setattr__(self, "scenarios", scen)

    @classmethod
    def of(cls, *scenarios: DiscreteDistribution) -> "ScenarioSet":
        return cls(scenarios[0].dimension, tuple(scenarios))

    @classmethod
    def from_lists(cls, *scenarios) -> "ScenarioSet":
        """Shorthand: each positional argument is a list of ``(point, weight)``."""
        return cls.of(*(DiscreteDistribution.from_atoms(a) for a in scenarios))

    def __len__(self):
        return len(self.scenarios)

    def __iter__(self):
        return iter(self.scenarios)

    def support(self) -> np.ndarray:
        """Union of all scenario supports, as a (k, d) array of distinct points."""
        return np.unique(np.vstack([s.points for s in self.scenarios]), axis=0)

    def to_json(self) -> dict:
        return {
            "dimension": self.dimension,
            "scenarios": [
                [[p.tolist(), float(w)] for p, w in zip(s.points, s.weights)]
                for s in self.scenarios
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ScenarioSet":
        try:
            d = int(obj["dimension"])
            scen = tuple(
                DiscreteDistribution.from_atoms([(p, w) for p, w in atoms])
                for atoms in obj["scenarios"])
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConstructionError):
                raise
            raise InputError(f"malformed scenario set: {exc}") from exc
        return cls(d, scen)


# ---------------------------------------------------------------------------
# test functions


def _piecewise(params, name):
    if len(params) < 4 or len(params) % 2:
        raise InputError(f"{name} needs knots and values of equal length >= 2")
    k = len(params) // 2
    knots = np.asarray(params[:k], dtype=float)
    vals = np.asarray(params[k:], dtype=float)
    if np.any(np.diff(knots) <= 0):
        raise InputError(f"{name} knots must be strictly increasing")
    return knots, vals


@dataclass(frozen=True)
class TestFunction:
    """Bounded-Lipschitz test function drawn from a closed catalog.

    Parameter conventions (``params`` list):

    ``cosine``           ``[w_1..w_d]`` -> cos(<w, x>); empty means cos(x_1).
    ``abs``              ``[]`` or ``[R]`` -> |x|, or min(|x|, R).
    ``neg_abs``          ``[]`` or ``[R]`` -> -|x|, or -min(|x|, R).
    ``clipped_abs``      ``[c]`` -> min(|x|, c).
    ``linear``           ``[p_1..p_d]`` -> <p, x>.
    ``quadratic_clipped``  ``[R]`` or ``[R, c]`` -> c * min(|x|, R)^2.
    ``piecewise_linear_1d``     ``[knots..., values...]``, constant outside.
    ``radial_piecewise_linear`` same layout, applied to r = |x|.

    Norms are Euclidean. Calling the object on an (m, d) array returns (m,)
    values.
    """

    __test__ = False  # keep pytest from collecting this class

    catalog_id: str
    params: tuple = ()

    def __post_init__(self):
        if self.catalog_id not in CATALOG:
            raise InputError(f"unknown test function {self.catalog_id!r}")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        p = self.params
        cid = self.catalog_id
        if cid in ("abs", "neg_abs") and len(p) not in (0, 1):
            raise InputError(f"{cid} takes at most one clipping radius")
        if cid == "clipped_abs" and (len(p) != 1 or p[0] <= 0):
            raise InputError("clipped_abs needs one positive radius")
        if cid in ("abs", "neg_abs") and p and p[0] <= 0:
            raise InputError("clipping radius must be positive")
        if cid == "quadratic_clipped" and (len(p) not in (1, 2) or p[0] <= 0):
            raise InputError("quadratic_clipped needs [R] or [R, c] with R > 0")
        if cid == "linear" and not p:
            raise InputError("linear needs a coefficient vector")
        if cid in ("piecewise_linear_1d", "radial_piecewise_linear"):
            _piecewise(p, cid)

    @classmethod
    def from_json(cls, obj) -> "TestFunction":
        if isinstance(obj, str):
            return cls(obj)
        try:
            return cls(obj["id"], tuple(obj.get("params", ())))
        except (KeyError, TypeError) as exc:
            raise InputError(f"malformed test function: {exc}") from exc

    def to_json(self) -> dict:
        return {"id": self.catalog_id, "params": list(self.params)}

    @property
    def dimension(self) -> int | None:
        """Required input dimension, or None if any dimension works."""
        if self.catalog_id in ("linear",):
            return len(self.params)
        if self.catalog_id == "cosine" and self.params:
            return len(self.params)
        if self.catalog_id == "piecewise_linear_1d":
            return 1
        return None

    def accepts(self, d: int) -> bool:
        need = self.dimension
        return need is None or need == d

    @property
    def lipschitz_constant(self) -> float:
        cid, p = self.catalog_id, self.params
        if cid == "cosine":
            return float(np.linalg.norm(p)) if p else 1.0
        if cid in ("abs", "neg_abs", "clipped_abs"):
            return 1.0
        if cid == "linear":
            return float(np.linalg.norm(p))
        if cid == "quadratic_clipped":
            c = p[1] if len(p) > 1 else 1.0
            return 2.0 * p[0] * abs(c)
        knots, vals = _piecewise(p, cid)
        return float(np.max(np.abs(np.diff(vals) / np.diff(knots))))

    @property
    def bound(self) -> float | str:
        cid, p = self.catalog_id, self.params
        if cid == "cosine":
            return 1.0
        if cid in ("abs", "neg_abs"):
            return p[0] if p else UNBOUNDED
        if cid == "clipped_abs":
            return p[0]
        if cid == "linear":
            return UNBOUNDED
        if cid == "quadratic_clipped":
            c = p[1] if len(p) > 1 else 1.0
            return p[0] ** 2 * abs(c)
        _, vals = _piecewise(p, cid)
        return float(np.max(np.abs(vals))) or 1.0

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        cid, p = self.catalog_id, self.params
        if not self.accepts(x.shape[1]):
            raise InputError(
                f"{cid} expects dimension {self.dimension}, got {x.shape[1]}")
        if cid == "cosine":
            return np.cos(x @ np.asarray(p)) if p else np.cos(x[:, 0])
        if cid == "linear":
            return x @ np.asarray(p)
        if cid == "piecewise_linear_1d":
            knots, vals = _piecewise(p, cid)
            return np.interp(x[:, 0], knots, vals)
        r = np.sqrt(np.einsum("ij,ij->i", x, x))
        if cid == "abs":
            return np.minimum(r, p[0]) if p else r
        if cid == "neg_abs":
            return -(np.minimum(r, p[0]) if p else r)
        if cid == "clipped_abs":
            return np.minimum(r, p[0])
        if cid == "quadratic_clipped":
            c = p[1] if len(p) > 1 else 1.0
            return c * np.minimum(r, p[0]) ** 2
        knots, vals = _piecewise(p, cid)
        return np.interp(r, knots, vals)


# ---------------------------------------------------------------------------
# operations


def _check_dim(s: ScenarioSet, phi) -> None:
    accepts = getattr(phi, "accepts", None)
    if accepts is not None and not accepts(s.dimension):
        raise InputError(
            f"test function needs dimension {phi.dimension}, scenario set has {s.dimension}")


def scenario_expectations(s: ScenarioSet, phi: Callable) -> np.ndarray:
    """Linear expectation of ``phi`` under each scenario, in scenario order."""
    _check_dim(s, phi)
    return np.array([sc.expect(phi) for sc in s.scenarios])


def evaluate(s: ScenarioSet, phi: Callable) -> float:
    """Sublinear expectation: the largest scenario expectation of ``phi``.

    ``phi`` is a :class:`TestFunction` or any vectorized callable taking an
    (m, d) array.

    >>> s = ScenarioSet.from_lists([(-1, .5), (1, .5)], [(-2, .5), (2, .5)])
    >>> evaluate(s, lambda x: x[:, 0] ** 2)
    4.0
    """
    return float(np.max(scenario_expectations(s, phi)))


def argmax_scenario(s: ScenarioSet, phi: Callable) -> int:
    """Index of the scenario attaining the maximum; ties go to the lowest index."""
    return int(np.argmax(scenario_expectations(s, phi)))


def check_mean_certain_zero(s: ScenarioSet) -> bool:
    """True iff every scenario is centred, i.e. E[X] = E[-X] = 0 componentwise."""
    return all(np.all(np.abs(sc.mean()) <= MEAN_TOL) for sc in s.scenarios)


def moment(s: ScenarioSet, p: float) -> float:
    """Upper absolute moment ``max_theta E_theta |X|^p`` (Euclidean norm), p >= 1."""
    if not p >= 1:
        raise InputError(f"moment order must be >= 1, got {p}")
    return evaluate(s, lambda x: np.sqrt(np.einsum("ij,ij->i", x, x)) ** p)


def marginal(s: ScenarioSet, index: int) -> ScenarioSet:
    """Scenario set of one coordinate of X (atoms merged where they coincide)."""
    out = []
    for sc in s.scenarios:
        out.append(DiscreteDistribution.from_atoms(
            [(p[index:index + 1], w) for p, w in zip(sc.points, sc.weights)], merge=True))
    return ScenarioSet(1, tuple(out))


@dataclass
class AxiomResult:
    axiom: str
    passed: bool
    worst_slack: float  # most negative margin seen; >= -tol means pass
    checks: int = 0


@dataclass
class AxiomReport:
    results: dict[str, AxiomResult] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results.values())

    def _record(self, axiom: str, margin: float, tol: float):
        r = self.results.setdefault(axiom, AxiomResult(axiom, True, math.inf))
        r.checks += 1
        r.worst_slack = min(r.worst_slack, margin)
        if margin < -tol:
            r.passed = False


def verify_axioms(s: ScenarioSet, probes: Sequence, tol: float = 1e-12) -> AxiomReport:
    """Check the four sublinear-expectation axioms on concrete probes.

    Each probe is a tuple ``(phi, psi, c, lam)``: two test callables, a
    constant and a nonnegative scalar. Monotonicity is checked for whichever
    ordering of ``phi`` and ``psi`` holds pointwise on the union support (and
    skipped if neither does). Failures are recorded, never raised.
    """
    if not probes:
        raise InputError("verify_axioms needs at least one probe")
    rep = AxiomReport()
    pts = s.support()
    for phi, psi, c, lam in probes:
        ev_phi, ev_psi = evaluate(s, phi), evaluate(s, psi)
        a, b = np.asarray(phi(pts)), np.asarray(psi(pts))
        if np.all(a >= b):
            rep._record("monotonicity", ev_phi - ev_psi, tol)
        elif np.all(b >= a):
            rep._record("monotonicity", ev_psi - ev_phi, tol)
        const = evaluate(s, lambda x, c=c: np.full(len(x), float(c)))
        rep._record("constant_preserving", -abs(const - c), tol * max(1.0, abs(c)))
        both = evaluate(s, lambda x: phi(x) + psi(x))
        rep._record("subadditivity", ev_phi + ev_psi - both, tol)
        if lam < 0:
            raise InputError("positive homogeneity needs lambda >= 0")
        scaled = evaluate(s, lambda x: lam * np.asarray(phi(x)))
        rep._record("positive_homogeneity", -abs(scaled - lam * ev_phi),
                    tol * max(1.0, abs(lam * ev_phi)))
    return rep
