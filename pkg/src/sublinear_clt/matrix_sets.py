"""Covariance polytopes, the generator G and the Hausdorff metric.

A covariance ambiguity set is stored as a list of PSD vertex matrices and
stands for their convex hull. ``G(A) = 1/2 max_Q tr[A Q]`` is exact by vertex
enumeration; Hausdorff distances reduce to vertex-to-hull distances, computed
with Wolfe's minimum-norm-point iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .sublinear_core import InputError, ScenarioSet, check_mean_certain_zero

PSD_TOL = 1e-10
GAP_TOL = 1e-10
MAX_ITER = 10_000


class PreconditionError(ValueError):
    pass


def sym(a) -> np.ndarray:
    """Symmetric d x d float array from a scalar, nested list or array."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.shape[0] != a.shape[1]:
        raise InputError(f"matrix must be square, got shape {a.shape}")
    return 0.5 * (a + a.T)


def frobenius_norm(a) -> float:
    return float(np.sqrt(np.sum(np.square(a))))


@dataclass(frozen=True)
class CovariancePolytope:
    """conv(vertices) inside the PSD cone; vertices are (m, d, d)."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim == 2 and v.shape[0] == v.shape[1]:
            v = v[None]
        if v.ndim != 3 or v.shape[0] == 0 or v.shape[1] != v.shape[2]:
            raise InputError("vertices must be a nonempty (m, d, d) array")
        v = 0.5 * (v + np.transpose(v, (0, 2, 1)))
        lam = np.linalg.eigvalsh(v).min(axis=1)
        if np.any(lam < -PSD_TOL):
            bad = int(np.argmin(lam))
            raise InputError(f"vertex {bad} is not PSD (min eigenvalue {lam[bad]:.3g})")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @classmethod
    def interval(cls, lo: float, hi: float) -> "CovariancePolytope":
        """The 1-d set [lo, hi] of variances."""
        if not 0 <= lo <= hi:
            raise InputError(f"need 0 <= lo <= hi, got [{lo}, {hi}]")
        return cls(np.array([[[lo]], [[hi]]]))

    @classmethod
    def of(cls, *mats) -> "CovariancePolytope":
        return cls(np.array([sym(m) for m in mats]))

    @property
    def dimension(self) -> int:
        return self.vertices.shape[1]

    def as_interval(self) -> tuple[float, float]:
        if self.dimension != 1:
            raise InputError("only 1-d polytopes are intervals")
        v = self.vertices[:, 0, 0]
        return float(v.min()), float(v.max())

    def to_json(self) -> dict:
        return {"dimension": self.dimension, "vertices": self.vertices.tolist()}

    @classmethod
    def from_json(cls, obj) -> "CovariancePolytope":
        if isinstance(obj, dict) and "interval" in obj:
            lo, hi = obj["interval"]
            return cls.interval(float(lo), float(hi))
        try:
            poly = cls(np.asarray(obj["vertices"], dtype=float))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InputError):
                raise
            raise InputError(f"malformed covariance polytope: {exc}") from exc
        if "dimension" in obj and int(obj["dimension"]) != poly.dimension:
            raise InputError("declared dimension does not match vertices")
        return poly


def _check_same_dim(d1: int, d2: int):
    if d1 != d2:
        raise InputError(f"dimension mismatch: {d1} vs {d2}")


def g_value(theta: CovariancePolytope, a) -> float:
    """G(A) = 1/2 max over vertices Q of tr[A Q]."""
    a = sym(a)
    _check_same_dim(theta.dimension, a.shape[0])
    return 0.5 * float(np.max(np.einsum("ij,mji->m", a, theta.vertices)))


def g_from_scenarios(s: ScenarioSet) -> CovariancePolytope:
    """One vertex per scenario: its second-moment matrix sum_j w_j x_j x_j^T.

    Rejects scenario sets with a nonzero scenario mean.
    """
    if not check_mean_certain_zero(s):
        raise PreconditionError("scenario set has mean uncertainty; G_i needs E[X]=E[-X]=0")
    return CovariancePolytope(np.array([sc.second_moment() for sc in s.scenarios]))


# ---------------------------------------------------------------------------
# distances


def min_norm_point(points: np.ndarray, tol: float = GAP_TOL,
                   max_iter: int = MAX_ITER) -> tuple[np.ndarray, np.ndarray]:
    """Minimum-norm point of conv(points) by Wolfe's algorithm.

    ``points`` is (m, n). Returns ``(x, weights)`` with ``x = weights @ points``.
    With gap ``g = |x|^2 - min_k <x, p_k>`` the true minimum norm lies in
    ``[|x| - g/|x|, |x|]``, so stopping at ``g <= tol * |x|`` (or ``|x| <= tol``)
    pins the distance to within ``tol``.
    """
    P = np.asarray(points, dtype=float)
    m = P.shape[0]
    start = int(np.argmin(np.einsum("ij,ij->i", P, P)))
    active = [start]
    lam = np.array([1.0])
    x = P[start].copy()
    for _ in range(max_iter):
        dots = P @ x
        j = int(np.argmin(dots))
        nx = math.sqrt(x @ x)
        if nx <= tol or x @ x - dots[j] <= tol * nx or j in active:
            break
        active.append(j)
        lam = np.append(lam, 0.0)
        while True:
            Q = P[active]
            k = len(active)
            # affine minimizer over the active set
            kkt = np.zeros((k + 1, k + 1))
            kkt[:k, :k] = Q @ Q.T
            kkt[:k, k] = kkt[k, :k] = 1.0
            rhs = np.zeros(k + 1)
            rhs[k] = 1.0
            mu = np.linalg.lstsq(kkt, rhs, rcond=None)[0][:k]
            if np.all(mu > 1e-15):
                lam = mu
                break
            neg = mu <= 1e-15
            denom = lam[neg] - mu[neg]
            step = min(1.0, float(np.min(np.where(denom > 0, lam[neg] / np.where(
                denom > 0, denom, 1.0), np.inf))))
            lam = lam + step * (mu - lam)
            keep = lam > 1e-15
            active = [a for a, kk in zip(active, keep) if kk]
            lam = lam[keep]
            lam = lam / lam.sum()
        x = lam @ P[active]
    weights = np.zeros(m)
    weights[active] = lam
    return x, weights


def point_to_hull_distance(point, vertices) -> float:
    """Euclidean distance from ``point`` to conv(vertices), both flattened."""
    v = np.asarray(vertices, dtype=float).reshape(len(vertices), -1)
    p = np.asarray(point, dtype=float).reshape(-1)
    x, _ = min_norm_point(v - p)
    return float(np.linalg.norm(x))


def hull_hausdorff(v1, v2) -> float:
    """Hausdorff distance between conv(v1) and conv(v2) (vertex arrays).

    Distance to a convex set is a convex function, so its maximum over a
    polytope sits at a vertex; each directed term is a max over vertices.
    """
    a = np.asarray(v1, dtype=float).reshape(len(v1), -1)
    b = np.asarray(v2, dtype=float).reshape(len(v2), -1)
    if a.shape[1] != b.shape[1]:
        raise InputError("vertex arrays live in different spaces")
    return max(max(point_to_hull_distance(v, b) for v in a),
               max(point_to_hull_distance(v, a) for v in b))


def hausdorff(t1: CovariancePolytope, t2: CovariancePolytope) -> float:
    """Hausdorff distance between two covariance hulls, Frobenius norm."""
    _check_same_dim(t1.dimension, t2.dimension)
    return hull_hausdorff(t1.vertices, t2.vertices)


def hausdorff_interval(a: tuple[float, float], b: tuple[float, float]) -> float:
    """d_H([a0, a1], [b0, b1]) = max(|a0 - b0|, |a1 - b1|)."""
    return max(abs(a[0] - b[0]), abs(a[1] - b[1]))


# ---------------------------------------------------------------------------
# decay schedules and condition checks

_SCHEDULES = ("zero", "constant", "harmonic", "power", "pow2_spike", "sequence")


def _is_pow2(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


@dataclass(frozen=True)
class DecaySchedule:
    """Nonnegative sequence a_1, a_2, ... named by generator id.

    ``zero``; ``constant [c]``; ``harmonic [c]`` -> c/n; ``power [c, p]`` ->
    c/n^p; ``pow2_spike [c]`` -> c at powers of two, else c/n; ``sequence
    [a_1, ..., a_k]`` -> explicit terms, then the last one repeated.
    """

    generator: str
    params: tuple = ()

    def __post_init__(self):
        if self.generator not in _SCHEDULES:
            raise InputError(f"unknown schedule {self.generator!r}")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if any(p < 0 for p in self.params[:1]) or (
                self.generator == "sequence" and (not self.params or min(self.params) < 0)):
            raise InputError("schedule terms must be nonnegative")

    def term(self, n: int) -> float:
        if n < 1:
            raise InputError("schedules are indexed from 1")
        g, p = self.generator, self.params
        c = p[0] if p else 1.0
        if g == "zero":
            return 0.0
        if g == "constant":
            return c
        if g == "harmonic":
            return c / n
        if g == "power":
            return c / n ** (p[1] if len(p) > 1 else 1.0)
        if g == "pow2_spike":
            return c if _is_pow2(n) else c / n
        return p[min(n, len(p)) - 1]

    def terms(self, n_max: int) -> np.ndarray:
        return np.array([self.term(n) for n in range(1, n_max + 1)])

    def to_json(self) -> dict:
        return {"id": self.generator, "params": list(self.params)}

    @classmethod
    def from_json(cls, obj) -> "DecaySchedule":
        return cls(obj["id"], tuple(obj.get("params", ())))


def cesaro_means(terms) -> np.ndarray:
    terms = np.asarray(terms, dtype=float)
    return np.cumsum(terms) / np.arange(1, len(terms) + 1)


@dataclass
class CesaroTrace:
    means: np.ndarray
    passed: bool


def cesaro_limit_zero(sched: DecaySchedule, n_max: int) -> CesaroTrace:
    """Heuristic test that (a_1 + ... + a_n)/n -> 0.

    Passes when the final running mean is below a tenth of the first; the
    trace itself is the real evidence.
    """
    if n_max < 10:
        raise InputError("n_max must be >= 10")
    means = cesaro_means(sched.terms(n_max))
    return CesaroTrace(means, bool(means[-1] <= 0.1 * means[0]))


@dataclass
class Violation:
    index: int
    probe: int
    lhs: float
    rhs: float


@dataclass
class BoundReport:
    passed: bool = True
    violations: list[Violation] = field(default_factory=list)
    worst_margin: float = math.inf
    checks: int = 0
    cesaro: np.ndarray | None = None

    def record(self, index: int, probe: int, lhs: float, rhs: float):
        self.checks += 1
        self.worst_margin = min(self.worst_margin, rhs - lhs)
        if lhs > rhs:
            self.passed = False
            self.violations.append(Violation(index, probe, lhs, rhs))


def check_condition_iv(g_seq: Sequence[CovariancePolytope], g_limit: CovariancePolytope,
                       sched: DecaySchedule, probes, slack: float = 1e-10) -> BoundReport:
    """|G_n(A) - G(A)| <= a_n ||A|| for every n and probe; g_seq[0] is G_1."""
    rep = BoundReport()
    limits = [g_value(g_limit, a) for a in probes]
    for n, th in enumerate(g_seq, start=1):
        a_n = sched.term(n)
        for k, a in enumerate(probes):
            rep.record(n, k, abs(g_value(th, a) - limits[k]),
                       a_n * frobenius_norm(a) + slack)
    rep.cesaro = cesaro_means(sched.terms(max(len(g_seq), 1)))
    return rep


def lipschitz_constant(m_bound: float) -> float:
    """Common Lipschitz constant 1/2 M^(2/3) from a third-moment bound M."""
    return 0.5 * m_bound ** (2.0 / 3.0)


def lipschitz_bound_check(g_seq: Sequence[CovariancePolytope], m_bound: float,
                          probes, slack: float = 1e-10) -> BoundReport:
    """|G_i(A) - G_i(B)| <= 1/2 M^(2/3) ||A - B|| over probe pairs (A, B)."""
    c0 = lipschitz_constant(m_bound)
    rep = BoundReport()
    for i, th in enumerate(g_seq, start=1):
        for k, (a, b) in enumerate(probes):
            rep.record(i, k, abs(g_value(th, a) - g_value(th, b)),
                       c0 * frobenius_norm(sym(a) - sym(b)) + slack)
    return rep


def random_sym(d: int, rng: np.random.Generator, unit: bool = True) -> np.ndarray:
    """Random symmetric matrix, normalized to unit Frobenius norm by default."""
    a = rng.standard_normal((d, d))
    a = 0.5 * (a + a.T)
    if unit:
        a /= frobenius_norm(a)
    return a


def uniform_gap_on_unit_ball(t1: CovariancePolytope, t2: CovariancePolytope,
                             samples: int, seed: int = 0) -> float:
    """Estimate sup over ||A|| <= 1 of |G_1(A) - G_2(A)|.

    Random unit directions are supplemented with the normalized vertex
    differences +-(Q1 - Q2)/||Q1 - Q2||; the result never exceeds d_H.
    """
    if samples < 1:
        raise InputError("samples must be >= 1")
    _check_same_dim(t1.dimension, t2.dimension)
    rng = np.random.default_rng(seed)
    d = t1.dimension
    cands = [random_sym(d, rng) for _ in range(samples)]
    for q1 in t1.vertices:
        for q2 in t2.vertices:
            diff = q1 - q2
            nrm = frobenius_norm(diff)
            if nrm > 0:
                cands += [diff / nrm, -diff / nrm]
    return max(abs(g_value(t1, a) - g_value(t2, a)) for a in cands)
