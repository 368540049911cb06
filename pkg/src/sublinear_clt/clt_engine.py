"""Exact sublinear expectations of normalized sums by backward recursion.

With each X_{i+1} independent from (X_1, ..., X_i) in the sublinear sense,

    u_n(s) = phi(scale * s)
    u_i(s) = max_theta sum_j w_j u_{i+1}(s + x_j)   (scenarios of X_{i+1})

and E[phi(scale * S_n)] = u_0(0). When every support lies on a lattice
h * Z^d the reachable partial sums form a finite lattice box and the recursion
is exact. Otherwise a multilinear-interpolation grid is used and its error
bound is reported.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache, reduce
from typing import Callable

import numpy as np

from .gheat_pde import (ConfigurationError, LimitValue, MeanPolytope,
                        gnormal_expectation, maximal_expectation)
from .matrix_sets import (BoundReport, CovariancePolytope, DecaySchedule,
                          cesaro_limit_zero, cesaro_means, check_condition_iv,
                          frobenius_norm, g_from_scenarios, g_value,
                          hausdorff, hull_hausdorff, random_sym)
from .sublinear_core import (DiscreteDistribution, InputError, ScenarioSet,
                             check_mean_certain_zero, evaluate, moment)

SCALINGS = ("inv_sqrt_n", "inv_n", "none")
ORACLE_NODE_CAP = 10 ** 8
_CHUNK = 1 << 20
# the a_n are known in closed form, so their Cesaro trend is checked this far out
SCHEDULE_HORIZON = 1000


class RefusalError(RuntimeError):
    """Brute-force enumeration would exceed its node cap."""


def scale_factor(scaling: str, n: int) -> float:
    if scaling == "inv_sqrt_n":
        return 1.0 / math.sqrt(n) if n else 1.0
    if scaling == "inv_n":
        return 1.0 / n if n else 1.0
    if scaling == "none":
        return 1.0
    raise InputError(f"unknown scaling {scaling!r}")


# ---------------------------------------------------------------------------
# sequences


@dataclass(frozen=True)
class SequenceSpec:
    """A sequence X_1, X_2, ... given by the scenario set of each step.

    ``step(i)`` (1-based) returns the ScenarioSet of X_i. ``limit`` is the
    declared covariance polytope (mode ``clt``) or mean polytope (mode
    ``lln``); ``schedule`` is the a_n of the rate condition when one is
    certified.
    """

    mode: str
    dimension: int
    step_fn: Callable[[int], ScenarioSet] = field(repr=False, compare=False)
    limit: CovariancePolytope | MeanPolytope | None = None
    moment_bound: float | None = None
    schedule: DecaySchedule | None = None
    builder: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in ("clt", "lln"):
            raise InputError(f"mode must be 'clt' or 'lln', got {self.mode!r}")

    def step(self, i: int) -> ScenarioSet:
        if i < 1:
            raise InputError("steps are indexed from 1")
        s = self.step_fn(i)
        if s.dimension != self.dimension:
            raise InputError(f"step {i} has dimension {s.dimension}, expected {self.dimension}")
        return s

    def steps(self, n: int) -> list[ScenarioSet]:
        return [self.step(i) for i in range(1, n + 1)]

    def covariance_set(self, i: int) -> CovariancePolytope:
        """Theta_i: one second-moment vertex per scenario of X_i."""
        return g_from_scenarios(self.step(i))

    def mean_set(self, i: int) -> MeanPolytope:
        """Gamma_i: hull of the scenario means, so g_i(p) = max <mean, p>."""
        return MeanPolytope(np.array([sc.mean() for sc in self.step(i)]))

    def to_json(self) -> dict:
        out = {"mode": self.mode, "dimension": self.dimension, "builder": self.builder}
        if self.limit is not None:
            out["limit"] = self.limit.to_json()
        if self.moment_bound is not None:
            out["moment_bound"] = self.moment_bound
        if self.schedule is not None:
            out["schedule"] = self.schedule.to_json()
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "SequenceSpec":
        try:
            b = obj["builder"]
            seq = build_sequence(b["id"], dict(b.get("params", {})))
        except KeyError as exc:
            raise InputError(f"sequence spec missing {exc}") from exc
        if "mode" in obj and obj["mode"] != seq.mode:
            raise InputError(f"builder {b['id']} produces mode {seq.mode}, config says {obj['mode']}")
        if "dimension" in obj and int(obj["dimension"]) != seq.dimension:
            raise InputError("declared dimension does not match the builder")
        changes = {}
        if "limit" in obj:
            lim = obj["limit"]
            changes["limit"] = (CovariancePolytope.from_json(lim) if seq.mode == "clt"
                                else MeanPolytope.from_json(lim))
        if "moment_bound" in obj:
            changes["moment_bound"] = float(obj["moment_bound"])
        if "schedule" in obj:
            changes["schedule"] = DecaySchedule.from_json(obj["schedule"])
        if changes:
            seq = SequenceSpec(**{**seq.__dict__, **changes})
        return seq


def _param_at(v, i: int) -> float:
    """Scalar or list parameter at 1-based index i; lists repeat their last entry."""
    if isinstance(v, (list, tuple)):
        return float(v[min(i, len(v)) - 1])
    return float(v)


def _symmetric_two_point(a: float) -> DiscreteDistribution:
    if a == 0:
        return DiscreteDistribution.point_mass([0.0])
    return DiscreteDistribution.from_atoms([([-a], 0.5), ([a], 0.5)])


def three_point(variance: float, pitch: float = 1.0) -> DiscreteDistribution:
    """Centred law on {-a, 0, a} (a a multiple of ``pitch``) with the given variance."""
    if variance < 0:
        raise InputError("variance must be nonnegative")
    if variance == 0:
        return DiscreteDistribution.point_mass([0.0])
    a = pitch * math.ceil(math.sqrt(variance) / pitch - 1e-12)
    p = variance / (a * a)
    if p >= 1.0 - 1e-15:
        return _symmetric_two_point(a)
    return DiscreteDistribution.from_atoms([([-a], p / 2), ([0.0], 1 - p), ([a], p / 2)])


def _three_point_moment_bound(v_max: float, pitch: float) -> float:
    a = pitch * math.ceil(math.sqrt(v_max) / pitch - 1e-12)
    return a * v_max


def _noisy_mass(q, noise: float) -> DiscreteDistribution:
    q = np.atleast_1d(np.asarray(q, dtype=float))
    if noise == 0:
        return DiscreteDistribution.point_mass(q)
    d = len(q)
    atoms = []
    for k in range(d):
        e = np.zeros(d)
        e[k] = noise
        atoms += [(q - e, 0.5 / d), (q + e, 0.5 / d)]
    return DiscreteDistribution.from_atoms(atoms, merge=True)


def _interval_seq(lo_fn, hi_fn, pitch, limit, schedule, builder, v_max):
    @lru_cache(maxsize=None)
    def step(i):
        lo, hi = lo_fn(i), hi_fn(i)
        if not 0 <= lo <= hi:
            raise InputError(f"step {i}: invalid variance interval [{lo}, {hi}]")
        return ScenarioSet.of(three_point(lo, pitch), three_point(hi, pitch))

    return SequenceSpec("clt", 1, step, limit, _three_point_moment_bound(v_max, pitch),
                        schedule, builder)


BUILDERS = ("iid", "scaled_interval", "hausdorff_decay", "cesaro_spike", "cauchy_sets",
            "lln_mean_interval", "lln_mean_polytope")


def build_sequence(builder_id: str, params: dict | None = None) -> SequenceSpec:
    """Construct one of the catalogued sequences.

    ``iid``               {"scenarios": ScenarioSet|json, "mode": "clt"|"lln"}
    ``scaled_interval``   {"a": a_i, "b": b_i} scalars or per-step lists;
                          step i is {(+-a_i, 1/2)}, {(+-b_i, 1/2)}
    ``hausdorff_decay``   {"lo", "hi", "c", "pitch"}: Theta_i = [lo + c/i, hi + c/i]
    ``cesaro_spike``      {"lo", "hi", "c", "pitch"}: shift c at powers of two, c/i otherwise
    ``cauchy_sets``       {"lo", "hi", "c", "ratio", "pitch"}: shift c * sum_{k<=i} ratio^k
    ``lln_mean_interval`` {"lo", "hi", "noise"}: point masses (or +-noise) at lo and hi
    ``lln_mean_polytope`` {"vertices", "noise"}: same at each vertex

    Interval builders realize each variance v by a centred law on
    {-a, 0, a} with a on the lattice ``pitch * Z`` (default 1), so the
    recursion stays lattice-exact. Any builder accepts ``"overrides":
    {index: ScenarioSet json}`` to replace individual steps.
    """
    params = dict(params or {})
    overrides = {int(k): (v if isinstance(v, ScenarioSet) else ScenarioSet.from_json(v))
                 for k, v in params.pop("overrides", {}).items()}
    builder = {"id": builder_id, "params": _jsonable(params)}
    if overrides:
        builder["params"]["overrides"] = {str(k): v.to_json() for k, v in overrides.items()}
    try:
        seq = _build(builder_id, params, builder)
    except KeyError as exc:
        raise InputError(f"builder {builder_id!r} missing parameter {exc}") from exc
    if overrides:
        base = seq.step_fn

        def step(i, base=base):
            return overrides.get(i) or base(i)

        seq = SequenceSpec(**{**seq.__dict__, "step_fn": step})
    return seq


def _jsonable(params: dict) -> dict:
    out = {}
    for k, v in params.items():
        if isinstance(v, ScenarioSet):
            v = v.to_json()
        elif isinstance(v, np.ndarray):
            v = v.tolist()
        out[k] = v
    return out


def _build(builder_id: str, p: dict, builder: dict) -> SequenceSpec:
    pitch = float(p.get("pitch", 1.0))
    if builder_id == "iid":
        s = p["scenarios"]
        s = s if isinstance(s, ScenarioSet) else ScenarioSet.from_json(s)
        mode = p.get("mode", "clt")
        if mode == "clt":
            limit = g_from_scenarios(s) if check_mean_certain_zero(s) else None
            return SequenceSpec("clt", s.dimension, lambda i: s, limit, moment(s, 3),
                                DecaySchedule("zero"), builder)
        limit = MeanPolytope(np.array([sc.mean() for sc in s]))
        return SequenceSpec("lln", s.dimension, lambda i: s, limit, moment(s, 2),
                            DecaySchedule("zero"), builder)

    if builder_id == "scaled_interval":
        a, b = p["a"], p["b"]

        @lru_cache(maxsize=None)
        def step(i):
            ai, bi = _param_at(a, i), _param_at(b, i)
            if not 0 <= ai <= bi:
                raise InputError(f"step {i}: need 0 <= a_i <= b_i")
            return ScenarioSet.of(_symmetric_two_point(ai), _symmetric_two_point(bi))

        last = max(len(a) if isinstance(a, (list, tuple)) else 1,
                   len(b) if isinstance(b, (list, tuple)) else 1)
        b_max = max(_param_at(b, i) for i in range(1, last + 1))
        lim = p.get("limit")
        limit = (CovariancePolytope.interval(*lim) if lim is not None else
                 CovariancePolytope.interval(_param_at(a, last) ** 2, _param_at(b, last) ** 2))
        sched = DecaySchedule.from_json(p["schedule"]) if "schedule" in p else None
        if sched is None and last == 1:
            sched = DecaySchedule("zero")
        return SequenceSpec("clt", 1, step, limit, b_max ** 3, sched, builder)

    if builder_id in ("hausdorff_decay", "cesaro_spike", "cauchy_sets"):
        lo, hi, c = float(p.get("lo", 1.0)), float(p.get("hi", 4.0)), float(p.get("c", 1.0))
        if not 0 <= lo <= hi or c < 0:
            raise InputError("need 0 <= lo <= hi and c >= 0")
        if builder_id == "hausdorff_decay":
            shift = lambda i: c / i  # noqa: E731
            limit = CovariancePolytope.interval(lo, hi)
            sched = DecaySchedule("harmonic", (c,))
            v_max = hi + c
        elif builder_id == "cesaro_spike":
            shift = lambda i: c if i & (i - 1) == 0 else c / i  # noqa: E731
            limit = CovariancePolytope.interval(lo, hi)
            sched = DecaySchedule("pow2_spike", (c,))
            v_max = hi + c
        else:
            r = float(p.get("ratio", -0.5))
            if not 0 < abs(r) < 1:
                raise InputError("cauchy_sets ratio must satisfy 0 < |r| < 1")
            reach = c * abs(r) / (1 - abs(r))
            if lo - reach < 0:
                raise InputError("cauchy_sets would leave the PSD cone")

            def shift(i, r=r):
                return c * r * (1 - r ** i) / (1 - r)

            limit, sched, v_max = None, None, hi + reach
        return _interval_seq(lambda i: lo + shift(i), lambda i: hi + shift(i), pitch,
                             limit, sched, builder, v_max)

    if builder_id in ("lln_mean_interval", "lln_mean_polytope"):
        noise = float(p.get("noise", 0.0))
        if noise < 0:
            raise InputError("noise must be nonnegative")
        if builder_id == "lln_mean_interval":
            lo, hi = float(p["lo"]), float(p["hi"])
            if lo > hi:
                raise InputError("need lo <= hi")
            verts = np.array([[lo], [hi]])
        else:
            verts = np.atleast_2d(np.asarray(p["vertices"], dtype=float))
        s = ScenarioSet.of(*(_noisy_mass(q, noise) for q in verts))
        return SequenceSpec("lln", verts.shape[1], lambda i: s, MeanPolytope(verts),
                            moment(s, 2), DecaySchedule("zero"), builder)

    raise InputError(f"unknown builder {builder_id!r}; expected one of {BUILDERS}")


def independent_product(sx: ScenarioSet, sy: ScenarioSet, cap: int = 100_000) -> ScenarioSet:
    """Scenario set of (X, Y) with Y independent from X.

    E[phi(X, Y)] = E[E[phi(x, Y)]|_{x=X}] amounts to choosing, for each
    scenario of X and each atom x_j, a scenario of Y; every such choice is
    one joint scenario.
    """
    import itertools

    out = []
    for tx in sx:
        combos = len(sy) ** len(tx)
        if len(out) + combos > cap:
            raise RefusalError("independent product too large")
        for choice in itertools.product(range(len(sy)), repeat=len(tx)):
            atoms = []
            for (x, w), k in zip(zip(tx.points, tx.weights), choice):
                ty = sy.scenarios[k]
                atoms += [(np.concatenate([x, y]), w * v) for y, v in zip(ty.points, ty.weights)]
            out.append(DiscreteDistribution.from_atoms(atoms, merge=True))
    return ScenarioSet(sx.dimension + sy.dimension, tuple(out))


# ---------------------------------------------------------------------------
# lattice detection


def detect_pitch(points: np.ndarray, max_den: int = 10 ** 6) -> float | None:
    """Largest h with every coordinate an integer multiple of h, or None."""
    vals = np.unique(np.abs(np.asarray(points, dtype=float).ravel()))
    fracs = []
    for v in vals:
        f = Fraction(float(v)).limit_denominator(max_den)
        if abs(float(f) - v) > 1e-12 * max(1.0, abs(v)):
            return None
        fracs.append(f)
    fracs = [f for f in fracs if f != 0]
    if not fracs:
        return 1.0
    den = reduce(lambda a, b: a * b // math.gcd(a, b), (f.denominator for f in fracs))
    num = reduce(math.gcd, (f.numerator * (den // f.denominator) for f in fracs))
    return num / den


# ---------------------------------------------------------------------------
# value tables and the recursion


@dataclass
class LatticeValueTable:
    """Values u_i on the lattice points reachable after i steps.

    ``values`` is dense over the bounding box starting at integer ``offset``;
    ``mask`` marks which box points are actually reachable.
    """

    pitch: float
    offset: np.ndarray
    values: np.ndarray
    mask: np.ndarray

    def points(self) -> np.ndarray:
        idx = np.argwhere(self.mask)
        return (idx + self.offset) * self.pitch

    def as_dict(self) -> dict[tuple, float]:
        idx = np.argwhere(self.mask)
        return {tuple(((k + self.offset) * self.pitch).tolist()): float(self.values[tuple(k)])
                for k in idx}

    def value_at(self, s) -> float:
        k = np.rint(np.atleast_1d(np.asarray(s, dtype=float)) / self.pitch).astype(int) - self.offset
        if np.any(k < 0) or np.any(k >= self.values.shape) or not self.mask[tuple(k)]:
            raise KeyError(f"{s} is not reachable")
        return float(self.values[tuple(k)])


@dataclass
class DPResult:
    value: float
    mode: str
    error_bound: float
    tables: list[LatticeValueTable] | None = None

    def __float__(self):
        return self.value


def _shift_slices(shift, shape):
    return tuple(slice(int(s), int(s) + n) for s, n in zip(shift, shape))


def _lattice_dp(steps, n, scale, phi, pitch, keep_tables):
    d = steps[0].dimension
    int_steps = []
    for s in steps:
        int_steps.append([(np.rint(sc.points / pitch).astype(np.int64), sc.weights)
                          for sc in s.scenarios])
    lo = [np.zeros(d, dtype=np.int64)]
    hi = [np.zeros(d, dtype=np.int64)]
    for sc_list in int_steps:
        pts = np.vstack([p for p, _ in sc_list])
        lo.append(lo[-1] + pts.min(axis=0))
        hi.append(hi[-1] + pts.max(axis=0))

    masks = None
    if keep_tables:
        masks = [np.ones((1,) * d, dtype=bool)]
        for i, sc_list in enumerate(int_steps):
            shape = tuple(hi[i + 1] - lo[i + 1] + 1)
            m = np.zeros(shape, dtype=bool)
            for k in np.unique(np.vstack([p for p, _ in sc_list]), axis=0):
                m[_shift_slices(lo[i] + k - lo[i + 1], masks[i].shape)] |= masks[i]
            masks.append(m)

    shape_n = tuple(hi[n] - lo[n] + 1)
    axes = [np.arange(lo[n][c], hi[n][c] + 1) * pitch * scale for c in range(d)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    u = np.asarray(phi(grid), dtype=float).reshape(shape_n)
    tables = [None] * (n + 1)
    if keep_tables:
        tables[n] = LatticeValueTable(pitch, lo[n], u, masks[n])
    for i in range(n - 1, -1, -1):
        shape = tuple(hi[i] - lo[i] + 1)
        best = None
        for pts, ws in int_steps[i]:
            acc = np.zeros(shape)
            for k, w in zip(pts, ws):
                acc += w * u[_shift_slices(lo[i] + k - lo[i + 1], shape)]
            best = acc if best is None else np.maximum(best, acc)
        u = best
        if keep_tables:
            tables[i] = LatticeValueTable(pitch, lo[i], u, masks[i])
    return float(u.reshape(-1)[0]), tables if keep_tables else None


def _interp_linear(u, origin, spacing, pts):
    """Multilinear interpolation of grid values u at points (m, d)."""
    d = pts.shape[1]
    rel = (pts - origin) / spacing
    base = np.floor(rel).astype(np.int64)
    base = np.clip(base, 0, np.array(u.shape) - 2)
    frac = np.clip(rel - base, 0.0, 1.0)
    out = np.zeros(len(pts))
    for corner in range(1 << d):
        bits = [(corner >> c) & 1 for c in range(d)]
        w = np.ones(len(pts))
        idx = []
        for c, b in enumerate(bits):
            w *= frac[:, c] if b else 1.0 - frac[:, c]
            idx.append(base[:, c] + b)
        out += w * u[tuple(idx)]
    return out


def _interp_dp(steps, n, scale, phi, spacing):
    d = steps[0].dimension
    radii = [0.0]
    for s in steps:
        radii.append(radii[-1] + float(np.max(np.linalg.norm(s.support(), axis=1))))

    def nodes(i):
        k = math.ceil(radii[i] / spacing) + 1
        ax = np.arange(-k, k + 1) * spacing
        return ax, np.stack(np.meshgrid(*([ax] * d), indexing="ij"), axis=-1).reshape(-1, d)

    ax, pts = nodes(n)
    u = np.asarray(phi(pts * scale), dtype=float).reshape((len(ax),) * d)
    for i in range(n - 1, -1, -1):
        ax_next = ax
        ax, pts = nodes(i)
        best = None
        for sc in steps[i].scenarios:
            acc = np.zeros(len(pts))
            for x, w in zip(sc.points, sc.weights):
                acc += w * _interp_linear(u, ax_next[0], spacing, pts + x)
            best = acc if best is None else np.maximum(best, acc)
        u = best.reshape((len(ax),) * d)
    centre = tuple(len(ax) // 2 for _ in range(d))
    return float(u[centre])


def evaluate_sum_expectation(seq: SequenceSpec, n: int, scaling: str, phi: Callable,
                             interp_spacing: float | None = None,
                             keep_tables: bool = False, details: bool = False):
    """E[phi(scale_n * S_n)] by backward dynamic programming.

    Lattice-exact when every step's support lies on a common lattice h*Z^d;
    otherwise ``interp_spacing`` must be given and the reported
    ``error_bound`` is lipschitz * spacing * n * scale. Returns a float, or a
    :class:`DPResult` when ``details`` (or ``keep_tables``) is set.
    """
    if n <= 0:
        raise InputError("n must be positive")
    accepts = getattr(phi, "accepts", None)
    if accepts is not None and not accepts(seq.dimension):
        raise InputError(f"test function does not accept dimension {seq.dimension}")
    scale = scale_factor(scaling, n)
    steps = seq.steps(n)
    pitch = detect_pitch(np.vstack([s.support() for s in steps]))
    if pitch is not None:
        value, tables = _lattice_dp(steps, n, scale, phi, pitch, keep_tables)
        res = DPResult(value, "lattice", 0.0, tables)
    elif interp_spacing is not None:
        value = _interp_dp(steps, n, scale, phi, interp_spacing)
        lip = getattr(phi, "lipschitz_constant", math.inf)
        res = DPResult(value, "interpolation", lip * interp_spacing * n * scale)
    else:
        raise ConfigurationError(
            "supports are not on a common lattice; supply an interpolation spacing")
    return res if (details or keep_tables) else res.value


def enumerate_oracle(seq: SequenceSpec, n: int, scaling: str, phi: Callable) -> float:
    """Brute-force recursion over the full outcome tree (no state merging).

    Paths are expanded over the union of each step's scenario supports;
    partial sums are accumulated in floating point along every path.
    """
    if n < 0:
        raise InputError("n must be nonnegative")
    if n > 10:
        raise RefusalError("enumeration limited to n <= 10")
    steps = seq.steps(n)
    d = seq.dimension
    scale = scale_factor(scaling, n)
    if n == 0:
        return float(np.asarray(phi(np.zeros((1, d))))[0])
    unions, weights = [], []
    for s in steps:
        pts = s.support()
        W = np.zeros((len(s), len(pts)))
        for t, sc in enumerate(s.scenarios):
            for x, w in zip(sc.points, sc.weights):
                W[t, np.flatnonzero(np.all(pts == x, axis=1))[0]] = w
        unions.append(pts)
        weights.append(W)
    sizes = [len(p) for p in unions]
    if math.prod(sizes) > ORACLE_NODE_CAP:
        raise RefusalError(f"tree has {math.prod(sizes)} leaves, cap is {ORACLE_NODE_CAP}")
    below = [math.prod(sizes[i:]) for i in range(n + 1)]

    def solve(level, sums):
        if level == n:
            return np.asarray(phi(sums * scale), dtype=float)
        pts, W = unions[level], weights[level]
        a = len(pts)
        chunk = max(1, _CHUNK // below[level])
        out = np.empty(len(sums))
        for start in range(0, len(sums), chunk):
            part = sums[start:start + chunk]
            kids = (part[:, None, :] + pts[None, :, :]).reshape(-1, d)
            vals = solve(level + 1, kids).reshape(len(part), a)
            out[start:start + chunk] = (vals @ W.T).max(axis=1)
        return out

    return float(solve(0, np.zeros((1, d)))[0])


# ---------------------------------------------------------------------------
# experiments


@dataclass
class ConvergenceRow:
    n: int
    dp_value: float
    limit_value: float
    gap: float
    seconds: float


@dataclass
class ConvergenceTable:
    rows: list[ConvergenceRow] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    COLUMNS = ("n", "dp_value", "limit_value", "gap", "seconds")

    def append(self, row: ConvergenceRow):
        if self.rows and row.n <= self.rows[-1].n:
            raise InputError("n must be strictly increasing")
        self.rows.append(row)

    @property
    def gaps(self) -> list[float]:
        return [r.gap for r in self.rows]

    def to_csv(self, path, timings: bool = True) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.COLUMNS)
            for r in self.rows:
                w.writerow([r.n, repr(r.dp_value), repr(r.limit_value), repr(r.gap),
                            repr(r.seconds) if timings else "0.0"])

    def to_json(self) -> list[dict]:
        return [r.__dict__.copy() for r in self.rows]


def _check_increasing(n_list):
    n_list = [int(n) for n in n_list]
    if not n_list or any(b <= a for a, b in zip(n_list, n_list[1:])) or n_list[0] <= 0:
        raise InputError("n_list must be positive and strictly increasing")
    return n_list


def estimate_limit_polytope(seq: SequenceSpec, n_far: int = 4096) -> CovariancePolytope:
    """Limit set of a Cauchy sequence Theta_i, approximated by Theta_{n_far}."""
    return seq.covariance_set(n_far)


def clt_limit(seq: SequenceSpec, phi: Callable, pde: dict | None = None) -> LimitValue:
    pde = dict(pde or {})
    limit = seq.limit if seq.limit is not None else estimate_limit_polytope(
        seq, int(pde.pop("n_far", 4096)))
    return gnormal_expectation(limit, phi, dx=pde.get("dx"), L=pde.get("L"),
                               cfl=pde.get("cfl", 0.9))


def clt_convergence_experiment(seq: SequenceSpec, phi: Callable, n_list,
                               pde_resolution: dict | None = None,
                               interp_spacing: float | None = None,
                               workers: int = 1) -> ConvergenceTable:
    """Tabulate E[phi(S_n / sqrt n)] against the G-normal limit E[phi(X)]."""
    if seq.mode != "clt":
        raise InputError("CLT experiment needs a clt-mode sequence")
    n_list = _check_increasing(n_list)
    lim = clt_limit(seq, phi, pde_resolution)
    table = ConvergenceTable(meta={"limit": lim.meta})
    for row in _rows(seq, phi, n_list, "inv_sqrt_n", lim.value, interp_spacing, workers):
        table.append(row)
    return table


def lln_convergence_experiment(seq: SequenceSpec, phi: Callable, n_list,
                               interp_spacing: float | None = None,
                               workers: int = 1) -> ConvergenceTable:
    """Tabulate E[phi(S_n / n)] against max over Gamma of phi."""
    if seq.mode != "lln":
        raise InputError("LLN experiment needs an lln-mode sequence")
    n_list = _check_increasing(n_list)
    lim = maximal_expectation(seq.limit, phi)
    table = ConvergenceTable(meta={"limit": lim.meta, "limit_error_bound": lim.error_bound})
    for row in _rows(seq, phi, n_list, "inv_n", lim.value, interp_spacing, workers):
        table.append(row)
    return table


def _rows(seq, phi, n_list, scaling, limit_value, interp_spacing, workers):
    def one(n):
        t0 = time.perf_counter()
        v = evaluate_sum_expectation(seq, n, scaling, phi, interp_spacing)
        return ConvergenceRow(n, v, limit_value, abs(v - limit_value), time.perf_counter() - t0)

    if workers <= 1:
        return [one(n) for n in n_list]
    # rows are independent; map() keeps n_list order so output is unchanged
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, n_list))


# ---------------------------------------------------------------------------
# hypothesis validation


@dataclass
class ConditionResult:
    name: str
    passed: bool
    detail: str = ""
    trace: list[float] | None = None
    failed_at: list[int] = field(default_factory=list)

    def to_json(self) -> dict:
        out = {"condition": self.name, "passed": self.passed, "detail": self.detail}
        if self.trace is not None:
            out["trace"] = [float(t) for t in self.trace]
        if self.failed_at:
            out["failed_at"] = self.failed_at
        return out


@dataclass
class HypothesisReport:
    mode: str
    conditions: dict[str, ConditionResult] = field(default_factory=dict)
    required: tuple[str, ...] = ()
    routes: tuple[str, ...] = ()

    @property
    def passed(self) -> bool:
        """Required conditions hold and at least one convergence route holds."""
        req = all(self.conditions[c].passed for c in self.required)
        return req and any(self.conditions[c].passed for c in self.routes
                           if c in self.conditions)

    def add(self, res: ConditionResult):
        self.conditions[res.name] = res

    def to_json(self) -> dict:
        return {"mode": self.mode, "passed": self.passed,
                "required": list(self.required), "routes": list(self.routes),
                "conditions": [c.to_json() for c in self.conditions.values()]}


def _tail_small(trace, tail_frac=0.25, ratio=0.1, floor=1e-12) -> bool:
    trace = np.asarray(trace, dtype=float)
    if len(trace) == 0:
        return True
    tail = trace[int(len(trace) * (1 - tail_frac)):]
    return bool(tail.max() <= max(ratio * trace.max(), floor))


def validate_hypotheses(seq: SequenceSpec, n_check: int, probes=None, seed: int = 0,
                        n_probes: int = 20, alpha: float | None = None) -> HypothesisReport:
    """Check the hypotheses of the CLT (mode clt) or LLN (mode lln) on steps 1..n_check.

    CLT keys: "i" (structural), "ii" centring, "iii" third moment (or
    2 + alpha moment), and the convergence routes "iv" rate bound with the
    declared schedule, "v" pointwise convergence of G_i, "vi" Cesaro mean of
    d_H(Theta_i, Theta), "vii" Cauchy property of Theta_i. The LLN keys
    are "i", "ii" (second moment) and routes "iii" (rate bound on g_i),
    "iv" pointwise, "v" Cesaro Hausdorff, "vi" Cauchy.
    Routes "v"-"vii" are numerical trend diagnostics, not proofs.
    """
    if n_check < 1:
        raise InputError("n_check must be >= 1")
    rng = np.random.default_rng(seed)
    rep = HypothesisReport(seq.mode)
    rep.add(ConditionResult("i", True, "sequential independence is structural in the recursion"))
    steps = seq.steps(n_check)
    if seq.mode == "clt":
        _validate_clt(seq, steps, rep, probes, rng, n_probes, alpha)
    else:
        _validate_lln(seq, steps, rep, probes, rng, n_probes)
    return rep


def _validate_clt(seq, steps, rep, probes, rng, n_probes, alpha):
    d = seq.dimension
    rep.required = ("i", "ii", "iii")
    rep.routes = ("iv", "v", "vi", "vii")
    bad = [i for i, s in enumerate(steps, 1) if not check_mean_certain_zero(s)]
    rep.add(ConditionResult("ii", not bad, "E[X_i] = E[-X_i] = 0", failed_at=bad))
    order = 3.0 if alpha is None else 2.0 + alpha
    moms = [moment(s, order) for s in steps]
    m = seq.moment_bound
    if m is None:
        rep.add(ConditionResult("iii", False, "no moment bound declared", moms))
    else:
        over = [i for i, v in enumerate(moms, 1) if v > m * (1 + 1e-12)]
        rep.add(ConditionResult("iii", not over, f"E|X_i|^{order:g} <= M = {m:g}", moms, over))
    if bad:
        for key in rep.routes:
            rep.add(ConditionResult(key, False, "needs centred steps"))
        return
    thetas = [g_from_scenarios(s) for s in steps]
    if probes is None:
        probes = [random_sym(d, rng) for _ in range(n_probes)]
        probes += [np.eye(d) / math.sqrt(d), -np.eye(d) / math.sqrt(d)]
    limit = seq.limit
    if limit is None:
        limit = estimate_limit_polytope(seq, max(4 * len(steps), 4096))
    if seq.schedule is not None:
        br: BoundReport = check_condition_iv(thetas, limit, seq.schedule, probes)
        trend = cesaro_limit_zero(seq.schedule, max(len(steps), SCHEDULE_HORIZON))
        rep.add(ConditionResult("iv", br.passed and trend.passed,
                                f"|G_n(A)-G(A)| <= a_n||A||, a = {seq.schedule.generator}",
                                list(trend.means), sorted({v.index for v in br.violations})))
    else:
        rep.add(ConditionResult("iv", False, "no schedule declared"))
    lims = [g_value(limit, a) for a in probes]
    gaps = [max(abs(g_value(t, a) - g) / frobenius_norm(a) for a, g in zip(probes, lims))
            for t in thetas]
    rep.add(ConditionResult("v", _tail_small(gaps), "G_i -> G pointwise on probes", gaps))
    dh = [hausdorff(t, limit) for t in thetas]
    ces = cesaro_means(dh)
    rep.add(ConditionResult("vi", bool(ces[-1] <= max(0.1 * ces[0], 1e-12)),
                            "(1/n) sum d_H(Theta_i, Theta) -> 0", list(ces)))
    last = thetas[-1]
    cauchy = [hausdorff(t, last) for t in thetas[:-1]] or [0.0]
    rep.add(ConditionResult("vii", _tail_small(cauchy, tail_frac=0.5),
                            "d_H(Theta_i, Theta_n) shrinking", cauchy))


def _validate_lln(seq, steps, rep, probes, rng, n_probes):
    d = seq.dimension
    rep.required = ("i", "ii")
    rep.routes = ("iii", "iv", "v", "vi")
    moms = [moment(s, 2) for s in steps]
    m = seq.moment_bound
    over = [] if m is None else [i for i, v in enumerate(moms, 1) if v > m * (1 + 1e-12)]
    rep.add(ConditionResult("ii", m is not None and not over, f"E|Y_i|^2 <= M = {m}", moms, over))
    if probes is None:
        probes = rng.standard_normal((n_probes, d))
        probes /= np.linalg.norm(probes, axis=1, keepdims=True)
    gammas = [MeanPolytope(np.array([sc.mean() for sc in s])) for s in steps]
    limit = seq.limit if seq.limit is not None else gammas[-1]
    g_lim = [limit.support(p) for p in probes]
    sched = seq.schedule
    if sched is not None:
        viol = []
        for i, gm in enumerate(gammas, 1):
            a_i = sched.term(i)
            if any(abs(gm.support(p) - g) > a_i * np.linalg.norm(p) + 1e-10
                   for p, g in zip(probes, g_lim)):
                viol.append(i)
        trend = cesaro_limit_zero(sched, max(len(gammas), SCHEDULE_HORIZON))
        rep.add(ConditionResult("iii", not viol and trend.passed,
                                "|g_n(p)-g(p)| <= a_n|p|", list(trend.means), viol))
    else:
        rep.add(ConditionResult("iii", False, "no schedule declared"))
    gaps = [max(abs(gm.support(p) - g) for p, g in zip(probes, g_lim)) for gm in gammas]
    rep.add(ConditionResult("iv", _tail_small(gaps), "g_i -> g pointwise on probes", gaps))
    dh = [hull_hausdorff(gm.vertices, limit.vertices) for gm in gammas]
    ces = cesaro_means(dh)
    rep.add(ConditionResult("v", bool(ces[-1] <= max(0.1 * ces[0], 1e-12)),
                            "(1/n) sum d_H(Gamma_i, Gamma) -> 0", list(ces)))
    cauchy = [hull_hausdorff(gm.vertices, gammas[-1].vertices) for gm in gammas[:-1]] or [0.0]
    rep.add(ConditionResult("vi", _tail_small(cauchy, tail_frac=0.5),
                            "d_H(Gamma_i, Gamma_n) shrinking", cauchy))
