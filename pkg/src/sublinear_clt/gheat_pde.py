"""Limit laws: G-normal expectations via the G-heat equation, maximal laws.

The G-heat equation ``u_t = G(D^2 u)``, ``u(0, .) = phi`` is integrated
forward with an explicit monotone finite-difference scheme; ``E[phi(X)]`` for
``X ~ N(0; Theta)`` is ``u(1, 0)``. Maximal distributions need no PDE since
``E[phi(eta)] = max_{y in Gamma} phi(y)``; the first-order equation
``u_t = g(Du)`` is still solved by an upwind scheme as a cross-check.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .matrix_sets import CovariancePolytope
from .sublinear_core import InputError


class ConfigurationError(ValueError):
    """Grid violates a stability or domain requirement."""


class NumericalFault(ArithmeticError):
    pass


class UnsupportedCase(ValueError):
    pass


def _n_steps(T: float, dt: float) -> int:
    return max(1, math.ceil(T / dt - 1e-9))


@dataclass(frozen=True)
class Grid1D:
    """Nodes x_j = -L + j*dx, j = 0..J-1 (J odd so x = 0 is a node)."""

    L: float
    J: int
    T: float
    dt: float

    def __post_init__(self):
        if self.L <= 0 or self.T <= 0 or self.dt <= 0:
            raise ConfigurationError("L, T and dt must be positive")
        if self.J < 3 or self.J % 2 == 0:
            raise ConfigurationError("J must be odd and >= 3")

    @classmethod
    def from_spacing(cls, dx: float, T: float, L: float, speed2: float,
                     cfl: float = 0.9) -> "Grid1D":
        """Grid with spacing close to ``dx`` and dt = cfl * dx^2 / speed2."""
        half = max(1, math.ceil(L / dx))
        J = 2 * half + 1
        dx = L / half
        dt = cfl * dx * dx / speed2 if speed2 > 0 else T
        return cls(L, J, T, dt)

    @property
    def dx(self) -> float:
        return 2.0 * self.L / (self.J - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(-self.L, self.L, self.J)

    @property
    def steps(self) -> int:
        return _n_steps(self.T, self.dt)

    def to_json(self) -> dict:
        return {"L": self.L, "J": self.J, "T": self.T, "dt": self.dt}


@dataclass(frozen=True)
class Grid2D:
    L1: float
    L2: float
    J1: int
    J2: int
    T: float
    dt: float

    def __post_init__(self):
        if min(self.L1, self.L2, self.T, self.dt) <= 0:
            raise ConfigurationError("L1, L2, T and dt must be positive")
        if min(self.J1, self.J2) < 3 or self.J1 % 2 == 0 or self.J2 % 2 == 0:
            raise ConfigurationError("J1 and J2 must be odd and >= 3")

    @classmethod
    def square(cls, dx: float, T: float, L: float, dt: float) -> "Grid2D":
        half = max(1, math.ceil(L / dx))
        return cls(L, L, 2 * half + 1, 2 * half + 1, T, dt)

    @property
    def dx(self) -> tuple[float, float]:
        return 2.0 * self.L1 / (self.J1 - 1), 2.0 * self.L2 / (self.J2 - 1)

    @property
    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        return np.linspace(-self.L1, self.L1, self.J1), np.linspace(-self.L2, self.L2, self.J2)

    def mesh(self) -> np.ndarray:
        """(J1*J2, 2) node coordinates in C order (first axis slowest)."""
        x1, x2 = np.meshgrid(*self.axes, indexing="ij")
        return np.column_stack([x1.ravel(), x2.ravel()])

    @property
    def steps(self) -> int:
        return _n_steps(self.T, self.dt)

    def to_json(self) -> dict:
        return {"L": [self.L1, self.L2], "J": [self.J1, self.J2], "T": self.T, "dt": self.dt}


def grid_from_json(obj: dict):
    L, J = obj["L"], obj["J"]
    if isinstance(L, (list, tuple)):
        return Grid2D(float(L[0]), float(L[1]), int(J[0]), int(J[1]),
                      float(obj["T"]), float(obj["dt"]))
    return Grid1D(float(L), int(J), float(obj["T"]), float(obj["dt"]))


@dataclass
class PdeSolution:
    grid: Grid1D | Grid2D
    values: np.ndarray  # (J,) or (J1, J2)
    steps: int
    cfl_ratio: float
    scheme: str = ""

    def center_value(self) -> float:
        idx = tuple(s // 2 for s in self.values.shape)
        return float(self.values[idx])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            if isinstance(self.grid, Grid1D):
                w.writerow(["x", "u"])
                for xi, ui in zip(self.grid.x, self.values):
                    w.writerow([repr(float(xi)), repr(float(ui))])
            else:
                w.writerow(["x", "y", "u"])
                for (xi, yi), ui in zip(self.grid.mesh(), self.values.ravel()):
                    w.writerow([repr(float(xi)), repr(float(yi)), repr(float(ui))])


def _check_finite(u: np.ndarray, where: str):
    if not np.all(np.isfinite(u)):
        raise NumericalFault(f"non-finite values in {where}")


# ---------------------------------------------------------------------------
# G-heat equation


def solve_gheat_1d(sigma_lo2: float, sigma_hi2: float, phi: Callable,
                   grid: Grid1D) -> PdeSolution:
    """Explicit monotone scheme for u_t = 1/2(s_hi^2 (u_xx)^+ - s_lo^2 (u_xx)^-).

    Boundary nodes stay at phi's values; choose L so the domain of
    dependence of the evaluation point stays clear of them (about
    x_eval + 6 * s_hi * sqrt(T)).
    """
    if not 0 <= sigma_lo2 <= sigma_hi2:
        raise InputError(f"need 0 <= sigma_lo2 <= sigma_hi2, got {sigma_lo2}, {sigma_hi2}")
    n = grid.steps
    dt = grid.T / n
    inv_dx2 = 1.0 / grid.dx ** 2
    ratio = dt * sigma_hi2 * inv_dx2
    if ratio > 1.0 + 1e-12:
        raise ConfigurationError(f"CFL violated: dt*s_hi^2/dx^2 = {ratio:.4g} > 1")
    u = np.asarray(phi(grid.x[:, None]), dtype=float).copy()
    _check_finite(u, "initial data")
    hi, lo = 0.5 * dt * sigma_hi2 * inv_dx2, 0.5 * dt * sigma_lo2 * inv_dx2
    inner = u[1:-1]
    for _ in range(n):
        d2 = u[2:] - 2.0 * inner + u[:-2]
        inner += np.where(d2 > 0, hi * d2, lo * d2)
    _check_finite(u, "solve_gheat_1d")
    return PdeSolution(grid, u, n, ratio, "explicit-1d")


def _second_differences(u, dx1, dx2):
    c = u[1:-1, 1:-1]
    d11 = (u[2:, 1:-1] - 2 * c + u[:-2, 1:-1]) / dx1 ** 2
    d22 = (u[1:-1, 2:] - 2 * c + u[1:-1, :-2]) / dx2 ** 2
    # sign-split cross stencils; each is a consistent u_12 approximation
    axial = u[2:, 1:-1] + u[:-2, 1:-1] + u[1:-1, 2:] + u[1:-1, :-2]
    d12_pos = (u[2:, 2:] + u[:-2, :-2] + 2 * c - axial) / (2 * dx1 * dx2)
    d12_neg = -(u[2:, :-2] + u[:-2, 2:] + 2 * c - axial) / (2 * dx1 * dx2)
    return d11, d22, d12_pos, d12_neg


def cfl_2d(theta: CovariancePolytope, grid: Grid2D) -> float:
    dx1, dx2 = grid.dx
    dt = grid.T / grid.steps
    q = theta.vertices
    rate = q[:, 0, 0] / dx1 ** 2 + q[:, 1, 1] / dx2 ** 2 + np.abs(q[:, 0, 1]) / (dx1 * dx2)
    return float(dt * rate.max())


def solve_gheat_2d(theta: CovariancePolytope, phi: Callable, grid: Grid2D) -> PdeSolution:
    """Explicit scheme for u_t = max_Q 1/2 tr[Q D^2 u] on a 2-d grid.

    The cross derivative uses the stencil matching the sign of q_12, which
    is monotone only when each vertex is diagonally dominant on this mesh
    (q_11/dx1 >= |q_12|/dx2 and q_22/dx2 >= |q_12|/dx1). Anything else is
    rejected.
    """
    if theta.dimension != 2:
        raise InputError("solve_gheat_2d needs a 2-d polytope")
    dx1, dx2 = grid.dx
    q = theta.vertices
    q12 = np.abs(q[:, 0, 1])
    if np.any(q[:, 0, 0] < q12 * dx1 / dx2 - 1e-12) or np.any(q[:, 1, 1] < q12 * dx2 / dx1 - 1e-12):
        raise UnsupportedCase("a vertex of Theta is not diagonally dominant; "
                              "the 9-point monotone stencil does not apply")
    ratio = cfl_2d(theta, grid)
    if ratio > 0.5 + 1e-12:
        raise ConfigurationError(f"CFL violated: ratio {ratio:.4g} > 0.5")
    n = grid.steps
    dt = grid.T / n
    u = np.asarray(phi(grid.mesh()), dtype=float).reshape(grid.J1, grid.J2).copy()
    _check_finite(u, "initial data")
    for _ in range(n):
        d11, d22, dp, dn = _second_differences(u, dx1, dx2)
        best = None
        for Q in q:
            cross = dp if Q[0, 1] >= 0 else dn
            val = Q[0, 0] * d11 + Q[1, 1] * d22 + 2.0 * Q[0, 1] * cross
            best = val if best is None else np.maximum(best, val)
        u[1:-1, 1:-1] += 0.5 * dt * best
    _check_finite(u, "solve_gheat_2d")
    return PdeSolution(grid, u, n, ratio, "explicit-2d-9pt")


@dataclass(frozen=True)
class LimitValue:
    """A limit expectation together with how it was obtained."""

    value: float
    error_bound: float | None = None
    meta: dict = field(default_factory=dict)

    def __float__(self):
        return self.value


def default_half_width(theta: CovariancePolytope, T: float = 1.0) -> float:
    s = math.sqrt(float(np.max(np.diagonal(theta.vertices, axis1=1, axis2=2))))
    return max(6.0 * s * math.sqrt(T), 1.0) + 1.0


def gnormal_expectation(theta: CovariancePolytope, phi: Callable, dx: float | None = None,
                        L: float | None = None, cfl: float = 0.9) -> LimitValue:
    """E[phi(X)] for X ~ N(0; Theta) as u(1, 0) of the G-heat equation (d = 1, 2)."""
    d = theta.dimension
    if L is None:
        L = default_half_width(theta)
    if d == 1:
        lo, hi = theta.as_interval()
        dx = dx or 0.01
        grid = Grid1D.from_spacing(dx, 1.0, L, hi, cfl)
        sol = solve_gheat_1d(lo, hi, phi, grid)
    elif d == 2:
        dx = dx or 0.1
        q = theta.vertices
        rate = (q[:, 0, 0] + q[:, 1, 1] + np.abs(q[:, 0, 1])).max() / dx ** 2
        dt = 0.5 * cfl / rate if rate > 0 else 1.0
        grid = Grid2D.square(dx, 1.0, L, dt)
        sol = solve_gheat_2d(theta, phi, grid)
    else:
        raise UnsupportedCase(f"G-heat solves are limited to d <= 2, got d={d}")
    return LimitValue(sol.center_value(), None,
                      {"grid": grid.to_json(), "steps": sol.steps, "cfl_ratio": sol.cfl_ratio})


# ---------------------------------------------------------------------------
# maximal distributions


@dataclass(frozen=True)
class MeanPolytope:
    """conv(vertices) in R^d; vertices are (m, d)."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] == 0:
            raise InputError("mean polytope needs a nonempty (m, d) vertex array")
        if not np.all(np.isfinite(v)):
            raise InputError("non-finite vertex")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @classmethod
    def interval(cls, lo: float, hi: float) -> "MeanPolytope":
        if lo > hi:
            raise InputError("interval needs lo <= hi")
        return cls(np.array([[lo], [hi]]))

    @property
    def dimension(self) -> int:
        return self.vertices.shape[1]

    def support(self, p) -> float:
        """g(p) = max over the hull of <p, q>."""
        return float(np.max(self.vertices @ np.asarray(p, dtype=float)))

    def diameter(self) -> float:
        v = self.vertices
        return float(np.max(np.linalg.norm(v[:, None] - v[None], axis=-1)))

    def to_json(self) -> dict:
        return {"dimension": self.dimension, "vertices": self.vertices.tolist()}

    @classmethod
    def from_json(cls, obj) -> "MeanPolytope":
        if "interval" in obj:
            return cls.interval(*map(float, obj["interval"]))
        return cls(np.asarray(obj["vertices"], dtype=float))

    def sample(self, spacing: float) -> np.ndarray:
        """Points of the hull on a grid of roughly the given spacing."""
        v = self.vertices
        if self.dimension == 1:
            lo, hi = v.min(), v.max()
            k = max(1, math.ceil((hi - lo) / spacing))
            return np.linspace(lo, hi, k + 1)[:, None]
        return _sample_hull(v, spacing)


def _triangle_grid(a, b, c, spacing):
    r = max(1, math.ceil(max(np.linalg.norm(b - a), np.linalg.norm(c - a),
                             np.linalg.norm(c - b)) / spacing))
    i, j = np.meshgrid(np.arange(r + 1), np.arange(r + 1), indexing="ij")
    keep = i + j <= r
    i, j = i[keep] / r, j[keep] / r
    return a + np.outer(i, b - a) + np.outer(j, c - a)


def _sample_hull(v: np.ndarray, spacing: float) -> np.ndarray:
    center = v.mean(axis=0)
    centered = v - center
    rank = np.linalg.matrix_rank(centered, tol=1e-12) if len(v) > 1 else 0
    if rank == 0:
        return v[:1].copy()
    if rank == 1:
        direction = centered[np.argmax(np.linalg.norm(centered, axis=1))]
        t = centered @ direction / (direction @ direction)
        a, b = v[np.argmin(t)], v[np.argmax(t)]
        k = max(1, math.ceil(np.linalg.norm(b - a) / spacing))
        return a + np.outer(np.linspace(0, 1, k + 1), b - a)
    if v.shape[1] == 2:
        from scipy.spatial import ConvexHull

        hv = v[ConvexHull(v).vertices]
        return np.vstack([_triangle_grid(hv[0], hv[k], hv[k + 1], spacing)
                          for k in range(1, len(hv) - 1)])
    # d >= 3: barycentric lattice over all vertices, capped in size
    m = len(v)
    r = max(1, math.ceil(np.max(np.linalg.norm(v[:, None] - v[None], axis=-1)) / spacing))
    while math.comb(r + m - 1, m - 1) > 200_000 and r > 1:
        r //= 2
    pts = []
    for combo in _compositions(r, m):
        pts.append(np.asarray(combo) @ v / r)
    return np.array(pts)


def _compositions(total, parts):
    if parts == 1:
        yield (total,)
        return
    for k in range(total + 1):
        for rest in _compositions(total - k, parts - 1):
            yield (k,) + rest


def maximal_expectation(gamma: MeanPolytope, phi: Callable,
                        spacing: float | None = None) -> LimitValue:
    """max over the hull of phi, by grid sampling plus local refinement.

    ``error_bound`` is lipschitz * spacing when phi exposes a Lipschitz
    constant (test functions from the catalog do).
    """
    diam = gamma.diameter()
    if spacing is None:
        spacing = 1e-3 * diam if diam > 0 else 1.0
    pts = gamma.sample(spacing)
    vals = np.asarray(phi(pts), dtype=float)
    k = int(np.argmax(vals))
    best_x, best = pts[k], float(vals[k])
    # pattern search, moves restricted to sampled-hull neighbourhood via projection
    if diam > 0:
        best_x, best = _refine(gamma, phi, best_x, best, spacing)
    lip = getattr(phi, "lipschitz_constant", None)
    bound = None if lip is None else lip * spacing
    return LimitValue(best, bound, {"argmax": best_x.tolist(), "spacing": spacing})


def _inside(gamma: MeanPolytope, x: np.ndarray) -> bool:
    from .matrix_sets import point_to_hull_distance

    return point_to_hull_distance(x, gamma.vertices) <= 1e-12


def _refine(gamma, phi, x, fx, spacing):
    d = gamma.dimension
    dirs = np.vstack([np.eye(d), -np.eye(d)])
    step = spacing
    while step > spacing * 1e-4:
        moved = False
        for e in dirs:
            y = x + step * e
            if not _inside(gamma, y):
                continue
            fy = float(np.asarray(phi(y[None]))[0])
            if fy > fx:
                x, fx, moved = y, fy, True
                break
        if not moved:
            step *= 0.5
    return x, fx


def maximal_closed_form(gamma: MeanPolytope, phi: Callable, T: float, points,
                        spacing: float = 1e-3) -> np.ndarray:
    """u(T, y) = max_{q in Gamma} phi(y + T q) at each row of ``points``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    qs = gamma.sample(spacing) * T
    out = np.empty(len(points))
    for k, y in enumerate(points):
        out[k] = np.max(phi(y + qs))
    return out


def solve_maximal_pde(gamma: MeanPolytope, phi: Callable, T: float | None,
                      grid: Grid1D | Grid2D) -> PdeSolution:
    """Upwind monotone scheme for u_t = g(Du), g(p) = max_q <p, q>.

    For each vertex q the directional derivative uses forward differences
    where q_i > 0 and backward ones where q_i < 0; the scheme takes the max
    over vertices. Boundary nodes stay at phi's values.
    """
    d = gamma.dimension
    if T is not None and abs(T - grid.T) > 1e-12:
        grid = type(grid)(**{**grid.__dict__, "T": T})
    n = grid.steps
    dt = grid.T / n
    q = gamma.vertices
    if d == 1:
        if not isinstance(grid, Grid1D):
            raise InputError("1-d Gamma needs a Grid1D")
        dxs = (grid.dx,)
    elif d == 2:
        if not isinstance(grid, Grid2D):
            raise InputError("2-d Gamma needs a Grid2D")
        dxs = grid.dx
    else:
        raise UnsupportedCase("maximal PDE limited to d <= 2")
    ratio = float(dt * np.max(np.abs(q) @ (1.0 / np.asarray(dxs))))
    if ratio > 1.0 + 1e-12:
        raise ConfigurationError(f"CFL violated: {ratio:.4g} > 1")
    if d == 1:
        u = np.asarray(phi(grid.x[:, None]), dtype=float).copy()
        _check_finite(u, "initial data")
        h = grid.dx
        for _ in range(n):
            fwd = (u[2:] - u[1:-1]) / h
            bwd = (u[1:-1] - u[:-2]) / h
            best = np.max([max(qq, 0) * fwd + min(qq, 0) * bwd for qq in q[:, 0]], axis=0)
            u[1:-1] += dt * best
    else:
        u = np.asarray(phi(grid.mesh()), dtype=float).reshape(grid.J1, grid.J2).copy()
        _check_finite(u, "initial data")
        h1, h2 = dxs
        for _ in range(n):
            c = u[1:-1, 1:-1]
            f1, b1 = (u[2:, 1:-1] - c) / h1, (c - u[:-2, 1:-1]) / h1
            f2, b2 = (u[1:-1, 2:] - c) / h2, (c - u[1:-1, :-2]) / h2
            best = None
            for q1, q2 in q:
                val = max(q1, 0) * f1 + min(q1, 0) * b1 + max(q2, 0) * f2 + min(q2, 0) * b2
                best = val if best is None else np.maximum(best, val)
            u[1:-1, 1:-1] += dt * best
    _check_finite(u, "solve_maximal_pde")
    return PdeSolution(grid, u, n, ratio, "upwind")
