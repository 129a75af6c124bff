"""Finite differences for the sub-Laplacian on gauge balls.

The grid lives in local coordinates zeta of the ball B_R(c): world points are
c * zeta, so by left invariance the operator is the same polynomial-coefficient
operator for every center.  Layer-l coordinates span [-R^l, R^l] with the same
number of nodes on every axis, hence the grid of B_R is the dilation of the
grid of B_1 and shrinking balls are resolved at constant cost.

Expanding X_i = sum_k a_ik d_k gives
    L = sum_{k,l} A_kl d_k d_l + sum_l b_l d_l,  A = sum_i a_i a_i^T,  b_l = sum_i X_i a_il.
Every second-order term is written as a second difference along a lattice
direction (axes for d_kk, the two diagonals e_k +- e_l for d_kl), and each
direction uses Shortley-Weller unequal arms where the line leaves the ball, with
Dirichlet data taken at the exact crossing.  Three-point formulas on a line are
exact for quadratics, so the scheme reproduces Euclidean quadratics at every node.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np
import pyamg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .groups import (
    GroupSpec,
    gauge_norm,
    horizontal_fields,
    homogeneous_dimension,
    inverse,
    multiply,
)
from .poly import GradedPolynomial

log = logging.getLogger(__name__)

Data = Union[float, Callable[[np.ndarray], np.ndarray]]

RTOL = 1e-10
MAX_ITER = 100_000
DIRECT_LIMIT = 5000  # about the interior size of an n = 17 ball; factorized directly


class GridError(ValueError):
    pass


class SolverError(RuntimeError):
    def __init__(self, message: str, residuals: Sequence[float] = ()):
        super().__init__(message)
        self.residuals = list(residuals)


class OutsideHullError(ValueError):
    pass


@dataclass
class Crossings:
    """Grid-line exits from the ball along one lattice direction and sign."""

    direction: tuple[int, ...]
    sign: int
    nodes: np.ndarray  # flat grid index of the interior node
    theta: np.ndarray  # arm length in units of the lattice step
    local: np.ndarray  # crossing points in local coordinates

    @property
    def is_axis(self) -> bool:
        return sum(abs(d) for d in self.direction) == 1


@dataclass
class DiscreteProblem:
    spec: GroupSpec
    center: np.ndarray
    radius: float
    n: int
    spacing: np.ndarray
    axes: list
    interior: np.ndarray  # bool, grid shape
    crossings: dict = field(repr=False)  # (direction, sign) -> Crossings

    @property
    def shape(self) -> tuple[int, ...]:
        return self.interior.shape

    @property
    def n_interior(self) -> int:
        return int(self.interior.sum())

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def volume(self) -> float:
        """Midpoint-rule volume of the ball: interior nodes times cell volume."""
        return self.n_interior * self.cell_volume

    def local_points(self, mask=None) -> np.ndarray:
        mask = self.interior if mask is None else mask
        idx = np.nonzero(mask)
        return np.stack([self.axes[k][i] for k, i in enumerate(idx)], axis=-1)

    def world(self, local) -> np.ndarray:
        if not np.any(self.center):
            return np.asarray(local, dtype=float)
        return multiply(self.spec, self.center, local)

    def to_local(self, world) -> np.ndarray:
        if not np.any(self.center):
            return np.asarray(world, dtype=float)
        return multiply(self.spec, inverse(self.spec, self.center), world)

    def world_points(self, mask=None) -> np.ndarray:
        return self.world(self.local_points(mask))

    def axis_crossing_count(self) -> int:
        return sum(len(c.nodes) for c in self.crossings.values() if c.is_axis)

    def header(self) -> dict:
        return {
            "group": self.spec.to_dict(),
            "center": [float(v) for v in self.center],
            "radius": float(self.radius),
            "n_per_axis": self.n,
            "spacing": [float(h) for h in self.spacing],
            "interior_nodes": self.n_interior,
        }


def _operator_polys(spec: GroupSpec):
    fields = horizontal_fields(spec)
    n = spec.dim
    zero = GradedPolynomial({}, spec.layers)
    A = [[zero for _ in range(n)] for _ in range(n)]
    b = [zero for _ in range(n)]
    for X in fields:
        a = X.coefficients
        for k in range(n):
            if a[k].is_zero():
                continue
            for l in range(n):
                if not a[l].is_zero():
                    A[k][l] = A[k][l] + a[k] * a[l]
            b[k] = b[k] + X.apply(a[k])
    return A, b


def _directions(spec: GroupSpec) -> list[tuple[int, ...]]:
    A, b = _operator_polys(spec)
    n = spec.dim
    dirs = []
    for k in range(n):
        if not (A[k][k].is_zero() and b[k].is_zero()):
            e = [0] * n
            e[k] = 1
            dirs.append(tuple(e))
    for k, l in itertools.combinations(range(n), 2):
        if not A[k][l].is_zero():
            for s in (1, -1):
                e = [0] * n
                e[k], e[l] = 1, s
                dirs.append(tuple(e))
    return dirs


def _bisect(spec: GroupSpec, start: np.ndarray, step: np.ndarray, radius: float) -> np.ndarray:
    """theta in (0, 1] with |start + theta step| = radius; start inside, start + step outside."""
    lo = np.zeros(len(start))
    hi = np.ones(len(start))
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        inside = gauge_norm(spec, start + mid[:, None] * step) < radius
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
        if np.max(hi - lo) < 1e-15:
            break
    return 0.5 * (lo + hi)


def build_grid(spec: GroupSpec, center=None, radius: float = 1.0, n_per_axis: int = 33) -> DiscreteProblem:
    if n_per_axis < 9:
        raise GridError("n_per_axis must be at least 9")
    if radius <= 0:
        raise GridError("radius must be positive")
    center = np.zeros(spec.dim) if center is None else np.asarray(center, dtype=float)
    axes = [np.linspace(-(radius**l), radius**l, n_per_axis) for l in spec.layers]
    spacing = np.array([ax[1] - ax[0] for ax in axes])
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    interior = gauge_norm(spec, mesh) < radius
    if not interior.any():
        raise GridError("empty interior")
    shape = interior.shape
    flat_int = interior.ravel()
    crossings = {}
    idx = np.array(np.nonzero(interior)).T
    flat_ids = np.ravel_multi_index(idx.T, shape)
    for d in _directions(spec):
        dv = np.array(d)
        for s in (1, -1):
            nb = idx + s * dv
            inside_box = np.all((nb >= 0) & (nb < n_per_axis), axis=1)
            nb_int = np.zeros(len(idx), dtype=bool)
            nb_int[inside_box] = flat_int[np.ravel_multi_index(nb[inside_box].T, shape)]
            out = ~nb_int
            start = mesh.reshape(-1, spec.dim)[flat_ids[out]]
            step = s * dv * spacing
            theta = _bisect(spec, start, np.broadcast_to(step, start.shape), radius)
            crossings[(d, s)] = Crossings(d, s, flat_ids[out], theta, start + theta[:, None] * step)
    return DiscreteProblem(spec, center, float(radius), n_per_axis, spacing, axes, interior, crossings)


# operator ---------------------------------------------------------------------


@dataclass
class LinearOperatorHandle:
    """L_h u = matrix @ u_interior + boundary @ g(boundary_points)."""

    problem: DiscreteProblem
    matrix: sp.csr_matrix
    boundary: sp.csr_matrix
    boundary_local: np.ndarray
    full_stencil: np.ndarray  # bool over interior nodes: no arm leaves the ball

    @property
    def boundary_world(self) -> np.ndarray:
        return self.problem.world(self.boundary_local)

    def apply(self, u: Data) -> np.ndarray:
        """L_h applied to nodal samples of a function (boundary values from the same function)."""
        pb = self.problem
        ui = _evaluate(u, pb.world_points())
        ub = _evaluate(u, self.boundary_world)
        return self.matrix @ ui + self.boundary @ ub


def _evaluate(data: Data, points: np.ndarray) -> np.ndarray:
    if callable(data):
        return np.asarray(data(points), dtype=float) * np.ones(len(points))
    return np.full(len(points), float(data))


_OPERATOR_CACHE: dict = {}


def discretize_L(problem: DiscreteProblem) -> LinearOperatorHandle:
    key = id(problem)
    cached = _OPERATOR_CACHE.get(key)
    if cached is not None and cached.problem is problem:
        return cached
    spec = problem.spec
    A, b = _operator_polys(spec)
    shape = problem.shape
    M = problem.n_interior
    number = -np.ones(int(np.prod(shape)), dtype=np.int64)
    flat_ids = np.flatnonzero(problem.interior.ravel())
    number[flat_ids] = np.arange(M)
    pts = problem.local_points()
    h = problem.spacing
    strides = np.array([int(np.prod(shape[k + 1:])) for k in range(len(shape))])

    rows, cols, vals = [], [], []
    brows, bcols, bvals = [], [], []
    bpoints = []
    nb_count = 0
    full = np.ones(M, dtype=bool)

    def arms(d, s):
        c = problem.crossings[(d, s)]
        arm = np.ones(M)
        exit_pos = -np.ones(M, dtype=np.int64)
        where = number[c.nodes]
        arm[where] = c.theta
        exit_pos[where] = np.arange(len(where))
        return arm, exit_pos, c

    diag = np.zeros(M)
    for d in _directions(spec):
        dv = np.array(d)
        nz = np.flatnonzero(dv)
        if len(nz) == 1:
            k = nz[0]
            w2 = A[k][k](pts) * np.ones(M) / h[k] ** 2
            w1 = b[k](pts) * np.ones(M) / h[k]
        else:
            k, l = nz
            sgn = dv[l]
            w2 = sgn * (A[k][l](pts) * np.ones(M)) / (2 * h[k] * h[l])
            w1 = np.zeros(M)
        if not (np.any(w2) or np.any(w1)):
            continue
        a, exit_a, cross_a = arms(d, 1)
        bb, exit_b, cross_b = arms(d, -1)
        denom = a * bb * (a + bb)
        c_plus = (2 * bb * w2 + bb * bb * w1) / denom
        c_minus = (2 * a * w2 - a * a * w1) / denom
        diag += -(2 * (a + bb) * w2 + (bb * bb - a * a) * w1) / denom
        offset = int(dv @ strides)
        for coef, exit_pos, cross, sgn_off in ((c_plus, exit_a, cross_a, 1), (c_minus, exit_b, cross_b, -1)):
            inner = exit_pos < 0
            rows.append(np.flatnonzero(inner))
            cols.append(number[flat_ids[inner] + sgn_off * offset])
            vals.append(coef[inner])
            outer = np.flatnonzero(~inner)
            full[outer] = False
            brows.append(outer)
            bcols.append(nb_count + exit_pos[outer])
            bvals.append(coef[outer])
            bpoints.append(cross.local)
            nb_count += len(cross.local)
    rows.append(np.arange(M))
    cols.append(np.arange(M))
    vals.append(diag)
    rows, cols, vals = (np.concatenate(x) for x in (rows, cols, vals))
    if np.any(cols < 0):
        raise GridError("stencil reaches a non-interior node without a recorded crossing")
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(M, M))
    bmat = sp.csr_matrix(
        (np.concatenate(bvals), (np.concatenate(brows), np.concatenate(bcols))), shape=(M, nb_count)
    )
    handle = LinearOperatorHandle(problem, mat, bmat, np.concatenate(bpoints), full)
    _OPERATOR_CACHE.clear()
    _OPERATOR_CACHE[key] = handle
    return handle


# fields -------------------------------------------------------------------------


@dataclass
class DiscreteField:
    problem: DiscreteProblem
    mask: np.ndarray  # bool, grid shape
    values: np.ndarray  # one value per True entry of mask, C order

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (int(self.mask.sum()),):
            raise ValueError("values must match the mask node count")

    def grid(self) -> np.ndarray:
        out = np.full(self.problem.shape, np.nan)
        out[self.mask] = self.values
        return out

    def local_points(self) -> np.ndarray:
        return self.problem.local_points(self.mask)

    def world_points(self) -> np.ndarray:
        return self.problem.world_points(self.mask)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def restrict(self, radius: float) -> DiscreteField:
        """Nodes with local gauge norm < radius."""
        r = gauge_norm(self.problem.spec, self.local_points())
        keep = r < radius
        mask = np.zeros_like(self.mask)
        mask[tuple(np.array(np.nonzero(self.mask))[:, keep])] = True
        return DiscreteField(self.problem, mask, self.values[keep])

    def __sub__(self, other: DiscreteField) -> DiscreteField:
        if other.problem is not self.problem:
            raise ValueError("fields live on different grids")
        g = self.grid() - other.grid()
        mask = self.mask & other.mask
        return DiscreteField(self.problem, mask, g[mask])

    def header(self) -> dict:
        h = self.problem.header()
        h["nodes"] = int(self.mask.sum())
        h["columns"] = [f"x{k}" for k in range(self.problem.spec.dim)] + ["value"]
        return h

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header()["columns"])
        for p, v in zip(self.world_points(), self.values):
            w.writerow([repr(float(c)) for c in p] + [repr(float(v))])
        return buf.getvalue()

    def header_json(self) -> str:
        return json.dumps(self.header(), sort_keys=True, indent=2)


def nodal_field(problem: DiscreteProblem, u: Data) -> DiscreteField:
    return DiscreteField(problem, problem.interior.copy(), _evaluate(u, problem.world_points()))


# solve ----------------------------------------------------------------------------


class Factorization:
    """One grid's operator prepared for many right-hand sides.

    ``direct`` keeps a sparse LU; ``amg`` keeps a smoothed-aggregation hierarchy
    used to precondition GMRES, with an incomplete-LU preconditioner and then
    a direct solve as fallbacks when the Krylov iteration stalls.
    """

    def __init__(self, handle: LinearOperatorHandle, method: str = "auto",
                 rtol: float = RTOL, max_iter: int = MAX_ITER):
        if method == "auto":
            method = "direct" if handle.problem.n_interior <= DIRECT_LIMIT else "amg"
        if method not in ("direct", "amg"):
            raise ValueError(f"unknown method {method!r}")
        self.handle = handle
        self.method = method
        self.rtol = rtol
        self.max_iter = max_iter
        self.history: list[float] = []
        self._lu = None
        self._prec = None
        mat = handle.matrix
        if method == "direct":
            self._lu = spla.splu(mat.tocsc(), permc_spec="COLAMD")
        else:
            ml = pyamg.smoothed_aggregation_solver(mat.tocsr(), symmetry="nonsymmetric")
            self._prec = ml.aspreconditioner(cycle="V")

    def _krylov(self, rhs: np.ndarray, prec, x0=None) -> np.ndarray:
        self.history = []
        mat = self.handle.matrix
        u, _ = spla.gmres(
            mat, rhs, x0=x0, M=prec, rtol=self.rtol, atol=0.0, restart=100,
            maxiter=max(1, self.max_iter // 100),
            callback=lambda r: self.history.append(float(r)), callback_type="pr_norm",
        )
        return u

    def solve_vector(self, rhs: np.ndarray) -> np.ndarray:
        mat = self.handle.matrix
        nr = np.linalg.norm(rhs) or 1.0
        if not np.any(rhs):
            return np.zeros_like(rhs)
        if self._lu is not None:
            u = self._lu.solve(rhs)
            _check_residual(mat, u, rhs, self.rtol)
            return u
        u = self._krylov(rhs, self._prec)
        res = np.linalg.norm(mat @ u - rhs) / nr
        if res <= self.rtol:
            return u
        log.warning("AMG-GMRES stopped at residual %.3e; retrying with ILU", res)
        ilu = spla.spilu(mat.tocsc(), drop_tol=1e-4, fill_factor=10)
        u = self._krylov(rhs, spla.LinearOperator(mat.shape, ilu.solve), x0=u)
        res = np.linalg.norm(mat @ u - rhs) / nr
        if res <= self.rtol:
            return u
        log.warning("ILU-GMRES stopped at residual %.3e; using direct solve", res)
        try:
            u = spla.spsolve(mat.tocsc(), rhs)
        except Exception as exc:  # pragma: no cover - scipy raises several types here
            raise SolverError(f"direct fallback failed: {exc}", self.history) from exc
        res = np.linalg.norm(mat @ u - rhs) / nr
        if not np.isfinite(res) or res > self.rtol:
            raise SolverError(f"no convergence, residual {res:.3e}", self.history + [res])
        return u

    def solve(self, f: Data, g: Data) -> DiscreteField:
        pb = self.handle.problem
        rhs = _evaluate(f, pb.world_points()) - self.handle.boundary @ _evaluate(g, self.handle.boundary_world)
        return DiscreteField(pb, pb.interior.copy(), self.solve_vector(rhs))


def factorize(problem: DiscreteProblem, method: str = "auto", rtol: float = RTOL,
              max_iter: int = MAX_ITER) -> Factorization:
    return Factorization(discretize_L(problem), method, rtol, max_iter)


def _check_residual(mat, u, rhs, tol: float = RTOL):
    nr = np.linalg.norm(rhs)
    res = np.linalg.norm(mat @ u - rhs) / (nr if nr > 0 else 1.0)
    if not np.isfinite(res) or res > tol:
        raise SolverError(f"relative residual {res:.3e} exceeds {tol:.0e}", [res])
    return res


def solve_dirichlet(problem: DiscreteProblem, f: Data, g: Data, method: str = "auto",
                    rtol: float = RTOL, max_iter: int = MAX_ITER) -> DiscreteField:
    """Solve L u = f in the ball, u = g on its boundary.

    ``method``: ``direct`` (sparse LU), ``amg`` (AMG-preconditioned GMRES with
    fallbacks) or ``auto`` (direct up to DIRECT_LIMIT unknowns, amg beyond).
    Raises SolverError when the relative residual cannot be brought below rtol.
    """
    return factorize(problem, method, rtol, max_iter).solve(f, g)


# derivatives ----------------------------------------------------------------------


def _shift(G: np.ndarray, offset: Sequence[int]) -> np.ndarray:
    """G[p + offset] with NaN padding."""
    pad = np.pad(G, 1, constant_values=np.nan)
    sl = tuple(slice(1 + o, 1 + o + s) for o, s in zip(offset, G.shape))
    return pad[sl]


def _unit(n: int, *pairs) -> tuple[int, ...]:
    e = [0] * n
    for k, s in pairs:
        e[k] += s
    return tuple(e)


def _grid_partial(G: np.ndarray, h: np.ndarray, k: int, l: int | None = None) -> np.ndarray:
    n = G.ndim
    if l is None:
        return (_shift(G, _unit(n, (k, 1))) - _shift(G, _unit(n, (k, -1)))) / (2 * h[k])
    if k == l:
        return (_shift(G, _unit(n, (k, 1))) - 2 * G + _shift(G, _unit(n, (k, -1)))) / h[k] ** 2
    return (
        _shift(G, _unit(n, (k, 1), (l, 1)))
        - _shift(G, _unit(n, (k, 1), (l, -1)))
        - _shift(G, _unit(n, (k, -1), (l, 1)))
        + _shift(G, _unit(n, (k, -1), (l, -1)))
    ) / (4 * h[k] * h[l])


def _poly_on_grid(P: GradedPolynomial, problem: DiscreteProblem) -> np.ndarray:
    mesh = np.stack(np.meshgrid(*problem.axes, indexing="ij"), axis=-1)
    return np.asarray(P(mesh)) * np.ones(problem.shape)


def _wrap(problem: DiscreteProblem, mask: np.ndarray, G: np.ndarray) -> DiscreteField:
    keep = mask & np.isfinite(G)
    return DiscreteField(problem, keep, G[keep])


def horizontal_derivative(field: DiscreteField, i: int) -> DiscreteField:
    """X_i u by centered differences; nodes whose stencil leaves the field mask are dropped."""
    pb = field.problem
    X = horizontal_fields(pb.spec)[i]
    G = field.grid()
    out = np.zeros(pb.shape)
    for k, a in enumerate(X.coefficients):
        if not a.is_zero():
            out = out + _poly_on_grid(a, pb) * _grid_partial(G, pb.spacing, k)
    return _wrap(pb, field.mask, out)


def second_derivative(field: DiscreteField, i: int, j: int) -> DiscreteField:
    """X_i X_j u = sum a_ik a_jl d_k d_l u + sum (X_i a_jl) d_l u."""
    pb = field.problem
    fields = horizontal_fields(pb.spec)
    ai, aj = fields[i].coefficients, fields[j].coefficients
    G = field.grid()
    out = np.zeros(pb.shape)
    n = pb.spec.dim
    for k in range(n):
        if ai[k].is_zero():
            continue
        for l in range(n):
            if aj[l].is_zero():
                continue
            out = out + _poly_on_grid(ai[k] * aj[l], pb) * _grid_partial(G, pb.spacing, k, l)
    for l in range(n):
        c = fields[i].apply(aj[l])
        if not c.is_zero():
            out = out + _poly_on_grid(c, pb) * _grid_partial(G, pb.spacing, l)
    return _wrap(pb, field.mask, out)


def sample(field: DiscreteField, points, strict: bool = True) -> np.ndarray:
    """Multilinear interpolation at world points; NaN or OutsideHullError off the mask."""
    pb = field.problem
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    loc = pb.to_local(pts)
    s = np.stack(
        [(loc[:, k] - pb.axes[k][0]) / pb.spacing[k] for k in range(pb.spec.dim)], axis=-1
    )
    i0 = np.clip(np.floor(s).astype(np.int64), 0, pb.n - 2)
    frac = s - i0
    in_box = np.all((frac >= -1e-9) & (frac <= 1 + 1e-9), axis=1)
    frac = np.clip(frac, 0.0, 1.0)
    G = field.grid()
    total = np.zeros(len(pts))
    bad = ~in_box
    for corner in itertools.product((0, 1), repeat=pb.spec.dim):
        c = np.array(corner)
        w = np.prod(np.where(c == 1, frac, 1 - frac), axis=1)
        v = G[tuple((i0 + c).T)]
        used = w > 0
        bad |= used & ~np.isfinite(v)
        total += np.where(used, w * np.nan_to_num(v), 0.0)
    if np.any(bad):
        if strict:
            raise OutsideHullError(f"{int(bad.sum())} point(s) outside the interpolation hull")
        total[bad] = np.nan
    return total if np.ndim(points) > 1 else total[0]


# quadrature helpers -------------------------------------------------------------------


def integrate(field: DiscreteField) -> float:
    return float(np.sum(field.values) * field.problem.cell_volume)


def lp_norm(values: np.ndarray, cell_volume: float, p: float) -> float:
    return float((np.sum(np.abs(values) ** p) * cell_volume) ** (1.0 / p))


def homogeneous_dimension_of(problem: DiscreteProblem) -> int:
    return homogeneous_dimension(problem.spec)


def extend_by(field: DiscreteField, g: Data) -> DiscreteField:
    """The field on every box node, with g filling the nodes outside its mask.

    Interpolating the extension is first-order accurate in the boundary cells
    and exact in the interior cells, which is what boundary data for inner
    balls needs near the outer sphere.
    """
    pb = field.problem
    G = field.grid()
    missing = ~field.mask
    G[missing] = _evaluate(g, pb.world_points(missing))
    full = np.ones(pb.shape, dtype=bool)
    return DiscreteField(pb, full, G.ravel())


def interpolation_bound(field: DiscreteField) -> float:
    """sum_k h_k^2 / 8 max |d_kk u|: the multilinear interpolation error bound."""
    pb = field.problem
    G = field.grid()
    total = 0.0
    for k in range(pb.spec.dim):
        dkk = _grid_partial(G, pb.spacing, k, k)
        if np.any(np.isfinite(dkk)):
            total += pb.spacing[k] ** 2 / 8 * float(np.nanmax(np.abs(dkk)))
    return total
