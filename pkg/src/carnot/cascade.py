"""The dyadic perturbation construction, run numerically.

On balls B_k = B_{rho^k}(c) we solve L u_k = f(c) with u_k = u on the boundary,
then measure v_k = u - u_k, w_k = u_k - u_{k+1} and the horizontal Hessian of
u_k at the center.  Each ball has its own dilation-similar grid with the same
number of nodes per axis, so every level costs the same.

``u`` comes either from a manufactured exact solution or from a discrete
solve on B_1(0) that is interpolated for the inner boundary data.
"""
from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .groups import (
    GroupSpec,
    ball_points,
    dilate,
    distance,
    gauge_norm,
    multiply,
    named_group,
    sphere_points,
)
from .manufactured import Manufactured, power_solution
from .modulus import TestFunction, holder_rhs, parse_rhs, schauder_rhs
from .solver import (
    DiscreteField,
    build_grid,
    extend_by,
    factorize,
    horizontal_derivative,
    interpolation_bound,
    sample,
    second_derivative,
)

NULL_TOL = 1e-7  # sups below this count as zero when the modulus itself vanishes


class CascadeError(RuntimeError):
    pass


@dataclass(frozen=True)
class CascadeConfig:
    group: str = "h1"
    rho: float = 0.5
    k_max: int = 5
    n_per_ball: int = 25
    mode: str = "manufactured"  # or "solved"
    rhs: str = "holder:0.5"
    xi0: tuple | None = None
    b: float = 1.0
    n_base: int = 65  # grid of the B_1(0) solve in solved mode
    seed: int = 42

    def __post_init__(self):
        if not (0 < self.rho < 1):
            raise ValueError("rho must lie in (0, 1)")
        if self.k_max < 0:
            raise ValueError("k_max must be nonnegative")
        if self.n_per_ball < 9 or self.n_per_ball % 2 == 0:
            raise ValueError("n_per_ball must be odd and at least 9 so the center is a node")
        if self.mode not in ("manufactured", "solved"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.b < 1:
            raise ValueError("b must be at least 1")
        if self.xi0 is not None:
            spec = self.spec
            if len(self.xi0) != spec.dim:
                raise ValueError("xi0 has the wrong number of coordinates")
            if float(gauge_norm(spec, np.asarray(self.xi0, dtype=float))) > 1 / (4 * self.b**2) + 1e-15:
                raise ValueError("xi0 must satisfy |xi0| <= 1/(4 b^2)")

    @property
    def spec(self) -> GroupSpec:
        return named_group(self.group)

    @property
    def test_function(self) -> TestFunction:
        return parse_rhs(self.rhs)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["xi0"] = None if self.xi0 is None else [float(v) for v in self.xi0]
        return d

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:12]


# the solution u -----------------------------------------------------------------


@dataclass
class Source:
    """Everything the cascade needs to know about u and f."""

    spec: GroupSpec
    f: TestFunction
    u: Callable  # world points -> values, defined on all of B_1(0)
    hessian: Callable  # (i, j, points) -> X_i X_j u
    sup_u: float
    exact: bool
    interpolation_error: float = 0.0


def make_source(config: CascadeConfig) -> Source:
    spec, f = config.spec, config.test_function
    if config.mode == "manufactured":
        m: Manufactured = power_solution(spec, f)
        grid = build_grid(spec, None, 1.0, config.n_base)
        sup_u = float(np.max(np.abs(m.u(grid.world_points()))))
        return Source(spec, f, m.u, m.second, sup_u, True)
    base = build_grid(spec, None, 1.0, config.n_base)
    ub = factorize(base).solve(f, 0.0)
    ext = extend_by(ub, 0.0)
    D2 = {(i, j): second_derivative(ub, i, j)
          for i in range(spec.horizontal_dim) for j in range(spec.horizontal_dim)}

    def hessian(i, j, points):
        return sample(D2[(i, j)], points)

    def u(points):
        # u = 0 on the sphere is continued by zero; off the box that is all that is left
        return np.nan_to_num(sample(ext, points, strict=False), nan=0.0)

    return Source(spec, f, u, hessian, ub.max_abs(), False, interpolation_bound(ub))


# levels ---------------------------------------------------------------------------


@dataclass
class Level:
    k: int
    radius: float
    u: DiscreteField
    d1: dict
    d2: dict


def _solve_level(source: Source, center, radius: float, n: int, k: int) -> Level:
    spec = source.spec
    pb = build_grid(spec, center, radius, n)
    f_c = float(np.asarray(source.f(np.asarray(center)[None, :]))[0])
    uk = factorize(pb).solve(f_c, source.u)
    m = spec.horizontal_dim
    d1 = {i: horizontal_derivative(uk, i) for i in range(m)}
    d2 = {(i, j): second_derivative(uk, i, j) for i in range(m) for j in range(m)}
    return Level(k, radius, uk, d1, d2)


def _center_value(field: DiscreteField, center) -> float:
    return float(sample(field, np.asarray(center)[None, :])[0])


def _ratio(num: float, den: float) -> float:
    if den > 0:
        return num / den
    return 0.0 if num <= NULL_TOL else math.inf


@dataclass
class LevelRecord:
    k: int
    radius: float
    sup_v: float
    sup_xw: dict  # i -> sup |X_i w_k| on B_{k+2}
    sup_xxw: dict  # (i, j) -> sup |X_i X_j w_k| on B_{k+2}
    hessian_center: dict  # (i, j) -> X_i X_j u_k(center)
    omega: float
    ratio_v: float
    ratio_xw: float
    ratio_xxw: float
    nodes_inner: int  # nodes of grid k+1 inside B_{k+2} used for the w_k sups

    def row(self) -> dict:
        out = {
            "k": self.k,
            "radius": self.radius,
            "omega": self.omega,
            "sup_v": self.sup_v,
            "sup_xw": max(self.sup_xw.values()) if self.sup_xw else float("nan"),
            "sup_xxw": max(self.sup_xxw.values()) if self.sup_xxw else float("nan"),
            "ratio_v": self.ratio_v,
            "ratio_xw": self.ratio_xw,
            "ratio_xxw": self.ratio_xxw,
            "nodes_inner": self.nodes_inner,
        }
        for (i, j), v in sorted(self.hessian_center.items()):
            out[f"hess_{i}{j}"] = v
        return out


@dataclass
class CascadeReport:
    config: CascadeConfig
    center: np.ndarray
    records: list
    exact_hessian: dict  # (i, j) -> X_i X_j u(center)
    interpolation_error: float = 0.0
    translated: list = field(default_factory=list)  # per-level difference records
    levels: list = field(default_factory=list, repr=False)
    source: Source | None = field(default=None, repr=False)

    @property
    def spec(self) -> GroupSpec:
        return self.config.spec

    def ratio_sequence(self, which: str) -> np.ndarray:
        return np.array([getattr(r, f"ratio_{which}") for r in self.records])

    def to_dict(self) -> dict:
        def keyed(d):
            return {f"{i}{j}": v for (i, j), v in sorted(d.items())}

        return {
            "config": self.config.to_dict(),
            "config_hash": self.config.digest(),
            "center": [float(v) for v in self.center],
            "interpolation_error": self.interpolation_error,
            "exact_hessian": keyed(self.exact_hessian),
            "levels": [
                {
                    **{k: v for k, v in r.row().items() if not k.startswith("hess_")},
                    "sup_xw_by_index": {str(i): v for i, v in sorted(r.sup_xw.items())},
                    "sup_xxw_by_pair": keyed(r.sup_xxw),
                    "hessian_center": keyed(r.hessian_center),
                }
                for r in self.records
            ],
            "translated": self.translated,
            "limits": {f"{i}{j}": v for (i, j), v in sorted(second_derivative_limit(self).items())},
        }

    def to_json(self) -> str:
        return json.dumps(_clean(self.to_dict()), sort_keys=True, indent=2)

    def to_csv(self) -> str:
        rows = [r.row() for r in self.records]
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in r.items()})
        return buf.getvalue()


def _clean(obj):
    """JSON-safe copy: non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _cascade(config: CascadeConfig, center, source: Source | None = None) -> CascadeReport:
    spec = config.spec
    source = source or make_source(config)
    center = np.zeros(spec.dim) if center is None else np.asarray(center, dtype=float)
    rho, n = config.rho, config.n_per_ball
    levels = [_solve_level(source, center, rho**k, n, k) for k in range(config.k_max + 2)]
    m = spec.horizontal_dim
    pairs = list(itertools.product(range(m), repeat=2))
    omega = source.f.omega
    records = []
    for k in range(config.k_max + 1):
        lk, lk1 = levels[k], levels[k + 1]
        vals_u = np.asarray(source.u(lk.u.world_points()))
        sup_v = float(np.max(np.abs(vals_u - lk.u.values)))
        r_inner = rho ** (k + 2)
        sup_xw, sup_xxw = {}, {}
        nodes = 0
        for i in range(m):
            fld = lk1.d1[i].restrict(r_inner)
            nodes = max(nodes, len(fld.values))
            other = sample(lk.d1[i], fld.world_points())
            sup_xw[i] = float(np.max(np.abs(other - fld.values))) if fld.values.size else math.nan
        for ij in pairs:
            fld = lk1.d2[ij].restrict(r_inner)
            other = sample(lk.d2[ij], fld.world_points())
            sup_xxw[ij] = float(np.max(np.abs(other - fld.values))) if fld.values.size else math.nan
        hess = {ij: _center_value(lk.d2[ij], center) for ij in pairs}
        w = float(omega(rho**k))
        records.append(
            LevelRecord(
                k, rho**k, sup_v, sup_xw, sup_xxw, hess, w,
                _ratio(sup_v, rho ** (2 * k) * w),
                _ratio(max(sup_xw.values()), rho**k * w),
                _ratio(max(sup_xxw.values()), w),
                nodes,
            )
        )
    exact = {ij: float(np.asarray(source.hessian(ij[0], ij[1], center[None, :]))[0]) for ij in pairs}
    return CascadeReport(config, center, records, exact, source.interpolation_error,
                         levels=levels, source=source)


def run_cascade(config: CascadeConfig, source: Source | None = None) -> CascadeReport:
    """Levels k = 0..k_max on balls centered at the origin (one extra grid for w_k)."""
    return _cascade(config, None, source)


def translated_cascade(config: CascadeConfig, base: CascadeReport | None = None,
                       source: Source | None = None) -> CascadeReport:
    """The u'_k family on balls centered at xi0, compared with u_k at xi0.

    For each level whose centered grid reaches xi0 with a full second-difference
    stencil, the record holds |X_iX_j u'_k(xi0) - X_iX_j u_k(xi0)| / omega(rho^k),
    both raw and after removing the corrector (f(xi0) - f(0)) x_11^2 / 2.
    """
    if config.xi0 is None:
        raise ValueError("translated_cascade needs config.xi0")
    if base is None:
        base = run_cascade(config, source)
    source = base.source
    xi0 = np.asarray(config.xi0, dtype=float)
    rep = _cascade(config, xi0, source)
    f0 = float(source.f(np.zeros((1, rep.spec.dim)))[0])
    fx = float(source.f(xi0[None, :])[0])
    diffs = []
    for rec, lvl in zip(rep.records, base.levels):
        if lvl.k > config.k_max:
            break
        worst = worst_corr = 0.0
        defined = True
        for ij, val in rec.hessian_center.items():
            other = float(sample(lvl.d2[ij], xi0[None, :], strict=False)[0])
            if not math.isfinite(other):
                defined = False
                break
            diff = abs(val - other)
            corr = abs(val - other - (fx - f0) * (ij == (0, 0)))
            worst, worst_corr = max(worst, diff), max(worst_corr, corr)
        entry = {"k": rec.k, "defined": defined}
        if defined:
            entry.update(difference=worst, corrected=worst_corr,
                         ratio=_ratio(worst, rec.omega), corrected_ratio=_ratio(worst_corr, rec.omega))
        diffs.append(entry)
    rep.translated = diffs
    return rep


# limits -----------------------------------------------------------------------------


def _tail_sum(omega: Callable, rho: float, k: int, terms: int = 400) -> float:
    return float(np.sum(omega(rho ** np.arange(k, k + terms, dtype=float))))


def _aitken(a: Sequence[float]) -> float:
    if len(a) < 3:
        return float(a[-1])
    x0, x1, x2 = a[-3:]
    den = x2 - 2 * x1 + x0
    if abs(den) <= 1e-14 * max(1.0, abs(x2)):
        return float(x2)
    return float(x2 - (x2 - x1) ** 2 / den)


def second_derivative_limit(report: CascadeReport, noise: float = 1e-8) -> dict:
    """Per (i, j): limit of X_iX_j u_k(center) against the independent value.

    Flags: ``converged`` when the errors are non-increasing (above ``noise``)
    over the last three levels, ``insufficient levels`` when k_max < 3 and
    ``non-monotone`` otherwise.  ``constants`` are e_k / sum_{l>=k} omega(rho^l).
    """
    out = {}
    rho = report.config.rho
    omega = report.source.f.omega if report.source is not None else None
    for ij, target in report.exact_hessian.items():
        seq = [r.hessian_center[ij] for r in report.records]
        errs = [abs(a - target) for a in seq]
        entry = {"sequence": seq, "target": target, "errors": errs, "extrapolated": _aitken(seq)}
        if report.config.k_max < 3:
            entry["flag"] = "insufficient levels"
        else:
            tail = errs[-3:]
            ok = all(b <= a + noise for a, b in zip(tail, tail[1:])) or max(tail) <= noise
            entry["flag"] = "converged" if ok else "non-monotone"
        if omega is not None:
            consts = []
            for k, e in enumerate(errs):
                t = _tail_sum(omega, rho, k)
                consts.append(e / t if t > 0 else (0.0 if e <= NULL_TOL else math.inf))
            entry["constants"] = consts
        out[ij] = entry
    return out


# the three-term split ----------------------------------------------------------------


def split_level(d0: float, rho: float = 0.5) -> int:
    """k with rho^(2k+4) <= d0 <= rho^(2k+3), clipped at 0."""
    if not (0 < d0 < 1):
        raise ValueError("need 0 < d0 < 1")
    k = math.ceil((math.log(d0) / math.log(rho) - 4) / 2)
    return max(k, 0)


@dataclass
class SplitRecord:
    k: int
    d0: float
    I1: float
    I2: float
    I3: float
    lhs: float
    rhs: float
    ratio: float
    triangle_ok: bool
    I1_chain: float  # |X u(xi0) - X u'_k(xi0)| + |X u'_k(xi0) - X u_k(xi0)|

    def to_dict(self) -> dict:
        return asdict(self)


def split_estimate(config: CascadeConfig, xi0, i: int = 0, j: int = 0, k: int | None = None,
                   base: CascadeReport | None = None, translated: CascadeReport | None = None,
                   source: Source | None = None) -> SplitRecord:
    """I1 + I2 + I3 at the level chosen from d0 = |xi0|, with the integral bound as rhs."""
    spec = config.spec
    xi0 = np.asarray(xi0, dtype=float)
    d0 = float(gauge_norm(spec, xi0))
    if k is None:
        k = split_level(d0, config.rho)
    if k > config.k_max:
        raise CascadeError(f"level {k} is beyond k_max = {config.k_max}")
    cfg = replace(config, xi0=tuple(float(v) for v in xi0))
    base = base or run_cascade(cfg, source)
    source = base.source
    lvl = base.levels[k]
    ij = (i, j)
    hess_k_xi0 = float(sample(lvl.d2[ij], xi0[None, :], strict=False)[0])
    if not math.isfinite(hess_k_xi0):
        raise CascadeError(f"xi0 lies outside the derivative mask of level {k}")
    hess_k_0 = base.records[k].hessian_center[ij]
    true_0 = base.exact_hessian[ij]
    true_xi0 = float(np.asarray(source.hessian(i, j, xi0[None, :]))[0])
    I1 = abs(true_xi0 - hess_k_xi0)
    I2 = abs(hess_k_xi0 - hess_k_0)
    I3 = abs(hess_k_0 - true_0)
    lhs = abs(true_xi0 - true_0)
    f = source.f
    rhs = float(schauder_rhs(d0, f.omega, source.sup_u, f.sup).value) if d0 > 0 else 0.0
    translated = translated or translated_cascade(cfg, base)
    up = translated.records[k].hessian_center[ij]
    I1_chain = abs(true_xi0 - up) + abs(up - hess_k_xi0)
    return SplitRecord(k, d0, I1, I2, I3, lhs, rhs, _ratio(lhs, rhs),
                       bool(I1 + I2 + I3 + 1e-12 >= lhs), I1_chain)


# the main estimate on sampled pairs -------------------------------------------------------


@dataclass
class PairData:
    xi: np.ndarray
    eta: np.ndarray
    d: np.ndarray
    lhs: np.ndarray
    rhs: dict  # form name -> array
    chain_rhs: np.ndarray
    links: np.ndarray

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        dim = self.xi.shape[1]
        forms = sorted(self.rhs)
        w.writerow([f"xi{k}" for k in range(dim)] + [f"eta{k}" for k in range(dim)]
                   + ["d", "lhs"] + [f"rhs_{f}" for f in forms] + ["rhs_chain", "links"])
        for p in range(len(self.d)):
            w.writerow([repr(float(v)) for v in self.xi[p]] + [repr(float(v)) for v in self.eta[p]]
                       + [repr(float(self.d[p])), repr(float(self.lhs[p]))]
                       + [repr(float(self.rhs[f][p])) for f in forms]
                       + [repr(float(self.chain_rhs[p])), int(self.links[p])])
        return buf.getvalue()


@dataclass
class TheoremReport:
    n: int
    rhs_kind: str
    alpha: float | None
    sup_u: float
    sup_f: float
    holder_norm: float | None
    constants: dict  # form -> C hat
    chain_constant: float
    pairs: PairData = field(repr=False)

    def to_dict(self) -> dict:
        return _clean({
            "n": self.n, "rhs_kind": self.rhs_kind, "alpha": self.alpha, "sup_u": self.sup_u,
            "sup_f": self.sup_f, "holder_norm": self.holder_norm, "constants": self.constants,
            "chain_constant": self.chain_constant, "pairs": int(len(self.pairs.d)),
        })


def sample_pairs(spec: GroupSpec, rng: np.random.Generator, count: int, radius: float = 0.5,
                 min_scale: float = 1e-3) -> tuple[np.ndarray, np.ndarray]:
    """Pairs in B_radius(0): half independent, half at log-uniform separations."""
    xs, ys = [], []
    need = count
    while need > 0:
        m = max(2 * need, 16)
        xi = ball_points(spec, rng, m, radius)
        far = ball_points(spec, rng, m, radius)
        step = dilate(spec, radius * min_scale ** rng.random(m), sphere_points(spec, rng, m))
        near = multiply(spec, xi, step)
        eta = np.where((np.arange(m) % 2 == 0)[:, None], far, near)
        d = distance(spec, xi, eta)
        ok = (gauge_norm(spec, eta) < radius) & (d > 0) & (d < 1)
        xs.append(xi[ok][:need])
        ys.append(eta[ok][:need])
        need -= len(xs[-1])
    return np.concatenate(xs), np.concatenate(ys)


def chain_points(spec: GroupSpec, xi, eta, links: int) -> np.ndarray:
    """xi = p_0, ..., p_links = eta along the one-parameter subgroup through xi^{-1} eta."""
    z = multiply(spec, -np.asarray(xi, dtype=float), eta)
    s = np.linspace(0.0, 1.0, links + 1)
    return multiply(spec, np.broadcast_to(xi, (links + 1, spec.dim)), s[:, None] * z[None, :])


def theorem_check(config: CascadeConfig, pair_budget: int = 500, n: int | None = None,
                  d0: float | None = None) -> TheoremReport:
    """Empirical constants of the Hessian continuity estimates on B_1/2(0).

    u solves L u = f on B_1(0) with zero boundary data on an n-grid; the
    Hessian differences at sampled pairs are compared with the Dini form,
    the Hoelder form (alpha < 1) or its log-corrected and plain variants
    (alpha = 1), and with the chained Dini form (links of length < d0).
    """
    spec = config.spec
    f = config.test_function
    n = n or config.n_base
    d0 = 1 / (4 * config.b**2) if d0 is None else d0
    pb = build_grid(spec, None, 1.0, n)
    u = factorize(pb).solve(f, 0.0)
    m = spec.horizontal_dim
    D2 = [second_derivative(u, i, j) for i in range(m) for j in range(m)]
    rng = np.random.default_rng(config.seed)
    xi, eta = sample_pairs(spec, rng, pair_budget)
    lhs = np.max([np.abs(sample(D, xi) - sample(D, eta)) for D in D2], axis=0)
    d = distance(spec, xi, eta)
    sup_u, sup_f = u.max_abs(), f.sup
    rhs = {"dini": np.array([float(schauder_rhs(v, f.omega, sup_u, sup_f).value) for v in d])}
    norm = None
    if f.alpha is not None and f.seminorm:
        norm = f.holder_norm()
        if f.alpha < 1:
            rhs["holder"] = np.array([holder_rhs(v, f.alpha, sup_u, norm) for v in d])
        else:
            rhs["log_corrected"] = np.array([holder_rhs(v, 1.0, sup_u, norm) for v in d])
            rhs["holder"] = np.array([holder_rhs(v, 1.0, sup_u, norm, log_corrected=False) for v in d])
    links = np.ones(len(d), dtype=np.int64)
    chain = np.empty(len(d))
    for p in range(len(d)):
        L = 1
        while True:
            pts = chain_points(spec, xi[p], eta[p], L)
            steps = distance(spec, pts[:-1], pts[1:])
            if np.max(steps) < d0:
                break
            L *= 2
        links[p] = L
        chain[p] = sum(float(schauder_rhs(s, f.omega, sup_u, sup_f).value) for s in steps)
    consts = {k: float(np.max(lhs / v)) for k, v in rhs.items()}
    return TheoremReport(n, f.kind, f.alpha, sup_u, sup_f, norm, consts,
                         float(np.max(lhs / chain)), PairData(xi, eta, d, lhs, rhs, chain, links))
