"""Experiment drivers shared by the command line and the acceptance suite.

Every function is deterministic given its seed and returns plain dictionaries
of numbers so the results can be serialized as they are.
"""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .calculus import EXACT, remainder_slope, taylor_poly
from .fitting import observed_orders, spread
from .groups import (
    GroupSpec,
    ball_points,
    dilate,
    distance,
    gauge_norm,
    horizontal_fields,
    inverse,
    left_invariant_fields,
    multiply,
)
from .lemmas import (
    bump,
    de_giorgi_check,
    de_giorgi_sequence,
    harmonic_derivative_bound,
    max_principle_check,
    mean_value_ratios,
    random_bounded_rhs,
    smooth_library,
    sobolev_ratio,
)
from .manufactured import from_expression
from .poly import GradedPolynomial, coordinates, monomial_exponents
from .solver import build_grid, discretize_L, factorize

TOL_GROUP = 1e-12


def _rel(a, b) -> float:
    return float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(a))))


def group_invariants(spec: GroupSpec, trials: int = 1000, seed: int = 0) -> dict:
    """Maximum errors of the group identities on random samples."""
    rng = np.random.default_rng(seed)
    p, q, w = (rng.standard_normal((trials, spec.dim)) for _ in range(3))
    r = np.exp(rng.uniform(-2, 2, trials))
    zero = np.zeros_like(p)
    pq = multiply(spec, p, q)
    out = {
        "associativity": _rel(multiply(spec, pq, w), multiply(spec, p, multiply(spec, q, w))),
        "inverse": float(np.max(np.abs(multiply(spec, p, inverse(spec, p))))),
        "identity": _rel(multiply(spec, p, zero), p),
        "dilation_homomorphism": _rel(
            dilate(spec, r, pq),
            multiply(spec, dilate(spec, r, p), dilate(spec, r, q)),
        ),
        "norm_homogeneity": _rel(gauge_norm(spec, dilate(spec, r, p)), r * gauge_norm(spec, p)),
        "left_invariance": _rel(
            distance(spec, multiply(spec, w, p), multiply(spec, w, q)), distance(spec, p, q)
        ),
    }
    # quasi-triangle constant on bounded triples
    t = ball_points(spec, rng, 3 * 10_000).reshape(3, 10_000, spec.dim)
    dpw = distance(spec, t[0], t[2])
    via = distance(spec, t[0], t[1]) + distance(spec, t[1], t[2])
    out["quasi_triangle_constant"] = float(np.max(dpw / via))
    out["bracket_realization"] = bracket_realization_error(spec)
    return out


def bracket_realization_error(spec: GroupSpec) -> float:
    """max coefficient error of [X_i, X_j] - sum c X_c over horizontal pairs."""
    fields = left_invariant_fields(spec)
    hor = horizontal_fields(spec)
    worst = 0.0
    for i in range(len(hor)):
        for j in range(i + 1, len(hor)):
            comm = hor[i].commutator(hor[j])
            target = [GradedPolynomial({}, spec.layers) for _ in range(spec.dim)]
            for c, coef in spec.bracket_basis(i, j):
                for k in range(spec.dim):
                    target[k] = target[k] + fields[c].coefficients[k] * coef
            for a, b in zip(comm, target):
                diff = a - b
                if not diff.is_zero():
                    worst = max(worst, max(abs(float(v)) for v in diff.terms.values()))
    return worst


def random_polynomial(spec: GroupSpec, degree: int, rng: np.random.Generator) -> GradedPolynomial:
    monos = monomial_exponents(spec.layers, degree)
    return GradedPolynomial({e: float(rng.uniform(-1, 1)) for e in monos}, spec.layers)


def taylor_checks(spec: GroupSpec, max_degree: int = 4, seed: int = 0, samples: int = 3) -> dict:
    """Projection error of taylor_poly on random polynomials and the exp(x) remainder slope."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        P = random_polynomial(spec, max_degree + 2, rng)
        for n in range(max_degree + 1):
            T = taylor_poly(spec, P, None, n)
            diff = T - P.truncate(n)
            if not diff.is_zero():
                worst = max(worst, max(abs(float(v)) for v in diff.terms.values()))
    x = coordinates(spec.layers)[0]
    slope = remainder_slope(spec, lambda p: np.exp(np.asarray(p)[..., 0]), np.zeros(spec.dim), 2,
                            [2.0**-j for j in range(2, 8)], seed=seed)
    poly_slope = remainder_slope(spec, x * x + 1, np.zeros(spec.dim), 2, [0.5, 0.25, 0.125])
    return {
        "projection_error": worst,
        "exp_remainder_slope": float(slope) if slope != EXACT else math.inf,
        "polynomial_remainder": poly_slope,
    }


def consistency_residual(spec: GroupSpec, n: int = 33) -> dict:
    """Discrete L on nodal x^2/2 minus 1 at full-stencil and at all interior nodes."""
    pb = build_grid(spec, None, 1.0, n)
    H = discretize_L(pb)
    res = np.abs(H.apply(lambda p: 0.5 * np.asarray(p)[..., 0] ** 2) - 1.0)
    return {
        "full_stencil_residual": float(np.max(res[H.full_stencil])),
        "all_nodes_residual": float(np.max(res)),
        "full_stencil_nodes": int(H.full_stencil.sum()),
    }


DEFAULT_EXPRESSION = "sin(x0)*cos(x1) + x0*x2/3 + sin(x2)"


def convergence_study(spec: GroupSpec, ns: Sequence[int] = (17, 33, 65),
                      expression: str = DEFAULT_EXPRESSION) -> dict:
    m = from_expression(spec, expression)
    errs, hs = [], []
    for n in ns:
        pb = build_grid(spec, None, 1.0, n)
        u = factorize(pb).solve(m.f, m.u)
        errs.append(float(np.max(np.abs(u.values - m.u(u.world_points())))))
        hs.append(float(pb.spacing[0]))
    return {"n": list(ns), "h": hs, "errors": errs, "orders": observed_orders(hs, errs)}


def max_principle_study(spec: GroupSpec, ns: Sequence[int] = (33, 65), trials: int = 10,
                        seed: int = 0) -> dict:
    ratios = {}
    for n in ns:
        pb = build_grid(spec, None, 1.0, n)
        fac = factorize(pb)
        rng = np.random.default_rng(seed)
        row = []
        for _ in range(trials):
            f = random_bounded_rhs(spec, rng)
            u = fac.solve(f, 0.0)
            row.append(max_principle_check(pb, u, f, 0.0).ratio)
        ratios[n] = row
    allv = [v for row in ratios.values() for v in row]
    return {
        "ratios": {str(k): v for k, v in ratios.items()},
        "spread_across_f": max(spread(row) for row in ratios.values()),
        "spread_across_n": max(spread(col) for col in zip(*ratios.values())),
        "spread_total": spread(allv),
        "finite": bool(np.all(np.isfinite(allv))),
    }


def sobolev_study(spec: GroupSpec, ns: Sequence[int] = (33, 65), p: float = 2.0) -> dict:
    base = {}
    for n in ns:
        base[n] = sobolev_ratio(build_grid(spec, None, 1.2, n), bump(spec), p)
    n0 = ns[0]
    amp = sobolev_ratio(build_grid(spec, None, 1.2, n0), bump(spec, amplitude=7.5), p)
    scaled = sobolev_ratio(build_grid(spec, None, 0.3, n0), bump(spec, radius=0.25), p)
    ref = base[n0]
    return {
        "ratios": {str(k): v for k, v in base.items()},
        "amplitude_change": abs(amp / ref - 1),
        "scale_change": abs(scaled / ref - 1),
        "refinement_change": abs(base[ns[-1]] / ref - 1),
    }


def mean_value_study(spec: GroupSpec, draws: int = 10_000, seed: int = 0, batches: int = 4,
                     b: float = 1.0) -> dict:
    """Mean value ratios over random (xi, eta, f); C hat per batch and overall."""
    rng = np.random.default_rng(seed)
    lib = smooth_library(spec)
    names = sorted(lib)
    which = rng.integers(0, len(names), draws)
    xi = ball_points(spec, rng, draws)
    eta = ball_points(spec, rng, draws)
    ratios = np.zeros(draws)
    for k, name in enumerate(names):
        sel = which == k
        if sel.any():
            ratios[sel] = mean_value_ratios(spec, lib[name], xi[sel], eta[sel], b=b, seed=seed)
    per_batch = [float(np.max(ratios[i::batches])) for i in range(batches)]
    return {
        "C_hat": float(np.max(ratios)),
        "C_by_batch": per_batch,
        "batch_spread": spread(per_batch),
        "by_function": {n: float(np.max(ratios[which == k])) for k, n in enumerate(names) if (which == k).any()},
        "finite": bool(np.all(np.isfinite(ratios))),
    }


def harmonic_study(spec: GroupSpec, seed: int = 0) -> dict:
    x = coordinates(spec.layers)
    zero = np.zeros(spec.dim)
    return {
        "x0": harmonic_derivative_bound(spec, x[0], zero, 1.0, (0,), seed=seed),
        "x0*x1 r=1": harmonic_derivative_bound(spec, x[0] * x[1], zero, 1.0, (0, 1), seed=seed),
        "x0*x1 r=2": harmonic_derivative_bound(spec, x[0] * x[1], zero, 2.0, (0, 1), seed=seed),
    }


def de_giorgi_study(count: int = 20, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(count):
        C = float(np.exp(rng.uniform(-2, 2)))
        alpha = float(rng.uniform(0.3, 3.0))
        beta = float(rng.uniform(1.1, 4.0))
        phi0 = float(np.exp(rng.uniform(-1, 1)))
        k0 = float(rng.uniform(-1, 1))
        frac = float(rng.uniform(0.3, 1.0))
        seq = de_giorgi_sequence(C, alpha, beta, phi0, k0, gamma=frac * alpha / (beta - 1))
        rows.append({"C": C, "alpha": alpha, "beta": beta, "phi0": phi0, "k0": k0,
                     "gamma": seq.gamma, **de_giorgi_check(seq)})
    return {"sequences": rows, "all_ok": all(r["ok"] and r["recurrence_ratio"] <= 1 + 1e-9 for r in rows)}
