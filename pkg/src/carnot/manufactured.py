"""Exact solutions of L u = f used to test the solver and the cascade.

Two families are provided.  ``from_expression`` takes any smooth expression in
the coordinates x0, x1, ... and derives f = L u and X_i X_j u symbolically
from the polynomial field coefficients.  ``power_solution`` covers the
nonsmooth right-hand sides of the modulus library: if u depends on x0 alone
then X_1^2 u = u'' and every other X_i X_j u vanishes, because the first-layer
coefficients of the horizontal fields are constant.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import sympy

from .groups import GroupSpec, horizontal_fields
from .modulus import TestFunction, test_function
from .poly import GradedPolynomial


@dataclass(frozen=True)
class Manufactured:
    """u, f = L u and the horizontal Hessian X_i X_j u as vectorized callables."""

    name: str
    u: Callable
    f: Callable
    hessian: dict = field(repr=False)  # (i, j) -> callable
    rhs: TestFunction | None = field(default=None, repr=False)

    def second(self, i: int, j: int, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return np.asarray(self.hessian[(i, j)](pts), dtype=float) * np.ones(pts.shape[:-1])


def _symbols(spec: GroupSpec):
    return sympy.symbols(f"x0:{spec.dim}", real=True)


def _poly_to_sympy(P: GradedPolynomial, xs) -> sympy.Expr:
    out = sympy.Integer(0)
    for exps, c in P.terms.items():
        term = sympy.nsimplify(c) if not isinstance(c, float) else sympy.Float(c)
        for x, e in zip(xs, exps):
            term = term * x**e
        out += term
    return out


def _vectorize(expr, xs) -> Callable:
    fn = sympy.lambdify(xs, expr, modules="numpy")

    def call(points):
        pts = np.asarray(points, dtype=float)
        return np.asarray(fn(*np.moveaxis(pts, -1, 0)), dtype=float) * np.ones(pts.shape[:-1])

    return call


def sympy_fields(spec: GroupSpec):
    """Horizontal fields as functions acting on sympy expressions."""
    xs = _symbols(spec)
    coefs = [[_poly_to_sympy(a, xs) for a in X.coefficients] for X in horizontal_fields(spec)]

    def make(row):
        return lambda e: sum((c * sympy.diff(e, x) for c, x in zip(row, xs) if c != 0), sympy.Integer(0))

    return xs, [make(row) for row in coefs]


def from_expression(spec: GroupSpec, expression: str, name: str | None = None) -> Manufactured:
    """Manufactured solution from a sympy-parsable expression in x0, x1, ..."""
    xs, X = sympy_fields(spec)
    u = sympy.sympify(expression, locals={str(x): x for x in xs})
    m = spec.horizontal_dim
    hess = {(i, j): sympy.simplify(X[i](X[j](u))) for i in range(m) for j in range(m)}
    f = sympy.simplify(sum(hess[(i, i)] for i in range(m)))
    return Manufactured(
        name or expression,
        _vectorize(u, xs),
        _vectorize(f, xs),
        {k: _vectorize(v, xs) for k, v in hess.items()},
    )


def power_solution(spec: GroupSpec, rhs: TestFunction) -> Manufactured:
    """u = U(x0) with U'' = f for the holder, lipschitz and constant test functions.

    For f = offset + |x0|^a the solution is offset x0^2/2 + |x0|^(a+2)/((a+1)(a+2)).
    """
    if rhs.kind == "constant":
        a = None
    elif rhs.kind in ("holder", "lipschitz"):
        a = float(rhs.alpha)
    else:
        raise ValueError(f"no closed-form solution for {rhs.kind!r}; use solved mode")
    c0 = float(rhs.offset)

    def u(points):
        x = np.asarray(points, dtype=float)[..., 0]
        out = 0.5 * c0 * x * x
        if a is not None:
            out = out + np.abs(x) ** (a + 2) / ((a + 1) * (a + 2))
        return out

    m = spec.horizontal_dim
    zero = lambda p: np.zeros(np.asarray(p).shape[:-1])  # noqa: E731
    hess = {(i, j): zero for i in range(m) for j in range(m)}
    hess[(0, 0)] = rhs
    return Manufactured(f"power[{rhs.kind}]", u, rhs, hess, rhs)


def quadratic_solution(spec: GroupSpec, f0: float = 1.0) -> Manufactured:
    """u = f0 x0^2 / 2, the frozen-coefficient solution for constant data."""
    return power_solution(spec, test_function("constant", offset=f0))


def harmonic_solution(spec: GroupSpec) -> Manufactured:
    """u = x0 x1, which is L-harmonic on every group with two horizontal directions."""
    return from_expression(spec, "x0*x1", "x0*x1")
