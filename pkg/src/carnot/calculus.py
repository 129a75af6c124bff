"""Left-invariant derivatives of polynomials and functions, stratified Taylor polynomials."""
from __future__ import annotations

import itertools
from functools import lru_cache
from typing import Callable, Sequence, Union

import numpy as np

from .fitting import fit_exponent
from .groups import (
    GroupSpec,
    VectorField,
    dilate,
    horizontal_fields,
    left_invariant_fields,
    left_translate_poly,
    multiply,
    sphere_points,
)
from .poly import GradedPolynomial, monomial_exponents

Function = Union[GradedPolynomial, Callable[[np.ndarray], np.ndarray]]

EXACT = "exact"


class TaylorError(RuntimeError):
    pass


def word_order(spec: GroupSpec, word: Sequence[int]) -> int:
    """Weighted order |I|: sum of the layers of the letters."""
    return sum(spec.layers[c] for c in word)


def apply_field(spec: GroupSpec, V: VectorField, P: GradedPolynomial) -> GradedPolynomial:
    return V.apply(P)


def apply_word(spec: GroupSpec, word: Sequence[int], P: GradedPolynomial) -> GradedPolynomial:
    """X^I P = X_{i1}(X_{i2}(... X_{ik} P)); letters are basis indices."""
    fields = left_invariant_fields(spec)
    out = P
    for c in reversed(tuple(word)):
        out = fields[c].apply(out)
    return out


def sublaplacian_apply(spec: GroupSpec, P: GradedPolynomial) -> GradedPolynomial:
    out = GradedPolynomial({}, P.weights)
    for X in horizontal_fields(spec):
        out = out + X.apply(X.apply(P))
    return out


@lru_cache(maxsize=None)
def pbw_words(spec: GroupSpec, n: int) -> tuple[tuple[int, ...], ...]:
    """Non-decreasing words in the basis with weighted order <= n.

    Non-decreasing words are in bijection with exponent vectors, so there are
    exactly as many of them as monomials of homogeneous degree <= n.
    """
    return tuple(
        tuple(c for c, e in enumerate(exps) for _ in range(e))
        for exps in monomial_exponents(spec.layers, n)
    )


@lru_cache(maxsize=None)
def _matching_system(spec: GroupSpec, n: int):
    monos = monomial_exponents(spec.layers, n)
    words = pbw_words(spec, n)
    M = np.empty((len(words), len(monos)))
    for j, e in enumerate(monos):
        mono = GradedPolynomial.monomial(spec.layers, e)
        for i, w in enumerate(words):
            M[i, j] = float(apply_word(spec, w, mono).constant_term())
    return monos, words, M


def word_derivative(spec: GroupSpec, f: Callable, points, word: Sequence[int], h: float | None = None):
    """Estimate X^I f at ``points`` by nested centered differences.

    X_{c1}...X_{ck} f(x) is the mixed partial d^k/dt1..dtk of
    f(x exp(t1 e_c1) ... exp(tk e_ck)) at t = 0.
    """
    pts = np.asarray(points, dtype=float)
    word = tuple(word)
    if not word:
        return np.asarray(f(pts), dtype=float)
    k = len(word)
    if h is None:
        h = np.finfo(float).eps ** (1.0 / (k + 2))
    total = 0.0
    for signs in itertools.product((1.0, -1.0), repeat=k):
        q = pts
        for s, c in zip(signs, word):
            step = np.zeros(spec.dim)
            step[c] = s * h
            q = multiply(spec, q, step)
        total = total + np.prod(signs) * np.asarray(f(q), dtype=float)
    return total / (2.0 * h) ** k


def horizontal_gradient(spec: GroupSpec, f: Callable, points, h: float | None = None) -> np.ndarray:
    """(X_1 f, ..., X_m f) at ``points``; shape (..., m)."""
    return np.stack(
        [word_derivative(spec, f, points, (i,), h) for i in range(spec.horizontal_dim)], axis=-1
    )


def derivative(spec: GroupSpec, f: Function, points, word: Sequence[int]):
    """X^I f at ``points``: symbolic for polynomials, finite differences otherwise."""
    if isinstance(f, GradedPolynomial):
        return apply_word(spec, word, f)(np.asarray(points, dtype=float))
    return word_derivative(spec, f, points, word)


def taylor_poly(spec: GroupSpec, f: Function, xi, n: int) -> GradedPolynomial:
    """Stratified Taylor polynomial P_n(f, xi) as a polynomial in eta.

    At the origin it is the unique polynomial of homogeneous degree <= n whose
    X^I derivatives at 0 agree with those of f for every PBW word |I| <= n.
    Elsewhere it is that polynomial for f(xi . ) composed with xi^{-1} eta.
    """
    xi = np.zeros(spec.dim) if xi is None else np.asarray(xi, dtype=float)
    monos, words, M = _matching_system(spec, n)
    at_origin = not np.any(xi)
    if isinstance(f, GradedPolynomial):
        g = f if at_origin else left_translate_poly(spec, f, xi)
        rhs = np.array([float(apply_word(spec, w, g).constant_term()) for w in words])
    else:
        rhs = np.array([float(word_derivative(spec, f, xi, w)) for w in words])
        if not np.all(np.isfinite(rhs)):
            raise TaylorError("derivative estimate is not finite")
    try:
        coef = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError as exc:
        raise TaylorError("singular Taylor matching system") from exc
    P = GradedPolynomial(
        {e: float(c) for e, c in zip(monos, coef)}, spec.layers
    ).chop(1e-13)
    if at_origin:
        return P
    return left_translate_poly(spec, P, -xi).chop(1e-13)


def remainder_slope(
    spec: GroupSpec,
    f: Function,
    xi,
    n: int,
    radii: Sequence[float],
    samples: int = 256,
    seed: int = 0,
    P: GradedPolynomial | None = None,
):
    """Log-log slope of sup_{d(xi, eta) = r} |f(eta) - P_n(f, xi)(eta)| against r.

    Returns ``EXACT`` when the remainder is at rounding level on every sphere.
    """
    xi = np.asarray(xi, dtype=float)
    if P is None:
        P = taylor_poly(spec, f, xi, n)
    rng = np.random.default_rng(seed)
    dirs = sphere_points(spec, rng, samples)
    scale = max(1.0, float(np.max(np.abs(f(xi[None, :])))))
    sups = []
    for r in radii:
        eta = multiply(spec, xi, dilate(spec, r, dirs))
        sups.append(float(np.max(np.abs(np.asarray(f(eta)) - P(eta)))))
    sups = np.array(sups)
    floor = 1e-12 * scale
    if np.all(sups <= floor):
        return EXACT
    keep = sups > floor
    if keep.sum() < 3:
        raise TaylorError("fewer than three radii above the rounding floor")
    return fit_exponent(zip(np.asarray(radii)[keep], sups[keep])).slope
