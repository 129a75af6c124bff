import math

import numpy as np
import pytest
import sympy

from carnot import calculus as C
from carnot.checks import random_polynomial, taylor_checks
from carnot.groups import multiply
from carnot.poly import coordinates


def _to_sympy(P, xs):
    return sum(float(c) * sympy.prod([v**e for v, e in zip(xs, ex)]) for ex, c in P.terms.items())


def test_heisenberg_field_examples(h1):
    x, y, t = coordinates(h1.layers)
    X, Y, T = (0,), (1,), (2,)
    assert C.apply_word(h1, X, t) == -0.5 * y
    assert C.apply_word(h1, Y, t) == 0.5 * x
    assert C.apply_word(h1, (0, 1), t) == 0.5 + 0 * x
    # [X, Y] = T on any polynomial
    P = x * x * t + y * t * t
    comm = C.apply_word(h1, (0, 1), P) - C.apply_word(h1, (1, 0), P)
    assert comm == C.apply_word(h1, T, P)


def test_sublaplacian_examples(h1, eng):
    x, y, t = coordinates(h1.layers)
    assert C.sublaplacian_apply(h1, x * x / 2) == 1 + 0 * x
    assert C.sublaplacian_apply(h1, x * y).is_zero()
    assert C.sublaplacian_apply(h1, t).is_zero()
    assert C.sublaplacian_apply(h1, t * t) == (x * x + y * y) / 2
    e = coordinates(eng.layers)
    assert C.sublaplacian_apply(eng, e[0] * e[0] / 2) == 1 + 0 * e[0]


def test_heisenberg_fields_closed_form(h1, rng):
    x, y, t = sympy.symbols("x y t")
    P = random_polynomial(h1, 4, rng)
    expr = _to_sympy(P, (x, y, t))
    closed = [
        sympy.diff(expr, x) - y / 2 * sympy.diff(expr, t),
        sympy.diff(expr, y) + x / 2 * sympy.diff(expr, t),
    ]
    for i, target in enumerate(closed):
        mine = _to_sympy(C.apply_word(h1, (i,), P), (x, y, t))
        diff = sympy.Poly(sympy.expand(mine - target), x, y, t)
        assert all(abs(float(c)) < 1e-12 for c in diff.coeffs())


def test_fields_are_right_translation_derivatives(group, rng):
    # X_c P(p) = d/ds P(p * exp(s e_c)) at s = 0
    P = random_polynomial(group, 4, rng)
    pts = rng.uniform(-0.7, 0.7, (6, group.dim))
    h = 1e-5
    for c in range(group.dim):
        e = np.zeros(group.dim)
        e[c] = h
        fd = (P(multiply(group, pts, e)) - P(multiply(group, pts, -e))) / (2 * h)
        np.testing.assert_allclose(C.apply_word(group, (c,), P)(pts), fd, atol=1e-7)


def test_word_order(eng):
    assert C.word_order(eng, (0, 1)) == 2
    assert C.word_order(eng, (2, 3)) == 5
    assert C.word_order(eng, ()) == 0


def test_word_lowers_degree(group, rng):
    P = random_polynomial(group, 5, rng).homogeneous_part(5)
    for w in [(0,), (1, 0), (0, 0, 1), (group.dim - 1,)]:
        Q = C.apply_word(group, w, P)
        assert Q.is_zero() or (Q.is_homogeneous() and Q.degree == 5 - C.word_order(group, w))


def test_pbw_words_are_ordered(eng):
    words = C.pbw_words(eng, 4)
    assert all(list(w) == sorted(w) for w in words)
    assert len(set(words)) == len(words)
    assert [len(C.pbw_words(eng, n)) for n in range(5)] == [1, 3, 7, 14, 25]


def test_pbw_counts_heisenberg(h1):
    assert [len(C.pbw_words(h1, n)) for n in range(5)] == [1, 3, 7, 13, 22]


def test_taylor_examples(h1):
    x, y, t = coordinates(h1.layers)
    P = C.taylor_poly(h1, x * y + t * t + 3, None, 2)
    assert P.allclose(x * y + 3)
    # exp(x) at the origin to order 2
    T = C.taylor_poly(h1, lambda p: np.exp(np.asarray(p)[..., 0]), None, 2)
    assert T.allclose(1 + x + x * x / 2, atol=1e-6)


def test_taylor_matches_words_off_origin(group, rng):
    P = random_polynomial(group, 4, rng)
    xi = rng.uniform(-0.5, 0.5, group.dim)
    T = C.taylor_poly(group, P, xi, 3)
    for w in C.pbw_words(group, 3):
        a = C.apply_word(group, w, T)(xi)
        b = C.apply_word(group, w, P)(xi)
        assert a == pytest.approx(b, abs=1e-9)


def test_taylor_is_projection(group):
    out = taylor_checks(group, max_degree=4, seed=5, samples=2)
    assert out["projection_error"] <= 1e-10
    assert out["polynomial_remainder"] == C.EXACT


def test_remainder_slope_exp(h1):
    f = lambda p: np.exp(np.asarray(p)[..., 0])
    slope = C.remainder_slope(h1, f, np.zeros(3), 2, [2.0**-j for j in range(2, 8)])
    assert slope == pytest.approx(3.0, abs=0.15)
    slope1 = C.remainder_slope(h1, f, np.zeros(3), 1, [2.0**-j for j in range(2, 8)])
    assert slope1 == pytest.approx(2.0, abs=0.15)


def test_remainder_slope_translated(h1):
    f = lambda p: np.sin(np.asarray(p)[..., 0]) + np.asarray(p)[..., 2]
    xi = np.array([0.2, -0.1, 0.3])
    slope = C.remainder_slope(h1, f, xi, 2, [2.0**-j for j in range(2, 7)])
    assert slope >= 2.8


def test_finite_difference_word_derivative(eng, rng):
    P = random_polynomial(eng, 4, rng)
    pts = rng.uniform(-0.5, 0.5, (4, eng.dim))
    for w in [(0,), (1,), (0, 1), (2,)]:
        fd = C.word_derivative(eng, P, pts, w)
        np.testing.assert_allclose(fd, C.derivative(eng, P, pts, w), atol=1e-5)


def test_horizontal_gradient_left_invariant(h1, rng):
    # X_i (f o L_a) = (X_i f) o L_a
    f = lambda p: np.sin(np.asarray(p)[..., 2]) * np.asarray(p)[..., 0]
    a = np.array([0.3, 0.2, -0.4])
    pts = rng.uniform(-0.3, 0.3, (5, 3))
    g = lambda p: f(multiply(h1, a, p))
    np.testing.assert_allclose(
        C.horizontal_gradient(h1, g, pts), C.horizontal_gradient(h1, f, multiply(h1, a, pts)), atol=1e-7
    )


def test_taylor_error_on_nan(h1):
    with pytest.raises(C.TaylorError):
        C.taylor_poly(h1, lambda p: np.full(np.shape(p)[:-1], math.nan), None, 1)
