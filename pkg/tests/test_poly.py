from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from carnot.poly import GradedPolynomial, coordinates, iter_monomials, monomial_exponents

W = (1, 1, 2)


def test_degree_bookkeeping():
    x, y, t = coordinates(W)
    assert (x * y).degree == 2
    assert t.degree == 2
    assert (x * t + y).degree == 3
    assert not (x * t + y).is_homogeneous()
    assert (x * t).is_homogeneous()
    assert GradedPolynomial({}, W).degree == -1


def test_monomial_degrees_up_to_five():
    for n in range(6):
        for P in iter_monomials(W, n):
            assert 0 <= P.degree <= n
            assert P.is_homogeneous()


def _generating_count(weights, n):
    # coefficients of prod 1/(1 - t^w), accumulated up to degree n
    c = np.zeros(n + 1, dtype=int)
    c[0] = 1
    for w in weights:
        for d in range(w, n + 1):
            c[d] += c[d - w]
    return int(c.sum())


@pytest.mark.parametrize("weights", [(1, 1, 2), (1, 1, 2, 3), (1, 1, 1, 1, 2)])
def test_monomial_count_matches_generating_function(weights):
    for n in range(7):
        assert len(monomial_exponents(weights, n)) == _generating_count(weights, n)


def test_arithmetic_and_truncation():
    x, y, t = coordinates(W)
    P = (x + y) ** 2 - 2 * x * y
    assert P == x * x + y * y
    assert (P + t * x).truncate(2) == P
    assert (P + t * x).homogeneous_part(3) == t * x
    assert (3 - x).constant_term() == 3
    assert (x * 2 / 4).coefficient((1, 0, 0)) == 0.5


def test_exact_fraction_coefficients():
    x, y, t = coordinates(W)
    P = x * Fraction(1, 3) + t * Fraction(2, 3)
    pts = np.array([Fraction(3), Fraction(0), Fraction(3, 2)], dtype=object)
    assert P(pts) == 2


def test_diff_and_compose():
    x, y, t = coordinates(W)
    P = x**3 * t + y
    assert P.diff(0) == 3 * x**2 * t
    assert P.diff(2) == x**3
    Q = P.compose([y, x, t])
    assert Q == y**3 * t + x


def test_restrict_drops_trailing_coordinates():
    x, y, t = coordinates(W)
    assert (x * y + t).restrict(2) == coordinates((1, 1))[0] * coordinates((1, 1))[1]


def test_shape_errors():
    with pytest.raises(ValueError):
        GradedPolynomial({(1, 0): 1.0}, W)
    with pytest.raises(ValueError):
        coordinates(W)[0](np.zeros(2))


def test_json_roundtrip():
    x, y, t = coordinates(W)
    P = 0.5 * x * t - y**2 + 3
    assert GradedPolynomial.from_json(P.to_json()) == P


def test_chop_is_relative():
    x, _, _ = coordinates(W)
    P = x * 1e6 + 1e-9
    assert P.chop(1e-16) == P
    assert P.chop(1e-13) == x * 1e6


small = st.integers(-4, 4)


@given(st.lists(small, min_size=6, max_size=6), st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2))
def test_evaluation_is_ring_homomorphism(c, a, b, s):
    x, y, t = coordinates(W)
    P = c[0] * x + c[1] * y * t + c[2]
    Q = c[3] * t**2 + c[4] * x * y + c[5]
    pt = np.array([a, b, s])
    assert (P * Q)(pt) == pytest.approx(P(pt) * Q(pt), abs=1e-9)
    assert (P - Q)(pt) == pytest.approx(P(pt) - Q(pt), abs=1e-12)


@given(st.lists(small, min_size=4, max_size=4))
def test_product_degree_is_additive(c):
    x, y, t = coordinates(W)
    P = c[0] * x * t + c[1] * y
    Q = c[2] * t + c[3] * x * y
    if P.is_zero() or Q.is_zero():
        return
    assert (P * Q).degree == P.degree + Q.degree
