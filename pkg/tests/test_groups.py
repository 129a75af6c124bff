from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from carnot import groups as G
from carnot.checks import bracket_realization_error, group_invariants


def F(*vals):
    return np.array([Fraction(v) for v in vals], dtype=object)


def test_heisenberg_product_is_exact():
    h = G.heisenberg()
    z = G.multiply(h, F(1, 0, 0), F(0, 1, 0))
    assert list(z) == [1, 1, Fraction(1, 2)]
    z = G.multiply(h, F(0, 1, 0), F(1, 0, 0))
    assert list(z) == [1, 1, Fraction(-1, 2)]


def test_engel_product_has_third_order_term():
    e = G.engel()
    # z4 = x4 + y4 + (x1 y3 - x3 y1)/2 + ([x,[x,y]] - [y,[x,y]])/12 in the 4th slot
    x, y = F(1, 0, 0, 0), F(0, 1, 0, 0)
    z = G.multiply(e, x, y)
    assert list(z[:3]) == [1, 1, Fraction(1, 2)]
    assert z[3] == Fraction(1, 12)


def test_dynkin_words_low_order():
    words = dict(G.dynkin_words(2))
    assert words[(0,)] == 1 and words[(1,)] == 1
    # [x, y] appears through both orderings: 1/4 [x, y] - 1/4 [y, x]
    assert words[(0, 1)] == Fraction(1, 4)
    assert words[(1, 0)] == Fraction(-1, 4)


def test_homogeneous_dimension():
    assert G.homogeneous_dimension(G.heisenberg()) == 4
    assert G.homogeneous_dimension(G.heisenberg(2)) == 6
    assert G.homogeneous_dimension(G.engel()) == 7
    assert G.homogeneous_dimension(G.abelian(3)) == 3


def test_gauge_norm_examples(h1):
    assert G.gauge_norm(h1, [3.0, 4.0, 0.0]) == pytest.approx(5.0)
    assert G.gauge_norm(h1, [0.0, 0.0, 16.0]) == pytest.approx(4.0)
    assert G.gauge_norm(h1, np.zeros(3)) == 0.0


def test_dilation_scales_layers(eng):
    p = np.array([1.0, 1.0, 1.0, 1.0])
    np.testing.assert_allclose(G.dilate(eng, 2.0, p), [2, 2, 4, 8])
    with pytest.raises(ValueError):
        G.dilate(eng, 0.0, p)


def test_point_shape_checked(h1):
    with pytest.raises(ValueError):
        G.multiply(h1, np.zeros(2), np.zeros(3))


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(step=2, layer_dims=(2,)),
        dict(step=1, layer_dims=(0,)),
        dict(step=2, layer_dims=(2, 1), brackets=((0, 0, 2, 1),)),
        dict(step=2, layer_dims=(2, 1), brackets=((0, 2, 1, 1),)),
        dict(step=2, layer_dims=(2, 1), brackets=()),
        dict(step=2, layer_dims=(2, 1), brackets=((0, 1, 7, 1),)),
    ],
)
def test_invalid_specs_rejected(kwargs):
    with pytest.raises(G.GroupSpecError):
        G.GroupSpec(**kwargs)


def test_antisymmetric_storage():
    a = G.GroupSpec(2, (2, 1), ((1, 0, 2, -1),))
    assert a.brackets == G.heisenberg().brackets
    assert a.bracket_basis(0, 1) == [(2, 1)]
    assert a.bracket_basis(1, 0) == [(2, -1)]


def test_json_roundtrip(group):
    back = G.GroupSpec.from_json(group.to_json())
    assert back == group
    with pytest.raises(G.GroupSpecError):
        G.GroupSpec.from_dict({"layer_dims": [2, 1]})


def test_named_group_lookup():
    assert G.named_group("engel") == G.engel()
    with pytest.raises(G.GroupSpecError):
        G.named_group("h7")


def test_heisenberg_fields_match_convention(h1):
    X, Y, T = G.left_invariant_fields(h1)
    pts = np.array([[0.3, -0.7, 1.1]])
    np.testing.assert_allclose(X.coefficient_values(pts), [[1, 0, 0.35]])
    np.testing.assert_allclose(Y.coefficient_values(pts), [[0, 1, 0.15]])
    np.testing.assert_allclose(T.coefficient_values(pts), [[0, 0, 1]])


def test_brackets_realized_by_fields(group):
    assert bracket_realization_error(group) == 0


def test_sampled_points_stay_in_ball(group, rng):
    pts = G.ball_points(group, rng, 2000, radius=0.5, center=np.full(group.dim, 0.1))
    d = G.distance(group, np.full(group.dim, 0.1), pts)
    assert np.all(d <= 0.5 + 1e-12)
    s = G.sphere_points(group, rng, 100)
    np.testing.assert_allclose(G.gauge_norm(group, s), 1.0, rtol=1e-12)


def test_ball_points_radial_law(h1, rng):
    # P(|p| <= r) = r^Q
    r = G.gauge_norm(h1, G.ball_points(h1, rng, 40_000))
    assert np.mean(r <= 0.5) == pytest.approx(0.5**4, abs=0.01)


def test_left_translate_poly(eng, rng):
    from carnot.checks import random_polynomial

    P = random_polynomial(eng, 4, rng)
    a = rng.standard_normal(eng.dim)
    Q = G.left_translate_poly(eng, P, a)
    y = rng.standard_normal((5, eng.dim))
    np.testing.assert_allclose(Q(y), P(G.multiply(eng, a, y)), rtol=1e-10, atol=1e-10)


def test_invariant_driver_meets_tolerance(group):
    out = group_invariants(group, trials=200, seed=3)
    for key in ("associativity", "inverse", "identity", "dilation_homomorphism",
                "norm_homogeneity", "left_invariance", "bracket_realization"):
        assert out[key] <= 1e-12, key
    assert 0.5 < out["quasi_triangle_constant"] < 3


# property tests ------------------------------------------------------------------

coords = st.floats(-3, 3, allow_nan=False)
point3 = arrays(np.float64, 3, elements=coords)
point4 = arrays(np.float64, 4, elements=coords)
scale = st.floats(0.05, 20)


@given(point3, point3, point3)
def test_h1_associative(p, q, w):
    h = G.heisenberg()
    lhs = G.multiply(h, G.multiply(h, p, q), w)
    rhs = G.multiply(h, p, G.multiply(h, q, w))
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


@given(point4, point4, point4)
def test_engel_associative(p, q, w):
    e = G.engel()
    lhs = G.multiply(e, G.multiply(e, p, q), w)
    rhs = G.multiply(e, p, G.multiply(e, q, w))
    np.testing.assert_allclose(lhs, rhs, atol=1e-10, rtol=1e-12)


@given(point4)
def test_inverse_is_two_sided(p):
    e = G.engel()
    np.testing.assert_allclose(G.multiply(e, p, G.inverse(e, p)), 0, atol=1e-12)
    np.testing.assert_allclose(G.multiply(e, G.inverse(e, p), p), 0, atol=1e-12)


@given(point4, point4, scale)
def test_dilation_is_automorphism(p, q, r):
    e = G.engel()
    lhs = G.dilate(e, r, G.multiply(e, p, q))
    rhs = G.multiply(e, G.dilate(e, r, p), G.dilate(e, r, q))
    np.testing.assert_allclose(lhs, rhs, rtol=1e-11, atol=1e-9)


@given(point3, scale)
def test_norm_homogeneous(p, r):
    h = G.heisenberg()
    assert G.gauge_norm(h, G.dilate(h, r, p)) == pytest.approx(r * G.gauge_norm(h, p), rel=1e-12, abs=1e-300)


@given(point4)
def test_norm_symmetric(p):
    e = G.engel()
    assert G.gauge_norm(e, G.inverse(e, p)) == pytest.approx(G.gauge_norm(e, p), rel=1e-14)


@given(point3, point3, point3)
def test_distance_left_invariant(w, p, q):
    h = G.heisenberg()
    d1 = G.distance(h, G.multiply(h, w, p), G.multiply(h, w, q))
    assert d1 == pytest.approx(G.distance(h, p, q), rel=1e-9, abs=1e-9)
