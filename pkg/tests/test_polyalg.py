import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from polycycle.builder import PolycycleSpec, build_polycycle
from polycycle.polyalg import (AffineForm, LineForm, Poly2, VectorField2, divergence,
                               eval_field, wedge)

X1, X2 = Poly2.x1(), Poly2.x2()
finite = st.floats(-10, 10, allow_nan=False)
terms = st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4), st.floats(-5, 5, allow_nan=False)),
                 max_size=8)


def test_terms_are_canonical():
    p = Poly2([(1, 0, 2.0), (1, 0, -2.0), (0, 2, 3.0), (0, 2, 1.0), (0, 0, 0.0)])
    assert p.terms == ((0, 2, 4.0),)


def test_rejects_bad_terms():
    with pytest.raises(ValueError):
        Poly2([(0, 0, math.inf)])
    with pytest.raises(ValueError):
        Poly2([(-1, 0, 1.0)])


def test_eval_examples():
    assert eval_field(VectorField2(X1, X2), (0, 0)) == (0.0, 0.0)
    assert eval_field(VectorField2(X1 ** 2, X1 * X2), (2, 3)) == (4.0, 6.0)


def test_vertex_is_singular():
    b = build_polycycle(PolycycleSpec(3, (2, 3, 0.5)))
    assert np.allclose(eval_field(b.field, (1.0, 0.0)), 0.0, atol=1e-10)


def test_divergence_examples():
    assert divergence(VectorField2(X1, X2), (0.3, -2)) == 2.0
    assert divergence(VectorField2(-X2, X1), (1.7, 0.2)) == 0.0


def test_divergence_matches_central_differences():
    b = build_polycycle(PolycycleSpec(3, (2, 3, 0.5)))
    for x in [(0.0, 0.0), (0.2, -0.3), (-0.4, 0.1)]:
        h = 1e-5
        fd = ((b.field((x[0] + h, x[1]))[0] - b.field((x[0] - h, x[1]))[0])
              + (b.field((x[0], x[1] + h))[1] - b.field((x[0], x[1] - h))[1])) / (2 * h)
        exact = divergence(b.field, x)
        assert abs(fd - exact) < 1e-6 * max(1.0, abs(exact))


def test_wedge_examples():
    assert wedge((1, 0), (0, 1)) == 1
    assert wedge((3.7, -2.1), (3.7, -2.1)) == 0
    assert wedge((2, 3), (4, 5)) == -2


@given(finite, finite, finite, finite)
def test_wedge_antisymmetric(a, b, c, d):
    assert wedge((a, b), (c, d)) == -wedge((c, d), (a, b))


@settings(max_examples=60)
@given(terms, terms, finite, finite)
def test_ring_operations_evaluate_pointwise(t1, t2, x, y):
    p, q = Poly2(t1), Poly2(t2)
    scale = 1 + abs(p(x, y)) * abs(q(x, y)) + abs(p(x, y)) + abs(q(x, y))
    assert math.isclose((p + q)(x, y), p(x, y) + q(x, y), abs_tol=1e-9 * scale)
    assert math.isclose((p * q)(x, y), p(x, y) * q(x, y), rel_tol=1e-9, abs_tol=1e-6 * scale)
    assert (p - p).is_zero()


@settings(max_examples=60)
@given(terms, st.floats(-2, 2), st.floats(-2, 2))
def test_diff_matches_finite_difference(t, x, y):
    p = Poly2(t)
    h = 1e-6
    fd = (p(x + h, y) - p(x - h, y)) / (2 * h)
    assert abs(p.diff(1)(x, y) - fd) < 1e-4 * (1 + abs(fd))


def test_compose_affine_and_json_roundtrip():
    p = X1 ** 2 * 3.0 + X1 * X2 - 2.0
    m, s = [[0.5, 1.0], [-1.0, 2.0]], [0.25, -0.5]
    q = p.compose_affine(m, s)
    for x in [(0.1, 0.2), (-1.0, 3.0)]:
        y = (m[0][0] * x[0] + m[0][1] * x[1] + s[0], m[1][0] * x[0] + m[1][1] * x[1] + s[1])
        assert math.isclose(q(*x), p(*y), rel_tol=1e-12, abs_tol=1e-12)
    assert Poly2.from_json(p.to_json()) == p
    f = VectorField2(p, q)
    assert VectorField2.from_json(f.to_json()).p == p


def test_perp_and_forms():
    f = VectorField2(X1 + 2.0, X2 * X1)
    g = f.perp()
    assert g((1.0, 2.0)) == (-f((1.0, 2.0))[1], f((1.0, 2.0))[0])
    assert AffineForm(1.0, 2.0, 3.0)((1.0, 1.0)) == 6.0
    line = LineForm.through((0.0, 0.0), (1.0, 0.0), inside=(0.0, 1.0))
    assert line((0.5, 1.0)) > 0 and math.isclose(line.alpha ** 2 + line.beta ** 2, 1.0)
    with pytest.raises(ValueError):
        LineForm(1.0, 1.0, 0.0)
