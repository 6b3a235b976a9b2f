import math

import numpy as np
import pytest

from polycycle.builder import (PolycycleSpec, build_main3_family, build_polycycle, saddle_data,
                               verify_invariants)
from polycycle.graphic import ratio_from_eigenvalues
from polycycle.polyalg import wedge


def fd_jacobian(f, x, h=1e-6):
    J = np.empty((2, 2))
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        J[:, k] = (np.array(f(np.array(x) + e)) - np.array(f(np.array(x) - e))) / (2 * h)
    return J


def test_vertices_and_constants():
    b = build_polycycle(PolycycleSpec(3, (2, 3, 0.5)))
    assert np.allclose(b.vertices, [(-0.5, 0.8660254), (-0.5, -0.8660254), (1.0, 0.0)], atol=1e-7)
    assert math.isclose(b.sin_theta, 0.8660254, abs_tol=1e-7)
    # distance from a vertex to the opposite side of the inscribed triangle
    p1 = b.vertex(1)
    assert math.isclose(b.m_const, b.line(2)(p1), rel_tol=1e-12)
    assert math.isclose(b.m_const, 1.5, abs_tol=1e-12)


def test_eigenvalues_at_p1():
    b = build_polycycle(PolycycleSpec(3, (2, 3, 0.5)))
    ev = np.sort(np.linalg.eigvals(fd_jacobian(b.field, b.vertex(1))).real)
    assert np.allclose(ev, (-2.5980762, 1.2990381), atol=1e-6)
    neg, pos, r = saddle_data(b, 1)
    assert math.isclose(neg, -2.598076211353316, rel_tol=1e-9)
    assert math.isclose(ratio_from_eigenvalues(neg, pos), 2.0, rel_tol=1e-12)


def test_saddle_data_examples():
    b = build_polycycle(PolycycleSpec(3, (1, 1, 1)))
    for s in (1, 2, 3):
        neg, pos, _ = saddle_data(b, s)
        assert math.isclose(neg, -pos, rel_tol=1e-12)
    b4 = build_polycycle(PolycycleSpec(4, (2, 0.5, 3, 1 / 3)))
    assert abs(saddle_data(b4, 3)[2] - 3) < 1e-10
    ev = np.sort(np.linalg.eigvals(b4.field.jacobian(b4.vertex(3))).real)
    assert abs(-ev[0] / ev[1] - 3) < 1e-10
    with pytest.raises(IndexError):
        saddle_data(b4, 5)


def test_spec_validation():
    with pytest.raises(ValueError):
        PolycycleSpec(2, (1, 1))
    with pytest.raises(ValueError):
        PolycycleSpec(3, (1, -1, 1))
    with pytest.raises(ValueError):
        PolycycleSpec(3, (1, 1))


@pytest.mark.parametrize("orientation", ["cw", "ccw"])
def test_structural_invariants_random(orientation, rng):
    for _ in range(10):
        n = int(rng.integers(3, 9))
        r = tuple(np.exp(rng.uniform(np.log(0.2), np.log(5), n)))
        b = build_polycycle(PolycycleSpec(n, r, orientation))
        rep = verify_invariants(b)
        assert rep["ok"], rep
        assert b.field.degree <= n
        assert math.isclose(b.sin_theta, math.sin(2 * math.pi / n), abs_tol=1e-12)
        assert b.m_const > 0
        for s in range(1, n + 1):
            assert abs(saddle_data(b, s)[2] - r[s - 1]) < 1e-8
        # A_s stays positive (clockwise) along its closed edge
        if orientation == "cw":
            for s in range(1, n + 1):
                p, q = np.array(b.vertex(s)), np.array(b.vertex(s + 1))
                vals = [b.factor(s)(p + t * (q - p)) for t in np.linspace(0, 1, 21)]
                assert min(vals) > 0


def test_from_json_roundtrip():
    b = build_polycycle(PolycycleSpec(4, (2, 0.5, 3, 1 / 3)))
    c = type(b).from_json(b.to_json())
    assert c.field.p == b.field.p and c.field.q == b.field.q


def test_main3_family():
    b = build_polycycle(PolycycleSpec(3, (2, 3, 0.5)))
    fam = build_main3_family(b)
    rng = np.random.default_rng(0)
    pts = rng.uniform(-1, 1, (100, 2))
    zero = fam.field_at((0.0, 0.0, 0.0))
    assert all(zero(p) == b.field(p) for p in pts)
    # H_1 = l_2 l_3 vanishes on those lines
    H1 = fam.deformations[0][0]
    for s in (2, 3):
        line = b.line(s)
        p, q = np.array(b.vertex(s)), np.array(b.vertex(s + 1))
        assert max(abs(H1(*(p + t * (q - p)))) for t in np.linspace(-1, 2, 31)) < 1e-12
    for env, _ in fam.deformations:
        assert env.degree == 2
    assert fam.field_at((0.1, -0.2, 0.3)).degree <= 3
    # wedge identity along the edge of l_1
    p, q = np.array(b.vertex(1)), np.array(b.vertex(2))
    for t in np.linspace(0.05, 0.95, 19):
        x = p + t * (q - p)
        lhs = wedge(b.field(x), fam.deformation(0, x))
        rhs = H1(*x) ** 2 * b.factor(1)(x)
        assert abs(lhs - rhs) <= 1e-9 * abs(rhs)
