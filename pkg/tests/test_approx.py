import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from polycycle.approx import (ApproximationError, BernsteinPoly, BumpSpec, ShiftedBump,
                              bernstein_of, eval_bump, shifted_bump_polynomial, smooth_step)

SPEC = BumpSpec(0.1, 0.3, (0.5, 0.5))
UNIT = (0.0, 0.0, 1.0, 1.0)


def test_bump_examples():
    assert eval_bump(SPEC, (0.5, 0.5)) == 1.0
    assert eval_bump(SPEC, (0.5 + 0.6, 0.5)) == 0.0
    mid = eval_bump(SPEC, (0.5 + 0.2, 0.5))
    assert 0.0 < mid < 1.0
    with pytest.raises(ValueError):
        BumpSpec(0.3, 0.1)


def test_bump_range_and_monotone():
    r = np.linspace(0, 0.5, 501)
    vals = eval_bump(SPEC, (0.5 + r, 0.5 + 0 * r))
    assert vals.min() >= 0 and vals.max() <= 1
    assert np.all(np.diff(vals) <= 1e-15)
    assert smooth_step(0.0) == 0.0 and smooth_step(1.0) == 1.0


def test_bernstein_reproduces_affine(rng):
    pts = rng.uniform(0, 1, (50, 2))
    one = bernstein_of(lambda u, v: np.ones_like(u + v), 7, 5)
    assert np.abs(one(pts[:, 0], pts[:, 1]) - 1).max() < 1e-12
    lin = bernstein_of(lambda u, v: u + 0 * v, 9, 4)
    assert np.abs(lin(pts[:, 0], pts[:, 1]) - pts[:, 0]).max() < 1e-12
    with pytest.raises(ValueError):
        BernsteinPoly((0, 3), np.zeros((1, 4)))


def test_bernstein_error_decreases():
    F = lambda u, v: eval_bump(SPEC, (u, v))
    t = np.linspace(0, 1, 200)
    exact = F(t[:, None], t[None, :])
    errs = [np.abs(bernstein_of(F, m, m).grid(t, t) - exact).max() for m in (16, 32, 64)]
    assert errs[0] > errs[1] > errs[2]


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 10 ** 6))
def test_bernstein_range_preserved(m, n, seed):
    rng = np.random.default_rng(seed)
    samples = rng.normal(size=(m + 1, n + 1))
    B = BernsteinPoly((m, n), samples)
    t = np.linspace(0, 1, 33)
    vals = B.grid(t, t)
    assert samples.min() - 1e-12 <= vals.min() and vals.max() <= samples.max() + 1e-12


def test_support_block_matches_dense():
    F = lambda u, v: eval_bump(SPEC, (u, v))
    dense = bernstein_of(F, 40, 40)
    block = bernstein_of(F, 40, 40, support=(0.2, 0.8, 0.2, 0.8))
    t = np.linspace(0, 1, 37)
    assert np.abs(dense.grid(t, t) - block.grid(t, t)).max() < 1e-14


def test_monomial_form_matches():
    B = bernstein_of(lambda u, v: np.sin(u) * v ** 2, 4, 3)
    P = B.to_poly2()
    for u, v in [(0.1, 0.7), (0.5, 0.5), (0.9, 0.2)]:
        assert abs(P(u, v) - B(u, v)) < 1e-12


def test_shifted_sandwich():
    q = shifted_bump_polynomial(SPEC, UNIT, 0.1)
    _, _, qv, phi = q.grid(100)
    assert np.all(phi + 0.025 < qv) and np.all(qv < phi + 0.075)
    assert np.all(qv > 0)
    assert np.all(np.abs(qv - phi) < 0.1)


def test_shifted_monotone_in_eps():
    for eps_bar in (0.3, 0.1):
        hi = shifted_bump_polynomial(SPEC, UNIT, eps_bar)
        lo = shifted_bump_polynomial(SPEC, UNIT, eps_bar / 3)
        _, _, q_hi, phi = hi.grid(100)
        _, _, q_lo, _ = lo.grid(100)
        assert np.all(q_lo < q_hi) and np.all(phi < q_hi)


def test_shifted_order_one_certificate():
    q = shifted_bump_polynomial(BumpSpec(0.2, 0.9, (0.5, 0.5)), UNIT, 1.0, r=1)
    assert len(q.certified_error) == 2
    assert max(q.certified_error) < 0.25


def test_shifted_errors():
    with pytest.raises(ApproximationError):
        shifted_bump_polynomial(SPEC, UNIT, 1e-4, degree_cap=32)
    with pytest.raises(ValueError):
        shifted_bump_polynomial(SPEC, UNIT, 0.0)
    with pytest.raises(ValueError):
        shifted_bump_polynomial(SPEC, (1, 0, 0, 1), 0.1)


def test_shifted_json_roundtrip():
    q = shifted_bump_polynomial(SPEC, (-1.0, -1.0, 1.0, 1.0), 0.2)
    again = ShiftedBump.from_json(json.loads(json.dumps(q.to_json())))
    pts = np.random.default_rng(1).uniform(-1, 1, (40, 2))
    assert np.abs(q(pts[:, 0], pts[:, 1]) - again(pts[:, 0], pts[:, 1])).max() < 1e-14
