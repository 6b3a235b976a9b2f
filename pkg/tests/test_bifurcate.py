import math

import numpy as np
import pytest

from polycycle.bifurcate import (INNER, BreakError, ModelMapDomainError, ModelMapSpec,
                                 PolycycleFlow, PolycycleReturn, bypass_displacement,
                                 check_without_contact, detect_cycles, detect_sigma0,
                                 displacement_vector, hausdorff_distance, model_map_eval,
                                 model_map_roots, model_map_search, offset_polygon,
                                 return_side, solve_connection_break, trapping_curve)
from polycycle.builder import PolycycleSpec, build_polycycle
from polycycle.flow import (Escaped, FlowError, branch_toward, find_saddle, integrate,
                            shoot_separatrix)
from polycycle.graphic import delta_max
from polycycle.polyalg import Poly2, VectorField2

from conftest import closed

x1, x2 = Poly2.x1(), Poly2.x2()


def circle(r=1.0, n=256, c=(0.0, 0.0)):
    t = np.linspace(0, 2 * np.pi, n, endpoint=False)
    return np.column_stack([c[0] + r * np.cos(t), c[1] + r * np.sin(t)])


def inside(built, pts, tol=0.0):
    return np.all([[l(p) > -tol for l in built.lines] for p in pts], axis=1)


# --- sigma_0 --------------------------------------------------------------------------

@pytest.mark.parametrize("ratios", [(2, 2, 2), (0.5, 0.5, 0.5), (2, 1 / 3, 4), (2, 3, 0.5)])
def test_sigma0_consistent(ratios):
    b = build_polycycle(PolycycleSpec(3, ratios))
    assert detect_sigma0(b, 1e-3) == detect_sigma0(b, 5e-4)


def test_sigma0_other_side_escapes(stable_triangle):
    b = stable_triangle
    side = return_side(b, detect_sigma0(b))
    flow = PolycycleFlow(b)
    with pytest.raises(FlowError):
        flow.return_map(1, -side * 1e-3)
    # the non-returning seed leaves the polygon neighbourhood
    x0 = b.section(1).point(-side * 1e-3)
    try:
        end = integrate(b.field, x0, (0.0, 400.0), bound=3.0, record=False).final
    except FlowError as exc:  # escaped, or parked at an equilibrium outside
        end = exc.state
    assert not inside(b, [end])[0]
    assert hausdorff_distance([end], closed(b.polygon())) > 0.1


def test_sigma0_orientation_independent():
    cw = build_polycycle(PolycycleSpec(3, (2, 1 / 3, 4), "cw"))
    ccw = build_polycycle(PolycycleSpec(3, (2, 1 / 3, 4), "ccw"))
    assert detect_sigma0(cw) == detect_sigma0(ccw) == INNER


# --- displacements --------------------------------------------------------------------

@pytest.mark.parametrize("ratios", [(2, 1 / 3, 4), (0.5, 2, 3, 0.25)])
def test_displacement_vanishes_at_zero(ratios):
    from polycycle.builder import build_main3_family
    b = build_polycycle(PolycycleSpec(len(ratios), ratios))
    if b.n == 3:
        dv = displacement_vector(build_main3_family(b), b, (0.0,) * 3)
    else:
        from polycycle.melnikov import bump_family
        dv = displacement_vector(bump_family(b), b, (0.0,) * b.n)
    assert np.abs(dv.d).max() < 1e-7
    assert np.array_equal(dv.d, dv.b_u - dv.b_s)


def test_displacement_first_order(cascade):
    b, fam, M = cascade["built"], cascade["family"], cascade["melnikov"].matrix
    h = 1e-5
    for i in range(3):
        mu = np.zeros(3)
        mu[i] = h
        d = displacement_vector(fam, b, mu).d
        assert abs(d[i] - h * M[i, i]) < 1e-3 * abs(h * M[i, i])
        others = np.delete(d, i)
        assert np.abs(others).max() < 1e-2 * abs(d[i])
        d_neg = displacement_vector(fam, b, -mu).d
        assert np.sign(d_neg[i]) == -np.sign(d[i])


# --- bypass ---------------------------------------------------------------------------

def test_bypass_boundary_agrees(cascade):
    b, fam, M = cascade["built"], cascade["family"], cascade["melnikov"].matrix
    plan = cascade["plan"]
    e = next(i for i in range(1, 4) if b.downstream_vertex(i) == plan.expelled)
    side = return_side(b, detect_sigma0(b))
    vals = {}
    for sign in (1, -1):
        mu = np.array([2e-6, -1e-6, 3e-6])
        mu[e - 1] = 0.0
        d_e = PolycycleFlow(b, fam, mu).d(e)
        # adjust the edge parameter so side*d_e = sign*1e-9
        mu[e - 1] = (sign * side * 1e-9 - d_e) / M[e - 1, e - 1]
        by = bypass_displacement(fam, b, mu, e)
        assert abs(side * by.d_test - sign * 1e-9) < 2e-10
        vals[sign] = by
    assert vals[1].regime == "bypass" and vals[-1].regime == "unbroken"
    assert abs(vals[1].value - vals[-1].value) < 1e-6


def test_bypass_matches_decomposition(cascade):
    b, fam = cascade["built"], cascade["family"]
    side = return_side(b, detect_sigma0(b))
    e = 3
    nxt = b.next_edge(e)
    mu = np.array([1e-6, -2e-6, side * 1e-4])
    flow = PolycycleFlow(b, fam, mu)
    by = bypass_displacement(fam, b, mu, e, flow=flow)
    assert by.regime == "bypass" and by.which == "r_n_gt_1"
    d_e = flow.d(e)
    # direct transition from the unstable separatrix point on section e
    carried = flow.leg(e, flow.b_u(e))
    direct = carried - flow.b_s(nxt)
    via_dulac = flow.d(nxt) + side * flow.dulac(e, side * d_e, side)
    assert abs(by.value - direct) < 1e-7
    assert abs(by.value - via_dulac) < 1e-7


def test_bypass_small_ratio_regime():
    from polycycle.builder import build_main3_family
    b = build_polycycle(PolycycleSpec(3, (2, 3, 0.5)))
    fam = build_main3_family(b)
    side = return_side(b, detect_sigma0(b))
    e = next(i for i in range(1, 4) if b.downstream_vertex(i) == 3)
    nxt = b.next_edge(e)
    flow0 = PolycycleFlow(b, fam, np.zeros(3))
    mu = np.zeros(3)
    mu[nxt - 1] = 1e-4
    d_next = PolycycleFlow(b, fam, mu).d(nxt)
    if side * d_next > 0:
        mu = -mu
    by = bypass_displacement(fam, b, mu, e)
    assert by.which == "r_n_lt_1" and by.regime == "bypass"
    unbroken = bypass_displacement(fam, b, -mu, e)
    assert unbroken.regime == "unbroken"
    with pytest.raises(ValueError):
        bypass_displacement(None, build_polycycle(PolycycleSpec(3, (2, 1, 0.5))), (), 2)
    assert flow0.d(1) == pytest.approx(0, abs=1e-7)


# --- connection breaking --------------------------------------------------------------

@pytest.fixture(scope="module")
def broken(cascade):
    return solve_connection_break(cascade["family"], cascade["built"], cascade["plan"], 1e-4,
                                  melnikov=cascade["melnikov"])


def test_break_trivial_root(cascade):
    res = solve_connection_break(cascade["family"], cascade["built"], cascade["plan"], 0.0,
                                 melnikov=cascade["melnikov"])
    assert np.abs(res.mu).max() == 0.0 and res.residual < 1e-7


def test_break_converges(cascade, broken):
    b, fam = cascade["built"], cascade["family"]
    assert broken.residual < 1e-9
    assert broken.expelled == 3
    assert broken.regime == "bypass"
    # independent re-verification with a fresh flow
    flow = PolycycleFlow(b, fam, broken.mu)
    e = broken.free_index
    nxt = b.next_edge(e)
    plain = [i for i in range(1, 4) if i not in (e, nxt)]
    for i in plain:
        assert abs(flow.d(i)) < 1e-9
    assert abs(flow.b_bypass_unstable(e) - flow.b_s(nxt)) < 1e-9
    assert abs(flow.d(e)) > 1e-6


def test_break_connection_in_physical_coordinates(cascade, broken):
    b, fam = cascade["built"], cascade["family"]
    f = fam.field_at(broken.mu)
    e = broken.free_index
    nxt = b.next_edge(e)
    src = find_saddle(f, b.vertex(b.upstream_vertex(e)))
    dst = find_saddle(f, b.vertex(b.downstream_vertex(nxt)))
    sec = b.section(nxt)
    u = shoot_separatrix(f, src, branch_toward(src, "unstable", b.vertex(e)), sec, t_max=400.0)
    s = shoot_separatrix(f, dst, branch_toward(dst, "stable", sec.base), sec, t_max=400.0)
    assert abs(u.s - s.s) < 1e-6


def test_break_first_order_prediction(cascade):
    res = solve_connection_break(cascade["family"], cascade["built"], cascade["plan"], 1e-5,
                                 melnikov=cascade["melnikov"])
    assert np.abs(res.mu - res.prediction).max() <= 0.1 * 1e-5
    assert abs(res.mu[res.free_index - 1]) == 1e-5


def test_break_needs_one_parameter_per_edge(cascade):
    from polycycle.melnikov import PerturbationFamily
    b = cascade["built"]
    fam = PerturbationFamily(b.field, [(Poly2.constant(1.0), (1.0, 0.0))])
    with pytest.raises(ValueError):
        solve_connection_break(fam, b, cascade["plan"], 1e-4)


# --- cycles ---------------------------------------------------------------------------

def test_no_cycle_near_stable_polycycle(stable_triangle):
    b = stable_triangle
    side = return_side(b, detect_sigma0(b))
    cyc = detect_cycles(None, None, tuple(sorted((0.0, side * 0.1))), 32,
                        system=PolycycleReturn(PolycycleFlow(b)), anchor=0.0)
    assert cyc == []


@pytest.fixture(scope="module")
def cycles(cascade, broken):
    b = cascade["built"]
    side = return_side(b, detect_sigma0(b))
    flow = PolycycleFlow(b, cascade["family"], broken.mu)
    search = tuple(sorted((0.0, side * 0.1)))
    return detect_cycles(None, None, search, 64, system=PolycycleReturn(flow),
                         polygon=closed(b.polygon()), anchor=0.0)


def test_post_break_cycle(cycles):
    assert len(cycles) >= 1
    for c in cycles:
        assert c.residual < 1e-10
        assert 0 < c.multiplier < 1
        assert c.closure_gap < 1e-8
        assert c.period > 0


def in_closed_curve(curve, pts):
    """Even-odd rule."""
    c = np.asarray(curve)
    a, b = c, np.roll(c, -1, axis=0)
    out = []
    for x, y in pts:
        cross = (a[:, 1] > y) != (b[:, 1] > y)
        xs = a[:, 0] + (y - a[:, 1]) * (b[:, 0] - a[:, 0]) / np.where(cross, b[:, 1] - a[:, 1], 1)
        out.append(int(np.sum(cross & (xs > x))) % 2 == 1)
    return np.array(out)


def test_cycles_inside_trapping_annulus(cascade, broken, cycles):
    b = cascade["built"]
    f = cascade["family"].field_at(broken.mu)
    tc = trapping_curve(b, f)
    assert tc.verdict and tc.direction == "outward"
    for c in cycles:
        assert np.all(inside(b, c.orbit, tol=1e-12))
        assert not np.any(in_closed_curve(tc.curve, c.orbit))
        assert c.hausdorff_to_polycycle < tc.h + 0.1


def test_cycle_approaches_polycycle(cascade, broken, cycles):
    b = cascade["built"]
    small = solve_connection_break(cascade["family"], b, cascade["plan"], 1e-5,
                                   melnikov=cascade["melnikov"])
    side = return_side(b, detect_sigma0(b))
    flow = PolycycleFlow(b, cascade["family"], small.mu)
    near = detect_cycles(None, None, tuple(sorted((0.0, side * 0.1))), 64,
                         system=PolycycleReturn(flow), polygon=closed(b.polygon()), anchor=0.0)
    assert near and near[0].hausdorff_to_polycycle < cycles[0].hausdorff_to_polycycle


def test_detect_cycles_plain_field():
    # van der Pol style: one attracting cycle crossing the positive x1 axis near 2
    f = VectorField2(x2, -x1 + (1 - x1 * x1) * x2)
    from polycycle.flow import Section
    sec = Section((0.0, 0.0), (1.0, 0.0), half_width=5.0, normal=(0.0, -1.0))
    cyc = detect_cycles(f, sec, (0.5, 3.0), 16)
    assert len(cyc) == 1
    assert abs(cyc[0].fixed_point - 2.0) < 0.05
    assert cyc[0].residual < 1e-10 and 0 < cyc[0].multiplier < 1
    assert abs(cyc[0].period - 6.663) < 0.01
    with pytest.raises(ValueError):
        detect_cycles(f, sec, (1.0, 1.0))


# --- geometry -------------------------------------------------------------------------

def test_hausdorff_examples():
    c = circle()
    assert hausdorff_distance(c, c) == 0.0
    assert abs(hausdorff_distance(c, [(0.0, 0.0)]) - 1) < 1e-3
    assert abs(hausdorff_distance(closed(c), closed(circle(1.1))) - 0.1) < 1e-3
    with pytest.raises(ValueError):
        hausdorff_distance(np.zeros((0, 2)), c)


def test_hausdorff_metric_properties(rng):
    for _ in range(50):
        a, b, c = (rng.normal(size=(int(rng.integers(1, 30)), 2)) for _ in range(3))
        dab = hausdorff_distance(a, b, refine=False)
        assert dab == hausdorff_distance(b, a, refine=False) >= 0
        assert dab <= hausdorff_distance(a, c, refine=False) + hausdorff_distance(c, b, refine=False) + 1e-9


def test_without_contact_examples():
    assert check_without_contact(VectorField2(x1, x2), circle(n=400)) == (True, "outward",
                                                                          pytest.approx(1, abs=1e-3))
    ok, _, margin = check_without_contact(VectorField2(-x2, x1), circle(n=400))
    assert not ok and margin < 1e-2
    ok, direction, _ = check_without_contact(VectorField2(-x1, -x2), circle(n=400)[::-1])
    assert ok and direction == "inward"


def test_without_contact_rotation_invariant():
    f = VectorField2(x1 - x2, x1 + x2)
    base = check_without_contact(f, circle(n=400))
    shifted = check_without_contact(f, np.roll(circle(n=400), 37, axis=0))
    assert base[:2] == shifted[:2] and abs(base[2] - shifted[2]) < 1e-3


def test_trapping_curve_stable_triangle(stable_triangle):
    b = stable_triangle
    tc = trapping_curve(b)
    assert tc.verdict and tc.direction == "outward"
    assert np.all(inside(b, tc.curve))
    # seeds started on the curve move toward the polycycle and stay outside it
    for p in tc.curve[::40]:
        tr = integrate(b.field, p, (0.0, 5.0), record=False)
        assert not in_closed_curve(tc.curve, [tr.final])[0]
        assert inside(b, [tr.final])[0]


def test_offset_polygon_without_contact(stable_triangle):
    """Spec example: the inward offset polygon at 0.05 is without contact.

    It cannot be: the line cofactor changes sign along every edge, so the
    flow crosses each offset line in both directions (see notes/decisions.md).
    """
    ok, direction, _ = check_without_contact(stable_triangle.field,
                                             offset_polygon(stable_triangle, 0.05))
    assert ok and direction == "outward"


# --- model map ------------------------------------------------------------------------

def test_model_map_examples():
    for ratios in [(2,), (2, 0.5, 3), (0.5,)]:
        spec = ModelMapSpec(ratios, (0.0,) * len(ratios))
        assert model_map_roots(spec) == [] or all(r > 0.5 for r in model_map_roots(spec))
    one = ModelMapSpec((2,), (0.01,))
    roots = model_map_roots(one)
    assert len(roots) == 1 and abs(roots[0] - 0.01010205) < 1e-6
    assert model_map_roots(ModelMapSpec((2,), (-0.01,))) == []
    assert model_map_eval(one, 0.1) == pytest.approx(0.01 + 0.01 - 0.1)


def test_model_map_domain_error():
    spec = ModelMapSpec((2, 0.5), (-0.01, 0.0))
    with pytest.raises(ModelMapDomainError) as err:
        model_map_eval(spec, 0.05)
    assert err.value.level == 1
    with pytest.raises(ValueError):
        ModelMapSpec((2, -1), (0, 0))


def test_model_map_dense_agreement():
    for spec in [ModelMapSpec((2,), (0.01,)), ModelMapSpec((2, 0.5), (0.01, -0.004), 1.0, (0, 0.3)),
                 ModelMapSpec((0.5, 2, 3), (0.01, -0.02, 0.003), 1.0, (0, 0.3))]:
        assert len(model_map_roots(spec, 2000)) == len(model_map_roots(spec, 20000))


def test_model_map_two_roots_n2():
    """Spec example: an n=2, ratios (2, 0.5) configuration with two roots.

    The map t -> (t^2 + b1)^(1/2) + b2 - t is strictly monotone wherever it is
    defined, so at most one root exists (see notes/decisions.md).
    """
    best = model_map_search((2, 0.5), 1.0, (0.0, 0.3), 0.05, samples=2000, grid=400, seed=0)
    assert best["count"] >= 2


def test_model_map_search_n3_runs():
    best = model_map_search((2, 0.5, 3), 1.0, (0.0, 0.3), 0.05, samples=300, grid=200, seed=1)
    assert best["count"] >= 0 and len(best["offsets"]) == 3
