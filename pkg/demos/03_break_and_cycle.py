"""One step of the bifurcation mechanism on the (2, 1/3, 4) triangle.

Saddle p3 is expelled: the connection into it is broken with a small
parameter, while the other connection and the bypass connection past p3 are
kept by a quasi-Newton solve.  The surviving two-saddle cycle is unstable.
A curve without contact inside the triangle pushes orbits outward.  A limit
cycle is then trapped between the two, and it shrinks onto the polycycle as
the parameter goes to zero.
"""
from pathlib import Path

import numpy as np

from polycycle import (PolycycleFlow, PolycycleSpec, build_main3_family, build_polycycle,
                       delta_max, detect_cycles, detect_sigma0, melnikov_matrix,
                       solve_connection_break, trapping_curve)
from polycycle.bifurcate import PolycycleReturn, return_side
from polycycle.plot import render_svg

out = Path(__file__).with_name("out")
out.mkdir(exist_ok=True)

built = build_polycycle(PolycycleSpec(3, (2.0, 1 / 3, 4.0)))
fam = build_main3_family(built)
_, plan = delta_max(built.ratios)
mel = melnikov_matrix(fam, built)
side = return_side(built, detect_sigma0(built))
polygon = np.vstack([built.polygon(), built.polygon()[:1]])

for free in (1e-4, 1e-5):
    res = solve_connection_break(fam, built, plan, free, melnikov=mel)
    print(f"free value {free:g}: mu* = {np.array2string(res.mu, precision=3)}, "
          f"residual {res.residual:.1e}, regime {res.regime}")
    print(f"  displacements after the break: {np.array2string(res.displacement.d, precision=3)}")
    flow = PolycycleFlow(built, fam, res.mu)
    cycles = detect_cycles(None, None, tuple(sorted((0.0, side * 0.1))), 64,
                           system=PolycycleReturn(flow), polygon=polygon, anchor=0.0)
    for c in cycles:
        print(f"  cycle: section coordinate {c.fixed_point:.3e}, period {c.period:.1f}, "
              f"multiplier {c.multiplier:.1e}, Hausdorff distance to the polycycle "
              f"{c.hausdorff_to_polycycle:.2e}")
    trap = trapping_curve(built, fam.field_at(res.mu))
    print(f"  trapping curve: {trap.method}, without contact = {trap.verdict} "
          f"({trap.direction}, margin {trap.margin:.1e})")
    if free == 1e-4:
        svg = render_svg(built.polygon(), cycles=[c.orbit for c in cycles],
                         boundaries=[trap.curve], title="broken (2, 1/3, 4): cycle and trap")
        (out / "break_cycle.svg").write_text(svg)
        print(f"  portrait written to {out / 'break_cycle.svg'}")
