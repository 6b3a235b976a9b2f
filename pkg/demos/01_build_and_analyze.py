"""Build a triangle polycycle with prescribed hyperbolicity ratios and read off
what the ratios alone predict: stability, the alternation count Delta and the
expulsion plan, and whether the [CH] conditions hold.
"""
import numpy as np

from polycycle import (PolycycleSpec, build_polycycle, check_ch_conditions, delta_max,
                       graphic_number, saddle_data, stability, verify_invariants)

ratios = (2.0, 1 / 3, 4.0)
built = build_polycycle(PolycycleSpec(3, ratios))
print(f"field degree {built.field.degree}; vertices:")
for s in range(1, built.n + 1):
    neg, pos, r = saddle_data(built, s)
    print(f"  p{s} = {np.round(built.vertex(s), 6)}  eigenvalues ({neg:+.4f}, {pos:+.4f})  r = {r:.6f}")

rep = verify_invariants(built)
print(f"edge lines invariant to {rep['line']:.1e}, all checks ok: {rep['ok']}")

print(f"\ngraphic number R = {graphic_number(ratios):.4f} -> {stability(ratios)}")
delta, plan = delta_max(ratios)
print(f"Delta = {delta} with ordering {plan.permutation}; partial products "
      f"{np.round(plan.partial_products, 4)}; first expelled saddle p{plan.expelled}")
print(f"[CH] conditions: {check_ch_conditions(ratios)}")
print(f"[CH] for (2, 0.5): {check_ch_conditions((2, 0.5))}  (the subset {{1,2}} multiplies to 1)")
