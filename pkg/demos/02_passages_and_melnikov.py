"""Numerical ingredients of the bifurcation argument.

Near a saddle with ratio r, the passage map behaves like s**r, and the
time-reversed passage like s**(1/r).  Along each connection, the first-order
split of the separatrices under a perturbation is the Melnikov integral.
For the Main3 family that matrix is diagonal with a positive diagonal, and
direct shooting agrees with it.
"""
import numpy as np

from polycycle import (PolycycleFlow, PolycycleSpec, build_main3_family, build_polycycle,
                       detect_sigma0, displacement_vector, melnikov_matrix)
from polycycle.bifurcate import return_side

s_values = np.geomspace(1e-5, 1e-3, 8)
print("passage exponents at p1 (fit over s in [1e-5, 1e-3]):")
for r in (0.5, 1.0, 2.0, 3.0):
    built = build_polycycle(PolycycleSpec(3, (r, 2.0, 2.0)))
    flow = PolycycleFlow(built)
    side = return_side(built, detect_sigma0(built))
    fwd = flow.passage_exponent(1, s_values, side=side)
    bwd = flow.passage_exponent(1, s_values, side=side, backward=True)
    print(f"  r = {r}: forward {fwd.exponent:.4f}, backward {bwd.exponent:.4f} (1/r = {1 / r:.4f})")

built = build_polycycle(PolycycleSpec(3, (2.0, 1 / 3, 4.0)))
fam = build_main3_family(built)
rep = melnikov_matrix(fam, built)
print("\nMelnikov matrix of the Main3 family:")
print(np.array2string(rep.matrix, precision=6))
print(f"off-diagonal / diagonal scale = {rep.offdiag_ratio:.1e}")

h = 1e-5
for j in range(3):
    mu = np.zeros(3)
    mu[j] = h
    d = displacement_vector(fam, built, mu).d
    print(f"  mu_{j + 1} = {h:g}: d = {np.array2string(d, precision=3)}, "
          f"d_{j + 1}/h = {d[j] / h:.6f} vs {rep.matrix[j, j]:.6f}")
