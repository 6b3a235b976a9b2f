"""A bump function replaced by a strictly positive polynomial.

The Bernstein polynomial of the bump, shifted up by eps/2, sits inside the
band phi + eps/4 < q < phi + 3 eps/4 on the box.  Shrinking eps lowers q
everywhere.
"""
import numpy as np

from polycycle import BumpSpec, bernstein_of, eval_bump, shifted_bump_polynomial

spec = BumpSpec(0.1, 0.3, (0.5, 0.5))
F = lambda u, v: eval_bump(spec, (u, v))
t = np.linspace(0, 1, 200)
exact = F(t[:, None], t[None, :])
for m in (16, 32, 64, 128, 256):
    err = np.abs(bernstein_of(F, m, m).grid(t, t) - exact).max()
    print(f"degree {m:4d}: sup error on the 200x200 grid {err:.4f}")

for eps in (0.3, 0.1):
    q = shifted_bump_polynomial(spec, (0.0, 0.0, 1.0, 1.0), eps)
    _, _, qv, phi = q.grid(100)
    gap = qv - phi
    print(f"eps {eps}: degree {q.degree[0]}, q - phi in [{gap.min():.4f}, {gap.max():.4f}] "
          f"(band [{eps / 4:.4f}, {3 * eps / 4:.4f}]), min q {qv.min():.4f}")
