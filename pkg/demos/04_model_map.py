"""The nested model return map Psi(t) - alpha t.

With one saddle the fixed points are those of t**r + b.  With two saddles of
ratios (2, 0.5) and alpha = 1, the map is monotone, so it never has more than
one root.  Once alpha differs from 1, two roots appear, as the cyclicity-two
picture predicts.
"""
from polycycle import ModelMapSpec, model_map_roots
from polycycle.bifurcate import model_map_search

spec = ModelMapSpec((2,), (0.01,), 1.0, (0.0, 0.5))
print(f"n=1, r=2, b=0.01: roots {model_map_roots(spec)}  (exact 0.0101020514...)")

for alpha in (1.0, 0.9, 1.2):
    best = model_map_search((2, 0.5), alpha, (0.0, 0.3), 0.05, samples=2000, grid=400, seed=0)
    roots = ", ".join(f"{r:.4f}" for r in best["roots"])
    print(f"ratios (2, 0.5), alpha {alpha}: best count {best['count']} at offsets "
          f"({best['offsets'][0]:+.4f}, {best['offsets'][1]:+.4f}) -> roots {roots}")

best = model_map_search((2, 0.5, 3), 1.0, (0.0, 0.3), 0.05, samples=2000, grid=400, seed=0)
print(f"ratios (2, 0.5, 3), alpha 1: best count {best['count']}")
