"""Why one aggregator is not enough.

Builds a few small neighbourhoods that a single aggregator cannot tell apart,
then shows how adding aggregators and degree scalers separates them.
"""

import numpy as np

from pna.aggregation import DegreeStats, aggregate, scale
from pna.theory import aggregator_counterexample_search, collision_lattice

pairs = {
    "mean": ((0, 2), (1, 1)),
    "max": ((0, 2), (2, 2)),
    "mean+max": ((0, 2, 2), (1, 1, 2)),
}
for name, (a, b) in pairs.items():
    print(f"{name:>9}: {a} vs {b}")
    for kind in ("mean", "std", "max", "min"):
        va, vb = aggregate(kind, np.array(a, float)), aggregate(kind, np.array(b, float))
        mark = "same" if np.isclose(va, vb) else "differ"
        print(f"{'':>11}{kind:<5} {float(va):8.4f} {float(vb):8.4f}  {mark}")

# exhaustive search over multisets of size 3 with values 0..4
print()
for subset, count in collision_lattice(["mean", "max", "min", "std"]).items():
    first = aggregator_counterexample_search(subset, exact_size=3)
    print(f"{'+'.join(subset):>18}: {count:3d} colliding pairs; first {first}")

# scalers: the mean of a neighbourhood says nothing about its size until a
# degree-dependent factor is applied
stats = DegreeStats(np.log(3.0))  # training graphs of average degree ~2
for d in (1, 2, 4, 8):
    print(f"degree {d}: amp {float(scale('amp', 1.0, d, stats)):.3f}  att {float(scale('att', 1.0, d, stats)):.3f}"
          f"  linear {float(scale('linear', 1.0, d)):.0f}")
