"""Excess of a sampled current against a cone, then a Whitney classification.

Run with ``python3 demos/excess_and_whitney.py``.
"""
from collections import Counter

import numpy as np

from conekit.cones import PlaneCone, isoclinic_cone
from conekit.excess import (Ball, one_sided_excess, planar_excess, rescale, reverse_excess,
                            synth_cone_sample)
from conekit.whitney import check_ancestry, classify_cubes, excess_oracle_from_current

S = isoclinic_cone(3, 2, [0.0, 0.05, 0.6])
ball = Ball(np.zeros(S.ambient_dim), 1.0)

# The one-sided excess vanishes on a flat sample and grows with the amplitude.
# The reverse term is dominated by the gaps between finitely many samples.
for h in (0.0, 0.01, 0.03):
    T = synth_cone_sample(S, h=h, density=1500, seed=1)
    print(f"h={h}: one-sided {one_sided_excess(T, S, ball):.3e}"
          f"  reverse {reverse_excess(S, T, ball, resolution=1024):.3e}")

# One plane cannot fit three, so the planar excess stays large
T = synth_cone_sample(S, h=0.01, density=1500, seed=1)
value, plane = planar_excess(T, ball, 3)
print("planar excess:", value)

# Excess is invariant under the push-forward to a unit ball
q, r = np.full(S.ambient_dim, 0.1), 0.5
small = Ball(q, r)
print("in B(q, r):", one_sided_excess(T, S, small),
      " rescaled:", one_sided_excess(rescale(T, q, r), S.rescale(q, r), ball))

# Whitney cubes along the spine, labelled against the two layers
layers = [S, PlaneCone(S.spine, (S.planes[0], S.planes[2]))]
labels = classify_cubes(excess_oracle_from_current(T, layers), [0.05, 0.6], 0.5, 3, 3)
print("labels:", Counter(l.kind.name for l in labels.values()))
print("ancestry violations:", check_ancestry(labels))
